#pragma once

#include <string>
#include <vector>

#include "pad/common.hpp"

namespace pad {

enum class Activation : uint8_t { None = 0, Relu = 1, Sigmoid = 2 };

struct Layer {
  MatrixXf w;  // out x in
  VectorXf b;  // out
  Activation act = Activation::None;
};

struct Mlp {
  std::vector<Layer> layers;

  int in_dim() const { return layers.empty() ? 0 : static_cast<int>(layers.front().w.cols()); }
  int out_dim() const { return layers.empty() ? 0 : static_cast<int>(layers.back().w.rows()); }
};

// Post-activation outputs per layer, plus the input; enough to replay the
// exact reverse pass (relu/sigmoid derivatives are functions of the output).
struct Tape {
  MatrixXf input;
  std::vector<MatrixXf> post;
};

struct Gradients {
  std::vector<MatrixXf> dw;
  std::vector<VectorXf> db;
};

// dims = {in, h1, ..., out}; hidden layers get `hidden_act`, output layer None.
Mlp make_mlp(const std::vector<int>& dims, Activation hidden_act, Rng& rng);

// Columns of x are independent inputs.
MatrixXf mlp_forward(const Mlp& mlp, const MatrixXf& x, Tape* tape);

// dy has the shape of the forward output; returns parameter gradients and,
// if dx != nullptr, the gradient w.r.t. the input batch.
Gradients mlp_backward(const Mlp& mlp, const Tape& tape, const MatrixXf& dy, MatrixXf* dx = nullptr);

Gradients zero_like(const Mlp& mlp);
void accumulate(Gradients& into, const Gradients& g);
void scale(Gradients& g, float s);

struct AdamConfig {
  float lr = 1e-3f;
  float beta1 = 0.9f;
  float beta2 = 0.999f;
  float eps = 1e-8f;
};

// Adaptive-moment optimizer over MLP parameters.
struct Adam {
  AdamConfig cfg;
  int step_count = 0;
  Gradients m, v;

  explicit Adam(const Mlp& mlp, AdamConfig c = {}) : cfg(c), m(zero_like(mlp)), v(zero_like(mlp)) {}
  void step(Mlp& mlp, const Gradients& grads, float lr_override = -1.f);
};

// Same update rule over a flat vector (used for the pose twist).
struct AdamVec {
  AdamConfig cfg;
  int step_count = 0;
  VectorXf m, v;

  AdamVec(int dim, AdamConfig c = {}) : cfg(c), m(VectorXf::Zero(dim)), v(VectorXf::Zero(dim)) {}
  void step(VectorXf& params, const VectorXf& grad, float lr_override = -1.f);
};

// [identity?] ++ [sin(2^k pi p_i), cos(2^k pi p_i)] for k = 0..levels-1.
VectorXf positional_encoding(const VectorXf& p, int levels, bool include_input);
// Batched: p is dim x n, output is encoded_dim x n.
MatrixXf positional_encoding_batch(const MatrixXf& p, int levels, bool include_input);
inline int encoded_dim(int dim, int levels, bool include_input) {
  return (include_input ? dim : 0) + 2 * levels * dim;
}
// d(encoding)/d(p): given upstream gradient over the encoding, returns the
// gradient over p (batched, same layout as p).
MatrixXf positional_encoding_backward(const MatrixXf& p, int levels, bool include_input,
                                      const MatrixXf& denc);

// Versioned little-endian binary checkpoint; exact round-trip.
void save_checkpoint(const Mlp& mlp, const std::string& path);
Mlp load_checkpoint(const std::string& path);
void write_mlp(std::ostream& os, const Mlp& mlp);
Mlp read_mlp(std::istream& is);

}  // namespace pad
