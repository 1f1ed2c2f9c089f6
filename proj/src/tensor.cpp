#include "pad/tensor.hpp"

#include <fstream>

namespace pad {

Mlp make_mlp(const std::vector<int>& dims, Activation hidden_act, Rng& rng) {
  if (dims.size() < 2) throw PadError("make_mlp: need at least input and output dims");
  Mlp mlp;
  for (size_t i = 0; i + 1 < dims.size(); ++i) {
    Layer layer;
    const int in = dims[i], out = dims[i + 1];
    layer.w.resize(out, in);
    // He-style init for relu hidden layers, Xavier otherwise
    const float scale = std::sqrt((hidden_act == Activation::Relu ? 2.f : 1.f) / in);
    for (int r = 0; r < out; ++r)
      for (int c = 0; c < in; ++c) layer.w(r, c) = scale * static_cast<float>(rng.normal());
    layer.b = VectorXf::Zero(out);
    layer.act = (i + 2 < dims.size()) ? hidden_act : Activation::None;
    mlp.layers.push_back(std::move(layer));
  }
  return mlp;
}

static void apply_activation(MatrixXf& z, Activation act) {
  switch (act) {
    case Activation::None:
      break;
    case Activation::Relu:
      z = z.cwiseMax(0.f);
      break;
    case Activation::Sigmoid:
      z = z.unaryExpr([](float v) { return 1.f / (1.f + std::exp(-v)); });
      break;
  }
}

MatrixXf mlp_forward(const Mlp& mlp, const MatrixXf& x, Tape* tape) {
  if (x.rows() != mlp.in_dim())
    throw PadError("mlp_forward: input dim " + std::to_string(x.rows()) + " != " +
                   std::to_string(mlp.in_dim()));
  if (tape) {
    tape->input = x;
    tape->post.clear();
    tape->post.reserve(mlp.layers.size());
  }
  MatrixXf a = x;
  for (size_t i = 0; i < mlp.layers.size(); ++i) {
    const Layer& l = mlp.layers[i];
    MatrixXf z = l.w * a;
    z.colwise() += l.b;
    apply_activation(z, l.act);
    if (!z.allFinite())
      throw PadError("mlp_forward: non-finite output at layer " + std::to_string(i));
    if (tape) tape->post.push_back(z);
    a = std::move(z);
  }
  return a;
}

Gradients mlp_backward(const Mlp& mlp, const Tape& tape, const MatrixXf& dy, MatrixXf* dx) {
  const size_t n = mlp.layers.size();
  if (tape.post.size() != n) throw PadError("mlp_backward: tape does not match network");
  if (dy.rows() != mlp.out_dim() || dy.cols() != tape.input.cols())
    throw PadError("mlp_backward: dy shape mismatch");

  Gradients g;
  g.dw.resize(n);
  g.db.resize(n);
  MatrixXf delta = dy;
  for (size_t i = n; i-- > 0;) {
    const Layer& l = mlp.layers[i];
    const MatrixXf& out = tape.post[i];
    switch (l.act) {
      case Activation::None:
        break;
      case Activation::Relu:
        delta = delta.cwiseProduct((out.array() > 0.f).cast<float>().matrix());
        break;
      case Activation::Sigmoid:
        delta = delta.cwiseProduct(out.cwiseProduct((MatrixXf::Ones(out.rows(), out.cols()) - out)));
        break;
    }
    const MatrixXf& a_prev = (i == 0) ? tape.input : tape.post[i - 1];
    g.dw[i] = delta * a_prev.transpose();
    g.db[i] = delta.rowwise().sum();
    if (i > 0 || dx) {
      MatrixXf d_prev = l.w.transpose() * delta;
      if (i == 0 && dx) *dx = std::move(d_prev);
      else delta = std::move(d_prev);
    }
  }
  return g;
}

Gradients zero_like(const Mlp& mlp) {
  Gradients g;
  for (const Layer& l : mlp.layers) {
    g.dw.push_back(MatrixXf::Zero(l.w.rows(), l.w.cols()));
    g.db.push_back(VectorXf::Zero(l.b.size()));
  }
  return g;
}

void accumulate(Gradients& into, const Gradients& g) {
  for (size_t i = 0; i < into.dw.size(); ++i) {
    into.dw[i] += g.dw[i];
    into.db[i] += g.db[i];
  }
}

void scale(Gradients& g, float s) {
  for (size_t i = 0; i < g.dw.size(); ++i) {
    g.dw[i] *= s;
    g.db[i] *= s;
  }
}

namespace {

template <typename M>
void adam_update(M& p, const M& grad, M& m, M& v, const AdamConfig& cfg, float lr, int t) {
  if (!grad.allFinite()) throw PadError("optimizer_step: non-finite gradient");
  m = cfg.beta1 * m + (1.f - cfg.beta1) * grad;
  v = cfg.beta2 * v + (1.f - cfg.beta2) * grad.cwiseProduct(grad);
  const float bc1 = 1.f - std::pow(cfg.beta1, static_cast<float>(t));
  const float bc2 = 1.f - std::pow(cfg.beta2, static_cast<float>(t));
  M mhat = m / bc1;
  M vhat = v / bc2;
  p.array() -= lr * mhat.array() / (vhat.array().sqrt() + cfg.eps);
}

}  // namespace

void Adam::step(Mlp& mlp, const Gradients& grads, float lr_override) {
  const float lr = lr_override >= 0.f ? lr_override : cfg.lr;
  ++step_count;
  for (size_t i = 0; i < mlp.layers.size(); ++i) {
    adam_update(mlp.layers[i].w, grads.dw[i], m.dw[i], v.dw[i], cfg, lr, step_count);
    adam_update(mlp.layers[i].b, grads.db[i], m.db[i], v.db[i], cfg, lr, step_count);
  }
}

void AdamVec::step(VectorXf& params, const VectorXf& grad, float lr_override) {
  const float lr = lr_override >= 0.f ? lr_override : cfg.lr;
  ++step_count;
  adam_update(params, grad, m, v, cfg, lr, step_count);
}

VectorXf positional_encoding(const VectorXf& p, int levels, bool include_input) {
  MatrixXf m = positional_encoding_batch(p, levels, include_input);
  return m.col(0);
}

MatrixXf positional_encoding_batch(const MatrixXf& p, int levels, bool include_input) {
  if (!p.allFinite()) throw PadError("positional_encoding: non-finite input");
  const int dim = static_cast<int>(p.rows());
  const int n = static_cast<int>(p.cols());
  MatrixXf out(encoded_dim(dim, levels, include_input), n);
  int row = 0;
  if (include_input) {
    out.topRows(dim) = p;
    row = dim;
  }
  for (int k = 0; k < levels; ++k) {
    const float freq = static_cast<float>(std::pow(2.0, k) * M_PI);
    out.middleRows(row, dim) = (freq * p).array().sin();
    out.middleRows(row + dim, dim) = (freq * p).array().cos();
    row += 2 * dim;
  }
  return out;
}

MatrixXf positional_encoding_backward(const MatrixXf& p, int levels, bool include_input,
                                      const MatrixXf& denc) {
  const int dim = static_cast<int>(p.rows());
  MatrixXf dp = MatrixXf::Zero(p.rows(), p.cols());
  int row = 0;
  if (include_input) {
    dp = denc.topRows(dim);
    row = dim;
  }
  for (int k = 0; k < levels; ++k) {
    const float freq = static_cast<float>(std::pow(2.0, k) * M_PI);
    dp.array() += denc.middleRows(row, dim).array() * (freq * p).array().cos() * freq;
    dp.array() -= denc.middleRows(row + dim, dim).array() * (freq * p).array().sin() * freq;
    row += 2 * dim;
  }
  return dp;
}

namespace {
constexpr uint32_t kMagic = 0x5041444Eu;  // "PADN"
constexpr uint32_t kVersion = 1;

template <typename T>
void write_pod(std::ostream& os, T v) {
  os.write(reinterpret_cast<const char*>(&v), sizeof(v));
}
template <typename T>
T read_pod(std::istream& is) {
  T v{};
  is.read(reinterpret_cast<char*>(&v), sizeof(v));
  if (!is) throw PadError("checkpoint: truncated file");
  return v;
}
}  // namespace

void write_mlp(std::ostream& os, const Mlp& mlp) {
  write_pod(os, kMagic);
  write_pod(os, kVersion);
  write_pod(os, static_cast<uint32_t>(mlp.layers.size()));
  for (const Layer& l : mlp.layers) {
    write_pod(os, static_cast<uint32_t>(l.w.cols()));
    write_pod(os, static_cast<uint32_t>(l.w.rows()));
    write_pod(os, static_cast<uint8_t>(l.act));
    for (int r = 0; r < l.w.rows(); ++r)
      for (int c = 0; c < l.w.cols(); ++c) write_pod(os, l.w(r, c));
    for (int r = 0; r < l.b.size(); ++r) write_pod(os, l.b(r));
  }
}

Mlp read_mlp(std::istream& is) {
  if (read_pod<uint32_t>(is) != kMagic) throw PadError("checkpoint: bad magic");
  if (read_pod<uint32_t>(is) != kVersion) throw PadError("checkpoint: unsupported version");
  const uint32_t n = read_pod<uint32_t>(is);
  Mlp mlp;
  for (uint32_t i = 0; i < n; ++i) {
    Layer l;
    const uint32_t in = read_pod<uint32_t>(is);
    const uint32_t out = read_pod<uint32_t>(is);
    l.act = static_cast<Activation>(read_pod<uint8_t>(is));
    l.w.resize(out, in);
    for (uint32_t r = 0; r < out; ++r)
      for (uint32_t c = 0; c < in; ++c) l.w(r, c) = read_pod<float>(is);
    l.b.resize(out);
    for (uint32_t r = 0; r < out; ++r) l.b(r) = read_pod<float>(is);
    mlp.layers.push_back(std::move(l));
  }
  return mlp;
}

void save_checkpoint(const Mlp& mlp, const std::string& path) {
  std::ofstream os(path, std::ios::binary);
  if (!os) throw PadError("checkpoint: cannot open for write: " + path);
  write_mlp(os, mlp);
  if (!os) throw PadError("checkpoint: write failed: " + path);
}

Mlp load_checkpoint(const std::string& path) {
  std::ifstream is(path, std::ios::binary);
  if (!is) throw PadError("checkpoint: cannot open: " + path);
  return read_mlp(is);
}

}  // namespace pad
