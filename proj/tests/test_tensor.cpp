#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <filesystem>
#include <fstream>

#include "pad/tensor.hpp"

using namespace pad;

namespace {

// Straight-line reference evaluator, written independently of mlp_forward.
Eigen::VectorXd reference_eval(const Mlp& mlp, const Eigen::VectorXd& x) {
  Eigen::VectorXd h = x;
  for (const auto& layer : mlp.layers) {
    Eigen::VectorXd z = layer.w.cast<double>() * h + layer.b.cast<double>();
    switch (layer.act) {
      case Activation::None:
        h = z;
        break;
      case Activation::Relu:
        h = z.cwiseMax(0.0);
        break;
      case Activation::Sigmoid:
        h = (1.0 + (-z.array()).exp()).inverse().matrix();
        break;
    }
  }
  return h;
}

double loss_of(const Mlp& mlp, const MatrixXf& x, const MatrixXf& dy) {
  MatrixXf y = mlp_forward(mlp, x, nullptr);
  return (y.cast<double>().array() * dy.cast<double>().array()).sum();
}

}  // namespace

TEST_CASE("positional encoding of zero vector") {
  VectorXf p = VectorXf::Zero(3);
  for (int levels : {1, 4, 10}) {
    VectorXf e = positional_encoding(p, levels, true);
    REQUIRE(e.size() == encoded_dim(3, levels, true));
    for (int i = 0; i < 3; ++i) CHECK(e[i] == 0.f);
    for (int k = 0; k < levels; ++k)
      for (int i = 0; i < 3; ++i) {
        CHECK(e[3 + 6 * k + i] == doctest::Approx(0.f));      // sin
        CHECK(e[3 + 6 * k + 3 + i] == doctest::Approx(1.f));  // cos
      }
  }
}

TEST_CASE("positional encoding length dim=3 L=10 include=true is 63") {
  CHECK(encoded_dim(3, 10, true) == 63);
  VectorXf e = positional_encoding(VectorXf::Random(3), 10, true);
  CHECK(e.size() == 63);
}

TEST_CASE("positional encoding separates grid points at spacing 1/64") {
  // 1-D grid is enough to exercise the frequency stack; pairwise distinct.
  const int n = 33;
  std::vector<VectorXf> enc;
  for (int i = 0; i < n; ++i) {
    VectorXf p(1);
    p[0] = -1.f + 2.f * i / 64.f;
    enc.push_back(positional_encoding(p, 8, true));
  }
  for (int i = 0; i < n; ++i)
    for (int j = i + 1; j < n; ++j) CHECK((enc[i] - enc[j]).norm() > 1e-6f);
}

TEST_CASE("positional encoding batch matches single-vector calls") {
  Rng rng(7);
  MatrixXf p(3, 5);
  for (int i = 0; i < p.size(); ++i) p.data()[i] = rng.uniformf() * 2.f - 1.f;
  MatrixXf batch = positional_encoding_batch(p, 6, true);
  for (int c = 0; c < 5; ++c) {
    VectorXf single = positional_encoding(p.col(c), 6, true);
    CHECK((batch.col(c) - single).norm() == doctest::Approx(0.f));
  }
}

TEST_CASE("positional encoding backward matches finite differences") {
  Rng rng(11);
  MatrixXf p(3, 4);
  for (int i = 0; i < p.size(); ++i) p.data()[i] = rng.uniformf() - 0.5f;
  MatrixXf denc(encoded_dim(3, 4, true), 4);
  for (int i = 0; i < denc.size(); ++i) denc.data()[i] = rng.uniformf() - 0.5f;

  MatrixXf grad = positional_encoding_backward(p, 4, true, denc);
  REQUIRE(grad.rows() == 3);
  REQUIRE(grad.cols() == 4);

  const float h = 1e-3f;
  for (int c = 0; c < 4; ++c)
    for (int r = 0; r < 3; ++r) {
      MatrixXf pp = p, pm = p;
      pp(r, c) += h;
      pm(r, c) -= h;
      double fp = (positional_encoding_batch(pp, 4, true).cast<double>().array() *
                   denc.cast<double>().array()).sum();
      double fm = (positional_encoding_batch(pm, 4, true).cast<double>().array() *
                   denc.cast<double>().array()).sum();
      double fd = (fp - fm) / (2.0 * h);
      CHECK(grad(r, c) == doctest::Approx(fd).epsilon(1e-2));
    }
}

TEST_CASE("zero mlp with relu gives zero output") {
  Rng rng(1);
  Mlp mlp = make_mlp({4, 8, 2}, Activation::Relu, rng);
  for (auto& l : mlp.layers) {
    l.w.setZero();
    l.b.setZero();
  }
  MatrixXf x = MatrixXf::Random(4, 3);
  MatrixXf y = mlp_forward(mlp, x, nullptr);
  CHECK(y.cwiseAbs().maxCoeff() == 0.f);
}

TEST_CASE("single linear layer is Wx+b exactly") {
  Rng rng(2);
  Mlp mlp = make_mlp({3, 2}, Activation::Relu, rng);
  REQUIRE(mlp.layers.size() == 1);
  REQUIRE(mlp.layers[0].act == Activation::None);
  MatrixXf x = MatrixXf::Random(3, 5);
  MatrixXf y = mlp_forward(mlp, x, nullptr);
  MatrixXf expect = mlp.layers[0].w * x;
  expect.colwise() += mlp.layers[0].b;
  CHECK((y - expect).cwiseAbs().maxCoeff() == 0.f);
}

TEST_CASE("mlp forward matches duplicate straight-line evaluator") {
  Rng rng(3);
  Mlp mlp = make_mlp({5, 16, 16, 4}, Activation::Relu, rng);
  double worst = 0.0;
  for (int t = 0; t < 100; ++t) {
    MatrixXf x(5, 1);
    for (int i = 0; i < 5; ++i) x(i, 0) = rng.uniformf() * 2.f - 1.f;
    MatrixXf y = mlp_forward(mlp, x, nullptr);
    Eigen::VectorXd ref = reference_eval(mlp, x.col(0).cast<double>());
    worst = std::max(worst, (y.col(0).cast<double>() - ref).cwiseAbs().maxCoeff());
  }
  CHECK(worst < 1e-5);  // forward runs in float32; the oracle in float64
}

TEST_CASE("mlp forward determinism") {
  Rng rng(4);
  Mlp mlp = make_mlp({3, 32, 3}, Activation::Relu, rng);
  MatrixXf x = MatrixXf::Random(3, 7);
  MatrixXf a = mlp_forward(mlp, x, nullptr);
  MatrixXf b = mlp_forward(mlp, x, nullptr);
  CHECK((a - b).cwiseAbs().maxCoeff() == 0.f);
}

TEST_CASE("mlp forward rejects non-finite input") {
  Rng rng(4);
  Mlp mlp = make_mlp({3, 8, 2}, Activation::Relu, rng);
  MatrixXf x = MatrixXf::Zero(3, 1);
  x(1, 0) = std::numeric_limits<float>::quiet_NaN();
  CHECK_THROWS_AS(mlp_forward(mlp, x, nullptr), PadError);
}

TEST_CASE("backward with zero upstream gradient is zero") {
  Rng rng(5);
  Mlp mlp = make_mlp({3, 8, 2}, Activation::Sigmoid, rng);
  MatrixXf x = MatrixXf::Random(3, 4);
  Tape tape;
  mlp_forward(mlp, x, &tape);
  MatrixXf dx;
  Gradients g = mlp_backward(mlp, tape, MatrixXf::Zero(2, 4), &dx);
  for (const auto& dw : g.dw) CHECK(dw.cwiseAbs().maxCoeff() == 0.f);
  for (const auto& db : g.db) CHECK(db.cwiseAbs().maxCoeff() == 0.f);
  CHECK(dx.cwiseAbs().maxCoeff() == 0.f);
}

TEST_CASE("single linear layer gradient is dy x^T") {
  Rng rng(6);
  Mlp mlp = make_mlp({3, 2}, Activation::None, rng);
  MatrixXf x = MatrixXf::Random(3, 1);
  Tape tape;
  mlp_forward(mlp, x, &tape);
  MatrixXf dy = MatrixXf::Random(2, 1);
  Gradients g = mlp_backward(mlp, tape, dy);
  MatrixXf expect = dy * x.transpose();
  CHECK((g.dw[0] - expect).cwiseAbs().maxCoeff() < 1e-7f);
  CHECK((g.db[0] - dy.col(0)).cwiseAbs().maxCoeff() == 0.f);
}

TEST_CASE("backward matches central finite differences on 3-layer net") {
  Rng rng(8);
  Mlp mlp = make_mlp({4, 12, 12, 3}, Activation::Sigmoid, rng);
  MatrixXf x(4, 6);
  for (int i = 0; i < x.size(); ++i) x.data()[i] = rng.uniformf() * 2.f - 1.f;
  MatrixXf dy(3, 6);
  for (int i = 0; i < dy.size(); ++i) dy.data()[i] = rng.uniformf() - 0.5f;

  Tape tape;
  mlp_forward(mlp, x, &tape);
  MatrixXf dx;
  Gradients g = mlp_backward(mlp, tape, dy, &dx);

  const float h = 1e-2f;  // larger step for float32 arithmetic; grads themselves O(1)
  for (int trial = 0; trial < 50; ++trial) {
    size_t layer = rng.uniform_index(mlp.layers.size());
    auto& w = mlp.layers[layer].w;
    int r = static_cast<int>(rng.uniform_index(w.rows()));
    int c = static_cast<int>(rng.uniform_index(w.cols()));
    float saved = w(r, c);
    w(r, c) = saved + h;
    double fp = loss_of(mlp, x, dy);
    w(r, c) = saved - h;
    double fm = loss_of(mlp, x, dy);
    w(r, c) = saved;
    double fd = (fp - fm) / (2.0 * h);
    double analytic = g.dw[layer](r, c);
    double denom = std::max(1e-3, std::abs(fd));
    CHECK(std::abs(analytic - fd) / denom < 1e-2);
  }

  // input gradient, few coordinates
  for (int trial = 0; trial < 10; ++trial) {
    int r = static_cast<int>(rng.uniform_index(4));
    int c = static_cast<int>(rng.uniform_index(6));
    MatrixXf xp = x, xm = x;
    xp(r, c) += h;
    xm(r, c) -= h;
    double fd = (loss_of(mlp, xp, dy) - loss_of(mlp, xm, dy)) / (2.0 * h);
    double denom = std::max(1e-3, std::abs(fd));
    CHECK(std::abs(dx(r, c) - fd) / denom < 1e-2);
  }
}

TEST_CASE("adam zero gradient leaves parameters unchanged") {
  Rng rng(9);
  Mlp mlp = make_mlp({3, 8, 2}, Activation::Relu, rng);
  Mlp before = mlp;
  Adam opt(mlp);
  opt.step(mlp, zero_like(mlp));
  for (size_t i = 0; i < mlp.layers.size(); ++i)
    CHECK((mlp.layers[i].w - before.layers[i].w).cwiseAbs().maxCoeff() == 0.f);
}

TEST_CASE("adam lr=0 leaves parameters unchanged") {
  Rng rng(10);
  Mlp mlp = make_mlp({3, 8, 2}, Activation::Relu, rng);
  Mlp before = mlp;
  Adam opt(mlp);
  Gradients g = zero_like(mlp);
  for (auto& dw : g.dw) dw.setOnes();
  opt.step(mlp, g, 0.f);
  for (size_t i = 0; i < mlp.layers.size(); ++i)
    CHECK((mlp.layers[i].w - before.layers[i].w).cwiseAbs().maxCoeff() == 0.f);
}

TEST_CASE("adam rejects non-finite gradients") {
  Rng rng(10);
  Mlp mlp = make_mlp({2, 2}, Activation::None, rng);
  Adam opt(mlp);
  Gradients g = zero_like(mlp);
  g.dw[0](0, 0) = std::numeric_limits<float>::infinity();
  CHECK_THROWS_AS(opt.step(mlp, g), PadError);
}

TEST_CASE("adam minimizes 1-D quadratic (w-3)^2") {
  Mlp mlp;
  Layer l;
  l.w = MatrixXf::Zero(1, 1);
  l.b = VectorXf::Zero(1);
  mlp.layers.push_back(l);
  AdamConfig cfg;
  cfg.lr = 0.1f;
  Adam opt(mlp, cfg);
  for (int i = 0; i < 500; ++i) {
    Gradients g = zero_like(mlp);
    g.db[0][0] = 2.f * (mlp.layers[0].b[0] - 3.f);
    opt.step(mlp, g);
  }
  CHECK(std::abs(mlp.layers[0].b[0] - 3.f) < 1e-2f);
}

TEST_CASE("adam descent on convex quadratic after warm-up") {
  Mlp mlp;
  Layer l;
  l.w = MatrixXf::Constant(1, 1, 10.f);
  l.b = VectorXf::Zero(1);
  mlp.layers.push_back(l);
  AdamConfig cfg;
  cfg.lr = 0.05f;
  Adam opt(mlp, cfg);
  float prev = std::numeric_limits<float>::max();
  for (int i = 0; i < 200; ++i) {
    float w = mlp.layers[0].w(0, 0);
    float loss = (w - 3.f) * (w - 3.f);
    if (i > 10) CHECK(loss <= prev + 1e-6f);
    prev = loss;
    Gradients g = zero_like(mlp);
    g.dw[0](0, 0) = 2.f * (w - 3.f);
    opt.step(mlp, g);
  }
}

TEST_CASE("checkpoint round-trips exactly") {
  Rng rng(12);
  Mlp mlp = make_mlp({6, 16, 16, 4}, Activation::Relu, rng);
  auto path = (std::filesystem::temp_directory_path() / "pad_ckpt_test.bin").string();
  save_checkpoint(mlp, path);
  Mlp back = load_checkpoint(path);
  REQUIRE(back.layers.size() == mlp.layers.size());
  for (size_t i = 0; i < mlp.layers.size(); ++i) {
    CHECK(back.layers[i].act == mlp.layers[i].act);
    CHECK((back.layers[i].w - mlp.layers[i].w).cwiseAbs().maxCoeff() == 0.f);
    CHECK((back.layers[i].b - mlp.layers[i].b).cwiseAbs().maxCoeff() == 0.f);
  }
  std::filesystem::remove(path);
}

TEST_CASE("checkpoint load rejects bad magic") {
  auto path = (std::filesystem::temp_directory_path() / "pad_ckpt_bad.bin").string();
  {
    std::ofstream os(path, std::ios::binary);
    os << "not a checkpoint";
  }
  CHECK_THROWS_AS(load_checkpoint(path), PadError);
  std::filesystem::remove(path);
}
