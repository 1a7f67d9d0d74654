// Kernel-level tests: every numeric kernel is checked against an independent
// plain-loop reference implemented here, plus finite-difference probes for
// the backward passes. References accumulate in the same ascending-index
// order the kernels promise, so comparisons can be exact where the contract
// is exactness.

#include <gtest/gtest.h>

#include <cmath>
#include <cstdint>
#include <set>
#include <vector>

#include "accordion/ops.hpp"
#include "accordion/params.hpp"
#include "accordion/rng.hpp"
#include "accordion/tensor.hpp"

using namespace accordion;

namespace {

Tensor random_tensor(std::vector<std::size_t> shape, RngState& rng, double scale = 1.0) {
  Tensor t(std::move(shape));
  for (std::size_t i = 0; i < t.size(); ++i)
    t[i] = static_cast<float>(rng.normal() * scale);
  return t;
}

// Reference forward: naive b,o,i loops, float32, bias-first accumulation.
Tensor ref_dense_forward(const Tensor& x, const Tensor& w, const Tensor& bias) {
  Tensor out({x.rows(), w.rows()});
  for (std::size_t b = 0; b < x.rows(); ++b)
    for (std::size_t o = 0; o < w.rows(); ++o) {
      float acc = bias[o];
      for (std::size_t i = 0; i < x.cols(); ++i) acc += x.at(b, i) * w.at(o, i);
      out.at(b, o) = acc;
    }
  return out;
}

}  // namespace

TEST(Rng, SameSeedSameSequence) {
  RngState a(42), b(42);
  for (int i = 0; i < 100; ++i) EXPECT_EQ(a.next_u64(), b.next_u64());
}

TEST(Rng, DeriveIsPureAndTagSensitive) {
  RngState root(7);
  root.next_u64();  // advancing the parent must not affect derived streams
  RngState c1 = root.derive(3), c2 = RngState(7).derive(3), c3 = root.derive(4);
  EXPECT_EQ(c1.next_u64(), c2.next_u64());
  EXPECT_NE(RngState(7).derive(3).next_u64(), c3.next_u64());
}

TEST(Rng, UniformInHalfOpenUnitInterval) {
  RngState r(1);
  for (int i = 0; i < 10000; ++i) {
    double u = r.uniform();
    EXPECT_GE(u, 0.0);
    EXPECT_LT(u, 1.0);
  }
}

TEST(Rng, NormalMomentsRoughlyStandard) {
  RngState r(5);
  double sum = 0, sq = 0;
  const int n = 20000;
  for (int i = 0; i < n; ++i) {
    double z = r.normal();
    ASSERT_TRUE(std::isfinite(z));
    sum += z;
    sq += z * z;
  }
  EXPECT_NEAR(sum / n, 0.0, 0.03);
  EXPECT_NEAR(sq / n, 1.0, 0.05);
}

TEST(Rng, UniformIndexBoundsAndSpread) {
  RngState r(9);
  std::vector<int> hits(17, 0);
  for (int i = 0; i < 17000; ++i) hits[r.uniform_index(17)]++;
  for (int h : hits) EXPECT_NEAR(h, 1000, 150);  // ~5 sigma
  EXPECT_THROW(r.uniform_index(0), ConfigError);
}

TEST(Rng, ShuffleIsAPermutationAndReplayable) {
  std::vector<std::uint32_t> v(100);
  for (std::uint32_t i = 0; i < 100; ++i) v[i] = i;
  auto w = v;
  RngState a(11), b(11);
  a.shuffle(v);
  b.shuffle(w);
  EXPECT_EQ(v, w);
  std::set<std::uint32_t> s(v.begin(), v.end());
  EXPECT_EQ(s.size(), 100u);
}

TEST(Tensor, ShapeValidation) {
  EXPECT_THROW(Tensor(std::vector<std::size_t>{}), ShapeError);
  EXPECT_THROW(Tensor({2, 3, 4}), ShapeError);
  EXPECT_THROW(Tensor({0, 3}), ShapeError);
  Tensor t = Tensor::matrix(2, 3, 1.5f);
  EXPECT_EQ(t.size(), 6u);
  t.at(1, 2) = 9.0f;
  EXPECT_EQ(t[5], 9.0f);
}

TEST(DenseForward, MatchesNaiveLoopsExactly) {
  RngState rng(123);
  for (auto [batch, in, out] : {std::tuple{1ul, 1ul, 1ul}, {4ul, 7ul, 5ul}, {3ul, 64ul, 64ul}}) {
    Tensor x = random_tensor({batch, in}, rng);
    Tensor w = random_tensor({out, in}, rng, 0.3);
    Tensor bias = random_tensor({out}, rng, 0.1);
    Tensor y({batch, out});
    dense_forward(x, w, bias, y);
    Tensor ref = ref_dense_forward(x, w, bias);
    for (std::size_t i = 0; i < y.size(); ++i) ASSERT_EQ(y[i], ref[i]) << "at " << i;
  }
}

TEST(DenseForward, RejectsMismatchedShapes) {
  Tensor x = Tensor::matrix(2, 3), w = Tensor::matrix(4, 5), b = Tensor::vector(4);
  Tensor y = Tensor::matrix(2, 4);
  EXPECT_THROW(dense_forward(x, w, b, y), ShapeError);
}

TEST(DenseBackward, MatchesNaiveLoopsExactly) {
  RngState rng(77);
  const std::size_t batch = 5, in = 9, out = 4;
  Tensor x = random_tensor({batch, in}, rng);
  Tensor w = random_tensor({out, in}, rng, 0.3);
  Tensor dy = random_tensor({batch, out}, rng);
  Tensor dx({batch, in}), dw({out, in}), db({out});
  dense_backward(x, w, dy, &dx, dw, db);

  // References, same ascending reduction order.
  for (std::size_t b = 0; b < batch; ++b)
    for (std::size_t i = 0; i < in; ++i) {
      float acc = 0.0f;
      for (std::size_t o = 0; o < out; ++o) acc += dy.at(b, o) * w.at(o, i);
      ASSERT_EQ(dx.at(b, i), acc);
    }
  for (std::size_t o = 0; o < out; ++o) {
    float bacc = 0.0f;
    for (std::size_t b = 0; b < batch; ++b) bacc += dy.at(b, o);
    ASSERT_EQ(db[o], bacc);
    for (std::size_t i = 0; i < in; ++i) {
      float acc = 0.0f;
      for (std::size_t b = 0; b < batch; ++b) acc += dy.at(b, o) * x.at(b, i);
      ASSERT_EQ(dw.at(o, i), acc);
    }
  }
}

TEST(DenseBackward, AccumulatesIntoExistingGrads) {
  RngState rng(3);
  Tensor x = random_tensor({2, 3}, rng), w = random_tensor({4, 3}, rng);
  Tensor dy = random_tensor({2, 4}, rng);
  Tensor dw1({4, 3}), db1({4});
  dense_backward(x, w, dy, nullptr, dw1, db1);
  Tensor dw2 = dw1, db2 = db1;
  dense_backward(x, w, dy, nullptr, dw2, db2);
  for (std::size_t i = 0; i < dw1.size(); ++i) EXPECT_FLOAT_EQ(dw2[i], dw1[i] + dw1[i]);
}

TEST(Relu, ForwardAndBackward) {
  Tensor x = Tensor::matrix(1, 4);
  x[0] = -1.0f; x[1] = 0.0f; x[2] = 2.5f; x[3] = -0.0f;
  Tensor y = Tensor::matrix(1, 4);
  relu_forward(x, y);
  EXPECT_EQ(y[0], 0.0f);
  EXPECT_EQ(y[1], 0.0f);
  EXPECT_EQ(y[2], 2.5f);
  EXPECT_EQ(y[3], 0.0f);
  Tensor dy = Tensor::matrix(1, 4, 1.0f), dx = Tensor::matrix(1, 4);
  relu_backward(x, dy, dx);
  EXPECT_EQ(dx[0], 0.0f);
  EXPECT_EQ(dx[1], 0.0f);  // gradient at exactly zero is defined as zero
  EXPECT_EQ(dx[2], 1.0f);
  EXPECT_EQ(dx[3], 0.0f);
}

TEST(SoftmaxXent, MatchesIndependentFormula) {
  RngState rng(15);
  const std::size_t batch = 6, classes = 3;
  Tensor logits = random_tensor({batch, classes}, rng, 2.0);
  std::vector<std::uint32_t> labels = {0, 2, 1, 1, 0, 2};
  Tensor grad({batch, classes});
  double loss = softmax_xent(logits, labels, grad);

  double ref_loss = 0.0;
  for (std::size_t b = 0; b < batch; ++b) {
    double m = logits.at(b, 0);
    for (std::size_t c = 1; c < classes; ++c) m = std::max(m, (double)logits.at(b, c));
    double z = 0.0;
    for (std::size_t c = 0; c < classes; ++c) z += std::exp((double)logits.at(b, c) - m);
    ref_loss += -((double)logits.at(b, labels[b]) - m - std::log(z));
    for (std::size_t c = 0; c < classes; ++c) {
      double p = std::exp((double)logits.at(b, c) - m) / z;
      double want = (p - (c == labels[b] ? 1.0 : 0.0)) / batch;
      EXPECT_NEAR(grad.at(b, c), want, 1e-7);
    }
  }
  EXPECT_NEAR(loss, ref_loss / batch, 1e-12);
}

TEST(SoftmaxXent, UniformLogitsGiveLogC) {
  Tensor logits = Tensor::matrix(2, 4, 0.7f);
  Tensor grad({2, 4});
  double loss = softmax_xent(logits, {1, 3}, grad);
  EXPECT_NEAR(loss, std::log(4.0), 1e-12);
}

TEST(SoftmaxXent, StableUnderLargeLogits) {
  Tensor logits = Tensor::matrix(1, 3);
  logits[0] = 1000.0f; logits[1] = 999.0f; logits[2] = -1000.0f;
  Tensor grad({1, 3});
  double loss = softmax_xent(logits, {0}, grad);
  EXPECT_TRUE(std::isfinite(loss));
  EXPECT_TRUE(grad.is_finite());
}

TEST(SoftmaxXent, RejectsBadLabels) {
  Tensor logits = Tensor::matrix(1, 3);
  Tensor grad({1, 3});
  EXPECT_THROW(softmax_xent(logits, {3}, grad), ConfigError);
}

TEST(SgdStep, MatchesHandUnrolledMomentumRecurrence) {
  // Two steps with constant gradient g, momentum mu, weight decay wd, all in
  // float32 with the documented order of operations.
  ParamSet ps;
  ps.add("w", Tensor::vector(1, 2.0f));
  const float g = 0.5f, lr = 0.1f, mu = 0.9f, wd = 0.01f;

  float p = 2.0f, v = 0.0f;
  for (int step = 0; step < 2; ++step) {
    float eff = g + wd * p;
    v = mu * v + eff;
    p -= lr * v;
  }

  for (int step = 0; step < 2; ++step) {
    ps.at("w").grad[0] = g;
    sgd_step(ps, lr, mu, wd);
  }
  EXPECT_EQ(ps.at("w").value[0], p);
  EXPECT_EQ(ps.at("w").velocity[0], v);
}

TEST(SgdStep, ZeroLearningRateLeavesValuesBitIdentical) {
  RngState rng(2);
  ParamSet ps;
  ps.add("w", random_tensor({4, 4}, rng));
  Tensor before = ps.at("w").value;
  ps.at("w").grad.fill(3.14f);
  sgd_step(ps, 0.0f, 0.9f, 1e-4f);
  EXPECT_TRUE(ps.at("w").value == before);
}

TEST(SgdStep, FrozenEntryCompletelyUntouched) {
  ParamSet ps;
  ps.add("a", Tensor::vector(2, 1.0f));
  ps.add("b", Tensor::vector(2, 1.0f));
  ps.at("a").trainable = false;
  ps.at("a").grad.fill(5.0f);
  ps.at("b").grad.fill(5.0f);
  ps.at("a").velocity.fill(0.25f);
  Tensor va = ps.at("a").velocity;
  sgd_step(ps, 0.1f, 0.9f, 0.01f);
  EXPECT_EQ(ps.at("a").value[0], 1.0f);
  EXPECT_TRUE(ps.at("a").velocity == va);
  EXPECT_NE(ps.at("b").value[0], 1.0f);
}

TEST(SgdStep, RejectsBadHyperparameters) {
  ParamSet ps;
  ps.add("w", Tensor::vector(1));
  EXPECT_THROW(sgd_step(ps, -0.1f, 0.9f, 0.0f), ConfigError);
  EXPECT_THROW(sgd_step(ps, 0.1f, 1.0f, 0.0f), ConfigError);
  EXPECT_THROW(sgd_step(ps, 0.1f, -0.1f, 0.0f), ConfigError);
  EXPECT_THROW(sgd_step(ps, 0.1f, 0.9f, -1.0f), ConfigError);
}

TEST(ParamSet, RejectsDuplicateIdsAndKeepsOrder) {
  ParamSet ps;
  ps.add("z", Tensor::vector(1));
  ps.add("a", Tensor::vector(1));
  EXPECT_THROW(ps.add("z", Tensor::vector(1)), ConfigError);
  EXPECT_THROW(ps.at("missing"), NotFoundError);
  std::vector<std::string> ids;
  for (auto& p : ps) ids.push_back(p.id);
  EXPECT_EQ(ids, (std::vector<std::string>{"z", "a"}));
}

TEST(ParamSet, DigestTracksValueBytes) {
  ParamSet a, b;
  a.add("w", Tensor::vector(3, 1.0f));
  b.add("w", Tensor::vector(3, 1.0f));
  EXPECT_EQ(a.digest(), b.digest());
  b.at("w").value[1] = 1.0000001f;
  EXPECT_NE(a.digest(), b.digest());
}

// End-to-end analytic-vs-numeric gradients through a small two-layer net.
TEST(GradCheck, TwoLayerNetBelowTolerance) {
  RngState rng(7);
  const std::size_t batch = 6, in = 4, hidden = 8, classes = 3;
  ParamSet ps;
  RngState init = rng.derive(1);
  auto he = [&](std::size_t fan_in, std::vector<std::size_t> shape) {
    Tensor t(std::move(shape));
    double std = std::sqrt(2.0 / static_cast<double>(fan_in));
    for (std::size_t i = 0; i < t.size(); ++i) t[i] = static_cast<float>(init.normal() * std);
    return t;
  };
  ps.add("w1", he(in, {hidden, in}));
  ps.add("b1", Tensor::vector(hidden));
  ps.add("w2", he(hidden, {classes, hidden}));
  ps.add("b2", Tensor::vector(classes));

  RngState data = rng.derive(2);
  Tensor x = random_tensor({batch, in}, data);
  std::vector<std::uint32_t> labels(batch);
  for (auto& l : labels) l = static_cast<std::uint32_t>(data.uniform_index(classes));

  auto forward_loss = [&]() {
    Tensor pre({batch, hidden}), h({batch, hidden}), logits({batch, classes});
    dense_forward(x, ps.at("w1").value, ps.at("b1").value, pre);
    relu_forward(pre, h);
    dense_forward(h, ps.at("w2").value, ps.at("b2").value, logits);
    Tensor g({batch, classes});
    return softmax_xent(logits, labels, g);
  };

  // Analytic pass.
  Tensor pre({batch, hidden}), h({batch, hidden}), logits({batch, classes});
  dense_forward(x, ps.at("w1").value, ps.at("b1").value, pre);
  relu_forward(pre, h);
  dense_forward(h, ps.at("w2").value, ps.at("b2").value, logits);
  Tensor dlogits({batch, classes});
  softmax_xent(logits, labels, dlogits);
  ps.zero_grad();
  Tensor dh({batch, hidden});
  dense_backward(h, ps.at("w2").value, dlogits, &dh, ps.at("w2").grad, ps.at("b2").grad);
  Tensor dpre({batch, hidden});
  relu_backward(pre, dh, dpre);
  dense_backward(x, ps.at("w1").value, dpre, nullptr, ps.at("w1").grad, ps.at("b1").grad);

  RngState probe(99);
  double err = grad_check(forward_loss, ps, 64, 5e-3, probe);
  EXPECT_LT(err, 1e-4);
}

TEST(GradCheck, FlatLossReportsZeroError) {
  ParamSet ps;
  ps.add("w", Tensor::vector(8, 1.0f));  // grads stay zero
  RngState probe(1);
  double err = grad_check([] { return 42.0; }, ps, 8, 1e-3, probe);
  EXPECT_EQ(err, 0.0);
}

TEST(GradCheck, RejectsBadEps) {
  ParamSet ps;
  ps.add("w", Tensor::vector(1));
  RngState probe(1);
  EXPECT_THROW(grad_check([] { return 0.0; }, ps, 1, 0.0, probe), ConfigError);
  EXPECT_THROW(grad_check([] { return 0.0; }, ps, 0, 1e-3, probe), ConfigError);
}
