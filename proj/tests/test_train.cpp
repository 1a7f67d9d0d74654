// Dataset generation and training-loop tests. The centerpiece is a bitwise
// side-by-side against a training loop written here with no depth-skipping
// machinery at all: plain kernels, plain loops. The freeze contract and the
// schedule/iteration arithmetic are checked on small models.

#include <gtest/gtest.h>

#include <cmath>
#include <cstring>
#include <set>
#include <vector>

#include "accordion/dataset.hpp"
#include "accordion/train.hpp"

using namespace accordion;

namespace {

SpiralSpec tiny_spirals(std::size_t train, std::size_t val) {
  SpiralSpec s;
  s.train = train;
  s.val = val;
  s.test = val;
  return s;
}

ArchSpec tiny_arch(std::size_t k, std::size_t width) {
  ArchSpec a;
  a.input_dim = 2;
  a.num_classes = 3;
  a.units_per_block = k;
  a.block_widths = {width, width, width};
  return a;
}

bool params_bitwise_equal(const ParamSet& a, const ParamSet& b) {
  if (a.size() != b.size()) return false;
  for (const auto& p : a) {
    const Param& q = b.at(p.id);
    if (!(p.value == q.value) || !(p.velocity == q.velocity)) return false;
  }
  return true;
}

}  // namespace

TEST(Spirals, DeterministicBytesAndSeedSensitivity) {
  SpiralSpec s = tiny_spirals(120, 30);
  DataBundle a = make_spirals(s, 5), b = make_spirals(s, 5), c = make_spirals(s, 6);
  EXPECT_EQ(dataset_to_bytes(a), dataset_to_bytes(b));
  EXPECT_NE(dataset_to_bytes(a), dataset_to_bytes(c));
}

TEST(Spirals, ClassBalanceExactAtDivisibleSizes) {
  DataBundle b = make_spirals(tiny_spirals(6000, 999), 7);
  for (const Dataset* d : {&b.train, &b.val}) {
    std::vector<int> counts(3, 0);
    for (std::uint32_t y : d->y) counts.at(y)++;
    EXPECT_EQ(counts[0], counts[1]);
    EXPECT_EQ(counts[1], counts[2]);
  }
  EXPECT_GT(b.spec.label_flip_p, 0.0);  // balance holds even with label noise on
}

TEST(Spirals, LabelNoiseActuallyFlipsSomething) {
  SpiralSpec s = tiny_spirals(3000, 30);
  DataBundle noisy = make_spirals(s, 7);
  std::size_t flipped = 0;
  for (std::size_t i = 0; i < noisy.train.size(); ++i)
    if (noisy.train.y[i] != i % 3) ++flipped;
  const double rate = static_cast<double>(flipped) / noisy.train.size();
  EXPECT_NEAR(rate, s.label_flip_p, 0.005);
}

TEST(Spirals, NearestNeighborOracleBelowFifteenPercent) {
  DataBundle b = make_spirals(SpiralSpec{}, 11);  // full desk-scale defaults
  std::size_t wrong = 0;
  for (std::size_t i = 0; i < b.val.size(); ++i) {
    const float vx = b.val.x.at(i, 0), vy = b.val.x.at(i, 1);
    double best = 1e30;
    std::uint32_t pick = 0;
    for (std::size_t j = 0; j < b.train.size(); ++j) {
      const double dx = vx - b.train.x.at(j, 0), dy = vy - b.train.x.at(j, 1);
      const double d2 = dx * dx + dy * dy;
      if (d2 < best) {
        best = d2;
        pick = b.train.y[j];
      }
    }
    if (pick != b.val.y[i]) ++wrong;
  }
  EXPECT_LT(static_cast<double>(wrong) / b.val.size(), 0.15);
}

TEST(Spirals, BytesRoundTripAndCorruptionDetection) {
  DataBundle b = make_spirals(tiny_spirals(60, 15), 3);
  std::string bytes = dataset_to_bytes(b);
  DataBundle back = dataset_from_bytes(bytes);
  EXPECT_EQ(dataset_to_bytes(back), bytes);
  EXPECT_EQ(back.seed, b.seed);
  EXPECT_TRUE(back.train.x == b.train.x);
  EXPECT_EQ(back.val.y, b.val.y);

  std::string bad_magic = bytes;
  bad_magic[0] = 'X';
  EXPECT_THROW(dataset_from_bytes(bad_magic), IntegrityError);
  std::string bad_version = bytes;
  bad_version[4] = 9;
  EXPECT_THROW(dataset_from_bytes(bad_version), VersionError);
  EXPECT_THROW(dataset_from_bytes(bytes.substr(0, bytes.size() - 1)), IntegrityError);
  EXPECT_THROW(dataset_from_bytes(bytes + "x"), IntegrityError);
}

TEST(LrSchedule, StepwiseDropsDivideTheRateFromTheirEpochOn) {
  LrSchedule s{0.1, {{82, 10.0}, {123, 10.0}}};
  s.validate();
  EXPECT_DOUBLE_EQ(s.at(0), 0.1);
  EXPECT_DOUBLE_EQ(s.at(81), 0.1);
  EXPECT_DOUBLE_EQ(s.at(82), 0.01);
  EXPECT_DOUBLE_EQ(s.at(122), 0.01);
  EXPECT_DOUBLE_EQ(s.at(123), 0.001);
  EXPECT_DOUBLE_EQ(s.at(163), 0.001);
  EXPECT_THROW((LrSchedule{0.1, {{45, 10.0}, {30, 10.0}}}).validate(), ConfigError);
  EXPECT_THROW((LrSchedule{0.1, {{45, 0.0}}}).validate(), ConfigError);
  EXPECT_THROW((LrSchedule{0.0, {}}).validate(), ConfigError);
}

TEST(Train, IterationCountIsCeilingOfNOverBatch) {
  DataBundle b = make_spirals(tiny_spirals(1000, 30), 2);
  ArchSpec spec = tiny_arch(1, 8);
  AccordionModel m = AccordionModel::build(spec, 1);
  TrainConfig cfg;
  cfg.epochs = 1;
  cfg.batch_size = 124;
  cfg.policy = DepthPolicy::fixed(SkipScheme::coml, spec.total_units(), spec.total_units());
  cfg.seed = 4;
  TrainReport r = train(m, b.train, b.val, cfg);
  EXPECT_EQ(r.iterations, 9u);
  EXPECT_EQ(r.epochs.size(), 1u);
}

TEST(Train, StepFreezesInactiveUnitsCompletely) {
  ArchSpec spec = tiny_arch(2, 16);
  AccordionModel m = AccordionModel::build(spec, 3);
  DataBundle b = make_spirals(tiny_spirals(64, 30), 8);
  Tensor bx({64, 2});
  std::vector<std::uint32_t> by;
  std::vector<std::uint32_t> idx(64);
  for (std::uint32_t i = 0; i < 64; ++i) idx[i] = i;
  gather_batch(b.train.x, b.train.y, idx, 0, 64, bx, by);

  DepthConfig cfg{SkipScheme::coml, 2};  // only block 0 active
  auto active = active_set(cfg.scheme, cfg.n, spec);
  std::set<UnitId> actset(active.begin(), active.end());

  // snapshot everything
  AccordionModel snapshot = m;
  Workspace ws = m.make_workspace(64);
  double loss = accordion_step(m, ws, bx, by, cfg, 0.1, 0.9, 1e-4);
  EXPECT_TRUE(std::isfinite(loss));

  for (std::size_t blk = 0; blk < 3; ++blk)
    for (std::size_t u = 0; u < 2; ++u) {
      UnitId id{blk, u};
      const bool is_active = actset.count(id) != 0;
      for (const char* leaf : {"w1", "b1", "w2", "b2"}) {
        const Param& now = m.params().at(unit_param_id(id, leaf));
        const Param& was = snapshot.params().at(unit_param_id(id, leaf));
        if (is_active) continue;
        EXPECT_TRUE(now.value == was.value) << unit_param_id(id, leaf);
        EXPECT_TRUE(now.velocity == was.velocity) << unit_param_id(id, leaf);
      }
    }
  EXPECT_FALSE(m.params().at("head.w").value == snapshot.params().at("head.w").value);
  EXPECT_FALSE(m.params().at("stem.w").value == snapshot.params().at("stem.w").value);
}

TEST(Train, ZeroLearningRateComputesLossWithoutChangingParams) {
  ArchSpec spec = tiny_arch(1, 8);
  AccordionModel m = AccordionModel::build(spec, 5);
  DataBundle b = make_spirals(tiny_spirals(30, 30), 1);
  Tensor bx({30, 2});
  std::vector<std::uint32_t> by;
  std::vector<std::uint32_t> idx(30);
  for (std::uint32_t i = 0; i < 30; ++i) idx[i] = i;
  gather_batch(b.train.x, b.train.y, idx, 0, 30, bx, by);
  const std::uint64_t before = m.params().digest();
  Workspace ws = m.make_workspace(30);
  double loss = accordion_step(m, ws, bx, by, {SkipScheme::coml, 3}, 0.0, 0.9, 1e-4);
  EXPECT_TRUE(std::isfinite(loss));
  EXPECT_EQ(m.params().digest(), before);
}

// ---- the no-skip reference loop --------------------------------------------
// Written against raw kernels only: no DepthConfig, no set_trainable, no
// policy, no Workspace. Mirrors the documented randomness layout of train().
namespace {

void noskip_train(AccordionModel& m, const Dataset& data, const TrainConfig& cfg) {
  const ArchSpec& spec = m.spec();
  const std::size_t n = data.size(), k = spec.units_per_block, b_count = spec.blocks();
  RngState root(cfg.seed);
  RngState shuffle_base = root.derive(1);
  ParamSet& ps = m.params();
  for (auto& p : ps) p.trainable = true;

  std::vector<std::uint32_t> perm(n);
  std::vector<std::uint32_t> by;
  for (std::size_t epoch = 0; epoch < cfg.epochs; ++epoch) {
    for (std::uint32_t i = 0; i < n; ++i) perm[i] = i;
    RngState er = shuffle_base.derive(epoch);
    er.shuffle(perm);
    const double lr = cfg.lr.at(epoch);
    for (std::size_t start = 0; start < n; start += cfg.batch_size) {
      const std::size_t count = std::min(cfg.batch_size, n - start);
      Tensor bx({count, spec.input_dim});
      gather_batch(data.x, data.y, perm, start, count, bx, by);

      // forward, keeping every intermediate
      const std::size_t w = spec.block_widths[0];
      Tensor stem_pre({count, w}), a({count, w});
      dense_forward(bx, ps.at("stem.w").value, ps.at("stem.b").value, stem_pre);
      relu_forward(stem_pre, a);
      std::vector<Tensor> ins, pre1s, h1s;
      for (std::size_t blk = 0; blk < b_count; ++blk)
        for (std::size_t u = 0; u < k; ++u) {
          UnitId id{blk, u};
          Tensor p1({count, w}), h({count, w}), r({count, w});
          dense_forward(a, ps.at(unit_param_id(id, "w1")).value,
                        ps.at(unit_param_id(id, "b1")).value, p1);
          relu_forward(p1, h);
          dense_forward(h, ps.at(unit_param_id(id, "w2")).value,
                        ps.at(unit_param_id(id, "b2")).value, r);
          for (std::size_t i = 0; i < r.size(); ++i) r[i] = a[i] + r[i];
          ins.push_back(a);
          pre1s.push_back(p1);
          h1s.push_back(h);
          a = r;
        }
      Tensor logits({count, spec.num_classes}), dlogits({count, spec.num_classes});
      dense_forward(a, ps.at("head.w").value, ps.at("head.b").value, logits);
      softmax_xent(logits, by, dlogits);

      // backward
      ps.zero_grad();
      Tensor d({count, w}), dh({count, w}), dpre({count, w}), dres({count, w});
      dense_backward(a, ps.at("head.w").value, dlogits, &d, ps.at("head.w").grad,
                     ps.at("head.b").grad);
      for (std::size_t f = b_count * k; f-- > 0;) {
        UnitId id{f / k, f % k};
        dense_backward(h1s[f], ps.at(unit_param_id(id, "w2")).value, d, &dh,
                       ps.at(unit_param_id(id, "w2")).grad, ps.at(unit_param_id(id, "b2")).grad);
        relu_backward(pre1s[f], dh, dpre);
        dense_backward(ins[f], ps.at(unit_param_id(id, "w1")).value, dpre, &dres,
                       ps.at(unit_param_id(id, "w1")).grad, ps.at(unit_param_id(id, "b1")).grad);
        for (std::size_t i = 0; i < d.size(); ++i) d[i] = d[i] + dres[i];
      }
      Tensor dstem({count, w});
      relu_backward(stem_pre, d, dstem);
      dense_backward(bx, ps.at("stem.w").value, dstem, nullptr, ps.at("stem.w").grad,
                     ps.at("stem.b").grad);
      sgd_step(ps, static_cast<float>(lr), static_cast<float>(cfg.momentum),
               static_cast<float>(cfg.weight_decay));
    }
  }
}

}  // namespace

TEST(Train, FixedFullPolicyMatchesNoSkipLoopBitwise) {
  ArchSpec spec = tiny_arch(2, 16);
  DataBundle b = make_spirals(tiny_spirals(300, 60), 9);
  TrainConfig cfg;
  cfg.epochs = 3;
  cfg.batch_size = 64;
  cfg.lr = LrSchedule{0.1, {{1, 10.0}, {2, 10.0}}};  // exercise the schedule too
  cfg.policy = DepthPolicy::fixed(SkipScheme::coml, spec.total_units(), spec.total_units());
  cfg.seed = 42;

  AccordionModel elastic = AccordionModel::build(spec, 7);
  AccordionModel plain = AccordionModel::build(spec, 7);
  TrainReport r = train(elastic, b.train, b.val, cfg);
  noskip_train(plain, b.train, cfg);

  EXPECT_TRUE(params_bitwise_equal(elastic.params(), plain.params()));
  EXPECT_EQ(elastic.params().digest(), plain.params().digest());
  EXPECT_EQ(r.final_digest, plain.params().digest());
  for (const auto& e : r.epochs) EXPECT_TRUE(std::isfinite(e.mean_loss));
}

TEST(Train, ActiveUnitCounterTracksPolicyMean) {
  ArchSpec spec = tiny_arch(6, 4);
  DataBundle b = make_spirals(tiny_spirals(600, 30), 14);
  TrainConfig cfg;
  cfg.epochs = 1000;  // 6 iters/epoch -> 6000 iterations
  cfg.batch_size = 100;
  cfg.policy = DepthPolicy::full_else_uniform(SkipScheme::coml, 0.5, spec.total_units());
  cfg.seed = 77;
  AccordionModel m = AccordionModel::build(spec, 2);
  TrainReport r = train(m, b.train, b.val, cfg);
  ASSERT_EQ(r.iterations, 6000u);
  const double mean_n = static_cast<double>(r.total_active_units) / r.iterations;
  const double expect = 0.5 * 18 + 0.5 * 9.0;  // E[uniform{1..17}] = 9
  EXPECT_NEAR(mean_n, expect, 0.02 * expect);
}

TEST(Evaluate, ZeroErrorOnModelOwnArgmax) {
  ArchSpec spec = tiny_arch(1, 8);
  AccordionModel m = AccordionModel::build(spec, 6);
  DataBundle b = make_spirals(tiny_spirals(130, 30), 4);
  Dataset relabeled = b.train;
  Workspace ws = m.make_workspace(130);
  const Tensor& logits = m.forward(relabeled.x, {SkipScheme::coml, 3}, ws);
  for (std::size_t r = 0; r < 130; ++r) {
    const float* row = logits.row(r);
    std::uint32_t best = 0;
    for (std::uint32_t c = 1; c < 3; ++c)
      if (row[c] > row[best]) best = c;
    relabeled.y[r] = best;
  }
  EXPECT_EQ(evaluate(m, {SkipScheme::coml, 3}, relabeled), 0.0);
}

TEST(Evaluate, RandomInitNearChanceAndOrderInvariant) {
  ArchSpec spec = tiny_arch(2, 16);
  AccordionModel m = AccordionModel::build(spec, 123);
  DataBundle b = make_spirals(tiny_spirals(900, 900), 19);
  const double err = evaluate(m, {SkipScheme::coml, 6}, b.val);
  // A freshly built model has zero logits (silent branches + zero classifier),
  // so argmax ties resolve to class 0 and error is 1 - freq(class 0): the 2/3
  // chance rate on balanced data. The band guards against slight imbalance.
  EXPECT_NEAR(err, 2.0 / 3.0, 3.0 * std::sqrt((2.0 / 3.0) * (1.0 / 3.0) / 900.0) + 0.05);

  Dataset shuffled = b.val;
  RngState r(5);
  std::vector<std::uint32_t> perm(shuffled.size());
  for (std::uint32_t i = 0; i < perm.size(); ++i) perm[i] = i;
  r.shuffle(perm);
  Tensor sx({shuffled.size(), 2});
  std::vector<std::uint32_t> sy(shuffled.size());
  for (std::size_t i = 0; i < perm.size(); ++i) {
    sx.at(i, 0) = b.val.x.at(perm[i], 0);
    sx.at(i, 1) = b.val.x.at(perm[i], 1);
    sy[i] = b.val.y[perm[i]];
  }
  shuffled.x = sx;
  shuffled.y = sy;
  EXPECT_EQ(evaluate(m, {SkipScheme::coml, 6}, shuffled), err);
}

TEST(Train, RejectsEmptyAndMismatchedInputs) {
  ArchSpec spec = tiny_arch(1, 8);
  AccordionModel m = AccordionModel::build(spec, 1);
  DataBundle b = make_spirals(tiny_spirals(30, 30), 1);
  TrainConfig cfg;
  cfg.policy = DepthPolicy::fixed(SkipScheme::coml, 5, 5);  // wrong unit count
  cfg.epochs = 1;
  EXPECT_THROW(train(m, b.train, b.val, cfg), ConfigError);
  Dataset empty;
  cfg.policy = DepthPolicy::fixed(SkipScheme::coml, 3, 3);
  EXPECT_THROW(train(m, empty, b.val, cfg), ConfigError);
  EXPECT_THROW(evaluate(m, {SkipScheme::coml, 0}, empty), ConfigError);
}

TEST(Train, CsvExportShape) {
  ArchSpec spec = tiny_arch(1, 8);
  AccordionModel m = AccordionModel::build(spec, 2);
  DataBundle b = make_spirals(tiny_spirals(60, 30), 3);
  TrainConfig cfg;
  cfg.epochs = 2;
  cfg.batch_size = 32;
  cfg.policy = DepthPolicy::fixed(SkipScheme::coml, 3, 3);
  TrainReport r = train(m, b.train, b.val, cfg);
  const std::string path = "train_report_test.csv";
  write_train_csv(r, path);
  std::string text = read_file(path);
  EXPECT_EQ(text.rfind("epoch,loss,full_error,lr\n", 0), 0u);
  EXPECT_EQ(std::count(text.begin(), text.end(), '\n'), 3);
  std::remove(path.c_str());
}
