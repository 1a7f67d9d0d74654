#pragma once

#include <chrono>
#include <cstdint>
#include <fstream>
#include <map>
#include <string>
#include <utility>
#include <vector>

#include "accordion/arch.hpp"
#include "accordion/dataset.hpp"
#include "accordion/errors.hpp"
#include "accordion/ops.hpp"
#include "accordion/policy.hpp"
#include "accordion/rng.hpp"

namespace accordion {

// Training loop: one depth configuration is drawn per mini-batch iteration,
// the loss flows through only the active units, and only the active units
// (plus stem and head, always) are updated. Everything is deterministic
// given the run seed; the exact randomness layout is documented at train()
// because external reimplementations are expected to replicate it.

struct LrSchedule {
  double initial = 0.1;
  std::vector<std::pair<std::size_t, double>> drops = {{30, 10.0}, {45, 10.0}};

  void validate() const {
    if (!(initial > 0.0)) throw ConfigError("lr schedule: initial rate must be positive");
    std::size_t prev = 0;
    bool first = true;
    for (const auto& [epoch, div] : drops) {
      if (!first && epoch <= prev) throw ConfigError("lr schedule: epochs must strictly increase");
      if (!(div > 0.0)) throw ConfigError("lr schedule: divisors must be positive");
      prev = epoch;
      first = false;
    }
  }

  double at(std::size_t epoch) const {
    double lr = initial;
    for (const auto& [e, div] : drops)
      if (epoch >= e) lr /= div;
    return lr;
  }
};

struct TrainConfig {
  std::size_t epochs = 60;
  std::size_t batch_size = 124;
  LrSchedule lr;
  double momentum = 0.9;
  double weight_decay = 1e-4;
  DepthPolicy policy;
  std::uint64_t seed = 0;

  void validate() const {
    if (epochs == 0) throw ConfigError("train: epochs must be >= 1");
    if (batch_size == 0) throw ConfigError("train: batch_size must be >= 1");
    if (momentum < 0.0 || momentum >= 1.0) throw ConfigError("train: momentum must be in [0,1)");
    if (weight_decay < 0.0) throw ConfigError("train: weight_decay must be >= 0");
    lr.validate();
    policy.validate();
  }
};

struct EpochStats {
  std::size_t epoch = 0;
  double lr = 0.0;
  double mean_loss = 0.0;
  double val_error = 0.0;
};

struct TrainReport {
  std::vector<EpochStats> epochs;
  std::size_t iterations = 0;
  std::uint64_t total_active_units = 0;  // sum of sampled n over iterations
  double wall_ms = 0.0;
  std::uint64_t final_digest = 0;
};

// Copies rows `idx[start .. start+count)` of (x, y) into (bx, by).
inline void gather_batch(const Tensor& x, const std::vector<std::uint32_t>& y,
                         const std::vector<std::uint32_t>& idx, std::size_t start,
                         std::size_t count, Tensor& bx, std::vector<std::uint32_t>& by) {
  const std::size_t dim = x.cols();
  by.resize(count);
  for (std::size_t i = 0; i < count; ++i) {
    const std::uint32_t src = idx[start + i];
    const float* srow = x.row(src);
    float* drow = bx.row(i);
    for (std::size_t d = 0; d < dim; ++d) drow[d] = srow[d];
    by[i] = y[src];
  }
}

// One optimizer step on one batch under one depth configuration. Freezing is
// done with trainable flags, so inactive units keep value AND velocity
// bit-identical (weight decay never touches them either).
inline double accordion_step(AccordionModel& model, Workspace& ws, const Tensor& x,
                             const std::vector<std::uint32_t>& y, const DepthConfig& cfg,
                             double lr, double momentum, double weight_decay) {
  model.set_trainable(cfg);
  const Tensor& logits = model.forward(x, cfg, ws);
  const double loss = softmax_xent(logits, y, ws.dlogits);
  model.params().zero_grad();
  model.backward(x, ws.dlogits, cfg, ws);
  sgd_step(model.params(), static_cast<float>(lr), static_cast<float>(momentum),
           static_cast<float>(weight_decay));
  return loss;
}

// Error rate = fraction of rows whose argmax logit (ties to the lowest class
// index) differs from the label. Row-independent, so batching is irrelevant
// to the result.
inline double evaluate(const AccordionModel& model, const DepthConfig& cfg, const Dataset& data,
                       std::size_t eval_batch = 256) {
  if (data.size() == 0) throw ConfigError("evaluate: empty dataset");
  std::size_t wrong = 0;
  std::map<std::size_t, Workspace> ws_by_batch;
  Tensor bx;
  std::vector<std::uint32_t> by;
  std::vector<std::uint32_t> idx(data.size());
  for (std::uint32_t i = 0; i < idx.size(); ++i) idx[i] = i;
  for (std::size_t start = 0; start < data.size(); start += eval_batch) {
    const std::size_t count = std::min(eval_batch, data.size() - start);
    auto it = ws_by_batch.find(count);
    if (it == ws_by_batch.end())
      it = ws_by_batch.emplace(count, model.make_workspace(count)).first;
    if (bx.rank() != 2 || bx.rows() != count) bx = Tensor({count, data.x.cols()});
    gather_batch(data.x, data.y, idx, start, count, bx, by);
    const Tensor& logits = model.forward(bx, cfg, it->second);
    for (std::size_t r = 0; r < count; ++r) {
      const float* row = logits.row(r);
      std::size_t best = 0;
      for (std::size_t c = 1; c < logits.cols(); ++c)
        if (row[c] > row[best]) best = c;
      if (best != by[r]) ++wrong;
    }
  }
  return static_cast<double>(wrong) / static_cast<double>(data.size());
}

// Full training run. Randomness layout (fixed contract):
//   root        = RngState(cfg.seed)
//   shuffling   : root.derive(1).derive(epoch) drives the Fisher-Yates shuffle
//                 of an identity permutation, fresh each epoch
//   policy      : root.derive(2) is the single stream for per-iteration
//                 config sampling (fixed policies consume nothing from it)
// Batches walk the shuffled permutation in order; the last batch of an epoch
// may be short. The learning rate is constant within an epoch.
inline TrainReport train(AccordionModel& model, const Dataset& train_data, const Dataset& val_data,
                         const TrainConfig& cfg) {
  cfg.validate();
  if (train_data.size() == 0) throw ConfigError("train: empty dataset");
  if (cfg.policy.total_units != model.spec().total_units())
    throw ConfigError("train: policy and model disagree on unit count");
  const auto t0 = std::chrono::steady_clock::now();

  RngState root(cfg.seed);
  RngState shuffle_base = root.derive(1);
  RngState policy_rng = root.derive(2);

  const std::size_t n = train_data.size();
  std::vector<std::uint32_t> perm(n);
  std::map<std::size_t, Workspace> ws_by_batch;
  std::map<std::size_t, Tensor> bx_by_batch;
  std::vector<std::uint32_t> by;

  TrainReport report;
  const DepthConfig full_cfg{cfg.policy.scheme, model.spec().total_units()};

  for (std::size_t epoch = 0; epoch < cfg.epochs; ++epoch) {
    for (std::uint32_t i = 0; i < n; ++i) perm[i] = i;
    RngState epoch_rng = shuffle_base.derive(epoch);
    epoch_rng.shuffle(perm);
    const double lr = cfg.lr.at(epoch);

    double loss_sum = 0.0;
    std::size_t iters = 0;
    for (std::size_t start = 0; start < n; start += cfg.batch_size) {
      const std::size_t count = std::min(cfg.batch_size, n - start);
      auto wit = ws_by_batch.find(count);
      if (wit == ws_by_batch.end())
        wit = ws_by_batch.emplace(count, model.make_workspace(count)).first;
      auto bit = bx_by_batch.find(count);
      if (bit == bx_by_batch.end())
        bit = bx_by_batch.emplace(count, Tensor({count, train_data.x.cols()})).first;
      gather_batch(train_data.x, train_data.y, perm, start, count, bit->second, by);

      const DepthConfig step_cfg = cfg.policy.sample(policy_rng);
      loss_sum += accordion_step(model, wit->second, bit->second, by, step_cfg, lr, cfg.momentum,
                                 cfg.weight_decay);
      report.total_active_units += step_cfg.n;
      ++iters;
    }
    report.iterations += iters;
    EpochStats es;
    es.epoch = epoch;
    es.lr = lr;
    es.mean_loss = loss_sum / static_cast<double>(iters);
    es.val_error = evaluate(model, full_cfg, val_data);
    report.epochs.push_back(es);
  }
  report.final_digest = model.params().digest();
  report.wall_ms = std::chrono::duration<double, std::milli>(std::chrono::steady_clock::now() - t0)
                       .count();
  return report;
}

// CSV export: one row per epoch.
inline void write_train_csv(const TrainReport& r, const std::string& path) {
  std::ofstream f(path, std::ios::trunc);
  if (!f) throw UnreachableError("cannot open for writing: " + path);
  f << "epoch,loss,full_error,lr\n";
  for (const auto& e : r.epochs)
    f << e.epoch << ',' << e.mean_loss << ',' << e.val_error << ',' << e.lr << '\n';
}

}  // namespace accordion
