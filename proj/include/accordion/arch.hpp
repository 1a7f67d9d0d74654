#pragma once

#include <array>
#include <cstdint>
#include <string>
#include <vector>

#include "accordion/errors.hpp"
#include "accordion/ops.hpp"
#include "accordion/params.hpp"
#include "accordion/rng.hpp"
#include "accordion/tensor.hpp"

namespace accordion {

// The depth-elastic residual classifier: a stem (input -> first width), B
// blocks of K residual units each, fixed non-trainable transitions between
// blocks, and a linear head. Any unit can be skipped at run time; a skipped
// unit behaves as the identity, which is what makes priority-prefix subsets
// of the network runnable models.

// How units are dropped as the kept count n shrinks:
//   coml      - keep the first n units in depth order; deep blocks empty first.
//   blockcoml - keep the same number of units in every block (round-robin by
//               position, earlier blocks receive the remainder).
enum class SkipScheme : std::uint8_t { coml = 0, blockcoml = 1 };

inline std::string to_string(SkipScheme s) { return s == SkipScheme::coml ? "coml" : "blockcoml"; }

inline SkipScheme parse_scheme(const std::string& s) {
  if (s == "coml") return SkipScheme::coml;
  if (s == "blockcoml") return SkipScheme::blockcoml;
  throw ConfigError("unknown scheme '" + s + "' (expected coml|blockcoml)");
}

struct UnitId {
  std::size_t block = 0;
  std::size_t pos = 0;
  bool operator==(const UnitId&) const = default;
  bool operator<(const UnitId& o) const {
    return block != o.block ? block < o.block : pos < o.pos;
  }
};

struct ArchSpec {
  std::size_t input_dim = 2;
  std::size_t num_classes = 3;
  std::size_t units_per_block = 6;           // K
  std::vector<std::size_t> block_widths = {64, 64, 64};
  std::size_t bits_per_param = 64;           // accounting convention; payloads are 32-bit

  std::size_t blocks() const { return block_widths.size(); }
  std::size_t total_units() const { return blocks() * units_per_block; }

  void validate() const {
    if (input_dim == 0) throw ConfigError("arch: input_dim must be positive");
    if (num_classes < 2) throw ConfigError("arch: need at least 2 classes");
    if (units_per_block == 0) throw ConfigError("arch: units_per_block must be positive");
    if (block_widths.empty()) throw ConfigError("arch: need at least one block");
    for (std::size_t w : block_widths)
      if (w == 0) throw ConfigError("arch: block widths must be positive");
    if (bits_per_param == 0) throw ConfigError("arch: bits_per_param must be positive");
  }

  // Canonical key-value block. This exact text is embedded in the container
  // manifest, so formatting is part of the wire contract: fixed key order,
  // "k = v" with single spaces, comma-separated widths, one trailing newline
  // per line.
  std::string to_text() const {
    std::string s;
    s += "input_dim = " + std::to_string(input_dim) + "\n";
    s += "num_classes = " + std::to_string(num_classes) + "\n";
    s += "units_per_block = " + std::to_string(units_per_block) + "\n";
    s += "block_widths = ";
    for (std::size_t b = 0; b < block_widths.size(); ++b)
      s += (b ? "," : "") + std::to_string(block_widths[b]);
    s += "\n";
    s += "bits_per_param = " + std::to_string(bits_per_param) + "\n";
    return s;
  }

  static ArchSpec desk_default() { return ArchSpec{}; }

  bool operator==(const ArchSpec&) const = default;
};

// A selection of kept units: scheme plus total count n in [0, B*K].
struct DepthConfig {
  SkipScheme scheme = SkipScheme::coml;
  std::size_t n = 0;
};

inline void validate_config(const DepthConfig& c, const ArchSpec& spec) {
  if (c.n > spec.total_units())
    throw ConfigError("depth config n=" + std::to_string(c.n) + " exceeds unit count " +
                      std::to_string(spec.total_units()));
}

// Units kept per block. coml fills earlier blocks first; blockcoml spreads
// n as evenly as possible with earlier blocks taking the remainder. Within a
// block the kept units are always the leftmost ones.
inline std::vector<std::size_t> active_counts(SkipScheme scheme, std::size_t n,
                                              const ArchSpec& spec) {
  validate_config({scheme, n}, spec);
  const std::size_t b_count = spec.blocks(), k = spec.units_per_block;
  std::vector<std::size_t> counts(b_count, 0);
  if (scheme == SkipScheme::coml) {
    std::size_t left = n;
    for (std::size_t b = 0; b < b_count; ++b) {
      counts[b] = left < k ? left : k;
      left -= counts[b];
    }
  } else {
    for (std::size_t b = 0; b < b_count; ++b)
      counts[b] = n / b_count + (b < n % b_count ? 1 : 0);
  }
  return counts;
}

inline std::vector<UnitId> active_set(SkipScheme scheme, std::size_t n, const ArchSpec& spec) {
  auto counts = active_counts(scheme, n, spec);
  std::vector<UnitId> out;
  out.reserve(n);
  for (std::size_t b = 0; b < counts.size(); ++b)
    for (std::size_t u = 0; u < counts[b]; ++u) out.push_back({b, u});
  return out;
}

// Transfer priority over units: the first n entries realize exactly
// active_set(scheme, n) for every n. coml walks depth order; blockcoml
// interleaves blocks round-robin by position.
inline std::vector<UnitId> unit_priority(SkipScheme scheme, const ArchSpec& spec) {
  std::vector<UnitId> order;
  order.reserve(spec.total_units());
  if (scheme == SkipScheme::coml) {
    for (std::size_t b = 0; b < spec.blocks(); ++b)
      for (std::size_t u = 0; u < spec.units_per_block; ++u) order.push_back({b, u});
  } else {
    for (std::size_t u = 0; u < spec.units_per_block; ++u)
      for (std::size_t b = 0; b < spec.blocks(); ++b) order.push_back({b, u});
  }
  return order;
}

// Fixed, parameter-free maps between blocks of different widths.
enum class TransitionKind : std::uint8_t { identity = 0, avgpool2 = 1, project = 2 };

struct TransitionDesc {
  TransitionKind kind = TransitionKind::identity;
  std::uint64_t seed = 0;  // used by `project` to regenerate the matrix
};

struct SizeReport {
  std::uint64_t param_count = 0;
  std::uint64_t size_bits = 0;
  std::uint64_t mac_count = 0;
  double layer_fraction = 0.0;
  double size_fraction = 0.0;
  double mac_fraction = 0.0;
};

// Parameter naming scheme; these ids are the unit of freezing and chunking.
inline std::string stem_w_id() { return "stem.w"; }
inline std::string stem_b_id() { return "stem.b"; }
inline std::string head_w_id() { return "head.w"; }
inline std::string head_b_id() { return "head.b"; }
inline std::string unit_param_id(UnitId u, const char* leaf) {
  return "b" + std::to_string(u.block) + ".u" + std::to_string(u.pos) + "." + leaf;
}

namespace detail {
inline std::uint64_t fnv1a64(const std::string& s) {
  std::uint64_t h = 0xCBF29CE484222325ull;
  for (unsigned char c : s) {
    h ^= c;
    h *= 0x100000001B3ull;
  }
  return h;
}
}  // namespace detail

class AccordionModel;

// Reusable per-batch-size buffers for forward/backward. Allocate once and
// reuse across iterations; nothing in the hot loop allocates.
struct Workspace {
  std::size_t batch = 0;
  Tensor stem_pre, stem_act;
  std::vector<Tensor> pre1, h1, out;          // per flat unit index b*K+u
  std::vector<Tensor> trans_out;              // per transition
  Tensor logits, dlogits;
  // backward scratch, per block width
  std::vector<Tensor> d_out, d_res, d_h, d_pre;
  Tensor d_stem_pre;

  Workspace() = default;
  Workspace(const ArchSpec& spec, std::size_t batch_size) : batch(batch_size) {
    const std::size_t k = spec.units_per_block;
    stem_pre = Tensor({batch, spec.block_widths[0]});
    stem_act = Tensor({batch, spec.block_widths[0]});
    pre1.resize(spec.total_units());
    h1.resize(spec.total_units());
    out.resize(spec.total_units());
    for (std::size_t b = 0; b < spec.blocks(); ++b)
      for (std::size_t u = 0; u < k; ++u) {
        Tensor t({batch, spec.block_widths[b]});
        pre1[b * k + u] = t;
        h1[b * k + u] = t;
        out[b * k + u] = std::move(t);
      }
    trans_out.resize(spec.blocks() > 1 ? spec.blocks() - 1 : 0);
    for (std::size_t t = 0; t + 1 < spec.blocks(); ++t)
      trans_out[t] = Tensor({batch, spec.block_widths[t + 1]});
    logits = Tensor({batch, spec.num_classes});
    dlogits = Tensor({batch, spec.num_classes});
    d_out.resize(spec.blocks());
    d_res.resize(spec.blocks());
    d_h.resize(spec.blocks());
    d_pre.resize(spec.blocks());
    for (std::size_t b = 0; b < spec.blocks(); ++b) {
      Tensor t({batch, spec.block_widths[b]});
      d_out[b] = t;
      d_res[b] = t;
      d_h[b] = t;
      d_pre[b] = std::move(t);
    }
    d_stem_pre = Tensor({batch, spec.block_widths[0]});
  }
};

class AccordionModel {
 public:
  // Initialization for a normalization-free residual net that must survive
  // the default recipe (lr 0.1, momentum 0.9) at every depth configuration:
  //
  //   - stem:   N(0, 2/max(fan_in, fan_out)). Plain fan-in variance with a
  //             2-wide input gives O(1) activations across the whole trunk;
  //             the loss curvature that creates sits above the stable-step
  //             limit of the default learning rate and training blows up
  //             within an epoch. Bounding the fan keeps trunk activations
  //             small at the start.
  //   - w1:     N(0, 2/fan_in) scaled by 1/sqrt(B*K), so branch magnitudes
  //             shrink with depth and the summed residual updates of all
  //             units stay comparable to a single layer's.
  //   - w2,head: zero. Every residual branch and the classifier start silent:
  //             logits are exactly zero, the first steps only wake the head,
  //             and weights grow into the task instead of starting on the
  //             edge of divergence. Branches get nonzero gradients as soon as
  //             the head moves (step 2), w1 one step later.
  //   - biases: zero.
  //
  // Each parameter draws from its own stream derived from (seed, parameter
  // id), so one parameter's values never depend on how many others exist.
  static AccordionModel build(const ArchSpec& spec, std::uint64_t seed) {
    spec.validate();
    AccordionModel m;
    m.spec_ = spec;
    m.seed_ = seed;
    RngState root(seed);
    auto he = [&](const std::string& id, std::size_t rows, std::size_t cols, std::size_t fan_in,
                  double scale = 1.0) {
      RngState r = root.derive(detail::fnv1a64(id));
      Tensor t({rows, cols});
      const double std_dev = scale * std::sqrt(2.0 / static_cast<double>(fan_in));
      for (std::size_t i = 0; i < t.size(); ++i)
        t[i] = static_cast<float>(r.normal() * std_dev);
      return t;
    };
    const double w1_damp = 1.0 / std::sqrt(static_cast<double>(spec.total_units()));
    m.params_.add(stem_w_id(), he(stem_w_id(), spec.block_widths[0], spec.input_dim,
                                  std::max(spec.input_dim, spec.block_widths[0])));
    m.params_.add(stem_b_id(), Tensor::vector(spec.block_widths[0]));
    for (std::size_t b = 0; b < spec.blocks(); ++b) {
      const std::size_t w = spec.block_widths[b];
      for (std::size_t u = 0; u < spec.units_per_block; ++u) {
        UnitId id{b, u};
        m.params_.add(unit_param_id(id, "w1"), he(unit_param_id(id, "w1"), w, w, w, w1_damp));
        m.params_.add(unit_param_id(id, "b1"), Tensor::vector(w));
        m.params_.add(unit_param_id(id, "w2"), Tensor({w, w}));
        m.params_.add(unit_param_id(id, "b2"), Tensor::vector(w));
      }
    }
    const std::size_t last_w = spec.block_widths.back();
    m.params_.add(head_w_id(), Tensor({spec.num_classes, last_w}));
    m.params_.add(head_b_id(), Tensor::vector(spec.num_classes));

    // Transitions: identity when widths match, pairwise average pooling when
    // the width exactly halves, otherwise a fixed seeded random projection.
    // None of these carry trainable parameters.
    for (std::size_t t = 0; t + 1 < spec.blocks(); ++t) {
      const std::size_t win = spec.block_widths[t], wout = spec.block_widths[t + 1];
      TransitionDesc d;
      if (win == wout) {
        d.kind = TransitionKind::identity;
      } else if (wout * 2 == win) {
        d.kind = TransitionKind::avgpool2;
      } else {
        d.kind = TransitionKind::project;
        d.seed = root.derive(detail::fnv1a64("trans" + std::to_string(t))).seed();
      }
      m.transitions_.push_back(d);
      m.trans_mats_.push_back(d.kind == TransitionKind::project
                                  ? make_projection(d.seed, wout, win)
                                  : Tensor());
      m.trans_zero_bias_.push_back(d.kind == TransitionKind::project ? Tensor::vector(wout)
                                                                     : Tensor());
    }
    return m;
  }

  // Regenerates the projection matrix for a transition from its recorded
  // seed; entries ~ N(0, 1/fan_in) so the map roughly preserves scale.
  static Tensor make_projection(std::uint64_t seed, std::size_t rows, std::size_t cols) {
    RngState r(seed);
    Tensor t({rows, cols});
    const double std_dev = std::sqrt(1.0 / static_cast<double>(cols));
    for (std::size_t i = 0; i < t.size(); ++i)
      t[i] = static_cast<float>(r.normal() * std_dev);
    return t;
  }

  const ArchSpec& spec() const { return spec_; }
  std::uint64_t seed() const { return seed_; }
  ParamSet& params() { return params_; }
  const ParamSet& params() const { return params_; }
  const std::vector<TransitionDesc>& transitions() const { return transitions_; }

  // Replace a transition (used when materializing a model from a manifest).
  void set_transition(std::size_t t, const TransitionDesc& d) {
    transitions_.at(t) = d;
    const std::size_t win = spec_.block_widths[t], wout = spec_.block_widths[t + 1];
    trans_mats_.at(t) =
        d.kind == TransitionKind::project ? make_projection(d.seed, wout, win) : Tensor();
    trans_zero_bias_.at(t) =
        d.kind == TransitionKind::project ? Tensor::vector(wout) : Tensor();
  }

  Workspace make_workspace(std::size_t batch) const { return Workspace(spec_, batch); }

  // Runs the network with only the configured units; skipped units are not
  // executed at all (their input flows through unchanged). Stem, transitions
  // and head always execute. Returns ws.logits.
  const Tensor& forward(const Tensor& x, const DepthConfig& cfg, Workspace& ws) const {
    validate_config(cfg, spec_);
    if (x.rank() != 2 || x.cols() != spec_.input_dim)
      throw ShapeError("forward: input must be [batch x input_dim]");
    if (x.rows() != ws.batch) throw ShapeError("forward: workspace batch mismatch");
    const std::size_t k = spec_.units_per_block;
    const auto counts = active_counts(cfg.scheme, cfg.n, spec_);

    dense_forward(x, params_.at(stem_w_id()).value, params_.at(stem_b_id()).value, ws.stem_pre);
    relu_forward(ws.stem_pre, ws.stem_act);
    const Tensor* cur = &ws.stem_act;

    for (std::size_t b = 0; b < spec_.blocks(); ++b) {
      for (std::size_t u = 0; u < counts[b]; ++u) {
        const std::size_t f = b * k + u;
        UnitId id{b, u};
        dense_forward(*cur, params_.at(unit_param_id(id, "w1")).value,
                      params_.at(unit_param_id(id, "b1")).value, ws.pre1[f]);
        relu_forward(ws.pre1[f], ws.h1[f]);
        dense_forward(ws.h1[f], params_.at(unit_param_id(id, "w2")).value,
                      params_.at(unit_param_id(id, "b2")).value, ws.out[f]);
        // residual add: out = unit input + branch output
        const Tensor& in = *cur;
        Tensor& out = ws.out[f];
        for (std::size_t i = 0; i < out.size(); ++i) out[i] = in[i] + out[i];
        cur = &ws.out[f];
      }
      if (b + 1 < spec_.blocks()) {
        cur = &apply_transition(b, *cur, ws);
      }
    }
    dense_forward(*cur, params_.at(head_w_id()).value, params_.at(head_b_id()).value, ws.logits);
    return ws.logits;
  }

  // Reverse pass for the same configuration; accumulates gradients into
  // params().grad for stem, head and the active units only. Caller zeroes
  // grads beforehand. `x` must be the batch given to forward, and `ws` must
  // still hold that forward's activations.
  void backward(const Tensor& x, const Tensor& dlogits, const DepthConfig& cfg,
                Workspace& ws) {
    const std::size_t k = spec_.units_per_block;
    const auto counts = active_counts(cfg.scheme, cfg.n, spec_);

    // Head: input was the last activation in the chain.
    const Tensor& head_in = chain_output(counts, ws);
    const std::size_t last_b = spec_.blocks() - 1;
    dense_backward(head_in, params_.at(head_w_id()).value, dlogits, &ws.d_out[last_b],
                   params_.at(head_w_id()).grad, params_.at(head_b_id()).grad);

    for (std::size_t bi = spec_.blocks(); bi-- > 0;) {
      if (bi + 1 < spec_.blocks()) backward_transition(bi, ws);
      for (std::size_t u = counts[bi]; u-- > 0;) {
        const std::size_t f = bi * k + u;
        UnitId id{bi, u};
        const Tensor& in = unit_input(counts, bi, u, ws);
        // d wrt branch output equals d wrt unit output
        dense_backward(ws.h1[f], params_.at(unit_param_id(id, "w2")).value, ws.d_out[bi],
                       &ws.d_h[bi], params_.at(unit_param_id(id, "w2")).grad,
                       params_.at(unit_param_id(id, "b2")).grad);
        relu_backward(ws.pre1[f], ws.d_h[bi], ws.d_pre[bi]);
        dense_backward(in, params_.at(unit_param_id(id, "w1")).value, ws.d_pre[bi],
                       &ws.d_res[bi], params_.at(unit_param_id(id, "w1")).grad,
                       params_.at(unit_param_id(id, "b1")).grad);
        // d wrt unit input = identity path + branch path
        Tensor& d = ws.d_out[bi];
        for (std::size_t i = 0; i < d.size(); ++i) d[i] = d[i] + ws.d_res[bi][i];
      }
    }
    relu_backward(ws.stem_pre, ws.d_out[0], ws.d_stem_pre);
    dense_backward(x, params_.at(stem_w_id()).value, ws.d_stem_pre, nullptr,
                   params_.at(stem_w_id()).grad, params_.at(stem_b_id()).grad);
  }

  // Marks exactly stem, head and the active units trainable.
  void set_trainable(const DepthConfig& cfg) {
    const auto counts = active_counts(cfg.scheme, cfg.n, spec_);
    params_.set_all_trainable(false);
    params_.at(stem_w_id()).trainable = true;
    params_.at(stem_b_id()).trainable = true;
    params_.at(head_w_id()).trainable = true;
    params_.at(head_b_id()).trainable = true;
    for (std::size_t b = 0; b < spec_.blocks(); ++b)
      for (std::size_t u = 0; u < counts[b]; ++u) {
        UnitId id{b, u};
        params_.at(unit_param_id(id, "w1")).trainable = true;
        params_.at(unit_param_id(id, "b1")).trainable = true;
        params_.at(unit_param_id(id, "w2")).trainable = true;
        params_.at(unit_param_id(id, "b2")).trainable = true;
      }
  }

  std::uint64_t unit_param_count(std::size_t block) const {
    const std::uint64_t w = spec_.block_widths[block];
    return 2 * (w * w + w);
  }
  std::uint64_t stem_param_count() const {
    return static_cast<std::uint64_t>(spec_.block_widths[0]) * spec_.input_dim +
           spec_.block_widths[0];
  }
  std::uint64_t head_param_count() const {
    return static_cast<std::uint64_t>(spec_.num_classes) * spec_.block_widths.back() +
           spec_.num_classes;
  }

  std::uint64_t unit_mac_count(std::size_t block) const {
    const std::uint64_t w = spec_.block_widths[block];
    return 2 * w * w;  // two dense layers per unit, per sample
  }

  // Size / compute accounting for one configuration (per-sample MACs).
  // size_bits covers stem + head + active units at bits_per_param;
  // transitions contribute zero parameters. mac_fraction compares unit MACs
  // only (stem/head/transitions run in every configuration), so with equal
  // block widths it is exactly n / (B*K).
  SizeReport size_of(const DepthConfig& cfg) const {
    validate_config(cfg, spec_);
    const auto counts = active_counts(cfg.scheme, cfg.n, spec_);
    SizeReport r;
    std::uint64_t unit_params = 0, unit_macs = 0, all_unit_params = 0, all_unit_macs = 0;
    for (std::size_t b = 0; b < spec_.blocks(); ++b) {
      unit_params += counts[b] * unit_param_count(b);
      unit_macs += counts[b] * unit_mac_count(b);
      all_unit_params += spec_.units_per_block * unit_param_count(b);
      all_unit_macs += spec_.units_per_block * unit_mac_count(b);
    }
    const std::uint64_t fixed_params = stem_param_count() + head_param_count();
    std::uint64_t fixed_macs =
        stem_param_count() - spec_.block_widths[0] + head_param_count() - spec_.num_classes;
    for (std::size_t t = 0; t + 1 < spec_.blocks(); ++t) {
      const std::size_t win = spec_.block_widths[t], wout = spec_.block_widths[t + 1];
      switch (transitions_[t].kind) {
        case TransitionKind::identity: break;
        case TransitionKind::avgpool2: fixed_macs += wout; break;
        case TransitionKind::project: fixed_macs += static_cast<std::uint64_t>(win) * wout; break;
      }
    }
    r.param_count = fixed_params + unit_params;
    r.size_bits = spec_.bits_per_param * r.param_count;
    r.mac_count = fixed_macs + unit_macs;
    r.layer_fraction =
        static_cast<double>(cfg.n) / static_cast<double>(spec_.total_units());
    const std::uint64_t full_bits = spec_.bits_per_param * (fixed_params + all_unit_params);
    r.size_fraction = static_cast<double>(r.size_bits) / static_cast<double>(full_bits);
    r.mac_fraction = all_unit_macs == 0
                         ? 1.0
                         : static_cast<double>(unit_macs) / static_cast<double>(all_unit_macs);
    return r;
  }

 private:
  // Output of the last executed stage for a given active-count vector.
  const Tensor& chain_output(const std::vector<std::size_t>& counts, Workspace& ws) const {
    const std::size_t last = spec_.blocks() - 1;
    if (spec_.blocks() > 1) {
      // a transition always runs right before the last block's units
      if (counts[last] > 0) return ws.out[last * spec_.units_per_block + counts[last] - 1];
      return transition_output(last - 1, ws);
    }
    if (counts[0] > 0) return ws.out[counts[0] - 1];
    return ws.stem_act;
  }

  // Input tensor of unit (b,u) during the forward pass with these counts.
  const Tensor& unit_input(const std::vector<std::size_t>& counts, std::size_t b, std::size_t u,
                           Workspace& ws) const {
    if (u > 0) return ws.out[b * spec_.units_per_block + u - 1];
    if (b == 0) return ws.stem_act;
    return transition_output(b - 1, ws);
  }

  // Every transition kind (identity included) materializes its output into
  // ws.trans_out, so the chain can always be resolved from counts alone.
  const Tensor& transition_output(std::size_t t, Workspace& ws) const {
    return ws.trans_out[t];
  }

  const Tensor& apply_transition(std::size_t t, const Tensor& in, Workspace& ws) const {
    Tensor& out = ws.trans_out[t];
    switch (transitions_[t].kind) {
      case TransitionKind::identity:
        for (std::size_t i = 0; i < in.size(); ++i) out[i] = in[i];
        break;
      case TransitionKind::avgpool2: {
        const std::size_t wout = spec_.block_widths[t + 1];
        for (std::size_t r = 0; r < in.rows(); ++r) {
          const float* irow = in.row(r);
          float* orow = out.row(r);
          for (std::size_t j = 0; j < wout; ++j)
            orow[j] = (irow[2 * j] + irow[2 * j + 1]) * 0.5f;
        }
        break;
      }
      case TransitionKind::project:
        dense_forward(in, trans_mats_[t], trans_zero_bias_[t], out);
        break;
    }
    return out;
  }

  // Maps d(loss)/d(transition output) in ws.d_out[t+1] to
  // d(loss)/d(transition input) in ws.d_out[t].
  void backward_transition(std::size_t t, Workspace& ws) const {
    const Tensor& dy = ws.d_out[t + 1];
    Tensor& dx = ws.d_out[t];
    switch (transitions_[t].kind) {
      case TransitionKind::identity:
        for (std::size_t i = 0; i < dy.size(); ++i) dx[i] = dy[i];
        break;
      case TransitionKind::avgpool2: {
        const std::size_t wout = spec_.block_widths[t + 1];
        for (std::size_t r = 0; r < dy.rows(); ++r) {
          const float* dyr = dy.row(r);
          float* dxr = dx.row(r);
          for (std::size_t j = 0; j < wout; ++j) {
            dxr[2 * j] = dyr[j] * 0.5f;
            dxr[2 * j + 1] = dyr[j] * 0.5f;
          }
        }
        break;
      }
      case TransitionKind::project:
        dense_backward_input(trans_mats_[t], dy, dx);
        break;
    }
  }

  static void dense_backward_input(const Tensor& w, const Tensor& dy, Tensor& dx) {
    for (std::size_t b = 0; b < dy.rows(); ++b) {
      float* dxrow = dx.row(b);
      for (std::size_t i = 0; i < dx.cols(); ++i) dxrow[i] = 0.0f;
      const float* dyrow = dy.row(b);
      for (std::size_t o = 0; o < dy.cols(); ++o) {
        const float s = dyrow[o];
        const float* wrow = w.row(o);
        for (std::size_t i = 0; i < dx.cols(); ++i) dxrow[i] += s * wrow[i];
      }
    }
  }

  ArchSpec spec_;
  std::uint64_t seed_ = 0;
  ParamSet params_;
  std::vector<TransitionDesc> transitions_;
  std::vector<Tensor> trans_mats_;
  std::vector<Tensor> trans_zero_bias_;
};

// 16-byte content identity of a model: arch descriptor digest || param digest.
// Two models agree iff both their shape text and every value byte agree.
inline std::array<std::uint8_t, 16> model_content_id(const AccordionModel& model) {
  const std::uint64_t a = detail::fnv1a64(model.spec().to_text());
  const std::uint64_t p = model.params().digest();
  std::array<std::uint8_t, 16> id{};
  for (int i = 0; i < 8; ++i) id[static_cast<std::size_t>(i)] = static_cast<std::uint8_t>(a >> (8 * i));
  for (int i = 0; i < 8; ++i) id[static_cast<std::size_t>(8 + i)] = static_cast<std::uint8_t>(p >> (8 * i));
  return id;
}

inline std::string hex_id(const std::array<std::uint8_t, 16>& id) {
  static const char* digits = "0123456789abcdef";
  std::string s;
  s.reserve(32);
  for (std::uint8_t b : id) {
    s.push_back(digits[b >> 4]);
    s.push_back(digits[b & 0xF]);
  }
  return s;
}

}  // namespace accordion
