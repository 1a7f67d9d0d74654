#pragma once

#include <cmath>
#include <cstdint>
#include <functional>
#include <map>
#include <string>
#include <vector>

#include "accordion/arch.hpp"
#include "accordion/errors.hpp"
#include "accordion/rng.hpp"

namespace accordion {

// A distribution over depth configurations, sampled once per training
// iteration. Three kinds:
//   fixed             - always the same n (n = B*K gives conventional training)
//   full_else_uniform - full model with probability p_full, otherwise n
//                       uniform on {1, ..., B*K-1}; the uniform part excludes
//                       the full model so the full-model rate is exactly p_full
//   categorical       - explicit weights over n = 1..B*K
enum class PolicyKind : std::uint8_t { fixed = 0, full_else_uniform = 1, categorical = 2 };

using SizeFn = std::function<std::uint64_t(std::size_t)>;  // n -> bits

struct DepthPolicy {
  SkipScheme scheme = SkipScheme::coml;
  PolicyKind kind = PolicyKind::fixed;
  std::size_t total_units = 0;   // B*K of the model this policy is for
  std::size_t fixed_n = 0;
  double p_full = 0.0;
  std::vector<double> weights;   // categorical only; weights[i] is P(n = i+1)

  static DepthPolicy fixed(SkipScheme scheme, std::size_t n, std::size_t total_units) {
    DepthPolicy p;
    p.scheme = scheme;
    p.kind = PolicyKind::fixed;
    p.total_units = total_units;
    p.fixed_n = n;
    p.validate();
    return p;
  }

  static DepthPolicy full_else_uniform(SkipScheme scheme, double p_full,
                                       std::size_t total_units) {
    DepthPolicy p;
    p.scheme = scheme;
    p.kind = PolicyKind::full_else_uniform;
    p.total_units = total_units;
    p.p_full = p_full;
    p.validate();
    return p;
  }

  static DepthPolicy categorical(SkipScheme scheme, std::vector<double> weights) {
    DepthPolicy p;
    p.scheme = scheme;
    p.kind = PolicyKind::categorical;
    p.total_units = weights.size();
    p.weights = std::move(weights);
    p.validate();
    return p;
  }

  void validate() const {
    if (total_units == 0) throw ConfigError("policy: total_units must be positive");
    switch (kind) {
      case PolicyKind::fixed:
        if (fixed_n < 1 || fixed_n > total_units)
          throw ConfigError("policy: fixed n must be in [1, B*K]");
        break;
      case PolicyKind::full_else_uniform:
        if (!(p_full >= 0.0 && p_full <= 1.0))
          throw ConfigError("policy: p_full must be in [0, 1]");
        break;
      case PolicyKind::categorical: {
        if (weights.size() != total_units)
          throw ConfigError("policy: need one weight per n in 1..B*K");
        double sum = 0.0;
        for (double w : weights) {
          if (w < 0.0 || !std::isfinite(w)) throw ConfigError("policy: weights must be >= 0");
          sum += w;
        }
        if (std::fabs(sum - 1.0) > 1e-9)
          throw ConfigError("policy: weights must sum to 1 (got " + std::to_string(sum) + ")");
        break;
      }
    }
  }

  // Draw one configuration. `fixed` consumes no randomness; the other kinds
  // consume draws in a fixed documented order (one uniform; full_else_uniform
  // adds one index draw on the non-full branch).
  DepthConfig sample(RngState& rng) const {
    switch (kind) {
      case PolicyKind::fixed:
        return {scheme, fixed_n};
      case PolicyKind::full_else_uniform: {
        if (rng.uniform() < p_full || total_units == 1) return {scheme, total_units};
        return {scheme, 1 + static_cast<std::size_t>(rng.uniform_index(total_units - 1))};
      }
      case PolicyKind::categorical: {
        const double u = rng.uniform();
        double acc = 0.0;
        std::size_t last_nonzero = total_units;
        for (std::size_t i = 0; i < weights.size(); ++i) {
          if (weights[i] > 0.0) last_nonzero = i + 1;
          acc += weights[i];
          if (u < acc) return {scheme, i + 1};
        }
        return {scheme, last_nonzero};  // u landed on accumulated rounding slack
      }
    }
    throw ConfigError("policy: unknown kind");
  }
};

namespace detail {
// Budget in bits from a throughput sample and a millisecond-resolution
// deadline, in exact integer arithmetic (no double rounding).
inline std::uint64_t budget_bits(std::uint64_t throughput_bps, std::uint64_t deadline_ms) {
  const unsigned __int128 p = static_cast<unsigned __int128>(throughput_bps) * deadline_ms;
  return static_cast<std::uint64_t>(p / 1000);
}

inline std::uint64_t deadline_to_ms(double deadline_s) {
  if (!(deadline_s > 0.0)) throw ConfigError("deadline must be positive");
  return static_cast<std::uint64_t>(std::llround(deadline_s * 1000.0));
}
}  // namespace detail

// Communication-driven policy: map each observed link throughput to the
// largest configuration that fits throughput*deadline, and weight each n by
// how often it was the answer. Throughputs that fit nothing land on n = 1
// (training something tiny still beats training nothing).
inline DepthPolicy policy_from_throughput(const std::vector<std::uint64_t>& throughput_bps,
                                          double deadline_s, const SizeFn& size_fn,
                                          SkipScheme scheme, std::size_t total_units) {
  if (throughput_bps.empty()) throw ConfigError("policy_from_throughput: no samples");
  const std::uint64_t ms = detail::deadline_to_ms(deadline_s);
  std::vector<double> weights(total_units, 0.0);
  for (std::uint64_t t : throughput_bps) {
    const std::uint64_t budget = detail::budget_bits(t, ms);
    std::size_t best = 0;
    for (std::size_t n = 1; n <= total_units; ++n)
      if (size_fn(n) <= budget) best = n;
    if (best == 0) best = 1;
    weights[best - 1] += 1.0;
  }
  for (double& w : weights) w /= static_cast<double>(throughput_bps.size());
  return DepthPolicy::categorical(scheme, std::move(weights));
}

// Demand-driven policy: each requested size maps to the smallest
// configuration at least that large (callers ask for "a model of about this
// size"); frequencies aggregate into categorical weights.
inline DepthPolicy policy_from_size_requests(const std::map<std::uint64_t, std::uint64_t>& histogram,
                                             const SizeFn& size_fn, SkipScheme scheme,
                                             std::size_t total_units) {
  if (histogram.empty()) throw ConfigError("policy_from_size_requests: empty histogram");
  std::vector<double> weights(total_units, 0.0);
  double total = 0.0;
  for (const auto& [size_bits, freq] : histogram) {
    std::size_t pick = total_units;
    for (std::size_t n = 1; n <= total_units; ++n)
      if (size_fn(n) >= size_bits) {
        pick = n;
        break;
      }
    weights[pick - 1] += static_cast<double>(freq);
    total += static_cast<double>(freq);
  }
  if (total == 0.0) throw ConfigError("policy_from_size_requests: zero total frequency");
  for (double& w : weights) w /= total;
  return DepthPolicy::categorical(scheme, std::move(weights));
}

// Named presets accepted on the command line: "<scheme>-05" / "<scheme>-03"
// train the full model half / 30% of the time, "baseline" always trains the
// full model.
inline DepthPolicy parse_policy(const std::string& name, std::size_t total_units) {
  if (name == "baseline") return DepthPolicy::fixed(SkipScheme::coml, total_units, total_units);
  const auto dash = name.rfind('-');
  if (dash != std::string::npos) {
    const std::string scheme = name.substr(0, dash), suffix = name.substr(dash + 1);
    double p = -1.0;
    if (suffix == "05") p = 0.5;
    if (suffix == "03") p = 0.3;
    if (p >= 0.0 && (scheme == "coml" || scheme == "blockcoml"))
      return DepthPolicy::full_else_uniform(parse_scheme(scheme), p, total_units);
  }
  throw ConfigError("unknown policy '" + name +
                    "' (expected coml-05|coml-03|blockcoml-05|blockcoml-03|baseline)");
}

inline std::string policy_name(const DepthPolicy& p) {
  if (p.kind == PolicyKind::fixed && p.fixed_n == p.total_units) return "baseline";
  if (p.kind == PolicyKind::full_else_uniform) {
    if (p.p_full == 0.5) return to_string(p.scheme) + "-05";
    if (p.p_full == 0.3) return to_string(p.scheme) + "-03";
  }
  return to_string(p.scheme) + "-custom";
}

}  // namespace accordion
