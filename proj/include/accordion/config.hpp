#pragma once

#include <cmath>
#include <cstdint>
#include <optional>
#include <sstream>
#include <string>
#include <utility>
#include <vector>

#include "accordion/arch.hpp"
#include "accordion/dataset.hpp"
#include "accordion/errors.hpp"
#include "accordion/policy.hpp"
#include "accordion/protocol.hpp"
#include "accordion/train.hpp"

namespace accordion {

// Text configuration for a full experiment run. The file format is flat
// "key = value" lines; '#' starts a comment, blank lines are ignored. Parsing
// accepts keys in any order (missing keys keep their defaults, duplicates and
// unknown keys are rejected); emitting always writes every key once, in a
// fixed order, with canonical number formatting — so emit(parse(text)) is a
// normal form and parse(emit(c)) == c.

namespace detail {

// Shortest default-format decimal that parses back to exactly `v`.
inline std::string fmt_double(double v) {
  if (v == std::floor(v) && std::abs(v) < 1e15)
    return std::to_string(static_cast<long long>(v));
  for (int prec = 1; prec <= 17; ++prec) {
    std::ostringstream o;
    o.precision(prec);
    o << v;
    if (std::stod(o.str()) == v) return o.str();
  }
  std::ostringstream o;
  o.precision(17);
  o << v;
  return o.str();
}

inline std::vector<std::pair<std::string, std::string>> parse_kv(const std::string& text) {
  std::vector<std::pair<std::string, std::string>> pairs;
  std::istringstream in(text);
  std::string line;
  while (std::getline(in, line)) {
    if (!line.empty() && line.back() == '\r') line.pop_back();
    const std::size_t hash = line.find('#');
    if (hash != std::string::npos) line.erase(hash);
    const std::size_t first = line.find_first_not_of(" \t");
    if (first == std::string::npos) continue;
    line = line.substr(first, line.find_last_not_of(" \t") - first + 1);
    const std::size_t sep = line.find(" = ");
    if (sep == std::string::npos)
      throw ConfigError("config line '" + line + "' is not 'key = value'");
    pairs.emplace_back(line.substr(0, sep), line.substr(sep + 3));
  }
  return pairs;
}

template <typename T>
inline T parse_uint(const std::string& key, const std::string& val) {
  try {
    std::size_t used = 0;
    const unsigned long long v = std::stoull(val, &used);
    if (used != val.size()) throw ConfigError("");
    return static_cast<T>(v);
  } catch (const std::exception&) {
    throw ConfigError("config: '" + key + "' needs a non-negative integer, got '" + val + "'");
  }
}

inline double parse_double(const std::string& key, const std::string& val) {
  try {
    std::size_t used = 0;
    const double v = std::stod(val, &used);
    if (used != val.size()) throw ConfigError("");
    return v;
  } catch (const std::exception&) {
    throw ConfigError("config: '" + key + "' needs a number, got '" + val + "'");
  }
}

inline std::string kind_to_text(PolicyKind k) {
  switch (k) {
    case PolicyKind::fixed: return "fixed";
    case PolicyKind::full_else_uniform: return "full_else_uniform";
    case PolicyKind::categorical: return "categorical";
  }
  throw ConfigError("unknown policy kind");
}

inline PolicyKind kind_from_text(const std::string& s) {
  if (s == "fixed") return PolicyKind::fixed;
  if (s == "full_else_uniform") return PolicyKind::full_else_uniform;
  throw ConfigError("config: policy_kind must be 'fixed' or 'full_else_uniform', got '" + s +
                    "' (categorical policies are built programmatically)");
}

}  // namespace detail

struct ExperimentConfig {
  // architecture
  ArchSpec arch;

  // dataset
  std::string generator = "spirals";
  std::size_t train_samples = 6000;
  std::size_t val_samples = 1000;
  std::size_t test_samples = 1000;
  double noise_sigma = 0.06;
  double label_flip_p = 0.02;
  std::uint64_t data_seed = 0;

  // optimization
  std::size_t epochs = 60;
  std::size_t batch_size = 124;
  double lr_initial = 0.1;
  std::vector<std::pair<std::size_t, double>> lr_drops = {{30, 10.0}, {45, 10.0}};
  double momentum = 0.9;
  double weight_decay = 1e-4;

  // depth policy: fixed always trains the full depth; full_else_uniform
  // trains full with probability p_full, else a uniformly random prefix.
  SkipScheme policy_scheme = SkipScheme::coml;
  PolicyKind policy_kind = PolicyKind::full_else_uniform;
  double p_full = 0.5;

  // run identity and outputs
  std::uint64_t seed = 0;
  std::string out_dir = ".";

  bool operator==(const ExperimentConfig&) const = default;

  SpiralSpec spiral_spec() const {
    SpiralSpec s;
    s.num_classes = arch.num_classes;
    s.train = train_samples;
    s.val = val_samples;
    s.test = test_samples;
    s.noise_sigma = noise_sigma;
    s.label_flip_p = label_flip_p;
    return s;
  }

  DepthPolicy policy() const {
    switch (policy_kind) {
      case PolicyKind::fixed:
        return DepthPolicy::fixed(policy_scheme, arch.total_units(), arch.total_units());
      case PolicyKind::full_else_uniform:
        return DepthPolicy::full_else_uniform(policy_scheme, p_full, arch.total_units());
      default:
        throw ConfigError("config: unsupported policy kind");
    }
  }

  TrainConfig train_config() const {
    TrainConfig t;
    t.epochs = epochs;
    t.batch_size = batch_size;
    t.lr.initial = lr_initial;
    t.lr.drops = lr_drops;
    t.momentum = momentum;
    t.weight_decay = weight_decay;
    t.policy = policy();
    t.seed = seed;
    return t;
  }

  // Adopt a named policy: baseline, coml-05, coml-03, blockcoml-05,
  // blockcoml-03 (the -NN suffix is the percent trained at full depth).
  void set_policy(const std::string& name) {
    const DepthPolicy p = parse_policy(name, std::max<std::size_t>(arch.total_units(), 1));
    policy_scheme = p.scheme;
    policy_kind = p.kind;
    p_full = p.p_full;
  }

  void validate() const {
    if (generator != "spirals")
      throw ConfigError("config: unknown generator '" + generator + "'");
    arch.validate();
    spiral_spec().validate();
    train_config().validate();
  }

  std::string to_text() const {
    std::string s;
    auto kv = [&s](const std::string& k, const std::string& v) { s += k + " = " + v + "\n"; };
    kv("generator", generator);
    kv("input_dim", std::to_string(arch.input_dim));
    kv("num_classes", std::to_string(arch.num_classes));
    kv("units_per_block", std::to_string(arch.units_per_block));
    std::string widths;
    for (std::size_t i = 0; i < arch.block_widths.size(); ++i)
      widths += (i ? "," : "") + std::to_string(arch.block_widths[i]);
    kv("block_widths", widths);
    kv("bits_per_param", std::to_string(arch.bits_per_param));
    kv("train_samples", std::to_string(train_samples));
    kv("val_samples", std::to_string(val_samples));
    kv("test_samples", std::to_string(test_samples));
    kv("noise_sigma", detail::fmt_double(noise_sigma));
    kv("label_flip_p", detail::fmt_double(label_flip_p));
    kv("data_seed", std::to_string(data_seed));
    kv("epochs", std::to_string(epochs));
    kv("batch_size", std::to_string(batch_size));
    kv("lr_initial", detail::fmt_double(lr_initial));
    std::string drops;
    for (std::size_t i = 0; i < lr_drops.size(); ++i)
      drops += (i ? "," : "") + std::to_string(lr_drops[i].first) + ":" +
               detail::fmt_double(lr_drops[i].second);
    kv("lr_drops", drops);
    kv("momentum", detail::fmt_double(momentum));
    kv("weight_decay", detail::fmt_double(weight_decay));
    kv("policy_scheme", to_string(policy_scheme));
    kv("policy_kind", detail::kind_to_text(policy_kind));
    kv("p_full", detail::fmt_double(p_full));
    kv("seed", std::to_string(seed));
    kv("out_dir", out_dir);
    return s;
  }

  static ExperimentConfig from_text(const std::string& text) {
    ExperimentConfig c;
    std::vector<std::string> seen;
    for (const auto& [key, val] : detail::parse_kv(text)) {
      for (const std::string& k : seen)
        if (k == key) throw ConfigError("config: duplicate key '" + key + "'");
      seen.push_back(key);
      if (key == "generator") c.generator = val;
      else if (key == "input_dim") c.arch.input_dim = detail::parse_uint<std::size_t>(key, val);
      else if (key == "num_classes") c.arch.num_classes = detail::parse_uint<std::size_t>(key, val);
      else if (key == "units_per_block")
        c.arch.units_per_block = detail::parse_uint<std::size_t>(key, val);
      else if (key == "block_widths") {
        c.arch.block_widths.clear();
        std::istringstream ws(val);
        std::string tok;
        while (std::getline(ws, tok, ','))
          c.arch.block_widths.push_back(detail::parse_uint<std::size_t>(key, tok));
      } else if (key == "bits_per_param")
        c.arch.bits_per_param = detail::parse_uint<std::size_t>(key, val);
      else if (key == "train_samples") c.train_samples = detail::parse_uint<std::size_t>(key, val);
      else if (key == "val_samples") c.val_samples = detail::parse_uint<std::size_t>(key, val);
      else if (key == "test_samples") c.test_samples = detail::parse_uint<std::size_t>(key, val);
      else if (key == "noise_sigma") c.noise_sigma = detail::parse_double(key, val);
      else if (key == "label_flip_p") c.label_flip_p = detail::parse_double(key, val);
      else if (key == "data_seed") c.data_seed = detail::parse_uint<std::uint64_t>(key, val);
      else if (key == "epochs") c.epochs = detail::parse_uint<std::size_t>(key, val);
      else if (key == "batch_size") c.batch_size = detail::parse_uint<std::size_t>(key, val);
      else if (key == "lr_initial") c.lr_initial = detail::parse_double(key, val);
      else if (key == "lr_drops") {
        c.lr_drops.clear();
        std::istringstream ds(val);
        std::string tok;
        while (std::getline(ds, tok, ',')) {
          const std::size_t colon = tok.find(':');
          if (colon == std::string::npos)
            throw ConfigError("config: lr_drops entries are 'epoch:divisor', got '" + tok + "'");
          c.lr_drops.emplace_back(detail::parse_uint<std::size_t>(key, tok.substr(0, colon)),
                                  detail::parse_double(key, tok.substr(colon + 1)));
        }
      } else if (key == "momentum") c.momentum = detail::parse_double(key, val);
      else if (key == "weight_decay") c.weight_decay = detail::parse_double(key, val);
      else if (key == "policy_scheme") c.policy_scheme = parse_scheme(val);
      else if (key == "policy_kind") c.policy_kind = detail::kind_from_text(val);
      else if (key == "p_full") c.p_full = detail::parse_double(key, val);
      else if (key == "seed") c.seed = detail::parse_uint<std::uint64_t>(key, val);
      else if (key == "out_dir") c.out_dir = val;
      else throw ConfigError("config: unknown key '" + key + "'");
    }
    c.validate();
    return c;
  }
};

// A transfer-simulation scenario: which model and table the endpoint serves,
// what the client asks for, the link the exchange rides on, and any upgrade
// goals issued after the initial transfer completes. Parse-only (scenarios
// are inputs, not artifacts).
struct ScenarioSpec {
  std::string model_path;
  std::string table_path;
  SkipScheme scheme = SkipScheme::coml;
  std::uint64_t deadline_ms = 0;
  std::uint64_t throughput_bps = 0;
  std::uint64_t rtt_ms = 0;
  std::optional<double> max_error;
  std::vector<UpgradeGoal> upgrades;

  FetchRequirements requirements() const {
    FetchRequirements r;
    r.scheme = scheme;
    r.deadline_ms = deadline_ms;
    r.throughput_bps = throughput_bps;
    r.rtt_ms = rtt_ms;
    r.max_error = max_error;
    return r;
  }

  LinkModel link() const {
    return LinkModel{throughput_bps, static_cast<double>(rtt_ms) / 1000.0};
  }

  void validate() const {
    if (model_path.empty()) throw ConfigError("scenario: 'model' path is required");
    if (table_path.empty()) throw ConfigError("scenario: 'table' path is required");
    if (deadline_ms == 0) throw ConfigError("scenario: deadline_ms must be positive");
    if (throughput_bps == 0) throw ConfigError("scenario: throughput_bps must be positive");
    if (max_error && (*max_error < 0.0 || *max_error > 1.0))
      throw ConfigError("scenario: max_error must lie in [0, 1]");
    for (const UpgradeGoal& g : upgrades)
      if (g.target_n.has_value() == g.target_error.has_value())
        throw ConfigError("scenario: each upgrade needs exactly one of n:/error:");
  }

  static ScenarioSpec from_text(const std::string& text) {
    ScenarioSpec s;
    std::vector<std::string> seen;
    for (const auto& [key, val] : detail::parse_kv(text)) {
      for (const std::string& k : seen)
        if (k == key) throw ConfigError("scenario: duplicate key '" + key + "'");
      seen.push_back(key);
      if (key == "model") s.model_path = val;
      else if (key == "table") s.table_path = val;
      else if (key == "scheme") s.scheme = parse_scheme(val);
      else if (key == "deadline_ms") s.deadline_ms = detail::parse_uint<std::uint64_t>(key, val);
      else if (key == "throughput_bps")
        s.throughput_bps = detail::parse_uint<std::uint64_t>(key, val);
      else if (key == "rtt_ms") s.rtt_ms = detail::parse_uint<std::uint64_t>(key, val);
      else if (key == "max_error") s.max_error = detail::parse_double(key, val);
      else if (key == "upgrades") {
        std::istringstream us(val);
        std::string tok;
        while (std::getline(us, tok, ',')) {
          const std::size_t colon = tok.find(':');
          if (colon == std::string::npos)
            throw ConfigError("scenario: upgrades entries are 'n:<units>' or 'error:<rate>'");
          const std::string tag = tok.substr(0, colon), num = tok.substr(colon + 1);
          UpgradeGoal g;
          if (tag == "n") g.target_n = detail::parse_uint<std::uint32_t>(key, num);
          else if (tag == "error") g.target_error = detail::parse_double(key, num);
          else throw ConfigError("scenario: unknown upgrade kind '" + tag + "'");
          s.upgrades.push_back(g);
        }
      } else throw ConfigError("scenario: unknown key '" + key + "'");
    }
    s.validate();
    return s;
  }
};

}  // namespace accordion
