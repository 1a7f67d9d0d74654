#pragma once

// Command-line harness: reproducible experiments from text configs.
//   gen-data       write a synthetic spiral dataset file
//   train          train a depth-elastic model, write model + report
//   profile        measure every depth configuration into a CSV table
//   serve          serve a model + table over TCP
//   fetch          negotiate and download a model fitting a link budget
//   simulate       run a transfer scenario on a modeled link, write the log
//   export-curves  aggregate profile tables from several runs into mean/std
//
// Exit codes: 0 success; 2 bad configuration, arguments, or input files;
// 3 no depth configuration satisfies the stated budget or target;
// 4 integrity or protocol violation (corrupt file, misbehaving peer).

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <map>
#include <optional>
#include <sstream>
#include <string>
#include <utility>
#include <vector>

#include "CLI11.hpp"
#include "accordion/config.hpp"
#include "accordion/tcp.hpp"

namespace accordion::cli {

namespace detail {

inline int exit_code_for_current_exception() {
  try {
    throw;
  } catch (const ConfigError& e) {
    std::cerr << "accordion: " << e.what() << "\n";
    return 2;
  } catch (const InfeasibleError& e) {
    std::cerr << "accordion: " << e.what() << "\n";
    return 3;
  } catch (const UnreachableError& e) {
    std::cerr << "accordion: " << e.what() << "\n";
    return 3;
  } catch (const IntegrityError& e) {
    std::cerr << "accordion: " << e.what() << "\n";
    return 4;
  } catch (const VersionError& e) {
    std::cerr << "accordion: " << e.what() << "\n";
    return 4;
  } catch (const ProtocolError& e) {
    std::cerr << "accordion: " << e.what() << "\n";
    return 4;
  } catch (const NotFoundError& e) {
    std::cerr << "accordion: " << e.what() << "\n";
    return 4;
  } catch (const std::exception& e) {
    std::cerr << "accordion: unexpected error: " << e.what() << "\n";
    return 1;
  }
}

inline std::string slurp(const std::string& path) {
  try {
    return read_file(path);
  } catch (const NotFoundError& e) {
    throw ConfigError(e.what());  // a missing input path is a usage error
  }
}

// Load a container and require every chunk: serving and profiling need the
// complete parameter set, not a prefix.
inline AccordionModel load_full_model(const std::string& path) {
  LoadedContainer lc = read_container(path);
  PartialModel pm = assemble(lc.manifest, lc.chunks);
  if (!pm.complete())
    throw ConfigError("'" + path + "' holds a partial model; this command needs all chunks");
  return pm.model();
}

inline std::pair<std::string, std::uint16_t> split_host_port(const std::string& addr) {
  const std::size_t colon = addr.rfind(':');
  if (colon == std::string::npos || colon == 0 || colon + 1 == addr.size())
    throw ConfigError("address '" + addr + "' is not host:port");
  const std::string host = addr.substr(0, colon);
  unsigned long port = 0;
  try {
    std::size_t used = 0;
    port = std::stoul(addr.substr(colon + 1), &used);
    if (used != addr.size() - colon - 1) throw ConfigError("");
  } catch (const std::exception&) {
    throw ConfigError("address '" + addr + "' has a malformed port");
  }
  if (port > 65535) throw ConfigError("port " + std::to_string(port) + " out of range");
  return {host, static_cast<std::uint16_t>(port)};
}

inline void ensure_parent_dir(const std::string& path) {
  const std::filesystem::path p(path);
  if (p.has_parent_path() && !p.parent_path().empty()) {
    std::error_code ec;
    std::filesystem::create_directories(p.parent_path(), ec);
    if (ec) throw ConfigError("cannot create directory for '" + path + "': " + ec.message());
  }
}

// Options shared by config-driven commands, applied over the loaded file.
struct ConfigOverrides {
  std::string config_path;
  std::optional<std::uint64_t> seed;
  std::optional<std::string> out;
  std::optional<std::string> policy;
  std::optional<std::string> scheme;
  std::optional<double> p_full;

  ExperimentConfig resolve() const {
    ExperimentConfig c;
    if (!config_path.empty()) c = ExperimentConfig::from_text(slurp(config_path));
    if (policy) c.set_policy(*policy);
    if (scheme) c.policy_scheme = parse_scheme(*scheme);
    if (p_full) {
      c.policy_kind = PolicyKind::full_else_uniform;
      c.p_full = *p_full;
    }
    if (seed) c.seed = *seed;
    if (out) c.out_dir = *out;
    c.validate();
    return c;
  }
};

}  // namespace detail

// ---------------------------------------------------------------------------
// Commands

inline int cmd_gen_data(const detail::ConfigOverrides& opts, const std::string& out_path) {
  ExperimentConfig cfg = opts.resolve();
  const std::uint64_t seed = opts.seed ? *opts.seed : cfg.data_seed;
  const DataBundle bundle = make_spirals(cfg.spiral_spec(), seed);
  detail::ensure_parent_dir(out_path);
  save_dataset(bundle, out_path);
  std::cout << "wrote " << out_path << ": train=" << bundle.spec.train
            << " val=" << bundle.spec.val << " test=" << bundle.spec.test
            << " classes=" << bundle.spec.num_classes << " seed=" << seed << "\n";
  return 0;
}

inline int cmd_train(const detail::ConfigOverrides& opts) {
  ExperimentConfig cfg = opts.resolve();
  const DataBundle bundle = make_spirals(cfg.spiral_spec(), cfg.data_seed);
  AccordionModel model = AccordionModel::build(cfg.arch, cfg.seed);
  const TrainConfig tc = cfg.train_config();

  std::filesystem::create_directories(cfg.out_dir);
  const TrainReport report = train(model, bundle.train, bundle.val, tc);

  const std::string model_path = cfg.out_dir + "/model.acdn";
  const SerializedModel sm =
      serialize(model, {cfg.policy_scheme, cfg.arch.total_units()});
  write_container(model_path, sm.manifest, sm.chunks);
  write_train_csv(report, cfg.out_dir + "/train_report.csv");
  write_file(cfg.out_dir + "/config.txt", cfg.to_text());

  const EpochStats& last = report.epochs.back();
  std::cout << "trained " << policy_name(tc.policy) << " for " << cfg.epochs << " epochs ("
            << report.iterations << " iterations)\n"
            << "final val error " << last.val_error << ", params " << hex_id(sm.manifest.model_id)
            << "\n"
            << "wrote " << model_path << "\n";
  return 0;
}

inline int cmd_profile(const std::string& model_path, const std::string& data_path,
                       const std::string& out_path) {
  const AccordionModel model = detail::load_full_model(model_path);
  const std::string raw = detail::slurp(data_path);
  const DataBundle bundle = dataset_from_bytes(raw);
  if (bundle.spec.num_classes != model.spec().num_classes)
    throw ConfigError("dataset has " + std::to_string(bundle.spec.num_classes) +
                      " classes but the model expects " +
                      std::to_string(model.spec().num_classes));

  // Error rates are measured on the validation split; test stays held out.
  char dataset_id[32];
  std::snprintf(dataset_id, sizeof dataset_id, "%016llx",
                static_cast<unsigned long long>(accordion::detail::fnv1a64(raw)));
  const ProfileTable table = build_table(
      model, {SkipScheme::coml, SkipScheme::blockcoml}, bundle.val, dataset_id, "");
  detail::ensure_parent_dir(out_path);
  write_table_csv(table, out_path);
  std::cout << "profiled " << table.entries.size() << " configurations of "
            << hex_id(table.model_id) << " into " << out_path << "\n";
  return 0;
}

inline int cmd_serve(const std::string& model_path, const std::string& table_path,
                     const std::string& listen, std::size_t max_sessions) {
  const AccordionModel model = detail::load_full_model(model_path);
  const ProfileTable table = read_table_csv(table_path);
  const Endpoint endpoint(model, table);
  const auto [host, port] = detail::split_host_port(listen);
  TcpServer server(endpoint, host, port);
  std::cout << "listening on " << host << ":" << server.port() << std::endl;
  server.run(max_sessions);
  std::cout << "served " << max_sessions << " session(s), shutting down\n";
  return 0;
}

inline int cmd_fetch(const std::string& connect, const std::string& out_path,
                     const FetchRequirements& req,
                     const std::vector<UpgradeGoal>& upgrades) {
  const auto [host, port] = detail::split_host_port(connect);
  const FetchSession session = fetch_tcp(host, port, req, upgrades);

  std::vector<LayerChunk> chunks = session.received_chunks();
  std::sort(chunks.begin(), chunks.end(),
            [](const LayerChunk& a, const LayerChunk& b) { return a.index < b.index; });
  detail::ensure_parent_dir(out_path);
  write_container(out_path, session.offer().manifest, chunks);

  const std::size_t total = session.offer().manifest.table.size() - 3;
  std::cout << "fetched n=" << session.delivered_n() << "/" << total
            << " predicted_error=" << session.offer().predicted_error
            << " predicted_ms=" << session.offer().predicted_transfer_ms
            << " accuracy_met=" << (session.offer().accuracy_met ? "true" : "false") << "\n"
            << "wrote " << out_path << "\n";
  return 0;
}

inline int cmd_simulate(const std::string& scenario_path, const std::string& out_path) {
  const ScenarioSpec spec = ScenarioSpec::from_text(detail::slurp(scenario_path));
  const AccordionModel model = detail::load_full_model(spec.model_path);
  const ProfileTable table = read_table_csv(spec.table_path);
  const Endpoint endpoint(model, table);

  SimScenario scenario;
  scenario.requirements = spec.requirements();
  scenario.link = spec.link();
  scenario.upgrades = spec.upgrades;
  const SessionLog log = simulate_session(endpoint, scenario);

  detail::ensure_parent_dir(out_path);
  write_file(out_path, session_log_to_csv(log));
  std::cout << "simulated " << log.events.size() << " events: final_n=" << log.final_n
            << " time_s=" << log.final_time_s << " clock_bits=" << log.clock_bits
            << " failed=" << (log.failed ? "true" : "false") << "\n"
            << "wrote " << out_path << "\n";
  return 0;
}

inline int cmd_export_curves(const std::vector<std::string>& inputs, const std::string& out_path,
                             const std::string& policy_label) {
  struct Cell {
    std::uint64_t size_bits = 0;
    double layer_fraction = 0.0;
    std::vector<double> errors;
  };
  std::map<std::pair<int, std::size_t>, Cell> cells;  // (scheme, n) -> runs

  for (const std::string& path : inputs) {
    const ProfileTable t = table_from_csv(detail::slurp(path));
    for (const ProfileEntry& e : t.entries) {
      Cell& c = cells[{static_cast<int>(e.scheme), e.n}];
      if (c.errors.empty()) {
        c.size_bits = e.size_bits;
        c.layer_fraction = e.layer_fraction;
      } else if (c.size_bits != e.size_bits) {
        throw ConfigError("tables disagree on the size of " + to_string(e.scheme) + " n=" +
                          std::to_string(e.n) + " — were they built for the same architecture?");
      }
      c.errors.push_back(e.error_rate);
    }
  }
  for (const auto& [key, cell] : cells)
    if (cell.errors.size() != inputs.size())
      throw ConfigError("configuration " + to_string(static_cast<SkipScheme>(key.first)) + " n=" +
                        std::to_string(key.second) + " is missing from some input tables");

  std::ostringstream out;
  out.precision(17);
  out << "scheme,policy,n,size_bits,layer_fraction,error_mean,error_std\n";
  for (const auto& [key, cell] : cells) {
    double mean = 0.0;
    for (double e : cell.errors) mean += e;
    mean /= static_cast<double>(cell.errors.size());
    double var = 0.0;  // population variance: a single run has spread zero
    for (double e : cell.errors) var += (e - mean) * (e - mean);
    var /= static_cast<double>(cell.errors.size());
    out << to_string(static_cast<SkipScheme>(key.first)) << ',' << policy_label << ','
        << key.second << ',' << cell.size_bits << ',' << cell.layer_fraction << ',' << mean << ','
        << std::sqrt(var) << "\n";
  }
  detail::ensure_parent_dir(out_path);
  write_file(out_path, out.str());
  std::cout << "aggregated " << inputs.size() << " run(s), " << cells.size()
            << " configurations into " << out_path << "\n";
  return 0;
}

// ---------------------------------------------------------------------------
// Argument wiring

inline int run(int argc, char** argv) {
  CLI::App app{"accordion: train, profile, and transfer depth-elastic models"};
  app.require_subcommand(1);

  detail::ConfigOverrides overrides;
  std::string out_path, model_path, data_path, table_path, scenario_path;
  std::string listen = "127.0.0.1:9200", connect, scheme = "coml", policy_label;
  std::vector<std::string> curve_inputs;
  std::uint64_t seed = 0, deadline_ms = 0, throughput_bps = 0, rtt_ms = 0;
  double p_full = 0.5, max_error = -1.0;
  std::size_t max_sessions = 0;
  std::vector<std::uint64_t> upgrade_n;
  std::vector<double> upgrade_error;

  auto add_config_opts = [&](CLI::App* sub, bool with_policy) {
    sub->add_option("--config", overrides.config_path, "experiment config file");
    sub->add_option("--seed", seed, "override the run seed");
    if (with_policy) {
      sub->add_option("--policy", "named depth policy: baseline, coml-05, coml-03, "
                                  "blockcoml-05, blockcoml-03");
      sub->add_option("--scheme", scheme, "skip scheme: coml or blockcoml");
      sub->add_option("--p-full", p_full, "probability of training the full depth");
    }
  };

  CLI::App* gen = app.add_subcommand("gen-data", "write a synthetic spiral dataset");
  add_config_opts(gen, false);
  gen->add_option("--out", out_path, "output dataset file")->required();

  CLI::App* tr = app.add_subcommand("train", "train a model from a config");
  add_config_opts(tr, true);
  tr->add_option("--out", "output directory for model.acdn and reports");

  CLI::App* prof = app.add_subcommand("profile", "build the per-configuration table");
  prof->add_option("model", model_path, "trained .acdn model")->required();
  prof->add_option("data", data_path, "dataset file (validation split is used)")->required();
  prof->add_option("--out", out_path, "output table CSV")->required();

  CLI::App* srv = app.add_subcommand("serve", "serve a model and its table over TCP");
  srv->add_option("model", model_path, "trained .acdn model")->required();
  srv->add_option("table", table_path, "profile table CSV")->required();
  srv->add_option("--listen", listen, "host:port to bind (port 0 picks one)");
  srv->add_option("--max-sessions", max_sessions, "exit after this many sessions (0: run forever)")
      ->group("");  // hidden: used by tests and smoke scripts

  CLI::App* ftc = app.add_subcommand("fetch", "download a model that fits a link budget");
  ftc->add_option("--connect", connect, "server host:port")->required();
  ftc->add_option("--out", out_path, "output .acdn file")->required();
  ftc->add_option("--scheme", scheme, "skip scheme to request");
  ftc->add_option("--deadline-ms", deadline_ms, "transfer deadline in ms")->required();
  ftc->add_option("--throughput-bps", throughput_bps, "measured link throughput, bits/s")
      ->required();
  ftc->add_option("--max-error", max_error, "accuracy cap: highest acceptable error rate");
  ftc->add_option("--rtt-ms", rtt_ms, "measured round-trip time in ms")->group("");
  ftc->add_option("--upgrade-n", upgrade_n, "after the fetch, upgrade to this depth")->group("");
  ftc->add_option("--upgrade-error", upgrade_error, "after the fetch, upgrade to this error")
      ->group("");

  CLI::App* sim = app.add_subcommand("simulate", "run a transfer scenario on a modeled link");
  sim->add_option("scenario", scenario_path, "scenario file")->required();
  sim->add_option("--out", out_path, "output session log CSV")->required();

  CLI::App* exp = app.add_subcommand("export-curves", "aggregate run tables into mean/std");
  exp->add_option("tables", curve_inputs, "profile table CSVs, one per run")->required();
  exp->add_option("--out", out_path, "output tidy CSV")->required();
  exp->add_option("--policy", policy_label, "policy label for the output rows");

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    const int rc = app.exit(e);
    return rc == 0 ? 0 : 2;
  }

  // stash optional values only when the flag was actually given
  auto opt_u64 = [](CLI::App* sub, const char* name,
                    std::uint64_t& v) -> std::optional<std::uint64_t> {
    return sub->count(name) ? std::optional<std::uint64_t>(v) : std::nullopt;
  };

  try {
    if (gen->parsed()) {
      overrides.seed = opt_u64(gen, "--seed", seed);
      return cmd_gen_data(overrides, out_path);
    }
    if (tr->parsed()) {
      overrides.seed = opt_u64(tr, "--seed", seed);
      if (tr->count("--out")) overrides.out = tr->get_option("--out")->as<std::string>();
      if (tr->count("--policy")) overrides.policy = tr->get_option("--policy")->as<std::string>();
      if (tr->count("--scheme")) overrides.scheme = scheme;
      if (tr->count("--p-full")) overrides.p_full = p_full;
      return cmd_train(overrides);
    }
    if (prof->parsed()) return cmd_profile(model_path, data_path, out_path);
    if (srv->parsed()) return cmd_serve(model_path, table_path, listen, max_sessions);
    if (ftc->parsed()) {
      FetchRequirements req;
      req.scheme = parse_scheme(scheme);
      req.deadline_ms = deadline_ms;
      req.throughput_bps = throughput_bps;
      req.rtt_ms = rtt_ms;
      if (ftc->count("--max-error")) req.max_error = max_error;
      std::vector<UpgradeGoal> goals;
      for (std::uint64_t n : upgrade_n)
        goals.push_back(UpgradeGoal{static_cast<std::uint32_t>(n), {}});
      for (double e : upgrade_error) goals.push_back(UpgradeGoal{{}, e});
      return cmd_fetch(connect, out_path, req, goals);
    }
    if (sim->parsed()) return cmd_simulate(scenario_path, out_path);
    if (exp->parsed()) return cmd_export_curves(curve_inputs, out_path, policy_label);
    std::cerr << "accordion: no command given (try --help)\n";
    return 2;
  } catch (...) {
    return detail::exit_code_for_current_exception();
  }
}

}  // namespace accordion::cli
