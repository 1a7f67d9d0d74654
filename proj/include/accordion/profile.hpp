#pragma once
// Configuration lookup table: maps every (scheme, kept-units) pair of a
// trained model to its transfer size, compute cost, and measured error, and
// answers the endpoint's selection queries (fit a byte budget, hit an error
// target, fit a link budget).

#include <algorithm>
#include <array>
#include <cctype>
#include <cstdint>
#include <fstream>
#include <sstream>
#include <string>
#include <vector>

#include "accordion/arch.hpp"
#include "accordion/errors.hpp"
#include "accordion/policy.hpp"
#include "accordion/train.hpp"

namespace accordion {

struct ProfileEntry {
  SkipScheme scheme = SkipScheme::coml;
  std::size_t n = 0;  // kept units
  std::uint64_t size_bits = 0;
  std::uint64_t mac_count = 0;
  double layer_fraction = 0.0;
  double error_rate = 0.0;
};

struct ProfileTable {
  std::array<std::uint8_t, 16> model_id{};
  std::string dataset_id;       // provenance, free-form
  std::string built_at;         // provenance, free-form timestamp
  std::vector<ProfileEntry> entries;  // sorted by (scheme, n), one per pair

  void validate() const {
    for (std::size_t i = 1; i < entries.size(); ++i) {
      const ProfileEntry& a = entries[i - 1];
      const ProfileEntry& b = entries[i];
      if (a.scheme == b.scheme) {
        if (a.n >= b.n) throw ConfigError("profile: entries not sorted by (scheme, n)");
        if (a.size_bits >= b.size_bits)
          throw ConfigError("profile: size_bits not increasing in n");
        if (a.mac_count >= b.mac_count)
          throw ConfigError("profile: mac_count not increasing in n");
      } else if (static_cast<int>(a.scheme) > static_cast<int>(b.scheme)) {
        throw ConfigError("profile: entries not sorted by (scheme, n)");
      }
    }
    for (const ProfileEntry& e : entries) {
      if (e.n == 0) throw ConfigError("profile: entry with zero units");
      if (e.error_rate < 0.0 || e.error_rate > 1.0)
        throw ConfigError("profile: error_rate outside [0,1]");
    }
  }
};

// Evaluates every configuration of every requested scheme on the given
// dataset. One entry per (scheme, n) for n = 1..B*K, sorted by (scheme, n).
inline ProfileTable build_table(const AccordionModel& model,
                                const std::vector<SkipScheme>& schemes, const Dataset& data,
                                const std::string& dataset_id = "", const std::string& built_at = "") {
  if (data.size() == 0) throw ConfigError("build_table: empty dataset");
  if (schemes.empty()) throw ConfigError("build_table: no schemes requested");
  ProfileTable t;
  t.model_id = model_content_id(model);
  t.dataset_id = dataset_id;
  t.built_at = built_at;
  std::vector<SkipScheme> order = schemes;
  std::sort(order.begin(), order.end(),
            [](SkipScheme a, SkipScheme b) { return static_cast<int>(a) < static_cast<int>(b); });
  order.erase(std::unique(order.begin(), order.end()), order.end());
  const std::size_t total = model.spec().total_units();
  for (SkipScheme s : order) {
    for (std::size_t n = 1; n <= total; ++n) {
      DepthConfig cfg{s, n};
      SizeReport sz = model.size_of(cfg);
      ProfileEntry e;
      e.scheme = s;
      e.n = n;
      e.size_bits = sz.size_bits;
      e.mac_count = sz.mac_count;
      e.layer_fraction = static_cast<double>(n) / static_cast<double>(total);
      e.error_rate = evaluate(model, cfg, data);
      t.entries.push_back(e);
    }
  }
  t.validate();
  return t;
}

// Best configuration that fits a size budget: among entries of the scheme
// with size_bits <= max_bits, minimal error; ties prefer more units, then
// fewer bits. Throws InfeasibleError when even the smallest entry is too big.
inline const ProfileEntry& select_by_size(const ProfileTable& table, SkipScheme scheme,
                                          std::uint64_t max_bits) {
  const ProfileEntry* best = nullptr;
  for (const ProfileEntry& e : table.entries) {
    if (e.scheme != scheme || e.size_bits > max_bits) continue;
    if (best == nullptr || e.error_rate < best->error_rate ||
        (e.error_rate == best->error_rate &&
         (e.n > best->n || (e.n == best->n && e.size_bits < best->size_bits))))
      best = &e;
  }
  if (best == nullptr)
    throw InfeasibleError("no " + to_string(scheme) + " configuration fits " +
                          std::to_string(max_bits) + " bits");
  return *best;
}

// Smallest configuration meeting an error target: minimal size_bits among
// entries with error_rate <= max_error. Throws UnreachableError when no
// configuration reaches the target.
inline const ProfileEntry& select_by_accuracy(const ProfileTable& table, SkipScheme scheme,
                                              double max_error) {
  if (max_error < 0.0 || max_error > 1.0)
    throw ConfigError("select_by_accuracy: max_error outside [0,1]");
  const ProfileEntry* best = nullptr;
  for (const ProfileEntry& e : table.entries) {
    if (e.scheme != scheme || e.error_rate > max_error) continue;
    if (best == nullptr || e.size_bits < best->size_bits) best = &e;
  }
  if (best == nullptr)
    throw UnreachableError("no " + to_string(scheme) + " configuration reaches error " +
                           std::to_string(max_error));
  return *best;
}

// Link-budget selection: the transferable bit budget is throughput x deadline.
// Deadlines are resolved at millisecond granularity (the protocol's native
// unit), which keeps the product exact in integer arithmetic; a double
// product would land one ulp below round numbers like 100 Mbps x 0.3 s.
inline const ProfileEntry& select_by_link(const ProfileTable& table, SkipScheme scheme,
                                          std::uint64_t throughput_bps, double deadline_s) {
  if (throughput_bps == 0) throw ConfigError("select_by_link: zero throughput");
  if (!(deadline_s > 0.0)) throw ConfigError("select_by_link: non-positive deadline");
  const std::uint64_t budget =
      detail::budget_bits(throughput_bps, detail::deadline_to_ms(deadline_s));
  return select_by_size(table, scheme, budget);
}

// ---------------------------------------------------------------------------
// CSV form: header line, then one row per entry. Provenance rides in leading
// '#' comments so the column set stays exactly the tabular data.

inline std::string table_to_csv(const ProfileTable& table) {
  std::ostringstream out;
  out << "# model_id=" << hex_id(table.model_id) << "\n";
  if (!table.dataset_id.empty()) out << "# dataset=" << table.dataset_id << "\n";
  if (!table.built_at.empty()) out << "# built_at=" << table.built_at << "\n";
  out << "scheme,n,size_bits,mac_count,layer_fraction,error_rate\n";
  out.setf(std::ios::fmtflags(0), std::ios::floatfield);
  out.precision(17);
  for (const ProfileEntry& e : table.entries) {
    out << to_string(e.scheme) << ',' << e.n << ',' << e.size_bits << ',' << e.mac_count << ','
        << e.layer_fraction << ',' << e.error_rate << "\n";
  }
  return out.str();
}

namespace detail {

inline std::array<std::uint8_t, 16> parse_hex_id(const std::string& s) {
  if (s.size() != 32) throw ConfigError("model_id must be 32 hex digits");
  auto nibble = [](char c) -> unsigned {
    if (c >= '0' && c <= '9') return static_cast<unsigned>(c - '0');
    if (c >= 'a' && c <= 'f') return static_cast<unsigned>(c - 'a' + 10);
    if (c >= 'A' && c <= 'F') return static_cast<unsigned>(c - 'A' + 10);
    throw ConfigError("model_id has a non-hex digit");
  };
  std::array<std::uint8_t, 16> id{};
  for (std::size_t i = 0; i < 16; ++i)
    id[i] = static_cast<std::uint8_t>((nibble(s[2 * i]) << 4) | nibble(s[2 * i + 1]));
  return id;
}

inline std::vector<std::string> split_csv_row(const std::string& line) {
  std::vector<std::string> out;
  std::string cur;
  for (char c : line) {
    if (c == ',') {
      out.push_back(cur);
      cur.clear();
    } else if (c != '\r') {
      cur.push_back(c);
    }
  }
  out.push_back(cur);
  return out;
}

}  // namespace detail

inline ProfileTable table_from_csv(const std::string& text) {
  ProfileTable t;
  std::istringstream in(text);
  std::string line;
  bool header_seen = false;
  while (std::getline(in, line)) {
    if (!line.empty() && line.back() == '\r') line.pop_back();
    if (line.empty()) continue;
    if (line[0] == '#') {
      const std::string body = line.substr(1);
      const std::size_t eq = body.find('=');
      if (eq == std::string::npos) continue;
      std::string key = body.substr(0, eq), val = body.substr(eq + 1);
      key.erase(0, key.find_first_not_of(' '));
      key.erase(key.find_last_not_of(' ') + 1);
      if (key == "model_id") t.model_id = detail::parse_hex_id(val);
      else if (key == "dataset") t.dataset_id = val;
      else if (key == "built_at") t.built_at = val;
      continue;
    }
    if (!header_seen) {
      if (line != "scheme,n,size_bits,mac_count,layer_fraction,error_rate")
        throw ConfigError("profile csv: unexpected header '" + line + "'");
      header_seen = true;
      continue;
    }
    const std::vector<std::string> f = detail::split_csv_row(line);
    if (f.size() != 6) throw ConfigError("profile csv: expected 6 columns, got row '" + line + "'");
    ProfileEntry e;
    try {
      e.scheme = parse_scheme(f[0]);
      e.n = std::stoull(f[1]);
      e.size_bits = std::stoull(f[2]);
      e.mac_count = std::stoull(f[3]);
      e.layer_fraction = std::stod(f[4]);
      e.error_rate = std::stod(f[5]);
    } catch (const ConfigError&) {
      throw;
    } catch (const std::exception&) {
      throw ConfigError("profile csv: malformed row '" + line + "'");
    }
    t.entries.push_back(e);
  }
  if (!header_seen) throw ConfigError("profile csv: missing header");
  t.validate();
  return t;
}

inline void write_table_csv(const ProfileTable& table, const std::string& path) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw ConfigError("cannot open for writing: " + path);
  out << table_to_csv(table);
  if (!out) throw ConfigError("write failed: " + path);
}

inline ProfileTable read_table_csv(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw ConfigError("cannot open: " + path);
  std::ostringstream buf;
  buf << in.rdbuf();
  return table_from_csv(buf.str());
}

}  // namespace accordion
