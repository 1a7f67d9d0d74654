#pragma once

#include <cstdint>
#include <cstring>
#include <fstream>
#include <numbers>
#include <string>
#include <vector>

#include "accordion/errors.hpp"
#include "accordion/rng.hpp"
#include "accordion/tensor.hpp"

namespace accordion {

// Synthetic interleaved-spirals classification data: C arms wound 1.25 turns
// around the origin, Gaussian jitter on the coordinates plus a small rate of
// mislabeled points. Mislabeling rotates an equal count of labels per class
// to the next class, so class balance stays exact by construction. Small
// enough to train in seconds, hard enough that depth matters.

struct Dataset {
  Tensor x;                       // [n x input_dim]
  std::vector<std::uint32_t> y;   // class indices

  std::size_t size() const { return y.size(); }
};

struct SpiralSpec {
  std::size_t num_classes = 3;
  std::size_t train = 6000, val = 1000, test = 1000;
  double noise_sigma = 0.06;      // coordinate jitter
  double label_flip_p = 0.02;     // chance a label is re-drawn uniformly

  void validate() const {
    if (num_classes < 2 || num_classes > 255)
      throw ConfigError("dataset: num_classes must be in [2, 255]");
    if (train == 0 || val == 0 || test == 0)
      throw ConfigError("dataset: all splits must be nonempty");
    if (noise_sigma < 0.0 || label_flip_p < 0.0 || label_flip_p > 1.0)
      throw ConfigError("dataset: bad noise settings");
  }
};

struct DataBundle {
  SpiralSpec spec;
  std::uint64_t seed = 0;
  Dataset train, val, test;
};

namespace detail {
// One split. Classes cycle sample-by-sample so balance is exact up to the
// remainder of n / C. Draw order is fixed: per sample (arm position,
// x-jitter, y-jitter), then one shuffle per class for the label noise.
inline Dataset make_spiral_split(const SpiralSpec& spec, RngState rng, std::size_t n) {
  Dataset d;
  d.x = Tensor({n, 2});
  d.y.resize(n);
  const double turns = 2.5 * std::numbers::pi;
  for (std::size_t i = 0; i < n; ++i) {
    const std::uint32_t c = static_cast<std::uint32_t>(i % spec.num_classes);
    const double t = rng.uniform();
    const double r = 0.15 + 0.85 * t;
    const double theta =
        2.0 * std::numbers::pi * c / static_cast<double>(spec.num_classes) + turns * t;
    d.x.at(i, 0) = static_cast<float>(r * std::cos(theta) + spec.noise_sigma * rng.normal());
    d.x.at(i, 1) = static_cast<float>(r * std::sin(theta) + spec.noise_sigma * rng.normal());
    d.y[i] = c;
  }
  // Label noise: per class, rotate round(p * class_count) randomly chosen
  // labels to the next class. Every class loses and gains (nearly) the same
  // count, keeping the balance of the construction.
  for (std::uint32_t c = 0; c < spec.num_classes; ++c) {
    std::vector<std::uint32_t> idx;
    for (std::size_t i = c; i < n; i += spec.num_classes) idx.push_back(static_cast<std::uint32_t>(i));
    rng.shuffle(idx);
    const std::size_t k =
        static_cast<std::size_t>(std::llround(spec.label_flip_p * static_cast<double>(idx.size())));
    for (std::size_t j = 0; j < k && j < idx.size(); ++j)
      d.y[idx[j]] = (c + 1) % spec.num_classes;
  }
  return d;
}
}  // namespace detail

inline DataBundle make_spirals(const SpiralSpec& spec, std::uint64_t seed) {
  spec.validate();
  DataBundle b;
  b.spec = spec;
  b.seed = seed;
  RngState root(seed);
  b.train = detail::make_spiral_split(spec, root.derive(1), spec.train);
  b.val = detail::make_spiral_split(spec, root.derive(2), spec.val);
  b.test = detail::make_spiral_split(spec, root.derive(3), spec.test);
  return b;
}

// ---- binary container ------------------------------------------------------
// "ACDS" | u16 version | u32 input_dim | u32 num_classes
// | u32 n_train | u32 n_val | u32 n_test | f64 noise_sigma | f64 label_flip_p
// | u64 seed | per split: features f32 LE row-major, then labels u8.
// All integers little-endian.

namespace detail {
template <typename T>
inline void put(std::string& out, T v) {
  char buf[sizeof(T)];
  std::memcpy(buf, &v, sizeof(T));
  out.append(buf, sizeof(T));
}

template <typename T>
inline T get(const std::string& in, std::size_t& off) {
  if (off + sizeof(T) > in.size()) throw IntegrityError("dataset: truncated file");
  T v;
  std::memcpy(&v, in.data() + off, sizeof(T));
  off += sizeof(T);
  return v;
}
}  // namespace detail

inline std::string dataset_to_bytes(const DataBundle& b) {
  std::string out = "ACDS";
  detail::put<std::uint16_t>(out, 1);
  detail::put<std::uint32_t>(out, 2);
  detail::put<std::uint32_t>(out, static_cast<std::uint32_t>(b.spec.num_classes));
  detail::put<std::uint32_t>(out, static_cast<std::uint32_t>(b.spec.train));
  detail::put<std::uint32_t>(out, static_cast<std::uint32_t>(b.spec.val));
  detail::put<std::uint32_t>(out, static_cast<std::uint32_t>(b.spec.test));
  detail::put<double>(out, b.spec.noise_sigma);
  detail::put<double>(out, b.spec.label_flip_p);
  detail::put<std::uint64_t>(out, b.seed);
  for (const Dataset* d : {&b.train, &b.val, &b.test}) {
    for (std::size_t i = 0; i < d->x.size(); ++i) detail::put<float>(out, d->x[i]);
    for (std::uint32_t y : d->y) detail::put<std::uint8_t>(out, static_cast<std::uint8_t>(y));
  }
  return out;
}

inline DataBundle dataset_from_bytes(const std::string& in) {
  std::size_t off = 0;
  if (in.size() < 4 || in.compare(0, 4, "ACDS") != 0)
    throw IntegrityError("dataset: bad magic");
  off = 4;
  const auto version = detail::get<std::uint16_t>(in, off);
  if (version != 1) throw VersionError("dataset: unsupported version " + std::to_string(version));
  const auto input_dim = detail::get<std::uint32_t>(in, off);
  if (input_dim != 2) throw VersionError("dataset: unsupported input_dim");
  DataBundle b;
  b.spec.num_classes = detail::get<std::uint32_t>(in, off);
  b.spec.train = detail::get<std::uint32_t>(in, off);
  b.spec.val = detail::get<std::uint32_t>(in, off);
  b.spec.test = detail::get<std::uint32_t>(in, off);
  b.spec.noise_sigma = detail::get<double>(in, off);
  b.spec.label_flip_p = detail::get<double>(in, off);
  b.seed = detail::get<std::uint64_t>(in, off);
  b.spec.validate();
  auto read_split = [&](std::size_t n) {
    Dataset d;
    d.x = Tensor({n, input_dim});
    for (std::size_t i = 0; i < d.x.size(); ++i) d.x[i] = detail::get<float>(in, off);
    d.y.resize(n);
    for (std::size_t i = 0; i < n; ++i) {
      d.y[i] = detail::get<std::uint8_t>(in, off);
      if (d.y[i] >= b.spec.num_classes) throw IntegrityError("dataset: label out of range");
    }
    return d;
  };
  b.train = read_split(b.spec.train);
  b.val = read_split(b.spec.val);
  b.test = read_split(b.spec.test);
  if (off != in.size()) throw IntegrityError("dataset: trailing bytes");
  return b;
}

inline void write_file(const std::string& path, const std::string& bytes) {
  std::ofstream f(path, std::ios::binary | std::ios::trunc);
  if (!f) throw UnreachableError("cannot open for writing: " + path);
  f.write(bytes.data(), static_cast<std::streamsize>(bytes.size()));
  if (!f) throw UnreachableError("write failed: " + path);
}

inline std::string read_file(const std::string& path) {
  std::ifstream f(path, std::ios::binary);
  if (!f) throw NotFoundError("cannot open: " + path);
  std::string bytes((std::istreambuf_iterator<char>(f)), std::istreambuf_iterator<char>());
  return bytes;
}

inline void save_dataset(const DataBundle& b, const std::string& path) {
  write_file(path, dataset_to_bytes(b));
}

inline DataBundle load_dataset(const std::string& path) {
  return dataset_from_bytes(read_file(path));
}

}  // namespace accordion
