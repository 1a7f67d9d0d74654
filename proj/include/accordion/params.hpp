#pragma once

#include <cstdint>
#include <cstring>
#include <string>
#include <unordered_map>
#include <vector>

#include "accordion/errors.hpp"
#include "accordion/tensor.hpp"

namespace accordion {

// One named parameter with its gradient and momentum buffers. `trainable`
// is flipped per-iteration by the training loop: an entry with the flag off
// is invisible to the optimizer, so both its value and its velocity stay
// bit-identical across steps.
struct Param {
  std::string id;
  Tensor value;
  Tensor grad;
  Tensor velocity;
  bool trainable = true;
};

// Ordered registry of parameters. Iteration order is insertion order and is
// part of the contract: serialization, digests and the optimizer all walk
// entries in this order, which keeps every byte-level artifact reproducible.
class ParamSet {
 public:
  Param& add(const std::string& id, Tensor value) {
    if (index_.count(id)) throw ConfigError("ParamSet: duplicate id '" + id + "'");
    Param p;
    p.id = id;
    p.grad = Tensor(value.shape());
    p.velocity = Tensor(value.shape());
    p.value = std::move(value);
    index_[id] = entries_.size();
    entries_.push_back(std::move(p));
    return entries_.back();
  }

  bool contains(const std::string& id) const { return index_.count(id) != 0; }

  Param& at(const std::string& id) {
    auto it = index_.find(id);
    if (it == index_.end()) throw NotFoundError("ParamSet: no entry '" + id + "'");
    return entries_[it->second];
  }
  const Param& at(const std::string& id) const {
    auto it = index_.find(id);
    if (it == index_.end()) throw NotFoundError("ParamSet: no entry '" + id + "'");
    return entries_[it->second];
  }

  std::vector<Param>::iterator begin() { return entries_.begin(); }
  std::vector<Param>::iterator end() { return entries_.end(); }
  std::vector<Param>::const_iterator begin() const { return entries_.begin(); }
  std::vector<Param>::const_iterator end() const { return entries_.end(); }

  std::size_t size() const { return entries_.size(); }

  std::size_t scalar_count() const {
    std::size_t n = 0;
    for (const auto& p : entries_) n += p.value.size();
    return n;
  }

  void zero_grad() {
    for (auto& p : entries_) p.grad.fill(0.0f);
  }

  void set_all_trainable(bool flag) {
    for (auto& p : entries_) p.trainable = flag;
  }

  // FNV-1a over the raw value bytes in registry order. Used to fingerprint a
  // parameter state (e.g. in training logs and container ids).
  std::uint64_t digest() const {
    std::uint64_t h = 0xCBF29CE484222325ull;
    for (const auto& p : entries_) {
      for (std::size_t i = 0; i < p.value.size(); ++i) {
        std::uint32_t bits;
        std::memcpy(&bits, p.value.data() + i, 4);
        for (int b = 0; b < 4; ++b) {
          h ^= (bits >> (8 * b)) & 0xFFu;
          h *= 0x100000001B3ull;
        }
      }
    }
    return h;
  }

 private:
  std::vector<Param> entries_;
  std::unordered_map<std::string, std::size_t> index_;
};

}  // namespace accordion
