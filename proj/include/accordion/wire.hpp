#pragma once
// Binary model container: a manifest describing every transferable chunk of
// a model (priority-ordered), the chunk payload encoding, partial-model
// assembly, and delta computation for incremental upgrades. All integers are
// little-endian; payloads are 32-bit little-endian floats.

#include <algorithm>
#include <array>
#include <bit>
#include <cstdint>
#include <cstring>
#include <fstream>
#include <optional>
#include <sstream>
#include <string>
#include <vector>

#include "accordion/arch.hpp"
#include "accordion/crc32.hpp"
#include "accordion/errors.hpp"

namespace accordion {

constexpr std::uint16_t kWireFormatVersion = 1;
inline constexpr char kWireMagic[4] = {'A', 'C', 'D', 'N'};

enum class ChunkKind : std::uint8_t { stem = 0, head = 1, transition = 2, unit = 3 };

struct ChunkInfo {
  std::uint32_t index = 0;
  ChunkKind kind = ChunkKind::stem;
  std::uint16_t block = 0;  // unit chunks only
  std::uint16_t pos = 0;    // unit chunks only
  std::uint64_t byte_offset = 0;  // within the payload region, contiguous
  std::uint64_t byte_length = 0;  // payload bytes (0 for transition)
  std::uint32_t crc = 0;          // crc32 of the payload
};

struct ModelManifest {
  std::uint16_t format_version = kWireFormatVersion;
  std::array<std::uint8_t, 16> model_id{};
  std::string descriptor;  // canonical key-value architecture text
  std::vector<ChunkInfo> table;  // priority order: stem, head, transition, units

  std::uint64_t payload_bytes() const {
    return table.empty() ? 0 : table.back().byte_offset + table.back().byte_length;
  }
};

struct LayerChunk {
  std::uint32_t index = 0;
  ChunkKind kind = ChunkKind::stem;
  std::uint16_t block = 0;
  std::uint16_t pos = 0;
  std::uint32_t crc = 0;
  std::vector<std::uint8_t> payload;
};

// ---------------------------------------------------------------------------
// Little-endian primitives

namespace detail {

inline void put_u16(std::vector<std::uint8_t>& out, std::uint16_t v) {
  out.push_back(static_cast<std::uint8_t>(v));
  out.push_back(static_cast<std::uint8_t>(v >> 8));
}
inline void put_u32(std::vector<std::uint8_t>& out, std::uint32_t v) {
  for (int i = 0; i < 4; ++i) out.push_back(static_cast<std::uint8_t>(v >> (8 * i)));
}
inline void put_u64(std::vector<std::uint8_t>& out, std::uint64_t v) {
  for (int i = 0; i < 8; ++i) out.push_back(static_cast<std::uint8_t>(v >> (8 * i)));
}

// Bounds-checked little-endian reader.
class ByteReader {
 public:
  ByteReader(const std::uint8_t* data, std::size_t size) : data_(data), size_(size) {}

  std::uint8_t u8() { return take(1)[0]; }
  std::uint16_t u16() {
    const std::uint8_t* p = take(2);
    return static_cast<std::uint16_t>(p[0] | (p[1] << 8));
  }
  std::uint32_t u32() {
    const std::uint8_t* p = take(4);
    return static_cast<std::uint32_t>(p[0]) | (static_cast<std::uint32_t>(p[1]) << 8) |
           (static_cast<std::uint32_t>(p[2]) << 16) | (static_cast<std::uint32_t>(p[3]) << 24);
  }
  std::uint64_t u64() {
    std::uint64_t lo = u32();
    return lo | (static_cast<std::uint64_t>(u32()) << 32);
  }
  const std::uint8_t* take(std::size_t n) {
    if (size_ - at_ < n) throw IntegrityError("container truncated");
    const std::uint8_t* p = data_ + at_;
    at_ += n;
    return p;
  }
  std::size_t consumed() const { return at_; }
  std::size_t remaining() const { return size_ - at_; }

 private:
  const std::uint8_t* data_;
  std::size_t size_;
  std::size_t at_ = 0;
};

inline void put_f32(std::vector<std::uint8_t>& out, float f) {
  put_u32(out, std::bit_cast<std::uint32_t>(f));
}

}  // namespace detail

// ---------------------------------------------------------------------------
// Architecture descriptor: the model's canonical shape text plus the chunk
// ordering scheme and the (trainable-parameter-free) transition recipes.

inline std::string to_string(TransitionKind k) {
  switch (k) {
    case TransitionKind::identity: return "identity";
    case TransitionKind::avgpool2: return "avgpool2";
    case TransitionKind::project: return "project";
  }
  throw UnreachableError("transition kind");
}

inline TransitionKind parse_transition_kind(const std::string& s) {
  if (s == "identity") return TransitionKind::identity;
  if (s == "avgpool2") return TransitionKind::avgpool2;
  if (s == "project") return TransitionKind::project;
  throw ConfigError("unknown transition kind '" + s + "'");
}

inline std::string descriptor_text(const ArchSpec& spec, SkipScheme scheme,
                                   const std::vector<TransitionDesc>& transitions) {
  std::ostringstream out;
  out << spec.to_text();
  out << "scheme = " << to_string(scheme) << "\n";
  out << "transitions = ";
  for (std::size_t i = 0; i < transitions.size(); ++i) {
    if (i) out << ',';
    out << to_string(transitions[i].kind) << ':' << transitions[i].seed;
  }
  out << "\n";
  return out.str();
}

struct ParsedDescriptor {
  ArchSpec spec;
  SkipScheme scheme = SkipScheme::coml;
  std::vector<TransitionDesc> transitions;
};

inline ParsedDescriptor parse_descriptor(const std::string& text) {
  ParsedDescriptor d;
  std::istringstream in(text);
  std::string line;
  bool saw_input = false, saw_classes = false, saw_units = false, saw_widths = false,
       saw_bits = false, saw_scheme = false, saw_trans = false;
  while (std::getline(in, line)) {
    if (line.empty()) continue;
    const std::size_t sep = line.find(" = ");
    if (sep == std::string::npos) throw ConfigError("descriptor line '" + line + "' is not key = value");
    const std::string key = line.substr(0, sep), val = line.substr(sep + 3);
    try {
      if (key == "input_dim") { d.spec.input_dim = std::stoull(val); saw_input = true; }
      else if (key == "num_classes") { d.spec.num_classes = std::stoull(val); saw_classes = true; }
      else if (key == "units_per_block") { d.spec.units_per_block = std::stoull(val); saw_units = true; }
      else if (key == "block_widths") {
        d.spec.block_widths.clear();
        std::istringstream ws(val);
        std::string tok;
        while (std::getline(ws, tok, ',')) d.spec.block_widths.push_back(std::stoull(tok));
        saw_widths = true;
      } else if (key == "bits_per_param") { d.spec.bits_per_param = std::stoull(val); saw_bits = true; }
      else if (key == "scheme") { d.scheme = parse_scheme(val); saw_scheme = true; }
      else if (key == "transitions") {
        d.transitions.clear();
        std::istringstream ts(val);
        std::string tok;
        while (std::getline(ts, tok, ',')) {
          const std::size_t colon = tok.find(':');
          if (colon == std::string::npos) throw ConfigError("transition entry '" + tok + "' lacks kind:seed");
          TransitionDesc t;
          t.kind = parse_transition_kind(tok.substr(0, colon));
          t.seed = std::stoull(tok.substr(colon + 1));
          d.transitions.push_back(t);
        }
        saw_trans = true;
      } else {
        throw ConfigError("descriptor has unknown key '" + key + "'");
      }
    } catch (const ConfigError&) {
      throw;
    } catch (const std::exception&) {
      throw ConfigError("descriptor value unreadable in line '" + line + "'");
    }
  }
  if (!(saw_input && saw_classes && saw_units && saw_widths && saw_bits && saw_scheme && saw_trans))
    throw ConfigError("descriptor missing required keys");
  d.spec.validate();
  if (d.transitions.size() + 1 != d.spec.blocks())
    throw ConfigError("descriptor transition count does not match block count");
  return d;
}

// ---------------------------------------------------------------------------
// Payload encoding: canonical parameter order per chunk.
//   stem: W, b      head: W, b      unit: W1, b1, W2, b2      transition: (none)

namespace detail {

inline void append_tensor(std::vector<std::uint8_t>& out, const Tensor& t) {
  out.reserve(out.size() + 4 * t.size());
  for (std::size_t i = 0; i < t.size(); ++i) put_f32(out, t.data()[i]);
}

inline void read_tensor(ByteReader& r, Tensor& t) {
  for (std::size_t i = 0; i < t.size(); ++i) {
    const std::uint32_t bits = r.u32();
    t.data()[i] = std::bit_cast<float>(bits);
  }
}

inline std::vector<std::string> chunk_param_ids(const ChunkInfo& info) {
  switch (info.kind) {
    case ChunkKind::stem: return {stem_w_id(), stem_b_id()};
    case ChunkKind::head: return {head_w_id(), head_b_id()};
    case ChunkKind::transition: return {};
    case ChunkKind::unit: {
      const UnitId u{info.block, info.pos};
      return {unit_param_id(u, "w1"), unit_param_id(u, "b1"), unit_param_id(u, "w2"),
              unit_param_id(u, "b2")};
    }
  }
  throw UnreachableError("chunk kind");
}

}  // namespace detail

// ---------------------------------------------------------------------------
// Manifest construction and binary form

// Full chunk table of a model under one ordering scheme: stem, head,
// transition metadata, then every unit in transfer-priority order. Offsets
// cover the full payload region regardless of how much is later streamed.
inline ModelManifest build_manifest(const AccordionModel& model, SkipScheme scheme) {
  ModelManifest m;
  m.model_id = model_content_id(model);
  m.descriptor = descriptor_text(model.spec(), scheme, model.transitions());
  const std::vector<UnitId> order = unit_priority(scheme, model.spec());
  std::uint64_t offset = 0;
  std::uint32_t index = 0;
  auto add = [&](ChunkKind kind, std::uint16_t b, std::uint16_t p) {
    ChunkInfo info;
    info.index = index++;
    info.kind = kind;
    info.block = b;
    info.pos = p;
    info.byte_offset = offset;
    std::uint32_t crc = 0;
    std::uint64_t len = 0;
    for (const std::string& id : detail::chunk_param_ids(info)) {
      const Tensor& t = model.params().at(id).value;
      std::vector<std::uint8_t> bytes;
      detail::append_tensor(bytes, t);
      crc = crc32_update(crc, bytes.data(), bytes.size());
      len += bytes.size();
    }
    info.byte_length = len;
    info.crc = crc;
    offset += len;
    m.table.push_back(info);
  };
  add(ChunkKind::stem, 0, 0);
  add(ChunkKind::head, 0, 0);
  add(ChunkKind::transition, 0, 0);
  for (const UnitId& u : order)
    add(ChunkKind::unit, static_cast<std::uint16_t>(u.block), static_cast<std::uint16_t>(u.pos));
  return m;
}

inline std::vector<std::uint8_t> manifest_to_bytes(const ModelManifest& m) {
  std::vector<std::uint8_t> out;
  out.insert(out.end(), kWireMagic, kWireMagic + 4);
  detail::put_u16(out, m.format_version);
  out.insert(out.end(), m.model_id.begin(), m.model_id.end());
  detail::put_u32(out, static_cast<std::uint32_t>(m.descriptor.size()));
  out.insert(out.end(), m.descriptor.begin(), m.descriptor.end());
  detail::put_u32(out, static_cast<std::uint32_t>(m.table.size()));
  for (const ChunkInfo& c : m.table) {
    detail::put_u32(out, c.index);
    out.push_back(static_cast<std::uint8_t>(c.kind));
    detail::put_u16(out, c.block);
    detail::put_u16(out, c.pos);
    detail::put_u64(out, c.byte_offset);
    detail::put_u64(out, c.byte_length);
    detail::put_u32(out, c.crc);
  }
  return out;
}

// Parses and structurally validates a manifest: magic, version, descriptor
// consistency, sequential indices, contiguous offsets, and the fixed
// stem/head/transition/units kind pattern with units in priority order.
inline ModelManifest manifest_from_bytes(const std::uint8_t* data, std::size_t size,
                                         std::size_t* consumed = nullptr) {
  detail::ByteReader r(data, size);
  const std::uint8_t* magic = r.take(4);
  if (std::memcmp(magic, kWireMagic, 4) != 0) throw IntegrityError("bad container magic");
  ModelManifest m;
  m.format_version = r.u16();
  if (m.format_version != kWireFormatVersion)
    throw VersionError("unsupported container version " + std::to_string(m.format_version));
  const std::uint8_t* id = r.take(16);
  std::memcpy(m.model_id.data(), id, 16);
  const std::uint32_t desc_len = r.u32();
  const std::uint8_t* desc = r.take(desc_len);
  m.descriptor.assign(reinterpret_cast<const char*>(desc), desc_len);
  const std::uint32_t count = r.u32();
  m.table.reserve(count);
  for (std::uint32_t i = 0; i < count; ++i) {
    ChunkInfo c;
    c.index = r.u32();
    const std::uint8_t kind = r.u8();
    if (kind > 3) throw IntegrityError("chunk " + std::to_string(i) + ": unknown kind");
    c.kind = static_cast<ChunkKind>(kind);
    c.block = r.u16();
    c.pos = r.u16();
    c.byte_offset = r.u64();
    c.byte_length = r.u64();
    c.crc = r.u32();
    m.table.push_back(c);
  }
  if (consumed) *consumed = r.consumed();

  const ParsedDescriptor d = parse_descriptor(m.descriptor);
  const std::vector<UnitId> order = unit_priority(d.scheme, d.spec);
  if (m.table.size() != 3 + order.size())
    throw IntegrityError("chunk table size does not match architecture");
  auto expected_length = [&](const ChunkInfo& c) -> std::uint64_t {
    switch (c.kind) {
      case ChunkKind::stem:
        return 4 * (static_cast<std::uint64_t>(d.spec.block_widths[0]) * d.spec.input_dim +
                    d.spec.block_widths[0]);
      case ChunkKind::head:
        return 4 * (static_cast<std::uint64_t>(d.spec.num_classes) * d.spec.block_widths.back() +
                    d.spec.num_classes);
      case ChunkKind::transition: return 0;
      case ChunkKind::unit: {
        const std::uint64_t w = d.spec.block_widths[c.block];
        return 4 * 2 * (w * w + w);
      }
    }
    throw UnreachableError("chunk kind");
  };
  std::uint64_t offset = 0;
  for (std::size_t i = 0; i < m.table.size(); ++i) {
    const ChunkInfo& c = m.table[i];
    if (c.index != i) throw IntegrityError("chunk table indices not sequential");
    if (c.byte_offset != offset) throw IntegrityError("chunk offsets not contiguous");
    offset += c.byte_length;
    const ChunkKind want = i == 0   ? ChunkKind::stem
                           : i == 1 ? ChunkKind::head
                           : i == 2 ? ChunkKind::transition
                                    : ChunkKind::unit;
    if (c.kind != want) throw IntegrityError("chunk " + std::to_string(i) + ": unexpected kind");
    if (c.kind == ChunkKind::unit) {
      const UnitId& u = order[i - 3];
      if (c.block != u.block || c.pos != u.pos)
        throw IntegrityError("chunk " + std::to_string(i) + ": unit out of priority order");
    }
    if (c.byte_length != expected_length(c))
      throw IntegrityError("chunk " + std::to_string(i) + ": length does not match architecture");
  }
  return m;
}

inline ModelManifest manifest_from_bytes(const std::vector<std::uint8_t>& bytes,
                                         std::size_t* consumed = nullptr) {
  return manifest_from_bytes(bytes.data(), bytes.size(), consumed);
}

// ---------------------------------------------------------------------------
// Serialization

struct SerializedModel {
  ModelManifest manifest;
  std::vector<LayerChunk> chunks;  // stem, head, transition, first n units
};

inline LayerChunk make_chunk(const AccordionModel& model, const ChunkInfo& info) {
  LayerChunk c;
  c.index = info.index;
  c.kind = info.kind;
  c.block = info.block;
  c.pos = info.pos;
  for (const std::string& id : detail::chunk_param_ids(info))
    detail::append_tensor(c.payload, model.params().at(id).value);
  c.crc = crc32(c.payload.data(), c.payload.size());
  return c;
}

// Emits the manifest (always describing the full model) and the chunk stream
// for one configuration: stem, head, transition metadata, then the first n
// units of the scheme's priority order. Byte-deterministic given the model.
inline SerializedModel serialize(const AccordionModel& model, const DepthConfig& cfg) {
  validate_config(cfg, model.spec());
  SerializedModel s;
  s.manifest = build_manifest(model, cfg.scheme);
  const std::size_t want = 3 + cfg.n;
  s.chunks.reserve(want);
  for (std::size_t i = 0; i < want; ++i) s.chunks.push_back(make_chunk(model, s.manifest.table[i]));
  return s;
}

// ---------------------------------------------------------------------------
// Chunk wire form (used by the transfer protocol and the container file)

inline std::vector<std::uint8_t> chunk_to_bytes(const LayerChunk& c) {
  std::vector<std::uint8_t> out;
  out.reserve(21 + c.payload.size());
  detail::put_u32(out, c.index);
  out.push_back(static_cast<std::uint8_t>(c.kind));
  detail::put_u16(out, c.block);
  detail::put_u16(out, c.pos);
  detail::put_u64(out, c.payload.size());
  detail::put_u32(out, c.crc);
  out.insert(out.end(), c.payload.begin(), c.payload.end());
  return out;
}

inline LayerChunk chunk_from_bytes(const std::uint8_t* data, std::size_t size) {
  detail::ByteReader r(data, size);
  LayerChunk c;
  c.index = r.u32();
  const std::uint8_t kind = r.u8();
  if (kind > 3) throw IntegrityError("chunk: unknown kind");
  c.kind = static_cast<ChunkKind>(kind);
  c.block = r.u16();
  c.pos = r.u16();
  const std::uint64_t len = r.u64();
  c.crc = r.u32();
  const std::uint8_t* p = r.take(len);
  c.payload.assign(p, p + len);
  if (r.remaining() != 0) throw IntegrityError("chunk: trailing bytes");
  return c;
}

inline LayerChunk chunk_from_bytes(const std::vector<std::uint8_t>& bytes) {
  return chunk_from_bytes(bytes.data(), bytes.size());
}

// ---------------------------------------------------------------------------
// Partial model assembly

class PartialModel {
 public:
  explicit PartialModel(const ModelManifest& manifest)
      : manifest_(manifest), parsed_(parse_descriptor(manifest.descriptor)) {
    model_.emplace(AccordionModel::build(parsed_.spec, 0));
    for (Param& p : model_->params())
      for (std::size_t i = 0; i < p.value.size(); ++i) p.value.data()[i] = 0.0f;
    for (std::size_t t = 0; t < parsed_.transitions.size(); ++t)
      model_->set_transition(t, parsed_.transitions[t]);
    received_.assign(manifest_.table.size(), false);
  }

  // Validates a chunk against the manifest (identity, length, both stored and
  // recomputed CRC) and copies its payload into the model. A corrupt chunk
  // throws IntegrityError naming the chunk index and changes nothing.
  void add_chunk(const LayerChunk& c) {
    const std::string where = "chunk " + std::to_string(c.index);
    if (c.index >= manifest_.table.size()) throw IntegrityError(where + ": index out of range");
    const ChunkInfo& info = manifest_.table[c.index];
    if (c.kind != info.kind || c.block != info.block || c.pos != info.pos)
      throw IntegrityError(where + ": identity does not match manifest");
    if (c.payload.size() != info.byte_length)
      throw IntegrityError(where + ": payload length does not match manifest");
    if (c.crc != info.crc) throw IntegrityError(where + ": stored crc does not match manifest");
    if (crc32(c.payload.data(), c.payload.size()) != info.crc)
      throw IntegrityError(where + ": payload corrupt (crc mismatch)");

    detail::ByteReader r(c.payload.data(), c.payload.size());
    for (const std::string& id : detail::chunk_param_ids(info))
      detail::read_tensor(r, model_->params().at(id).value);
    received_[c.index] = true;
  }

  bool has_chunk(std::uint32_t index) const {
    return index < received_.size() && received_[index];
  }

  // Largest n whose required chunks all arrived: stem and head gate
  // everything, then n counts the unbroken prefix of priority units (the
  // metadata-only transition chunk gates the units, not the n = 0 skeleton).
  std::optional<std::size_t> achievable_n() const {
    if (!received_[0] || !received_[1]) return std::nullopt;
    if (!received_[2]) return 0;
    std::size_t n = 0;
    while (3 + n < received_.size() && received_[3 + n]) ++n;
    return n;
  }

  bool complete() const {
    for (bool b : received_)
      if (!b) return false;
    return true;
  }

  // Forward pass with n active units; n must be within the achievable prefix.
  const Tensor& forward(const Tensor& x, std::size_t n, Workspace& ws) const {
    const std::optional<std::size_t> max_n = achievable_n();
    if (!max_n) throw ConfigError("partial model lacks stem or head");
    if (n > *max_n)
      throw ConfigError("requested " + std::to_string(n) + " units, only " +
                        std::to_string(*max_n) + " available");
    return model_->forward(x, {parsed_.scheme, n}, ws);
  }

  const ModelManifest& manifest() const { return manifest_; }
  const ParsedDescriptor& descriptor() const { return parsed_; }
  const AccordionModel& model() const { return *model_; }

 private:
  ModelManifest manifest_;
  ParsedDescriptor parsed_;
  std::optional<AccordionModel> model_;
  std::vector<bool> received_;
};

inline PartialModel assemble(const ModelManifest& manifest, const std::vector<LayerChunk>& chunks) {
  PartialModel pm(manifest);
  for (const LayerChunk& c : chunks) pm.add_chunk(c);
  return pm;
}

// ---------------------------------------------------------------------------
// Delta upgrades

// Chunk indices that upgrade a have_n-unit model to want_n units: exactly the
// units in active_set(want_n) minus active_set(have_n), in priority order.
// Downgrades never transfer anything and are rejected.
inline std::vector<std::uint32_t> delta_chunks(const ModelManifest& manifest, std::size_t have_n,
                                               std::size_t want_n) {
  const ParsedDescriptor d = parse_descriptor(manifest.descriptor);
  const std::size_t total = d.spec.total_units();
  if (want_n > total) throw ConfigError("delta: want_n exceeds unit count");
  if (have_n > want_n) throw ConfigError("delta: downgrade requires no transfer");
  // Priority ordering makes active sets nested: the difference is the
  // priority slice [have_n, want_n). Assert the set algebra holds.
  const std::vector<UnitId> have = active_set(d.scheme, have_n, d.spec);
  const std::vector<UnitId> want = active_set(d.scheme, want_n, d.spec);
  const std::vector<UnitId> order = unit_priority(d.scheme, d.spec);
  std::vector<std::uint32_t> out;
  out.reserve(want_n - have_n);
  for (std::size_t i = have_n; i < want_n; ++i) {
    const UnitId& u = order[i];
    const bool in_have = std::find(have.begin(), have.end(), u) != have.end();
    const bool in_want = std::find(want.begin(), want.end(), u) != want.end();
    if (in_have || !in_want) throw UnreachableError("priority order is not prefix-consistent");
    out.push_back(static_cast<std::uint32_t>(3 + i));
  }
  return out;
}

// ---------------------------------------------------------------------------
// Container file: manifest bytes followed by the raw payload region in table
// order. The table carries per-chunk offsets/CRCs, so payloads need no
// per-chunk headers on disk; a file may end early on any chunk boundary.

inline void write_container(const std::string& path, const ModelManifest& manifest,
                            const std::vector<LayerChunk>& chunks) {
  for (std::size_t i = 0; i < chunks.size(); ++i)
    if (chunks[i].index != i)
      throw ConfigError("container chunks must form a prefix of the table order");
  std::ofstream out(path, std::ios::binary);
  if (!out) throw ConfigError("cannot open for writing: " + path);
  const std::vector<std::uint8_t> head = manifest_to_bytes(manifest);
  out.write(reinterpret_cast<const char*>(head.data()), static_cast<std::streamsize>(head.size()));
  for (const LayerChunk& c : chunks)
    out.write(reinterpret_cast<const char*>(c.payload.data()),
              static_cast<std::streamsize>(c.payload.size()));
  if (!out) throw ConfigError("write failed: " + path);
}

struct LoadedContainer {
  ModelManifest manifest;
  std::vector<LayerChunk> chunks;  // the chunks present in the file
};

inline LoadedContainer read_container(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw ConfigError("cannot open: " + path);
  std::vector<std::uint8_t> bytes((std::istreambuf_iterator<char>(in)),
                                  std::istreambuf_iterator<char>());
  std::size_t consumed = 0;
  LoadedContainer lc;
  lc.manifest = manifest_from_bytes(bytes.data(), bytes.size(), &consumed);
  const std::uint64_t region = bytes.size() - consumed;
  std::uint64_t used = 0;
  for (const ChunkInfo& info : lc.manifest.table) {
    if (info.byte_offset + info.byte_length > region) break;
    LayerChunk c;
    c.index = info.index;
    c.kind = info.kind;
    c.block = info.block;
    c.pos = info.pos;
    c.crc = info.crc;
    c.payload.assign(bytes.begin() + static_cast<std::ptrdiff_t>(consumed + info.byte_offset),
                     bytes.begin() + static_cast<std::ptrdiff_t>(consumed + info.byte_offset +
                                                                 info.byte_length));
    lc.chunks.push_back(std::move(c));
    used = info.byte_offset + info.byte_length;
  }
  if (used != region)
    throw IntegrityError("container does not end on a chunk boundary");
  return lc;
}

}  // namespace accordion
