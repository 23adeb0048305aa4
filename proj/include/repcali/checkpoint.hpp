#pragma once

// Binary tensor container:
//   "RPCK" | u32 version | u64 step | u32 len, config text | u32 count |
//   count x (u32 len, name | u32 rank | rank x u64 dim | f32 payload) |
//   u64 FNV-1a digest of every preceding byte
// Integers and floats are little-endian; records are sorted by name.

#include <bit>
#include <cstdint>
#include <cstring>
#include <filesystem>
#include <fstream>
#include <map>
#include <string>
#include <vector>

#include "repcali/errors.hpp"
#include "repcali/model.hpp"

namespace repcali {

class CheckpointError : public Error {
 public:
  enum class Kind { bad_magic, bad_version, truncated, digest_mismatch, unknown_tensor, missing_tensor, io };
  CheckpointError(Kind kind, const std::string& msg) : Error(msg), kind_(kind) {}
  Kind kind() const { return kind_; }

 private:
  Kind kind_;
};

inline constexpr char kCheckpointMagic[4] = {'R', 'P', 'C', 'K'};
inline constexpr std::uint32_t kCheckpointVersion = 1;

struct CheckpointData {
  std::uint64_t step = 0;
  std::string config;  // effective-config echo
  std::map<std::string, Tensor> tensors;
};

inline std::uint64_t fnv1a64(const std::uint8_t* p, std::size_t n, std::uint64_t h = 0xcbf29ce484222325ull) {
  for (std::size_t i = 0; i < n; ++i) {
    h ^= p[i];
    h *= 0x100000001b3ull;
  }
  return h;
}

namespace detail {

class ByteWriter {
 public:
  void u32(std::uint32_t v) { put_le(v, 4); }
  void u64(std::uint64_t v) { put_le(v, 8); }
  void f32(float v) { u32(std::bit_cast<std::uint32_t>(v)); }
  void bytes(const void* p, std::size_t n) {
    const auto* b = static_cast<const std::uint8_t*>(p);
    buf_.insert(buf_.end(), b, b + n);
  }
  void str(const std::string& s) {
    u32(static_cast<std::uint32_t>(s.size()));
    bytes(s.data(), s.size());
  }
  std::vector<std::uint8_t>& buffer() { return buf_; }

 private:
  void put_le(std::uint64_t v, int n) {
    for (int i = 0; i < n; ++i) buf_.push_back(static_cast<std::uint8_t>(v >> (8 * i)));
  }
  std::vector<std::uint8_t> buf_;
};

class ByteReader {
 public:
  ByteReader(const std::vector<std::uint8_t>& buf, std::size_t end, std::string path)
      : buf_(buf), end_(end), path_(std::move(path)) {}
  std::uint64_t le(int n) {
    need(n);
    std::uint64_t v = 0;
    for (int i = 0; i < n; ++i) v |= static_cast<std::uint64_t>(buf_[pos_ + i]) << (8 * i);
    pos_ += n;
    return v;
  }
  std::uint32_t u32() { return static_cast<std::uint32_t>(le(4)); }
  std::uint64_t u64() { return le(8); }
  float f32() { return std::bit_cast<float>(u32()); }
  std::string str() {
    const std::uint32_t n = u32();
    need(n);
    std::string s(reinterpret_cast<const char*>(buf_.data() + pos_), n);
    pos_ += n;
    return s;
  }
  std::size_t pos() const { return pos_; }

 private:
  void need(std::size_t n) const {
    if (pos_ + n > end_) throw CheckpointError(CheckpointError::Kind::truncated, path_ + ": truncated checkpoint");
  }
  const std::vector<std::uint8_t>& buf_;
  std::size_t end_;
  std::size_t pos_ = 0;
  std::string path_;
};

}  // namespace detail

inline std::vector<std::uint8_t> serialize_checkpoint(const CheckpointData& data) {
  detail::ByteWriter w;
  w.bytes(kCheckpointMagic, 4);
  w.u32(kCheckpointVersion);
  w.u64(data.step);
  w.str(data.config);
  w.u32(static_cast<std::uint32_t>(data.tensors.size()));
  for (const auto& [name, t] : data.tensors) {
    w.str(name);
    w.u32(static_cast<std::uint32_t>(t.rank()));
    for (auto d : t.shape()) w.u64(d);
    for (float v : t.data()) w.f32(v);
  }
  auto& buf = w.buffer();
  w.u64(fnv1a64(buf.data(), buf.size()));
  return buf;
}

inline CheckpointData parse_checkpoint(const std::vector<std::uint8_t>& buf, const std::string& path = "<memory>") {
  using K = CheckpointError::Kind;
  if (buf.size() < 4 || std::memcmp(buf.data(), kCheckpointMagic, 4) != 0) {
    throw CheckpointError(K::bad_magic, path + ": not a checkpoint (bad magic)");
  }
  if (buf.size() < 4 + 4 + 8) throw CheckpointError(K::truncated, path + ": truncated checkpoint");
  detail::ByteReader head(buf, buf.size(), path);
  head.le(4);
  const std::uint32_t version = head.u32();
  if (version != kCheckpointVersion) {
    throw CheckpointError(K::bad_version, path + ": unsupported checkpoint version " + std::to_string(version));
  }
  const std::size_t body = buf.size() - 8;
  std::uint64_t stored = 0;
  for (int i = 0; i < 8; ++i) stored |= static_cast<std::uint64_t>(buf[body + i]) << (8 * i);

  detail::ByteReader r(buf, body, path);
  r.le(4);
  r.u32();
  CheckpointData out;
  out.step = r.u64();
  out.config = r.str();
  const std::uint32_t count = r.u32();
  for (std::uint32_t i = 0; i < count; ++i) {
    std::string name = r.str();
    const std::uint32_t rank = r.u32();
    if (rank == 0 || rank > 8) throw CheckpointError(K::truncated, path + ": corrupt rank for tensor " + name);
    Shape shape(rank);
    std::uint64_t n = 1;
    for (auto& d : shape) {
      d = r.u64();
      if (d == 0 || d > (1ull << 32)) throw CheckpointError(K::truncated, path + ": corrupt dims for tensor " + name);
      n *= d;
    }
    if (n * 4 > body - r.pos()) throw CheckpointError(K::truncated, path + ": truncated payload for tensor " + name);
    std::vector<float> v(n);
    for (auto& x : v) x = r.f32();
    out.tensors.emplace(std::move(name), Tensor(std::move(shape), std::move(v)));
  }
  if (r.pos() != body) throw CheckpointError(K::truncated, path + ": record table does not match file length");
  if (fnv1a64(buf.data(), body) != stored) {
    throw CheckpointError(K::digest_mismatch, path + ": checkpoint digest mismatch");
  }
  return out;
}

/// Writes via a sibling temp file and rename so readers never see a partial file.
inline void write_file_atomic(const std::string& path, const std::vector<std::uint8_t>& bytes) {
  const std::string tmp = path + ".tmp";
  {
    std::ofstream os(tmp, std::ios::binary | std::ios::trunc);
    if (!os) throw CheckpointError(CheckpointError::Kind::io, "cannot open " + tmp + " for writing");
    os.write(reinterpret_cast<const char*>(bytes.data()), static_cast<std::streamsize>(bytes.size()));
    if (!os) throw CheckpointError(CheckpointError::Kind::io, "write failed for " + tmp);
  }
  std::error_code ec;
  std::filesystem::rename(tmp, path, ec);
  if (ec) throw CheckpointError(CheckpointError::Kind::io, "rename " + tmp + " -> " + path + ": " + ec.message());
}

inline std::vector<std::uint8_t> read_file_bytes(const std::string& path) {
  std::ifstream is(path, std::ios::binary);
  if (!is) throw CheckpointError(CheckpointError::Kind::io, "cannot open " + path);
  return std::vector<std::uint8_t>(std::istreambuf_iterator<char>(is), {});
}

inline void save_checkpoint_data(const std::string& path, const CheckpointData& data) {
  write_file_atomic(path, serialize_checkpoint(data));
}

inline CheckpointData load_checkpoint_data(const std::string& path) { return parse_checkpoint(read_file_bytes(path), path); }

template <class T>
CheckpointData model_checkpoint(const Seq2SeqModel<T>& model, std::uint64_t step, const std::string& config) {
  CheckpointData data;
  data.step = step;
  data.config = config;
  for (const auto& [name, p] : model.params().entries()) data.tensors.emplace(name, p.tensor.template cast<float>());
  return data;
}

template <class T>
void save_checkpoint(const Seq2SeqModel<T>& model, const std::string& path, std::uint64_t step = 0,
                     const std::string& config = {}) {
  save_checkpoint_data(path, model_checkpoint(model, step, config));
}

/// Copies every record into the matching parameter of `model`, which must
/// already carry the same injections. Trainable flags are left untouched.
template <class T>
void load_into(Seq2SeqModel<T>& model, const CheckpointData& data, const std::string& path = "<memory>") {
  using K = CheckpointError::Kind;
  auto& entries = model.params().entries();
  for (const auto& [name, t] : data.tensors) {
    auto it = entries.find(name);
    if (it == entries.end()) throw CheckpointError(K::unknown_tensor, path + ": unknown tensor '" + name + "'");
    if (it->second.tensor.shape() != t.shape()) {
      throw ShapeError(path + ": tensor '" + name + "' has shape " + shape_str(t.shape()) + ", model expects " +
                       shape_str(it->second.tensor.shape()));
    }
  }
  for (const auto& [name, p] : entries) {
    if (!data.tensors.count(name)) throw CheckpointError(K::missing_tensor, path + ": missing tensor '" + name + "'");
  }
  for (auto& [name, p] : entries) {
    const auto src = data.tensors.at(name).data();
    auto dst = p.tensor.mutable_data();
    for (std::size_t i = 0; i < src.size(); ++i) dst[i] = static_cast<T>(src[i]);
  }
}

template <class T>
CheckpointData load_checkpoint(Seq2SeqModel<T>& model, const std::string& path) {
  auto data = load_checkpoint_data(path);
  load_into(model, data, path);
  return data;
}

}  // namespace repcali
