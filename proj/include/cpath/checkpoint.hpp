#pragma once

// Binary checkpoints, little-endian throughout:
//
//   magic        4 bytes   "CPTH" (classifier) or "CPTD" (decoder)
//   version      u32       kCheckpointVersion
//   bound layer  u32       decoder files only: classifier layer index decoded
//   layer count  u32
//   per layer:   in_dim u32, out_dim u32, activation u8 (0 identity, 1 relu),
//                weights f64[out_dim * in_dim] row-major, bias f64[out_dim]

#include <array>
#include <bit>
#include <cstdint>
#include <cstring>
#include <fstream>
#include <iterator>
#include <string>
#include <string_view>
#include <vector>

#include "cpath/classifier.hpp"
#include "cpath/diffcore.hpp"
#include "cpath/error.hpp"

namespace cpath {

inline constexpr std::uint32_t kCheckpointVersion = 1;
inline constexpr std::string_view kClassifierMagic = "CPTH";
inline constexpr std::string_view kDecoderMagic = "CPTD";

namespace detail {

class ByteWriter {
 public:
  void raw(std::string_view s) { bytes_.insert(bytes_.end(), s.begin(), s.end()); }
  void u8(std::uint8_t v) { bytes_.push_back(static_cast<char>(v)); }
  void u32(std::uint32_t v) {
    for (int i = 0; i < 4; ++i) bytes_.push_back(static_cast<char>((v >> (8 * i)) & 0xffu));
  }
  void u64(std::uint64_t v) {
    for (int i = 0; i < 8; ++i) bytes_.push_back(static_cast<char>((v >> (8 * i)) & 0xffu));
  }
  void f64(double v) { u64(std::bit_cast<std::uint64_t>(v)); }
  std::string take() { return std::move(bytes_); }

 private:
  std::string bytes_;
};

class ByteReader {
 public:
  explicit ByteReader(std::string_view bytes) : bytes_(bytes) {}

  std::size_t offset() const { return pos_; }
  std::size_t remaining() const { return bytes_.size() - pos_; }

  std::string_view raw(std::size_t n, const char* what) {
    need(n, what);
    std::string_view s = bytes_.substr(pos_, n);
    pos_ += n;
    return s;
  }
  std::uint8_t u8(const char* what) {
    need(1, what);
    return static_cast<std::uint8_t>(bytes_[pos_++]);
  }
  std::uint32_t u32(const char* what) {
    need(4, what);
    std::uint32_t v = 0;
    for (int i = 0; i < 4; ++i) {
      v |= static_cast<std::uint32_t>(static_cast<unsigned char>(bytes_[pos_ + i])) << (8 * i);
    }
    pos_ += 4;
    return v;
  }
  double f64(const char* what) {
    need(8, what);
    std::uint64_t v = 0;
    for (int i = 0; i < 8; ++i) {
      v |= static_cast<std::uint64_t>(static_cast<unsigned char>(bytes_[pos_ + i])) << (8 * i);
    }
    pos_ += 8;
    return std::bit_cast<double>(v);
  }
  [[noreturn]] void fail(const std::string& msg) const {
    throw FormatError("checkpoint offset " + std::to_string(pos_) + ": " + msg);
  }

 private:
  void need(std::size_t n, const char* what) const {
    if (remaining() < n) {
      fail(std::string("truncated while reading ") + what + " (need " + std::to_string(n) +
           " bytes, have " + std::to_string(remaining()) + ")");
    }
  }

  std::string_view bytes_;
  std::size_t pos_ = 0;
};

inline void write_layers(ByteWriter& w, std::span<const LayerParams> layers) {
  w.u32(static_cast<std::uint32_t>(layers.size()));
  for (const LayerParams& l : layers) {
    w.u32(static_cast<std::uint32_t>(l.in_dim()));
    w.u32(static_cast<std::uint32_t>(l.out_dim()));
    w.u8(static_cast<std::uint8_t>(l.activation));
    for (double v : l.weights.data()) w.f64(v);
    for (double v : l.bias.data()) w.f64(v);
  }
}

inline std::vector<LayerParams> read_layers(ByteReader& r) {
  const std::uint32_t count = r.u32("layer count");
  if (count == 0) r.fail("layer count is zero");
  std::vector<LayerParams> layers;
  for (std::uint32_t li = 0; li < count; ++li) {
    const std::uint32_t in = r.u32("in_dim");
    const std::uint32_t out = r.u32("out_dim");
    if (in == 0 || out == 0) r.fail("zero layer dimension in layer " + std::to_string(li));
    const std::uint8_t tag = r.u8("activation tag");
    if (tag > 1) r.fail("unknown activation tag " + std::to_string(tag));
    const std::uint64_t values = static_cast<std::uint64_t>(in) * out + out;
    if (values * 8 > r.remaining()) {
      r.fail("truncated layer " + std::to_string(li) + " payload");
    }
    if (!layers.empty() && layers.back().out_dim() != in) {
      r.fail("layer " + std::to_string(li) + " does not chain with previous layer");
    }
    LayerParams l;
    l.activation = static_cast<Activation>(tag);
    l.weights = Tensor({out, in});
    l.bias = Tensor::zeros(out);
    for (double& v : l.weights.data()) v = r.f64("weights");
    for (double& v : l.bias.data()) v = r.f64("bias");
    layers.push_back(std::move(l));
  }
  if (r.remaining() != 0) r.fail("trailing bytes after last layer");
  return layers;
}

inline void read_header(ByteReader& r, std::string_view magic) {
  const std::string_view m = r.raw(4, "magic");
  if (m != magic) {
    throw FormatError("checkpoint offset 0: bad magic, expected \"" + std::string(magic) + "\"");
  }
  const std::uint32_t version = r.u32("version");
  if (version != kCheckpointVersion) {
    r.fail("unsupported version " + std::to_string(version));
  }
}

inline std::string read_file(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw IoError("cannot open '" + path + "' for reading");
  return std::string(std::istreambuf_iterator<char>(in), std::istreambuf_iterator<char>());
}

inline void write_file(const std::string& path, std::string_view bytes) {
  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  if (!out) throw IoError("cannot open '" + path + "' for writing");
  out.write(bytes.data(), static_cast<std::streamsize>(bytes.size()));
  if (!out) throw IoError("write failed for '" + path + "'");
}

}  // namespace detail

inline std::string serialize_model(const MlpModel& model) {
  model.validate();
  detail::ByteWriter w;
  w.raw(kClassifierMagic);
  w.u32(kCheckpointVersion);
  detail::write_layers(w, model.layers);
  return w.take();
}

inline MlpModel deserialize_model(std::string_view bytes) {
  detail::ByteReader r(bytes);
  detail::read_header(r, kClassifierMagic);
  MlpModel m{detail::read_layers(r)};
  if (m.class_count() < 2) throw FormatError("checkpoint: fewer than 2 classes");
  return m;
}

inline void save_model(const MlpModel& model, const std::string& path) {
  detail::write_file(path, serialize_model(model));
}

inline MlpModel load_model(const std::string& path) {
  return deserialize_model(detail::read_file(path));
}

/// 64-bit FNV-1a; used for provenance fingerprints, not for integrity.
inline std::uint64_t fnv1a64(std::string_view bytes) {
  std::uint64_t h = 0xcbf29ce484222325ull;
  for (char c : bytes) {
    h ^= static_cast<unsigned char>(c);
    h *= 0x100000001b3ull;
  }
  return h;
}

inline std::string hex64(std::uint64_t v) {
  static constexpr char digits[] = "0123456789abcdef";
  std::string s(16, '0');
  for (int i = 15; i >= 0; --i) {
    s[static_cast<std::size_t>(i)] = digits[v & 0xf];
    v >>= 4;
  }
  return s;
}

}  // namespace cpath
