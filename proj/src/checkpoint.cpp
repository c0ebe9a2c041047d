// SPDX-License-Identifier: Apache-2.0
#include "fedprune/checkpoint.hpp"

#include <bit>
#include <cstring>
#include <string>

#include "fedprune/error.hpp"
#include "fedprune/io.hpp"

namespace fedprune::nn {
namespace {

constexpr char kMagic[4] = {'F', 'P', 'N', '1'};

class Writer {
 public:
  void bytes(const void* p, std::size_t n) { out_.append(static_cast<const char*>(p), n); }
  void u8(std::uint8_t v) { out_.push_back(static_cast<char>(v)); }
  void u16(std::uint16_t v) {
    for (int i = 0; i < 2; ++i) u8(static_cast<std::uint8_t>(v >> (8 * i)));
  }
  void u32(std::uint32_t v) {
    for (int i = 0; i < 4; ++i) u8(static_cast<std::uint8_t>(v >> (8 * i)));
  }
  void f32(float v) { u32(std::bit_cast<std::uint32_t>(v)); }
  std::string take() { return std::move(out_); }

 private:
  std::string out_;
};

class Reader {
 public:
  explicit Reader(std::span<const std::uint8_t> in) : in_(in) {}

  std::size_t offset() const { return pos_; }
  bool at_end() const { return pos_ == in_.size(); }

  void need(std::size_t n, const char* what) {
    if (in_.size() - pos_ < n) throw TruncationError(std::string("truncated ") + what, pos_ + n, in_.size());
  }
  std::uint8_t u8(const char* what) {
    need(1, what);
    return in_[pos_++];
  }
  std::uint16_t u16(const char* what) {
    need(2, what);
    std::uint16_t v = static_cast<std::uint16_t>(in_[pos_] | (in_[pos_ + 1] << 8));
    pos_ += 2;
    return v;
  }
  std::uint32_t u32(const char* what) {
    need(4, what);
    std::uint32_t v = 0;
    for (int i = 0; i < 4; ++i) v |= static_cast<std::uint32_t>(in_[pos_ + static_cast<std::size_t>(i)]) << (8 * i);
    pos_ += 4;
    return v;
  }
  std::string str(std::size_t n, const char* what) {
    need(n, what);
    std::string s(reinterpret_cast<const char*>(in_.data() + pos_), n);
    pos_ += n;
    return s;
  }
  void floats(std::vector<float>& dst, const char* what) {
    need(dst.size() * 4, what);
    for (float& v : dst) v = std::bit_cast<float>(u32(what));
  }

 private:
  std::span<const std::uint8_t> in_;
  std::size_t pos_ = 0;
};

void write_tensor(Writer& w, const std::string& name, const std::vector<int>& dims, const std::vector<float>& data) {
  w.u16(static_cast<std::uint16_t>(name.size()));
  w.bytes(name.data(), name.size());
  w.u8(static_cast<std::uint8_t>(dims.size()));
  for (int d : dims) w.u32(static_cast<std::uint32_t>(d));
  for (float v : data) w.f32(v);
}

void read_tensor(Reader& r, const std::string& name, const std::vector<int>& dims, std::vector<float>& data) {
  const std::size_t start = r.offset();
  const std::uint16_t len = r.u16("tensor name length");
  const std::string got = r.str(len, "tensor name");
  if (got != name) throw DecodeError("expected tensor '" + name + "', found '" + got + "'", start);
  const std::size_t dims_at = r.offset();
  const std::uint8_t ndim = r.u8("tensor rank");
  std::vector<int> shape(ndim);
  for (int& d : shape) d = static_cast<int>(r.u32("tensor dims"));
  if (shape != dims)
    throw DecodeError("tensor '" + name + "' has shape " + TensorShape{shape}.str() + ", model expects " +
                          TensorShape{dims}.str(),
                      dims_at);
  r.floats(data, "tensor payload");
}

}  // namespace

std::vector<std::uint8_t> encode_checkpoint(const ParamSet& params) {
  const ModelSpec& spec = params.spec();
  Writer w;
  w.bytes(kMagic, 4);
  w.u32(kCheckpointVersion);
  w.u8(static_cast<std::uint8_t>(spec.id));
  w.u32(static_cast<std::uint32_t>(2 * spec.layers.size()));
  for (std::size_t l = 0; l < spec.layers.size(); ++l) {
    const auto& layer = params.layer(l);
    write_tensor(w, layer.name + ".weight", layer.weight_shape.dims, layer.weight);
    write_tensor(w, layer.name + ".bias", {static_cast<int>(layer.bias.size())}, layer.bias);
  }
  const ChannelMask& mask = params.mask();
  w.u32(static_cast<std::uint32_t>(mask.layer));
  w.u32(static_cast<std::uint32_t>(mask.size()));
  std::vector<std::uint8_t> packed((mask.size() + 7) / 8, 0);
  for (std::size_t c = 0; c < mask.size(); ++c)
    if (mask.kept(c)) packed[c / 8] = static_cast<std::uint8_t>(packed[c / 8] | (1u << (c % 8)));
  w.bytes(packed.data(), packed.size());
  const std::string s = w.take();
  return {s.begin(), s.end()};
}

ParamSet decode_checkpoint(std::span<const std::uint8_t> bytes) {
  Reader r(bytes);
  if (bytes.size() < 4 || std::memcmp(bytes.data(), kMagic, 4) != 0) throw MagicError("bad checkpoint magic", 0);
  r.str(4, "magic");
  const std::uint32_t version = r.u32("version");
  if (version != kCheckpointVersion)
    throw DecodeError("unsupported checkpoint version " + std::to_string(version), 4);
  const std::uint8_t id = r.u8("model id");
  if (id > static_cast<std::uint8_t>(ModelId::cifar10)) throw DecodeError("unknown model id " + std::to_string(id), 8);
  const ModelSpec& spec = ModelSpec::get(static_cast<ModelId>(id));
  const std::uint32_t count = r.u32("tensor count");
  if (count != 2 * spec.layers.size())
    throw DecodeError("tensor count " + std::to_string(count) + " does not match model " +
                          std::string(model_name(spec.id)),
                      9);
  ParamSet params(spec);
  for (std::size_t l = 0; l < spec.layers.size(); ++l) {
    auto& layer = params.layer(l);
    read_tensor(r, layer.name + ".weight", layer.weight_shape.dims, layer.weight);
    read_tensor(r, layer.name + ".bias", {static_cast<int>(layer.bias.size())}, layer.bias);
  }
  const std::size_t mask_at = r.offset();
  const std::uint32_t mask_layer = r.u32("mask layer");
  const std::uint32_t mask_len = r.u32("mask length");
  if (static_cast<int>(mask_layer) != spec.prune_layer ||
      mask_len != static_cast<std::uint32_t>(spec.designated().out_channels))
    throw DecodeError("mask does not match the designated layer", mask_at);
  const std::size_t packed = (mask_len + 7) / 8;
  r.need(packed, "mask bits");
  ChannelMask mask{static_cast<int>(mask_layer), std::vector<std::uint8_t>(mask_len)};
  const std::size_t bits_at = r.offset();
  for (std::size_t c = 0; c < mask_len; ++c) mask.keep[c] = (bytes[bits_at + c / 8] >> (c % 8)) & 1u;
  for (std::size_t i = 0; i < packed; ++i) r.u8("mask bits");
  if (!r.at_end()) throw DecodeError("trailing bytes after checkpoint", r.offset());
  params.mask() = std::move(mask);
  if (!params.all_finite()) throw DecodeError("checkpoint contains non-finite values", 0);
  return params;
}

void save_checkpoint(const ParamSet& params, const std::filesystem::path& path) {
  const auto bytes = encode_checkpoint(params);
  io::write_file_atomic(path, {reinterpret_cast<const char*>(bytes.data()), bytes.size()});
}

ParamSet load_checkpoint(const std::filesystem::path& path) { return decode_checkpoint(io::read_file(path)); }

}  // namespace fedprune::nn
