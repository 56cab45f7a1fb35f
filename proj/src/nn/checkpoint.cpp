#include "voxgrid/nn/checkpoint.hpp"

#include <cstring>
#include <fstream>
#include <iterator>

#include "../common/binary.hpp"
#include "voxgrid/errors.hpp"

namespace voxgrid::nn {

std::vector<unsigned char> encode_checkpoint(const Checkpoint& c) {
  const std::size_t n = c.params.size();
  if (c.adam.m.size() != n || c.adam.v.size() != n) {
    throw ArgumentError("checkpoint: optimizer moments do not match the parameter count");
  }
  detail::Writer w;
  w.bytes("VXCK", 4);
  w.u32(kCheckpointVersion);
  w.u32(static_cast<std::uint32_t>(c.meta_json.size()));
  w.bytes(c.meta_json.data(), c.meta_json.size());
  w.u64(n);
  for (float v : c.params) w.f32(v);
  w.u64(c.adam.step);
  w.f64(c.adam.lr);
  w.f64(c.adam.beta1);
  w.f64(c.adam.beta2);
  w.f64(c.adam.eps);
  for (float v : c.adam.m) w.f32(v);
  for (float v : c.adam.v) w.f32(v);
  return w.take();
}

namespace {

std::vector<float> read_floats(detail::Reader& r, std::uint64_t n, const char* what) {
  if (r.remaining() / 4 < n) {
    throw FormatError(std::string("truncated checkpoint ") + what + ": expected " + std::to_string(n * 4) +
                          " bytes, found " + std::to_string(r.remaining()),
                      r.offset());
  }
  std::vector<float> out(n);
  for (auto& v : out) v = std::bit_cast<float>(r.u32(what));
  return out;
}

}  // namespace

Checkpoint decode_checkpoint(std::span<const unsigned char> bytes) {
  detail::Reader r(bytes, "checkpoint");
  r.need(4, "magic");
  if (std::memcmp(bytes.data(), "VXCK", 4) != 0) throw FormatError("bad checkpoint magic", 0);
  r.take(4);
  const std::size_t version_at = r.offset();
  const std::uint32_t version = r.u32("version");
  if (version != kCheckpointVersion) {
    throw FormatError("unsupported checkpoint version " + std::to_string(version), version_at);
  }
  Checkpoint c;
  const std::uint32_t meta_len = r.u32("meta length");
  r.need(meta_len, "meta");
  auto meta = r.take(meta_len);
  c.meta_json.assign(meta.begin(), meta.end());
  const std::uint64_t n = r.u64("parameter count");
  c.params = read_floats(r, n, "parameters");
  c.adam.step = r.u64("adam step");
  c.adam.lr = r.f64("learning rate");
  c.adam.beta1 = r.f64("beta1");
  c.adam.beta2 = r.f64("beta2");
  c.adam.eps = r.f64("eps");
  c.adam.m = read_floats(r, n, "first moment");
  c.adam.v = read_floats(r, n, "second moment");
  if (r.remaining() != 0) {
    throw FormatError("trailing bytes after checkpoint: " + std::to_string(r.remaining()), r.offset());
  }
  return c;
}

void save_checkpoint(const Checkpoint& ckpt, const std::filesystem::path& path) {
  const auto bytes = encode_checkpoint(ckpt);
  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  if (!out) throw DataError("cannot open '" + path.string() + "' for writing");
  out.write(reinterpret_cast<const char*>(bytes.data()), static_cast<std::streamsize>(bytes.size()));
  if (!out) throw DataError("failed writing '" + path.string() + "'");
}

Checkpoint load_checkpoint(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw DataError("cannot open checkpoint '" + path.string() + "'");
  std::vector<unsigned char> bytes((std::istreambuf_iterator<char>(in)), std::istreambuf_iterator<char>());
  return decode_checkpoint(bytes);
}

}  // namespace voxgrid::nn
