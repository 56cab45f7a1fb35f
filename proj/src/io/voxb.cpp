#include <bit>
#include <cmath>
#include <cstring>
#include <fstream>
#include <iterator>

#include "voxgrid/density_io.hpp"
#include "voxgrid/errors.hpp"
#include "../common/binary.hpp"

namespace voxgrid::io {

using detail::Reader;
using detail::Writer;

std::vector<unsigned char> encode_voxb(const grid::VoxelGrid& grid, const std::string& tag) {
  Writer w;
  w.bytes("VOXB", 4);
  w.u32(kVoxbVersion);
  w.u32(static_cast<std::uint32_t>(grid.channels()));
  w.u32(static_cast<std::uint32_t>(grid.dims().nx));
  w.u32(static_cast<std::uint32_t>(grid.dims().ny));
  w.u32(static_cast<std::uint32_t>(grid.dims().nz));
  w.f64(grid.spacing());
  w.f64(grid.origin().x);
  w.f64(grid.origin().y);
  w.f64(grid.origin().z);
  w.u32(static_cast<std::uint32_t>(tag.size()));
  w.bytes(tag.data(), tag.size());
  for (float v : grid.data()) w.f32(v);
  return w.take();
}

TaggedGrid decode_voxb(std::span<const unsigned char> bytes) {
  Reader r(bytes, "VOXB");
  r.need(4, "magic");
  if (std::memcmp(bytes.data(), "VOXB", 4) != 0) throw FormatError("bad VOXB magic", 0);
  r.take(4);
  const std::size_t version_at = r.offset();
  const std::uint32_t version = r.u32("version");
  if (version != kVoxbVersion) {
    throw FormatError("unsupported VOXB version " + std::to_string(version), version_at);
  }
  const std::size_t channels_at = r.offset();
  const std::uint32_t channels = r.u32("channel count");
  grid::Dims dims;
  dims.nx = static_cast<int>(r.u32("nx"));
  dims.ny = static_cast<int>(r.u32("ny"));
  dims.nz = static_cast<int>(r.u32("nz"));
  grid::GridGeometry geometry;
  geometry.dims = dims;
  const std::size_t spacing_at = r.offset();
  geometry.spacing = r.f64("spacing");
  geometry.origin.x = r.f64("origin");
  geometry.origin.y = r.f64("origin");
  geometry.origin.z = r.f64("origin");
  if (channels == 0 || dims.nx <= 0 || dims.ny <= 0 || dims.nz <= 0) {
    throw FormatError("VOXB header declares an empty grid", channels_at);
  }
  if (!(geometry.spacing > 0.0) || !std::isfinite(geometry.spacing)) {
    throw FormatError("VOXB spacing must be positive", spacing_at);
  }
  const std::size_t tag_at = r.offset();
  const std::uint32_t tag_len = r.u32("tag length");
  if (r.remaining() < tag_len) {
    throw FormatError("truncated VOXB tag: expected " + std::to_string(tag_len) + " bytes, found " +
                          std::to_string(r.remaining()),
                      tag_at);
  }
  auto tag_bytes = r.take(tag_len);
  std::string tag(tag_bytes.begin(), tag_bytes.end());

  const std::size_t count = static_cast<std::size_t>(channels) * dims.voxels();
  const std::size_t payload_at = r.offset();
  if (r.remaining() != count * 4) {
    throw FormatError("VOXB payload size mismatch: expected " + std::to_string(count * 4) +
                          " bytes, found " + std::to_string(r.remaining()),
                      payload_at);
  }
  std::vector<float> data(count);
  auto payload = r.take(count * 4);
  for (std::size_t i = 0; i < count; ++i) {
    std::uint32_t v = 0;
    for (int b = 0; b < 4; ++b) v |= static_cast<std::uint32_t>(payload[4 * i + b]) << (8 * b);
    data[i] = std::bit_cast<float>(v);
    if (!std::isfinite(data[i])) {
      throw FormatError("VOXB payload holds a non-finite value", payload_at + 4 * i);
    }
  }
  return {grid::VoxelGrid(geometry, static_cast<int>(channels), std::move(data)), std::move(tag)};
}

void write_voxb(const grid::VoxelGrid& grid, const std::string& tag,
                const std::filesystem::path& path) {
  const auto bytes = encode_voxb(grid, tag);
  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  if (!out) throw DataError("cannot open '" + path.string() + "' for writing");
  out.write(reinterpret_cast<const char*>(bytes.data()), static_cast<std::streamsize>(bytes.size()));
  if (!out) throw DataError("failed writing '" + path.string() + "'");
}

TaggedGrid read_voxb(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw DataError("cannot open '" + path.string() + "'");
  std::vector<unsigned char> bytes((std::istreambuf_iterator<char>(in)),
                                   std::istreambuf_iterator<char>());
  return decode_voxb(bytes);
}

void write_map(const DensityMap& map, const std::filesystem::path& path) {
  write_voxb(map.grid(), map.source_tag(), path);
}

DensityMap read_map(const std::filesystem::path& path) {
  auto tg = read_voxb(path);
  if (tg.grid.channels() != 1) {
    throw FormatError("density map file '" + path.string() + "' has " +
                          std::to_string(tg.grid.channels()) + " channels, expected 1",
                      8);
  }
  return DensityMap(std::move(tg.grid), std::move(tg.tag));
}

}  // namespace voxgrid::io
