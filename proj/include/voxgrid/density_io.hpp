#pragma once

#include <filesystem>
#include <map>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include "voxgrid/chem.hpp"
#include "voxgrid/density_map.hpp"
#include "voxgrid/grid.hpp"

namespace voxgrid::io {

// VOXB layout, all little-endian:
//   char[4] "VOXB" | u32 version (=1) | u32 C | u32 nx, ny, nz | f64 spacing |
//   f64 origin[3] | u32 tag length + UTF-8 tag bytes | f32 payload[C*nx*ny*nz]
// The payload follows VoxelGrid's raster order (channel, z, y, x; x fastest).

inline constexpr std::uint32_t kVoxbVersion = 1;

struct TaggedGrid {
  grid::VoxelGrid grid;
  std::string tag;
};

void write_voxb(const grid::VoxelGrid& grid, const std::string& tag,
                const std::filesystem::path& path);
/// Throws FormatError (with byte offset) on bad magic/version or truncation.
TaggedGrid read_voxb(const std::filesystem::path& path);
/// Decodes an in-memory VOXB image.
TaggedGrid decode_voxb(std::span<const unsigned char> bytes);
std::vector<unsigned char> encode_voxb(const grid::VoxelGrid& grid, const std::string& tag);

void write_map(const DensityMap& map, const std::filesystem::path& path);
DensityMap read_map(const std::filesystem::path& path);

struct SynthDensityParams {
  double sigma = 0.4;  // Å
  double truncation_sigmas = 4.0;
};

/// Sum over atoms of Z (2 pi s^2)^(-3/2) exp(-d^2 / 2 s^2), electrons per Å^3.
DensityMap synth_density(const chem::Structure& s, const grid::GridGeometry& geometry,
                         const SynthDensityParams& params = {});

struct SampleRecord {
  std::string id;
  std::filesystem::path structure;  // resolved against the manifest directory
  std::optional<std::filesystem::path> density;
  std::optional<std::filesystem::path> pocket_density;
  std::map<std::string, double> labels;
  std::optional<std::string> sequence;
  std::optional<std::string> fingerprint;  // hex bitset
  std::optional<std::string> split;
};

struct Manifest {
  std::filesystem::path directory;
  std::vector<SampleRecord> samples;

  const SampleRecord& find(const std::string& id) const;
};

/// Parses and validates a manifest (see docs/manifest.md). Errors carry the
/// offending record index.
Manifest load_manifest(const std::filesystem::path& path);
/// Same validation for an already-parsed document; `directory` anchors
/// relative paths.
Manifest parse_manifest(const std::string& json_text, const std::filesystem::path& directory);
void save_manifest(const Manifest& m, const std::filesystem::path& path);

/// Records in manifest order, optionally restricted to one split tag.
std::vector<const SampleRecord*> iterate_samples(const Manifest& m,
                                                 const std::optional<std::string>& split = {});

/// Structure with the manifest's labels attached; its id is the record id.
chem::Structure load_structure(const SampleRecord& r);

}  // namespace voxgrid::io
