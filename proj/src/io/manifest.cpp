#include <cmath>
#include <fstream>
#include <set>
#include <sstream>

#include "json.hpp"

#include "voxgrid/density_io.hpp"
#include "voxgrid/errors.hpp"

namespace voxgrid::io {
namespace fs = std::filesystem;
using nlohmann::json;

namespace {

[[noreturn]] void record_error(std::size_t index, const std::string& what) {
  throw DataError("manifest record " + std::to_string(index) + ": " + what);
}

std::optional<std::string> optional_string(const json& rec, const char* key, std::size_t index) {
  if (!rec.contains(key) || rec[key].is_null()) return std::nullopt;
  if (!rec[key].is_string()) record_error(index, std::string("field '") + key + "' must be a string");
  return rec[key].get<std::string>();
}

fs::path resolve(const fs::path& directory, const std::string& p) {
  fs::path path(p);
  return path.is_absolute() ? path : directory / path;
}

void require_file(const fs::path& p, std::size_t index, const char* field) {
  if (!fs::is_regular_file(p)) {
    record_error(index, std::string("field '") + field + "' references missing file '" +
                            p.string() + "'");
  }
}

bool is_hex(const std::string& s) {
  for (char c : s) {
    if (!std::isxdigit(static_cast<unsigned char>(c))) return false;
  }
  return true;
}

}  // namespace

const SampleRecord& Manifest::find(const std::string& id) const {
  for (const auto& r : samples) {
    if (r.id == id) return r;
  }
  throw ArgumentError("no sample with id '" + id + "' in manifest");
}

Manifest parse_manifest(const std::string& json_text, const fs::path& directory) {
  json doc;
  try {
    doc = json::parse(json_text);
  } catch (const json::parse_error& e) {
    throw DataError(std::string("manifest is not valid JSON: ") + e.what());
  }
  if (!doc.is_object() || !doc.contains("samples") || !doc["samples"].is_array()) {
    throw DataError("manifest must be an object with a 'samples' array");
  }
  Manifest m;
  m.directory = directory;
  std::set<std::string> seen;
  const auto& samples = doc["samples"];
  for (std::size_t i = 0; i < samples.size(); ++i) {
    const json& rec = samples[i];
    if (!rec.is_object()) record_error(i, "must be an object");
    SampleRecord r;
    auto id = optional_string(rec, "id", i);
    if (!id || id->empty()) record_error(i, "missing 'id'");
    r.id = *id;
    if (!seen.insert(r.id).second) record_error(i, "duplicate id '" + r.id + "'");

    auto structure = optional_string(rec, "structure", i);
    if (!structure) record_error(i, "missing 'structure' (sample '" + r.id + "')");
    r.structure = resolve(directory, *structure);
    require_file(r.structure, i, "structure");
    if (auto d = optional_string(rec, "density", i)) {
      r.density = resolve(directory, *d);
      require_file(*r.density, i, "density");
    }
    if (auto d = optional_string(rec, "pocket_density", i)) {
      r.pocket_density = resolve(directory, *d);
      require_file(*r.pocket_density, i, "pocket_density");
    }
    if (rec.contains("labels")) {
      if (!rec["labels"].is_object()) record_error(i, "'labels' must be an object");
      for (const auto& [name, value] : rec["labels"].items()) {
        if (!value.is_number() || !std::isfinite(value.get<double>())) {
          record_error(i, "label '" + name + "' of sample '" + r.id + "' is not a finite number");
        }
        r.labels[name] = value.get<double>();
      }
    }
    r.sequence = optional_string(rec, "sequence", i);
    r.fingerprint = optional_string(rec, "fingerprint", i);
    if (r.fingerprint && !is_hex(*r.fingerprint)) {
      record_error(i, "fingerprint of sample '" + r.id + "' is not a hex string");
    }
    r.split = optional_string(rec, "split", i);
    m.samples.push_back(std::move(r));
  }
  return m;
}

Manifest load_manifest(const fs::path& path) {
  std::ifstream in(path);
  if (!in) throw DataError("cannot open manifest '" + path.string() + "'");
  std::stringstream ss;
  ss << in.rdbuf();
  return parse_manifest(ss.str(), path.parent_path().empty() ? fs::path(".") : path.parent_path());
}

void save_manifest(const Manifest& m, const fs::path& path) {
  json samples = json::array();
  const auto rel = [&](const fs::path& p) {
    return fs::path(p).lexically_relative(m.directory).generic_string();
  };
  for (const auto& r : m.samples) {
    json rec;
    rec["id"] = r.id;
    rec["structure"] = rel(r.structure);
    if (r.density) rec["density"] = rel(*r.density);
    if (r.pocket_density) rec["pocket_density"] = rel(*r.pocket_density);
    rec["labels"] = json::object();
    for (const auto& [k, v] : r.labels) rec["labels"][k] = v;
    if (r.sequence) rec["sequence"] = *r.sequence;
    if (r.fingerprint) rec["fingerprint"] = *r.fingerprint;
    if (r.split) rec["split"] = *r.split;
    samples.push_back(std::move(rec));
  }
  std::ofstream out(path);
  if (!out) throw DataError("cannot write manifest '" + path.string() + "'");
  out << json{{"samples", samples}}.dump(2) << '\n';
}

std::vector<const SampleRecord*> iterate_samples(const Manifest& m,
                                                 const std::optional<std::string>& split) {
  std::vector<const SampleRecord*> out;
  for (const auto& r : m.samples) {
    if (!split || (r.split && *r.split == *split)) out.push_back(&r);
  }
  return out;
}

chem::Structure load_structure(const SampleRecord& r) {
  chem::Structure s = chem::read_xyz(r.structure.string(), r.id);
  s.id = r.id;
  s.labels = r.labels;
  s.validate();
  return s;
}

}  // namespace voxgrid::io
