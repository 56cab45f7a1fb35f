#include "voxgrid/chem.hpp"

#include <array>
#include <cmath>
#include <fstream>
#include <iomanip>
#include <sstream>

#include "voxgrid/errors.hpp"

namespace voxgrid::chem {
namespace {

// Bondi (1964) radii; hydrogen 1.20 Å.
constexpr std::array<ElementInfo, 14> kElements{{
    {"H", 1, 1.008, 1.20},
    {"B", 5, 10.81, 1.92},
    {"C", 6, 12.011, 1.70},
    {"N", 7, 14.007, 1.55},
    {"O", 8, 15.999, 1.52},
    {"F", 9, 18.998, 1.47},
    {"Si", 14, 28.085, 2.10},
    {"P", 15, 30.974, 1.80},
    {"S", 16, 32.06, 1.80},
    {"Cl", 17, 35.45, 1.75},
    {"Se", 34, 78.971, 1.90},
    {"Br", 35, 79.904, 1.85},
    {"I", 53, 126.904, 1.98},
    {"Zn", 30, 65.38, 1.39},
}};

bool finite(grid::Vec3 v) { return std::isfinite(v.x) && std::isfinite(v.y) && std::isfinite(v.z); }

}  // namespace

const ElementInfo* find_element(std::string_view symbol) {
  for (const auto& e : kElements) {
    if (e.symbol == symbol) return &e;
  }
  return nullptr;
}

const ElementInfo& element(std::string_view symbol, std::string_view context) {
  if (const auto* e = find_element(symbol)) return *e;
  std::string msg = "unknown element '" + std::string(symbol) + "'";
  if (!context.empty()) msg += " in structure '" + std::string(context) + "'";
  throw DataError(msg);
}

void Structure::validate() const {
  if (atoms.empty()) throw DataError("structure '" + id + "' has no atoms");
  for (const auto& a : atoms) {
    element(a.element, id);
    if (!finite(a.position)) throw DataError("structure '" + id + "' has a non-finite coordinate");
  }
  for (const auto& [name, value] : labels) {
    if (!std::isfinite(value)) {
      throw DataError("structure '" + id + "' label '" + name + "' is not finite");
    }
  }
}

std::vector<Atom> Structure::select(Role role) const {
  std::vector<Atom> out;
  for (const auto& a : atoms) {
    if (a.role == role) out.push_back(a);
  }
  return out;
}

grid::Vec3 center_of_mass(std::span<const Atom> atoms) {
  if (atoms.empty()) throw ArgumentError("center_of_mass of an empty atom set");
  double total = 0.0;
  grid::Vec3 acc;
  for (const auto& a : atoms) {
    const double m = element(a.element).mass;
    acc = acc + m * a.position;
    total += m;
  }
  return (1.0 / total) * acc;
}

std::vector<Atom> rotate_atoms(std::span<const Atom> atoms, const grid::Rotation& rot,
                               grid::Vec3 pivot) {
  std::vector<Atom> out(atoms.begin(), atoms.end());
  for (auto& a : out) a.position = pivot + rot.apply(a.position - pivot);
  return out;
}

Structure read_xyz(const std::string& path, const std::string& fallback_id) {
  std::ifstream in(path);
  if (!in) throw DataError("cannot open structure file '" + path + "'");
  std::string line;
  std::size_t count = 0;
  if (!std::getline(in, line) || !(std::istringstream(line) >> count)) {
    throw DataError("structure file '" + path + "': first line must hold the atom count");
  }
  Structure s;
  std::getline(in, line);
  std::istringstream(line) >> s.id;
  if (s.id.empty()) s.id = fallback_id;
  for (std::size_t n = 0; n < count; ++n) {
    if (!std::getline(in, line)) {
      throw DataError("structure file '" + path + "': expected " + std::to_string(count) +
                      " atoms, found " + std::to_string(n));
    }
    std::istringstream row(line);
    Atom a;
    std::string role;
    if (!(row >> a.element >> a.position.x >> a.position.y >> a.position.z)) {
      throw DataError("structure file '" + path + "': malformed atom row " + std::to_string(n + 1));
    }
    if (row >> role) {
      if (role == "P" || role == "pocket") {
        a.role = Role::Pocket;
      } else if (role != "L" && role != "ligand") {
        throw DataError("structure file '" + path + "': unknown role '" + role + "'");
      }
    }
    s.atoms.push_back(std::move(a));
  }
  return s;
}

void write_xyz(const Structure& s, const std::string& path) {
  std::ofstream out(path);
  if (!out) throw DataError("cannot write structure file '" + path + "'");
  out << s.atoms.size() << '\n' << s.id << '\n';
  out << std::setprecision(17);
  for (const auto& a : s.atoms) {
    out << a.element << ' ' << a.position.x << ' ' << a.position.y << ' ' << a.position.z << ' '
        << (a.role == Role::Pocket ? 'P' : 'L') << '\n';
  }
}

}  // namespace voxgrid::chem
