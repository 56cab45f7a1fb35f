#pragma once

#include <map>
#include <span>
#include <string>
#include <string_view>
#include <vector>

#include "voxgrid/grid.hpp"

namespace voxgrid::chem {

struct ElementInfo {
  std::string_view symbol;
  int atomic_number;
  double mass;        // standard atomic weight, u
  double vdw_radius;  // Bondi van der Waals radius, Å
};

/// Looks up an element by symbol (case-sensitive, e.g. "Cl"). Returns nullptr
/// when the symbol is not in the table.
const ElementInfo* find_element(std::string_view symbol);

/// Same as find_element but throws DataError naming `context` when missing.
const ElementInfo& element(std::string_view symbol, std::string_view context = {});

enum class Role { Ligand, Pocket };

struct Atom {
  std::string element;
  grid::Vec3 position;
  Role role = Role::Ligand;
};

/// A molecule or complex: typed atoms plus named scalar labels.
struct Structure {
  std::string id;
  std::vector<Atom> atoms;
  std::map<std::string, double> labels;

  /// Throws DataError on an empty atom list, unknown element, non-finite
  /// coordinate or label.
  void validate() const;
  /// Atoms with the given role, in input order.
  std::vector<Atom> select(Role role) const;
};

/// Mass-weighted mean position. Throws ArgumentError when `atoms` is empty.
grid::Vec3 center_of_mass(std::span<const Atom> atoms);

/// Rotates every atom about `pivot`.
std::vector<Atom> rotate_atoms(std::span<const Atom> atoms, const grid::Rotation& rot,
                               grid::Vec3 pivot);

/// Reads an XYZ file: atom count, comment line, then `El x y z [L|P]` rows.
/// The optional fifth column marks the role (default ligand). The structure id
/// is the first token of the comment line, or `fallback_id` when blank.
Structure read_xyz(const std::string& path, const std::string& fallback_id = {});
void write_xyz(const Structure& s, const std::string& path);

}  // namespace voxgrid::chem
