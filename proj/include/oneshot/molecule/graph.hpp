#pragma once

#include <array>
#include <cstddef>
#include <cstdint>
#include <string>
#include <string_view>
#include <vector>

namespace oneshot::mol {

/// Elements with a dedicated feature slot. Everything else maps to kOther.
enum class Element : std::uint8_t { kB, kC, kN, kO, kP, kS, kF, kCl, kBr, kI, kOther };

inline constexpr std::array<std::string_view, 10> kFeaturedSymbols = {"B", "C", "N", "O", "P", "S", "F", "Cl", "Br", "I"};

inline Element element_from_symbol(std::string_view symbol) {
  for (std::size_t i = 0; i < kFeaturedSymbols.size(); ++i)
    if (kFeaturedSymbols[i] == symbol) return static_cast<Element>(i);
  return Element::kOther;
}

enum class BondOrder : std::uint8_t { kSingle = 1, kDouble = 2, kTriple = 3, kQuadruple = 4, kAromatic = 5 };

/// Contribution of a bond to an atom's valence. Aromatic bonds count as 1;
/// the aromatic atom itself adds one more (see assign_implicit_hydrogens).
inline int valence_contribution(BondOrder o) { return o == BondOrder::kAromatic ? 1 : static_cast<int>(o); }

struct Atom {
  std::string symbol;  // capitalized element symbol, e.g. "C", "Cl", "Na"
  Element element = Element::kOther;
  int degree = 0;
  int formal_charge = 0;
  bool aromatic = false;
  /// Attached hydrogens: derived from the valence table for organic-subset
  /// atoms, taken verbatim from the H count of bracket atoms.
  int implicit_hydrogens = 0;
  bool in_ring = false;
  bool bracket = false;
};

struct Bond {
  std::size_t begin = 0;
  std::size_t end = 0;
  BondOrder order = BondOrder::kSingle;
};

/// Undirected molecular graph in SMILES encounter order. May hold several
/// disconnected components.
struct MoleculeGraph {
  std::vector<Atom> atoms;
  std::vector<Bond> bonds;
  std::string source_smiles;

  std::size_t atom_count() const noexcept { return atoms.size(); }
  std::size_t bond_count() const noexcept { return bonds.size(); }

  /// Neighbor lists; neighbors appear in bond order.
  std::vector<std::vector<std::size_t>> adjacency() const {
    std::vector<std::vector<std::size_t>> adj(atoms.size());
    for (const Bond& b : bonds) {
      adj[b.begin].push_back(b.end);
      adj[b.end].push_back(b.begin);
    }
    return adj;
  }
};

}  // namespace oneshot::mol
