#pragma once

#include <algorithm>
#include <cstddef>

#include "oneshot/autodiff/tensor.hpp"
#include "oneshot/molecule/graph.hpp"

namespace oneshot::mol {

/// Column layout of the atom feature matrix. Bump kFeatureLayoutVersion on
/// any change; checkpoints record it.
///
///   [0, 11)   element one-hot: B C N O P S F Cl Br I OTHER
///   [11, 18)  degree one-hot 0..6, larger degrees clamp to 6
///   [18, 23)  attached-hydrogen one-hot 0..4, larger counts clamp to 4
///   23        formal charge (scalar)
///   24        aromatic flag
///   25        ring-membership flag
inline constexpr int kFeatureLayoutVersion = 1;
inline constexpr std::size_t kElementOffset = 0;
inline constexpr std::size_t kElementSlots = 11;
inline constexpr std::size_t kDegreeOffset = 11;
inline constexpr std::size_t kDegreeSlots = 7;
inline constexpr std::size_t kHydrogenOffset = 18;
inline constexpr std::size_t kHydrogenSlots = 5;
inline constexpr std::size_t kChargeColumn = 23;
inline constexpr std::size_t kAromaticColumn = 24;
inline constexpr std::size_t kRingColumn = 25;
inline constexpr std::size_t kFeatureWidth = 26;

inline ad::Tensor featurize(const MoleculeGraph& g) {
  ad::Tensor x(ad::Shape{g.atom_count(), kFeatureWidth});
  for (std::size_t i = 0; i < g.atom_count(); ++i) {
    const Atom& a = g.atoms[i];
    x(i, kElementOffset + static_cast<std::size_t>(a.element)) = 1.0;
    x(i, kDegreeOffset + std::min<std::size_t>(static_cast<std::size_t>(a.degree), kDegreeSlots - 1)) = 1.0;
    x(i, kHydrogenOffset + std::min<std::size_t>(static_cast<std::size_t>(a.implicit_hydrogens), kHydrogenSlots - 1)) = 1.0;
    x(i, kChargeColumn) = a.formal_charge;
    x(i, kAromaticColumn) = a.aromatic ? 1.0 : 0.0;
    x(i, kRingColumn) = a.in_ring ? 1.0 : 0.0;
  }
  return x;
}

}  // namespace oneshot::mol
