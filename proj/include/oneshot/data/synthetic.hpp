#pragma once

#include <algorithm>
#include <array>
#include <cstdint>
#include <random>
#include <sstream>
#include <string>
#include <vector>

#include "oneshot/data/collection.hpp"
#include "oneshot/rng.hpp"

namespace oneshot::data {

// Synthetic task family. Molecules are alkane chains carrying a random set
// of substituents, at most one per chain carbon, so no skeleton atom reaches
// degree 4 unless the t-butyl group is present. Labels are computed from the
// parsed graph, not from the generator's choices.
//
// Every task is balanced: negatives beyond the task's positive count are
// left unlabelled (empty cell). With a rare positive class the query batches
// are mostly negatives and training learns to pull every query towards the
// negative support, which lowers the loss while destroying the ranking.

struct SyntheticConfig {
  std::size_t molecules = 1200;
  std::size_t min_substituents = 1;
  std::size_t max_substituents = 2;
  std::uint64_t seed = 0;
};

inline const std::array<const char*, 12> kSyntheticSubstituents = {
    "N", "O", "S", "F", "Cl", "Br", "I", "P", "B", "c1ccccc1", "C1CCCCC1", "C(C)(C)C"};

// Nine single-group tasks train; the three held-out tasks are unions of
// groups the training tasks cover (halogen, chalcogen, ring), so they are new
// tasks over familiar structure. P, B and t-butyl only act as distractors.
inline const std::array<const char*, 12> kSyntheticTasks = {
    "has_N", "has_O",   "has_S",     "has_F",   "has_Cl",      "has_Br",
    "has_I", "aromatic", "aliphatic_ring", "halogen", "chalcogen", "ring"};

inline SplitSpec synthetic_split() {
  SplitSpec s;
  for (std::size_t i = 0; i < kSyntheticTasks.size(); ++i)
    (i < 9 ? s.train_task_names : s.test_task_names).push_back(kSyntheticTasks[i]);
  return s;
}

inline std::array<int, 12> synthetic_labels(const mol::MoleculeGraph& g) {
  std::array<int, 12> y{};
  const std::array<const char*, 7> elements = {"N", "O", "S", "F", "Cl", "Br", "I"};
  for (const mol::Atom& a : g.atoms) {
    for (std::size_t k = 0; k < elements.size(); ++k)
      if (a.symbol == elements[k]) y[k] = 1;
    if (a.aromatic) y[7] = 1;
    if (a.in_ring && !a.aromatic) y[8] = 1;
  }
  y[9] = y[3] | y[4] | y[5] | y[6];
  y[10] = y[1] | y[2];
  y[11] = y[7] | y[8];
  return y;
}

inline std::string synthetic_smiles(Rng& rng, std::size_t min_k, std::size_t max_k) {
  std::vector<const char*> picked(kSyntheticSubstituents.begin(), kSyntheticSubstituents.end());
  std::shuffle(picked.begin(), picked.end(), rng);
  picked.resize(std::uniform_int_distribution<std::size_t>(min_k, max_k)(rng));
  std::uniform_int_distribution<std::size_t> extra(0, 3);
  const std::size_t length = std::max<std::size_t>(3, picked.size() + extra(rng));
  std::vector<const char*> slot(length, nullptr);
  std::vector<std::size_t> positions(length);
  for (std::size_t i = 0; i < length; ++i) positions[i] = i;
  std::shuffle(positions.begin(), positions.end(), rng);
  for (std::size_t i = 0; i < picked.size(); ++i) slot[positions[i]] = picked[i];
  std::string smiles;
  for (std::size_t i = 0; i < length; ++i) {
    smiles += 'C';
    if (slot[i]) smiles += std::string("(") + slot[i] + ")";
  }
  return smiles;
}

/// CSV text with columns smiles + one column per synthetic task.
inline std::string synthetic_csv(const SyntheticConfig& config) {
  if (config.min_substituents > config.max_substituents || config.max_substituents > kSyntheticSubstituents.size())
    throw ConfigError("synthetic: substituent count range is invalid");
  Rng rng = named_stream(config.seed, "synthetic");
  std::vector<std::string> smiles;
  std::vector<std::array<int, 12>> labels;
  for (std::size_t i = 0; i < config.molecules; ++i) {
    smiles.push_back(synthetic_smiles(rng, config.min_substituents, config.max_substituents));
    labels.push_back(synthetic_labels(mol::parse_smiles(smiles.back())));
  }
  Rng balance = named_stream(config.seed, "synthetic:balance");
  for (std::size_t k = 0; k < kSyntheticTasks.size(); ++k) {
    std::vector<std::size_t> negatives;
    std::size_t positives = 0;
    for (std::size_t i = 0; i < labels.size(); ++i) {
      if (labels[i][k])
        ++positives;
      else
        negatives.push_back(i);
    }
    std::shuffle(negatives.begin(), negatives.end(), balance);
    for (std::size_t j = positives; j < negatives.size(); ++j) labels[negatives[j]][k] = -1;
  }

  std::ostringstream os;
  os << "smiles";
  for (const char* t : kSyntheticTasks) os << ',' << t;
  os << '\n';
  for (std::size_t i = 0; i < smiles.size(); ++i) {
    os << smiles[i];
    for (int y : labels[i]) {
      os << ',';
      if (y >= 0) os << y;
    }
    os << '\n';
  }
  return os.str();
}

inline TaskCollection synthetic_collection(const SyntheticConfig& config) {
  std::istringstream is(synthetic_csv(config));
  return load_csv(is, "smiles", {}, "synthetic");
}

}  // namespace oneshot::data
