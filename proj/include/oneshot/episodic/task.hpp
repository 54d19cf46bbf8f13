#pragma once

#include <cstddef>
#include <memory>
#include <string>
#include <vector>

#include "oneshot/graphconv/layers.hpp"
#include "oneshot/molecule/graph.hpp"
#include "oneshot/molecule/smiles.hpp"

namespace oneshot::episodic {

/// A parsed molecule together with its encoder input.
struct Molecule {
  mol::MoleculeGraph graph;
  gconv::GraphInput input;
};

using MoleculePtr = std::shared_ptr<const Molecule>;

inline MoleculePtr make_molecule(mol::MoleculeGraph g) {
  auto m = std::make_shared<Molecule>();
  m->input = gconv::prepare(g);
  m->graph = std::move(g);
  return m;
}

inline MoleculePtr make_molecule(std::string_view smiles) { return make_molecule(mol::parse_smiles(smiles)); }

struct Example {
  MoleculePtr molecule;
  int label = 0;
};

struct Task {
  std::string name;
  std::vector<Example> examples;

  std::size_t positives() const {
    std::size_t n = 0;
    for (const Example& e : examples) n += e.label == 1;
    return n;
  }
  std::size_t negatives() const { return examples.size() - positives(); }
};

}  // namespace oneshot::episodic
