#include <gtest/gtest.h>

#include <algorithm>
#include <cstring>
#include <set>

#include "oneshot/molecule/features.hpp"
#include "oneshot/molecule/smiles.hpp"
#include "support/parser_oracle.hpp"

using namespace oneshot;
using namespace oneshot::mol;

namespace {

int count_ones(const ad::Tensor& x, std::size_t row, std::size_t begin, std::size_t end) {
  int n = 0;
  for (std::size_t c = begin; c < end; ++c) n += x(row, c) == 1.0;
  return n;
}

ParseErrorKind error_kind(const std::string& s, std::size_t* offset = nullptr) {
  try {
    parse_smiles(s);
  } catch (const ParseError& e) {
    if (offset) *offset = e.offset();
    return e.kind();
  }
  ADD_FAILURE() << "no parse error for '" << s << "'";
  return ParseErrorKind::kEmpty;
}

// Sorted feature rows, used as a multiset.
std::vector<std::vector<double>> feature_multiset(const MoleculeGraph& g) {
  const ad::Tensor x = featurize(g);
  std::vector<std::vector<double>> rows;
  for (std::size_t i = 0; i < x.rows(); ++i) rows.emplace_back(x.row(i).begin(), x.row(i).end());
  std::sort(rows.begin(), rows.end());
  return rows;
}

std::vector<int> degree_sequence(const MoleculeGraph& g) {
  std::vector<int> d;
  for (const Atom& a : g.atoms) d.push_back(a.degree);
  std::sort(d.begin(), d.end());
  return d;
}

}  // namespace

TEST(Parse, Methane) {
  const MoleculeGraph g = parse_smiles("C");
  ASSERT_EQ(g.atom_count(), 1u);
  EXPECT_EQ(g.bond_count(), 0u);
  EXPECT_EQ(g.atoms[0].symbol, "C");
  EXPECT_EQ(g.atoms[0].degree, 0);
  EXPECT_EQ(g.atoms[0].implicit_hydrogens, 4);
  EXPECT_EQ(g.source_smiles, "C");
}

TEST(Parse, BranchSetsTopology) {
  const MoleculeGraph g = parse_smiles("C(C)C");
  ASSERT_EQ(g.atom_count(), 3u);
  EXPECT_EQ(g.bond_count(), 2u);
  EXPECT_EQ(g.atoms[0].degree, 2);
  EXPECT_EQ(g.atoms[1].degree, 1);
  EXPECT_EQ(g.atoms[2].degree, 1);
}

TEST(Parse, Benzene) {
  const MoleculeGraph g = parse_smiles("c1ccccc1");
  ASSERT_EQ(g.atom_count(), 6u);
  EXPECT_EQ(g.bond_count(), 6u);
  for (const Atom& a : g.atoms) {
    EXPECT_TRUE(a.aromatic);
    EXPECT_TRUE(a.in_ring);
    EXPECT_EQ(a.implicit_hydrogens, 1);
    EXPECT_EQ(a.degree, 2);
  }
}

TEST(Parse, BracketAtoms) {
  const MoleculeGraph g = parse_smiles("[NH4+]");
  EXPECT_EQ(g.atoms[0].formal_charge, 1);
  EXPECT_EQ(g.atoms[0].implicit_hydrogens, 4);
  EXPECT_EQ(parse_smiles("[O-]C").atoms[0].formal_charge, -1);
  EXPECT_EQ(parse_smiles("[Fe+++]").atoms[0].formal_charge, 3);
  EXPECT_EQ(parse_smiles("[Cu+2]").atoms[0].formal_charge, 2);
  EXPECT_EQ(parse_smiles("[Na+]").atoms[0].element, Element::kOther);
  // A bracket atom without H gets none.
  EXPECT_EQ(parse_smiles("[C]").atoms[0].implicit_hydrogens, 0);
}

TEST(Parse, BondsAndRingClosures) {
  EXPECT_EQ(parse_smiles("C=C").bonds[0].order, BondOrder::kDouble);
  EXPECT_EQ(parse_smiles("C#N").bonds[0].order, BondOrder::kTriple);
  EXPECT_EQ(parse_smiles("C=C").atoms[0].implicit_hydrogens, 2);
  EXPECT_EQ(parse_smiles("C#N").atoms[1].implicit_hydrogens, 0);
  const MoleculeGraph two_digit = parse_smiles("C%12CCC%12");
  EXPECT_EQ(two_digit.bond_count(), 4u);
  for (const Atom& a : two_digit.atoms) EXPECT_TRUE(a.in_ring);
  // Ring bond order may sit on either side.
  EXPECT_EQ(parse_smiles("C=1CCCC1").bonds.back().order, BondOrder::kDouble);
}

TEST(Parse, RingMembershipExcludesChains) {
  const MoleculeGraph g = parse_smiles("CC1CCCCC1");
  EXPECT_FALSE(g.atoms[0].in_ring);
  for (std::size_t i = 1; i < g.atom_count(); ++i) EXPECT_TRUE(g.atoms[i].in_ring);
  // Biphenyl: the linking bond is not a ring bond, but both ends are ring atoms.
  const MoleculeGraph b = parse_smiles("c1ccccc1-c1ccccc1");
  for (const Atom& a : b.atoms) EXPECT_TRUE(a.in_ring);
}

TEST(Parse, DisconnectedComponentsAreKept) {
  const MoleculeGraph g = parse_smiles("[Na+].[Cl-]");
  EXPECT_EQ(g.atom_count(), 2u);
  EXPECT_EQ(g.bond_count(), 0u);
}

TEST(Parse, StereoMarkersAreIgnored) {
  const MoleculeGraph a = parse_smiles("C/C=C/C");
  const MoleculeGraph b = parse_smiles("CC=CC");
  EXPECT_EQ(featurize(a), featurize(b));
  const MoleculeGraph c = parse_smiles("N[C@@H](C)C(=O)O");
  EXPECT_EQ(c.atoms[1].implicit_hydrogens, 1);
}

TEST(Parse, AromaticHeteroatoms) {
  EXPECT_EQ(parse_smiles("c1ccncc1").atoms[3].implicit_hydrogens, 0);
  EXPECT_EQ(parse_smiles("c1cc[nH]c1").atoms[3].implicit_hydrogens, 1);
  EXPECT_EQ(parse_smiles("c1ccoc1").atoms[3].implicit_hydrogens, 0);
}

TEST(Parse, NoSelfLoopsOrDuplicateBonds) {
  for (const char* s : {"C1CC1", "c1ccc2ccccc2c1", "C12CC1C2", "CC(C)(C)C"}) {
    const MoleculeGraph g = parse_smiles(s);
    std::set<std::pair<std::size_t, std::size_t>> seen;
    std::vector<int> degree(g.atom_count());
    for (const Bond& b : g.bonds) {
      EXPECT_NE(b.begin, b.end) << s;
      ASSERT_LT(std::max(b.begin, b.end), g.atom_count());
      EXPECT_TRUE(seen.insert(std::minmax(b.begin, b.end)).second) << s;
      ++degree[b.begin];
      ++degree[b.end];
    }
    for (std::size_t i = 0; i < g.atom_count(); ++i) EXPECT_EQ(g.atoms[i].degree, degree[i]) << s;
  }
}

TEST(Parse, ErrorsAreDistinctAndCarryOffsets) {
  std::size_t off = 99;
  EXPECT_EQ(error_kind("", &off), ParseErrorKind::kEmpty);
  EXPECT_EQ(off, 0u);
  EXPECT_EQ(error_kind("CC(C", &off), ParseErrorKind::kUnbalancedParenthesis);
  EXPECT_EQ(off, 2u);
  EXPECT_EQ(error_kind("CC)C", &off), ParseErrorKind::kUnbalancedParenthesis);
  EXPECT_EQ(off, 2u);
  EXPECT_EQ(error_kind("C1CC", &off), ParseErrorKind::kUnmatchedRingClosure);
  EXPECT_EQ(off, 1u);
  EXPECT_EQ(error_kind("CC[Xx]", &off), ParseErrorKind::kUnknownElement);
  EXPECT_EQ(off, 3u);
  EXPECT_EQ(error_kind("CQ", &off), ParseErrorKind::kUnknownElement);
  EXPECT_EQ(off, 1u);
}

TEST(Parse, MatchesReferenceToolkitFixture) {
  const auto r = oracle::check_parser_fixture(ONESHOT_FIXTURE_DIR "/parser_oracle.csv");
  EXPECT_EQ(r.molecules, 50u);
  for (const auto& m : r.mismatches) ADD_FAILURE() << m.smiles << ": " << m.what;
}

// Hand counts: atoms are atom tokens; bonds are adjacent-atom pairs plus ring
// closures, minus what '.' and branch returns break.
TEST(Parse, HandCountedAtomsAndBonds) {
  struct Case {
    const char* smiles;
    std::size_t atoms, bonds;
  };
  for (const Case& c : std::vector<Case>{{"CCO", 3, 2},
                                          {"CC(=O)O", 4, 3},
                                          {"C1CCCCC1", 6, 6},
                                          {"CC.CC", 4, 2},
                                          {"C(C)(C)(C)C", 5, 4},
                                          {"c1ccc2ccccc2c1", 10, 11},
                                          {"OC(=O)C(N)Cc1ccccc1", 12, 12}}) {
    const MoleculeGraph g = parse_smiles(c.smiles);
    EXPECT_EQ(g.atom_count(), c.atoms) << c.smiles;
    EXPECT_EQ(g.bond_count(), c.bonds) << c.smiles;
  }
}

TEST(Featurize, MethaneRow) {
  const ad::Tensor x = featurize(parse_smiles("C"));
  ASSERT_EQ(x.shape(), (ad::Shape{1, kFeatureWidth}));
  EXPECT_EQ(kFeatureWidth, 26u);
  EXPECT_EQ(x(0, kElementOffset + 1), 1.0);
  EXPECT_EQ(x(0, kDegreeOffset + 0), 1.0);
  EXPECT_EQ(x(0, kHydrogenOffset + 4), 1.0);
  EXPECT_EQ(x(0, kChargeColumn), 0.0);
  EXPECT_EQ(count_ones(x, 0, 0, kFeatureWidth), 3);
}

TEST(Featurize, Ammonium) {
  const ad::Tensor x = featurize(parse_smiles("[NH4+]"));
  EXPECT_EQ(x(0, kChargeColumn), 1.0);
  EXPECT_EQ(x(0, kHydrogenOffset + 4), 1.0);
  EXPECT_EQ(x(0, kElementOffset + 2), 1.0);
}

TEST(Featurize, BenzeneRow) {
  const ad::Tensor x = featurize(parse_smiles("c1ccccc1"));
  for (std::size_t i = 0; i < 6; ++i) {
    EXPECT_EQ(x(i, kAromaticColumn), 1.0);
    EXPECT_EQ(x(i, kRingColumn), 1.0);
    EXPECT_EQ(x(i, kDegreeOffset + 2), 1.0);
    EXPECT_EQ(x(i, kHydrogenOffset + 1), 1.0);
  }
}

TEST(Featurize, OneHotBlocksHaveExactlyOneOne) {
  for (const char* s : {"CC(=O)Oc1ccccc1C(=O)O", "[Na+].[Cl-]", "C(C)(C)(C)(C)(C)(C)C", "[Se]", "OB(O)c1ccccc1"}) {
    const ad::Tensor x = featurize(parse_smiles(s));
    for (std::size_t i = 0; i < x.rows(); ++i) {
      EXPECT_EQ(count_ones(x, i, kElementOffset, kElementOffset + kElementSlots), 1) << s;
      EXPECT_EQ(count_ones(x, i, kDegreeOffset, kDegreeOffset + kDegreeSlots), 1) << s;
      EXPECT_EQ(count_ones(x, i, kHydrogenOffset, kHydrogenOffset + kHydrogenSlots), 1) << s;
    }
  }
  // Unsupported elements use the OTHER slot.
  EXPECT_EQ(featurize(parse_smiles("[Se]"))(0, kElementOffset + 10), 1.0);
}

TEST(Featurize, DeterministicByteForByte) {
  for (const char* s : {"CC(C)Cc1ccc(cc1)C(C)C(=O)O", "O=[N+]([O-])c1ccccc1", "C%10CC%10"}) {
    const ad::Tensor a = featurize(parse_smiles(s));
    const ad::Tensor b = featurize(parse_smiles(s));
    ASSERT_EQ(a.shape(), b.shape());
    EXPECT_EQ(std::memcmp(a.data(), b.data(), a.size() * sizeof(double)), 0) << s;
  }
}

TEST(Featurize, IsomorphicSmilesGiveIsomorphicGraphs) {
  const std::vector<std::pair<const char*, const char*>> pairs = {
      {"CCO", "OCC"},
      {"CC(=O)O", "OC(C)=O"},
      {"c1ccccc1O", "Oc1ccccc1"},
      {"CC(C)Cc1ccc(cc1)C(C)C(=O)O", "OC(=O)C(C)c1ccc(CC(C)C)cc1"},
      {"C1CCCCC1N", "NC1CCCCC1"},
      {"c1ccncc1", "n1ccccc1"},
      {"CC(=O)Nc1ccc(O)cc1", "Oc1ccc(NC(C)=O)cc1"},
      {"[Na+].[Cl-]", "[Cl-].[Na+]"},
  };
  for (const auto& [a, b] : pairs) {
    const MoleculeGraph ga = parse_smiles(a), gb = parse_smiles(b);
    EXPECT_EQ(ga.bond_count(), gb.bond_count()) << a << " / " << b;
    EXPECT_EQ(degree_sequence(ga), degree_sequence(gb)) << a << " / " << b;
    EXPECT_EQ(feature_multiset(ga), feature_multiset(gb)) << a << " / " << b;
  }
}
