#pragma once

#include <algorithm>
#include <array>
#include <cctype>
#include <cstddef>
#include <map>
#include <optional>
#include <stdexcept>
#include <string>
#include <string_view>
#include <utility>
#include <vector>

#include "oneshot/molecule/graph.hpp"

namespace oneshot::mol {

enum class ParseErrorKind {
  kEmpty,
  kUnbalancedParenthesis,
  kUnmatchedRingClosure,
  kUnknownElement,
  kUnexpectedCharacter,
  kInvalidBond,
};

inline const char* to_string(ParseErrorKind k) {
  switch (k) {
    case ParseErrorKind::kEmpty: return "empty SMILES";
    case ParseErrorKind::kUnbalancedParenthesis: return "unbalanced parenthesis";
    case ParseErrorKind::kUnmatchedRingClosure: return "unmatched ring closure";
    case ParseErrorKind::kUnknownElement: return "unknown element symbol";
    case ParseErrorKind::kUnexpectedCharacter: return "unexpected character";
    case ParseErrorKind::kInvalidBond: return "invalid bond";
  }
  return "parse error";
}

class ParseError : public std::runtime_error {
 public:
  ParseError(ParseErrorKind kind, std::size_t offset, const std::string& detail = {})
      : std::runtime_error(std::string(to_string(kind)) + " at byte " + std::to_string(offset) +
                           (detail.empty() ? "" : ": " + detail)),
        kind_(kind),
        offset_(offset) {}

  ParseErrorKind kind() const noexcept { return kind_; }
  std::size_t offset() const noexcept { return offset_; }

 private:
  ParseErrorKind kind_;
  std::size_t offset_;
};

namespace detail {

inline constexpr std::array<std::string_view, 118> kElementSymbols = {
    "H",  "He", "Li", "Be", "B",  "C",  "N",  "O",  "F",  "Ne", "Na", "Mg", "Al", "Si", "P",  "S",  "Cl", "Ar",
    "K",  "Ca", "Sc", "Ti", "V",  "Cr", "Mn", "Fe", "Co", "Ni", "Cu", "Zn", "Ga", "Ge", "As", "Se", "Br", "Kr",
    "Rb", "Sr", "Y",  "Zr", "Nb", "Mo", "Tc", "Ru", "Rh", "Pd", "Ag", "Cd", "In", "Sn", "Sb", "Te", "I",  "Xe",
    "Cs", "Ba", "La", "Ce", "Pr", "Nd", "Pm", "Sm", "Eu", "Gd", "Tb", "Dy", "Ho", "Er", "Tm", "Yb", "Lu", "Hf",
    "Ta", "W",  "Re", "Os", "Ir", "Pt", "Au", "Hg", "Tl", "Pb", "Bi", "Po", "At", "Rn", "Fr", "Ra", "Ac", "Th",
    "Pa", "U",  "Np", "Pu", "Am", "Cm", "Bk", "Cf", "Es", "Fm", "Md", "No", "Lr", "Rf", "Db", "Sg", "Bh", "Hs",
    "Mt", "Ds", "Rg", "Cn", "Nh", "Fl", "Mc", "Lv", "Ts", "Og"};

inline bool is_element(std::string_view s) {
  return std::find(kElementSymbols.begin(), kElementSymbols.end(), s) != kElementSymbols.end();
}

// Lowest-first normal valences of the organic subset.
inline std::vector<int> normal_valences(std::string_view symbol) {
  if (symbol == "B") return {3};
  if (symbol == "C") return {4};
  if (symbol == "N") return {3, 5};
  if (symbol == "O") return {2};
  if (symbol == "P") return {3, 5};
  if (symbol == "S") return {2, 4, 6};
  if (symbol == "F" || symbol == "Cl" || symbol == "Br" || symbol == "I") return {1};
  return {};
}

inline BondOrder bond_from_char(char c) {
  switch (c) {
    case '=': return BondOrder::kDouble;
    case '#': return BondOrder::kTriple;
    case '$': return BondOrder::kQuadruple;
    case ':': return BondOrder::kAromatic;
    default: return BondOrder::kSingle;  // '-', '/', '\'
  }
}

struct RingOpen {
  std::size_t atom;
  std::optional<BondOrder> order;
  std::size_t offset;
};

class SmilesParser {
 public:
  explicit SmilesParser(std::string_view s) : s_(s) {}

  MoleculeGraph parse() {
    if (s_.empty()) throw ParseError(ParseErrorKind::kEmpty, 0);
    g_.source_smiles = std::string(s_);
    while (pos_ < s_.size()) step();
    if (!branches_.empty()) throw ParseError(ParseErrorKind::kUnbalancedParenthesis, branches_.back().second, "unclosed '('");
    if (!rings_.empty()) {
      const auto& [label, open] = *rings_.begin();
      throw ParseError(ParseErrorKind::kUnmatchedRingClosure, open.offset, "ring label " + std::to_string(label) + " never closed");
    }
    if (pending_) throw ParseError(ParseErrorKind::kInvalidBond, pending_offset_, "dangling bond symbol");
    if (g_.atoms.empty()) throw ParseError(ParseErrorKind::kEmpty, 0, "no atoms");
    finish();
    return std::move(g_);
  }

 private:
  void step() {
    const char c = s_[pos_];
    if (c == '(') {
      if (!prev_) throw ParseError(ParseErrorKind::kUnbalancedParenthesis, pos_, "branch without preceding atom");
      if (pending_) throw ParseError(ParseErrorKind::kInvalidBond, pending_offset_, "bond before '('");
      branches_.emplace_back(*prev_, pos_);
      ++pos_;
    } else if (c == ')') {
      if (branches_.empty()) throw ParseError(ParseErrorKind::kUnbalancedParenthesis, pos_, "unmatched ')'");
      if (pending_) throw ParseError(ParseErrorKind::kInvalidBond, pending_offset_, "bond before ')'");
      prev_ = branches_.back().first;
      branches_.pop_back();
      ++pos_;
    } else if (c == '.') {
      if (pending_) throw ParseError(ParseErrorKind::kInvalidBond, pending_offset_, "bond before '.'");
      prev_.reset();
      ++pos_;
    } else if (c == '-' || c == '=' || c == '#' || c == '$' || c == ':' || c == '/' || c == '\\') {
      if (pending_) throw ParseError(ParseErrorKind::kInvalidBond, pos_, "two consecutive bond symbols");
      pending_ = bond_from_char(c);
      pending_offset_ = pos_;
      ++pos_;
    } else if (std::isdigit(static_cast<unsigned char>(c)) || c == '%') {
      ring_closure();
    } else if (c == '[') {
      bracket_atom();
    } else if (std::isalpha(static_cast<unsigned char>(c))) {
      organic_atom();
    } else {
      throw ParseError(ParseErrorKind::kUnexpectedCharacter, pos_, std::string("'") + c + "'");
    }
  }

  void ring_closure() {
    const std::size_t start = pos_;
    int label = 0;
    if (s_[pos_] == '%') {
      if (pos_ + 2 >= s_.size() || !std::isdigit(static_cast<unsigned char>(s_[pos_ + 1])) ||
          !std::isdigit(static_cast<unsigned char>(s_[pos_ + 2])))
        throw ParseError(ParseErrorKind::kUnexpectedCharacter, pos_, "'%' needs two digits");
      label = (s_[pos_ + 1] - '0') * 10 + (s_[pos_ + 2] - '0');
      pos_ += 3;
    } else {
      label = s_[pos_] - '0';
      ++pos_;
    }
    if (!prev_) throw ParseError(ParseErrorKind::kUnmatchedRingClosure, start, "ring label without preceding atom");
    auto it = rings_.find(label);
    if (it == rings_.end()) {
      rings_.emplace(label, RingOpen{*prev_, pending_, start});
      pending_.reset();
      return;
    }
    const RingOpen open = it->second;
    rings_.erase(it);
    if (open.order && pending_ && *open.order != *pending_)
      throw ParseError(ParseErrorKind::kInvalidBond, start, "conflicting ring-closure bond orders");
    std::optional<BondOrder> order = pending_ ? pending_ : open.order;
    pending_.reset();
    add_bond(open.atom, *prev_, order, start);
  }

  void organic_atom() {
    const std::size_t start = pos_;
    std::string symbol;
    bool aromatic = false;
    const char c = s_[pos_];
    const char n = pos_ + 1 < s_.size() ? s_[pos_ + 1] : '\0';
    if (c == 'C' && n == 'l') {
      symbol = "Cl";
    } else if (c == 'B' && n == 'r') {
      symbol = "Br";
    } else if (std::string_view("BCNOPSFI").find(c) != std::string_view::npos) {
      symbol = std::string(1, c);
    } else if (std::string_view("bcnops").find(c) != std::string_view::npos) {
      symbol = std::string(1, static_cast<char>(std::toupper(static_cast<unsigned char>(c))));
      aromatic = true;
    } else {
      // report the longest plausible symbol for the message
      std::string bad(1, c);
      if (std::islower(static_cast<unsigned char>(n))) bad += n;
      throw ParseError(ParseErrorKind::kUnknownElement, start, "'" + bad + "' is not an organic-subset atom");
    }
    pos_ += symbol.size();
    Atom a;
    a.symbol = symbol;
    a.element = element_from_symbol(symbol);
    a.aromatic = aromatic;
    add_atom(std::move(a), start);
  }

  void bracket_atom() {
    const std::size_t start = pos_;
    ++pos_;  // '['
    auto peek = [&]() { return pos_ < s_.size() ? s_[pos_] : '\0'; };
    auto digits = [&]() {
      int v = 0;
      bool any = false;
      while (std::isdigit(static_cast<unsigned char>(peek()))) {
        v = v * 10 + (s_[pos_++] - '0');
        any = true;
      }
      return any ? std::optional<int>(v) : std::nullopt;
    };

    digits();  // isotope, ignored

    Atom a;
    a.bracket = true;
    const std::size_t sym_at = pos_;
    const char c = peek();
    if (std::isupper(static_cast<unsigned char>(c))) {
      const char n = pos_ + 1 < s_.size() ? s_[pos_ + 1] : '\0';
      std::string two{c, n};
      if (std::islower(static_cast<unsigned char>(n)) && is_element(two)) {
        a.symbol = two;
        pos_ += 2;
      } else if (is_element(std::string(1, c))) {
        a.symbol = std::string(1, c);
        pos_ += 1;
      } else {
        throw ParseError(ParseErrorKind::kUnknownElement, sym_at, std::string("'") + c + "'");
      }
    } else if (std::islower(static_cast<unsigned char>(c))) {
      const char n = pos_ + 1 < s_.size() ? s_[pos_ + 1] : '\0';
      const std::string two{c, n};
      if (two == "se" || two == "as" || two == "te") {
        a.symbol = std::string{static_cast<char>(std::toupper(static_cast<unsigned char>(c))), n};
        pos_ += 2;
      } else if (std::string_view("bcnops").find(c) != std::string_view::npos) {
        a.symbol = std::string(1, static_cast<char>(std::toupper(static_cast<unsigned char>(c))));
        pos_ += 1;
      } else {
        throw ParseError(ParseErrorKind::kUnknownElement, sym_at, std::string("'") + c + "'");
      }
      a.aromatic = true;
    } else {
      throw ParseError(ParseErrorKind::kUnknownElement, sym_at, "bracket atom without element symbol");
    }
    a.element = element_from_symbol(a.symbol);

    while (peek() == '@') ++pos_;  // chirality, ignored
    if (s_.substr(pos_, 2) == "TH" || s_.substr(pos_, 2) == "AL" || s_.substr(pos_, 2) == "SP" ||
        s_.substr(pos_, 2) == "TB" || s_.substr(pos_, 2) == "OH") {
      if (pos_ > 0 && s_[pos_ - 1] == '@') {
        pos_ += 2;
        digits();
      }
    }
    if (peek() == 'H') {
      ++pos_;
      a.implicit_hydrogens = digits().value_or(1);
    }
    while (peek() == '+' || peek() == '-') {
      const int sign = peek() == '+' ? 1 : -1;
      ++pos_;
      if (auto mag = digits()) {
        a.formal_charge += sign * *mag;
      } else {
        a.formal_charge += sign;
      }
    }
    if (peek() == ':') {
      ++pos_;
      if (!digits()) throw ParseError(ParseErrorKind::kUnexpectedCharacter, pos_, "atom class needs digits");
    }
    if (peek() != ']') {
      if (pos_ >= s_.size()) throw ParseError(ParseErrorKind::kUnexpectedCharacter, start, "unterminated bracket atom");
      throw ParseError(ParseErrorKind::kUnexpectedCharacter, pos_, std::string("'") + peek() + "' inside bracket atom");
    }
    ++pos_;
    add_atom(std::move(a), start);
  }

  void add_atom(Atom a, std::size_t offset) {
    g_.atoms.push_back(std::move(a));
    const std::size_t idx = g_.atoms.size() - 1;
    if (prev_) {
      add_bond(*prev_, idx, pending_, pending_ ? pending_offset_ : offset);
    } else if (pending_) {
      throw ParseError(ParseErrorKind::kInvalidBond, pending_offset_, "bond without preceding atom");
    }
    pending_.reset();
    prev_ = idx;
  }

  void add_bond(std::size_t a, std::size_t b, std::optional<BondOrder> order, std::size_t offset) {
    if (a == b) throw ParseError(ParseErrorKind::kInvalidBond, offset, "bond from an atom to itself");
    for (const Bond& e : g_.bonds)
      if ((e.begin == a && e.end == b) || (e.begin == b && e.end == a))
        throw ParseError(ParseErrorKind::kInvalidBond, offset, "duplicate bond");
    BondOrder o = BondOrder::kSingle;
    if (order) {
      o = *order;
    } else if (g_.atoms[a].aromatic && g_.atoms[b].aromatic) {
      o = BondOrder::kAromatic;
    }
    g_.bonds.push_back(Bond{a, b, o});
  }

  void finish() {
    for (const Bond& b : g_.bonds) {
      ++g_.atoms[b.begin].degree;
      ++g_.atoms[b.end].degree;
    }
    assign_ring_membership();
    assign_implicit_hydrogens();
  }

  // A bond lies on a ring iff its endpoints stay connected without it.
  void assign_ring_membership() {
    const auto adj = g_.adjacency();
    const std::size_t n = g_.atoms.size();
    std::vector<char> seen(n);
    std::vector<std::size_t> stack;
    for (const Bond& e : g_.bonds) {
      std::fill(seen.begin(), seen.end(), 0);
      stack.assign(1, e.begin);
      seen[e.begin] = 1;
      bool connected = false;
      while (!stack.empty() && !connected) {
        const std::size_t v = stack.back();
        stack.pop_back();
        for (std::size_t u : adj[v]) {
          if ((v == e.begin && u == e.end) || (v == e.end && u == e.begin)) continue;
          if (u == e.end) {
            connected = true;
            break;
          }
          if (!seen[u]) {
            seen[u] = 1;
            stack.push_back(u);
          }
        }
      }
      if (connected) g_.atoms[e.begin].in_ring = g_.atoms[e.end].in_ring = true;
    }
  }

  void assign_implicit_hydrogens() {
    std::vector<int> used(g_.atoms.size(), 0);
    for (const Bond& b : g_.bonds) {
      used[b.begin] += valence_contribution(b.order);
      used[b.end] += valence_contribution(b.order);
    }
    for (std::size_t i = 0; i < g_.atoms.size(); ++i) {
      Atom& a = g_.atoms[i];
      if (a.bracket) continue;
      const int need = used[i] + (a.aromatic ? 1 : 0);
      std::vector<int> allowed = normal_valences(a.symbol);
      if (a.aromatic) allowed.resize(std::min<std::size_t>(allowed.size(), 1));
      a.implicit_hydrogens = 0;
      for (int v : allowed) {
        if (v >= need) {
          a.implicit_hydrogens = v - need;
          break;
        }
      }
    }
  }

  std::string_view s_;
  std::size_t pos_ = 0;
  MoleculeGraph g_;
  std::optional<std::size_t> prev_;
  std::optional<BondOrder> pending_;
  std::size_t pending_offset_ = 0;
  std::vector<std::pair<std::size_t, std::size_t>> branches_;  // (atom, offset of '(')
  std::map<int, RingOpen> rings_;
};

}  // namespace detail

/// Parses the supported SMILES subset into a molecular graph. Stereo marks,
/// isotopes and atom classes are accepted and discarded.
inline MoleculeGraph parse_smiles(std::string_view smiles) { return detail::SmilesParser(smiles).parse(); }

}  // namespace oneshot::mol
