#pragma once

#include <algorithm>
#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <set>
#include <string>
#include <utility>
#include <vector>

#include "oneshot/data/csv.hpp"
#include "oneshot/episodic/task.hpp"
#include "oneshot/error.hpp"

namespace oneshot::data {

using episodic::Task;

struct ParseFailure {
  std::size_t line = 0;
  std::string smiles;
  std::string message;
};

struct TaskCollection {
  std::string name;
  std::vector<Task> tasks;
  // provenance
  std::string source_path;
  std::string smiles_column;
  std::vector<std::string> task_columns;
  std::size_t rows = 0;
  std::vector<ParseFailure> parse_failures;

  const Task& task(const std::string& task_name) const {
    for (const Task& t : tasks)
      if (t.name == task_name) return t;
    throw ConfigError("collection " + name + " has no task '" + task_name + "'");
  }

  std::vector<std::string> task_names() const {
    std::vector<std::string> out;
    for (const Task& t : tasks) out.push_back(t.name);
    return out;
  }
};

/// Columns never treated as tasks when no task list is given.
inline bool is_identifier_column(const std::string& name) { return name == "mol_id" || name == "id" || name == "ID"; }

namespace detail {

inline std::string trim(std::string s) {
  const auto ws = [](unsigned char c) { return std::isspace(c) != 0; };
  s.erase(s.begin(), std::find_if_not(s.begin(), s.end(), ws));
  s.erase(std::find_if_not(s.rbegin(), s.rend(), ws).base(), s.end());
  return s;
}

// -1 for a missing label.
inline int parse_label(const std::string& raw, std::size_t line, const std::string& column) {
  const std::string s = trim(raw);
  if (s.empty()) return -1;
  char* end = nullptr;
  const double v = std::strtod(s.c_str(), &end);
  if (end == s.c_str() || *end != '\0' || (v != 0.0 && v != 1.0))
    throw DataError("label '" + s + "' in column '" + column + "' is not 0, 1 or empty", line);
  return v == 1.0 ? 1 : 0;
}

}  // namespace detail

/// Reads a headed CSV into one task per task column. Empty label cells drop
/// the row from that task only; rows whose SMILES fail to parse are dropped
/// from every task and listed in parse_failures. An empty `task_columns`
/// selects every column except the SMILES and identifier columns.
inline TaskCollection load_csv(std::istream& is, const std::string& smiles_column,
                               std::vector<std::string> task_columns, std::string name = "dataset") {
  std::vector<std::string> header;
  if (!read_csv_record(is, header)) throw SchemaError("CSV is empty");
  for (auto& h : header) h = detail::trim(h);
  auto column_of = [&](const std::string& col) -> std::size_t {
    auto it = std::find(header.begin(), header.end(), col);
    if (it == header.end()) throw SchemaError("CSV has no column '" + col + "'");
    return static_cast<std::size_t>(it - header.begin());
  };
  const std::size_t smiles_idx = column_of(smiles_column);
  if (task_columns.empty()) {
    for (const auto& h : header)
      if (h != smiles_column && !is_identifier_column(h)) task_columns.push_back(h);
  }
  std::vector<std::size_t> task_idx;
  for (const auto& c : task_columns) task_idx.push_back(column_of(c));
  if (std::set<std::string>(task_columns.begin(), task_columns.end()).size() != task_columns.size())
    throw SchemaError("task column listed twice");

  TaskCollection col;
  col.name = std::move(name);
  col.smiles_column = smiles_column;
  col.task_columns = task_columns;
  for (const auto& c : task_columns) col.tasks.push_back(Task{c, {}});

  std::vector<std::string> fields;
  std::size_t line = 1;
  while (read_csv_record(is, fields)) {
    ++line;
    if (fields.size() == 1 && detail::trim(fields[0]).empty()) continue;
    ++col.rows;
    if (fields.size() < header.size()) fields.resize(header.size());
    std::vector<int> labels;
    for (std::size_t k = 0; k < task_idx.size(); ++k)
      labels.push_back(detail::parse_label(fields[task_idx[k]], line, task_columns[k]));
    const std::string smiles = detail::trim(fields[smiles_idx]);
    episodic::MoleculePtr molecule;
    try {
      molecule = episodic::make_molecule(smiles);
    } catch (const mol::ParseError& e) {
      col.parse_failures.push_back(ParseFailure{line, smiles, e.what()});
      continue;
    }
    for (std::size_t k = 0; k < labels.size(); ++k)
      if (labels[k] >= 0) col.tasks[k].examples.push_back(episodic::Example{molecule, labels[k]});
  }
  return col;
}

inline TaskCollection load_csv(const std::string& path, const std::string& smiles_column,
                               std::vector<std::string> task_columns = {}) {
  std::ifstream is(path, std::ios::binary);
  if (!is) throw std::runtime_error("cannot open " + path);
  TaskCollection c = load_csv(is, smiles_column, std::move(task_columns), std::filesystem::path(path).stem().string());
  c.source_path = path;
  return c;
}

struct SplitSpec {
  std::vector<std::string> train_task_names;
  std::vector<std::string> test_task_names;

  void validate() const {
    std::set<std::string> train(train_task_names.begin(), train_task_names.end());
    for (const auto& t : test_task_names)
      if (train.count(t)) throw ConfigError("task '" + t + "' is in both the train and test split");
  }
};

/// Built-in low-data splits: "tox21", "sider", "muv".
inline SplitSpec builtin_split(const std::string& name) {
  if (name == "tox21") {
    return {{"NR-AR", "NR-AR-LBD", "NR-AhR", "NR-Aromatase", "NR-ER", "NR-ER-LBD", "NR-PPAR-gamma", "SR-ARE",
             "SR-ATAD5"},
            {"SR-HSE", "SR-MMP", "SR-p53"}};
  }
  if (name == "sider") {
    return {{"Hepatobiliary disorders",
             "Metabolism and nutrition disorders",
             "Product issues",
             "Eye disorders",
             "Investigations",
             "Musculoskeletal and connective tissue disorders",
             "Gastrointestinal disorders",
             "Social circumstances",
             "Immune system disorders",
             "Reproductive system and breast disorders",
             "Neoplasms benign, malignant and unspecified (incl cysts and polyps)",
             "General disorders and administration site conditions",
             "Endocrine disorders",
             "Surgical and medical procedures",
             "Vascular disorders",
             "Blood and lymphatic system disorders",
             "Skin and subcutaneous tissue disorders",
             "Congenital, familial and genetic disorders",
             "Infections and infestations",
             "Respiratory, thoracic and mediastinal disorders",
             "Psychiatric disorders"},
            {"Renal and urinary disorders", "Pregnancy, puerperium and perinatal conditions",
             "Ear and labyrinth disorders", "Cardiac disorders", "Nervous system disorders",
             "Injury, poisoning and procedural complications"}};
  }
  if (name == "muv") {
    return {{"MUV-466", "MUV-548", "MUV-600", "MUV-644", "MUV-652", "MUV-689", "MUV-692", "MUV-712", "MUV-713",
             "MUV-733", "MUV-737", "MUV-810"},
            {"MUV-832", "MUV-846", "MUV-852", "MUV-858", "MUV-859"}};
  }
  throw ConfigError("unknown built-in split '" + name + "' (expected tox21, sider or muv)");
}

/// Partitions a collection's tasks into train and test lists, in the order
/// the SplitSpec names them.
inline std::pair<std::vector<Task>, std::vector<Task>> split(const TaskCollection& collection, const SplitSpec& spec) {
  spec.validate();
  std::pair<std::vector<Task>, std::vector<Task>> out;
  for (const auto& n : spec.train_task_names) out.first.push_back(collection.task(n));
  for (const auto& n : spec.test_task_names) out.second.push_back(collection.task(n));
  return out;
}

}  // namespace oneshot::data
