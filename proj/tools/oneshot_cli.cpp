// oneshot: featurize, train, eval, transfer and gradcheck from the command line.

#include <chrono>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <iomanip>
#include <iostream>
#include <map>
#include <sstream>
#include <string>
#include <vector>

#include <nlohmann/json.hpp>

#include "CLI11.hpp"
#include "oneshot/data/collection.hpp"
#include "oneshot/data/evaluate.hpp"
#include "oneshot/data/report.hpp"
#include "oneshot/data/synthetic.hpp"
#include "oneshot/io/checkpoint.hpp"
#include "oneshot/verify/gradcheck_suite.hpp"

namespace fs = std::filesystem;
using namespace oneshot;

namespace {

// Resolved configuration: defaults, then the --config file, then flags.
using Settings = std::map<std::string, std::string>;

const Settings& defaults() {
  static const Settings d = {
      {"dataset", ""},
      {"smiles_col", "smiles"},
      {"tasks", ""},
      {"split", ""},
      {"train_tasks", ""},
      {"test_tasks", ""},
      {"eval_dataset", ""},
      {"eval_smiles_col", ""},
      {"eval_split", ""},
      {"checkpoint", ""},
      {"variant", "reslstm"},
      {"n_pos", "10"},
      {"n_neg", "10"},
      {"batch_size", "128"},
      {"episodes", "2000"},
      {"steps_per_episode", "1"},
      {"seed", "0"},
      {"lr", "0.001"},
      {"beta1", "0.9"},
      {"beta2", "0.999"},
      {"epsilon", "1e-08"},
      {"depth", "3"},
      {"steps", "3"},
      {"tie_encoders", "1"},
      {"conv_widths", "64,128,64"},
      {"dense_width", "128"},
      {"self_term_per_edge", "1"},
      {"trials", "20"},
      {"out", "out"},
  };
  return d;
}

std::string trim(std::string s) { return data::detail::trim(std::move(s)); }

Settings read_config_file(const std::string& path) {
  std::ifstream is(path);
  if (!is) throw ConfigError("cannot open config file " + path);
  Settings s;
  std::string line;
  std::size_t n = 0;
  while (std::getline(is, line)) {
    ++n;
    line = trim(line);
    if (line.empty() || line[0] == '#') continue;
    const auto eq = line.find('=');
    if (eq == std::string::npos) throw ConfigError(path + ":" + std::to_string(n) + ": expected key = value");
    std::string key = trim(line.substr(0, eq));
    std::replace(key.begin(), key.end(), '-', '_');
    if (key == "command") continue;
    if (!defaults().count(key)) throw ConfigError(path + ":" + std::to_string(n) + ": unknown key '" + key + "'");
    s[key] = trim(line.substr(eq + 1));
  }
  return s;
}

std::vector<std::string> split_list(const std::string& s, char sep = ',') {
  std::vector<std::string> out;
  if (trim(s).empty()) return out;
  std::stringstream ss(s);
  for (std::string item; std::getline(ss, item, sep);) out.push_back(trim(item));
  return out;
}

template <typename T>
T number(const Settings& s, const std::string& key) {
  const std::string& v = s.at(key);
  std::istringstream is(v);
  T out{};
  if (!(is >> out) || !(is >> std::ws).eof()) throw ConfigError("setting " + key + " = '" + v + "' is not a number");
  if constexpr (std::is_unsigned_v<T>)
    if (v.find('-') != std::string::npos) throw ConfigError("setting " + key + " must be non-negative");
  return out;
}

bool flag(const Settings& s, const std::string& key) {
  const std::string& v = s.at(key);
  if (v == "1" || v == "true") return true;
  if (v == "0" || v == "false") return false;
  throw ConfigError("setting " + key + " = '" + v + "' is not a boolean");
}

episodic::EpisodeSpec episode_spec(const Settings& s) {
  episodic::EpisodeSpec spec{number<std::size_t>(s, "n_pos"), number<std::size_t>(s, "n_neg"),
                             number<std::size_t>(s, "batch_size")};
  spec.validate();
  return spec;
}

heads::ModelConfig model_config(const Settings& s) {
  heads::ModelConfig c;
  c.variant = heads::parse_variant(s.at("variant"));
  c.refinement_depth = number<std::size_t>(s, "depth");
  c.attention_steps = number<std::size_t>(s, "steps");
  c.tie_encoders = flag(s, "tie_encoders");
  c.encoder.conv_widths.clear();
  for (const auto& w : split_list(s.at("conv_widths"))) {
    Settings one{{"w", w}};
    c.encoder.conv_widths.push_back(number<std::size_t>(one, "w"));
  }
  if (c.encoder.conv_widths.empty()) throw ConfigError("conv_widths must list at least one width");
  c.encoder.dense_width = number<std::size_t>(s, "dense_width");
  c.encoder.self_term_per_edge = flag(s, "self_term_per_edge");
  return c;
}

episodic::TrainConfig train_config(const Settings& s) {
  episodic::TrainConfig t;
  t.episodes = number<std::size_t>(s, "episodes");
  t.steps_per_episode = number<std::size_t>(s, "steps_per_episode");
  t.seed = number<std::uint64_t>(s, "seed");
  t.adam.lr = number<double>(s, "lr");
  t.adam.beta1 = number<double>(s, "beta1");
  t.adam.beta2 = number<double>(s, "beta2");
  t.adam.epsilon = number<double>(s, "epsilon");
  t.model = model_config(s);
  t.spec = episode_spec(s);
  t.validate();
  return t;
}

void require_file(const Settings& s, const std::string& key) {
  const std::string& path = s.at(key);
  if (path.empty()) throw ConfigError("--" + key + " is required");
  if (!fs::is_regular_file(path)) throw ConfigError(key + " " + path + " does not exist");
}

data::TaskCollection load(const std::string& path, const std::string& smiles_col, const std::vector<std::string>& tasks) {
  data::TaskCollection c = data::load_csv(path, smiles_col, tasks);
  std::cerr << "loaded " << path << ": " << c.rows << " rows, " << c.tasks.size() << " tasks, "
            << c.parse_failures.size() << " unparsed SMILES\n";
  return c;
}

// Train/test task lists: explicit lists win over a named split; with neither,
// every task of the collection is on both sides.
data::SplitSpec resolve_split(const Settings& s, const std::string& split_key, const data::TaskCollection& c) {
  data::SplitSpec spec;
  const std::string name = s.at(split_key);
  if (name == "synthetic")
    spec = data::synthetic_split();
  else if (!name.empty() && name != "none")
    spec = data::builtin_split(name);
  if (split_key == "split") {
    if (!s.at("train_tasks").empty()) spec.train_task_names = split_list(s.at("train_tasks"), ';');
    if (!s.at("test_tasks").empty()) spec.test_task_names = split_list(s.at("test_tasks"), ';');
  }
  if (spec.train_task_names.empty() && spec.test_task_names.empty()) {
    spec.train_task_names = c.task_names();
    spec.test_task_names = c.task_names();
    return spec;
  }
  spec.validate();
  return spec;
}

void write_manifest(const std::string& command, const Settings& s, const std::vector<std::string>& outputs) {
  std::ostringstream os;
  os << "# resolved configuration; reuse with --config\n";
  os << "command = " << command << '\n';
  for (const auto& [k, v] : s) os << k << " = " << v << '\n';
  os << "# outputs:";
  for (const auto& o : outputs) os << ' ' << o;
  os << '\n';
  data::write_file((fs::path(s.at("out")) / "manifest.cfg").string(), os.str());
}

void print_report(const data::EvalReport& r) {
  std::cout << "spec " << r.spec_label() << ", metric " << r.metric << ", trials " << r.n_trials << ", seed " << r.seed
            << '\n';
  for (const auto& t : r.tasks) {
    if (t.skipped)
      std::cout << "  " << t.task << ": skipped (" << t.skip_reason << ")\n";
    else
      std::cout << "  " << t.task << ": mean auc " << std::fixed << std::setprecision(4) << t.mean_auc
                << ", mean accuracy " << t.mean_accuracy << std::defaultfloat << '\n';
  }
  std::cout << "median auc " << std::fixed << std::setprecision(4) << r.median_auc << ", median accuracy "
            << r.median_accuracy << std::defaultfloat << '\n';
}

std::vector<std::string> write_report(const Settings& s, const data::EvalReport& r) {
  const fs::path out = s.at("out");
  data::write_file((out / "report.json").string(), data::to_json(r).dump(2) + "\n");
  std::ostringstream csv;
  data::write_trials_csv(csv, r);
  data::write_file((out / "report.csv").string(), csv.str());
  return {"report.json", "report.csv"};
}

std::vector<std::string> write_training(const Settings& s, const heads::OneShotModel& model,
                                        const std::vector<episodic::LossRecord>& trace) {
  const fs::path out = s.at("out");
  io::save_checkpoint((out / "checkpoint.txt").string(), model);
  std::ostringstream csv;
  data::write_loss_csv(csv, trace);
  data::write_file((out / "loss.csv").string(), csv.str());
  return {"checkpoint.txt", "loss.csv"};
}

episodic::EpisodeCallback progress(std::size_t total) {
  auto start = std::chrono::steady_clock::now();
  return [total, start](const episodic::LossRecord& r) {
    const std::size_t done = r.episode + 1;
    if (done % 100 != 0 && done != total) return;
    const double secs = std::chrono::duration<double>(std::chrono::steady_clock::now() - start).count();
    std::cerr << "episode " << done << "/" << total << "  loss " << std::setprecision(4) << r.loss << "  " << std::fixed
              << std::setprecision(1) << secs << "s" << std::defaultfloat << '\n';
  };
}

// ---- commands ----

int cmd_featurize(const Settings& s) {
  require_file(s, "dataset");
  fs::create_directories(s.at("out"));
  std::ifstream is(s.at("dataset"), std::ios::binary);
  std::vector<std::string> header;
  if (!data::read_csv_record(is, header)) throw SchemaError("CSV is empty");
  for (auto& h : header) h = trim(h);
  const auto it = std::find(header.begin(), header.end(), s.at("smiles_col"));
  if (it == header.end()) throw SchemaError("CSV has no column '" + s.at("smiles_col") + "'");
  const std::size_t col = static_cast<std::size_t>(it - header.begin());

  const std::string path = (fs::path(s.at("out")) / "features.jsonl").string();
  std::ofstream os(path, std::ios::binary);
  if (!os) throw std::runtime_error("cannot write " + path);
  nlohmann::ordered_json head;
  head["format"] = "oneshot-features";
  head["feature_layout"] = mol::kFeatureLayoutVersion;
  head["feature_width"] = mol::kFeatureWidth;
  head["source"] = s.at("dataset");
  os << head.dump() << '\n';

  std::size_t records = 0, failures = 0, line = 1;
  std::vector<std::string> fields;
  while (data::read_csv_record(is, fields)) {
    ++line;
    if (fields.size() == 1 && trim(fields[0]).empty()) continue;
    const std::string smiles = col < fields.size() ? trim(fields[col]) : "";
    mol::MoleculeGraph g;
    try {
      g = mol::parse_smiles(smiles);
    } catch (const mol::ParseError& e) {
      ++failures;
      std::cerr << "line " << line << ": " << e.what() << '\n';
      continue;
    }
    const ad::Tensor x = mol::featurize(g);
    nlohmann::ordered_json rec;
    rec["line"] = line;
    rec["smiles"] = smiles;
    rec["atoms"] = g.atom_count();
    nlohmann::ordered_json bonds = nlohmann::ordered_json::array();
    for (const auto& b : g.bonds) bonds.push_back({b.begin, b.end, static_cast<int>(b.order)});
    rec["bonds"] = std::move(bonds);
    nlohmann::ordered_json feats = nlohmann::ordered_json::array();
    for (std::size_t i = 0; i < g.atom_count(); ++i) {
      std::vector<int> row;
      for (double v : x.row(i)) row.push_back(static_cast<int>(v));
      feats.push_back(row);
    }
    rec["features"] = std::move(feats);
    os << rec.dump() << '\n';
    ++records;
  }
  os.flush();
  if (!os) throw std::runtime_error("failed writing " + path);
  write_manifest("featurize", s, {"features.jsonl"});
  std::cout << "records " << records << "\nparse failures " << failures << '\n';
  return 0;
}

int cmd_train(const Settings& s) {
  const episodic::TrainConfig config = train_config(s);
  require_file(s, "dataset");
  const data::TaskCollection c = load(s.at("dataset"), s.at("smiles_col"), split_list(s.at("tasks"), ';'));
  const auto [train_tasks, unused] = data::split(c, resolve_split(s, "split", c));
  fs::create_directories(s.at("out"));
  heads::OneShotModel model = heads::OneShotModel::create(config.model, config.seed);
  const auto trace = episodic::train_model(model, train_tasks, config, progress(config.episodes));
  auto outputs = write_training(s, model, trace);
  outputs.push_back("manifest.cfg");
  write_manifest("train", s, outputs);
  std::cout << "trained " << heads::to_string(config.model.variant) << " for " << config.episodes << " episodes on "
            << train_tasks.size() << " tasks\n";
  return 0;
}

int cmd_eval(const Settings& s, bool variant_given) {
  const episodic::EpisodeSpec spec = episode_spec(s);
  const std::size_t trials = number<std::size_t>(s, "trials");
  const std::uint64_t seed = number<std::uint64_t>(s, "seed");
  require_file(s, "checkpoint");
  require_file(s, "dataset");
  const heads::OneShotModel model = io::load_checkpoint(s.at("checkpoint"));
  if (variant_given && heads::parse_variant(s.at("variant")) != model.variant())
    throw ConfigError("checkpoint holds a " + std::string(heads::to_string(model.variant())) +
                      " model but --variant is " + s.at("variant"));
  const data::TaskCollection c = load(s.at("dataset"), s.at("smiles_col"), split_list(s.at("tasks"), ';'));
  const auto [unused, test_tasks] = data::split(c, resolve_split(s, "split", c));
  fs::create_directories(s.at("out"));
  const data::EvalReport r = data::evaluate(model, test_tasks, spec, trials, seed);
  auto outputs = write_report(s, r);
  outputs.push_back("manifest.cfg");
  write_manifest("eval", s, outputs);
  print_report(r);
  return 0;
}

int cmd_transfer(const Settings& s) {
  episodic::TrainConfig config = train_config(s);
  const std::size_t trials = number<std::size_t>(s, "trials");
  require_file(s, "dataset");
  require_file(s, "eval_dataset");
  const data::TaskCollection train = load(s.at("dataset"), s.at("smiles_col"), split_list(s.at("tasks"), ';'));
  const std::string eval_col = s.at("eval_smiles_col").empty() ? s.at("smiles_col") : s.at("eval_smiles_col");
  const data::TaskCollection test = load(s.at("eval_dataset"), eval_col, {});
  const data::SplitSpec test_split = resolve_split(s, "eval_split", test);
  fs::create_directories(s.at("out"));

  heads::OneShotModel model = heads::OneShotModel::create(config.model, config.seed);
  const auto trace = episodic::train_model(model, train.tasks, config, progress(config.episodes));
  const auto [unused, test_tasks] = data::split(test, test_split);
  data::EvalReport r = data::evaluate(model, test_tasks, config.spec, trials, config.seed);
  r.transfer = true;
  r.train_collection = train.name;
  r.test_collection = test.name;
  auto outputs = write_training(s, model, trace);
  for (auto& o : write_report(s, r)) outputs.push_back(o);
  outputs.push_back("manifest.cfg");
  write_manifest("transfer", s, outputs);
  print_report(r);
  return 0;
}

int cmd_gradcheck(const Settings& s) {
  const std::uint64_t seed = number<std::uint64_t>(s, "seed");
  const auto start = std::chrono::steady_clock::now();
  const auto results = verify::run_gradcheck(verify::gradcheck_cases(seed));
  std::size_t failed = 0;
  for (const auto& r : results) {
    std::printf("%-28s %-10s max rel err %.3e  %s\n", r.name.c_str(), r.group.c_str(), r.max_rel_error,
                r.passed ? "ok" : "FAIL");
    failed += !r.passed;
  }
  const double secs = std::chrono::duration<double>(std::chrono::steady_clock::now() - start).count();
  std::printf("%zu ops, %zu failed, tolerance %.0e, %.1f s\n", results.size(), failed, verify::kGradTolerance, secs);
  return failed == 0 ? 0 : 1;
}

int cmd_synthetic(const Settings& s, std::size_t molecules) {
  data::SyntheticConfig sc;
  sc.molecules = molecules;
  sc.seed = number<std::uint64_t>(s, "seed");
  fs::create_directories(s.at("out"));
  data::write_file((fs::path(s.at("out")) / "synthetic.csv").string(), data::synthetic_csv(sc));
  write_manifest("synthetic", s, {"synthetic.csv"});
  std::cout << "wrote " << molecules << " molecules, " << data::kSyntheticTasks.size() << " tasks; split 'synthetic' holds out";
  for (const auto& t : data::synthetic_split().test_task_names) std::cout << ' ' << t;
  std::cout << '\n';
  return 0;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"One-shot molecular property prediction with graph convolutions"};
  app.require_subcommand(1);

  std::string config_path;
  std::map<std::string, std::string> given;
  std::size_t synthetic_molecules = 1200;

  struct FlagSpec {
    const char* flag;
    const char* key;
    const char* help;
  };
  const std::vector<FlagSpec> flags = {
      {"--dataset", "dataset", "CSV with a SMILES column and 0/1 task columns"},
      {"--smiles-col", "smiles_col", "SMILES column name"},
      {"--tasks", "tasks", "task columns to load, ';'-separated (default: all)"},
      {"--split", "split", "built-in split: tox21, sider, muv, synthetic, none"},
      {"--train-tasks", "train_tasks", "explicit train tasks, ';'-separated"},
      {"--test-tasks", "test_tasks", "explicit test tasks, ';'-separated"},
      {"--eval-dataset", "eval_dataset", "transfer: CSV evaluated after training"},
      {"--eval-smiles-col", "eval_smiles_col", "transfer: SMILES column of the eval CSV"},
      {"--eval-split", "eval_split", "transfer: split applied to the eval CSV"},
      {"--checkpoint", "checkpoint", "checkpoint to evaluate"},
      {"--variant", "variant", "head: siamese, attnlstm, reslstm"},
      {"--n-pos", "n_pos", "positives per support set"},
      {"--n-neg", "n_neg", "negatives per support set"},
      {"--batch-size", "batch_size", "query batch size per training episode"},
      {"--episodes", "episodes", "training episodes"},
      {"--steps-per-episode", "steps_per_episode", "optimizer steps per episode"},
      {"--seed", "seed", "master random seed"},
      {"--lr", "lr", "ADAM learning rate"},
      {"--depth", "depth", "ResLSTM refinement iterations L"},
      {"--steps", "steps", "attLSTM read steps K"},
      {"--conv-widths", "conv_widths", "graph convolution widths, comma-separated"},
      {"--dense-width", "dense_width", "embedding width p"},
      {"--trials", "trials", "support draws per test task"},
      {"--out", "out", "output directory"},
  };

  auto add_common = [&](CLI::App* sub) {
    sub->add_option("--config", config_path, "key = value configuration file (flags override it)");
    for (const auto& f : flags) sub->add_option(f.flag, given[f.key], f.help);
  };
  CLI::App* featurize = app.add_subcommand("featurize", "parse a CSV and dump graphs and atom features as JSON lines");
  CLI::App* train = app.add_subcommand("train", "episodic training; writes checkpoint, loss CSV and manifest");
  CLI::App* eval = app.add_subcommand("eval", "evaluate a checkpoint on the test tasks; writes JSON and CSV reports");
  CLI::App* transfer = app.add_subcommand("transfer", "train on one collection, evaluate on another's test split");
  CLI::App* gradcheck = app.add_subcommand("gradcheck", "finite-difference check of every differentiable operation");
  CLI::App* synthetic = app.add_subcommand("synthetic", "write the synthetic 12-task CSV");
  for (CLI::App* sub : {featurize, train, eval, transfer, gradcheck, synthetic}) add_common(sub);
  synthetic->add_option("--molecules", synthetic_molecules, "number of molecules");

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    return app.exit(e);
  }

  CLI::App* sub = app.get_subcommands().front();
  try {
    Settings s = defaults();
    if (!config_path.empty())
      for (auto& [k, v] : read_config_file(config_path)) s[k] = v;
    bool variant_given = false;
    for (const auto& f : flags)
      if (sub->count(f.flag) > 0) {
        s[f.key] = given[f.key];
        if (std::string(f.key) == "variant") variant_given = true;
      }
    if (!config_path.empty() && !variant_given) variant_given = read_config_file(config_path).count("variant") > 0;

    const std::string name = sub->get_name();
    if (name == "featurize") return cmd_featurize(s);
    if (name == "train") return cmd_train(s);
    if (name == "eval") return cmd_eval(s, variant_given);
    if (name == "transfer") return cmd_transfer(s);
    if (name == "gradcheck") return cmd_gradcheck(s);
    return cmd_synthetic(s, synthetic_molecules);
  } catch (const ConfigError& e) {
    std::cerr << "configuration error: " << e.what() << '\n';
    return 2;
  } catch (const SchemaError& e) {
    std::cerr << "schema error: " << e.what() << '\n';
    return 3;
  } catch (const DataError& e) {
    std::cerr << "data error: " << e.what() << '\n';
    return 3;
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << '\n';
    return 1;
  }
}
