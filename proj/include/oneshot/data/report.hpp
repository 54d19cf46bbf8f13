#pragma once

#include <cstdio>
#include <fstream>
#include <ostream>
#include <string>
#include <vector>

#include <nlohmann/json.hpp>

#include "oneshot/data/evaluate.hpp"
#include "oneshot/episodic/train.hpp"

namespace oneshot::data {

inline nlohmann::ordered_json to_json(const EvalReport& r) {
  nlohmann::ordered_json j;
  j["spec"] = r.spec_label();
  j["n_pos"] = r.n_pos;
  j["n_neg"] = r.n_neg;
  j["metric"] = r.metric;
  j["secondary_metric"] = "accuracy@0.5";
  j["n_trials"] = r.n_trials;
  j["seed"] = r.seed;
  j["variant"] = r.variant;
  j["transfer"] = r.transfer;
  if (r.transfer) {
    j["train_collection"] = r.train_collection;
    j["test_collection"] = r.test_collection;
  }
  j["median_auc"] = r.median_auc;
  j["median_accuracy"] = r.median_accuracy;
  nlohmann::ordered_json tasks = nlohmann::ordered_json::array();
  for (const TaskReport& t : r.tasks) {
    nlohmann::ordered_json tj;
    tj["task"] = t.task;
    tj["skipped"] = t.skipped;
    if (t.skipped) {
      tj["skip_reason"] = t.skip_reason;
    } else {
      tj["mean_auc"] = t.mean_auc;
      tj["mean_accuracy"] = t.mean_accuracy;
      tj["auc"] = t.auc;
      tj["accuracy"] = t.accuracy;
      tj["redraws"] = t.redraws;
    }
    tasks.push_back(std::move(tj));
  }
  j["tasks"] = std::move(tasks);
  return j;
}

inline EvalReport report_from_json(const nlohmann::json& j) {
  EvalReport r;
  r.n_pos = j.at("n_pos").get<std::size_t>();
  r.n_neg = j.at("n_neg").get<std::size_t>();
  r.metric = j.at("metric").get<std::string>();
  r.n_trials = j.at("n_trials").get<std::size_t>();
  r.seed = j.at("seed").get<std::uint64_t>();
  r.variant = j.at("variant").get<std::string>();
  r.transfer = j.at("transfer").get<bool>();
  if (r.transfer) {
    r.train_collection = j.at("train_collection").get<std::string>();
    r.test_collection = j.at("test_collection").get<std::string>();
  }
  r.median_auc = j.at("median_auc").get<double>();
  r.median_accuracy = j.at("median_accuracy").get<double>();
  for (const auto& tj : j.at("tasks")) {
    TaskReport t;
    t.task = tj.at("task").get<std::string>();
    t.skipped = tj.at("skipped").get<bool>();
    if (t.skipped) {
      t.skip_reason = tj.at("skip_reason").get<std::string>();
    } else {
      t.mean_auc = tj.at("mean_auc").get<double>();
      t.mean_accuracy = tj.at("mean_accuracy").get<double>();
      t.auc = tj.at("auc").get<std::vector<double>>();
      t.accuracy = tj.at("accuracy").get<std::vector<double>>();
      t.redraws = tj.at("redraws").get<std::size_t>();
    }
    r.tasks.push_back(std::move(t));
  }
  return r;
}

namespace detail {

inline std::string csv_quote(const std::string& s) {
  if (s.find_first_of(",\"\n\r") == std::string::npos) return s;
  std::string out = "\"";
  for (char c : s) {
    if (c == '"') out += '"';
    out += c;
  }
  return out + '"';
}

inline std::string format_double(double v) {
  char buf[32];
  std::snprintf(buf, sizeof buf, "%.17g", v);
  return buf;
}

}  // namespace detail

/// One row per trial: task,trial,auc,accuracy.
inline void write_trials_csv(std::ostream& os, const EvalReport& r) {
  os << "task,trial,auc,accuracy\n";
  for (const TaskReport& t : r.tasks)
    for (std::size_t i = 0; i < t.auc.size(); ++i)
      os << detail::csv_quote(t.task) << ',' << i << ',' << detail::format_double(t.auc[i]) << ','
         << detail::format_double(t.accuracy[i]) << '\n';
}

inline void write_loss_csv(std::ostream& os, const std::vector<episodic::LossRecord>& trace) {
  os << "episode,task,loss\n";
  for (const auto& rec : trace)
    os << rec.episode << ',' << detail::csv_quote(rec.task) << ',' << detail::format_double(rec.loss) << '\n';
}

inline void write_file(const std::string& path, const std::string& contents) {
  std::ofstream os(path, std::ios::binary);
  if (!os) throw std::runtime_error("cannot write " + path);
  os << contents;
  os.flush();
  if (!os) throw std::runtime_error("failed writing " + path);
}

}  // namespace oneshot::data
