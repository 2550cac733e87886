#pragma once

#include <algorithm>
#include <array>
#include <iomanip>
#include <map>
#include <set>
#include <sstream>
#include <string>
#include <vector>

#include "json.hpp"
#include "qamatch/dialogue.hpp"
#include "qamatch/matcher.hpp"
#include "qamatch/pairs.hpp"

namespace qamatch {

/// Micro-averaged scores over all questions of all dialogues, plus per-
/// distance accuracy. acc keys are buckets 1..4 and 5 (meaning ">= 5"), or
/// exact distances when exact_distance is set; empty buckets are absent.
struct MetricsReport {
  long long tp = 0, fp = 0, fn = 0;
  double precision = 0.0, recall = 0.0, f1 = 0.0;
  bool exact_distance = false;
  std::map<int, double> acc_by_distance;
  std::map<int, std::pair<long long, long long>> acc_counts;  // hit / total
  std::map<std::string, std::array<long long, 3>> per_dialogue;  // tp, fp, fn
};

inline MetricsReport micro_prf(const std::vector<MatchResult>& predictions,
                               const std::vector<Dialogue>& gold,
                               bool exact_distance = false) {
  std::map<std::string, const Dialogue*> by_id;
  for (const Dialogue& d : gold) by_id.emplace(d.id, &d);

  std::map<std::string, std::set<std::pair<int, int>>> pred_sets;
  for (const MatchResult& r : predictions) {
    if (!by_id.count(r.dialogue_id)) {
      throw DataError("predictions reference unknown dialogue id \"" +
                      r.dialogue_id + "\"");
    }
    auto [it, fresh] = pred_sets.emplace(r.dialogue_id, std::set<std::pair<int, int>>{});
    if (!fresh) {
      throw DataError("multiple prediction records for dialogue id \"" +
                      r.dialogue_id + "\"");
    }
    it->second.insert(r.pairs.begin(), r.pairs.end());
  }

  MetricsReport rep;
  rep.exact_distance = exact_distance;
  for (const Dialogue& d : gold) {
    static const std::set<std::pair<int, int>> kEmpty;
    auto pit = pred_sets.find(d.id);
    const auto& pred = pit == pred_sets.end() ? kEmpty : pit->second;
    const std::set<std::pair<int, int>> gset(d.gold_pairs.begin(), d.gold_pairs.end());

    long long dtp = 0, dfp = 0, dfn = 0;
    for (const auto& p : pred) {
      if (gset.count(p)) {
        ++dtp;
      } else {
        ++dfp;
      }
    }
    for (const auto& gpair : gset) {
      const int dist = gpair.second - gpair.first;
      const int key = exact_distance ? dist : distance_bucket(dist);
      auto& [hit, total] = rep.acc_counts[key];
      ++total;
      if (pred.count(gpair)) {
        ++hit;
      } else {
        ++dfn;
      }
    }
    rep.tp += dtp;
    rep.fp += dfp;
    rep.fn += dfn;
    rep.per_dialogue[d.id] = {dtp, dfp, dfn};
  }

  rep.precision = rep.tp + rep.fp > 0
                      ? static_cast<double>(rep.tp) / static_cast<double>(rep.tp + rep.fp)
                      : 0.0;
  rep.recall = rep.tp + rep.fn > 0
                   ? static_cast<double>(rep.tp) / static_cast<double>(rep.tp + rep.fn)
                   : 0.0;
  rep.f1 = rep.precision + rep.recall > 0.0
               ? 2.0 * rep.precision * rep.recall / (rep.precision + rep.recall)
               : 0.0;
  for (const auto& [key, counts] : rep.acc_counts) {
    rep.acc_by_distance[key] =
        static_cast<double>(counts.first) / static_cast<double>(counts.second);
  }
  return rep;
}

/// Per-bucket accuracy alone: the fraction of gold pairs in each distance
/// bucket that appear in the predictions.
inline std::map<int, double> acc_at_distance(const std::vector<MatchResult>& predictions,
                                             const std::vector<Dialogue>& gold,
                                             bool exact_distance = false) {
  return micro_prf(predictions, gold, exact_distance).acc_by_distance;
}

// ---- multi-system report --------------------------------------------------

struct SystemResult {
  std::string name;
  MetricsReport metrics;
};

namespace detail {

inline std::vector<SystemResult> report_order(std::vector<SystemResult> systems) {
  std::stable_sort(systems.begin(), systems.end(),
                   [](const SystemResult& a, const SystemResult& b) {
                     if (a.metrics.f1 != b.metrics.f1) return a.metrics.f1 > b.metrics.f1;
                     return a.name < b.name;
                   });
  return systems;
}

inline std::vector<int> acc_keys(const std::vector<SystemResult>& systems) {
  std::set<int> keys;
  for (const auto& s : systems) {
    for (const auto& [k, v] : s.metrics.acc_by_distance) keys.insert(k);
  }
  return {keys.begin(), keys.end()};
}

inline std::string acc_label(int key, bool exact) {
  if (!exact && key == 5) return ">=5";
  return std::to_string(key);
}

inline std::string full(double v) {
  std::ostringstream os;
  os << std::setprecision(17) << v;
  return os.str();
}

}  // namespace detail

/// Human-readable comparison table; percentages to 2 decimals. Rows are
/// ordered by F1 descending, then system name.
inline std::string render_report_table(const std::vector<SystemResult>& systems_in) {
  auto systems = detail::report_order(systems_in);
  const bool exact = !systems.empty() && systems[0].metrics.exact_distance;
  const auto keys = detail::acc_keys(systems);
  std::ostringstream os;
  os << std::left << std::setw(14) << "system" << std::right << std::setw(8) << "P"
     << std::setw(8) << "R" << std::setw(8) << "F1";
  for (int k : keys) os << std::setw(10) << ("Acc@" + detail::acc_label(k, exact));
  os << '\n';
  os << std::fixed << std::setprecision(2);
  for (const auto& s : systems) {
    os << std::left << std::setw(14) << s.name << std::right
       << std::setw(8) << 100.0 * s.metrics.precision
       << std::setw(8) << 100.0 * s.metrics.recall
       << std::setw(8) << 100.0 * s.metrics.f1;
    for (int k : keys) {
      auto it = s.metrics.acc_by_distance.find(k);
      if (it == s.metrics.acc_by_distance.end()) {
        os << std::setw(10) << "-";
      } else {
        os << std::setw(10) << 100.0 * it->second;
      }
    }
    os << '\n';
  }
  return os.str();
}

/// Machine-readable CSV at full precision; parse_report_csv() reads it back.
inline std::string render_report_csv(const std::vector<SystemResult>& systems_in) {
  auto systems = detail::report_order(systems_in);
  const bool exact = !systems.empty() && systems[0].metrics.exact_distance;
  const auto keys = detail::acc_keys(systems);
  std::ostringstream os;
  os << "system,exact_distance,tp,fp,fn,precision,recall,f1";
  for (int k : keys) {
    const std::string lbl = detail::acc_label(k, exact);
    os << ",acc@" << lbl << ",hit@" << lbl << ",total@" << lbl;
  }
  os << '\n';
  for (const auto& s : systems) {
    os << s.name << ',' << (s.metrics.exact_distance ? 1 : 0) << ',' << s.metrics.tp
       << ',' << s.metrics.fp << ',' << s.metrics.fn << ','
       << detail::full(s.metrics.precision) << ',' << detail::full(s.metrics.recall)
       << ',' << detail::full(s.metrics.f1);
    for (int k : keys) {
      auto it = s.metrics.acc_counts.find(k);
      if (it == s.metrics.acc_counts.end()) {
        os << ",,,";
      } else {
        os << ',' << detail::full(s.metrics.acc_by_distance.at(k)) << ','
           << it->second.first << ',' << it->second.second;
      }
    }
    os << '\n';
  }
  return os.str();
}

/// Inverse of render_report_csv (per-dialogue breakdowns are not carried).
inline std::vector<SystemResult> parse_report_csv(const std::string& csv) {
  std::istringstream in(csv);
  std::string line;
  if (!std::getline(in, line)) throw DataError("report csv: empty input");
  std::vector<std::string> headers;
  {
    std::istringstream hs(line);
    std::string cell;
    while (std::getline(hs, cell, ',')) headers.push_back(cell);
  }
  std::vector<SystemResult> out;
  while (std::getline(in, line)) {
    if (line.empty()) continue;
    std::vector<std::string> cells;
    std::istringstream ls(line);
    std::string cell;
    while (std::getline(ls, cell, ',')) cells.push_back(cell);
    cells.resize(headers.size());
    SystemResult s;
    s.name = cells[0];
    s.metrics.exact_distance = cells[1] == "1";
    s.metrics.tp = std::stoll(cells[2]);
    s.metrics.fp = std::stoll(cells[3]);
    s.metrics.fn = std::stoll(cells[4]);
    s.metrics.precision = std::stod(cells[5]);
    s.metrics.recall = std::stod(cells[6]);
    s.metrics.f1 = std::stod(cells[7]);
    for (std::size_t c = 8; c + 2 < headers.size() + 1 && c + 2 <= cells.size(); c += 3) {
      if (cells[c].empty()) continue;
      const std::string& h = headers[c];  // "acc@<label>"
      const std::string lbl = h.substr(h.find('@') + 1);
      const int key = lbl == ">=5" ? 5 : std::stoi(lbl);
      s.metrics.acc_by_distance[key] = std::stod(cells[c]);
      s.metrics.acc_counts[key] = {std::stoll(cells[c + 1]), std::stoll(cells[c + 2])};
    }
    out.push_back(std::move(s));
  }
  return out;
}

inline nlohmann::json report_json(const std::vector<SystemResult>& systems_in) {
  auto systems = detail::report_order(systems_in);
  nlohmann::json out = nlohmann::json::array();
  for (const auto& s : systems) {
    nlohmann::json j;
    j["system"] = s.name;
    j["tp"] = s.metrics.tp;
    j["fp"] = s.metrics.fp;
    j["fn"] = s.metrics.fn;
    j["precision"] = s.metrics.precision;
    j["recall"] = s.metrics.recall;
    j["f1"] = s.metrics.f1;
    j["exact_distance"] = s.metrics.exact_distance;
    nlohmann::json acc = nlohmann::json::object();
    for (const auto& [k, v] : s.metrics.acc_by_distance) {
      acc[detail::acc_label(k, s.metrics.exact_distance)] = {
          {"acc", v},
          {"hit", s.metrics.acc_counts.at(k).first},
          {"total", s.metrics.acc_counts.at(k).second}};
    }
    j["acc_by_distance"] = acc;
    nlohmann::json per = nlohmann::json::object();
    for (const auto& [id, counts] : s.metrics.per_dialogue) {
      per[id] = {{"tp", counts[0]}, {"fp", counts[1]}, {"fn", counts[2]}};
    }
    j["per_dialogue"] = per;
    out.push_back(std::move(j));
  }
  return out;
}

}  // namespace qamatch
