#pragma once

#include <fstream>
#include <istream>
#include <ostream>
#include <set>
#include <sstream>
#include <string>
#include <vector>

#include "json.hpp"
#include "qamatch/dialogue.hpp"
#include "qamatch/vocab.hpp"

namespace qamatch {

/// Dialogue files are JSONL, one dialogue object per line:
///   {"id": str,
///    "turns": [{"role": str, "label": "Q"|"NQ", "text": str}, ...],
///    "gold_pairs": [[q_index, a_index], ...]}
/// A second accepted per-turn labeling uses {"Q", "A", "O"} where each "A"
/// turn carries "answers": [q_index, ...] back-references; A and O both
/// become NQ and gold pairs are derived from the back-references. A turn
/// labeled Q is stored as a question even if it also carries back-references
/// (turns annotated as both are treated as questions).
inline Dialogue parse_dialogue_json(const nlohmann::json& j,
                                    const TokenizerSpec& tok = {}) {
  Dialogue d;
  if (!j.is_object() || !j.contains("id") || !j.contains("turns")) {
    throw DataError("dialogue object needs \"id\" and \"turns\"");
  }
  d.id = j.at("id").get<std::string>();
  std::set<std::pair<int, int>> gold;
  int idx = 0;
  for (const auto& jt : j.at("turns")) {
    Turn t;
    t.index = idx;
    t.role = jt.at("role").get<std::string>();
    const std::string label = jt.at("label").get<std::string>();
    if (label == "Q") {
      t.label = TurnLabel::Q;
    } else if (label == "NQ" || label == "A" || label == "O") {
      t.label = TurnLabel::NQ;
      if (label == "A" && jt.contains("answers")) {
        for (const auto& q : jt.at("answers")) gold.emplace(q.get<int>(), idx);
      }
    } else {
      throw DataError("dialogue \"" + d.id + "\": turn " + std::to_string(idx) +
                      " has unknown label \"" + label + "\"");
    }
    if (jt.contains("tokens")) {
      t.tokens = jt.at("tokens").get<std::vector<std::string>>();
    } else {
      t.tokens = tokenize(jt.at("text").get<std::string>(), tok);
    }
    d.turns.push_back(std::move(t));
    ++idx;
  }
  if (j.contains("gold_pairs")) {
    for (const auto& jp : j.at("gold_pairs")) {
      gold.emplace(jp.at(0).get<int>(), jp.at(1).get<int>());
    }
  }
  d.gold_pairs.assign(gold.begin(), gold.end());
  return d;
}

inline std::vector<Dialogue> read_dialogues(std::istream& in,
                                            const TokenizerSpec& tok = {},
                                            bool validate = true) {
  std::vector<Dialogue> out;
  std::set<std::string> seen_ids;
  std::string line;
  int line_no = 0;
  while (std::getline(in, line)) {
    ++line_no;
    if (line.find_first_not_of(" \t\r") == std::string::npos) continue;
    nlohmann::json j;
    try {
      j = nlohmann::json::parse(line);
    } catch (const nlohmann::json::exception& e) {
      throw DataError("line " + std::to_string(line_no) + ": " + e.what());
    }
    Dialogue d;
    try {
      d = parse_dialogue_json(j, tok);
    } catch (const nlohmann::json::exception& e) {
      throw DataError("line " + std::to_string(line_no) + ": " + e.what());
    }
    if (!seen_ids.insert(d.id).second) {
      throw DataError("line " + std::to_string(line_no) + ": duplicate dialogue id \"" + d.id + "\"");
    }
    if (validate) validate_dialogue(d);
    out.push_back(std::move(d));
  }
  return out;
}

inline std::vector<Dialogue> read_dialogues_file(const std::string& path,
                                                 const TokenizerSpec& tok = {},
                                                 bool validate = true) {
  std::ifstream in(path);
  if (!in) throw DataError("cannot open dialogue file: " + path);
  try {
    return read_dialogues(in, tok, validate);
  } catch (const DataError& e) {
    throw DataError(path + ": " + e.what());
  }
}

inline std::string join_tokens(const std::vector<std::string>& tokens) {
  std::string s;
  for (std::size_t i = 0; i < tokens.size(); ++i) {
    if (i) s += ' ';
    s += tokens[i];
  }
  return s;
}

inline nlohmann::json dialogue_to_json(const Dialogue& d) {
  nlohmann::json j;
  j["id"] = d.id;
  j["turns"] = nlohmann::json::array();
  for (const Turn& t : d.turns) {
    j["turns"].push_back({{"role", t.role},
                          {"label", to_string(t.label)},
                          {"text", join_tokens(t.tokens)}});
  }
  j["gold_pairs"] = nlohmann::json::array();
  for (const auto& [q, a] : d.gold_pairs) {
    j["gold_pairs"].push_back(nlohmann::json::array({q, a}));
  }
  return j;
}

inline void write_dialogues(std::ostream& out, const std::vector<Dialogue>& ds) {
  for (const Dialogue& d : ds) out << dialogue_to_json(d).dump() << '\n';
}

inline void write_dialogues_file(const std::string& path,
                                 const std::vector<Dialogue>& ds) {
  std::ofstream out(path);
  if (!out) throw DataError("cannot write dialogue file: " + path);
  write_dialogues(out, ds);
}

}  // namespace qamatch
