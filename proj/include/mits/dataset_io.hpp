#pragma once

#include <string>
#include <vector>

#include <json.hpp>

#include "mits/core.hpp"

namespace mits {

// Line-delimited dataset record file shared by the synthetic generator, the
// EHR ingest pipeline, and all downstream stages. One sample per line:
//   {"sample_id": "...", "label": 0, "window": {"start": 0.0, "end": 24.0},
//    "metadata": {...}, "observations": [{"t": 0.88, "ch": "glucose",
//    "v": 170.0 | "note text", "st": 1.9}, ...]}
// "v" is a JSON number for numeric channels and a string for text channels;
// "st" (storetime) is omitted when unknown.

inline nlohmann::json sample_to_json(const MitsSample& s) {
  nlohmann::json obs = nlohmann::json::array();
  for (const auto& o : s.observations) {
    nlohmann::json j{{"t", o.charttime}, {"ch", o.channel}};
    if (o.is_numeric())
      j["v"] = o.numeric();
    else
      j["v"] = o.text();
    if (o.storetime) j["st"] = *o.storetime;
    obs.push_back(std::move(j));
  }
  return nlohmann::json{{"sample_id", s.sample_id},
                        {"label", s.label},
                        {"window", {{"start", s.window.start}, {"end", s.window.end}}},
                        {"metadata", s.metadata},
                        {"observations", std::move(obs)}};
}

inline MitsSample sample_from_json(const nlohmann::json& j) {
  MitsSample s;
  s.sample_id = j.at("sample_id").get<std::string>();
  s.label = j.at("label").get<int>();
  s.window.start = j.at("window").at("start").get<double>();
  s.window.end = j.at("window").at("end").get<double>();
  if (j.contains("metadata"))
    for (const auto& [k, v] : j.at("metadata").items()) s.metadata[k] = v.get<std::string>();
  for (const auto& jo : j.at("observations")) {
    Observation o;
    o.charttime = jo.at("t").get<double>();
    o.channel = jo.at("ch").get<std::string>();
    const auto& v = jo.at("v");
    if (v.is_string())
      o.value = v.get<std::string>();
    else
      o.value = v.get<double>();
    if (jo.contains("st")) o.storetime = jo.at("st").get<double>();
    s.observations.push_back(std::move(o));
  }
  return s;
}

inline std::string dataset_to_jsonl(const std::vector<MitsSample>& samples) {
  std::string out;
  for (const auto& s : samples) {
    out += sample_to_json(s).dump();
    out += '\n';
  }
  return out;
}

inline void write_dataset(const std::filesystem::path& path, const std::vector<MitsSample>& samples) {
  write_file(path, dataset_to_jsonl(samples));
}

inline std::vector<MitsSample> read_dataset(const std::filesystem::path& path) {
  std::vector<MitsSample> samples;
  std::string content = read_file(path);
  size_t lineno = 0;
  for (const auto& line : split(content, '\n')) {
    ++lineno;
    if (trim(line).empty()) continue;
    try {
      samples.push_back(sample_from_json(nlohmann::json::parse(line)));
    } catch (const nlohmann::json::exception& e) {
      throw Error(path.string() + ":" + std::to_string(lineno) + ": bad dataset record: " + e.what());
    }
  }
  return samples;
}

}  // namespace mits
