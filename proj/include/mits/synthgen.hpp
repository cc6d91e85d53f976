#pragma once

#include <string>
#include <vector>

#include <json.hpp>

#include "mits/core.hpp"
#include "mits/util.hpp"

namespace mits {

// Synthetic MITS with label-dependent (informative) sampling: per channel a
// homogeneous Poisson process whose rate is multiplied by intensity_ratio
// for positive samples, plus simple label-shifted value models. The point is
// a desk-scale testbed where sampling patterns demonstrably carry signal.

struct ValueModel {
  double mean = 100.0;
  double spread = 10.0;
  double label_shift = 0.0;  // added to the mean for positive samples
};

struct NoteModel {
  std::vector<std::string> routine;
  std::vector<std::string> concerning;
  double concerning_prob_negative = 0.25;
  double concerning_prob_positive = 0.70;
};

struct SynthChannel {
  ChannelSpec spec;
  double rate_per_hour = 0.1;  // base rate lambda_c
  ValueModel value;            // numeric channels only
};

struct DelayModel {
  // storetime = charttime + Exp(mean); per-modality means in hours
  double lab_mean_hours = 1.0;
  double note_mean_hours = 5.7;
};

struct GeneratorConfig {
  uint64_t seed = 1;
  size_t n_samples = 500;
  double positive_rate = 0.25;
  double intensity_ratio = 2.0;  // r >= 1, positive-class rate multiplier
  std::vector<SynthChannel> channels;
  NoteModel notes;
  DelayModel delays;
  TimeWindow window;

  void validate() const {
    if (!(positive_rate > 0 && positive_rate < 1)) throw Error("generator: positive_rate must be in (0,1)");
    if (!(intensity_ratio >= 1.0)) throw Error("generator: intensity_ratio must be >= 1");
    if (channels.empty()) throw Error("generator: at least one channel required");
    for (const auto& c : channels)
      if (!(c.rate_per_hour > 0)) throw Error("generator: rates must be positive (" + c.spec.id + ")");
    if (!(window.end > window.start)) throw Error("generator: window.end must exceed window.start");
  }

  ChannelRegistry registry() const {
    ChannelRegistry reg;
    for (const auto& c : channels) reg.add(c.spec);
    return reg;
  }

  static GeneratorConfig defaults();
  static GeneratorConfig from_json(const nlohmann::json& j);
  nlohmann::json to_json() const;
};

inline GeneratorConfig GeneratorConfig::defaults() {
  GeneratorConfig cfg;
  auto lab = [](std::string id, std::string name, double rate, ValueModel vm) {
    SynthChannel c;
    c.spec = ChannelSpec{std::move(id), std::move(name), Modality::numeric, -1, 2, {}};
    c.rate_per_hour = rate;
    c.value = vm;
    return c;
  };
  cfg.channels.push_back(lab("glucose", "Glucose (mg/dL)", 0.18, {135.0, 30.0, 25.0}));
  cfg.channels.push_back(lab("anion_gap", "Anion Gap (mEq/L)", 0.12, {12.5, 2.5, 2.0}));
  cfg.channels.push_back(lab("bicarbonate", "Bicarbonate (mEq/L)", 0.12, {24.0, 3.0, -3.0}));
  cfg.channels.push_back(lab("creatinine", "Creatinine (mg/dL)", 0.10, {1.1, 0.5, 0.6}));
  cfg.channels.push_back(lab("hematocrit", "Hematocrit (%)", 0.12, {33.0, 5.0, -3.0}));
  cfg.channels.push_back(lab("red_blood_cells", "Red Blood Cells (K/uL)", 0.08, {4.1, 0.7, -0.5}));
  SynthChannel note;
  note.spec = ChannelSpec{"radiology_note", "Radiology Note", Modality::text, -1, 2, {}};
  note.rate_per_hour = 0.09;
  cfg.channels.push_back(note);
  cfg.notes.routine = {
      "Portable chest radiograph shows clear lungs with stable cardiomediastinal silhouette.",
      "Lines and tubes in standard position. No acute cardiopulmonary process.",
      "IMPRESSION:\nNo significant interval change from prior study.",
      "Low lung volumes without focal consolidation. Mild bibasilar atelectasis.",
  };
  cfg.notes.concerning = {
      "Worsening bilateral opacities concerning for pulmonary edema versus multifocal pneumonia.",
      "Interval development of right lower lobe consolidation. Infectious process suspected.",
      "IMPRESSION:\nNew moderate left pleural effusion with adjacent compressive atelectasis.",
      "Endotracheal tube terminates 2 cm above the carina. Diffuse hazy opacities, progressed.",
  };
  return cfg;
}

inline nlohmann::json GeneratorConfig::to_json() const {
  nlohmann::json jch = nlohmann::json::array();
  for (const auto& c : channels) {
    nlohmann::json j{{"id", c.spec.id},
                     {"display_name", c.spec.display_name},
                     {"modality", to_string(c.spec.modality)},
                     {"rate_per_hour", c.rate_per_hour}};
    if (c.spec.modality == Modality::numeric)
      j["value"] = {{"mean", c.value.mean}, {"spread", c.value.spread}, {"label_shift", c.value.label_shift}};
    jch.push_back(std::move(j));
  }
  return nlohmann::json{
      {"seed", seed},
      {"n_samples", n_samples},
      {"positive_rate", positive_rate},
      {"intensity_ratio", intensity_ratio},
      {"window", {{"start", window.start}, {"end", window.end}}},
      {"channels", std::move(jch)},
      {"notes",
       {{"routine", notes.routine},
        {"concerning", notes.concerning},
        {"concerning_prob_negative", notes.concerning_prob_negative},
        {"concerning_prob_positive", notes.concerning_prob_positive}}},
      {"delays", {{"lab_mean_hours", delays.lab_mean_hours}, {"note_mean_hours", delays.note_mean_hours}}}};
}

inline GeneratorConfig GeneratorConfig::from_json(const nlohmann::json& j) {
  GeneratorConfig cfg = defaults();
  if (j.contains("seed")) cfg.seed = j.at("seed").get<uint64_t>();
  if (j.contains("n_samples")) cfg.n_samples = j.at("n_samples").get<size_t>();
  if (j.contains("positive_rate")) cfg.positive_rate = j.at("positive_rate").get<double>();
  if (j.contains("intensity_ratio")) cfg.intensity_ratio = j.at("intensity_ratio").get<double>();
  if (j.contains("window")) {
    cfg.window.start = j.at("window").value("start", 0.0);
    cfg.window.end = j.at("window").value("end", 24.0);
  }
  if (j.contains("channels")) {
    cfg.channels.clear();
    for (const auto& jc : j.at("channels")) {
      SynthChannel c;
      c.spec.id = jc.at("id").get<std::string>();
      c.spec.display_name = jc.at("display_name").get<std::string>();
      c.spec.modality = modality_from_string(jc.at("modality").get<std::string>());
      c.rate_per_hour = jc.at("rate_per_hour").get<double>();
      if (jc.contains("value")) {
        c.value.mean = jc.at("value").value("mean", 100.0);
        c.value.spread = jc.at("value").value("spread", 10.0);
        c.value.label_shift = jc.at("value").value("label_shift", 0.0);
      }
      cfg.channels.push_back(std::move(c));
    }
  }
  if (j.contains("notes")) {
    const auto& jn = j.at("notes");
    if (jn.contains("routine")) cfg.notes.routine = jn.at("routine").get<std::vector<std::string>>();
    if (jn.contains("concerning"))
      cfg.notes.concerning = jn.at("concerning").get<std::vector<std::string>>();
    cfg.notes.concerning_prob_negative = jn.value("concerning_prob_negative", 0.25);
    cfg.notes.concerning_prob_positive = jn.value("concerning_prob_positive", 0.70);
  }
  if (j.contains("delays")) {
    cfg.delays.lab_mean_hours = j.at("delays").value("lab_mean_hours", 1.0);
    cfg.delays.note_mean_hours = j.at("delays").value("note_mean_hours", 5.7);
  }
  return cfg;
}

// Each sample draws from its own sub-seeded generator, so output does not
// depend on iteration or thread order.
inline MitsSample generate_sample(const GeneratorConfig& cfg, size_t index) {
  Rng rng(mix_seed(cfg.seed, index));
  MitsSample s;
  {
    char buf[32];
    std::snprintf(buf, sizeof(buf), "synth-%06zu", index);
    s.sample_id = buf;
  }
  s.window = cfg.window;
  s.label = rng.bernoulli(cfg.positive_rate) ? 1 : 0;
  s.metadata["source"] = "synthetic";
  for (const auto& ch : cfg.channels) {
    double rate = ch.rate_per_hour * (s.label == 1 ? cfg.intensity_ratio : 1.0);
    double t = cfg.window.start;
    while (true) {
      t += rng.exponential(1.0 / rate);
      if (t > cfg.window.end) break;
      Observation o;
      o.charttime = t - cfg.window.start;
      o.channel = ch.spec.id;
      if (ch.spec.modality == Modality::numeric) {
        o.value = rng.normal(ch.value.mean + (s.label == 1 ? ch.value.label_shift : 0.0), ch.value.spread);
        o.storetime = o.charttime + rng.exponential(cfg.delays.lab_mean_hours);
      } else {
        double p = s.label == 1 ? cfg.notes.concerning_prob_positive : cfg.notes.concerning_prob_negative;
        const auto& pool = rng.bernoulli(p) ? cfg.notes.concerning : cfg.notes.routine;
        o.value = pool.empty() ? std::string("(empty note)") : pool[rng.index(pool.size())];
        o.storetime = o.charttime + rng.exponential(cfg.delays.note_mean_hours);
      }
      s.observations.push_back(std::move(o));
    }
  }
  return s;
}

inline std::vector<MitsSample> generate_dataset(const GeneratorConfig& cfg) {
  cfg.validate();
  std::vector<MitsSample> out;
  out.reserve(cfg.n_samples);
  for (size_t i = 0; i < cfg.n_samples; ++i) out.push_back(generate_sample(cfg, i));
  return out;
}

// Value-free oracle: the total observation count is a monotone score that
// carries signal exactly when sampling is informative.
inline double count_baseline_score(const MitsSample& sample) {
  return static_cast<double>(sample.observations.size());
}

}  // namespace mits
