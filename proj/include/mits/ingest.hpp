#pragma once

#include <functional>
#include <istream>
#include <limits>
#include <map>
#include <set>
#include <string>
#include <vector>

#include <json.hpp>

#include "mits/core.hpp"
#include "mits/util.hpp"

namespace mits {

// Streaming RFC-4180-style CSV reader: quoted fields may contain commas,
// doubled quotes, and newlines (note text needs all three).
class CsvReader {
 public:
  explicit CsvReader(std::istream& in) : in_(in) {}

  // Returns std::nullopt at end of input.
  std::optional<std::vector<std::string>> next_row() {
    if (in_.peek() == std::char_traits<char>::eof()) return std::nullopt;
    std::vector<std::string> row;
    std::string field;
    bool quoted = false;
    ++row_start_line_;
    line_ = row_start_line_;
    int c;
    while ((c = in_.get()) != std::char_traits<char>::eof()) {
      char ch = static_cast<char>(c);
      if (quoted) {
        if (ch == '"') {
          if (in_.peek() == '"') {
            field += '"';
            in_.get();
          } else {
            quoted = false;
          }
        } else {
          if (ch == '\n') ++row_start_line_;
          field += ch;
        }
        continue;
      }
      if (ch == '"' && field.empty()) {
        quoted = true;
      } else if (ch == ',') {
        row.push_back(std::move(field));
        field.clear();
      } else if (ch == '\n') {
        break;
      } else if (ch != '\r') {
        field += ch;
      }
    }
    if (quoted) throw Error("csv line " + std::to_string(line_) + ": unterminated quoted field");
    row.push_back(std::move(field));
    if (row.size() == 1 && row[0].empty() && in_.peek() == std::char_traits<char>::eof())
      return std::nullopt;  // trailing newline
    return row;
  }

  size_t line() const { return line_; }

 private:
  std::istream& in_;
  size_t line_ = 0;
  size_t row_start_line_ = 0;
};

// Cohort, filter, and label rules. Loaded from a JSON rule file so dataset-
// specific policy is auditable as data.
struct CohortRules {
  enum class LabelRule { hospital_expire_flag, short_stay_under_96h_and_survived };

  double window_hours = 24.0;
  size_t min_labs = 0;
  size_t note_min = 0;
  size_t note_max = std::numeric_limits<size_t>::max();
  double min_los_hours = 0.0;
  LabelRule label_rule = LabelRule::hospital_expire_flag;
  std::string time_unit = "hours";  // "hours" or "minutes"
  double short_stay_threshold_hours = 96.0;

  void validate() const {
    if (note_min > note_max) throw Error("cohort rules: note_count_range lo > hi");
    if (!(window_hours > 0)) throw Error("cohort rules: window_hours must be positive");
    if (time_unit != "hours" && time_unit != "minutes")
      throw Error("cohort rules: time_unit must be 'hours' or 'minutes'");
  }

  double to_hours(double t) const { return time_unit == "minutes" ? t / 60.0 : t; }

  static CohortRules from_json(const nlohmann::json& j) {
    CohortRules r;
    r.window_hours = j.value("window_hours", 24.0);
    r.min_labs = j.value("min_labs", size_t{0});
    if (j.contains("note_count_range")) {
      r.note_min = j.at("note_count_range").at(0).get<size_t>();
      r.note_max = j.at("note_count_range").at(1).get<size_t>();
    }
    r.min_los_hours = j.value("min_los_hours", 0.0);
    std::string rule = j.value("label_rule", std::string("hospital_expire_flag"));
    if (rule == "hospital_expire_flag")
      r.label_rule = LabelRule::hospital_expire_flag;
    else if (rule == "short_stay_under_96h_and_survived")
      r.label_rule = LabelRule::short_stay_under_96h_and_survived;
    else
      throw Error("cohort rules: unknown label_rule '" + rule + "'");
    r.time_unit = j.value("time_unit", std::string("hours"));
    r.validate();
    return r;
  }

  static CohortRules from_file(const std::filesystem::path& path) {
    return from_json(nlohmann::json::parse(read_file(path)));
  }
};

struct LoadReport {
  size_t rows_read = 0;
  size_t rows_skipped = 0;        // unparseable rows, logged and skipped
  size_t rows_out_of_window = 0;  // outside [0, window_hours]
  std::vector<std::string> messages;

  void skip(size_t line, const std::string& why) {
    ++rows_skipped;
    if (messages.size() < 50) messages.push_back("line " + std::to_string(line) + ": " + why);
  }
};

namespace detail {

inline std::map<std::string, size_t> header_index(const std::vector<std::string>& header,
                                                  const std::vector<std::string>& required,
                                                  const std::string& what) {
  std::map<std::string, size_t> idx;
  for (size_t i = 0; i < header.size(); ++i) idx[trim(header[i])] = i;
  for (const auto& col : required)
    if (!idx.count(col)) throw Error(what + ": missing required column '" + col + "'");
  return idx;
}

inline std::optional<double> parse_double_opt(const std::string& s) {
  std::string t = trim(s);
  if (t.empty()) return std::nullopt;
  try {
    size_t used = 0;
    double v = std::stod(t, &used);
    if (used != t.size()) return std::nullopt;
    return v;
  } catch (const std::exception&) {
    return std::nullopt;
  }
}

}  // namespace detail

// Lab CSV schema:  stay_id, charttime, storetime?, channel, value
// Note CSV schema: stay_id, charttime, storetime?, note_type, text
// Times are in rules.time_unit since ICU admission; everything is converted
// to hours, and observations outside [0, window_hours] are excluded.
inline void load_lab_events(std::istream& in, const ChannelRegistry& registry, const CohortRules& rules,
                            std::map<std::string, std::vector<Observation>>& out, LoadReport& report) {
  CsvReader csv(in);
  auto header = csv.next_row();
  if (!header) throw Error("labs: empty file");
  auto idx = detail::header_index(*header, {"stay_id", "charttime", "channel", "value"}, "labs");
  bool has_storetime = idx.count("storetime") > 0;
  while (auto row = csv.next_row()) {
    ++report.rows_read;
    if (row->size() < header->size()) {
      report.skip(csv.line(), "labs: wrong column count");
      continue;
    }
    const std::string& stay = (*row)[idx["stay_id"]];
    auto t = detail::parse_double_opt((*row)[idx["charttime"]]);
    if (stay.empty() || !t) {
      report.skip(csv.line(), "labs: bad stay_id/charttime");
      continue;
    }
    double hours = rules.to_hours(*t);
    if (hours < 0 || hours > rules.window_hours) {
      ++report.rows_out_of_window;
      continue;
    }
    const ChannelSpec* ch = registry.find(trim((*row)[idx["channel"]]));
    if (!ch || ch->modality != Modality::numeric) {
      report.skip(csv.line(), "labs: unknown or non-numeric channel '" + (*row)[idx["channel"]] + "'");
      continue;
    }
    auto value = detail::parse_double_opt((*row)[idx["value"]]);
    if (!value) {
      report.skip(csv.line(), "labs: non-numeric value");
      continue;
    }
    Observation o;
    o.charttime = hours;
    o.channel = ch->id;
    o.value = *value;
    if (has_storetime)
      if (auto st = detail::parse_double_opt((*row)[idx["storetime"]])) o.storetime = rules.to_hours(*st);
    out[stay].push_back(std::move(o));
  }
}

inline void load_note_events(std::istream& in, const ChannelRegistry& registry, const CohortRules& rules,
                             const std::string& note_channel_id,
                             std::map<std::string, std::vector<Observation>>& out, LoadReport& report) {
  CsvReader csv(in);
  auto header = csv.next_row();
  if (!header) throw Error("notes: empty file");
  auto idx = detail::header_index(*header, {"stay_id", "charttime", "text"}, "notes");
  bool has_storetime = idx.count("storetime") > 0;
  const ChannelSpec& ch = registry.require(note_channel_id);
  while (auto row = csv.next_row()) {
    ++report.rows_read;
    if (row->size() < header->size()) {
      report.skip(csv.line(), "notes: wrong column count");
      continue;
    }
    const std::string& stay = (*row)[idx["stay_id"]];
    auto t = detail::parse_double_opt((*row)[idx["charttime"]]);
    if (stay.empty() || !t) {
      report.skip(csv.line(), "notes: bad stay_id/charttime");
      continue;
    }
    double hours = rules.to_hours(*t);
    if (hours < 0 || hours > rules.window_hours) {
      ++report.rows_out_of_window;
      continue;
    }
    std::string text = (*row)[idx["text"]];
    if (trim(text).empty()) {
      report.skip(csv.line(), "notes: empty text");
      continue;
    }
    if (text.find("</value>") != std::string::npos) {
      report.skip(csv.line(), "notes: text contains the unrepresentable '</value>' substring");
      continue;
    }
    Observation o;
    o.charttime = hours;
    o.channel = ch.id;
    o.value = std::move(text);
    if (has_storetime)
      if (auto st = detail::parse_double_opt((*row)[idx["storetime"]])) o.storetime = rules.to_hours(*st);
    out[stay].push_back(std::move(o));
  }
}

// Stay CSV schema: stay_id, los_hours, expired (0/1)
struct StayInfo {
  double los_hours = 0;
  bool expired = false;
};

inline std::map<std::string, StayInfo> load_stays(std::istream& in, LoadReport& report) {
  CsvReader csv(in);
  auto header = csv.next_row();
  if (!header) throw Error("stays: empty file");
  auto idx = detail::header_index(*header, {"stay_id", "los_hours", "expired"}, "stays");
  std::map<std::string, StayInfo> out;
  while (auto row = csv.next_row()) {
    ++report.rows_read;
    if (row->size() < header->size()) {
      report.skip(csv.line(), "stays: wrong column count");
      continue;
    }
    const std::string& stay = (*row)[idx["stay_id"]];
    auto los = detail::parse_double_opt((*row)[idx["los_hours"]]);
    auto expired = detail::parse_double_opt((*row)[idx["expired"]]);
    if (stay.empty() || !los || !expired) {
      report.skip(csv.line(), "stays: bad row");
      continue;
    }
    out[stay] = StayInfo{*los, *expired != 0.0};
  }
  return out;
}

// eICU-style care plan reconstruction. Each CSV row is one form-field
// selection; rows group into note events by (stay, offset, note type).
// Row CSV schema: stay_id, noteoffset, notetype, notepath, notevalue
// notepath encodes .../section/field_label/field_value; notevalue is the
// authoritative leaf value. The rule file drives noise filtering and
// per-section formatting.
struct NoteRules {
  std::vector<std::string> exclude_note_types;  // e.g. CPR (label leakage)
  std::vector<std::string> deny_sections;       // UI paths, e.g. "View and Save"
  std::vector<std::string> deny_field_labels;   // scaffolding controls
  std::vector<std::string> deny_field_values;   // generic modal selections
  std::vector<std::string> value_only_sections; // emit value without label prefix

  static NoteRules from_json(const nlohmann::json& j) {
    NoteRules r;
    auto read = [&](const char* key, std::vector<std::string>& out) {
      if (j.contains(key)) out = j.at(key).get<std::vector<std::string>>();
    };
    read("exclude_note_types", r.exclude_note_types);
    read("deny_sections", r.deny_sections);
    read("deny_field_labels", r.deny_field_labels);
    read("deny_field_values", r.deny_field_values);
    read("value_only_sections", r.value_only_sections);
    return r;
  }

  static NoteRules from_file(const std::filesystem::path& path) {
    return from_json(nlohmann::json::parse(read_file(path)));
  }
};

inline void reconstruct_note_events(std::istream& in, const ChannelRegistry& registry,
                                    const CohortRules& rules, const NoteRules& note_rules,
                                    const std::string& note_channel_id,
                                    std::map<std::string, std::vector<Observation>>& out,
                                    LoadReport& report) {
  CsvReader csv(in);
  auto header = csv.next_row();
  if (!header) throw Error("note rows: empty file");
  auto idx = detail::header_index(*header, {"stay_id", "noteoffset", "notetype", "notepath", "notevalue"},
                                  "note rows");
  const ChannelSpec& ch = registry.require(note_channel_id);
  auto contains = [](const std::vector<std::string>& v, const std::string& s) {
    return std::find(v.begin(), v.end(), s) != v.end();
  };

  struct EventKey {
    std::string stay;
    double offset;
    std::string type;
    bool operator<(const EventKey& o) const {
      return std::tie(stay, offset, type) < std::tie(o.stay, o.offset, o.type);
    }
  };
  std::map<EventKey, std::vector<std::string>> tokens;  // ordered, deduplicated later

  while (auto row = csv.next_row()) {
    ++report.rows_read;
    if (row->size() < header->size()) {
      report.skip(csv.line(), "note rows: wrong column count");
      continue;
    }
    const std::string& stay = (*row)[idx["stay_id"]];
    auto offset = detail::parse_double_opt((*row)[idx["noteoffset"]]);
    std::string type = trim((*row)[idx["notetype"]]);
    if (stay.empty() || !offset || type.empty()) {
      report.skip(csv.line(), "note rows: bad stay/offset/type");
      continue;
    }
    if (contains(note_rules.exclude_note_types, type)) continue;
    double hours = rules.to_hours(*offset);
    if (hours < 0 || hours > rules.window_hours) {
      ++report.rows_out_of_window;
      continue;
    }
    auto parts = split((*row)[idx["notepath"]], '/');
    for (auto& p : parts) p = trim(p);
    while (!parts.empty() && parts.back().empty()) parts.pop_back();
    if (parts.size() < 3) {
      report.skip(csv.line(), "note rows: notepath too shallow");
      continue;
    }
    std::string section = parts[parts.size() - 3];
    std::string label = parts[parts.size() - 2];
    std::string value = trim((*row)[idx["notevalue"]]);
    if (value.empty()) value = parts.back();  // fall back to the path leaf
    if (contains(note_rules.deny_sections, section) || contains(note_rules.deny_field_labels, label) ||
        contains(note_rules.deny_field_values, value))
      continue;
    std::string token =
        contains(note_rules.value_only_sections, section) ? value : label + ": " + value;
    tokens[EventKey{stay, hours, type}].push_back(std::move(token));
  }

  for (auto& [key, toks] : tokens) {
    std::string text = "[" + key.type + "]";
    std::set<std::string> seen;
    bool any = false;
    for (const auto& tok : toks) {
      if (tok.empty() || !seen.insert(tok).second) continue;
      text += "\n" + tok;
      any = true;
    }
    if (!any) continue;  // event empty after noise removal
    Observation o;
    o.charttime = key.offset;
    o.channel = ch.id;
    o.value = std::move(text);
    out[key.stay].push_back(std::move(o));
  }
}

// Stay kept iff labs >= min_labs AND note count in [lo, hi] AND LOS >= min
// LOS. Labels: IHM from the expire flag; LOS positive iff the stay was
// shorter than 96 h and the patient survived.
inline std::vector<MitsSample> apply_cohort(
    const std::map<std::string, std::vector<Observation>>& events_by_stay,
    const std::map<std::string, StayInfo>& stays, const CohortRules& rules,
    const ChannelRegistry& registry) {
  rules.validate();
  std::vector<MitsSample> out;
  for (const auto& [stay_id, observations] : events_by_stay) {
    auto it = stays.find(stay_id);
    if (it == stays.end()) continue;
    const StayInfo& info = it->second;
    size_t n_labs = 0, n_notes = 0;
    for (const auto& o : observations)
      (registry.require(o.channel).modality == Modality::numeric ? n_labs : n_notes) += 1;
    if (n_labs < rules.min_labs) continue;
    if (n_notes < rules.note_min || n_notes > rules.note_max) continue;
    if (info.los_hours < rules.min_los_hours) continue;
    MitsSample s;
    s.sample_id = stay_id;
    s.observations = observations;
    s.window = TimeWindow{0.0, rules.window_hours};
    if (rules.label_rule == CohortRules::LabelRule::hospital_expire_flag)
      s.label = info.expired ? 1 : 0;
    else
      s.label = (info.los_hours < rules.short_stay_threshold_hours && !info.expired) ? 1 : 0;
    s.metadata["los_hours"] = format_fixed(info.los_hours, 2);
    s.metadata["expired"] = info.expired ? "1" : "0";
    out.push_back(std::move(s));
  }
  return out;
}

enum class SplitPart { train, validation, test };

inline std::string to_string(SplitPart p) {
  switch (p) {
    case SplitPart::train: return "train";
    case SplitPart::validation: return "validation";
    case SplitPart::test: return "test";
  }
  throw Error("bad split part");
}

inline SplitPart split_part_from_string(const std::string& s) {
  if (s == "train") return SplitPart::train;
  if (s == "validation" || s == "val") return SplitPart::validation;
  if (s == "test") return SplitPart::test;
  throw Error("unknown split part: " + s);
}

struct SplitAssignment {
  std::map<std::string, SplitPart> assign;
  uint64_t seed = 0;

  nlohmann::json to_json() const {
    nlohmann::json parts;
    for (const auto& [id, p] : assign) parts[id] = to_string(p);
    return nlohmann::json{{"seed", seed}, {"assignments", parts}};
  }

  static SplitAssignment from_json(const nlohmann::json& j) {
    SplitAssignment s;
    s.seed = j.at("seed").get<uint64_t>();
    for (const auto& [id, p] : j.at("assignments").items())
      s.assign[id] = split_part_from_string(p.get<std::string>());
    return s;
  }
};

// 70/15/15 at the stay level: ids are sorted, shuffled with the seeded
// generator, then cut with n_validation = n_test = floor(0.15 n) and train
// absorbing the remainder.
inline SplitAssignment make_split(std::vector<std::string> sample_ids, uint64_t seed) {
  if (sample_ids.size() < 10) throw Error("make_split: need at least 10 samples");
  std::sort(sample_ids.begin(), sample_ids.end());
  if (std::adjacent_find(sample_ids.begin(), sample_ids.end()) != sample_ids.end())
    throw Error("make_split: duplicate sample ids");
  Rng rng(mix_seed(seed, 0));
  for (size_t i = sample_ids.size() - 1; i > 0; --i)
    std::swap(sample_ids[i], sample_ids[rng.index(i + 1)]);
  size_t n = sample_ids.size();
  size_t n_val = static_cast<size_t>(std::floor(0.15 * static_cast<double>(n)));
  size_t n_test = n_val;
  size_t n_train = n - n_val - n_test;
  SplitAssignment out;
  out.seed = seed;
  for (size_t i = 0; i < n; ++i) {
    SplitPart p = i < n_train                ? SplitPart::train
                  : i < n_train + n_val      ? SplitPart::validation
                                             : SplitPart::test;
    out.assign[sample_ids[i]] = p;
  }
  return out;
}

}  // namespace mits
