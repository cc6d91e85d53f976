#pragma once

#include <map>
#include <optional>
#include <string>
#include <unordered_map>
#include <variant>
#include <vector>

#include "mits/format.hpp"
#include "mits/util.hpp"

namespace mits {

enum class Modality { numeric, text };

inline std::string to_string(Modality m) { return m == Modality::numeric ? "numeric" : "text"; }

inline Modality modality_from_string(const std::string& s) {
  if (s == "numeric") return Modality::numeric;
  if (s == "text") return Modality::text;
  throw Error("unknown modality: " + s);
}

struct ChannelSpec {
  std::string id;
  std::string display_name;  // rendering string including units, e.g. "Glucose (mg/dL)"
  Modality modality = Modality::numeric;
  int tie_rank = -1;  // < 0 means "assign from registry declaration order"
  int value_decimals = 2;
  std::vector<std::string> aliases;
};

// Channel registry: id/alias -> spec, display name -> spec. Ties in the
// flattened ordering break by tie_rank, which defaults to declaration order.
class ChannelRegistry {
 public:
  const ChannelSpec& add(ChannelSpec spec) {
    if (spec.id.empty()) throw Error("channel id must be non-empty");
    if (spec.display_name.empty()) throw Error("channel display_name must be non-empty: " + spec.id);
    if (spec.display_name.find('\n') != std::string::npos)
      throw Error("channel display_name must not contain newlines: " + spec.id);
    if (spec.display_name.find("</channel>") != std::string::npos)
      throw Error("channel display_name must not contain '</channel>': " + spec.id);
    if (spec.tie_rank < 0) spec.tie_rank = next_auto_rank();
    for (const auto& c : channels_)
      if (c.tie_rank == spec.tie_rank)
        throw Error("duplicate tie_rank " + std::to_string(spec.tie_rank) + " for channel " + spec.id);
    if (by_key_.count(spec.id)) throw Error("duplicate channel id: " + spec.id);
    if (by_display_.count(spec.display_name))
      throw Error("duplicate channel display_name: " + spec.display_name);
    for (const auto& a : spec.aliases)
      if (by_key_.count(a)) throw Error("duplicate channel alias: " + a);
    size_t idx = channels_.size();
    by_key_[spec.id] = idx;
    for (const auto& a : spec.aliases) by_key_[a] = idx;
    by_display_[spec.display_name] = idx;
    channels_.push_back(std::move(spec));
    return channels_.back();
  }

  const ChannelSpec* find(const std::string& id_or_alias) const {
    auto it = by_key_.find(id_or_alias);
    return it == by_key_.end() ? nullptr : &channels_[it->second];
  }

  const ChannelSpec* find_by_display(const std::string& display_name) const {
    auto it = by_display_.find(display_name);
    return it == by_display_.end() ? nullptr : &channels_[it->second];
  }

  const ChannelSpec& require(const std::string& id_or_alias) const {
    const ChannelSpec* c = find(id_or_alias);
    if (!c) throw Error("unknown channel: " + id_or_alias);
    return *c;
  }

  const std::vector<ChannelSpec>& channels() const { return channels_; }
  bool empty() const { return channels_.empty(); }

  // Registry file: UTF-8, one channel per line, tab-separated columns
  //   id <TAB> display_name <TAB> modality <TAB> tie_rank [<TAB> options]
  // options is ';'-separated key=value; keys: decimals=<int>, aliases=a|b|c.
  // '#' starts a comment line.
  static ChannelRegistry load(const std::filesystem::path& path) {
    ChannelRegistry reg;
    std::string content = normalize_newlines(read_file(path));
    size_t lineno = 0;
    for (const auto& raw : split(content, '\n')) {
      ++lineno;
      std::string line = trim(raw);
      if (line.empty() || line[0] == '#') continue;
      auto cols = split(raw, '\t');
      if (cols.size() < 4)
        throw Error(path.string() + ":" + std::to_string(lineno) + ": expected at least 4 tab-separated columns");
      ChannelSpec spec;
      spec.id = trim(cols[0]);
      spec.display_name = trim(cols[1]);
      spec.modality = modality_from_string(trim(cols[2]));
      try {
        spec.tie_rank = std::stoi(trim(cols[3]));
      } catch (const std::exception&) {
        throw Error(path.string() + ":" + std::to_string(lineno) + ": tie_rank must be an integer");
      }
      if (spec.tie_rank < 0)
        throw Error(path.string() + ":" + std::to_string(lineno) + ": tie_rank must be non-negative");
      if (cols.size() >= 5) {
        for (const auto& opt : split(trim(cols[4]), ';')) {
          if (opt.empty()) continue;
          auto eq = opt.find('=');
          if (eq == std::string::npos)
            throw Error(path.string() + ":" + std::to_string(lineno) + ": bad option '" + opt + "'");
          std::string key = trim(opt.substr(0, eq)), val = trim(opt.substr(eq + 1));
          if (key == "decimals") spec.value_decimals = std::stoi(val);
          else if (key == "aliases") {
            for (auto& a : split(val, '|'))
              if (!trim(a).empty()) spec.aliases.push_back(trim(a));
          } else
            throw Error(path.string() + ":" + std::to_string(lineno) + ": unknown option key '" + key + "'");
        }
      }
      reg.add(std::move(spec));
    }
    return reg;
  }

  void save(const std::filesystem::path& path) const {
    std::string out = "# id\tdisplay_name\tmodality\ttie_rank\toptions\n";
    for (const auto& c : channels_) {
      out += c.id + "\t" + c.display_name + "\t" + to_string(c.modality) + "\t" + std::to_string(c.tie_rank);
      std::string opts;
      if (c.value_decimals != 2) opts += "decimals=" + std::to_string(c.value_decimals);
      if (!c.aliases.empty()) {
        if (!opts.empty()) opts += ';';
        opts += "aliases=";
        for (size_t i = 0; i < c.aliases.size(); ++i) opts += (i ? "|" : "") + c.aliases[i];
      }
      if (!opts.empty()) out += "\t" + opts;
      out += "\n";
    }
    write_file(path, out);
  }

 private:
  int next_auto_rank() const {
    int r = -1;
    for (const auto& c : channels_) r = std::max(r, c.tie_rank);
    return r + 1;
  }

  std::vector<ChannelSpec> channels_;
  std::unordered_map<std::string, size_t> by_key_;
  std::unordered_map<std::string, size_t> by_display_;
};

struct TimeWindow {
  double start = 0.0;
  double end = 24.0;
  double length() const { return end - start; }
};

// One timestamped channel reading. Times are hours since window start;
// storetime is the database-availability time and may be absent.
struct Observation {
  double charttime = 0.0;
  std::string channel;  // channel id (or alias)
  std::variant<double, std::string> value;
  std::optional<double> storetime;

  bool is_numeric() const { return std::holds_alternative<double>(value); }
  double numeric() const { return std::get<double>(value); }
  const std::string& text() const { return std::get<std::string>(value); }
};

struct MitsSample {
  std::string sample_id;
  std::vector<Observation> observations;
  TimeWindow window;
  int label = 0;
  std::map<std::string, std::string> metadata;

  // n_c is always derived from the observation list, never stored.
  std::map<std::string, size_t> channel_counts() const {
    std::map<std::string, size_t> n;
    for (const auto& o : observations) ++n[o.channel];
    return n;
  }
};

struct TaskConfig {
  enum class Task { IHM, LOS };
  Task task = Task::IHM;
  std::vector<char> class_letters;        // class index -> letter
  std::vector<std::string> class_names;   // class index -> display name
  int positive_class = 1;
  double horizon_hours = 24.0;

  int num_classes() const { return static_cast<int>(class_letters.size()); }
  char letter(int label) const { return class_letters.at(static_cast<size_t>(label)); }

  void validate() const {
    if (class_letters.size() != class_names.size() || class_letters.empty())
      throw Error("task config: letters/names mismatch");
    for (size_t i = 0; i < class_letters.size(); ++i) {
      char c = class_letters[i];
      if (c < 'A' || c > 'Z') throw Error("class letters must be single ASCII uppercase characters");
      for (size_t j = i + 1; j < class_letters.size(); ++j)
        if (class_letters[j] == c) throw Error("class letters must be distinct");
    }
    if (positive_class < 0 || positive_class >= num_classes())
      throw Error("positive_class out of range");
  }

  static TaskConfig ihm() {
    TaskConfig t;
    t.task = Task::IHM;
    t.class_letters = {'A', 'B'};
    t.class_names = {"SURVIVAL", "MORTALITY"};
    t.positive_class = 1;
    return t;
  }

  static TaskConfig los() {
    TaskConfig t;
    t.task = Task::LOS;
    t.class_letters = {'A', 'B'};
    t.class_names = {"LONG_STAY", "SHORT_STAY"};
    t.positive_class = 1;
    return t;
  }

  static TaskConfig by_name(const std::string& name) {
    if (name == "IHM" || name == "ihm") return ihm();
    if (name == "LOS" || name == "los") return los();
    throw Error("unknown task: " + name);
  }

  std::string name() const { return task == Task::IHM ? "IHM" : "LOS"; }
};

// One row of the time-ordered serialization: display name + render-ready
// value string. pending means the value is withheld at render time.
// storetime is carried through for the value-pending transforms; it never
// renders and is ignored by normalized comparison.
struct FlatObservation {
  double charttime = 0.0;
  std::string channel;  // display name
  std::optional<std::string> value;
  bool pending = false;
  std::optional<double> storetime;
};

inline bool flat_equal_normalized(const FlatObservation& a, const FlatObservation& b) {
  return format_hours(a.charttime) == format_hours(b.charttime) && a.channel == b.channel &&
         a.value == b.value && a.pending == b.pending;
}

inline bool flat_equal_normalized(const std::vector<FlatObservation>& a,
                                  const std::vector<FlatObservation>& b) {
  if (a.size() != b.size()) return false;
  for (size_t i = 0; i < a.size(); ++i)
    if (!flat_equal_normalized(a[i], b[i])) return false;
  return true;
}

struct Violation {
  enum class Kind { out_of_window, modality_mismatch, storetime_before_charttime, unknown_channel };
  Kind kind;
  size_t observation_index;
  std::string message;
};

struct ValidationResult {
  std::vector<Violation> violations;
  bool ok() const { return violations.empty(); }
};

// Violations are data, not failures: callers decide what to do with them.
inline ValidationResult validate_sample(const MitsSample& sample, const ChannelRegistry& registry) {
  ValidationResult res;
  const double lo = 0.0, hi = sample.window.length();
  for (size_t i = 0; i < sample.observations.size(); ++i) {
    const Observation& o = sample.observations[i];
    const ChannelSpec* ch = registry.find(o.channel);
    if (!ch) {
      res.violations.push_back({Violation::Kind::unknown_channel, i, "unknown channel '" + o.channel + "'"});
      continue;
    }
    if (o.charttime < lo || o.charttime > hi)
      res.violations.push_back({Violation::Kind::out_of_window, i,
                                "charttime " + format_hours(o.charttime) + " outside [" + format_hours(lo) +
                                    ", " + format_hours(hi) + "]"});
    bool numeric = o.is_numeric();
    if ((ch->modality == Modality::numeric) != numeric)
      res.violations.push_back({Violation::Kind::modality_mismatch, i,
                                "value modality does not match channel '" + ch->id + "' (" +
                                    to_string(ch->modality) + ")"});
    if (o.storetime && *o.storetime < o.charttime)
      res.violations.push_back({Violation::Kind::storetime_before_charttime, i,
                                "storetime precedes charttime on channel '" + o.channel + "'"});
  }
  return res;
}

// Render-time options. max_value_chars truncates text values (0 = unlimited).
struct FormatPolicy {
  size_t max_value_chars = 0;
};

inline std::string format_value(const Observation& o, const ChannelSpec& ch, const FormatPolicy& policy) {
  if (o.is_numeric()) return format_fixed(o.numeric(), ch.value_decimals);
  std::string text = o.text();
  if (policy.max_value_chars > 0 && text.size() > policy.max_value_chars)
    text.resize(policy.max_value_chars);
  return text;
}

// Time-ordered serialization: global sort by charttime, ties broken by the
// registry's predefined channel order; stable for exact duplicates.
inline std::vector<FlatObservation> flatten(const MitsSample& sample, const ChannelRegistry& registry,
                                            const FormatPolicy& policy = {}) {
  struct Row {
    FlatObservation flat;
    int tie_rank;
  };
  std::vector<Row> rows;
  rows.reserve(sample.observations.size());
  for (const auto& o : sample.observations) {
    const ChannelSpec& ch = registry.require(o.channel);
    FlatObservation f;
    f.charttime = o.charttime;
    f.channel = ch.display_name;
    f.value = format_value(o, ch, policy);
    f.pending = false;
    f.storetime = o.storetime;
    rows.push_back({std::move(f), ch.tie_rank});
  }
  std::stable_sort(rows.begin(), rows.end(), [](const Row& a, const Row& b) {
    if (a.flat.charttime != b.flat.charttime) return a.flat.charttime < b.flat.charttime;
    return a.tie_rank < b.tie_rank;
  });
  std::vector<FlatObservation> out;
  out.reserve(rows.size());
  for (auto& r : rows) out.push_back(std::move(r.flat));
  return out;
}

// Counting-process values N_c(t) on a time grid, plus totals per modality.
struct SamplingStats {
  std::map<std::string, std::vector<size_t>> counts_at;  // channel id -> N_c(t) per grid point
  std::map<std::string, size_t> total_by_modality;       // "numeric"/"text" -> count
  size_t total = 0;
};

inline SamplingStats sampling_stats(const MitsSample& sample, const ChannelRegistry& registry,
                                    const std::vector<double>& grid) {
  SamplingStats stats;
  for (const auto& ch : registry.channels()) stats.counts_at[ch.id].assign(grid.size(), 0);
  stats.total_by_modality["numeric"] = 0;
  stats.total_by_modality["text"] = 0;
  for (const auto& o : sample.observations) {
    const ChannelSpec& ch = registry.require(o.channel);
    auto& counts = stats.counts_at[ch.id];
    for (size_t g = 0; g < grid.size(); ++g)
      if (o.charttime <= grid[g]) ++counts[g];
    ++stats.total_by_modality[to_string(ch.modality)];
    ++stats.total;
  }
  return stats;
}

// Per-label observation count means over a dataset (the count-distribution
// summary behind the `stats` subcommand).
struct CountSummary {
  struct Cell {
    size_t n_samples = 0;
    double mean_total = 0, mean_numeric = 0, mean_text = 0;
  };
  std::map<int, Cell> by_label;
};

inline CountSummary summarize_counts(const std::vector<MitsSample>& samples,
                                     const ChannelRegistry& registry) {
  CountSummary s;
  for (const auto& sample : samples) {
    auto& cell = s.by_label[sample.label];
    size_t n_num = 0, n_text = 0;
    for (const auto& o : sample.observations)
      (registry.require(o.channel).modality == Modality::numeric ? n_num : n_text) += 1;
    cell.mean_total += static_cast<double>(n_num + n_text);
    cell.mean_numeric += static_cast<double>(n_num);
    cell.mean_text += static_cast<double>(n_text);
    cell.n_samples += 1;
  }
  for (auto& [label, cell] : s.by_label) {
    if (cell.n_samples == 0) continue;
    cell.mean_total /= static_cast<double>(cell.n_samples);
    cell.mean_numeric /= static_cast<double>(cell.n_samples);
    cell.mean_text /= static_cast<double>(cell.n_samples);
  }
  return s;
}

}  // namespace mits
