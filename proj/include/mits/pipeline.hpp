#pragma once

#include <filesystem>
#include <fstream>
#include <map>
#include <string>
#include <vector>

#include <json.hpp>

#include "mits/dataset_io.hpp"
#include "mits/inference.hpp"
#include "mits/ingest.hpp"
#include "mits/metrics.hpp"
#include "mits/prompting.hpp"
#include "mits/synthgen.hpp"
#include "mits/transforms.hpp"
#include "mits/xml.hpp"

#ifndef MITS_SOURCE_DIR
#define MITS_SOURCE_DIR "."
#endif

namespace mits {

struct StageError : Error {
  std::string stage;
  StageError(std::string stage_, const std::string& msg)
      : Error("stage '" + stage_ + "': " + msg), stage(std::move(stage_)) {}
};

// Per-stage manifest: inputs, parameters, seeds, output checksums. No
// timestamps, so reruns with identical config are byte-identical.
inline void write_stage_manifest(const std::filesystem::path& out_dir, const std::string& stage,
                                 const nlohmann::json& params,
                                 const std::vector<std::filesystem::path>& outputs) {
  nlohmann::json checks;
  for (const auto& p : outputs) checks[p.filename().string()] = fnv1a64_hex(read_file(p));
  nlohmann::json manifest{{"stage", stage}, {"params", params}, {"outputs", checks}};
  write_file(out_dir / ("manifest_" + stage + ".json"), manifest.dump(2) + "\n");
}

// Count-distribution data files (per-sample counts plus per-label
// histograms), suitable for external plotting.
inline void write_count_stats(const std::vector<MitsSample>& samples, const ChannelRegistry& registry,
                              const std::filesystem::path& prefix) {
  std::string per_sample = "sample_id,label,n_labs,n_notes,n_total\n";
  std::map<std::pair<int, std::string>, std::map<size_t, size_t>> hist;  // (label, modality) -> count -> freq
  size_t max_total = 0;
  for (const auto& s : samples) {
    size_t n_labs = 0, n_notes = 0;
    for (const auto& o : s.observations)
      (registry.require(o.channel).modality == Modality::numeric ? n_labs : n_notes) += 1;
    per_sample += s.sample_id + "," + std::to_string(s.label) + "," + std::to_string(n_labs) + "," +
                  std::to_string(n_notes) + "," + std::to_string(n_labs + n_notes) + "\n";
    hist[{s.label, "lab"}][n_labs] += 1;
    hist[{s.label, "note"}][n_notes] += 1;
    hist[{s.label, "total"}][n_labs + n_notes] += 1;
    max_total = std::max(max_total, n_labs + n_notes);
  }
  write_file(prefix.string() + "_counts.csv", per_sample);

  size_t bin_width = std::max<size_t>(1, (max_total + 19) / 20);
  std::map<std::pair<int, std::string>, std::map<size_t, size_t>> binned;
  for (const auto& [key, counts] : hist)
    for (const auto& [count, freq] : counts) binned[key][count / bin_width] += freq;
  std::string hcsv = "modality,label,bin_lo,bin_hi,n_samples\n";
  for (const auto& [key, bins] : binned)
    for (const auto& [bin, freq] : bins)
      hcsv += key.second + "," + std::to_string(key.first) + "," + std::to_string(bin * bin_width) + "," +
              std::to_string((bin + 1) * bin_width - 1) + "," + std::to_string(freq) + "\n";
  write_file(prefix.string() + "_hist.csv", hcsv);

  CountSummary summary = summarize_counts(samples, registry);
  std::string scsv = "label,n_samples,mean_total,mean_labs,mean_notes\n";
  for (const auto& [label, cell] : summary.by_label)
    scsv += std::to_string(label) + "," + std::to_string(cell.n_samples) + "," +
            format_fixed(cell.mean_total, 2) + "," + format_fixed(cell.mean_numeric, 2) + "," +
            format_fixed(cell.mean_text, 2) + "\n";
  write_file(prefix.string() + "_summary.csv", scsv);
}

inline std::string pending_stats_to_csv(const PendingStats& stats) {
  std::string out = "modality,mean_pending_count,mean_pending_rate,total_pending,total_observations\n";
  for (const auto& [name, row] : stats.by_modality)
    out += name + "," + format_fixed(row.mean_pending_count, 6) + "," +
           format_fixed(row.mean_pending_rate, 6) + "," + std::to_string(row.total_pending) + "," +
           std::to_string(row.total_observations) + "\n";
  return out;
}

// Declarative pipeline config (single JSON file). Keys:
//   seed, out_dir, task, stages: [...]
//   generate:  {generator: {...}}                      -> dataset.jsonl, registry.tsv
//   build:     {labs, notes|note_rows, note_rules, stays, rules, registry}
//   transform: {kind: none|redact|pending, countermeasure, cutoff_hours}
//   prompt:    {templates_dir}
//   export_sft:{stage: stage1_redacted|stage2_full, allow_show_presence}
//   score:     {scorer: count-baseline|endpoint, endpoint: {...}}
//   evaluate:  {split: all|train|validation|test, dataset_id, method, run_index}
// Stages run in the declared order; each writes its outputs plus a manifest.
class Pipeline {
 public:
  Pipeline(nlohmann::json config, std::filesystem::path base_dir)
      : cfg_(std::move(config)), base_(std::move(base_dir)) {
    static const std::vector<std::string> known = {"generate", "build",      "transform",
                                                   "prompt",   "export_sft", "score",
                                                   "evaluate"};
    if (!cfg_.contains("stages")) throw UsageError("pipeline config: missing 'stages'");
    for (const auto& s : cfg_.at("stages")) {
      std::string name = s.get<std::string>();
      if (std::find(known.begin(), known.end(), name) == known.end())
        throw UsageError("pipeline config: unknown stage name '" + name + "'");
    }
    out_dir_ = resolve(cfg_.value("out_dir", std::string("out")));
    seed_ = cfg_.value("seed", uint64_t{1});
    task_ = TaskConfig::by_name(cfg_.value("task", std::string("IHM")));
  }

  std::vector<std::string> run() {
    std::filesystem::create_directories(out_dir_);
    std::vector<std::string> ran;
    for (const auto& s : cfg_.at("stages")) {
      std::string name = s.get<std::string>();
      try {
        dispatch(name);
      } catch (const StageError&) {
        throw;
      } catch (const std::exception& e) {
        throw StageError(name, e.what());  // partial outputs are retained
      }
      ran.push_back(name);
    }
    return ran;
  }

  const std::filesystem::path& out_dir() const { return out_dir_; }

 private:
  std::filesystem::path resolve(const std::string& p) const {
    std::filesystem::path path(p);
    return path.is_absolute() ? path : base_ / path;
  }

  nlohmann::json stage_cfg(const std::string& name) const {
    return cfg_.contains(name) ? cfg_.at(name) : nlohmann::json::object();
  }

  void dispatch(const std::string& name) {
    if (name == "generate") return stage_generate();
    if (name == "build") return stage_build();
    if (name == "transform") return stage_transform();
    if (name == "prompt") return stage_prompt();
    if (name == "export_sft") return stage_export_sft();
    if (name == "score") return stage_score();
    if (name == "evaluate") return stage_evaluate();
    throw StageError(name, "unknown stage");
  }

  void stage_generate() {
    auto sc = stage_cfg("generate");
    GeneratorConfig gen = sc.contains("generator") ? GeneratorConfig::from_json(sc.at("generator"))
                                                   : GeneratorConfig::defaults();
    if (!sc.contains("generator") || !sc.at("generator").contains("seed")) gen.seed = seed_;
    auto samples = generate_dataset(gen);
    write_dataset(out_dir_ / "dataset.jsonl", samples);
    gen.registry().save(out_dir_ / "registry.tsv");
    write_stage_manifest(out_dir_, "generate", gen.to_json(),
                         {out_dir_ / "dataset.jsonl", out_dir_ / "registry.tsv"});
  }

  void stage_build() {
    auto sc = stage_cfg("build");
    for (const char* key : {"labs", "stays", "rules", "registry"})
      if (!sc.contains(key)) throw Error(std::string("build: missing '") + key + "'");
    ChannelRegistry registry = ChannelRegistry::load(resolve(sc.at("registry").get<std::string>()));
    CohortRules rules = CohortRules::from_file(resolve(sc.at("rules").get<std::string>()));
    LoadReport report;
    std::map<std::string, std::vector<Observation>> events;
    {
      std::ifstream labs(resolve(sc.at("labs").get<std::string>()));
      if (!labs) throw Error("cannot open labs file");
      load_lab_events(labs, registry, rules, events, report);
    }
    std::string note_channel = sc.value("note_channel", std::string("radiology_note"));
    if (sc.contains("notes")) {
      std::ifstream notes(resolve(sc.at("notes").get<std::string>()));
      if (!notes) throw Error("cannot open notes file");
      load_note_events(notes, registry, rules, note_channel, events, report);
    } else if (sc.contains("note_rows")) {
      if (!sc.contains("note_rules")) throw Error("build: note_rows requires note_rules");
      NoteRules nr = NoteRules::from_file(resolve(sc.at("note_rules").get<std::string>()));
      std::ifstream rows(resolve(sc.at("note_rows").get<std::string>()));
      if (!rows) throw Error("cannot open note_rows file");
      reconstruct_note_events(rows, registry, rules, nr, note_channel, events, report);
    }
    std::map<std::string, StayInfo> stays;
    {
      std::ifstream st(resolve(sc.at("stays").get<std::string>()));
      if (!st) throw Error("cannot open stays file");
      stays = load_stays(st, report);
    }
    auto samples = apply_cohort(events, stays, rules, registry);
    write_dataset(out_dir_ / "dataset.jsonl", samples);
    registry.save(out_dir_ / "registry.tsv");
    std::vector<std::string> ids;
    for (const auto& s : samples) ids.push_back(s.sample_id);
    SplitAssignment split = make_split(ids, seed_);
    write_file(out_dir_ / "split.json", split.to_json().dump(2) + "\n");
    nlohmann::json params = sc;
    params["rows_read"] = report.rows_read;
    params["rows_skipped"] = report.rows_skipped;
    params["rows_out_of_window"] = report.rows_out_of_window;
    write_stage_manifest(out_dir_, "build", params,
                         {out_dir_ / "dataset.jsonl", out_dir_ / "registry.tsv", out_dir_ / "split.json"});
  }

  ChannelRegistry load_registry() const { return ChannelRegistry::load(out_dir_ / "registry.tsv"); }

  // flat.jsonl: one record per sample with the transformed flattened view.
  void stage_transform() {
    auto sc = stage_cfg("transform");
    std::string kind = sc.value("kind", std::string("none"));
    ChannelRegistry registry = load_registry();
    auto samples = read_dataset(out_dir_ / "dataset.jsonl");
    PendingPolicy policy;
    if (kind == "pending") {
      policy.cutoff_hours = sc.value("cutoff_hours", 24.0);
      policy.countermeasure = countermeasure_from_string(sc.value("countermeasure", std::string("drop")));
    } else if (kind != "none" && kind != "redact") {
      throw Error("transform: unknown kind '" + kind + "'");
    }
    std::string lines;
    for (const auto& s : samples) {
      auto flat = flatten(s, registry);
      if (kind == "redact") flat = redact_values(std::move(flat));
      if (kind == "pending") flat = apply_value_pending(std::move(flat), policy);
      nlohmann::json obs = nlohmann::json::array();
      for (const auto& o : flat) {
        nlohmann::json j{{"t", o.charttime}, {"channel", o.channel}, {"pending", o.pending}};
        if (o.value) j["value"] = *o.value;
        obs.push_back(std::move(j));
      }
      lines += nlohmann::json{{"sample_id", s.sample_id}, {"label", s.label}, {"observations", obs}}.dump();
      lines += '\n';
    }
    write_file(out_dir_ / "flat.jsonl", lines);
    if (kind == "pending") {
      PendingStats stats = pending_statistics(samples, registry, policy);
      write_file(out_dir_ / "pending_stats.csv", pending_stats_to_csv(stats));
    }
    write_stage_manifest(out_dir_, "transform", sc, {out_dir_ / "flat.jsonl"});
  }

  RenderMode current_mode() const {
    auto sc = stage_cfg("transform");
    std::string kind = sc.value("kind", std::string("none"));
    if (kind == "redact") return RenderMode::redacted_pair;
    if (kind == "pending" &&
        countermeasure_from_string(sc.value("countermeasure", std::string("drop"))) ==
            PendingPolicy::Countermeasure::show_presence)
      return RenderMode::mixed_by_pending_flag;
    return RenderMode::full_triplet;
  }

  struct FlatRecord {
    std::string sample_id;
    int label;
    std::vector<FlatObservation> flat;
  };

  std::vector<FlatRecord> read_flat() const {
    std::vector<FlatRecord> out;
    for (const auto& line : split(read_file(out_dir_ / "flat.jsonl"), '\n')) {
      if (trim(line).empty()) continue;
      auto j = nlohmann::json::parse(line);
      FlatRecord rec;
      rec.sample_id = j.at("sample_id").get<std::string>();
      rec.label = j.at("label").get<int>();
      for (const auto& jo : j.at("observations")) {
        FlatObservation o;
        o.charttime = jo.at("t").get<double>();
        o.channel = jo.at("channel").get<std::string>();
        o.pending = jo.at("pending").get<bool>();
        if (jo.contains("value")) o.value = jo.at("value").get<std::string>();
        rec.flat.push_back(std::move(o));
      }
      out.push_back(std::move(rec));
    }
    return out;
  }

  void stage_prompt() {
    auto sc = stage_cfg("prompt");
    std::string dir = sc.value("templates_dir", std::string(MITS_SOURCE_DIR "/assets/templates"));
    TemplateLibrary lib = TemplateLibrary::load(resolve(dir));
    RenderMode mode = current_mode();
    TemplateId tid = template_id_for(task_.task, mode);
    std::string lines;
    for (const auto& rec : read_flat()) {
      SerializedMits serialized = render(rec.flat, mode);
      PromptBundle b = build_prompt(serialized, task_, lib.get(tid), rec.sample_id);
      lines += nlohmann::json{{"sample_id", b.sample_id},
                              {"label", rec.label},
                              {"template_id", to_string(b.template_id)},
                              {"system", b.system},
                              {"user", b.user}}
                   .dump();
      lines += '\n';
    }
    write_file(out_dir_ / "prompts.jsonl", lines);
    write_stage_manifest(out_dir_, "prompt",
                         nlohmann::json{{"template_id", to_string(tid)}, {"checksums", lib.checksums()}},
                         {out_dir_ / "prompts.jsonl"});
  }

  std::vector<std::tuple<std::string, int, PromptBundle>> read_prompts() const {
    std::vector<std::tuple<std::string, int, PromptBundle>> out;
    for (const auto& line : split(read_file(out_dir_ / "prompts.jsonl"), '\n')) {
      if (trim(line).empty()) continue;
      auto j = nlohmann::json::parse(line);
      PromptBundle b;
      b.sample_id = j.at("sample_id").get<std::string>();
      b.system = j.at("system").get<std::string>();
      b.user = j.at("user").get<std::string>();
      b.template_id = template_id_from_string(j.at("template_id").get<std::string>());
      out.emplace_back(b.sample_id, j.at("label").get<int>(), std::move(b));
    }
    return out;
  }

  void stage_export_sft() {
    auto sc = stage_cfg("export_sft");
    SftStage stage = sft_stage_from_string(sc.value("stage", std::string("stage2_full")));
    bool allow_mixed = sc.value("allow_show_presence", false);
    std::string dir = stage_cfg("prompt").value("templates_dir", std::string(MITS_SOURCE_DIR "/assets/templates"));
    TemplateLibrary lib = TemplateLibrary::load(resolve(dir));
    std::vector<PromptBundle> bundles;
    for (auto& [id, label, bundle] : read_prompts())
      bundles.push_back(build_sft_record(std::move(bundle), label, task_));
    export_sft_file(bundles, out_dir_ / "sft.jsonl", stage, lib, allow_mixed);
    write_stage_manifest(out_dir_, "export_sft", sc,
                         {out_dir_ / "sft.jsonl", out_dir_ / "sft.jsonl.manifest.json"});
  }

  void stage_score() {
    auto sc = stage_cfg("score");
    std::string scorer = sc.value("scorer", std::string("count-baseline"));
    std::string lines;
    if (scorer == "count-baseline") {
      for (const auto& rec : read_flat()) {
        lines += nlohmann::json{{"sample_id", rec.sample_id},
                                {"score", static_cast<double>(rec.flat.size())},
                                {"ok", true}}
                     .dump();
        lines += '\n';
      }
    } else if (scorer == "endpoint") {
      EndpointConfig ec;
      if (sc.contains("endpoint")) {
        const auto& je = sc.at("endpoint");
        ec.base_url = je.value("base_url", ec.base_url);
        ec.model = je.value("model", ec.model);
        ec.concurrency = je.value("concurrency", ec.concurrency);
        ec.top_logprobs_k = je.value("top_logprobs", ec.top_logprobs_k);
        ec.timeout_seconds = je.value("timeout_seconds", ec.timeout_seconds);
        ec.max_attempts = je.value("max_attempts", ec.max_attempts);
        ec.backoff_ms = je.value("backoff_ms", ec.backoff_ms);
      }
      EndpointClient client(ec, task_);
      std::vector<PromptBundle> bundles;
      for (auto& [id, label, bundle] : read_prompts()) bundles.push_back(std::move(bundle));
      for (const auto& rec : client.score_batch(bundles)) {
        nlohmann::json j{{"sample_id", rec.sample_id}, {"ok", rec.ok}, {"attempts", rec.attempts}};
        if (rec.ok) {
          j["score"] = rec.scores.probs[static_cast<size_t>(task_.positive_class)];
          j["probs"] = rec.scores.probs;
          j["captured_mass"] = rec.scores.captured_mass;
          j["fallback_used"] = rec.scores.fallback_used;
        } else {
          j["error"] = rec.error;
        }
        lines += j.dump();
        lines += '\n';
      }
    } else {
      throw Error("score: unknown scorer '" + scorer + "'");
    }
    write_file(out_dir_ / "scores.jsonl", lines);
    write_stage_manifest(out_dir_, "score", sc, {out_dir_ / "scores.jsonl"});
  }

  void stage_evaluate() {
    auto sc = stage_cfg("evaluate");
    std::map<std::string, int> labels;
    for (const auto& s : read_dataset(out_dir_ / "dataset.jsonl")) labels[s.sample_id] = s.label;

    std::optional<SplitAssignment> split;
    std::string part = sc.value("split", std::string("all"));
    if (part != "all") {
      if (!std::filesystem::exists(out_dir_ / "split.json")) {
        std::vector<std::string> ids;
        for (const auto& [id, label] : labels) ids.push_back(id);
        split = make_split(ids, sc.value("split_seed", seed_));
      } else {
        split = SplitAssignment::from_json(nlohmann::json::parse(read_file(out_dir_ / "split.json")));
      }
    }

    std::vector<double> scores;
    std::vector<int> ys;
    size_t n_errors = 0;
    for (const auto& line : split_lines(read_file(out_dir_ / "scores.jsonl"))) {
      auto j = nlohmann::json::parse(line);
      std::string id = j.at("sample_id").get<std::string>();
      if (!labels.count(id)) throw Error("evaluate: score for unknown sample '" + id + "'");
      if (split && split->assign.at(id) != split_part_from_string(part)) continue;
      if (!j.value("ok", false)) {
        ++n_errors;
        continue;
      }
      scores.push_back(j.at("score").get<double>());
      ys.push_back(labels.at(id) == task_.positive_class ? 1 : 0);
    }
    double roc = auroc(scores, ys);
    double ap = average_precision(scores, ys);
    size_t n_pos = static_cast<size_t>(std::count(ys.begin(), ys.end(), 1));
    nlohmann::json metrics{{"dataset_id", sc.value("dataset_id", std::string("dataset"))},
                           {"method", sc.value("method", std::string("mits"))},
                           {"run_index", sc.value("run_index", 0)},
                           {"auroc", roc},
                           {"ap", ap},
                           {"n_samples", scores.size()},
                           {"n_positive", n_pos},
                           {"n_score_errors", n_errors}};
    write_file(out_dir_ / "metrics.json", metrics.dump(2) + "\n");
    RunResult rr{metrics["method"].get<std::string>(), metrics["dataset_id"].get<std::string>(),
                 sc.value("run_index", 0), roc, ap, scores.size(), n_pos};
    AggregateReport rep = aggregate_runs({rr});
    write_file(out_dir_ / "report.csv", report_to_csv(rep));
    write_file(out_dir_ / "report.txt", report_to_text(rep));
    write_stage_manifest(out_dir_, "evaluate", sc,
                         {out_dir_ / "metrics.json", out_dir_ / "report.csv", out_dir_ / "report.txt"});
  }

  static std::vector<std::string> split_lines(const std::string& content) {
    std::vector<std::string> out;
    for (auto& line : split(content, '\n'))
      if (!trim(line).empty()) out.push_back(line);
    return out;
  }

  nlohmann::json cfg_;
  std::filesystem::path base_;
  std::filesystem::path out_dir_;
  uint64_t seed_ = 1;
  TaskConfig task_ = TaskConfig::ihm();
};

inline std::vector<std::string> run_pipeline(const std::filesystem::path& config_path) {
  nlohmann::json cfg = nlohmann::json::parse(read_file(config_path));
  Pipeline p(cfg, config_path.has_parent_path() ? config_path.parent_path() : ".");
  return p.run();
}

}  // namespace mits
