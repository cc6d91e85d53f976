// mits: multimodal irregular time series toolkit CLI.
// Exit codes: 0 success, 1 usage error, 2 stage failure.

#include <filesystem>
#include <fstream>
#include <iostream>

#include <CLI11.hpp>

#include "mits/dataset_io.hpp"
#include "mits/inference.hpp"
#include "mits/ingest.hpp"
#include "mits/metrics.hpp"
#include "mits/pipeline.hpp"
#include "mits/prompting.hpp"
#include "mits/synthgen.hpp"
#include "mits/transforms.hpp"
#include "mits/xml.hpp"

namespace fs = std::filesystem;
using nlohmann::json;

namespace {

constexpr const char* kDefaultTemplates = MITS_SOURCE_DIR "/assets/templates";

mits::GeneratorConfig load_generator(const std::string& config_path, uint64_t seed, long n, double ratio) {
  mits::GeneratorConfig cfg = config_path.empty()
                                  ? mits::GeneratorConfig::defaults()
                                  : mits::GeneratorConfig::from_json(json::parse(mits::read_file(config_path)));
  if (seed != 0) cfg.seed = seed;
  if (n > 0) cfg.n_samples = static_cast<size_t>(n);
  if (ratio > 0) cfg.intensity_ratio = ratio;
  return cfg;
}

std::vector<mits::FlatObservation> transformed_flat(const mits::MitsSample& s,
                                                    const mits::ChannelRegistry& registry,
                                                    const std::string& kind,
                                                    const mits::PendingPolicy& policy) {
  auto flat = mits::flatten(s, registry);
  if (kind == "redact") return mits::redact_values(std::move(flat));
  if (kind == "pending") return mits::apply_value_pending(std::move(flat), policy);
  return flat;
}

void write_flat_jsonl(const fs::path& out, const std::vector<mits::MitsSample>& samples,
                      const mits::ChannelRegistry& registry, const std::string& kind,
                      const mits::PendingPolicy& policy) {
  std::string lines;
  for (const auto& s : samples) {
    json obs = json::array();
    for (const auto& o : transformed_flat(s, registry, kind, policy)) {
      json j{{"t", o.charttime}, {"channel", o.channel}, {"pending", o.pending}};
      if (o.value) j["value"] = *o.value;
      obs.push_back(std::move(j));
    }
    lines += json{{"sample_id", s.sample_id}, {"label", s.label}, {"observations", obs}}.dump();
    lines += '\n';
  }
  mits::write_file(out, lines);
}

int run_cli(int argc, char** argv) {
  CLI::App app{"multimodal irregular time series toolkit"};
  app.require_subcommand(1);

  // generate-synth
  auto* gen = app.add_subcommand("generate-synth", "generate a synthetic dataset with informative sampling");
  std::string gen_config, gen_out = "dataset.jsonl", gen_registry_out;
  uint64_t gen_seed = 0;
  long gen_n = -1;
  double gen_ratio = -1;
  gen->add_option("--config", gen_config, "generator config JSON");
  gen->add_option("--seed", gen_seed, "override seed");
  gen->add_option("--n-samples", gen_n, "override sample count");
  gen->add_option("--intensity-ratio", gen_ratio, "override positive-class rate multiplier");
  gen->add_option("--out", gen_out, "output dataset JSONL")->required();
  gen->add_option("--registry-out", gen_registry_out, "also write the matching channel registry");
  gen->callback([&] {
    auto cfg = load_generator(gen_config, gen_seed, gen_n, gen_ratio);
    mits::write_dataset(gen_out, mits::generate_dataset(cfg));
    if (!gen_registry_out.empty()) cfg.registry().save(gen_registry_out);
    std::cerr << "wrote " << cfg.n_samples << " samples to " << gen_out << "\n";
  });

  // build-dataset
  auto* build = app.add_subcommand("build-dataset", "build a dataset from EHR-style CSV exports");
  std::string b_labs, b_notes, b_note_rows, b_note_rules, b_stays, b_rules, b_registry;
  std::string b_out = "dataset.jsonl", b_split_out, b_note_channel = "radiology_note";
  uint64_t b_seed = 1;
  build->add_option("--labs", b_labs, "labs CSV (stay_id,charttime,storetime?,channel,value)")->required();
  build->add_option("--notes", b_notes, "notes CSV (stay_id,charttime,storetime?,note_type,text)");
  build->add_option("--note-rows", b_note_rows, "care-plan note rows CSV (stay_id,noteoffset,notetype,notepath,notevalue)");
  build->add_option("--note-rules", b_note_rules, "note reconstruction rule JSON (required with --note-rows)");
  build->add_option("--stays", b_stays, "stays CSV (stay_id,los_hours,expired)")->required();
  build->add_option("--rules", b_rules, "cohort rules JSON")->required();
  build->add_option("--registry", b_registry, "channel registry TSV")->required();
  build->add_option("--note-channel", b_note_channel, "registry id of the note channel");
  build->add_option("--seed", b_seed, "split seed");
  build->add_option("--out", b_out, "output dataset JSONL");
  build->add_option("--split-out", b_split_out, "output split assignment JSON");
  build->callback([&] {
    auto registry = mits::ChannelRegistry::load(b_registry);
    auto rules = mits::CohortRules::from_file(b_rules);
    mits::LoadReport report;
    std::map<std::string, std::vector<mits::Observation>> events;
    {
      std::ifstream in(b_labs);
      if (!in) throw mits::Error("cannot open " + b_labs);
      mits::load_lab_events(in, registry, rules, events, report);
    }
    if (!b_notes.empty()) {
      std::ifstream in(b_notes);
      if (!in) throw mits::Error("cannot open " + b_notes);
      mits::load_note_events(in, registry, rules, b_note_channel, events, report);
    } else if (!b_note_rows.empty()) {
      if (b_note_rules.empty()) throw mits::UsageError("--note-rows requires --note-rules");
      auto nr = mits::NoteRules::from_file(b_note_rules);
      std::ifstream in(b_note_rows);
      if (!in) throw mits::Error("cannot open " + b_note_rows);
      mits::reconstruct_note_events(in, registry, rules, nr, b_note_channel, events, report);
    }
    std::map<std::string, mits::StayInfo> stays;
    {
      std::ifstream in(b_stays);
      if (!in) throw mits::Error("cannot open " + b_stays);
      stays = mits::load_stays(in, report);
    }
    auto samples = mits::apply_cohort(events, stays, rules, registry);
    mits::write_dataset(b_out, samples);
    if (!b_split_out.empty()) {
      std::vector<std::string> ids;
      for (const auto& s : samples) ids.push_back(s.sample_id);
      mits::write_file(b_split_out, mits::make_split(ids, b_seed).to_json().dump(2) + "\n");
    }
    std::cerr << "kept " << samples.size() << " samples (" << report.rows_read << " rows read, "
              << report.rows_skipped << " skipped, " << report.rows_out_of_window << " out of window)\n";
    for (const auto& m : report.messages) std::cerr << "  " << m << "\n";
  });

  // serialize (render and parse directions)
  auto* ser = app.add_subcommand("serialize", "render observation blocks, or parse a rendered block back");
  std::string s_dataset, s_registry, s_mode = "full", s_out, s_parse_in;
  double s_cutoff = 24.0;
  bool s_roundtrip = false;
  ser->add_option("--dataset", s_dataset, "dataset JSONL to render");
  ser->add_option("--registry", s_registry, "channel registry TSV")->required();
  ser->add_option("--mode", s_mode, "full | redacted | mixed");
  ser->add_option("--cutoff-hours", s_cutoff, "pending cutoff for mixed mode");
  ser->add_option("--out", s_out, "output file (JSONL of rendered blocks, or parsed observations)");
  ser->add_option("--parse-in", s_parse_in, "parse a rendered UTF-8 text file back to observations");
  ser->add_flag("--roundtrip-check", s_roundtrip, "verify parse(render(x)) == x for every sample");
  ser->callback([&] {
    auto registry = mits::ChannelRegistry::load(s_registry);
    if (!s_parse_in.empty()) {
      auto flat = mits::parse(mits::read_file(s_parse_in), registry);
      json obs = json::array();
      for (const auto& o : flat) {
        json j{{"t", o.charttime}, {"channel", o.channel}, {"pending", o.pending}};
        if (o.value) j["value"] = *o.value;
        obs.push_back(std::move(j));
      }
      std::string text = obs.dump(2) + "\n";
      if (s_out.empty())
        std::cout << text;
      else
        mits::write_file(s_out, text);
      return;
    }
    if (s_dataset.empty()) throw mits::UsageError("serialize: need --dataset or --parse-in");
    mits::RenderMode mode = mits::render_mode_from_string(s_mode);
    mits::PendingPolicy policy{s_cutoff, mits::PendingPolicy::Countermeasure::show_presence};
    std::string lines;
    for (const auto& s : mits::read_dataset(s_dataset)) {
      auto flat = mits::flatten(s, registry);
      if (mode == mits::RenderMode::redacted_pair) flat = mits::redact_values(std::move(flat));
      if (mode == mits::RenderMode::mixed_by_pending_flag)
        flat = mits::apply_value_pending(std::move(flat), policy);
      auto serialized = mits::render(flat, mode);
      if (s_roundtrip && !mits::flat_equal_normalized(mits::parse(serialized.text, registry), flat))
        throw mits::Error("round-trip mismatch for sample " + s.sample_id);
      lines += json{{"sample_id", s.sample_id},
                    {"mode", to_string(serialized.mode)},
                    {"line_count", serialized.line_count},
                    {"text", serialized.text}}
                   .dump();
      lines += '\n';
    }
    if (s_out.empty())
      std::cout << lines;
    else
      mits::write_file(s_out, lines);
  });

  // redact
  auto* red = app.add_subcommand("redact", "value-redact a dataset into a flattened view");
  std::string r_dataset, r_registry, r_out = "flat.jsonl";
  red->add_option("--dataset", r_dataset)->required();
  red->add_option("--registry", r_registry)->required();
  red->add_option("--out", r_out, "output flat JSONL");
  red->callback([&] {
    auto registry = mits::ChannelRegistry::load(r_registry);
    write_flat_jsonl(r_out, mits::read_dataset(r_dataset), registry, "redact", {});
  });

  // pending
  auto* pend = app.add_subcommand("pending", "apply the value-pending countermeasures");
  std::string p_dataset, p_registry, p_out = "flat.jsonl", p_counter = "drop", p_stats_out;
  double p_cutoff = 24.0;
  pend->add_option("--dataset", p_dataset)->required();
  pend->add_option("--registry", p_registry)->required();
  pend->add_option("--countermeasure", p_counter, "drop | show-presence");
  pend->add_option("--cutoff-hours", p_cutoff, "prediction-time cutoff");
  pend->add_option("--out", p_out, "output flat JSONL");
  pend->add_option("--stats-out", p_stats_out, "also write the pending-rate table CSV");
  pend->callback([&] {
    auto registry = mits::ChannelRegistry::load(p_registry);
    auto samples = mits::read_dataset(p_dataset);
    mits::PendingPolicy policy{p_cutoff, mits::countermeasure_from_string(p_counter)};
    write_flat_jsonl(p_out, samples, registry, "pending", policy);
    if (!p_stats_out.empty())
      mits::write_file(p_stats_out,
                       mits::pending_stats_to_csv(mits::pending_statistics(samples, registry, policy)));
  });

  // export-sft
  auto* sft = app.add_subcommand("export-sft", "export SFT records (JSONL + manifest)");
  std::string e_dataset, e_registry, e_task = "IHM", e_templates = kDefaultTemplates;
  std::string e_stage = "stage2_full", e_out = "sft.jsonl", e_view;
  double e_cutoff = 24.0;
  sft->add_option("--dataset", e_dataset)->required();
  sft->add_option("--registry", e_registry)->required();
  sft->add_option("--task", e_task, "IHM | LOS");
  sft->add_option("--templates", e_templates, "template asset directory");
  sft->add_option("--stage", e_stage, "stage1_redacted | stage2_full");
  sft->add_option("--view", e_view, "override view: full | redacted | show-presence");
  sft->add_option("--cutoff-hours", e_cutoff, "pending cutoff for the show-presence view");
  sft->add_option("--out", e_out, "output SFT JSONL");
  sft->callback([&] {
    auto registry = mits::ChannelRegistry::load(e_registry);
    auto task = mits::TaskConfig::by_name(e_task);
    auto lib = mits::TemplateLibrary::load(e_templates);
    auto stage = mits::sft_stage_from_string(e_stage);
    std::string view = !e_view.empty()               ? e_view
                       : stage == mits::SftStage::stage1_redacted ? "redacted"
                                                                  : "full";
    mits::RenderMode mode = view == "redacted"        ? mits::RenderMode::redacted_pair
                            : view == "show-presence" ? mits::RenderMode::mixed_by_pending_flag
                                                      : mits::RenderMode::full_triplet;
    mits::PendingPolicy policy{e_cutoff, mits::PendingPolicy::Countermeasure::show_presence};
    const auto& tmpl = lib.get(mits::template_id_for(task.task, mode));
    std::vector<mits::PromptBundle> bundles;
    for (const auto& s : mits::read_dataset(e_dataset)) {
      auto flat = mits::flatten(s, registry);
      if (mode == mits::RenderMode::redacted_pair) flat = mits::redact_values(std::move(flat));
      if (mode == mits::RenderMode::mixed_by_pending_flag)
        flat = mits::apply_value_pending(std::move(flat), policy);
      auto bundle = mits::build_prompt(mits::render(flat, mode), task, tmpl, s.sample_id);
      bundles.push_back(mits::build_sft_record(std::move(bundle), s.label, task));
    }
    mits::export_sft_file(bundles, e_out, stage, lib, view == "show-presence");
    std::cerr << "wrote " << bundles.size() << " records to " << e_out << "\n";
  });

  // score
  auto* score = app.add_subcommand("score", "score prompts against an endpoint (or count baseline)");
  std::string sc_prompts, sc_flat, sc_task = "IHM", sc_endpoint, sc_model = "default", sc_out = "scores.jsonl";
  int sc_conc = 4, sc_topk = 20;
  score->add_option("--prompts", sc_prompts, "prompts JSONL (endpoint scoring)");
  score->add_option("--flat", sc_flat, "flat JSONL (count-baseline scoring)");
  score->add_option("--task", sc_task, "IHM | LOS");
  score->add_option("--endpoint", sc_endpoint, "base URL of an OpenAI-compatible chat endpoint");
  score->add_option("--model", sc_model, "model name");
  score->add_option("--concurrency", sc_conc, "max parallel in-flight requests");
  score->add_option("--top-logprobs", sc_topk, "top_logprobs request field");
  score->add_option("--out", sc_out, "output scores JSONL");
  score->callback([&] {
    auto task = mits::TaskConfig::by_name(sc_task);
    std::string lines;
    if (!sc_flat.empty()) {
      for (const auto& line : mits::split(mits::read_file(sc_flat), '\n')) {
        if (mits::trim(line).empty()) continue;
        auto j = json::parse(line);
        lines += json{{"sample_id", j.at("sample_id")},
                      {"score", static_cast<double>(j.at("observations").size())},
                      {"ok", true}}
                     .dump();
        lines += '\n';
      }
    } else {
      if (sc_prompts.empty()) throw mits::UsageError("score: need --prompts or --flat");
      if (sc_endpoint.empty()) throw mits::UsageError("score: --endpoint required with --prompts");
      mits::EndpointConfig ec;
      ec.base_url = sc_endpoint;
      ec.model = sc_model;
      ec.concurrency = sc_conc;
      ec.top_logprobs_k = sc_topk;
      mits::EndpointClient client(ec, task);
      std::vector<mits::PromptBundle> bundles;
      for (const auto& line : mits::split(mits::read_file(sc_prompts), '\n')) {
        if (mits::trim(line).empty()) continue;
        auto j = json::parse(line);
        mits::PromptBundle b;
        b.sample_id = j.at("sample_id").get<std::string>();
        b.system = j.at("system").get<std::string>();
        b.user = j.at("user").get<std::string>();
        bundles.push_back(std::move(b));
      }
      for (const auto& rec : client.score_batch(bundles)) {
        json j{{"sample_id", rec.sample_id}, {"ok", rec.ok}, {"attempts", rec.attempts}};
        if (rec.ok) {
          j["score"] = rec.scores.probs[static_cast<size_t>(task.positive_class)];
          j["probs"] = rec.scores.probs;
          j["captured_mass"] = rec.scores.captured_mass;
          j["fallback_used"] = rec.scores.fallback_used;
        } else {
          j["error"] = rec.error;
        }
        lines += j.dump();
        lines += '\n';
      }
    }
    mits::write_file(sc_out, lines);
  });

  // evaluate
  auto* ev = app.add_subcommand("evaluate", "compute AU-ROC/AP, or aggregate runs into a rank table");
  std::string v_scores, v_dataset, v_task = "IHM", v_runs_csv, v_out_prefix = "report";
  ev->add_option("--scores", v_scores, "scores JSONL");
  ev->add_option("--dataset", v_dataset, "dataset JSONL with labels");
  ev->add_option("--task", v_task, "IHM | LOS");
  ev->add_option("--runs-csv", v_runs_csv, "aggregate mode: CSV with method,dataset,run,auroc,ap");
  ev->add_option("--out-prefix", v_out_prefix, "output prefix for .csv/.txt");
  ev->callback([&] {
    if (!v_runs_csv.empty()) {
      std::vector<mits::RunResult> runs;
      std::istringstream in(mits::read_file(v_runs_csv));
      mits::CsvReader csv(in);
      auto header = csv.next_row();
      if (!header) throw mits::Error("runs csv: empty");
      while (auto row = csv.next_row()) {
        if (row->size() < 5) throw mits::Error("runs csv: expected method,dataset,run,auroc,ap");
        runs.push_back({(*row)[0], (*row)[1], std::stoi((*row)[2]), std::stod((*row)[3]),
                        std::stod((*row)[4]), 0, 0});
      }
      auto rep = mits::aggregate_runs(runs);
      mits::write_file(v_out_prefix + ".csv", mits::report_to_csv(rep));
      mits::write_file(v_out_prefix + ".txt", mits::report_to_text(rep));
      std::cout << mits::report_to_text(rep);
      return;
    }
    if (v_scores.empty() || v_dataset.empty())
      throw mits::UsageError("evaluate: need --scores and --dataset, or --runs-csv");
    auto task = mits::TaskConfig::by_name(v_task);
    std::map<std::string, int> labels;
    for (const auto& s : mits::read_dataset(v_dataset)) labels[s.sample_id] = s.label;
    std::vector<double> scores;
    std::vector<int> ys;
    for (const auto& line : mits::split(mits::read_file(v_scores), '\n')) {
      if (mits::trim(line).empty()) continue;
      auto j = json::parse(line);
      if (!j.value("ok", false)) continue;
      std::string id = j.at("sample_id").get<std::string>();
      if (!labels.count(id)) throw mits::Error("score for unknown sample '" + id + "'");
      scores.push_back(j.at("score").get<double>());
      ys.push_back(labels.at(id) == task.positive_class ? 1 : 0);
    }
    double roc = mits::auroc(scores, ys);
    double ap = mits::average_precision(scores, ys);
    json metrics{{"auroc", roc}, {"ap", ap}, {"n_samples", scores.size()}};
    mits::write_file(v_out_prefix + ".json", metrics.dump(2) + "\n");
    std::cout << "AU-ROC " << mits::format_fixed(roc * 100, 2) << "  AP " << mits::format_fixed(ap * 100, 2)
              << "  n=" << scores.size() << "\n";
  });

  // stats
  auto* st = app.add_subcommand("stats", "emit per-label count distributions as CSV");
  std::string st_dataset, st_registry, st_prefix = "stats";
  st->add_option("--dataset", st_dataset)->required();
  st->add_option("--registry", st_registry)->required();
  st->add_option("--out-prefix", st_prefix, "output prefix for _counts/_hist/_summary CSVs");
  st->callback([&] {
    auto registry = mits::ChannelRegistry::load(st_registry);
    mits::write_count_stats(mits::read_dataset(st_dataset), registry, st_prefix);
    std::cerr << "wrote " << st_prefix << "_counts.csv, _hist.csv, _summary.csv\n";
  });

  // run
  auto* run = app.add_subcommand("run", "run a declarative pipeline config");
  std::string run_config;
  run->add_option("--config", run_config, "pipeline config JSON")->required();
  run->callback([&] {
    auto stages = mits::run_pipeline(run_config);
    std::cerr << "pipeline complete:";
    for (const auto& s : stages) std::cerr << " " << s;
    std::cerr << "\n";
  });

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    return app.exit(e) == 0 ? 0 : 1;
  }
  return 0;
}

}  // namespace

int main(int argc, char** argv) {
  try {
    return run_cli(argc, argv);
  } catch (const mits::UsageError& e) {
    std::cerr << "usage error: " << e.what() << "\n";
    return 1;
  } catch (const mits::StageError& e) {
    std::cerr << "error: " << e.what() << "\n";
    return 2;
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << "\n";
    return 2;
  }
}
