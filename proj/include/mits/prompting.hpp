#pragma once

#include <map>
#include <optional>
#include <string>
#include <vector>

#include <json.hpp>

#include "mits/core.hpp"
#include "mits/xml.hpp"

namespace mits {

// Templates live as repo assets (<id>.system.txt / <id>.user.txt) so golden
// tests compare files, not code literals. The user asset carries exactly one
// "..." placeholder line between the [OBSERVATIONS] and [/OBSERVATIONS]
// marker lines; prompt construction replaces that line with the rendered
// observation block. All text is LF-normalized.

enum class TemplateId {
  ihm_full,
  ihm_redacted,
  ihm_show_presence,
  los_full,
  los_redacted,
  los_show_presence,
};

inline const std::vector<TemplateId>& all_template_ids() {
  static const std::vector<TemplateId> ids = {
      TemplateId::ihm_full,          TemplateId::ihm_redacted, TemplateId::ihm_show_presence,
      TemplateId::los_full,          TemplateId::los_redacted, TemplateId::los_show_presence,
  };
  return ids;
}

inline std::string to_string(TemplateId id) {
  switch (id) {
    case TemplateId::ihm_full: return "ihm_full";
    case TemplateId::ihm_redacted: return "ihm_redacted";
    case TemplateId::ihm_show_presence: return "ihm_show_presence";
    case TemplateId::los_full: return "los_full";
    case TemplateId::los_redacted: return "los_redacted";
    case TemplateId::los_show_presence: return "los_show_presence";
  }
  throw Error("bad template id");
}

inline TemplateId template_id_from_string(const std::string& s) {
  for (TemplateId id : all_template_ids())
    if (to_string(id) == s) return id;
  throw Error("unknown template id: " + s);
}

inline TaskConfig::Task template_task(TemplateId id) {
  switch (id) {
    case TemplateId::ihm_full:
    case TemplateId::ihm_redacted:
    case TemplateId::ihm_show_presence: return TaskConfig::Task::IHM;
    default: return TaskConfig::Task::LOS;
  }
}

inline RenderMode template_mode(TemplateId id) {
  switch (id) {
    case TemplateId::ihm_full:
    case TemplateId::los_full: return RenderMode::full_triplet;
    case TemplateId::ihm_redacted:
    case TemplateId::los_redacted: return RenderMode::redacted_pair;
    default: return RenderMode::mixed_by_pending_flag;
  }
}

inline TemplateId template_id_for(TaskConfig::Task task, RenderMode mode) {
  for (TemplateId id : all_template_ids())
    if (template_task(id) == task && template_mode(id) == mode) return id;
  throw Error("no template for task/mode combination");
}

struct PromptTemplate {
  TemplateId id = TemplateId::ihm_full;
  std::string system_text;
  std::string user_prefix;  // through the [OBSERVATIONS] line, inclusive of its newline
  std::string user_suffix;  // from the newline before [/OBSERVATIONS] onward
  std::string system_checksum;
  std::string user_checksum;
};

class TemplateLibrary {
 public:
  static TemplateLibrary load(const std::filesystem::path& dir) {
    TemplateLibrary lib;
    for (TemplateId id : all_template_ids()) {
      PromptTemplate t;
      t.id = id;
      std::string system_raw = read_file(dir / (to_string(id) + ".system.txt"));
      std::string user_raw = read_file(dir / (to_string(id) + ".user.txt"));
      t.system_checksum = fnv1a64_hex(system_raw);
      t.user_checksum = fnv1a64_hex(user_raw);
      t.system_text = strip_final_newline(normalize_newlines(std::move(system_raw)));
      std::string user = strip_final_newline(normalize_newlines(std::move(user_raw)));
      const std::string marker = "[OBSERVATIONS]\n...\n[/OBSERVATIONS]";
      size_t at = user.find(marker);
      if (at == std::string::npos || user.find(marker, at + 1) != std::string::npos)
        throw Error("template " + to_string(id) + ": expected exactly one [OBSERVATIONS]/.../[/OBSERVATIONS] placeholder");
      t.user_prefix = user.substr(0, at + 15);  // "[OBSERVATIONS]\n"
      t.user_suffix = user.substr(at + 18);     // "\n[/OBSERVATIONS]..."
      lib.templates_.emplace(to_string(id), std::move(t));
    }
    return lib;
  }

  const PromptTemplate& get(TemplateId id) const { return templates_.at(to_string(id)); }

  std::map<std::string, std::string> checksums() const {
    std::map<std::string, std::string> out;
    for (const auto& [name, t] : templates_) {
      out[name + ".system"] = t.system_checksum;
      out[name + ".user"] = t.user_checksum;
    }
    return out;
  }

 private:
  static std::string strip_final_newline(std::string s) {
    if (!s.empty() && s.back() == '\n') s.pop_back();
    return s;
  }

  std::map<std::string, PromptTemplate> templates_;
};

struct PromptBundle {
  std::string system;
  std::string user;
  std::optional<std::string> target;  // "<answer> L </answer>" for SFT records
  std::string sample_id;
  TemplateId template_id = TemplateId::ihm_full;
};

inline PromptBundle build_prompt(const SerializedMits& serialized, const TaskConfig& task,
                                 const PromptTemplate& tmpl, const std::string& sample_id) {
  task.validate();
  if (template_task(tmpl.id) != task.task)
    throw Error("template " + to_string(tmpl.id) + " does not belong to task " + task.name());
  if (template_mode(tmpl.id) != serialized.mode)
    throw Error("render mode " + to_string(serialized.mode) + " is incompatible with template " +
                to_string(tmpl.id));
  PromptBundle b;
  b.system = tmpl.system_text;
  b.user = tmpl.user_prefix + serialized.text + tmpl.user_suffix;
  b.sample_id = sample_id;
  b.template_id = tmpl.id;
  return b;
}

inline PromptBundle build_sft_record(PromptBundle bundle, int label, const TaskConfig& task) {
  bundle.target = std::string("<answer> ") + task.letter(label) + " </answer>";
  return bundle;
}

enum class SftStage { stage1_redacted, stage2_full };

inline std::string to_string(SftStage s) {
  return s == SftStage::stage1_redacted ? "stage1_redacted" : "stage2_full";
}

inline SftStage sft_stage_from_string(const std::string& s) {
  if (s == "stage1_redacted" || s == "stage1") return SftStage::stage1_redacted;
  if (s == "stage2_full" || s == "stage2") return SftStage::stage2_full;
  throw Error("unknown SFT stage: " + s);
}

// JSON Lines export consumable by external fine-tuning stacks, plus a
// manifest with template checksums and the adapter hyper-parameters the
// reference training recipe used (metadata only; no training happens here).
// allow_show_presence_in_stage2 opts stage-2 exports into the mixed
// pair/triplet view; default off.
inline void export_sft_file(const std::vector<PromptBundle>& bundles, const std::filesystem::path& path,
                            SftStage stage, const TemplateLibrary& library,
                            bool allow_show_presence_in_stage2 = false) {
  std::string lines;
  for (const auto& b : bundles) {
    if (!b.target) throw Error("SFT export: bundle '" + b.sample_id + "' has no target");
    RenderMode mode = template_mode(b.template_id);
    bool ok = stage == SftStage::stage1_redacted
                  ? mode == RenderMode::redacted_pair
                  : mode == RenderMode::full_triplet ||
                        (allow_show_presence_in_stage2 && mode == RenderMode::mixed_by_pending_flag);
    if (!ok)
      throw Error("SFT export: bundle '" + b.sample_id + "' uses template " + to_string(b.template_id) +
                  ", not allowed in " + to_string(stage));
    nlohmann::json rec{{"system", b.system}, {"user", b.user}, {"target", *b.target}, {"sample_id", b.sample_id}};
    lines += rec.dump();
    lines += '\n';
  }
  write_file(path, lines);

  nlohmann::json manifest{
      {"stage", to_string(stage)},
      {"records", bundles.size()},
      {"template_checksums", library.checksums()},
      {"sft_file_checksum", fnv1a64_hex(lines)},
      {"hyperparameters_advisory",
       {{"adapter", "qlora"}, {"rank", 16}, {"alpha", 16}, {"dropout", 0.05}, {"learning_rate", 1e-4}}}};
  write_file(path.string() + ".manifest.json", manifest.dump(2) + "\n");
}

}  // namespace mits
