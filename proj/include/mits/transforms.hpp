#pragma once

#include <map>
#include <vector>

#include "mits/core.hpp"

namespace mits {

// Value-pending rule: an observation is pending iff its storetime is present
// and strictly exceeds the cutoff. A missing storetime conservatively falls
// back to charttime, i.e. the observation counts as available on time.
struct PendingPolicy {
  enum class Countermeasure { drop_observation, show_presence };
  double cutoff_hours = 24.0;
  Countermeasure countermeasure = Countermeasure::drop_observation;

  void validate() const {
    if (!(cutoff_hours > 0)) throw Error("pending policy: cutoff_hours must be positive");
  }
};

inline PendingPolicy::Countermeasure countermeasure_from_string(const std::string& s) {
  if (s == "drop" || s == "drop_observation") return PendingPolicy::Countermeasure::drop_observation;
  if (s == "show-presence" || s == "show_presence") return PendingPolicy::Countermeasure::show_presence;
  throw Error("unknown countermeasure: " + s);
}

inline bool is_pending(const FlatObservation& o, double cutoff_hours) {
  return o.storetime.has_value() && *o.storetime > cutoff_hours;
}

// Stage-1 view: identical (charttime, channel) sequence with every value
// removed. Marks all outputs pending, making this exactly the show-presence
// transform with everything pending.
inline std::vector<FlatObservation> redact_values(std::vector<FlatObservation> flat) {
  for (auto& o : flat) {
    o.value.reset();
    o.pending = true;
  }
  return flat;
}

inline std::vector<FlatObservation> apply_value_pending(std::vector<FlatObservation> flat,
                                                        const PendingPolicy& policy) {
  policy.validate();
  if (policy.countermeasure == PendingPolicy::Countermeasure::drop_observation) {
    std::vector<FlatObservation> out;
    out.reserve(flat.size());
    for (auto& o : flat)
      if (!is_pending(o, policy.cutoff_hours)) out.push_back(std::move(o));
    return out;
  }
  for (auto& o : flat) {
    if (is_pending(o, policy.cutoff_hours)) {
      o.value.reset();
      o.pending = true;
    }
  }
  return flat;
}

// Mean pending count and pending rate per sample, split by modality
// ("lab" = numeric channels, "note" = text channels). Rates average
// pending/total over the samples that have observations of that modality.
struct PendingStats {
  struct Row {
    double mean_pending_count = 0;
    double mean_pending_rate = 0;
    size_t total_pending = 0;
    size_t total_observations = 0;
    size_t n_samples = 0;       // samples contributing to the count mean
    size_t n_rate_samples = 0;  // samples with at least one observation of this modality
  };
  std::map<std::string, Row> by_modality;
};

inline PendingStats pending_statistics(const std::vector<MitsSample>& dataset,
                                       const ChannelRegistry& registry, const PendingPolicy& policy) {
  policy.validate();
  PendingStats stats;
  auto& lab = stats.by_modality["lab"];
  auto& note = stats.by_modality["note"];
  for (const auto& sample : dataset) {
    size_t pend[2] = {0, 0}, total[2] = {0, 0};  // [numeric, text]
    for (const auto& o : sample.observations) {
      const ChannelSpec& ch = registry.require(o.channel);
      int m = ch.modality == Modality::numeric ? 0 : 1;
      ++total[m];
      if (o.storetime && *o.storetime > policy.cutoff_hours) ++pend[m];
    }
    PendingStats::Row* rows[2] = {&lab, &note};
    for (int m = 0; m < 2; ++m) {
      rows[m]->mean_pending_count += static_cast<double>(pend[m]);
      rows[m]->total_pending += pend[m];
      rows[m]->total_observations += total[m];
      rows[m]->n_samples += 1;
      if (total[m] > 0) {
        rows[m]->mean_pending_rate += static_cast<double>(pend[m]) / static_cast<double>(total[m]);
        rows[m]->n_rate_samples += 1;
      }
    }
  }
  for (auto& [name, row] : stats.by_modality) {
    if (row.n_samples > 0) row.mean_pending_count /= static_cast<double>(row.n_samples);
    if (row.n_rate_samples > 0) row.mean_pending_rate /= static_cast<double>(row.n_rate_samples);
  }
  return stats;
}

}  // namespace mits
