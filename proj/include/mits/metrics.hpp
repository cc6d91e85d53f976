#pragma once

#include <algorithm>
#include <cmath>
#include <map>
#include <numeric>
#include <string>
#include <vector>

#include "mits/format.hpp"
#include "mits/util.hpp"

namespace mits {

struct UndefinedMetric : Error {
  explicit UndefinedMetric(const std::string& msg) : Error(msg) {}
};

// Probability that a random positive outranks a random negative:
// (#concordant + 0.5 * #tied) / (#pos * #neg), computed via average ranks.
inline double auroc(const std::vector<double>& scores, const std::vector<int>& labels) {
  if (scores.size() != labels.size()) throw Error("auroc: scores/labels size mismatch");
  size_t n = scores.size();
  size_t pos = 0;
  for (int y : labels) pos += static_cast<size_t>(y != 0);
  size_t neg = n - pos;
  if (pos == 0 || neg == 0) throw UndefinedMetric("auroc undefined: both classes must be present");

  std::vector<size_t> order(n);
  std::iota(order.begin(), order.end(), size_t{0});
  std::sort(order.begin(), order.end(), [&](size_t a, size_t b) { return scores[a] < scores[b]; });

  double rank_sum_pos = 0;
  size_t i = 0;
  while (i < n) {
    size_t j = i;
    while (j < n && scores[order[j]] == scores[order[i]]) ++j;
    double avg_rank = (static_cast<double>(i + 1) + static_cast<double>(j)) / 2.0;
    for (size_t k = i; k < j; ++k)
      if (labels[order[k]] != 0) rank_sum_pos += avg_rank;
    i = j;
  }
  double u = rank_sum_pos - static_cast<double>(pos) * (static_cast<double>(pos) + 1.0) / 2.0;
  return u / (static_cast<double>(pos) * static_cast<double>(neg));
}

// Non-interpolated AP over the score-descending ranking, accumulating
// (R_k - R_{k-1}) * P_k. Ties are broken negatives-first (pessimistic).
inline double average_precision(const std::vector<double>& scores, const std::vector<int>& labels) {
  if (scores.size() != labels.size()) throw Error("average_precision: scores/labels size mismatch");
  size_t n = scores.size();
  size_t pos = 0;
  for (int y : labels) pos += static_cast<size_t>(y != 0);
  if (pos == 0) throw UndefinedMetric("average precision undefined: no positives");

  std::vector<size_t> order(n);
  std::iota(order.begin(), order.end(), size_t{0});
  std::sort(order.begin(), order.end(), [&](size_t a, size_t b) {
    if (scores[a] != scores[b]) return scores[a] > scores[b];
    return labels[a] < labels[b];
  });

  double ap = 0;
  double recall_prev = 0;
  size_t tp = 0;
  for (size_t k = 0; k < n; ++k) {
    if (labels[order[k]] != 0) {
      ++tp;
      double recall = static_cast<double>(tp) / static_cast<double>(pos);
      double precision = static_cast<double>(tp) / static_cast<double>(k + 1);
      ap += (recall - recall_prev) * precision;
      recall_prev = recall;
    }
  }
  return ap;
}

struct RunResult {
  std::string method;
  std::string dataset_id;
  int run_index = 0;
  double auroc = 0;  // in [0, 1]
  double ap = 0;     // in [0, 1]
  size_t n_samples = 0;
  size_t n_positive = 0;
};

// Per (dataset, metric) column: mean/std over runs per method, column ranks
// (1 = best, higher metric better, ties share the mean of tied ranks), and
// each method's average rank over all columns.
struct AggregateReport {
  struct Cell {
    double mean = 0;
    double stddev = 0;
    size_t runs = 0;
    double rank = 0;
  };
  std::vector<std::string> methods;             // first-appearance order
  std::vector<std::string> datasets;            // first-appearance order
  std::vector<std::string> columns;             // "<dataset>/AU-ROC", "<dataset>/AP"
  std::map<std::string, std::vector<Cell>> cells;  // method -> cell per column
  std::map<std::string, double> avg_rank;
};

// Table-style display convention: ranks round half away from zero.
inline std::string format_rank(double rank) {
  return format_fixed(std::round(rank * 10.0) / 10.0, 1);
}

inline AggregateReport aggregate_runs(const std::vector<RunResult>& results) {
  if (results.empty()) throw Error("aggregate_runs: no results");
  AggregateReport rep;
  auto note = [](std::vector<std::string>& v, const std::string& s) {
    if (std::find(v.begin(), v.end(), s) == v.end()) v.push_back(s);
  };
  for (const auto& r : results) {
    note(rep.methods, r.method);
    note(rep.datasets, r.dataset_id);
  }
  for (const auto& d : rep.datasets) {
    rep.columns.push_back(d + "/AU-ROC");
    rep.columns.push_back(d + "/AP");
  }

  // method -> column -> run values
  std::map<std::string, std::vector<std::vector<double>>> values;
  for (const auto& m : rep.methods) values[m].assign(rep.columns.size(), {});
  for (const auto& r : results) {
    size_t d = static_cast<size_t>(
        std::find(rep.datasets.begin(), rep.datasets.end(), r.dataset_id) - rep.datasets.begin());
    values[r.method][d * 2].push_back(r.auroc);
    values[r.method][d * 2 + 1].push_back(r.ap);
  }

  size_t expected_runs = values[rep.methods.front()].front().size();
  for (const auto& m : rep.methods)
    for (const auto& col : values[m])
      if (col.size() != expected_runs)
        throw Error("aggregate_runs: unequal run counts (expected " + std::to_string(expected_runs) +
                    " per method per dataset)");

  for (const auto& m : rep.methods) {
    std::vector<AggregateReport::Cell> row(rep.columns.size());
    for (size_t c = 0; c < rep.columns.size(); ++c) {
      const auto& runs = values[m][c];
      double mean = std::accumulate(runs.begin(), runs.end(), 0.0) / static_cast<double>(runs.size());
      double var = 0;
      if (runs.size() > 1) {
        for (double v : runs) var += (v - mean) * (v - mean);
        var /= static_cast<double>(runs.size() - 1);  // sample formula
      }
      row[c] = {mean, std::sqrt(var), runs.size(), 0.0};
    }
    rep.cells[m] = std::move(row);
  }

  // column ranks over means
  for (size_t c = 0; c < rep.columns.size(); ++c) {
    std::vector<std::pair<double, std::string>> col;
    for (const auto& m : rep.methods) col.emplace_back(rep.cells[m][c].mean, m);
    std::stable_sort(col.begin(), col.end(),
                     [](const auto& a, const auto& b) { return a.first > b.first; });
    size_t i = 0;
    while (i < col.size()) {
      size_t j = i;
      while (j < col.size() && col[j].first == col[i].first) ++j;
      double shared = (static_cast<double>(i + 1) + static_cast<double>(j)) / 2.0;
      for (size_t k = i; k < j; ++k) rep.cells[col[k].second][c].rank = shared;
      i = j;
    }
  }
  for (const auto& m : rep.methods) {
    double sum = 0;
    for (const auto& cell : rep.cells.at(m)) sum += cell.rank;
    rep.avg_rank[m] = sum / static_cast<double>(rep.columns.size());
  }
  return rep;
}

// Machine-readable report; metrics reported x100 with two decimals.
inline std::string report_to_csv(const AggregateReport& rep) {
  std::string out = "method,dataset,metric,mean,std,runs,rank,avg_rank\n";
  for (const auto& m : rep.methods) {
    for (size_t c = 0; c < rep.columns.size(); ++c) {
      const auto& cell = rep.cells.at(m)[c];
      auto slash = rep.columns[c].find('/');
      out += m + "," + rep.columns[c].substr(0, slash) + "," + rep.columns[c].substr(slash + 1) + "," +
             format_fixed(cell.mean * 100.0, 2) + "," + format_fixed(cell.stddev * 100.0, 2) + "," +
             std::to_string(cell.runs) + "," + format_fixed(cell.rank, 1) + "," +
             format_rank(rep.avg_rank.at(m)) + "\n";
    }
  }
  return out;
}

// Human-readable aligned table mirroring the CSV content.
inline std::string report_to_text(const AggregateReport& rep) {
  std::vector<std::vector<std::string>> grid;
  std::vector<std::string> header{"Method"};
  for (const auto& col : rep.columns) header.push_back(col);
  header.push_back("Avg. Rank");
  grid.push_back(header);
  for (const auto& m : rep.methods) {
    std::vector<std::string> row{m};
    for (const auto& cell : rep.cells.at(m))
      row.push_back(format_fixed(cell.mean * 100.0, 2) + " +- " + format_fixed(cell.stddev * 100.0, 2));
    row.push_back(format_rank(rep.avg_rank.at(m)));
    grid.push_back(row);
  }
  std::vector<size_t> width(header.size(), 0);
  for (const auto& row : grid)
    for (size_t c = 0; c < row.size(); ++c) width[c] = std::max(width[c], row[c].size());
  std::string out;
  for (const auto& row : grid) {
    for (size_t c = 0; c < row.size(); ++c) {
      std::string cell = row[c];
      cell.resize(width[c], ' ');
      out += cell;
      if (c + 1 < row.size()) out += "  ";
    }
    while (!out.empty() && out.back() == ' ') out.pop_back();
    out += '\n';
  }
  return out;
}

}  // namespace mits
