#pragma once

#include <atomic>
#include <chrono>
#include <cmath>
#include <string>
#include <thread>
#include <vector>

#include <httplib.h>
#include <json.hpp>

#include "mits/core.hpp"
#include "mits/prompting.hpp"

namespace mits {

// Client contract for an OpenAI-compatible chat-completions endpoint with
// logprobs enabled (SGLang-style servers). Decoding is greedy and short; the
// class probabilities come from the logprobs at the answer-letter position,
// not from generated text.
struct EndpointConfig {
  std::string base_url = "http://127.0.0.1:30000";
  std::string model = "default";
  double timeout_seconds = 60.0;
  int concurrency = 4;
  int top_logprobs_k = 20;
  int max_new_tokens = 8;
  double temperature = 0.0;
  int max_attempts = 3;
  int backoff_ms = 200;

  void validate(const TaskConfig& task) const {
    if (top_logprobs_k < task.num_classes())
      throw Error("endpoint config: top_logprobs_k must be >= number of classes");
    if (concurrency < 1) throw Error("endpoint config: concurrency must be >= 1");
  }
};

struct TokenLogprob {
  std::string token;
  double logprob = 0;
};

struct ClassScores {
  std::vector<double> probs;  // class index -> probability, sums to 1
  double captured_mass = 0;   // sum of matched-letter probabilities before renormalization
  bool fallback_used = false;
  int raw_position_index = -1;
};

// Softmax over per-class letter logprobs at one generated position. Each
// class takes the max logprob among candidate tokens whose whitespace-
// stripped text equals the class letter (covers leading-space variants).
// Letters absent from the top-k get a floor of (min observed logprob - 10)
// and set the fallback flag.
inline ClassScores extract_class_scores(const std::vector<TokenLogprob>& position_logprobs,
                                        const TaskConfig& task) {
  task.validate();
  const int k = task.num_classes();
  const double nan = std::numeric_limits<double>::quiet_NaN();
  std::vector<double> lp(static_cast<size_t>(k), nan);
  double min_seen = std::numeric_limits<double>::infinity();
  for (const auto& cand : position_logprobs) {
    min_seen = std::min(min_seen, cand.logprob);
    std::string stripped = trim(cand.token);
    if (stripped.size() != 1) continue;
    for (int c = 0; c < k; ++c) {
      if (stripped[0] != task.letter(c)) continue;
      if (std::isnan(lp[static_cast<size_t>(c)]) || cand.logprob > lp[static_cast<size_t>(c)])
        lp[static_cast<size_t>(c)] = cand.logprob;
    }
  }
  ClassScores out;
  for (int c = 0; c < k; ++c)
    if (!std::isnan(lp[static_cast<size_t>(c)])) out.captured_mass += std::exp(lp[static_cast<size_t>(c)]);
  double floor = (std::isfinite(min_seen) ? min_seen : 0.0) - 10.0;
  for (auto& v : lp) {
    if (std::isnan(v)) {
      v = floor;
      out.fallback_used = true;
    }
  }
  double mx = *std::max_element(lp.begin(), lp.end());
  double denom = 0;
  for (double v : lp) denom += std::exp(v - mx);
  out.probs.resize(lp.size());
  for (size_t i = 0; i < lp.size(); ++i) out.probs[i] = std::exp(lp[i] - mx) / denom;
  return out;
}

struct GeneratedToken {
  std::string text;
  std::vector<TokenLogprob> top;
};

// choices[0].logprobs.content[]: one entry per generated token with its
// top-k alternatives.
inline std::vector<GeneratedToken> parse_chat_logprobs(const nlohmann::json& response) {
  std::vector<GeneratedToken> out;
  const auto& content = response.at("choices").at(0).at("logprobs").at("content");
  for (const auto& tok : content) {
    GeneratedToken g;
    g.text = tok.at("token").get<std::string>();
    if (tok.contains("top_logprobs"))
      for (const auto& alt : tok.at("top_logprobs"))
        g.top.push_back({alt.at("token").get<std::string>(), alt.at("logprob").get<double>()});
    if (g.top.empty() && tok.contains("logprob"))
      g.top.push_back({g.text, tok.at("logprob").get<double>()});
    out.push_back(std::move(g));
  }
  return out;
}

// Position of the token immediately following the '<answer>' open tag in the
// generated stream. If the tag never completes, falls back to the first
// generated position (second element true). Returns -1 for empty output.
inline std::pair<int, bool> locate_answer_position(const std::vector<GeneratedToken>& tokens) {
  std::string acc;
  for (size_t i = 0; i < tokens.size(); ++i) {
    acc += tokens[i].text;
    std::string_view sv(acc);
    while (!sv.empty() && std::isspace(static_cast<unsigned char>(sv.back()))) sv.remove_suffix(1);
    if (sv.ends_with("<answer>")) {
      if (i + 1 < tokens.size()) return {static_cast<int>(i + 1), false};
      break;
    }
  }
  if (tokens.empty()) return {-1, true};
  return {0, true};
}

inline ClassScores score_from_generation(const std::vector<GeneratedToken>& tokens, const TaskConfig& task) {
  auto [pos, fell_back] = locate_answer_position(tokens);
  if (pos < 0) {
    // nothing generated: uniform with fallback flag
    ClassScores s;
    s.probs.assign(static_cast<size_t>(task.num_classes()),
                   1.0 / static_cast<double>(task.num_classes()));
    s.fallback_used = true;
    return s;
  }
  ClassScores s = extract_class_scores(tokens[static_cast<size_t>(pos)].top, task);
  s.fallback_used = s.fallback_used || fell_back;
  s.raw_position_index = pos;
  return s;
}

struct ScoreRecord {
  std::string sample_id;
  bool ok = false;
  ClassScores scores;
  std::string error;
  int attempts = 0;
};

class EndpointClient {
 public:
  EndpointClient(EndpointConfig config, TaskConfig task) : cfg_(std::move(config)), task_(std::move(task)) {
    cfg_.validate(task_);
  }

  const EndpointConfig& config() const { return cfg_; }

  ScoreRecord score_sample(const PromptBundle& bundle) const {
    httplib::Client client(cfg_.base_url);
    return score_with(client, bundle);
  }

  // Up to cfg.concurrency requests in flight; one record per bundle, sorted
  // by sample_id. A failing sample never aborts the batch.
  std::vector<ScoreRecord> score_batch(const std::vector<PromptBundle>& bundles) const {
    std::vector<ScoreRecord> records(bundles.size());
    std::atomic<size_t> next{0};
    size_t n_workers = std::min<size_t>(static_cast<size_t>(cfg_.concurrency), std::max<size_t>(bundles.size(), 1));
    std::vector<std::thread> workers;
    workers.reserve(n_workers);
    for (size_t w = 0; w < n_workers; ++w) {
      workers.emplace_back([&]() {
        httplib::Client client(cfg_.base_url);
        set_timeouts(client);
        while (true) {
          size_t i = next.fetch_add(1);
          if (i >= bundles.size()) break;
          records[i] = score_with(client, bundles[i]);
        }
      });
    }
    for (auto& t : workers) t.join();
    std::stable_sort(records.begin(), records.end(),
                     [](const ScoreRecord& a, const ScoreRecord& b) { return a.sample_id < b.sample_id; });
    return records;
  }

  nlohmann::json make_request(const PromptBundle& bundle) const {
    return nlohmann::json{{"model", cfg_.model},
                          {"messages",
                           {{{"role", "system"}, {"content", bundle.system}},
                            {{"role", "user"}, {"content", bundle.user}}}},
                          {"temperature", cfg_.temperature},
                          {"max_tokens", cfg_.max_new_tokens},
                          {"logprobs", true},
                          {"top_logprobs", cfg_.top_logprobs_k}};
  }

 private:
  void set_timeouts(httplib::Client& client) const {
    auto secs = static_cast<time_t>(cfg_.timeout_seconds);
    auto usecs = static_cast<time_t>((cfg_.timeout_seconds - static_cast<double>(secs)) * 1e6);
    client.set_connection_timeout(secs, usecs);
    client.set_read_timeout(secs, usecs);
    client.set_write_timeout(secs, usecs);
  }

  ScoreRecord score_with(httplib::Client& client, const PromptBundle& bundle) const {
    ScoreRecord rec;
    rec.sample_id = bundle.sample_id;
    std::string body = make_request(bundle).dump();
    std::string transport_error;
    for (int attempt = 1; attempt <= cfg_.max_attempts; ++attempt) {
      rec.attempts = attempt;
      auto res = client.Post("/v1/chat/completions", body, "application/json");
      if (!res || res->status != 200) {
        transport_error = !res ? "transport error: " + httplib::to_string(res.error())
                               : "http status " + std::to_string(res->status);
        if (attempt < cfg_.max_attempts)
          std::this_thread::sleep_for(std::chrono::milliseconds(cfg_.backoff_ms << (attempt - 1)));
        continue;
      }
      try {
        auto tokens = parse_chat_logprobs(nlohmann::json::parse(res->body));
        rec.scores = score_from_generation(tokens, task_);
        rec.ok = true;
      } catch (const std::exception& e) {
        rec.error = std::string("malformed response: ") + e.what();  // no retry
      }
      return rec;
    }
    rec.error = transport_error + " after " + std::to_string(cfg_.max_attempts) + " attempts";
    return rec;
  }

  EndpointConfig cfg_;
  TaskConfig task_;
};

}  // namespace mits
