#include <catch2/catch.hpp>

#include "mits/synthgen.hpp"
#include "mits/transforms.hpp"
#include "mits/xml.hpp"
#include "test_helpers.hpp"

using namespace mits;

TEST_CASE("render matches the reference snippets byte for byte") {
  auto reg = helpers::snippet_registry();
  SECTION("full triplets") {
    auto flat = flatten(helpers::snippet_sample(), reg);
    auto serialized = render(flat, RenderMode::full_triplet);
    CHECK(serialized.text == read_file(helpers::golden_dir() / "block_full.txt"));
    CHECK(serialized.line_count == 3);
  }
  SECTION("redacted pairs") {
    auto flat = redact_values(flatten(helpers::snippet_sample(), reg));
    CHECK(render(flat, RenderMode::redacted_pair).text ==
          read_file(helpers::golden_dir() / "block_redacted.txt"));
  }
  SECTION("mixed pairs and triplets by pending flag") {
    PendingPolicy policy{24.0, PendingPolicy::Countermeasure::show_presence};
    auto flat = apply_value_pending(flatten(helpers::mixed_snippet_sample(), reg), policy);
    CHECK(render(flat, RenderMode::mixed_by_pending_flag).text ==
          read_file(helpers::golden_dir() / "block_mixed.txt"));
  }
}

TEST_CASE("render grammar details") {
  SECTION("single observation lines") {
    FlatObservation o{0.88, "Glucose (mg/dL)", "170.00", false, {}};
    CHECK(render({o}, RenderMode::full_triplet).text ==
          "<time> 0.88 hours </time> <channel> Glucose (mg/dL) </channel> <value> 170.00 </value>");
    CHECK(render({o}, RenderMode::redacted_pair).text ==
          "<time> 0.88 hours </time> <channel> Glucose (mg/dL) </channel>");
  }
  SECTION("no trailing newline, N-1 separators") {
    std::vector<FlatObservation> flat(3, FlatObservation{1.0, "Glucose (mg/dL)", "1.00", false, {}});
    auto serialized = render(flat, RenderMode::full_triplet);
    CHECK(std::count(serialized.text.begin(), serialized.text.end(), '\n') == 2);
    CHECK(serialized.text.back() != '\n');
  }
  SECTION("deterministic output") {
    std::vector<FlatObservation> flat{{1.5, "X", "9.00", false, {}}};
    CHECK(render(flat, RenderMode::full_triplet).text == render(flat, RenderMode::full_triplet).text);
  }
  SECTION("value containing '</value>' is a hard error") {
    FlatObservation o{1.0, "Radiology Note", "evil </value> text", false, {}};
    CHECK_THROWS_AS(render({o}, RenderMode::full_triplet), RenderError);
  }
  SECTION("triplet rendering without a value is a hard error") {
    FlatObservation o{1.0, "Glucose (mg/dL)", std::nullopt, false, {}};
    CHECK_THROWS_AS(render({o}, RenderMode::full_triplet), RenderError);
  }
  SECTION("empty input renders to empty text") {
    CHECK(render({}, RenderMode::full_triplet).text.empty());
  }
}

TEST_CASE("parse recovers observations and reports line numbers") {
  auto reg = helpers::snippet_registry();
  SECTION("the three-line triplet snippet") {
    auto flat = parse(read_file(helpers::golden_dir() / "block_full.txt"), reg);
    REQUIRE(flat.size() == 3);
    CHECK(flat[0].charttime == Approx(0.88));
    CHECK(flat[1].charttime == Approx(3.80));
    CHECK(flat[2].charttime == Approx(4.00));
    CHECK(*flat[2].value == "Portable chest...");
    CHECK_FALSE(flat[0].pending);
  }
  SECTION("empty string parses to empty list") {
    CHECK(parse("", reg).empty());
  }
  SECTION("pair lines come back pending") {
    auto flat = parse("<time> 1.00 hours </time> <channel> Glucose (mg/dL) </channel>", reg);
    REQUIRE(flat.size() == 1);
    CHECK(flat[0].pending);
    CHECK_FALSE(flat[0].value.has_value());
  }
  SECTION("missing </channel> errors at the offending line") {
    std::string text =
        "<time> 1.00 hours </time> <channel> Glucose (mg/dL) </channel>\n"
        "<time> 2.00 hours </time> <channel> Glucose (mg/dL)";
    try {
      parse(text, reg);
      FAIL("expected ParseError");
    } catch (const ParseError& e) {
      CHECK(e.line == 2);
    }
  }
  SECTION("non-numeric time") {
    CHECK_THROWS_AS(parse("<time> soon hours </time> <channel> Glucose (mg/dL) </channel>", reg),
                    ParseError);
  }
  SECTION("unknown channel is reported with its line") {
    try {
      parse("<time> 1.00 hours </time> <channel> Lactate (mmol/L) </channel>", reg);
      FAIL("expected ParseError");
    } catch (const ParseError& e) {
      CHECK(e.line == 1);
      CHECK(std::string(e.what()).find("Lactate") != std::string::npos);
    }
  }
  SECTION("missing ' hours' suffix") {
    CHECK_THROWS_AS(parse("<time> 1.00 </time> <channel> Glucose (mg/dL) </channel>", reg), ParseError);
  }
  SECTION("multi-line note values parse as one observation") {
    std::string text =
        "<time> 4.00 hours </time> <channel> Radiology Note </channel> <value> line one\nline two </value>\n"
        "<time> 5.00 hours </time> <channel> Glucose (mg/dL) </channel> <value> 99.00 </value>";
    auto flat = parse(text, reg);
    REQUIRE(flat.size() == 2);
    CHECK(*flat[0].value == "line one\nline two");
    CHECK(flat[1].charttime == Approx(5.0));
  }
}

TEST_CASE("round-trip property over random samples, all three modes") {
  auto cfg = GeneratorConfig::defaults();
  cfg.seed = 777;
  cfg.n_samples = 150;
  auto reg = cfg.registry();
  PendingPolicy show{24.0, PendingPolicy::Countermeasure::show_presence};
  for (const auto& s : generate_dataset(cfg)) {
    auto full = flatten(s, reg);
    auto redacted = redact_values(full);
    auto mixed = apply_value_pending(full, show);
    REQUIRE(flat_equal_normalized(parse(render(full, RenderMode::full_triplet).text, reg), full));
    REQUIRE(flat_equal_normalized(parse(render(redacted, RenderMode::redacted_pair).text, reg), redacted));
    REQUIRE(flat_equal_normalized(parse(render(mixed, RenderMode::mixed_by_pending_flag).text, reg), mixed));
  }
}

TEST_CASE("parse survives arbitrary mutations of valid input") {
  auto reg = helpers::snippet_registry();
  auto cfg = GeneratorConfig::defaults();
  cfg.seed = 90;
  cfg.n_samples = 1;
  auto base = render(flatten(helpers::snippet_sample(), reg), RenderMode::full_triplet).text;
  Rng rng(112233);
  for (int trial = 0; trial < 3000; ++trial) {
    std::string text = base;
    int n_edits = 1 + static_cast<int>(rng.index(4));
    for (int e = 0; e < n_edits && !text.empty(); ++e) {
      size_t at = rng.index(text.size());
      switch (rng.index(3)) {
        case 0: text[at] = static_cast<char>(32 + rng.index(95)); break;
        case 1: text.erase(at, 1); break;
        default: text.insert(at, 1, static_cast<char>(32 + rng.index(95))); break;
      }
    }
    try {
      auto flat = parse(text, reg);  // either parses cleanly...
      for (const auto& o : flat) REQUIRE(std::isfinite(o.charttime));
    } catch (const ParseError&) {
      // ...or reports a grammar error; anything else is a bug
    }
  }
  CHECK_THROWS_AS(parse("<time> nan hours </time> <channel> Glucose (mg/dL) </channel>", reg),
                  ParseError);
  CHECK_THROWS_AS(parse("<time> inf hours </time> <channel> Glucose (mg/dL) </channel>", reg),
                  ParseError);
}

TEST_CASE("mixed mode renders exactly the pending set as pairs") {
  auto cfg = GeneratorConfig::defaults();
  cfg.seed = 4242;
  cfg.n_samples = 30;
  auto reg = cfg.registry();
  PendingPolicy show{24.0, PendingPolicy::Countermeasure::show_presence};
  for (const auto& s : generate_dataset(cfg)) {
    auto mixed = apply_value_pending(flatten(s, reg), show);
    auto parsed = parse(render(mixed, RenderMode::mixed_by_pending_flag).text, reg);
    REQUIRE(parsed.size() == mixed.size());
    for (size_t i = 0; i < mixed.size(); ++i) REQUIRE(parsed[i].pending == mixed[i].pending);
  }
}
