#include "oracles.hpp"
#include "test_util.hpp"

#include "refusal/judge.hpp"

using namespace refusal;
using testutil::make_sample;

namespace {

const ShotBook& shots() {
  static const auto book = load_shots(std::string(REFUSAL_DATA_DIR) + "/shots.json");
  return book;
}

std::size_t count(const std::string& hay, const std::string& needle) {
  std::size_t n = 0;
  for (auto at = hay.find(needle); at != std::string::npos; at = hay.find(needle, at + 1)) ++n;
  return n;
}

}  // namespace

TEST_SUITE("judge") {

TEST_CASE("prompt names every category of the reduced tree") {
  const auto& tree = testutil::reduced_tree();
  const auto p = build_prompt(tree, make_sample("a"), shots());
  std::size_t last = 0;
  for (int c : tree.category_ids()) {
    const auto at = p.find(tree.node(c).name);
    REQUIRE(at != std::string::npos);
    CHECK(at >= last);
    last = at;
  }
  CHECK(p.find("Chain of Command") == std::string::npos);
}

TEST_CASE("every category gets exactly one description and one shot") {
  const auto& tree = testutil::default_tree();
  const auto p = build_prompt(tree, make_sample("a", "unique input text", "unique output text"), shots());
  for (int c : tree.category_ids()) {
    CHECK(count(p, shots().at(c).input) == 1);
    CHECK(count(p, tree.node(c).description) == 1);
  }
  CHECK(count(p, "unique input text") == 1);
  CHECK(count(p, "unique output text") == 1);
}

TEST_CASE("prompt is deterministic and needs every shot") {
  const auto& tree = testutil::default_tree();
  const auto s = make_sample("a");
  CHECK(build_prompt(tree, s, shots()) == build_prompt(tree, s, shots()));
  auto missing = shots();
  missing.erase(15);
  CHECK_KIND(build_prompt(tree, s, missing), MissingShot);
}

TEST_CASE("answer parsing") {
  const auto& tree = testutil::default_tree();
  CHECK(parse_category_answer(tree, "CATEGORY: NSFW Content", false) == CategorySet{15});
  CHECK(parse_category_answer(tree, "Reasoning first.\ncategory: 21", false) == CategorySet{21});
  CHECK(parse_category_answer(tree, "**Category:** privacy", false) == CategorySet{14});
  CHECK(parse_category_answer(tree, "CATEGORY: Privacy, Modalities", true) == CategorySet{14, 21});
  CHECK_FALSE(parse_category_answer(tree, "I think it is privacy.", false));
  CHECK_KIND(parse_category_answer(tree, "CATEGORY: Weather", false), UnknownCategory);
  // Structural nodes are not categories.
  CHECK_KIND(parse_category_answer(tree, "CATEGORY: Cannot Do", false), UnknownCategory);
  CHECK_KIND(parse_category_answer(tree, "CATEGORY: 7", false), UnknownCategory);
}

TEST_CASE("classify sample") {
  const auto& tree = testutil::default_tree();
  const auto s = make_sample("a");
  ScriptedModel nsfw("m", [](const std::string&) { return "CATEGORY: NSFW Content"; });
  CHECK(classify_sample(tree, s, shots(), nsfw) == 15);

  ScriptedModel offlist("m", [](const std::string&) { return "CATEGORY: Sports"; });
  CHECK_KIND(classify_sample(tree, s, shots(), offlist), UnknownCategory);
  CHECK(offlist.calls() == 3);

  ScriptedModel mute("m", [](const std::string&) { return "hmm"; });
  CHECK_KIND(classify_sample(tree, s, shots(), mute), UnparseableVerdict);

  int n = 0;
  ScriptedModel late("m", [&n](const std::string&) { return ++n < 3 ? "dunno" : "CATEGORY: Privacy"; });
  CHECK(classify_sample(tree, s, shots(), late) == 14);

  ScriptedModel down("m", [](const std::string&) -> std::string { fail(ErrorKind::Provider, "refused connection"); });
  CHECK_KIND(classify_sample(tree, s, shots(), down), Provider);
}

TEST_CASE("pre-labelling") {
  const auto& tree = testutil::default_tree();
  const std::vector<Sample> samples{make_sample("a", "alpha"), make_sample("b", "beta"), make_sample("c", "gamma")};
  auto clock = [] { return std::string("2024-01-01T00:00:00Z"); };

  ScriptedModel healthy("judge-x", [](const std::string&) { return "CATEGORY: Privacy"; });
  const auto ok = pre_label_corpus(tree, samples, shots(), healthy, {}, clock);
  REQUIRE(ok.annotations.size() == 3);
  CHECK(ok.audit.empty());
  for (std::size_t i = 0; i < 3; ++i) {
    CHECK(ok.annotations[i].sample_id == samples[i].id);
    CHECK(ok.annotations[i].annotator_id == "judge-x");
    CHECK(ok.annotations[i].categories == CategorySet{14});
  }

  ScriptedModel flaky("judge-y", [](const std::string& p) {
    return p.find("beta") != std::string::npos ? std::string("no idea") : std::string("CATEGORY: 13");
  });
  const auto part = pre_label_corpus(tree, samples, shots(), flaky, {}, clock);
  CHECK(part.annotations.size() == 2);
  REQUIRE(part.audit.size() == 1);
  CHECK(part.audit[0]["sample_id"] == "b");

  CHECK(pre_label_corpus(tree, {}, shots(), healthy, {}, clock).annotations.empty());

  ScriptedModel down("judge-z", [](const std::string&) -> std::string { fail(ErrorKind::Provider, "down"); });
  CHECK_KIND(pre_label_corpus(tree, samples, shots(), down, {}, clock), Provider);
}

TEST_CASE("replayed answers reproduce the recorded labels") {
  const auto& tree = testutil::default_tree();
  const std::vector<Sample> samples{make_sample("a", "alpha"), make_sample("b", "beta")};
  ScriptedModel live("judge-x", [](const std::string& p) {
    return p.find("alpha") != std::string::npos ? "CATEGORY: Privacy" : "CATEGORY: Modalities";
  });
  RecordingModel rec(live);
  const auto first = pre_label_corpus(tree, samples, shots(), rec);
  ReplayModel replay(rec.exchanges());
  const auto second = pre_label_corpus(tree, samples, shots(), replay);
  REQUIRE(second.annotations.size() == 2);
  for (std::size_t i = 0; i < 2; ++i) CHECK(second.annotations[i].categories == first.annotations[i].categories);
  CHECK(replay.name() == "judge-x");
  CHECK_KIND(replay.complete("never asked", 10), Provider);
}

TEST_CASE("shot file parsing") {
  CHECK_KIND(parse_shots(json{{"x", {{"input", "a"}, {"output", "b"}}}}), Parse);
  const auto b = parse_shots(json{{"15", {{"input", "a"}, {"output", "b"}}}});
  CHECK(b.at(15).output == "b");
}

}
