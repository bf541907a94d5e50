#include <random>

#include "oracles.hpp"
#include "test_util.hpp"

using namespace refusal;
using testutil::make_annotation;
using testutil::make_sample;

TEST_SUITE("corpus") {

TEST_CASE("labeled set groups annotations") {
  std::vector<Sample> samples{make_sample("a"), make_sample("b"), make_sample("c")};
  std::vector<AnnotationRecord> anns;
  for (const auto& s : samples) {
    for (const char* h : {"h1", "h2", "h3", "h4"}) anns.push_back(make_annotation(s.id, h, {11}));
  }
  const LabeledSet set(samples, anns);
  CHECK(set.annotators().size() == 4);
  CHECK(set.annotation_count() == 12);
  CHECK(set.annotations("b").size() == 4);
  CHECK(set.find("c") != nullptr);
  CHECK(set.find("x9") == nullptr);
}

TEST_CASE("annotation for an absent sample") {
  std::vector<Sample> samples{make_sample("a")};
  CHECK_KIND(LabeledSet(samples, {make_annotation("x9", "h1", {11})}), DanglingAnnotation);
}

TEST_CASE("empty annotations are valid") {
  oracle::TempDir dir;
  write_text_file(dir.file("a.jsonl"), "");
  const auto set = load_corpus(std::string(REFUSAL_FIXTURE_DIR) + "/samples.jsonl", dir.file("a.jsonl"));
  CHECK(set.annotation_count() == 0);
  CHECK(set.samples().size() == 48);
}

TEST_CASE("labels outside the universe") {
  const auto u = category_universe(testutil::default_tree(), false);
  CHECK_KIND(LabeledSet({make_sample("a")}, {make_annotation("a", "h", {999})}, &u), UnknownCategory);
}

TEST_CASE("sample validation") {
  auto s = make_sample("a");
  s.inputs.push_back({Role::assistant, "trailing"});
  CHECK_KIND(validate(s), Parse);
  auto t = make_sample("b");
  t.output.role = Role::user;
  CHECK_KIND(validate(t), Parse);
  auto u = make_sample("c");
  u.inputs.clear();
  CHECK_KIND(validate(u), Parse);
  CHECK_KIND(sample_from_json(json{{"id", "x"}}), Parse);
  CHECK_KIND(annotation_from_json(json{{"sample_id", "x"}, {"annotator_id", "h"}, {"categories", {11, 11}}}), Parse);

  json j = to_json(make_sample("d", "hi", "no"));
  j["system"] = "";
  CHECK(sample_from_json(j).system->content.empty());
}

TEST_CASE("sample json round trip") {
  for (const auto& s : load_samples(std::string(REFUSAL_FIXTURE_DIR) + "/samples.jsonl")) {
    const auto r = sample_from_json(to_json(s));
    CHECK(r.id == s.id);
    CHECK(r.input_text() == s.input_text());
    CHECK(r.output.content == s.output.content);
    CHECK(r.system.has_value() == s.system.has_value());
  }
}

TEST_CASE("duplicate sample ids") {
  CHECK_KIND(LabeledSet({make_sample("a"), make_sample("a")}, {}), Parse);
}

TEST_CASE("latest wins per sample and annotator") {
  std::vector<AnnotationRecord> r{make_annotation("a", "h", {11}, "2024-01-02T00:00:00Z"),
                                  make_annotation("a", "h", {12}, "2024-01-01T00:00:00Z"),
                                  make_annotation("a", "g", {13}, "2024-01-01T00:00:00Z"),
                                  make_annotation("a", "g", {14}, "2024-01-01T00:00:00Z")};
  const auto out = resolve_latest(r);
  REQUIRE(out.size() == 2);
  std::map<std::string, CategorySet> by;
  for (const auto& x : out) by[x.annotator_id] = x.categories;
  CHECK(by["h"] == CategorySet{11});
  CHECK(by["g"] == CategorySet{14});
}

TEST_CASE("refusal decision") {
  const bool half[] = {true, true, false, false};
  CHECK(refusal_decision(half, 0.5) == 1);
  CHECK(refusal_decision(half, 0.75) == 0);
  const bool all[] = {true, true, true, true};
  for (double tau : {0.0, 0.3, 0.5, 1.0}) CHECK(refusal_decision(all, tau) == 1);
  CHECK_KIND(refusal_decision(std::span<const bool>{}, 0.5), EmptyRatings);
}

TEST_CASE("refusal decision is monotone in positive ratings") {
  std::mt19937 rng(3);
  for (int trial = 0; trial < 500; ++trial) {
    std::vector<char> flags(1 + rng() % 8);
    for (auto& f : flags) f = rng() % 2;
    const double tau = (rng() % 101) / 100.0;
    auto as_bool = [](const std::vector<char>& v) {
      std::unique_ptr<bool[]> b(new bool[v.size()]);
      for (std::size_t i = 0; i < v.size(); ++i) b[i] = v[i];
      return b;
    };
    const auto before_buf = as_bool(flags);
    const int before = refusal_decision(std::span<const bool>(before_buf.get(), flags.size()), tau);
    flags.push_back(1);
    const auto after_buf = as_bool(flags);
    const int after = refusal_decision(std::span<const bool>(after_buf.get(), flags.size()), tau);
    CHECK(after >= before);
  }
}

TEST_CASE("category validity") {
  const std::vector<CategorySet> two{{11}, {11, 12}, {12}, {13}};
  const auto v = category_validity(two, 11, 0.5);
  CHECK(v.proportion == doctest::Approx(0.5));
  CHECK(v.valid);
  const auto w = category_validity(two, 13, 0.5);
  CHECK(w.proportion == doctest::Approx(0.25));
  CHECK_FALSE(w.valid);
  for (int c : {11, 12, 13, 14, 15}) CHECK(category_validity(two, c, 0.0).valid);
  CHECK_KIND(category_validity(std::span<const CategorySet>{}, 11, 0.5), EmptyRatings);
}

TEST_CASE("validity proportions sum to mean label count") {
  std::mt19937 rng(11);
  for (int trial = 0; trial < 200; ++trial) {
    std::vector<CategorySet> labels(1 + rng() % 5);
    double total_labels = 0;
    for (auto& s : labels) {
      for (int c = 0; c < 6; ++c) {
        if (rng() % 3 == 0) s.insert(c);
      }
      total_labels += static_cast<double>(s.size());
    }
    double sum = 0;
    for (int c = 0; c < 6; ++c) {
      const double p = category_validity(labels, c, 0.5).proportion;
      CHECK(p >= 0.0);
      CHECK(p <= 1.0);
      sum += p;
    }
    CHECK(sum == doctest::Approx(total_labels / static_cast<double>(labels.size())));
  }
}

TEST_CASE("majority label") {
  CHECK(majority_label(std::vector<CategorySet>{{11}, {11}, {12}, {13}}) == 11);
  CHECK(majority_label(std::vector<CategorySet>{{14}, {12}}) == 12);
  CHECK_KIND(majority_label(std::vector<CategorySet>{{}, {}}), NoLabels);

  std::mt19937 rng(5);
  for (int trial = 0; trial < 300; ++trial) {
    std::vector<CategorySet> labels(1 + rng() % 5);
    CategorySet uni;
    for (auto& s : labels) {
      s.insert(static_cast<int>(rng() % 7));
      uni.insert(s.begin(), s.end());
    }
    CHECK(uni.count(majority_label(labels)) == 1);
  }
}

TEST_CASE("dataset report") {
  const LabeledSet two({make_sample("a", "x", std::string(10, 'o')), make_sample("b", "y", std::string(20, 'o'))},
                       {make_annotation("a", "h", {11}), make_annotation("b", "h", {12})});
  const auto r = dataset_report(two);
  CHECK(r.output_length.mean == doctest::Approx(15.0));
  CHECK(r.output_length.stddev == doctest::Approx(5.0));
  CHECK(r.label_count_distribution.size() == 1);
  CHECK(r.label_count_distribution.at("1") == doctest::Approx(1.0));

  const LabeledSet ab({make_sample("a", "x", "a b a b")}, {});
  const auto bg = dataset_report(ab).top_bigrams;
  REQUIRE(!bg.empty());
  CHECK(bg[0].first == "a");
  CHECK(bg[0].second == "b");
  CHECK(bg[0].count == 2);

  CHECK_KIND(dataset_report(LabeledSet{}), EmptySet);
}

TEST_CASE("label count distribution sums to one") {
  const auto set = load_corpus(std::string(REFUSAL_FIXTURE_DIR) + "/samples.jsonl",
                               std::string(REFUSAL_FIXTURE_DIR) + "/annotations.jsonl");
  const auto r = dataset_report(set);
  double total = 0;
  for (const auto& [k, v] : r.label_count_distribution) total += v;
  CHECK(std::abs(total - 1.0) < 1e-9);
  CHECK(r.sample_count == 48);
  CHECK(r.annotation_count == 192);
}

TEST_CASE("tokenizer lowercases and strips punctuation") {
  CHECK(tokenize("Hello, World! I can't.") == std::vector<std::string>{"hello", "world", "i", "can't"});
  CHECK(utf8_length("caf\xc3\xa9") == 4);
}

}
