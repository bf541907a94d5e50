#include <cmath>
#include <random>

#include "oracles.hpp"
#include "test_util.hpp"

#include "refusal/metrics.hpp"

using namespace refusal;
using testutil::make_annotation;
using testutil::make_sample;

namespace {

constexpr int A = 11, B = 12, C = 13, D = 14;

bool oracle_alpha_defined(const std::vector<std::vector<int>>& units) {
  std::set<int> values;
  bool pairable = false;
  for (const auto& u : units) {
    if (u.size() < 2) continue;
    pairable = true;
    values.insert(u.begin(), u.end());
  }
  return pairable && values.size() > 1;
}

std::vector<std::vector<int>> random_units(std::mt19937_64& rng) {
  const int items = 1 + static_cast<int>(rng() % 6);
  const int raters = 1 + static_cast<int>(rng() % 4);
  const int cats = 1 + static_cast<int>(rng() % 4);
  std::vector<std::vector<int>> units(static_cast<std::size_t>(items));
  for (auto& u : units) {
    for (int r = 0; r < raters; ++r) {
      if (rng() % 5 != 0) u.push_back(static_cast<int>(rng() % static_cast<std::uint64_t>(cats)));
    }
  }
  return units;
}

}  // namespace

TEST_SUITE("metrics") {

TEST_CASE("kappa examples") {
  const std::vector<int> a{A, A, B, B};
  CHECK(cohen_kappa(a, a) == doctest::Approx(1.0));
  CHECK(std::abs(cohen_kappa(a, std::vector<int>{A, B, A, B})) < 1e-12);
  CHECK(cohen_kappa(a, std::vector<int>{A, A, B, A}) == doctest::Approx(0.5));
  CHECK_KIND(cohen_kappa(a, std::vector<int>{A}), LengthMismatch);
  CHECK_KIND(cohen_kappa(std::vector<int>{A, A}, std::vector<int>{A, A}), DegenerateMarginals);
  CHECK_KIND(cohen_kappa(std::vector<int>{}, std::vector<int>{}), EmptySet);
}

TEST_CASE("kappa matches the contingency table and is symmetric") {
  std::mt19937_64 rng(17);
  int checked = 0;
  for (int t = 0; t < 400; ++t) {
    const int n = 1 + static_cast<int>(rng() % 6);
    const int k = 1 + static_cast<int>(rng() % 4);
    std::vector<int> a, b;
    for (int i = 0; i < n; ++i) {
      a.push_back(static_cast<int>(rng() % static_cast<std::uint64_t>(k)));
      b.push_back(rng() % 3 == 0 ? a.back() : static_cast<int>(rng() % static_cast<std::uint64_t>(k)));
    }
    const bool degenerate = std::set<int>(a.begin(), a.end()).size() == 1 && std::set<int>(b.begin(), b.end()) == std::set<int>(a.begin(), a.end());
    if (degenerate) {
      CHECK_KIND(cohen_kappa(a, b), DegenerateMarginals);
      continue;
    }
    const double got = cohen_kappa(a, b);
    CHECK(std::abs(got - oracle::kappa(a, b)) < 1e-9);
    CHECK(std::abs(got - cohen_kappa(b, a)) < 1e-12);
    CHECK(got <= 1.0 + 1e-12);
    CHECK(got >= -1.0 - 1e-12);
    if (a == b) CHECK(got == doctest::Approx(1.0));
    if (got > 1.0 - 1e-12) CHECK(a == b);
    ++checked;
  }
  CHECK(checked > 200);
}

TEST_CASE("alpha examples") {
  CHECK(krippendorff_alpha(std::vector<std::vector<int>>{{A, A}, {B, B}, {A, A}}) == doctest::Approx(1.0));
  const std::vector<std::vector<int>> hand{{A, A}, {B, B}, {A, B}, {A, A}};
  CHECK(std::abs(krippendorff_alpha(hand) - (1.0 - 0.25 / (30.0 / 56.0))) < 1e-12);
  CHECK(std::abs(krippendorff_alpha(hand) - 0.5333) < 1e-3);
  CHECK_KIND(krippendorff_alpha(std::vector<std::vector<int>>{{A, A}, {A, A}}), DegenerateData);
  CHECK_KIND(krippendorff_alpha(std::vector<std::vector<int>>{{A}, {B}}), DegenerateData);
}

TEST_CASE("nominal alpha matches the coincidence matrix") {
  std::mt19937_64 rng(23);
  int checked = 0;
  for (int t = 0; t < 500; ++t) {
    const auto units = random_units(rng);
    if (!oracle_alpha_defined(units)) {
      CHECK_KIND(krippendorff_alpha(units), DegenerateData);
      continue;
    }
    const double got = krippendorff_alpha(units);
    CHECK(std::abs(got - oracle::alpha_nominal(units)) < 1e-9);
    ++checked;

    // Consistent relabelling leaves alpha unchanged.
    auto relabelled = units;
    for (auto& u : relabelled) {
      for (auto& v : u) v = 100 - 7 * v;
    }
    CHECK(std::abs(krippendorff_alpha(relabelled) - got) < 1e-12);
  }
  CHECK(checked > 200);
}

TEST_CASE("set alpha matches the coincidence matrix for both distances") {
  std::mt19937_64 rng(29);
  int checked = 0;
  for (int t = 0; t < 400; ++t) {
    const int items = 2 + static_cast<int>(rng() % 5);
    const int raters = 2 + static_cast<int>(rng() % 3);
    std::vector<std::vector<CategorySet>> units(static_cast<std::size_t>(items));
    for (auto& u : units) {
      for (int r = 0; r < raters; ++r) {
        CategorySet s;
        for (int c = 0; c < 4; ++c) {
          if (rng() % 3 == 0) s.insert(c);
        }
        u.push_back(s);
      }
    }
    double jacc_ref = 0, nom_ref = 0;
    bool ok = true;
    {
      const double j = oracle::alpha_jaccard(units);
      const double n = oracle::alpha(units, [](const CategorySet& x, const CategorySet& y) { return x == y ? 0.0 : 1.0; });
      ok = std::isfinite(j) && std::isfinite(n);
      jacc_ref = j;
      nom_ref = n;
    }
    if (!ok) continue;
    CHECK(std::abs(krippendorff_alpha(units, Distance::jaccard) - jacc_ref) < 1e-9);
    CHECK(std::abs(krippendorff_alpha(units, Distance::nominal) - nom_ref) < 1e-9);
    ++checked;
  }
  CHECK(checked > 300);
}

TEST_CASE("set distance") {
  CHECK(set_distance({A}, {A, B}, Distance::jaccard) == doctest::Approx(0.5));
  CHECK(set_distance({}, {}, Distance::jaccard) == 0.0);
  CHECK(set_distance({A}, {A, B}, Distance::nominal) == 1.0);
}

TEST_CASE("generalized kappa") {
  const CategoryUniverse u{{A, B, C}, false};
  const std::vector<CategorySet> x{{A}, {B}, {A, C}, {C}};
  CHECK(generalized_kappa(x, x, u) == doctest::Approx(1.0));
  CHECK(generalized_kappa(x, x, u, KappaMode::exact_set) == doctest::Approx(1.0));
  // Per category binary kappa, averaged over the categories where it is defined.
  const std::vector<CategorySet> y{{A}, {A}, {C}, {C}};
  double sum = 0;
  int defined = 0;
  for (int c : u.ids) {
    std::vector<int> bx, by;
    for (std::size_t i = 0; i < x.size(); ++i) {
      bx.push_back(static_cast<int>(x[i].count(c)));
      by.push_back(static_cast<int>(y[i].count(c)));
    }
    const double k = oracle::kappa(bx, by);
    if (std::isfinite(k)) {
      sum += k;
      ++defined;
    }
  }
  CHECK(generalized_kappa(x, y, u) == doctest::Approx(sum / defined));
}

TEST_CASE("intersection ratio") {
  CHECK(intersection_ratio({15}, {15, 12}) == doctest::Approx(0.5));
  CHECK(intersection_ratio({15, 12}, {15, 12}) == 1.0);
  CHECK(intersection_ratio({11}, {15, 12}) == 0.0);
  CHECK_KIND(intersection_ratio({11}, {}), EmptyOthers);
}

TEST_CASE("consensus statistics") {
  const auto one = consensus_stats({{{A}, {A}, {B}, {C}}});
  CHECK(one.item_max_consensus == std::vector<int>{2});
  CHECK(one.distinct_labels.at(3) == 1.0);
  CHECK(one.average_share == doctest::Approx(0.5));

  const auto same = consensus_stats({{{A}, {A}, {A}, {A}}});
  CHECK(same.item_max_consensus == std::vector<int>{4});
  CHECK(same.distinct_labels.at(1) == 1.0);
  CHECK(same.average_share == 1.0);

  const auto two = consensus_stats({{{A}, {A}, {A}, {A}}, {{A}, {B}, {C}, {D}}});
  CHECK(two.max_consensus.at(4) == doctest::Approx(0.5));
  CHECK(two.max_consensus.at(1) == doctest::Approx(0.5));
  CHECK(two.share_by_category.at(A) == doctest::Approx((1.0 + 0.25) / 2));

  CHECK_KIND(consensus_stats({{}}), EmptyItem);
  const auto empty_votes = consensus_stats({{{}, {}, {A}}});
  CHECK(empty_votes.item_max_consensus == std::vector<int>{2});
  CHECK(empty_votes.share_by_category.count(kNotARefusal) == 1);
}

TEST_CASE("consensus distributions are normalised") {
  std::mt19937_64 rng(31);
  for (int t = 0; t < 200; ++t) {
    std::vector<std::vector<CategorySet>> items(1 + rng() % 8);
    for (auto& item : items) {
      const int h = 1 + static_cast<int>(rng() % 5);
      for (int r = 0; r < h; ++r) {
        CategorySet s;
        for (int c = 0; c < 5; ++c) {
          if (rng() % 4 == 0) s.insert(c);
        }
        item.push_back(s);
      }
    }
    const auto s = consensus_stats(items);
    double m = 0, d = 0;
    for (const auto& [k, v] : s.max_consensus) m += v;
    for (const auto& [k, v] : s.distinct_labels) d += v;
    CHECK(std::abs(m - 1.0) < 1e-9);
    CHECK(std::abs(d - 1.0) < 1e-9);
    for (std::size_t i = 0; i < items.size(); ++i) {
      CHECK(s.item_max_consensus[i] >= 1);
      CHECK(s.item_max_consensus[i] <= s.item_annotators[i]);
    }
  }
}

TEST_CASE("confusion matrix") {
  const CategoryUniverse u{{A, B, C}, false};
  const std::vector<int> ref{A, B, C};
  const auto diag = confusion_matrix(u, ref, {{A}, {B}, {C}});
  CHECK(diag.counts.isApprox(RowMatrix<double>::Identity(3, 3)));

  const auto split = confusion_matrix(u, std::vector<int>{A}, {{A, B}});
  CHECK(split.counts(0, 0) == 1.0);
  CHECK(split.counts(0, 1) == 1.0);
  CHECK(split.normalized(0, 0) == doctest::Approx(0.5));

  const auto none = confusion_matrix(u, std::vector<int>{}, {});
  CHECK(none.total() == 0.0);
  CHECK_KIND(confusion_matrix(u, std::vector<int>{A}, {{D}}), UnknownCategory);

  std::mt19937_64 rng(37);
  std::vector<int> r;
  std::vector<std::vector<int>> obs;
  double labels = 0;
  for (int i = 0; i < 50; ++i) {
    r.push_back(u.ids[rng() % 3]);
    obs.emplace_back();
    for (int j = 0; j < 1 + static_cast<int>(rng() % 3); ++j) obs.back().push_back(u.ids[rng() % 3]);
    labels += static_cast<double>(obs.back().size());
  }
  const auto m = confusion_matrix(u, r, obs);
  CHECK(m.total() == labels);
  for (Eigen::Index i = 0; i < 3; ++i) {
    if (m.counts.row(i).sum() > 0) CHECK(m.normalized.row(i).sum() == doctest::Approx(1.0));
  }
}

TEST_CASE("classifier agreement") {
  const LabeledSet humans({make_sample("a"), make_sample("b")},
                          {make_annotation("a", "h1", {A}), make_annotation("a", "h2", {A}), make_annotation("a", "h3", {B}),
                           make_annotation("b", "h1", {C}), make_annotation("b", "h2", {C}), make_annotation("b", "h3", {A})});
  const auto r = classifier_agreement({{"a", A}, {"b", A}}, humans);
  CHECK(r.at_least_once == 1.0);
  CHECK(r.majority_accuracy == doctest::Approx(0.5));
  CHECK(r.majority_accuracy <= r.at_least_once);
  CHECK_KIND(classifier_agreement({{"x", A}, {"y", A}}, humans), IdMismatch);

  const LabeledSet tie({make_sample("a")}, {make_annotation("a", "h1", {A}), make_annotation("a", "h2", {B})});
  const auto t = classifier_agreement({{"a", A}}, tie);
  CHECK(t.no_majority == 1);
  CHECK(t.majority_items == 0);
}

TEST_CASE("chance and cost") {
  CHECK(chance_agreement(16) == 0.0625);
  CHECK(std::abs(chance_agreement(13) - 0.0769) < 1e-4);
  CHECK(chance_agreement(1) == 1.0);
  for (int k = 1; k <= 64; ++k) CHECK(std::abs(chance_agreement(k) * k - 1.0) < 1e-15);
  CHECK(cost_per_1000(10000, 3.0) == doctest::Approx(0.005).epsilon(1e-12));
  CHECK(cost_per_1000(1000, 3.0) == doctest::Approx(0.05).epsilon(1e-12));
  CHECK(cost_per_1000(1000, 0.0) == 0.0);
  CHECK_KIND(cost_per_1000(0, 3.0), ZeroThroughput);
}

TEST_CASE("agreement report on the fixture corpus") {
  const auto& tree = testutil::default_tree();
  const auto u = category_universe(tree, true);
  const auto set = load_corpus(std::string(REFUSAL_FIXTURE_DIR) + "/samples.jsonl",
                               std::string(REFUSAL_FIXTURE_DIR) + "/annotations.jsonl", &u);
  const auto r = agreement_report(set, u);
  CHECK(r.annotators.size() == 4);
  CHECK(r.items == 48);
  for (Eigen::Index i = 0; i < 4; ++i) {
    CHECK(r.pairwise_kappa(i, i) == doctest::Approx(1.0));
    for (Eigen::Index j = 0; j < 4; ++j) {
      if (std::isfinite(r.pairwise_kappa(i, j))) {
        CHECK(r.pairwise_kappa(i, j) == doctest::Approx(r.pairwise_kappa(j, i)));
        CHECK(r.pairwise_kappa(i, j) <= 1.0 + 1e-12);
        CHECK(r.pairwise_kappa(i, j) >= -1.0 - 1e-12);
      }
    }
  }
  REQUIRE(r.alpha_all);
  CHECK(*r.alpha_all <= 1.0);
  CHECK(*r.alpha_all >= -1.0);
  for (const auto& [h, v] : r.intersection_ratio) {
    CHECK(v >= 0.0);
    CHECK(v <= 1.0);
  }
  const auto j = to_json(r, &tree);
  CHECK(dump_report(j) == dump_report(to_json(agreement_report(set, u), &tree)));
  CHECK(!render_text(r, &tree).empty());
}

}
