// Acceptance checks. Prints one PASS/FAIL line per criterion and exits
// non-zero when any of them fails.

#include <chrono>
#include <cmath>
#include <cstdio>
#include <functional>
#include <iostream>
#include <random>
#include <set>
#include <sstream>
#include <string>
#include <vector>

#include "oracles.hpp"
#include "pipeline.hpp"

#include "refusal/classifier.hpp"
#include "refusal/collect.hpp"
#include "refusal/embedstore.hpp"
#include "refusal/metrics.hpp"
#include "refusal/synthgen.hpp"
#include "refusal/taxonomy.hpp"

using namespace refusal;

namespace {

// Tolerances and time budgets.
constexpr double kChance13Tol = 1e-4;
constexpr double kOracleTol = 1e-9;
constexpr double kHandTol = 1e-3;
constexpr double kGradTol = 1e-4;
constexpr double kSimplexTol = 1e-9;
constexpr double kMinTrainAccuracy = 0.99;
constexpr int kMaxEpochs = 50;
constexpr std::size_t kMinClusters = 12;

constexpr double kArithmeticSeconds = 1.0;
constexpr double kAllocationSeconds = 1.0;
constexpr double kMetricSeconds = 10.0;
constexpr double kClassifierSeconds = 30.0;
constexpr double kCollectionSeconds = 5.0;
constexpr double kDiversitySeconds = 5.0;

struct Outcome {
  bool pass = true;
  std::string detail;

  void require(bool ok, const std::string& what) {
    if (!ok) {
      pass = false;
      if (!detail.empty()) detail += "; ";
      detail += what;
    }
  }
};

std::string fmt(double v, int precision = 6) {
  std::ostringstream s;
  s.precision(precision);
  s << v;
  return s.str();
}

int failures = 0;

void criterion(const std::string& name, double budget_seconds, const std::function<Outcome()>& body) {
  const auto t0 = std::chrono::steady_clock::now();
  Outcome o;
  try {
    o = body();
  } catch (const std::exception& e) {
    o.pass = false;
    o.detail = std::string("exception: ") + e.what();
  }
  const double secs = std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
  if (budget_seconds > 0 && secs >= budget_seconds) {
    o.pass = false;
    if (!o.detail.empty()) o.detail += "; ";
    o.detail += "took " + fmt(secs, 3) + " s, budget " + fmt(budget_seconds, 3) + " s";
  }
  if (!o.pass) ++failures;
  std::cout << (o.pass ? "[PASS] " : "[FAIL] ") << name << " (" << fmt(secs, 3) << " s)";
  if (!o.detail.empty()) std::cout << " - " << o.detail;
  std::cout << "\n";
}

Outcome synthetic_arithmetic() {
  Outcome o;
  const auto tree = load_taxonomy(std::string(REFUSAL_DATA_DIR) + "/taxonomy_reduced.json");
  o.require(tree.category_ids().size() == 13, "reduced taxonomy has " + std::to_string(tree.category_ids().size()) + " categories");
  const auto plan = plan_generation(tree, 8000);
  o.require(plan.total() == 104000, "plan total " + std::to_string(plan.total()));
  o.require(ultra_combinations().size() == 69, "combinations per pair " + std::to_string(ultra_combinations().size()));
  o.require(ultra_size(plan.total()) == 7176000, "ultra total " + std::to_string(ultra_size(plan.total())));

  // Streamed assembly over one fully varied pair with a mock generator.
  ScriptedModel mock("mock", [](const std::string& p) { return "v" + std::to_string(p.size()); });
  SyntheticRecord base;
  base.id = "11-0";
  base.leaf_id = 11;
  base.category_id = 11;
  base.input = "in";
  base.output = "out";
  std::vector<std::string> in, out;
  for (const auto& k : input_variations()) in.emplace_back(k.name);
  for (const auto& k : output_variations()) out.emplace_back(k.name);
  const VariantSet set{base, apply_variations(base, VariationSide::input, in, mock),
                       apply_variations(base, VariationSide::output, out, mock)};
  long long emitted = 0;
  assemble_ultra({set}, [&](SyntheticRecord) { ++emitted; });
  o.require(emitted == 69, "assembled " + std::to_string(emitted) + " records for one pair");
  return o;
}

Outcome allocation() {
  Outcome o;
  const auto a = allocate_counts({1, 2, 3}, 8000);
  std::vector<long long> got;
  for (const auto& [k, v] : a) got.push_back(v);
  o.require(got == std::vector<long long>{2667, 2667, 2666}, "allocate(8000, 3 leaves) wrong");

  std::mt19937_64 rng(2024);
  int bad = 0;
  for (int t = 0; t < 1000; ++t) {
    const long long budget = static_cast<long long>(rng() % 20001);
    const std::size_t count = 1 + rng() % 40;
    std::set<int> ids;
    while (ids.size() < count) ids.insert(static_cast<int>(rng() % 100000));
    std::vector<int> leaves(ids.begin(), ids.end());
    std::shuffle(leaves.begin(), leaves.end(), rng);
    const auto m = allocate_counts(leaves, budget);
    long long sum = 0, lo = budget, hi = 0;
    for (const auto& [k, v] : m) {
      sum += v;
      lo = std::min(lo, v);
      hi = std::max(hi, v);
    }
    if (sum != budget || hi - lo > 1 || m != oracle::allocate(leaves, budget)) ++bad;
  }
  o.require(bad == 0, std::to_string(bad) + " of 1000 random cases disagree with the brute-force allocator");
  return o;
}

Outcome chance() {
  Outcome o;
  o.require(chance_agreement(16) == 0.0625, "chance(16) = " + fmt(chance_agreement(16), 10));
  o.require(std::abs(chance_agreement(13) - 0.0769) <= kChance13Tol, "chance(13) = " + fmt(chance_agreement(13), 10));
  return o;
}

Outcome cost() {
  Outcome o;
  const double c = cost_per_1000(10000, 3.0);
  // 3 / 600000 * 1000 in binary floating point.
  o.require(c == 3.0 / (10000.0 * 60.0) * 1000.0, "cost = " + fmt(c, 17));
  o.require(std::abs(c - 0.005) < 1e-15, "cost = " + fmt(c, 17));
  return o;
}

Outcome metric_oracles() {
  Outcome o;
  std::mt19937_64 rng(99);
  double worst_kappa = 0.0, worst_alpha = 0.0, worst_set = 0.0;
  int kappa_cases = 0, alpha_cases = 0;
  while (kappa_cases < 500) {
    const int n = 1 + static_cast<int>(rng() % 6);
    const int k = 1 + static_cast<int>(rng() % 4);
    std::vector<int> a, b;
    for (int i = 0; i < n; ++i) {
      a.push_back(static_cast<int>(rng() % static_cast<std::uint64_t>(k)));
      b.push_back(static_cast<int>(rng() % static_cast<std::uint64_t>(k)));
    }
    const double ref = oracle::kappa(a, b);
    if (!std::isfinite(ref)) continue;
    worst_kappa = std::max(worst_kappa, std::abs(cohen_kappa(a, b) - ref));
    ++kappa_cases;
  }
  while (alpha_cases < 500) {
    const int items = 1 + static_cast<int>(rng() % 6);
    const int raters = 1 + static_cast<int>(rng() % 4);
    const int k = 1 + static_cast<int>(rng() % 4);
    std::vector<std::vector<int>> units(static_cast<std::size_t>(items));
    std::vector<std::vector<CategorySet>> sets(static_cast<std::size_t>(items));
    for (std::size_t u = 0; u < units.size(); ++u) {
      for (int r = 0; r < raters; ++r) {
        if (rng() % 6 == 0) continue;
        units[u].push_back(static_cast<int>(rng() % static_cast<std::uint64_t>(k)));
        CategorySet s;
        for (int c = 0; c < k; ++c) {
          if (rng() % 3 == 0) s.insert(c);
        }
        sets[u].push_back(s);
      }
    }
    const double ref = oracle::alpha_nominal(units);
    const double ref_set = oracle::alpha_jaccard(sets);
    if (!std::isfinite(ref) || !std::isfinite(ref_set)) continue;
    worst_alpha = std::max(worst_alpha, std::abs(krippendorff_alpha(units) - ref));
    worst_set = std::max(worst_set, std::abs(krippendorff_alpha(sets, Distance::jaccard) - ref_set));
    ++alpha_cases;
  }
  o.require(worst_kappa <= kOracleTol, "kappa max deviation " + fmt(worst_kappa));
  o.require(worst_alpha <= kOracleTol, "nominal alpha max deviation " + fmt(worst_alpha));
  o.require(worst_set <= kOracleTol, "jaccard alpha max deviation " + fmt(worst_set));

  const double k = cohen_kappa(std::vector<int>{0, 0, 1, 1}, std::vector<int>{0, 0, 1, 0});
  o.require(std::abs(k - 0.5) <= kHandTol, "hand kappa " + fmt(k));
  const double a = krippendorff_alpha(std::vector<std::vector<int>>{{0, 0}, {1, 1}, {0, 1}, {0, 0}});
  o.require(std::abs(a - 0.5333) <= kHandTol, "hand alpha " + fmt(a));
  return o;
}

Outcome classifier() {
  Outcome o;
  std::mt19937_64 rng(5);
  std::normal_distribution<double> nd;
  LogRegParams<double> p{RowMatrix<double>(4, 8), Vector<double>(4)};
  for (Eigen::Index i = 0; i < p.W.size(); ++i) p.W.data()[i] = 0.5 * nd(rng);
  for (Eigen::Index i = 0; i < 4; ++i) p.b(i) = 0.5 * nd(rng);
  RowMatrix<double> X(16, 8);
  for (Eigen::Index i = 0; i < X.size(); ++i) X.data()[i] = nd(rng);
  std::vector<int> y;
  for (int i = 0; i < 16; ++i) y.push_back(i % 4);
  const double err = grad_check(p, X, y, {20, 1e-5, 0.0, 7});
  o.require(err < kGradTol, "gradient relative error " + fmt(err));

  const auto data = oracle::two_clusters(200, 0.5, 11, 12, 1);
  const CategoryUniverse u{{11, 12}, false};
  TrainConfig cfg;
  cfg.epochs = kMaxEpochs;
  const auto model = train(data.X, data.labels, u, cfg).model;
  const auto probs = predict_proba_batch(model, data.X);
  int hits = 0;
  for (Eigen::Index i = 0; i < probs.rows(); ++i) {
    hits += argmax_category(u, probs.row(i).transpose()) == data.labels[static_cast<std::size_t>(i)];
  }
  const double acc = hits / 200.0;
  o.require(acc >= kMinTrainAccuracy, "train accuracy " + fmt(acc));

  LogRegModel wide;
  wide.classes = CategoryUniverse{{1, 2, 3, 4, 5, 6, 7}, false};
  wide.params.W = RowMatrix<float>(7, 10);
  wide.params.b = Vector<float>(7);
  for (Eigen::Index i = 0; i < wide.params.W.size(); ++i) wide.params.W.data()[i] = static_cast<float>(2.0 * nd(rng));
  for (Eigen::Index i = 0; i < 7; ++i) wide.params.b(i) = static_cast<float>(nd(rng));
  double worst = 0.0;
  for (int t = 0; t < 1000; ++t) {
    Vector<double> x(10);
    for (int j = 0; j < 10; ++j) x(j) = 5.0 * nd(rng);
    worst = std::max(worst, std::abs(predict_proba(wide, x).sum() - 1.0));
  }
  o.require(worst <= kSimplexTol, "softmax sum deviation " + fmt(worst));
  return o;
}

Outcome collection() {
  Outcome o;
  std::vector<Sample> samples;
  std::vector<std::string> ids;
  RowMatrix<float> m(100, 8);
  std::mt19937_64 rng(11);
  std::normal_distribution<float> nd;
  for (int i = 0; i < 100; ++i) {
    char id[8];
    std::snprintf(id, sizeof id, "c%03d", i);
    ids.emplace_back(id);
    Sample s;
    s.id = id;
    s.inputs.push_back({Role::user, "request " + std::to_string(i)});
    s.output = {Role::assistant, "declined"};
    samples.push_back(std::move(s));
    for (int j = 0; j < 8; ++j) m(i, j) = nd(rng);
  }
  const LabeledSet corpus(samples, {});
  const EmbeddingMatrix matrix(ids, m);

  CollectionConfig cfg;
  cfg.iterations = 12;
  cfg.per_iteration = 10;
  cfg.threshold = -std::numeric_limits<double>::infinity();
  cfg.seed_ids = {"c000", "c020", "c040", "c060", "c080"};

  const auto accept = run_collection(corpus, matrix, cfg, make_verifier(VerifierMode::accept_all, nullptr));
  std::size_t prev = 5;
  for (const auto& it : accept.log) {
    const std::size_t expect = std::min<std::size_t>(prev + 10, 100);
    if (it.accepted_total != expect) {
      o.require(false, "iteration " + std::to_string(it.iteration) + " reached " + std::to_string(it.accepted_total) +
                           ", expected " + std::to_string(expect));
    }
    prev = it.accepted_total;
  }
  o.require(accept.accepted.size() == 100, "final size " + std::to_string(accept.accepted.size()));

  const auto reject = run_collection(corpus, matrix, cfg, make_verifier(VerifierMode::reject_all, nullptr));
  o.require(reject.accepted == cfg.seed_ids, "reject_all changed R");

  auto random_cfg = cfg;
  random_cfg.sample_random = true;
  const auto again = run_collection(corpus, matrix, cfg, make_verifier(VerifierMode::accept_all, nullptr));
  const auto r1 = run_collection(corpus, matrix, random_cfg, make_verifier(VerifierMode::accept_all, nullptr));
  const auto r2 = run_collection(corpus, matrix, random_cfg, make_verifier(VerifierMode::accept_all, nullptr));
  o.require(again.accepted == accept.accepted, "top-n runs differ");
  o.require(r1.accepted == r2.accepted, "seeded random runs differ");
  return o;
}

Outcome diversity() {
  Outcome o;
  // 4 x 4 lattice of clusters with unequal spacing on the two axes.
  const auto c = oracle::lattice_clusters(4, 4, 25, 10.0, 7.0, 0.5, 3);
  const EmbeddingMatrix m(c.ids, c.points);
  std::size_t worst = 16;
  for (std::uint64_t seed = 1; seed <= 20; ++seed) {
    const auto picked = diversity_sample(m, 16, {4, seed});
    std::set<int> clusters;
    for (const auto& id : picked) clusters.insert(c.cluster[m.index_of(id)]);
    worst = std::min(worst, clusters.size());
  }
  o.require(worst >= kMinClusters, "fewest distinct clusters " + std::to_string(worst));
  return o;
}

Outcome end_to_end() {
  Outcome o;
  oracle::TempDir a, b;
  const auto first = pipeline::run(a.path());
  const auto second = pipeline::run(b.path());
  for (const auto* r : {&first, &second}) {
    for (const auto& s : r->steps) o.require(s.code == 0, s.name + " exited " + std::to_string(s.code) + ": " + s.err);
  }
  if (!first.ok() || !second.ok()) return o;
  for (const auto& [name, bytes] : first.reports) {
    o.require(second.reports.at(name) == bytes, name + " differs between runs");
  }
  return o;
}

}  // namespace

int main() {
  criterion("synthetic dataset arithmetic: 104,000 planned, 69 per pair, 7,176,000 total", kArithmeticSeconds,
            synthetic_arithmetic);
  criterion("allocation: [2667, 2667, 2666] and 1,000 random cases vs brute force", kAllocationSeconds, allocation);
  criterion("chance baselines: 1/16 = 0.0625, 1/13 = 0.0769", 0, chance);
  criterion("cost model: 10,000/min at 3/hr = 0.005 per 1,000", 0, cost);
  criterion("metric oracles: kappa and alpha vs brute force on 500 fixtures, hand cases", kMetricSeconds,
            metric_oracles);
  criterion("classifier: gradient check, separable clusters, softmax normalisation", kClassifierSeconds, classifier);
  criterion("collection loop: +10 per iteration with accept_all, static with reject_all, deterministic",
            kCollectionSeconds, collection);
  criterion("diversity sampling: at least 12 of 16 clusters across 20 seeds", kDiversitySeconds, diversity);
  criterion("end-to-end offline pipeline with byte-identical reports", 0, end_to_end);
  std::cout << (failures == 0 ? "all criteria passed" : std::to_string(failures) + " criteria failed") << "\n";
  return failures == 0 ? 0 : 1;
}
