#include "refusal/metrics.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <limits>
#include <set>

#include "refusal/errors.hpp"

namespace refusal {

namespace {

constexpr double kNaN = std::numeric_limits<double>::quiet_NaN();

json number_or_null(double v) { return std::isnan(v) ? json(nullptr) : json(v); }

std::string label_of(const TaxonomyTree* tree, int id) {
  if (!tree) return std::to_string(id);
  if (id != kNotARefusal && !tree->contains(id)) return std::to_string(id);
  return category_name(*tree, id);
}

std::string fmt(double v, int precision = 3) {
  if (std::isnan(v)) return "-";
  char buf[32];
  std::snprintf(buf, sizeof buf, "%.*f", precision, v);
  return buf;
}

std::string pad(std::string s, std::size_t width) {
  if (s.size() < width) s.append(width - s.size(), ' ');
  return s;
}

// Latest label set of every annotator for one sample, in roster order.
std::map<std::string, CategorySet> votes_by_annotator(const LabeledSet& set, const std::string& sample_id) {
  std::map<std::string, CategorySet> out;
  for (const auto& rec : set.annotations(sample_id)) out[rec.annotator_id] = as_vote(rec.categories);
  return out;
}

}  // namespace

double cohen_kappa(std::span<const int> a, std::span<const int> b) {
  if (a.size() != b.size()) {
    fail(ErrorKind::LengthMismatch, "kappa over " + std::to_string(a.size()) + " and " + std::to_string(b.size()) + " labels");
  }
  if (a.empty()) fail(ErrorKind::EmptySet, "kappa over zero items");
  const double n = static_cast<double>(a.size());
  std::map<int, double> ma, mb;
  double agree = 0.0;
  for (std::size_t i = 0; i < a.size(); ++i) {
    ma[a[i]] += 1.0;
    mb[b[i]] += 1.0;
    if (a[i] == b[i]) agree += 1.0;
  }
  double pe = 0.0;
  for (const auto& [label, count] : ma) {
    auto it = mb.find(label);
    if (it != mb.end()) pe += (count / n) * (it->second / n);
  }
  if (pe >= 1.0 - 1e-15) fail(ErrorKind::DegenerateMarginals, "both annotators use one and the same label throughout");
  return (agree / n - pe) / (1.0 - pe);
}

double generalized_kappa(std::span<const CategorySet> a, std::span<const CategorySet> b,
                         const CategoryUniverse& universe, KappaMode mode) {
  if (a.size() != b.size()) {
    fail(ErrorKind::LengthMismatch, "kappa over " + std::to_string(a.size()) + " and " + std::to_string(b.size()) + " items");
  }
  if (mode == KappaMode::exact_set) {
    std::map<CategorySet, int> code;
    std::vector<int> ca, cb;
    for (std::size_t i = 0; i < a.size(); ++i) {
      ca.push_back(code.emplace(a[i], static_cast<int>(code.size())).first->second);
      cb.push_back(code.emplace(b[i], static_cast<int>(code.size())).first->second);
    }
    return cohen_kappa(ca, cb);
  }
  double sum = 0.0;
  int used = 0;
  std::vector<int> ba(a.size()), bb(b.size());
  for (int c : universe.ids) {
    for (std::size_t i = 0; i < a.size(); ++i) {
      ba[i] = a[i].count(c) ? 1 : 0;
      bb[i] = b[i].count(c) ? 1 : 0;
    }
    try {
      sum += cohen_kappa(ba, bb);
      ++used;
    } catch (const Error& e) {
      if (e.kind() != ErrorKind::DegenerateMarginals) throw;
    }
  }
  if (used == 0) fail(ErrorKind::DegenerateMarginals, "kappa is undefined for every category");
  return sum / used;
}

double set_distance(const CategorySet& a, const CategorySet& b, Distance distance) {
  if (distance == Distance::nominal) return a == b ? 0.0 : 1.0;
  std::size_t common = 0;
  for (int x : a) common += b.count(x);
  const std::size_t uni = a.size() + b.size() - common;
  if (uni == 0) return 0.0;
  return 1.0 - static_cast<double>(common) / static_cast<double>(uni);
}

double krippendorff_alpha(const std::vector<std::vector<CategorySet>>& units, Distance distance) {
  double n = 0.0;
  double observed = 0.0;
  std::map<CategorySet, double> pool;
  for (const auto& unit : units) {
    const std::size_t m = unit.size();
    if (m < 2) continue;
    n += static_cast<double>(m);
    double within = 0.0;
    for (std::size_t i = 0; i < m; ++i)
      for (std::size_t j = 0; j < m; ++j)
        if (i != j) within += set_distance(unit[i], unit[j], distance);
    observed += within / static_cast<double>(m - 1);
    for (const auto& v : unit) pool[v] += 1.0;
  }
  if (n < 2.0) fail(ErrorKind::DegenerateData, "no unit has two or more values");
  observed /= n;
  double expected = 0.0;
  for (auto i = pool.begin(); i != pool.end(); ++i)
    for (auto j = pool.begin(); j != pool.end(); ++j)
      if (i != j) expected += i->second * j->second * set_distance(i->first, j->first, distance);
  expected /= n * (n - 1.0);
  if (expected == 0.0) fail(ErrorKind::DegenerateData, "values never vary, expected disagreement is zero");
  return 1.0 - observed / expected;
}

double krippendorff_alpha(const std::vector<std::vector<int>>& units) {
  std::vector<std::vector<CategorySet>> sets;
  sets.reserve(units.size());
  for (const auto& u : units) {
    auto& s = sets.emplace_back();
    for (int v : u) s.push_back(CategorySet{v});
  }
  return krippendorff_alpha(sets, Distance::nominal);
}

double intersection_ratio(const CategorySet& own, const CategorySet& others) {
  if (others.empty()) fail(ErrorKind::EmptyOthers, "no labels from other annotators");
  std::size_t common = 0;
  for (int x : others) common += own.count(x);
  return static_cast<double>(common) / static_cast<double>(others.size());
}

CategorySet as_vote(const CategorySet& labels) {
  return labels.empty() ? CategorySet{kNotARefusal} : labels;
}

ConsensusStats consensus_stats(const std::vector<std::vector<CategorySet>>& items) {
  ConsensusStats s;
  if (items.empty()) return s;
  std::map<int, std::pair<double, int>> by_cat;
  double share_sum = 0.0;
  for (std::size_t i = 0; i < items.size(); ++i) {
    const auto& item = items[i];
    if (item.empty()) fail(ErrorKind::EmptyItem, "item " + std::to_string(i) + " has no annotations");
    std::vector<CategorySet> votes;
    std::map<int, int> counts;
    for (const auto& set : item) {
      votes.push_back(as_vote(set));
      for (int c : votes.back()) ++counts[c];
    }
    int best = 0;
    for (const auto& [c, k] : counts) best = std::max(best, k);
    const int h = static_cast<int>(item.size());
    const double share = static_cast<double>(best) / h;
    s.item_max_consensus.push_back(best);
    s.item_annotators.push_back(h);
    s.max_consensus[best] += 1.0;
    s.distinct_labels[static_cast<int>(counts.size())] += 1.0;
    share_sum += share;
    auto& slot = by_cat[majority_label(votes)];
    slot.first += share;
    slot.second += 1;
  }
  const double total = static_cast<double>(items.size());
  for (auto& [k, v] : s.max_consensus) v /= total;
  for (auto& [k, v] : s.distinct_labels) v /= total;
  s.average_share = share_sum / total;
  for (const auto& [c, acc] : by_cat) s.share_by_category[c] = acc.first / acc.second;
  return s;
}

ConfusionMatrix confusion_matrix(const CategoryUniverse& universe, std::span<const int> reference,
                                 const std::vector<std::vector<int>>& observed) {
  if (reference.size() != observed.size()) {
    fail(ErrorKind::LengthMismatch, std::to_string(reference.size()) + " references for " +
                                        std::to_string(observed.size()) + " observations");
  }
  const auto k = static_cast<Eigen::Index>(universe.size());
  ConfusionMatrix m;
  m.ids = universe.ids;
  m.counts = RowMatrix<double>::Zero(k, k);
  for (std::size_t i = 0; i < reference.size(); ++i) {
    const auto r = static_cast<Eigen::Index>(universe.index_of(reference[i]));
    for (int label : observed[i]) m.counts(r, static_cast<Eigen::Index>(universe.index_of(label))) += 1.0;
  }
  m.normalized = m.counts;
  for (Eigen::Index r = 0; r < k; ++r) {
    const double row = m.counts.row(r).sum();
    if (row > 0) m.normalized.row(r) /= row;
  }
  return m;
}

std::optional<int> strict_majority(std::span<const CategorySet> labels) {
  std::map<int, int> counts;
  for (const auto& set : labels)
    for (int c : set) ++counts[c];
  int best = -1, best_count = 0, runner_up = 0;
  for (const auto& [c, k] : counts) {
    if (k > best_count) {
      runner_up = best_count;
      best_count = k;
      best = c;
    } else if (k > runner_up) {
      runner_up = k;
    }
  }
  if (best_count == 0 || best_count == runner_up) return std::nullopt;
  return best;
}

ClassifierAgreement classifier_agreement(const std::map<std::string, int>& predictions, const LabeledSet& humans) {
  ClassifierAgreement out;
  std::size_t once = 0, correct = 0;
  for (const auto& sample : humans.samples()) {
    const auto& recs = humans.annotations(sample.id);
    if (recs.empty()) continue;
    auto it = predictions.find(sample.id);
    if (it == predictions.end()) fail(ErrorKind::IdMismatch, "annotated sample '" + sample.id + "' has no prediction");
    std::vector<CategorySet> votes;
    for (const auto& [annotator, set] : votes_by_annotator(humans, sample.id)) votes.push_back(set);
    CategorySet uni;
    for (const auto& v : votes) uni.insert(v.begin(), v.end());
    ++out.items;
    if (uni.count(it->second)) ++once;
    if (auto maj = strict_majority(votes)) {
      ++out.majority_items;
      if (*maj == it->second) ++correct;
    } else {
      ++out.no_majority;
    }
  }
  if (out.items == 0) fail(ErrorKind::EmptySet, "no annotated sample to compare against");
  out.at_least_once = static_cast<double>(once) / static_cast<double>(out.items);
  out.majority_accuracy = out.majority_items ? static_cast<double>(correct) / static_cast<double>(out.majority_items) : 0.0;
  return out;
}

double chance_agreement(int universe_size) {
  if (universe_size < 1) fail(ErrorKind::InvalidArgument, "universe size must be at least 1");
  return 1.0 / universe_size;
}

double cost_per_1000(double items_per_minute, double price_per_hour) {
  if (!(items_per_minute > 0.0)) fail(ErrorKind::ZeroThroughput, "throughput must be positive");
  if (price_per_hour < 0.0) fail(ErrorKind::InvalidArgument, "price must be nonnegative");
  return price_per_hour / (items_per_minute * 60.0) * 1000.0;
}

AgreementReport agreement_report(const LabeledSet& set, const CategoryUniverse& universe, KappaMode kappa_mode) {
  AgreementReport rep;
  rep.annotators = set.annotators();
  rep.kappa_mode = kappa_mode;
  const std::size_t h = rep.annotators.size();

  std::vector<std::map<std::string, CategorySet>> per_item;
  for (const auto& s : set.samples()) {
    auto votes = votes_by_annotator(set, s.id);
    if (!votes.empty()) per_item.push_back(std::move(votes));
  }
  rep.items = per_item.size();

  rep.pairwise_kappa = RowMatrix<double>::Constant(static_cast<Eigen::Index>(h), static_cast<Eigen::Index>(h), kNaN);
  for (std::size_t i = 0; i < h; ++i) {
    rep.pairwise_kappa(static_cast<Eigen::Index>(i), static_cast<Eigen::Index>(i)) = 1.0;
    for (std::size_t j = i + 1; j < h; ++j) {
      std::vector<CategorySet> a, b;
      for (const auto& item : per_item) {
        auto ia = item.find(rep.annotators[i]);
        auto ib = item.find(rep.annotators[j]);
        if (ia != item.end() && ib != item.end()) {
          a.push_back(ia->second);
          b.push_back(ib->second);
        }
      }
      double k = kNaN;
      if (!a.empty()) {
        try {
          k = generalized_kappa(a, b, universe, kappa_mode);
        } catch (const Error& e) {
          if (e.kind() != ErrorKind::DegenerateMarginals) throw;
        }
      }
      rep.pairwise_kappa(static_cast<Eigen::Index>(i), static_cast<Eigen::Index>(j)) = k;
      rep.pairwise_kappa(static_cast<Eigen::Index>(j), static_cast<Eigen::Index>(i)) = k;
    }
  }

  for (const auto& annotator : rep.annotators) {
    std::vector<std::vector<CategorySet>> units;
    double ratio_sum = 0.0;
    std::size_t ratio_n = 0;
    for (const auto& item : per_item) {
      auto own = item.find(annotator);
      if (own == item.end() || item.size() < 2) continue;
      std::vector<CategorySet> others;
      CategorySet others_union;
      for (const auto& [name, labels] : item) {
        if (name == annotator) continue;
        others.push_back(labels);
        others_union.insert(labels.begin(), labels.end());
      }
      units.push_back({own->second, CategorySet{majority_label(others)}});
      ratio_sum += intersection_ratio(own->second, others_union);
      ++ratio_n;
    }
    std::optional<double> alpha;
    if (!units.empty()) {
      try {
        alpha = krippendorff_alpha(units, Distance::jaccard);
      } catch (const Error& e) {
        if (e.kind() != ErrorKind::DegenerateData) throw;
      }
    }
    rep.alpha_vs_majority[annotator] = alpha;
    if (ratio_n) rep.intersection_ratio[annotator] = ratio_sum / static_cast<double>(ratio_n);
  }

  std::vector<std::vector<CategorySet>> all_units;
  std::vector<int> reference;
  std::vector<std::vector<int>> observed;
  for (const auto& item : per_item) {
    auto& unit = all_units.emplace_back();
    auto& obs = observed.emplace_back();
    for (const auto& [name, labels] : item) {
      unit.push_back(labels);
      obs.insert(obs.end(), labels.begin(), labels.end());
    }
    reference.push_back(majority_label(unit));
  }
  try {
    rep.alpha_all = krippendorff_alpha(all_units, Distance::jaccard);
  } catch (const Error& e) {
    if (e.kind() != ErrorKind::DegenerateData) throw;
  }
  rep.consensus = consensus_stats(all_units);
  rep.confusion = confusion_matrix(universe, reference, observed);
  return rep;
}

ModelEvalReport model_eval_report(const std::vector<PredictionRecord>& predictions, const LabeledSet& humans,
                                  const CategoryUniverse& universe, int chance_universe_size) {
  std::map<std::string, std::map<std::string, int>> by_model;
  for (const auto& p : predictions) {
    if (!universe.contains(p.category)) {
      fail(ErrorKind::UnknownCategory, "prediction for '" + p.sample_id + "' names category " + std::to_string(p.category));
    }
    by_model[p.model_id][p.sample_id] = p.category;
  }
  ModelEvalReport rep;
  rep.universe_size = chance_universe_size;
  rep.chance = chance_agreement(chance_universe_size);
  for (const auto& [model_id, preds] : by_model) {
    ModelScore score;
    score.model_id = model_id;
    score.agreement = classifier_agreement(preds, humans);
    std::vector<int> reference;
    std::vector<std::vector<int>> observed;
    for (const auto& s : humans.samples()) {
      auto votes = votes_by_annotator(humans, s.id);
      if (votes.empty()) continue;
      std::vector<CategorySet> sets;
      for (const auto& [name, labels] : votes) sets.push_back(labels);
      reference.push_back(majority_label(sets));
      observed.push_back({preds.at(s.id)});
    }
    score.confusion = confusion_matrix(universe, reference, observed);
    rep.model_ids.push_back(model_id);
    rep.models.push_back(std::move(score));
  }
  const auto m = static_cast<Eigen::Index>(rep.model_ids.size());
  rep.pairwise_alpha = RowMatrix<double>::Constant(m, m, kNaN);
  for (Eigen::Index i = 0; i < m; ++i) {
    for (Eigen::Index j = i; j < m; ++j) {
      const auto& a = by_model[rep.model_ids[static_cast<std::size_t>(i)]];
      const auto& b = by_model[rep.model_ids[static_cast<std::size_t>(j)]];
      std::vector<std::vector<int>> units;
      for (const auto& [id, label] : a) {
        auto it = b.find(id);
        if (it != b.end()) units.push_back({label, it->second});
      }
      double alpha = kNaN;
      try {
        alpha = krippendorff_alpha(units);
      } catch (const Error& e) {
        if (e.kind() != ErrorKind::DegenerateData) throw;
      }
      rep.pairwise_alpha(i, j) = alpha;
      rep.pairwise_alpha(j, i) = alpha;
    }
  }
  return rep;
}

json to_json(const ConfusionMatrix& m, const TaxonomyTree* tree) {
  json labels = json::array();
  for (int id : m.ids) labels.push_back(label_of(tree, id));
  json counts = json::array(), normalized = json::array();
  for (Eigen::Index r = 0; r < m.counts.rows(); ++r) {
    json row = json::array(), nrow = json::array();
    for (Eigen::Index c = 0; c < m.counts.cols(); ++c) {
      row.push_back(static_cast<long long>(m.counts(r, c)));
      nrow.push_back(m.normalized(r, c));
    }
    counts.push_back(std::move(row));
    normalized.push_back(std::move(nrow));
  }
  return json{{"ids", m.ids}, {"labels", labels}, {"counts", counts}, {"normalized", normalized}};
}

json to_json(const AgreementReport& r, const TaxonomyTree* tree) {
  json kappa = json::array();
  for (Eigen::Index i = 0; i < r.pairwise_kappa.rows(); ++i) {
    json row = json::array();
    for (Eigen::Index j = 0; j < r.pairwise_kappa.cols(); ++j) row.push_back(number_or_null(r.pairwise_kappa(i, j)));
    kappa.push_back(std::move(row));
  }
  json alpha = json::object();
  for (const auto& [name, v] : r.alpha_vs_majority) alpha[name] = v ? json(*v) : json(nullptr);
  json mc = json::object(), dl = json::object(), bycat = json::object();
  for (const auto& [k, v] : r.consensus.max_consensus) mc[std::to_string(k)] = v;
  for (const auto& [k, v] : r.consensus.distinct_labels) dl[std::to_string(k)] = v;
  for (const auto& [k, v] : r.consensus.share_by_category) bycat[label_of(tree, k)] = v;
  return json{{"annotators", r.annotators},
              {"items", r.items},
              {"kappa_mode", r.kappa_mode == KappaMode::macro_binary ? "macro_binary" : "exact_set"},
              {"pairwise_kappa", kappa},
              {"alpha_vs_majority", alpha},
              {"alpha_all", r.alpha_all ? json(*r.alpha_all) : json(nullptr)},
              {"intersection_ratio", r.intersection_ratio},
              {"max_consensus_distribution", mc},
              {"distinct_label_distribution", dl},
              {"average_majority_share", r.consensus.average_share},
              {"majority_share_by_category", bycat},
              {"confusion", to_json(r.confusion, tree)}};
}

json to_json(const ModelEvalReport& r, const TaxonomyTree* tree) {
  json models = json::array();
  for (const auto& m : r.models) {
    models.push_back(json{{"model_id", m.model_id},
                          {"at_least_once", m.agreement.at_least_once},
                          {"majority_accuracy", m.agreement.majority_accuracy},
                          {"items", m.agreement.items},
                          {"majority_items", m.agreement.majority_items},
                          {"no_majority", m.agreement.no_majority},
                          {"confusion", to_json(m.confusion, tree)}});
  }
  json alpha = json::array();
  for (Eigen::Index i = 0; i < r.pairwise_alpha.rows(); ++i) {
    json row = json::array();
    for (Eigen::Index j = 0; j < r.pairwise_alpha.cols(); ++j) row.push_back(number_or_null(r.pairwise_alpha(i, j)));
    alpha.push_back(std::move(row));
  }
  return json{{"models", models},
              {"model_ids", r.model_ids},
              {"pairwise_alpha", alpha},
              {"chance_agreement", r.chance},
              {"universe_size", r.universe_size}};
}

std::string render_text(const AgreementReport& r, const TaxonomyTree* tree) {
  std::string out;
  out += "Items: " + std::to_string(r.items) + "   Annotators: " + std::to_string(r.annotators.size()) + "\n";
  out += "Alpha (all annotators, Jaccard): " + (r.alpha_all ? fmt(*r.alpha_all) : std::string("-")) + "\n";
  out += "Average majority share: " + fmt(r.consensus.average_share) + "\n\n";

  std::size_t w = 10;
  for (const auto& a : r.annotators) w = std::max(w, a.size() + 2);
  out += "Pairwise kappa (" + std::string(r.kappa_mode == KappaMode::macro_binary ? "macro binary" : "exact set") + ")\n";
  out += pad("", w);
  for (const auto& a : r.annotators) out += pad(a, w);
  out += "\n";
  for (std::size_t i = 0; i < r.annotators.size(); ++i) {
    out += pad(r.annotators[i], w);
    for (std::size_t j = 0; j < r.annotators.size(); ++j) {
      out += pad(fmt(r.pairwise_kappa(static_cast<Eigen::Index>(i), static_cast<Eigen::Index>(j))), w);
    }
    out += "\n";
  }
  out += "\n" + pad("Annotator", w) + pad("alpha", 10) + "intersection\n";
  for (const auto& a : r.annotators) {
    const auto& alpha = r.alpha_vs_majority.at(a);
    auto ir = r.intersection_ratio.find(a);
    out += pad(a, w) + pad(alpha ? fmt(*alpha) : "-", 10) + (ir == r.intersection_ratio.end() ? "-" : fmt(ir->second)) + "\n";
  }
  out += "\nMax consensus  share\n";
  for (const auto& [k, v] : r.consensus.max_consensus) out += pad(std::to_string(k), 15) + fmt(v) + "\n";
  out += "\nDistinct labels  share\n";
  for (const auto& [k, v] : r.consensus.distinct_labels) out += pad(std::to_string(k), 17) + fmt(v) + "\n";
  out += "\nMajority share by category\n";
  for (const auto& [k, v] : r.consensus.share_by_category) out += pad(label_of(tree, k), 34) + fmt(v) + "\n";
  return out;
}

std::string render_text(const ModelEvalReport& r, const TaxonomyTree* /*tree*/) {
  std::string out;
  out += "Chance agreement (K=" + std::to_string(r.universe_size) + "): " + fmt(r.chance, 4) + "\n\n";
  std::size_t w = 12;
  for (const auto& id : r.model_ids) w = std::max(w, id.size() + 2);
  out += pad("Model", w) + pad("at-least-once", 15) + pad("majority acc", 14) + "items\n";
  for (const auto& m : r.models) {
    out += pad(m.model_id, w) + pad(fmt(m.agreement.at_least_once), 15) + pad(fmt(m.agreement.majority_accuracy), 14) +
           std::to_string(m.agreement.items) + "\n";
  }
  if (r.model_ids.size() > 1) {
    out += "\nPairwise alpha\n" + pad("", w);
    for (const auto& id : r.model_ids) out += pad(id, w);
    out += "\n";
    for (std::size_t i = 0; i < r.model_ids.size(); ++i) {
      out += pad(r.model_ids[i], w);
      for (std::size_t j = 0; j < r.model_ids.size(); ++j) {
        out += pad(fmt(r.pairwise_alpha(static_cast<Eigen::Index>(i), static_cast<Eigen::Index>(j))), w);
      }
      out += "\n";
    }
  }
  return out;
}

}  // namespace refusal
