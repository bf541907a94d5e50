#pragma once

#include <map>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include "refusal/classifier.hpp"
#include "refusal/corpus.hpp"
#include "refusal/embedstore.hpp"
#include "refusal/taxonomy.hpp"

namespace refusal {

/// (P_o - P_e) / (1 - P_e) for two single-label sequences. Throws
/// LengthMismatch, EmptySet, DegenerateMarginals.
double cohen_kappa(std::span<const int> a, std::span<const int> b);

enum class KappaMode { macro_binary, exact_set };

/// Agreement of two multi-label annotators. macro_binary averages binary κ
/// over the categories of `universe`, skipping categories where it is
/// undefined; exact_set treats each distinct set as one label.
double generalized_kappa(std::span<const CategorySet> a, std::span<const CategorySet> b,
                         const CategoryUniverse& universe, KappaMode mode = KappaMode::macro_binary);

enum class Distance { nominal, jaccard };

/// 0/1 on set equality, or 1 - |a ∩ b| / |a ∪ b| (0 for two empty sets).
double set_distance(const CategorySet& a, const CategorySet& b, Distance distance);

/// One unit per item, holding the values it received (missing ratings are
/// simply absent). Units with fewer than two values are not pairable and
/// are ignored. Throws DegenerateData when no unit is pairable or the
/// expected disagreement is zero.
double krippendorff_alpha(const std::vector<std::vector<CategorySet>>& units, Distance distance);
double krippendorff_alpha(const std::vector<std::vector<int>>& units);

/// |own ∩ others| / |others|. Throws EmptyOthers.
double intersection_ratio(const CategorySet& own, const CategorySet& others);

/// Maps an empty set (annotated as "no refusal") to {kNotARefusal}.
CategorySet as_vote(const CategorySet& labels);

struct ConsensusStats {
  std::map<int, double> max_consensus;   // MaxConsensus value -> share of items
  std::map<int, double> distinct_labels;  // number of distinct labels -> share of items
  double average_share = 0.0;
  std::map<int, double> share_by_category;  // keyed by majority label
  std::vector<int> item_max_consensus;
  std::vector<int> item_annotators;
};

/// Each inner vector holds one label set per annotator. Empty sets count as
/// a vote for kNotARefusal. Throws EmptyItem.
ConsensusStats consensus_stats(const std::vector<std::vector<CategorySet>>& items);

struct ConfusionMatrix {
  std::vector<int> ids;      // row/column category ids
  RowMatrix<double> counts;  // row = reference, column = observed
  RowMatrix<double> normalized;
  double total() const { return counts.sum(); }
};

/// Every observed label adds one to (reference, label). Throws
/// UnknownCategory for labels outside `universe`, LengthMismatch.
ConfusionMatrix confusion_matrix(const CategoryUniverse& universe, std::span<const int> reference,
                                 const std::vector<std::vector<int>>& observed);

/// Most voted label when it is strictly ahead of every other one.
std::optional<int> strict_majority(std::span<const CategorySet> labels);

struct ClassifierAgreement {
  double at_least_once = 0.0;
  double majority_accuracy = 0.0;
  std::size_t items = 0;
  std::size_t majority_items = 0;
  std::size_t no_majority = 0;  // excluded from majority accuracy
};

/// Predictions per sample id against the human sets of `humans`. Throws
/// IdMismatch when an annotated sample has no prediction.
ClassifierAgreement classifier_agreement(const std::map<std::string, int>& predictions, const LabeledSet& humans);

/// 1/K.
double chance_agreement(int universe_size);

/// price / (throughput * 60) * 1000. Throws ZeroThroughput.
double cost_per_1000(double items_per_minute, double price_per_hour);

struct AgreementReport {
  std::vector<std::string> annotators;
  std::size_t items = 0;
  KappaMode kappa_mode = KappaMode::macro_binary;
  RowMatrix<double> pairwise_kappa;  // NaN where undefined
  std::map<std::string, std::optional<double>> alpha_vs_majority;
  std::map<std::string, double> intersection_ratio;
  std::optional<double> alpha_all;
  ConsensusStats consensus;
  ConfusionMatrix confusion;
};

AgreementReport agreement_report(const LabeledSet& set, const CategoryUniverse& universe,
                                 KappaMode kappa_mode = KappaMode::macro_binary);

struct ModelScore {
  std::string model_id;
  ClassifierAgreement agreement;
  ConfusionMatrix confusion;
};

struct ModelEvalReport {
  std::vector<ModelScore> models;
  std::vector<std::string> model_ids;
  RowMatrix<double> pairwise_alpha;  // NaN where undefined
  double chance = 0.0;
  int universe_size = 0;
};

ModelEvalReport model_eval_report(const std::vector<PredictionRecord>& predictions, const LabeledSet& humans,
                                  const CategoryUniverse& universe, int chance_universe_size);

json to_json(const ConfusionMatrix& matrix, const TaxonomyTree* tree = nullptr);
json to_json(const AgreementReport& report, const TaxonomyTree* tree = nullptr);
json to_json(const ModelEvalReport& report, const TaxonomyTree* tree = nullptr);

std::string render_text(const AgreementReport& report, const TaxonomyTree* tree = nullptr);
std::string render_text(const ModelEvalReport& report, const TaxonomyTree* tree = nullptr);

}  // namespace refusal
