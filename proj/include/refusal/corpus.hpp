#pragma once

#include <filesystem>
#include <map>
#include <optional>
#include <set>
#include <span>
#include <string>
#include <unordered_map>
#include <vector>

#include "refusal/io.hpp"
#include "refusal/taxonomy.hpp"

namespace refusal {

enum class Role { system, user, assistant };

std::string_view to_string(Role role);
Role parse_role(std::string_view text);

struct Message {
  Role role = Role::user;
  std::string content;
};

/// One (S, I, O) tuple.
struct Sample {
  std::string id;
  std::optional<Message> system;
  std::vector<Message> inputs;
  Message output{Role::assistant, {}};
  std::string source;

  /// Concatenated input contents, newline separated.
  std::string input_text() const;
};

/// Throws ParseError when the sample violates the (S, I, O) invariants.
void validate(const Sample& sample);

Sample sample_from_json(const json& j);
json to_json(const Sample& sample);

using CategorySet = std::set<int>;

struct AnnotationRecord {
  std::string sample_id;
  std::string annotator_id;
  CategorySet categories;  // empty = not a refusal
  std::string timestamp;   // RFC 3339

  bool is_refusal() const { return !categories.empty(); }
};

AnnotationRecord annotation_from_json(const json& j);
json to_json(const AnnotationRecord& record);

/// Samples plus their annotations, resolved latest-wins per
/// (sample, annotator). Immutable after construction.
class LabeledSet {
 public:
  LabeledSet() = default;
  /// Throws DanglingAnnotation for a record whose sample is absent, and
  /// UnknownCategory when `universe` is given and a label falls outside it.
  LabeledSet(std::vector<Sample> samples, std::vector<AnnotationRecord> annotations,
             const CategoryUniverse* universe = nullptr);

  const std::vector<Sample>& samples() const { return samples_; }
  const Sample* find(const std::string& id) const;

  /// Resolved annotations for one sample, ordered by annotator id.
  const std::vector<AnnotationRecord>& annotations(const std::string& sample_id) const;
  std::size_t annotation_count() const;

  /// Distinct annotator ids, ascending.
  const std::vector<std::string>& annotators() const { return roster_; }

 private:
  std::vector<Sample> samples_;
  std::unordered_map<std::string, std::size_t> index_;
  std::unordered_map<std::string, std::vector<AnnotationRecord>> by_sample_;
  std::vector<std::string> roster_;
};

std::vector<Sample> load_samples(const std::filesystem::path& path);
std::vector<AnnotationRecord> load_annotations(const std::filesystem::path& path);

/// Latest record per (sample, annotator); later timestamps win, file order
/// breaks timestamp ties.
std::vector<AnnotationRecord> resolve_latest(std::vector<AnnotationRecord> records);

LabeledSet load_corpus(const std::filesystem::path& samples_path,
                       const std::filesystem::path& annotations_path,
                       const CategoryUniverse* universe = nullptr);

/// 1 iff the share of positive flags reaches `tau`.
int refusal_decision(std::span<const bool> ratings, double tau = 0.5);

struct CategoryValidity {
  double proportion = 0.0;
  bool valid = false;
};

/// Share p_j of annotators whose set contains `category_id`, and p_j >= tau_c.
CategoryValidity category_validity(std::span<const CategorySet> labels, int category_id,
                                   double tau_c = 0.5);

/// Most frequent category across annotators; ties go to the lowest id.
/// Throws NoLabels when every set is empty.
int majority_label(std::span<const CategorySet> labels);

struct LengthStats {
  double mean = 0.0;
  double stddev = 0.0;  // population
};

struct Bigram {
  std::string first;
  std::string second;
  std::size_t count = 0;
};

struct DatasetReport {
  std::size_t sample_count = 0;
  std::size_t annotation_count = 0;
  LengthStats system_length;
  LengthStats input_length;
  LengthStats output_length;
  std::map<std::string, double> label_count_distribution;  // "0".."3", "4+"
  std::map<int, std::size_t> category_counts;
  std::vector<Bigram> top_bigrams;
};

LengthStats length_stats(std::span<const double> lengths);

/// Whitespace tokens, lowercased, stripped of edge punctuation.
std::vector<std::string> tokenize(std::string_view text);

std::vector<Bigram> top_bigrams(std::span<const std::string> texts, std::size_t k);

/// Throws EmptySet for a set without samples.
DatasetReport dataset_report(const LabeledSet& set, std::size_t top_k = 10);

json to_json(const DatasetReport& report, const TaxonomyTree* tree = nullptr);

}  // namespace refusal
