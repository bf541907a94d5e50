#pragma once

#include <functional>
#include <map>
#include <optional>
#include <string>
#include <string_view>
#include <vector>

#include "refusal/io.hpp"
#include "refusal/provider.hpp"
#include "refusal/taxonomy.hpp"

namespace refusal {

/// Splits `budget` over `leaves`: everyone gets the floor share and the
/// first (budget mod |leaves|) leaves in ascending id order get one more.
/// Throws NoLeaves; InvalidArgument for a negative budget.
std::map<int, long long> allocate_counts(std::vector<int> leaves, long long budget);

struct GenerationPlan {
  long long per_category = 0;
  std::map<int, std::map<int, long long>> allocation;  // category -> leaf -> n_l
  std::map<int, long long> remainder;                  // category -> leftover handed out
  long long total() const;
};

GenerationPlan plan_generation(const TaxonomyTree& tree, long long per_category);

enum class VariationSide { input, output };

struct VariationKind {
  VariationSide side;
  std::string_view name;
  std::string_view instruction;
};

const std::vector<VariationKind>& input_variations();
const std::vector<VariationKind>& output_variations();
/// Throws UnknownKind.
const VariationKind& variation_kind(VariationSide side, std::string_view name);

inline constexpr std::string_view kShorterInputs = "Shorter Inputs";
inline constexpr std::string_view kExpand = "Expand";

/// The (input kind, output kind) pairs kept by the ultra assembly.
std::vector<std::pair<std::string_view, std::string_view>> ultra_combinations();

struct SyntheticRecord {
  std::string id;
  int leaf_id = 0;
  int category_id = 0;
  std::string input;
  std::string output;
  std::optional<std::string> input_variation;
  std::optional<std::string> output_variation;
  std::optional<std::string> parent_id;
};

json to_json(const SyntheticRecord& record);
SyntheticRecord synthetic_from_json(const json& j);

/// Prompt asking for `n` instructions the assistant should decline for the
/// reason the leaf describes.
std::string input_generation_prompt(const TaxonomyTree& tree, const CategoryPath& path, std::size_t n,
                                    const std::vector<std::string>& previous);

/// A JSON string array, or one item per (optionally numbered/bulleted) line.
std::vector<std::string> parse_generated_list(std::string_view reply);

/// `n` distinct inputs for the leaf at the end of `path`, ids "<leaf>-<k>"
/// counting from `first_index`. Throws InsufficientOutputs after 3 attempts.
std::vector<SyntheticRecord> generate_for_leaf(const TaxonomyTree& tree, const CategoryPath& path, std::size_t n,
                                               const std::vector<std::string>& previous, TextModel& model,
                                               std::size_t first_index = 0);

std::string output_generation_prompt(const TaxonomyTree& tree, const SyntheticRecord& record);

/// Fills every record's output in place. ProviderError messages name the
/// failing record.
void generate_outputs(std::vector<SyntheticRecord>& records, const TaxonomyTree& tree, TextModel& model);

std::string variation_prompt(const VariationKind& kind, const SyntheticRecord& record);

/// One child record per kind with the varied side rewritten.
std::vector<SyntheticRecord> apply_variations(const SyntheticRecord& record, VariationSide side,
                                              const std::vector<std::string>& kinds, TextModel& model);

struct VariantSet {
  SyntheticRecord base;
  std::vector<SyntheticRecord> input_variants;
  std::vector<SyntheticRecord> output_variants;
};

/// Streams the 69 combinations of every base pair to `sink`. Throws
/// MissingVariant when a base lacks any of its 14 + 5 variants.
void assemble_ultra(const std::vector<VariantSet>& sets, const std::function<void(SyntheticRecord)>& sink);
std::vector<SyntheticRecord> assemble_ultra(const std::vector<VariantSet>& sets);

/// Record count of an ultra dataset built from `base_pairs` pairs.
long long ultra_size(long long base_pairs);

}  // namespace refusal
