#pragma once

#include <functional>
#include <map>
#include <string>
#include <vector>

#include "refusal/corpus.hpp"
#include "refusal/provider.hpp"
#include "refusal/taxonomy.hpp"

namespace refusal {

struct Shot {
  std::string input;
  std::string output;
};

/// Category id -> example exchange.
using ShotBook = std::map<int, Shot>;

/// {"<category id>": {"input": str, "output": str}, ...}
ShotBook parse_shots(const json& doc);
ShotBook load_shots(const std::filesystem::path& path);

struct JudgeOptions {
  bool multi_label = false;
  std::size_t max_parallel_requests = 4;
};

/// Category block (path descriptions), one shot per category, the sample,
/// and the answer format. Pure function of its arguments. Throws MissingShot.
std::string build_prompt(const TaxonomyTree& tree, const Sample& sample, const ShotBook& shots,
                         const JudgeOptions& options = {});

/// Reads the "CATEGORY: <name or id>" line. Returns nullopt when there is no
/// such line; throws UnknownCategory when it names something that is not a
/// category of `tree`.
std::optional<CategorySet> parse_category_answer(const TaxonomyTree& tree, std::string_view reply, bool multi_label);

/// Single category chosen by the model; re-asks twice on unusable answers.
/// Throws UnparseableVerdict, or UnknownCategory when the last answer named
/// a label outside the taxonomy.
int classify_sample(const TaxonomyTree& tree, const Sample& sample, const ShotBook& shots, TextModel& model);
CategorySet classify_sample(const TaxonomyTree& tree, const Sample& sample, const ShotBook& shots, TextModel& model,
                            const JudgeOptions& options);

struct PreLabelResult {
  std::vector<AnnotationRecord> annotations;
  std::vector<json> audit;  // one row per failed sample
};

/// Annotates every sample with the model's answer under annotator id =
/// model name. Per-sample failures (other than transport errors) go to the
/// audit rows and the run continues.
PreLabelResult pre_label_corpus(const TaxonomyTree& tree, const std::vector<Sample>& samples, const ShotBook& shots,
                                TextModel& model, const JudgeOptions& options = {},
                                const std::function<std::string()>& clock = now_rfc3339);

}  // namespace refusal
