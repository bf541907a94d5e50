#pragma once

#include <cstdint>
#include <functional>
#include <map>
#include <string>
#include <vector>

#include "refusal/corpus.hpp"
#include "refusal/embedstore.hpp"
#include "refusal/provider.hpp"

namespace refusal {

enum class PhiMode { mean, weighted };

enum class VerifierMode { llm, accept_all, reject_all };

std::string_view to_string(VerifierMode mode);
VerifierMode parse_verifier_mode(std::string_view text);

struct CollectionConfig {
  int iterations = 1;
  std::size_t per_iteration = 200;
  double threshold = 0.55;
  PhiMode phi_mode = PhiMode::mean;
  // Per-id weights for PhiMode::weighted; ids without an entry weigh 1.
  std::map<std::string, double> weights;
  VerifierMode verifier = VerifierMode::accept_all;
  std::vector<std::string> seed_ids;
  // Draw n uniformly from the above-threshold pool instead of taking the top n.
  bool sample_random = false;
  std::uint64_t seed = 42;
  std::size_t max_parallel_requests = 4;
};

enum class Verdict { accept, reject };

/// Decides whether a candidate really is a refusal. Called concurrently.
using Verifier = std::function<Verdict(const Sample&)>;

struct CandidateDecision {
  std::string sample_id;
  double similarity = 0.0;
  Verdict verdict = Verdict::reject;
};

struct IterationLog {
  int iteration = 0;
  std::size_t pool_size = 0;  // candidates above threshold before truncation
  std::vector<CandidateDecision> decisions;
  std::size_t accepted_total = 0;
};

struct CollectionState {
  std::vector<std::string> accepted;  // R, seeds first, then in acceptance order
  std::vector<IterationLog> log;
};

/// Iterative similarity mining: each iteration recomputes the center from
/// all of R, takes the best unseen candidates above threshold, verifies
/// them and appends the survivors to R in candidate order.
CollectionState run_collection(const LabeledSet& corpus, const EmbeddingMatrix& matrix,
                               const CollectionConfig& config, const Verifier& verifier);

/// Fixed YES/NO verification prompt for one sample.
std::string verification_prompt(const Sample& sample);

/// Asks the model whether the output declines the instruction; re-asks up
/// to twice on an unparseable answer, then throws UnparseableVerdict.
Verdict verify_candidate(const Sample& sample, TextModel& model);

/// Leading YES/NO of a reply (case-insensitive, optional "Answer:"/"Verdict:").
std::optional<Verdict> parse_verdict(std::string_view reply);

Verifier make_verifier(VerifierMode mode, TextModel* model);

/// One JSON line per candidate decision.
std::vector<json> audit_rows(const CollectionState& state);

}  // namespace refusal
