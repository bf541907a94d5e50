#include "refusal/collect.hpp"

#include <algorithm>
#include <cctype>
#include <future>
#include <random>
#include <unordered_set>

#include "refusal/errors.hpp"

namespace refusal {

std::string_view to_string(VerifierMode mode) {
  switch (mode) {
    case VerifierMode::llm: return "llm";
    case VerifierMode::accept_all: return "accept_all";
    case VerifierMode::reject_all: return "reject_all";
  }
  return "accept_all";
}

VerifierMode parse_verifier_mode(std::string_view text) {
  if (text == "llm") return VerifierMode::llm;
  if (text == "accept_all") return VerifierMode::accept_all;
  if (text == "reject_all") return VerifierMode::reject_all;
  fail(ErrorKind::InvalidArgument, "unknown verifier '" + std::string(text) + "'");
}

CollectionState run_collection(const LabeledSet& corpus, const EmbeddingMatrix& matrix,
                               const CollectionConfig& config, const Verifier& verifier) {
  if (config.iterations < 1) fail(ErrorKind::InvalidArgument, "iterations must be at least 1");
  if (config.per_iteration < 1) fail(ErrorKind::InvalidArgument, "per-iteration count must be at least 1");
  if (config.seed_ids.empty()) fail(ErrorKind::SeedNotFound, "no seed ids given");

  for (const auto& s : corpus.samples()) matrix.index_of(s.id);

  CollectionState state;
  std::unordered_set<std::string> in_r;
  for (const auto& id : config.seed_ids) {
    if (!corpus.find(id)) fail(ErrorKind::SeedNotFound, "seed '" + id + "' is not in the corpus");
    if (in_r.insert(id).second) state.accepted.push_back(id);
  }

  // Only corpus members are eligible, even if the matrix holds more rows.
  std::unordered_set<std::string> excluded = in_r;
  for (const auto& id : matrix.ids()) {
    if (!corpus.find(id)) excluded.insert(id);
  }

  std::mt19937_64 rng(config.seed);
  for (int it = 1; it <= config.iterations; ++it) {
    const RowMatrix<float> rows = matrix.gather(state.accepted);
    Vector<double> center;
    if (config.phi_mode == PhiMode::weighted) {
      std::vector<double> w;
      w.reserve(state.accepted.size());
      for (const auto& id : state.accepted) {
        auto found = config.weights.find(id);
        w.push_back(found == config.weights.end() ? 1.0 : found->second);
      }
      center = representative_vector(rows, w);
    } else {
      center = representative_vector(rows);
    }

    auto pool = candidates_above(matrix, center, excluded, config.threshold);
    IterationLog log;
    log.iteration = it;
    log.pool_size = pool.size();
    if (config.sample_random && pool.size() > config.per_iteration) {
      std::vector<Candidate> picked;
      std::sample(pool.begin(), pool.end(), std::back_inserter(picked), config.per_iteration, rng);
      pool = std::move(picked);  // std::sample keeps relative order
    } else if (pool.size() > config.per_iteration) {
      pool.resize(config.per_iteration);
    }

    std::vector<Verdict> verdicts(pool.size(), Verdict::reject);
    const std::size_t parallel = std::max<std::size_t>(1, config.max_parallel_requests);
    for (std::size_t wave = 0; wave < pool.size(); wave += parallel) {
      const std::size_t end = std::min(pool.size(), wave + parallel);
      std::vector<std::future<Verdict>> inflight;
      for (std::size_t i = wave; i < end; ++i) {
        const Sample* sample = corpus.find(pool[i].id);
        inflight.push_back(std::async(parallel > 1 ? std::launch::async : std::launch::deferred,
                                      [&verifier, sample] { return verifier(*sample); }));
      }
      for (std::size_t i = wave; i < end; ++i) verdicts[i] = inflight[i - wave].get();
    }

    for (std::size_t i = 0; i < pool.size(); ++i) {
      log.decisions.push_back({pool[i].id, pool[i].similarity, verdicts[i]});
      if (verdicts[i] == Verdict::accept) {
        state.accepted.push_back(pool[i].id);
        in_r.insert(pool[i].id);
        excluded.insert(pool[i].id);
      }
    }
    log.accepted_total = state.accepted.size();
    state.log.push_back(std::move(log));
  }
  return state;
}

std::string verification_prompt(const Sample& sample) {
  std::string p;
  p += "You are auditing an instruction-tuning dataset for refusals.\n";
  p += "A refusal is an assistant reply that declines, or does not fully carry out, the user's instruction ";
  p += "(for any reason: policy, safety, missing capability, or missing information).\n\n";
  if (sample.system) p += "[SYSTEM]\n" + sample.system->content + "\n\n";
  for (const auto& m : sample.inputs) {
    p += "[" + std::string(to_string(m.role)) + "]\n" + m.content + "\n\n";
  }
  p += "[ASSISTANT REPLY UNDER REVIEW]\n" + sample.output.content + "\n\n";
  p += "Does the assistant reply refuse or fail to fully execute the instruction?\n";
  p += "Answer with exactly one word: YES or NO.";
  return p;
}

std::optional<Verdict> parse_verdict(std::string_view reply) {
  std::string s;
  for (char c : reply) s.push_back(static_cast<char>(std::toupper(static_cast<unsigned char>(c))));
  std::size_t pos = s.find_first_not_of(" \t\r\n*\"'`");
  if (pos == std::string::npos) return std::nullopt;
  for (std::string_view prefix : {"ANSWER:", "VERDICT:"}) {
    if (s.compare(pos, prefix.size(), prefix) == 0) {
      pos = s.find_first_not_of(" \t\r\n*\"'`", pos + prefix.size());
      if (pos == std::string::npos) return std::nullopt;
    }
  }
  auto word_at = [&](std::string_view w) {
    if (s.compare(pos, w.size(), w) != 0) return false;
    const std::size_t after = pos + w.size();
    return after == s.size() || !std::isalnum(static_cast<unsigned char>(s[after]));
  };
  if (word_at("YES")) return Verdict::accept;
  if (word_at("NO")) return Verdict::reject;
  return std::nullopt;
}

Verdict verify_candidate(const Sample& sample, TextModel& model) {
  constexpr int kAttempts = 3;
  const std::string prompt = verification_prompt(sample);
  std::string ask = prompt;
  std::string last;
  for (int attempt = 0; attempt < kAttempts; ++attempt) {
    last = model.complete(ask, 4);
    if (auto v = parse_verdict(last)) return *v;
    ask = prompt + "\n\nYour previous answer could not be read. Reply with only YES or NO.";
  }
  fail(ErrorKind::UnparseableVerdict, "sample " + sample.id + ": no YES/NO in reply '" + last.substr(0, 80) + "'");
}

Verifier make_verifier(VerifierMode mode, TextModel* model) {
  switch (mode) {
    case VerifierMode::accept_all: return [](const Sample&) { return Verdict::accept; };
    case VerifierMode::reject_all: return [](const Sample&) { return Verdict::reject; };
    case VerifierMode::llm:
      if (!model) fail(ErrorKind::InvalidArgument, "llm verifier needs a model");
      return [model](const Sample& s) { return verify_candidate(s, *model); };
  }
  fail(ErrorKind::InvalidArgument, "unknown verifier mode");
}

std::vector<json> audit_rows(const CollectionState& state) {
  std::vector<json> rows;
  for (const auto& it : state.log) {
    for (const auto& d : it.decisions) {
      rows.push_back(json{{"iteration", it.iteration},
                          {"sample_id", d.sample_id},
                          {"similarity", d.similarity},
                          {"decision", d.verdict == Verdict::accept ? "accept" : "reject"},
                          {"pool_size", it.pool_size}});
    }
  }
  return rows;
}

}  // namespace refusal
