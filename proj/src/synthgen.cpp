#include "refusal/synthgen.hpp"

#include <algorithm>
#include <cctype>
#include <set>

#include "refusal/errors.hpp"

namespace refusal {

std::map<int, long long> allocate_counts(std::vector<int> leaves, long long budget) {
  if (leaves.empty()) fail(ErrorKind::NoLeaves, "cannot allocate over zero leaves");
  if (budget < 0) fail(ErrorKind::InvalidArgument, "negative budget");
  std::sort(leaves.begin(), leaves.end());
  leaves.erase(std::unique(leaves.begin(), leaves.end()), leaves.end());
  const auto count = static_cast<long long>(leaves.size());
  const long long share = budget / count;
  const long long rest = budget - share * count;
  std::map<int, long long> out;
  for (long long i = 0; i < count; ++i) out[leaves[static_cast<std::size_t>(i)]] = share + (i < rest ? 1 : 0);
  return out;
}

long long GenerationPlan::total() const {
  long long sum = 0;
  for (const auto& [cat, leaves] : allocation)
    for (const auto& [leaf, n] : leaves) sum += n;
  return sum;
}

GenerationPlan plan_generation(const TaxonomyTree& tree, long long per_category) {
  GenerationPlan plan;
  plan.per_category = per_category;
  for (int cat : tree.category_ids()) {
    const auto leaves = tree.leaves_under(cat);
    plan.allocation[cat] = allocate_counts(leaves, per_category);
    plan.remainder[cat] = per_category % static_cast<long long>(leaves.size());
  }
  return plan;
}

namespace {

const std::vector<VariationKind> kInputKinds = {
    {VariationSide::input, "Geographic Variation", "Move the request into a different country or region, changing place names, currencies and local details."},
    {VariationSide::input, "Shorter Inputs", "Make the request much shorter while keeping what is being asked."},
    {VariationSide::input, "Longer Inputs", "Make the request longer by adding background, detail and motivation."},
    {VariationSide::input, "Change Initiator", "Have the request come from a different kind of person, for example a student, a parent or a professional."},
    {VariationSide::input, "Create Chat History", "Prepend two or three short earlier turns of conversation that lead naturally into the request."},
    {VariationSide::input, "Change Verb in Instruction", "Replace the main verb of the instruction with a different one of similar intent."},
    {VariationSide::input, "Introduce Spelling Errors", "Introduce a few realistic typos and misspellings."},
    {VariationSide::input, "Use Slang", "Rewrite the request using casual slang."},
    {VariationSide::input, "Adjust Formality Level", "Change how formal the request sounds: make a casual request formal or a formal request casual."},
    {VariationSide::input, "Remove Question Form", "If the request is a question, turn it into a statement or command."},
    {VariationSide::input, "Use Euphemisms", "Refer to the sensitive parts of the request indirectly through euphemisms."},
    {VariationSide::input, "Flip Sentence Structure", "Reorder the clauses of the request so it reads with a different structure."},
    {VariationSide::input, "Imperative Tone", "Phrase the request as a direct order."},
    {VariationSide::input, "Remove Punctuation", "Remove all punctuation from the request."},
};

const std::vector<VariationKind> kOutputKinds = {
    {VariationSide::output, "Paraphrase", "Reword the reply while keeping its meaning and its refusal."},
    {VariationSide::output, "Soft Refusal", "Decline more gently, acknowledging the request and offering a safe alternative where one exists."},
    {VariationSide::output, "Shorten", "Make the reply as brief as possible while still declining."},
    {VariationSide::output, "Expand", "Make the reply longer, explaining the reason for declining in more detail."},
    {VariationSide::output, "More Empathetic", "Make the reply warmer and more understanding of the person asking."},
};

std::string trim(std::string_view s) {
  std::size_t b = 0, e = s.size();
  while (b < e && std::isspace(static_cast<unsigned char>(s[b]))) ++b;
  while (e > b && std::isspace(static_cast<unsigned char>(s[e - 1]))) --e;
  return std::string(s.substr(b, e - b));
}

void describe_path(std::string& p, const TaxonomyTree& tree, const CategoryPath& path) {
  for (std::size_t i = 0; i < path.size(); ++i) {
    const auto& node = tree.node(path[i]);
    p += std::string(i * 2, ' ') + "- " + node.name;
    if (!node.description.empty()) p += ": " + node.description;
    p += "\n";
  }
}

std::string side_text(const SyntheticRecord& r, VariationSide side) {
  return side == VariationSide::input ? r.input : r.output;
}

}  // namespace

const std::vector<VariationKind>& input_variations() { return kInputKinds; }
const std::vector<VariationKind>& output_variations() { return kOutputKinds; }

const VariationKind& variation_kind(VariationSide side, std::string_view name) {
  const auto& kinds = side == VariationSide::input ? kInputKinds : kOutputKinds;
  for (const auto& k : kinds)
    if (k.name == name) return k;
  fail(ErrorKind::UnknownKind, std::string(side == VariationSide::input ? "input" : "output") +
                                   " variation '" + std::string(name) + "'");
}

std::vector<std::pair<std::string_view, std::string_view>> ultra_combinations() {
  std::vector<std::pair<std::string_view, std::string_view>> out;
  for (const auto& in : kInputKinds)
    for (const auto& o : kOutputKinds)
      if (!(in.name == kShorterInputs && o.name == kExpand)) out.emplace_back(in.name, o.name);
  return out;
}

long long ultra_size(long long base_pairs) {
  return base_pairs * static_cast<long long>(ultra_combinations().size());
}

json to_json(const SyntheticRecord& r) {
  auto opt = [](const std::optional<std::string>& v) { return v ? json(*v) : json(nullptr); };
  return json{{"id", r.id},
              {"leaf_id", r.leaf_id},
              {"category_id", r.category_id},
              {"input", r.input},
              {"output", r.output},
              {"input_variation", opt(r.input_variation)},
              {"output_variation", opt(r.output_variation)},
              {"parent_id", opt(r.parent_id)}};
}

SyntheticRecord synthetic_from_json(const json& j) {
  try {
    SyntheticRecord r;
    r.id = j.at("id").get<std::string>();
    r.leaf_id = j.at("leaf_id").get<int>();
    r.category_id = j.at("category_id").get<int>();
    r.input = j.at("input").get<std::string>();
    r.output = j.value("output", std::string{});
    auto opt = [&](const char* key) -> std::optional<std::string> {
      if (!j.contains(key) || j[key].is_null()) return std::nullopt;
      return j[key].get<std::string>();
    };
    r.input_variation = opt("input_variation");
    r.output_variation = opt("output_variation");
    r.parent_id = opt("parent_id");
    return r;
  } catch (const json::exception& e) {
    fail(ErrorKind::Parse, std::string("synthetic record: ") + e.what());
  }
}

std::string input_generation_prompt(const TaxonomyTree& tree, const CategoryPath& path, std::size_t n,
                                    const std::vector<std::string>& previous) {
  std::string p;
  p += "We are building training data for recognising why an AI assistant declines a request.\n";
  p += "The refusal reason is the last entry of this category path (each entry refines the one above):\n";
  describe_path(p, tree, path);
  p += "\nWrite " + std::to_string(n) + " different user instructions that an assistant should decline ";
  p += "for exactly this reason. Vary topic, length and wording.\n";
  if (!previous.empty()) {
    p += "\nDo not repeat these earlier examples:\n";
    for (const auto& ex : previous) p += "- " + ex + "\n";
  }
  p += "\nReturn a JSON array of " + std::to_string(n) + " strings and nothing else.";
  return p;
}

std::vector<std::string> parse_generated_list(std::string_view reply) {
  std::vector<std::string> out;
  const std::string text = trim(reply);
  const auto open = text.find('[');
  const auto close = text.rfind(']');
  if (open != std::string::npos && close != std::string::npos && close > open) {
    try {
      const json arr = json::parse(text.substr(open, close - open + 1));
      if (arr.is_array()) {
        for (const auto& item : arr) {
          if (!item.is_string()) continue;
          auto s = trim(item.get<std::string>());
          if (!s.empty()) out.push_back(std::move(s));
        }
        return out;
      }
    } catch (const json::parse_error&) {
      // fall through to line parsing
    }
  }
  std::size_t start = 0;
  while (start <= text.size()) {
    auto end = text.find('\n', start);
    if (end == std::string::npos) end = text.size();
    std::string line = trim(std::string_view(text).substr(start, end - start));
    start = end + 1;
    std::size_t i = 0;
    while (i < line.size() && std::isdigit(static_cast<unsigned char>(line[i]))) ++i;
    if (i > 0 && i < line.size() && (line[i] == '.' || line[i] == ')')) {
      line = trim(std::string_view(line).substr(i + 1));
    } else if (!line.empty() && (line[0] == '-' || line[0] == '*')) {
      line = trim(std::string_view(line).substr(1));
    }
    if (line.size() >= 2 && line.front() == '"' && line.back() == '"') line = line.substr(1, line.size() - 2);
    if (!line.empty()) out.push_back(std::move(line));
  }
  return out;
}

std::vector<SyntheticRecord> generate_for_leaf(const TaxonomyTree& tree, const CategoryPath& path, std::size_t n,
                                               const std::vector<std::string>& previous, TextModel& model,
                                               std::size_t first_index) {
  if (n == 0) fail(ErrorKind::InvalidArgument, "generation count must be at least 1");
  if (path.empty()) fail(ErrorKind::InvalidArgument, "empty category path");
  const int leaf = path.back();
  const auto category = tree.category_of(leaf);
  if (!category) fail(ErrorKind::UnknownCategory, "node " + std::to_string(leaf) + " has no category ancestor");

  std::set<std::string> seen(previous.begin(), previous.end());
  std::vector<std::string> fresh;
  constexpr int kAttempts = 3;
  for (int attempt = 0; attempt < kAttempts && fresh.size() < n; ++attempt) {
    std::vector<std::string> context = previous;
    context.insert(context.end(), fresh.begin(), fresh.end());
    const auto items = parse_generated_list(model.complete(input_generation_prompt(tree, path, n - fresh.size(), context), 2048));
    for (const auto& item : items) {
      if (fresh.size() == n) break;
      if (seen.insert(item).second) fresh.push_back(item);
    }
  }
  if (fresh.size() < n) {
    fail(ErrorKind::InsufficientOutputs, "leaf " + std::to_string(leaf) + ": " + std::to_string(fresh.size()) +
                                             " distinct inputs of " + std::to_string(n) + " after " +
                                             std::to_string(kAttempts) + " attempts");
  }
  std::vector<SyntheticRecord> out;
  for (std::size_t i = 0; i < n; ++i) {
    SyntheticRecord r;
    r.id = std::to_string(leaf) + "-" + std::to_string(first_index + i);
    r.leaf_id = leaf;
    r.category_id = *category;
    r.input = fresh[i];
    out.push_back(std::move(r));
  }
  return out;
}

std::string output_generation_prompt(const TaxonomyTree& tree, const SyntheticRecord& record) {
  std::string p;
  p += "Write the reply of an AI assistant that declines the user instruction below.\n";
  p += "The reply must decline for the reason given by the last entry of this category path:\n";
  describe_path(p, tree, tree.path_to(record.leaf_id));
  p += "\nUser instruction:\n" + record.input + "\n\n";
  p += "Return only the assistant's reply.";
  return p;
}

void generate_outputs(std::vector<SyntheticRecord>& records, const TaxonomyTree& tree, TextModel& model) {
  for (auto& r : records) {
    if (r.input.empty()) fail(ErrorKind::InvalidArgument, "record " + r.id + " has no input");
    try {
      r.output = trim(model.complete(output_generation_prompt(tree, r), 1024));
    } catch (const Error& e) {
      if (e.kind() != ErrorKind::Provider) throw;
      fail(ErrorKind::Provider, "record " + r.id + ": " + e.what());
    }
    if (r.output.empty()) fail(ErrorKind::InsufficientOutputs, "record " + r.id + ": empty output");
  }
}

std::string variation_prompt(const VariationKind& kind, const SyntheticRecord& record) {
  std::string p;
  if (kind.side == VariationSide::input) {
    p += "Rewrite the user instruction below. " + std::string(kind.instruction) + "\n";
    p += "Keep the request itself the same.\n\nInstruction:\n" + record.input + "\n\n";
    p += "Return only the rewritten instruction.";
  } else {
    p += "Rewrite the assistant reply below. " + std::string(kind.instruction) + "\n";
    p += "It must still decline the instruction.\n\nInstruction:\n" + record.input + "\n\nReply:\n" + record.output + "\n\n";
    p += "Return only the rewritten reply.";
  }
  return p;
}

std::vector<SyntheticRecord> apply_variations(const SyntheticRecord& record, VariationSide side,
                                              const std::vector<std::string>& kinds, TextModel& model) {
  std::vector<const VariationKind*> resolved;
  for (const auto& k : kinds) resolved.push_back(&variation_kind(side, k));
  if (side_text(record, side).empty()) {
    fail(ErrorKind::InvalidArgument, "record " + record.id + " has no text on the varied side");
  }
  std::vector<SyntheticRecord> out;
  for (const auto* kind : resolved) {
    SyntheticRecord child = record;
    child.parent_id = record.id;
    child.input_variation.reset();
    child.output_variation.reset();
    std::string text = trim(model.complete(variation_prompt(*kind, record), 1024));
    if (side == VariationSide::input) {
      child.input = std::move(text);
      child.input_variation = std::string(kind->name);
      child.id = record.id + "~in:" + std::string(kind->name);
    } else {
      child.output = std::move(text);
      child.output_variation = std::string(kind->name);
      child.id = record.id + "~out:" + std::string(kind->name);
    }
    out.push_back(std::move(child));
  }
  return out;
}

void assemble_ultra(const std::vector<VariantSet>& sets, const std::function<void(SyntheticRecord)>& sink) {
  const auto combos = ultra_combinations();
  for (const auto& set : sets) {
    std::map<std::string_view, const SyntheticRecord*> ins, outs;
    for (const auto& r : set.input_variants)
      if (r.input_variation) ins[*r.input_variation] = &r;
    for (const auto& r : set.output_variants)
      if (r.output_variation) outs[*r.output_variation] = &r;
    for (const auto& k : kInputKinds)
      if (!ins.count(k.name)) fail(ErrorKind::MissingVariant, set.base.id + " lacks input variant '" + std::string(k.name) + "'");
    for (const auto& k : kOutputKinds)
      if (!outs.count(k.name)) fail(ErrorKind::MissingVariant, set.base.id + " lacks output variant '" + std::string(k.name) + "'");

    for (const auto& [in_kind, out_kind] : combos) {
      SyntheticRecord r = set.base;
      r.id = set.base.id + "~" + std::string(in_kind) + "|" + std::string(out_kind);
      r.input = ins[in_kind]->input;
      r.output = outs[out_kind]->output;
      r.input_variation = std::string(in_kind);
      r.output_variation = std::string(out_kind);
      r.parent_id = set.base.id;
      sink(std::move(r));
    }
  }
}

std::vector<SyntheticRecord> assemble_ultra(const std::vector<VariantSet>& sets) {
  std::vector<SyntheticRecord> out;
  assemble_ultra(sets, [&](SyntheticRecord r) { out.push_back(std::move(r)); });
  return out;
}

}  // namespace refusal
