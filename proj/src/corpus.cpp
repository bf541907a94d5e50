#include "refusal/corpus.hpp"

#include <algorithm>
#include <cctype>
#include <cmath>

#include "refusal/errors.hpp"

namespace refusal {

std::string_view to_string(Role role) {
  switch (role) {
    case Role::system: return "system";
    case Role::user: return "user";
    case Role::assistant: return "assistant";
  }
  return "user";
}

Role parse_role(std::string_view text) {
  if (text == "system") return Role::system;
  if (text == "user") return Role::user;
  if (text == "assistant") return Role::assistant;
  fail(ErrorKind::Parse, "unknown message role '" + std::string(text) + "'");
}

std::string Sample::input_text() const {
  std::string out;
  for (const auto& m : inputs) {
    if (!out.empty()) out += '\n';
    out += m.content;
  }
  return out;
}

void validate(const Sample& s) {
  if (s.id.empty()) fail(ErrorKind::Parse, "sample without id");
  if (s.inputs.empty()) fail(ErrorKind::Parse, "sample " + s.id + " has no input messages");
  if (s.inputs.back().role != Role::user) fail(ErrorKind::Parse, "sample " + s.id + ": last input must come from the user");
  if (s.output.role != Role::assistant) fail(ErrorKind::Parse, "sample " + s.id + ": output must be an assistant message");
  if (s.system && s.system->role != Role::system) fail(ErrorKind::Parse, "sample " + s.id + ": system message has the wrong role");
  for (const auto& m : s.inputs) {
    if (m.content.empty()) fail(ErrorKind::Parse, "sample " + s.id + ": empty input message");
  }
  if (s.output.content.empty()) fail(ErrorKind::Parse, "sample " + s.id + ": empty output");
}

namespace {

Message message_from_json(const json& j) {
  return Message{parse_role(j.at("role").get<std::string>()), j.at("content").get<std::string>()};
}

json message_to_json(const Message& m) {
  return json{{"role", std::string(to_string(m.role))}, {"content", m.content}};
}

}  // namespace

Sample sample_from_json(const json& j) {
  Sample s;
  try {
    s.id = j.at("id").get<std::string>();
    if (j.contains("system") && !j["system"].is_null()) {
      // Accept the plain-string form and a full message object.
      if (j["system"].is_string()) {
        s.system = Message{Role::system, j["system"].get<std::string>()};
      } else {
        s.system = message_from_json(j["system"]);
      }
    }
    for (const auto& m : j.at("messages")) s.inputs.push_back(message_from_json(m));
    s.output = message_from_json(j.at("output"));
    s.source = j.value("source", std::string{});
  } catch (const json::exception& e) {
    fail(ErrorKind::Parse, std::string("bad sample: ") + e.what());
  }
  validate(s);
  return s;
}

json to_json(const Sample& s) {
  json messages = json::array();
  for (const auto& m : s.inputs) messages.push_back(message_to_json(m));
  return json{{"id", s.id},
              {"system", s.system ? json(s.system->content) : json(nullptr)},
              {"messages", std::move(messages)},
              {"output", message_to_json(s.output)},
              {"source", s.source}};
}

AnnotationRecord annotation_from_json(const json& j) {
  AnnotationRecord r;
  try {
    r.sample_id = j.at("sample_id").get<std::string>();
    r.annotator_id = j.at("annotator_id").get<std::string>();
    for (const auto& c : j.at("categories")) {
      if (!r.categories.insert(c.get<int>()).second) {
        fail(ErrorKind::Parse, "duplicate category in annotation for " + r.sample_id);
      }
    }
    r.timestamp = j.value("timestamp", std::string{});
  } catch (const json::exception& e) {
    fail(ErrorKind::Parse, std::string("bad annotation: ") + e.what());
  }
  return r;
}

json to_json(const AnnotationRecord& r) {
  return json{{"sample_id", r.sample_id},
              {"annotator_id", r.annotator_id},
              {"categories", std::vector<int>(r.categories.begin(), r.categories.end())},
              {"timestamp", r.timestamp}};
}

std::vector<AnnotationRecord> resolve_latest(std::vector<AnnotationRecord> records) {
  std::map<std::pair<std::string, std::string>, AnnotationRecord> latest;
  for (auto& r : records) {
    auto key = std::make_pair(r.sample_id, r.annotator_id);
    auto it = latest.find(key);
    // RFC 3339 UTC stamps order lexicographically.
    if (it == latest.end() || r.timestamp >= it->second.timestamp) {
      latest.insert_or_assign(std::move(key), std::move(r));
    }
  }
  std::vector<AnnotationRecord> out;
  out.reserve(latest.size());
  for (auto& [key, r] : latest) out.push_back(std::move(r));
  return out;
}

LabeledSet::LabeledSet(std::vector<Sample> samples, std::vector<AnnotationRecord> annotations,
                       const CategoryUniverse* universe)
    : samples_(std::move(samples)) {
  for (std::size_t i = 0; i < samples_.size(); ++i) {
    if (!index_.emplace(samples_[i].id, i).second) {
      fail(ErrorKind::Parse, "duplicate sample id " + samples_[i].id);
    }
  }
  std::set<std::string> roster;
  for (auto& r : resolve_latest(std::move(annotations))) {
    if (!index_.count(r.sample_id)) {
      fail(ErrorKind::DanglingAnnotation, "annotation by " + r.annotator_id + " references unknown sample '" + r.sample_id + "'");
    }
    if (universe) {
      for (int c : r.categories) {
        if (!universe->contains(c)) {
          fail(ErrorKind::UnknownCategory, "annotation for " + r.sample_id + " uses category " + std::to_string(c));
        }
      }
    }
    roster.insert(r.annotator_id);
    by_sample_[r.sample_id].push_back(std::move(r));
  }
  roster_.assign(roster.begin(), roster.end());
}

const Sample* LabeledSet::find(const std::string& id) const {
  auto it = index_.find(id);
  return it == index_.end() ? nullptr : &samples_[it->second];
}

const std::vector<AnnotationRecord>& LabeledSet::annotations(const std::string& sample_id) const {
  static const std::vector<AnnotationRecord> kEmpty;
  auto it = by_sample_.find(sample_id);
  return it == by_sample_.end() ? kEmpty : it->second;
}

std::size_t LabeledSet::annotation_count() const {
  std::size_t n = 0;
  for (const auto& [id, recs] : by_sample_) n += recs.size();
  return n;
}

std::vector<Sample> load_samples(const std::filesystem::path& path) {
  std::vector<Sample> out;
  for (const auto& row : read_jsonl(path)) out.push_back(sample_from_json(row));
  return out;
}

std::vector<AnnotationRecord> load_annotations(const std::filesystem::path& path) {
  std::vector<AnnotationRecord> out;
  for (const auto& row : read_jsonl(path)) out.push_back(annotation_from_json(row));
  return out;
}

LabeledSet load_corpus(const std::filesystem::path& samples_path,
                       const std::filesystem::path& annotations_path,
                       const CategoryUniverse* universe) {
  return LabeledSet(load_samples(samples_path), load_annotations(annotations_path), universe);
}

int refusal_decision(std::span<const bool> ratings, double tau) {
  if (ratings.empty()) fail(ErrorKind::EmptyRatings, "refusal decision needs at least one rating");
  const auto positive = std::count(ratings.begin(), ratings.end(), true);
  const double share = static_cast<double>(positive) / static_cast<double>(ratings.size());
  return share >= tau ? 1 : 0;
}

CategoryValidity category_validity(std::span<const CategorySet> labels, int category_id, double tau_c) {
  if (labels.empty()) fail(ErrorKind::EmptyRatings, "category validity needs at least one annotator");
  const auto hits = std::count_if(labels.begin(), labels.end(),
                                  [&](const CategorySet& s) { return s.count(category_id) != 0; });
  CategoryValidity v;
  v.proportion = static_cast<double>(hits) / static_cast<double>(labels.size());
  v.valid = v.proportion >= tau_c;
  return v;
}

int majority_label(std::span<const CategorySet> labels) {
  std::map<int, int> counts;
  for (const auto& set : labels) {
    for (int c : set) ++counts[c];
  }
  if (counts.empty()) fail(ErrorKind::NoLabels, "no annotator assigned a category");
  // std::map iterates ascending, so the first strict maximum is the lowest id.
  auto best = counts.begin();
  for (auto it = counts.begin(); it != counts.end(); ++it) {
    if (it->second > best->second) best = it;
  }
  return best->first;
}

LengthStats length_stats(std::span<const double> lengths) {
  LengthStats s;
  if (lengths.empty()) return s;
  double sum = 0.0;
  for (double v : lengths) sum += v;
  s.mean = sum / static_cast<double>(lengths.size());
  double sq = 0.0;
  for (double v : lengths) sq += (v - s.mean) * (v - s.mean);
  s.stddev = std::sqrt(sq / static_cast<double>(lengths.size()));
  return s;
}

std::vector<std::string> tokenize(std::string_view text) {
  std::vector<std::string> tokens;
  std::size_t i = 0;
  while (i < text.size()) {
    while (i < text.size() && std::isspace(static_cast<unsigned char>(text[i]))) ++i;
    std::size_t j = i;
    while (j < text.size() && !std::isspace(static_cast<unsigned char>(text[j]))) ++j;
    std::string_view word = text.substr(i, j - i);
    auto is_edge = [](char c) {
      return std::ispunct(static_cast<unsigned char>(c)) && c != '\'';
    };
    while (!word.empty() && is_edge(word.front())) word.remove_prefix(1);
    while (!word.empty() && is_edge(word.back())) word.remove_suffix(1);
    if (!word.empty()) {
      std::string t(word);
      for (char& c : t) c = static_cast<char>(std::tolower(static_cast<unsigned char>(c)));
      tokens.push_back(std::move(t));
    }
    i = j;
  }
  return tokens;
}

std::vector<Bigram> top_bigrams(std::span<const std::string> texts, std::size_t k) {
  std::map<std::pair<std::string, std::string>, std::size_t> counts;
  for (const auto& text : texts) {
    const auto tokens = tokenize(text);
    for (std::size_t i = 1; i < tokens.size(); ++i) ++counts[{tokens[i - 1], tokens[i]}];
  }
  std::vector<Bigram> all;
  all.reserve(counts.size());
  for (const auto& [pair, n] : counts) all.push_back({pair.first, pair.second, n});
  std::stable_sort(all.begin(), all.end(),
                   [](const Bigram& a, const Bigram& b) { return a.count > b.count; });
  if (all.size() > k) all.resize(k);
  return all;
}

DatasetReport dataset_report(const LabeledSet& set, std::size_t top_k) {
  if (set.samples().empty()) fail(ErrorKind::EmptySet, "dataset report over an empty set");
  DatasetReport r;
  r.sample_count = set.samples().size();

  std::vector<double> sys, in, out;
  std::vector<std::string> outputs;
  for (const auto& s : set.samples()) {
    sys.push_back(s.system ? static_cast<double>(utf8_length(s.system->content)) : 0.0);
    in.push_back(static_cast<double>(utf8_length(s.input_text())));
    out.push_back(static_cast<double>(utf8_length(s.output.content)));
    outputs.push_back(s.output.content);
  }
  r.system_length = length_stats(sys);
  r.input_length = length_stats(in);
  r.output_length = length_stats(out);

  std::map<std::string, std::size_t> buckets;
  for (const auto& s : set.samples()) {
    for (const auto& a : set.annotations(s.id)) {
      ++r.annotation_count;
      const auto n = a.categories.size();
      ++buckets[n >= 4 ? std::string("4+") : std::to_string(n)];
      for (int c : a.categories) ++r.category_counts[c];
    }
  }
  for (const auto& [key, n] : buckets) {
    r.label_count_distribution[key] = static_cast<double>(n) / static_cast<double>(r.annotation_count);
  }
  r.top_bigrams = top_bigrams(outputs, top_k);
  return r;
}

json to_json(const DatasetReport& r, const TaxonomyTree* tree) {
  auto stats = [](const LengthStats& s) { return json{{"mean", s.mean}, {"stddev", s.stddev}}; };
  json cats = json::object();
  for (const auto& [id, n] : r.category_counts) {
    json entry{{"count", n}};
    if (tree && (id == kNotARefusal || tree->contains(id))) entry["name"] = category_name(*tree, id);
    cats[std::to_string(id)] = std::move(entry);
  }
  json bigrams = json::array();
  for (const auto& b : r.top_bigrams) bigrams.push_back(json{{"bigram", {b.first, b.second}}, {"count", b.count}});
  return json{{"samples", r.sample_count},
              {"annotations", r.annotation_count},
              {"length_chars", {{"system", stats(r.system_length)},
                                {"input", stats(r.input_length)},
                                {"output", stats(r.output_length)}}},
              {"label_count_distribution", r.label_count_distribution},
              {"category_counts", std::move(cats)},
              {"top_output_bigrams", std::move(bigrams)}};
}

}  // namespace refusal
