#include "refusal/cli.hpp"

#include <algorithm>
#include <atomic>
#include <csignal>
#include <cstdlib>
#include <fstream>
#include <memory>
#include <sstream>

#include <CLI11.hpp>

#include "refusal/annotate.hpp"
#include "refusal/classifier.hpp"
#include "refusal/collect.hpp"
#include "refusal/corpus.hpp"
#include "refusal/embedstore.hpp"
#include "refusal/errors.hpp"
#include "refusal/judge.hpp"
#include "refusal/metrics.hpp"
#include "refusal/provider.hpp"
#include "refusal/synthgen.hpp"
#include "refusal/taxonomy.hpp"

namespace refusal::cli {

namespace {

namespace fs = std::filesystem;

enum class Level { error = 0, warn = 1, info = 2, debug = 3 };

struct Globals {
  std::uint64_t seed = 42;
  std::string taxonomy = std::string(REFUSAL_DATA_DIR) + "/taxonomy.json";
  std::string log_level = "warn";
};

class Log {
 public:
  Log(std::ostream& err, Level level) : err_(err), level_(level) {}
  void warn(const std::string& m) const { emit(Level::warn, "warning", m); }
  void info(const std::string& m) const { emit(Level::info, "info", m); }
  void debug(const std::string& m) const { emit(Level::debug, "debug", m); }

 private:
  void emit(Level l, const char* tag, const std::string& m) const {
    if (l <= level_) err_ << tag << ": " << m << "\n";
  }
  std::ostream& err_;
  Level level_;
};

Level parse_level(const std::string& s) {
  if (s == "error") return Level::error;
  if (s == "warn") return Level::warn;
  if (s == "info") return Level::info;
  if (s == "debug") return Level::debug;
  fail(ErrorKind::InvalidArgument, "unknown log level '" + s + "'");
}

// Records what a run read and wrote; saved as <primary output>.manifest.json.
class Manifest {
 public:
  Manifest(std::string subcommand, const Globals& g) : started_(now_rfc3339()) {
    doc_["subcommand"] = std::move(subcommand);
    doc_["seed"] = g.seed;
    doc_["taxonomy"] = g.taxonomy;
    doc_["version"] = kVersion;
    doc_["config"] = json::object();
    doc_["inputs"] = json::array();
    doc_["outputs"] = json::array();
  }
  template <typename T>
  void config(const std::string& key, const T& value) { doc_["config"][key] = value; }
  void input(const std::string& path) { if (!path.empty()) doc_["inputs"].push_back(path); }
  void output(const std::string& path) { if (!path.empty()) doc_["outputs"].push_back(path); }
  void write(const std::string& primary) {
    doc_["started"] = started_;
    doc_["finished"] = now_rfc3339();
    write_text_file(primary + ".manifest.json", dump_report(doc_));
  }

 private:
  std::string started_;
  json doc_;
};

std::vector<std::string> read_id_lines(const fs::path& path) {
  std::vector<std::string> ids;
  std::istringstream in(read_text_file(path));
  std::string line;
  while (std::getline(in, line)) {
    while (!line.empty() && (line.back() == '\r' || line.back() == ' ')) line.pop_back();
    if (!line.empty() && line.front() != '#') ids.push_back(line);
  }
  return ids;
}

void write_id_lines(const fs::path& path, const std::vector<std::string>& ids) {
  std::string out;
  for (const auto& id : ids) out += id + "\n";
  write_text_file(path, out);
}

double parse_double(const std::string& text, const char* what) {
  char* end = nullptr;
  const double v = std::strtod(text.c_str(), &end);
  if (text.empty() || end != text.c_str() + text.size()) {
    fail(ErrorKind::InvalidArgument, std::string(what) + ": '" + text + "' is not a number");
  }
  return v;
}

// Replayed responses when a file is given, otherwise the HTTP endpoint.
std::unique_ptr<TextModel> make_text_model(const std::string& replay) {
  if (!replay.empty()) return std::make_unique<ReplayModel>(read_jsonl(replay));
  return std::make_unique<HttpTextModel>(HttpTextModel::from_env());
}

std::vector<AnnotationRecord> filter_annotators(std::vector<AnnotationRecord> records,
                                                const std::vector<std::string>& exclude,
                                                const std::vector<std::string>& only) {
  std::erase_if(records, [&](const AnnotationRecord& r) {
    if (std::find(exclude.begin(), exclude.end(), r.annotator_id) != exclude.end()) return true;
    return !only.empty() && std::find(only.begin(), only.end(), r.annotator_id) == only.end();
  });
  return records;
}

// Agreement only needs ids, so a run without --samples gets stub samples.
LabeledSet labeled_set(const std::string& samples_path, std::vector<AnnotationRecord> records,
                       const CategoryUniverse& universe) {
  std::vector<Sample> samples;
  if (!samples_path.empty()) {
    samples = load_samples(samples_path);
  } else {
    std::set<std::string> ids;
    for (const auto& r : records) ids.insert(r.sample_id);
    for (const auto& id : ids) {
      Sample s;
      s.id = id;
      samples.push_back(std::move(s));
    }
  }
  return LabeledSet(std::move(samples), std::move(records), &universe);
}

struct CollectArgs {
  std::string samples, embeddings, seeds, out, audit, verifier = "accept_all", phi = "mean", weights, replay;
  std::string threshold = "0.55";
  int k = 1;
  std::size_t n = 200;
  std::size_t parallel = 4;
  bool sample_random = false;
};

int cmd_collect(const CollectArgs& a, const Globals& g, const Log& log) {
  Manifest m("collect", g);
  const auto samples = load_samples(a.samples);
  LabeledSet corpus(samples, {});
  const auto matrix = load_embeddings(a.embeddings);
  CollectionConfig cfg;
  cfg.iterations = a.k;
  cfg.per_iteration = a.n;
  cfg.threshold = parse_double(a.threshold, "--threshold");
  cfg.verifier = parse_verifier_mode(a.verifier);
  cfg.seed_ids = read_id_lines(a.seeds);
  cfg.sample_random = a.sample_random;
  cfg.seed = g.seed;
  cfg.max_parallel_requests = a.parallel;
  if (a.phi == "weighted") {
    cfg.phi_mode = PhiMode::weighted;
    if (a.weights.empty()) fail(ErrorKind::InvalidArgument, "--phi weighted needs --weights");
    cfg.weights = read_json_file(a.weights).get<std::map<std::string, double>>();
  } else if (a.phi != "mean") {
    fail(ErrorKind::InvalidArgument, "--phi must be mean or weighted");
  }

  std::unique_ptr<TextModel> model;
  std::unique_ptr<RecordingModel> recorder;
  if (cfg.verifier == VerifierMode::llm) {
    model = make_text_model(a.replay);
    recorder = std::make_unique<RecordingModel>(*model);
  }
  const auto state = run_collection(corpus, matrix, cfg, make_verifier(cfg.verifier, recorder.get()));
  for (const auto& it : state.log) {
    log.info("iteration " + std::to_string(it.iteration) + ": pool " + std::to_string(it.pool_size) + ", |R| = " +
             std::to_string(it.accepted_total));
  }
  write_id_lines(a.out, state.accepted);
  auto rows = audit_rows(state);
  if (recorder) {
    for (auto& ex : recorder->exchanges()) rows.push_back(std::move(ex));
  }
  write_jsonl(a.audit, rows);

  m.config("k", a.k);
  m.config("n", a.n);
  m.config("threshold", a.threshold);
  m.config("verifier", a.verifier);
  m.config("phi", a.phi);
  m.config("sample_random", a.sample_random);
  for (const auto& p : {a.samples, a.embeddings, a.seeds, a.weights, a.replay}) m.input(p);
  m.output(a.out);
  m.output(a.audit);
  m.write(a.out);
  return 0;
}

struct GenerateArgs {
  long long per_category = 8000;
  std::string out, plan, replay, ultra_out, audit;
  bool variations = false;
  bool plan_only = false;
  std::size_t request_size = 20;
};

int cmd_generate(const GenerateArgs& a, const Globals& g, const TaxonomyTree& tree, const Log& log) {
  Manifest m("generate", g);
  const auto plan = plan_generation(tree, a.per_category);
  json plan_doc{{"per_category", plan.per_category}, {"total", plan.total()},
                {"ultra_total", ultra_size(plan.total())},
                {"ultra_per_pair", ultra_combinations().size()}};
  for (const auto& [cat, leaves] : plan.allocation) {
    json alloc = json::object();
    for (const auto& [leaf, n] : leaves) alloc[std::to_string(leaf)] = n;
    plan_doc["allocation"][std::to_string(cat)] = alloc;
    plan_doc["remainder"][std::to_string(cat)] = plan.remainder.at(cat);
  }
  if (!a.plan.empty()) write_text_file(a.plan, dump_report(plan_doc));
  m.config("per_category", a.per_category);
  m.config("variations", a.variations);
  m.config("plan_only", a.plan_only);
  m.input(a.replay);
  m.output(a.plan);
  if (a.plan_only) {
    if (a.plan.empty()) fail(ErrorKind::InvalidArgument, "--plan-only needs --plan");
    m.write(a.plan);
    return 0;
  }
  if (a.out.empty()) fail(ErrorKind::InvalidArgument, "--out is required unless --plan-only is given");

  auto inner = make_text_model(a.replay);
  RecordingModel model(*inner);
  std::vector<SyntheticRecord> base;
  for (const auto& [cat, leaves] : plan.allocation) {
    for (const auto& [leaf, n] : leaves) {
      const auto path = tree.path_to(leaf);
      std::vector<std::string> previous;
      std::vector<SyntheticRecord> leaf_records;
      for (long long made = 0; made < n;) {
        const auto chunk = static_cast<std::size_t>(std::min<long long>(static_cast<long long>(a.request_size), n - made));
        // Recent examples only; the whole history would not fit a prompt.
        std::vector<std::string> recent(previous.size() > 10 ? previous.end() - 10 : previous.begin(), previous.end());
        auto recs = generate_for_leaf(tree, path, chunk, recent, model, static_cast<std::size_t>(made));
        for (const auto& r : recs) previous.push_back(r.input);
        leaf_records.insert(leaf_records.end(), recs.begin(), recs.end());
        made += static_cast<long long>(chunk);
      }
      generate_outputs(leaf_records, tree, model);
      log.info("leaf " + std::to_string(leaf) + ": " + std::to_string(leaf_records.size()) + " records");
      base.insert(base.end(), leaf_records.begin(), leaf_records.end());
    }
  }

  std::vector<json> rows;
  std::vector<VariantSet> sets;
  for (const auto& r : base) rows.push_back(to_json(r));
  if (a.variations) {
    std::vector<std::string> in_kinds, out_kinds;
    for (const auto& k : input_variations()) in_kinds.emplace_back(k.name);
    for (const auto& k : output_variations()) out_kinds.emplace_back(k.name);
    for (const auto& r : base) {
      VariantSet set{r, apply_variations(r, VariationSide::input, in_kinds, model),
                     apply_variations(r, VariationSide::output, out_kinds, model)};
      for (const auto& v : set.input_variants) rows.push_back(to_json(v));
      for (const auto& v : set.output_variants) rows.push_back(to_json(v));
      sets.push_back(std::move(set));
    }
  }
  write_jsonl(a.out, rows);
  m.output(a.out);
  if (!a.ultra_out.empty()) {
    if (!a.variations) fail(ErrorKind::InvalidArgument, "--ultra-out needs --variations");
    std::ofstream out(a.ultra_out, std::ios::binary | std::ios::trunc);
    if (!out) fail(ErrorKind::Io, "cannot write " + a.ultra_out);
    assemble_ultra(sets, [&](SyntheticRecord r) { out << to_json(r).dump() << '\n'; });
    if (!out) fail(ErrorKind::Io, "short write to " + a.ultra_out);
    m.output(a.ultra_out);
  }
  if (!a.audit.empty()) {
    write_jsonl(a.audit, model.exchanges());
    m.output(a.audit);
  }
  m.write(a.out);
  return 0;
}

struct TrainArgs {
  std::string embeddings, annotations, synthetic, out, report;
  std::vector<std::string> exclude;
  double lr = 0.1, l2 = 1e-4;
  int epochs = 50;
  std::size_t batch = 256;
  bool include_c0 = false;
};

int cmd_train(const TrainArgs& a, const Globals& g, const TaxonomyTree& tree, const Log& log) {
  Manifest m("train", g);
  if (a.annotations.empty() == a.synthetic.empty()) {
    fail(ErrorKind::InvalidArgument, "give exactly one of --annotations or --synthetic");
  }
  const auto universe = category_universe(tree, a.include_c0);
  const auto matrix = load_embeddings(a.embeddings);

  std::vector<std::pair<std::string, int>> labeled;
  std::size_t skipped = 0;
  if (!a.synthetic.empty()) {
    for (const auto& row : read_jsonl(a.synthetic)) {
      const auto r = synthetic_from_json(row);
      labeled.emplace_back(r.id, r.category_id);
    }
  } else {
    std::map<std::string, std::vector<CategorySet>> votes;
    for (const auto& r : resolve_latest(filter_annotators(load_annotations(a.annotations), a.exclude, {}))) {
      votes[r.sample_id].push_back(as_vote(r.categories));
    }
    for (const auto& [id, sets] : votes) labeled.emplace_back(id, majority_label(sets));
  }
  std::vector<std::string> ids;
  std::vector<int> labels;
  for (const auto& [id, label] : labeled) {
    if (!universe.contains(label)) {
      ++skipped;
      continue;
    }
    ids.push_back(id);
    labels.push_back(label);
  }
  if (skipped) log.warn(std::to_string(skipped) + " examples have labels outside the class list and were skipped");
  const RowMatrix<float> X = matrix.gather(ids);

  TrainConfig cfg;
  cfg.learning_rate = a.lr;
  cfg.epochs = a.epochs;
  cfg.batch_size = a.batch;
  cfg.l2 = a.l2;
  cfg.seed = g.seed;
  const auto result = train(X, labels, universe, cfg);
  save_model(result.model, a.out);

  std::size_t hits = 0;
  const RowMatrix<double> probs = predict_proba_batch(result.model, X);
  for (Eigen::Index i = 0; i < probs.rows(); ++i) {
    if (argmax_category(universe, probs.row(i).transpose()) == labels[static_cast<std::size_t>(i)]) ++hits;
  }
  json report{{"examples", ids.size()},
              {"skipped", skipped},
              {"classes", universe.ids},
              {"epoch_loss", result.epoch_loss},
              {"train_accuracy", ids.empty() ? 0.0 : static_cast<double>(hits) / static_cast<double>(ids.size())},
              {"config", {{"learning_rate", cfg.learning_rate}, {"epochs", cfg.epochs}, {"batch_size", cfg.batch_size},
                          {"l2", cfg.l2}, {"seed", cfg.seed}}}};
  if (!a.report.empty()) write_text_file(a.report, dump_report(report));

  m.config("lr", a.lr);
  m.config("epochs", a.epochs);
  m.config("batch", a.batch);
  m.config("l2", a.l2);
  m.config("include_not_a_refusal", a.include_c0);
  for (const auto& p : {a.embeddings, a.annotations, a.synthetic}) m.input(p);
  m.output(a.out);
  m.output(a.report);
  m.write(a.out);
  return 0;
}

struct ClassifyArgs {
  std::string model, embeddings, ids, out, model_id;
  bool include_c0 = false;
};

int cmd_classify(const ClassifyArgs& a, const Globals& g, const TaxonomyTree& tree) {
  Manifest m("classify", g);
  const auto universe = category_universe(tree, a.include_c0);
  const auto model = load_model(a.model, &universe);
  const auto matrix = load_embeddings(a.embeddings);
  const auto ids = a.ids.empty() ? matrix.ids() : read_id_lines(a.ids);
  const std::string model_id = a.model_id.empty() ? fs::path(a.model).stem().string() : a.model_id;
  std::vector<json> rows;
  for (const auto& p : classify(model, model_id, matrix, ids)) rows.push_back(to_json(p));
  write_jsonl(a.out, rows);
  m.config("model_id", model_id);
  for (const auto& p : {a.model, a.embeddings, a.ids}) m.input(p);
  m.output(a.out);
  m.write(a.out);
  return 0;
}

struct JudgeArgs {
  std::string samples, shots = std::string(REFUSAL_DATA_DIR) + "/shots.json", out, replay, audit;
  bool multi_label = false;
  std::size_t parallel = 4;
};

int cmd_judge(const std::string& mode, const JudgeArgs& a, const Globals& g, const TaxonomyTree& tree, const Log& log) {
  Manifest m("judge " + mode, g);
  const auto samples = load_samples(a.samples);
  const auto shots = load_shots(a.shots);
  auto inner = make_text_model(a.replay);
  RecordingModel model(*inner);
  JudgeOptions opts;
  opts.multi_label = a.multi_label;
  opts.max_parallel_requests = a.parallel;

  const auto result = pre_label_corpus(tree, samples, shots, model, opts);
  for (const auto& row : result.audit) log.warn("sample " + row["sample_id"].get<std::string>() + ": " + row["message"].get<std::string>());
  std::vector<json> rows;
  if (mode == "prelabel") {
    for (const auto& r : result.annotations) rows.push_back(to_json(r));
  } else {
    for (const auto& r : result.annotations) {
      PredictionRecord p{r.sample_id, model.name(), {}, r.categories.empty() ? kNotARefusal : *r.categories.begin()};
      json row = to_json(p);
      if (a.multi_label) row["categories"] = r.categories;
      rows.push_back(std::move(row));
    }
  }
  write_jsonl(a.out, rows);
  if (!a.audit.empty()) {
    auto audit = result.audit;
    for (auto& ex : model.exchanges()) audit.push_back(std::move(ex));
    write_jsonl(a.audit, audit);
  }
  m.config("multi_label", a.multi_label);
  m.config("model", model.name());
  m.config("failed_samples", result.audit.size());
  for (const auto& p : {a.samples, a.shots, a.replay}) m.input(p);
  m.output(a.out);
  m.output(a.audit);
  m.write(a.out);
  return 0;
}

struct AgreeArgs {
  std::string annotations, samples, report, text, kappa = "macro_binary";
  std::vector<std::string> exclude, only;
};

int cmd_agree(const AgreeArgs& a, const Globals& g, const TaxonomyTree& tree) {
  Manifest m("agree", g);
  const auto universe = category_universe(tree, true);
  const auto set = labeled_set(a.samples, filter_annotators(load_annotations(a.annotations), a.exclude, a.only), universe);
  KappaMode mode;
  if (a.kappa == "macro_binary") mode = KappaMode::macro_binary;
  else if (a.kappa == "exact_set") mode = KappaMode::exact_set;
  else fail(ErrorKind::InvalidArgument, "--kappa must be macro_binary or exact_set");
  const auto rep = agreement_report(set, universe, mode);
  write_text_file(a.report, dump_report(to_json(rep, &tree)));
  if (!a.text.empty()) write_text_file(a.text, render_text(rep, &tree));
  m.config("kappa", a.kappa);
  m.config("exclude", a.exclude);
  m.config("only", a.only);
  for (const auto& p : {a.annotations, a.samples}) m.input(p);
  m.output(a.report);
  m.output(a.text);
  m.write(a.report);
  return 0;
}

struct EvalArgs {
  std::string predictions, annotations, samples, report, text;
  std::vector<std::string> exclude;
};

int cmd_eval(const EvalArgs& a, const Globals& g, const TaxonomyTree& tree) {
  Manifest m("eval", g);
  const auto universe = category_universe(tree, true);
  const auto set = labeled_set(a.samples, filter_annotators(load_annotations(a.annotations), a.exclude, {}), universe);
  std::vector<PredictionRecord> preds;
  for (const auto& row : read_jsonl(a.predictions)) preds.push_back(prediction_from_json(row));
  const auto rep = model_eval_report(preds, set, universe, static_cast<int>(tree.category_ids().size()));
  write_text_file(a.report, dump_report(to_json(rep, &tree)));
  if (!a.text.empty()) write_text_file(a.text, render_text(rep, &tree));
  m.config("exclude", a.exclude);
  for (const auto& p : {a.predictions, a.annotations, a.samples}) m.input(p);
  m.output(a.report);
  m.output(a.text);
  m.write(a.report);
  return 0;
}

struct ReportArgs {
  std::string samples, annotations, report;
  std::size_t top_k = 10;
};

int cmd_report(const ReportArgs& a, const Globals& g, const TaxonomyTree& tree) {
  Manifest m("report", g);
  const auto universe = category_universe(tree, true);
  std::vector<AnnotationRecord> records;
  if (!a.annotations.empty()) records = load_annotations(a.annotations);
  const LabeledSet set(load_samples(a.samples), std::move(records), &universe);
  write_text_file(a.report, dump_report(to_json(dataset_report(set, a.top_k), &tree)));
  m.config("top_k", a.top_k);
  m.input(a.samples);
  m.input(a.annotations);
  m.output(a.report);
  m.write(a.report);
  return 0;
}

struct ServeArgs {
  std::string samples, campaign, annotations = "annotations.jsonl", prelabels, static_dir, host = "127.0.0.1";
  int port = 8080;
};

std::atomic<AnnotationServer*> g_server{nullptr};

int cmd_serve(const ServeArgs& a, const TaxonomyTree& tree, std::ostream& out) {
  const json doc = read_json_file(a.campaign);
  std::vector<Campaign> campaigns;
  if (doc.is_array()) {
    for (const auto& c : doc) campaigns.push_back(campaign_from_json(c));
  } else {
    campaigns.push_back(campaign_from_json(doc));
  }
  std::vector<AnnotationRecord> prelabels;
  if (!a.prelabels.empty()) prelabels = load_annotations(a.prelabels);
  AnnotationStore store(a.annotations);
  AnnotationService service(tree, load_samples(a.samples), std::move(campaigns), store, std::move(prelabels));
  AnnotationServer server(service, a.static_dir);
  g_server = &server;
  std::signal(SIGINT, [](int) {
    if (auto* s = g_server.load()) s->stop();
  });
  out << "serving on http://" << a.host << ":" << a.port << "/" << std::endl;
  const bool ok = server.listen(a.host, a.port);
  g_server = nullptr;
  if (!ok) fail(ErrorKind::Io, "cannot listen on " + a.host + ":" + std::to_string(a.port));
  return 0;
}

struct EmbedArgs {
  std::string samples, out;
  std::size_t batch = 64, parallel = 4;
  std::string field = "input";
};

int cmd_embed(const EmbedArgs& a, const Globals& g) {
  Manifest m("embed", g);
  const auto samples = load_samples(a.samples);
  std::vector<std::string> ids, texts;
  for (const auto& s : samples) {
    ids.push_back(s.id);
    if (a.field == "input") texts.push_back(s.input_text());
    else if (a.field == "output") texts.push_back(s.output.content);
    else if (a.field == "both") texts.push_back(s.input_text() + "\n" + s.output.content);
    else fail(ErrorKind::InvalidArgument, "--field must be input, output or both");
  }
  auto provider = HttpEmbeddingProvider::from_env();
  ProviderConfig cfg{ProviderMode::http, a.batch, a.parallel};
  save_embeddings(embed_batch(ids, texts, provider, cfg), a.out);
  m.config("field", a.field);
  m.config("batch", a.batch);
  m.input(a.samples);
  m.output(a.out);
  m.output(ids_sidecar(a.out).string());
  m.write(a.out);
  return 0;
}

struct SelectArgs {
  std::string embeddings, projection, out;
  std::size_t k = 100;
  int grid = 10;
};

int cmd_select(const SelectArgs& a, const Globals& g) {
  Manifest m("select", g);
  const auto matrix = load_embeddings(a.embeddings);
  RowMatrix<double> proj;
  if (!a.projection.empty()) proj = load_projection(a.projection, matrix.ids());
  const auto picked = diversity_sample(matrix, a.k, DiversityOptions{a.grid, g.seed}, a.projection.empty() ? nullptr : &proj);
  write_id_lines(a.out, picked);
  m.config("k", a.k);
  m.config("grid", a.grid);
  m.input(a.embeddings);
  m.input(a.projection);
  m.output(a.out);
  m.write(a.out);
  return 0;
}

}  // namespace

int run(const std::vector<std::string>& args, std::ostream& out, std::ostream& err) {
  CLI::App app{"Refusal data tooling: mining, synthesis, labeling, training and evaluation", "refusal"};
  app.fallthrough();
  app.require_subcommand(1);
  app.set_version_flag("--version", kVersion);

  Globals g;
  app.add_option("--seed", g.seed, "Seed for every random choice")->capture_default_str();
  app.add_option("--taxonomy", g.taxonomy, "Taxonomy JSON")->capture_default_str();
  app.add_option("--log-level", g.log_level, "error, warn, info or debug")->capture_default_str();

  CollectArgs ca;
  auto* collect = app.add_subcommand("collect", "Iteratively mine refusals by embedding similarity");
  collect->add_option("--samples", ca.samples, "samples.jsonl")->required();
  collect->add_option("--embeddings", ca.embeddings, "embeddings.bin")->required();
  collect->add_option("--seeds", ca.seeds, "File of seed ids, one per line")->required();
  collect->add_option("--k", ca.k, "Iterations")->capture_default_str();
  collect->add_option("--n", ca.n, "New samples per iteration")->capture_default_str();
  collect->add_option("--threshold", ca.threshold, "Cosine threshold (use --threshold=-inf to disable)")->capture_default_str();
  collect->add_option("--verifier", ca.verifier, "llm, accept_all or reject_all")->capture_default_str();
  collect->add_option("--phi", ca.phi, "mean or weighted")->capture_default_str();
  collect->add_option("--weights", ca.weights, "JSON object id -> weight for --phi weighted");
  collect->add_flag("--sample-random", ca.sample_random, "Draw n at random from the candidates above threshold");
  collect->add_option("--parallel", ca.parallel, "Concurrent verification requests")->capture_default_str();
  collect->add_option("--replay", ca.replay, "Answer verification prompts from a recorded exchange file");
  collect->add_option("--out", ca.out, "Accepted ids")->required();
  collect->add_option("--audit", ca.audit, "Audit log (JSONL)")->required();

  GenerateArgs ga;
  auto* generate = app.add_subcommand("generate", "Generate synthetic refusal data from the taxonomy");
  generate->add_option("--per-category", ga.per_category, "Examples per category")->capture_default_str();
  generate->add_option("--out", ga.out, "synthetic.jsonl");
  generate->add_option("--plan", ga.plan, "Write the allocation plan here");
  generate->add_flag("--plan-only", ga.plan_only, "Only compute the plan");
  generate->add_flag("--variations", ga.variations, "Also produce the 14 input and 5 output variations");
  generate->add_option("--ultra-out", ga.ultra_out, "Write the combined variation dataset here");
  generate->add_option("--request-size", ga.request_size, "Inputs requested per call")->capture_default_str();
  generate->add_option("--replay", ga.replay, "Answer prompts from a recorded exchange file");
  generate->add_option("--audit", ga.audit, "Record raw model exchanges here");

  TrainArgs ta;
  auto* trainc = app.add_subcommand("train", "Train the logistic-regression classifier");
  trainc->add_option("--embeddings", ta.embeddings, "embeddings.bin")->required();
  trainc->add_option("--annotations", ta.annotations, "Labels from annotations (majority vote)");
  trainc->add_option("--synthetic", ta.synthetic, "Labels from synthetic.jsonl");
  trainc->add_option("--exclude", ta.exclude, "Annotator ids to ignore");
  trainc->add_option("--lr", ta.lr, "Learning rate")->capture_default_str();
  trainc->add_option("--epochs", ta.epochs, "Epochs")->capture_default_str();
  trainc->add_option("--batch", ta.batch, "Mini-batch size")->capture_default_str();
  trainc->add_option("--l2", ta.l2, "L2 coefficient")->capture_default_str();
  trainc->add_flag("--include-not-a-refusal", ta.include_c0, "Add a class for non-refusals");
  trainc->add_option("--out", ta.out, "model.bin")->required();
  trainc->add_option("--report", ta.report, "Training report JSON");

  ClassifyArgs cla;
  auto* classifyc = app.add_subcommand("classify", "Predict categories with a trained model");
  classifyc->add_option("--model", cla.model, "model.bin")->required();
  classifyc->add_option("--embeddings", cla.embeddings, "embeddings.bin")->required();
  classifyc->add_option("--ids", cla.ids, "Only these ids (one per line)");
  classifyc->add_option("--model-id", cla.model_id, "Name written into predictions");
  classifyc->add_flag("--include-not-a-refusal", cla.include_c0, "Model was trained with the non-refusal class");
  classifyc->add_option("--out", cla.out, "predictions.jsonl")->required();

  JudgeArgs ja;
  auto* judge = app.add_subcommand("judge", "LLM classification and pre-labeling");
  judge->require_subcommand(1);
  auto add_judge_opts = [&](CLI::App* sc) {
    sc->add_option("--samples", ja.samples, "samples.jsonl")->required();
    sc->add_option("--shots", ja.shots, "Few-shot examples per category")->capture_default_str();
    sc->add_option("--replay", ja.replay, "Answer prompts from a recorded exchange file");
    sc->add_option("--audit", ja.audit, "Failures and raw exchanges (JSONL)");
    sc->add_option("--parallel", ja.parallel, "Concurrent requests")->capture_default_str();
    sc->add_flag("--multi-label", ja.multi_label, "Accept comma-separated categories");
    sc->add_option("--out", ja.out, "Output JSONL")->required();
  };
  auto* judge_classify = judge->add_subcommand("classify", "Write predictions.jsonl");
  auto* judge_prelabel = judge->add_subcommand("prelabel", "Write annotations.jsonl pre-labels");
  add_judge_opts(judge_classify);
  add_judge_opts(judge_prelabel);

  AgreeArgs aa;
  auto* agree = app.add_subcommand("agree", "Inter-annotator agreement report");
  agree->add_option("--annotations", aa.annotations, "annotations.jsonl")->required();
  agree->add_option("--samples", aa.samples, "samples.jsonl (optional)");
  agree->add_option("--exclude", aa.exclude, "Annotator ids to ignore");
  agree->add_option("--only", aa.only, "Annotator ids to keep");
  agree->add_option("--kappa", aa.kappa, "macro_binary or exact_set")->capture_default_str();
  agree->add_option("--text", aa.text, "Also write a text table here");
  agree->add_option("--report", aa.report, "Report JSON")->required();

  EvalArgs ea;
  auto* eval = app.add_subcommand("eval", "Compare predictions with human labels");
  eval->add_option("--predictions", ea.predictions, "predictions.jsonl")->required();
  eval->add_option("--annotations", ea.annotations, "annotations.jsonl")->required();
  eval->add_option("--samples", ea.samples, "samples.jsonl (optional)");
  eval->add_option("--exclude", ea.exclude, "Annotator ids to ignore");
  eval->add_option("--text", ea.text, "Also write a text table here");
  eval->add_option("--report", ea.report, "Report JSON")->required();

  ReportArgs ra;
  auto* report = app.add_subcommand("report", "Dataset statistics");
  report->add_option("--samples", ra.samples, "samples.jsonl")->required();
  report->add_option("--annotations", ra.annotations, "annotations.jsonl");
  report->add_option("--top-k", ra.top_k, "Bigrams to list")->capture_default_str();
  report->add_option("--report", ra.report, "Report JSON")->required();

  ServeArgs sa;
  auto* serve = app.add_subcommand("serve", "Run the annotation server");
  serve->add_option("--samples", sa.samples, "samples.jsonl")->required();
  serve->add_option("--campaign", sa.campaign, "Campaign JSON (object or array)")->required();
  serve->add_option("--annotations", sa.annotations, "Annotation store")->capture_default_str();
  serve->add_option("--prelabels", sa.prelabels, "Pre-label annotations");
  serve->add_option("--static", sa.static_dir, "UI assets served at /");
  serve->add_option("--host", sa.host, "Bind address")->capture_default_str();
  serve->add_option("--port", sa.port, "Port")->capture_default_str();

  EmbedArgs ema;
  auto* embed = app.add_subcommand("embed", "Embed samples through the embedding endpoint");
  embed->add_option("--samples", ema.samples, "samples.jsonl")->required();
  embed->add_option("--field", ema.field, "input, output or both")->capture_default_str();
  embed->add_option("--batch-size", ema.batch, "Texts per request")->capture_default_str();
  embed->add_option("--parallel", ema.parallel, "Concurrent requests")->capture_default_str();
  embed->add_option("--out", ema.out, "embeddings.bin")->required();

  SelectArgs sea;
  auto* select = app.add_subcommand("select", "Pick a diverse subset by grid sampling in 2D");
  select->add_option("--embeddings", sea.embeddings, "embeddings.bin")->required();
  select->add_option("--projection", sea.projection, "Precomputed 2D coordinates (id x y per line)");
  select->add_option("--k", sea.k, "Ids to pick")->capture_default_str();
  select->add_option("--grid", sea.grid, "Grid cells per axis")->capture_default_str();
  select->add_option("--out", sea.out, "Selected ids")->required();

  try {
    std::vector<std::string> reversed(args.rbegin(), args.rend());
    app.parse(reversed);
  } catch (const CLI::ParseError& e) {
    const int code = app.exit(e, out, err);
    return code == 0 ? 0 : 1;
  }

  try {
    const Log log(err, parse_level(g.log_level));
    auto tree = [&] { return load_taxonomy(g.taxonomy); };
    if (collect->parsed()) return cmd_collect(ca, g, log);
    if (generate->parsed()) return cmd_generate(ga, g, tree(), log);
    if (trainc->parsed()) return cmd_train(ta, g, tree(), log);
    if (classifyc->parsed()) return cmd_classify(cla, g, tree());
    if (judge_classify->parsed()) return cmd_judge("classify", ja, g, tree(), log);
    if (judge_prelabel->parsed()) return cmd_judge("prelabel", ja, g, tree(), log);
    if (agree->parsed()) return cmd_agree(aa, g, tree());
    if (eval->parsed()) return cmd_eval(ea, g, tree());
    if (report->parsed()) return cmd_report(ra, g, tree());
    if (serve->parsed()) {
      const auto t = tree();
      return cmd_serve(sa, t, out);
    }
    if (embed->parsed()) return cmd_embed(ema, g);
    if (select->parsed()) return cmd_select(sea, g);
    err << app.help();
    return 1;
  } catch (const Error& e) {
    err << "error: " << e.what() << "\n";
    return is_environmental(e.kind()) ? 2 : 1;
  } catch (const json::exception& e) {
    err << "error: malformed JSON input: " << e.what() << "\n";
    return 1;
  } catch (const std::exception& e) {
    err << "error: " << e.what() << "\n";
    return 1;
  }
}

}  // namespace refusal::cli
