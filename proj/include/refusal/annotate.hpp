#pragma once

#include <chrono>
#include <filesystem>
#include <functional>
#include <map>
#include <memory>
#include <mutex>
#include <optional>
#include <string>
#include <vector>

#include "refusal/corpus.hpp"
#include "refusal/errors.hpp"
#include "refusal/taxonomy.hpp"

namespace refusal {

enum class CampaignMode { single, multi };

struct Campaign {
  std::string id;
  CampaignMode mode = CampaignMode::single;
  std::vector<std::string> roster;
  std::vector<std::string> sample_ids;  // empty in the file means every sample
  std::optional<std::string> prelabel_source;
  bool closed = false;
};

/// Throws InvalidArgument for an empty roster or a multi campaign with
/// fewer than two annotators.
void validate(const Campaign& campaign);
Campaign campaign_from_json(const json& j);
json to_json(const Campaign& campaign);

/// Annotator responsible for `sample_id` in a single-mode campaign:
/// FNV-1a over the id and the sorted roster, modulo the roster size.
std::string assigned_annotator(const std::string& sample_id, const std::vector<std::string>& roster);

/// Append-only annotations.jsonl; reads resolve latest-wins.
class AnnotationStore {
 public:
  /// In-memory when `path` is empty. Existing records in the file are loaded.
  explicit AnnotationStore(std::filesystem::path path = {});

  void append(const AnnotationRecord& record);
  std::vector<AnnotationRecord> resolved() const;
  std::size_t raw_size() const;

 private:
  std::filesystem::path path_;
  mutable std::mutex mu_;
  std::vector<AnnotationRecord> records_;
};

struct Task {
  const Sample* sample = nullptr;
  std::optional<CategorySet> pre_labels;
};

struct CampaignProgress {
  std::map<std::string, std::size_t> per_annotator;
  std::size_t done = 0;
  std::size_t required = 0;
};

class AnnotationService {
 public:
  using Clock = std::function<std::chrono::system_clock::time_point()>;

  AnnotationService(const TaxonomyTree& tree, std::vector<Sample> samples, std::vector<Campaign> campaigns,
                    AnnotationStore& store, std::vector<AnnotationRecord> prelabels = {},
                    Clock clock = std::chrono::system_clock::now,
                    std::chrono::seconds lease = std::chrono::seconds(300));

  /// Next sample this annotator still has to label, or nullopt when done.
  /// Throws UnknownCampaign, CampaignClosed, UnknownAnnotator.
  std::optional<Task> next_task(const std::string& campaign_id, const std::string& annotator);

  /// Records the selection; an empty set or {kNotARefusal} means "not a
  /// refusal". Throws NotAssigned, UnknownCategory and the errors above.
  AnnotationRecord submit(const std::string& campaign_id, const std::string& annotator, const std::string& sample_id,
                          const CategorySet& categories);

  CampaignProgress progress(const std::string& campaign_id) const;

  const TaxonomyTree& tree() const { return tree_; }
  const Campaign& campaign(const std::string& id) const;

 private:
  struct Lease {
    std::string annotator;
    std::chrono::system_clock::time_point expires;
  };

  const Campaign& open_campaign(const std::string& id, const std::string& annotator) const;
  bool may_label(const Campaign& c, const std::string& annotator, const std::string& sample_id) const;

  const TaxonomyTree& tree_;
  std::vector<Sample> samples_;
  std::map<std::string, std::size_t> sample_index_;
  std::map<std::string, Campaign> campaigns_;
  AnnotationStore& store_;
  std::map<std::string, CategorySet> prelabels_by_source_sample_;  // key: source + '\n' + sample
  Clock clock_;
  std::chrono::seconds lease_;
  mutable std::mutex mu_;
  std::map<std::pair<std::string, std::string>, Lease> leases_;  // (campaign, sample)
};

struct ApiRequest {
  std::string method;
  std::string path;
  std::map<std::string, std::string> query;
  std::map<std::string, std::string> headers;  // lower-case names
  std::string body;
};

struct ApiResponse {
  int status = 200;
  json body;
};

/// JSON API dispatch, independent of the socket layer.
ApiResponse handle_api(AnnotationService& service, const ApiRequest& request);

/// HTTP status used for an error kind by the API.
int http_status(ErrorKind kind);

/// Blocking HTTP server: the API under /api and static files from
/// `static_dir` at / (a placeholder page when it is empty).
class AnnotationServer {
 public:
  AnnotationServer(AnnotationService& service, std::filesystem::path static_dir = {});
  ~AnnotationServer();

  /// Binds and serves until stop(). Returns false when the port is unavailable.
  bool listen(const std::string& host, int port);
  /// Binds to a free port and returns it; serve with listen_after_bind().
  int bind_any(const std::string& host);
  bool listen_after_bind();
  void stop();

 private:
  struct Impl;
  std::unique_ptr<Impl> impl_;
};

}  // namespace refusal
