#include "refusal/annotate.hpp"

#include <algorithm>
#include <cstdint>
#include <ctime>
#include <fstream>
#include <set>

#include <httplib.h>

#include "refusal/errors.hpp"

namespace refusal {

namespace {

std::string format_time(std::chrono::system_clock::time_point t) {
  const auto ms = std::chrono::duration_cast<std::chrono::milliseconds>(t.time_since_epoch()).count();
  const std::time_t secs = static_cast<std::time_t>(ms / 1000);
  std::tm tm{};
  gmtime_r(&secs, &tm);
  char buf[40];
  std::strftime(buf, sizeof buf, "%Y-%m-%dT%H:%M:%S", &tm);
  char out[48];
  std::snprintf(out, sizeof out, "%s.%03dZ", buf, static_cast<int>(ms % 1000));
  return out;
}

std::string prelabel_key(const std::string& source, const std::string& sample) { return source + '\n' + sample; }

bool in_roster(const Campaign& c, const std::string& annotator) {
  return std::find(c.roster.begin(), c.roster.end(), annotator) != c.roster.end();
}

}  // namespace

void validate(const Campaign& c) {
  if (c.id.empty()) fail(ErrorKind::InvalidArgument, "campaign needs an id");
  if (c.roster.empty()) fail(ErrorKind::InvalidArgument, "campaign " + c.id + " has an empty roster");
  if (c.mode == CampaignMode::multi && c.roster.size() < 2) {
    fail(ErrorKind::InvalidArgument, "multi campaign " + c.id + " needs at least two annotators");
  }
  std::set<std::string> unique(c.roster.begin(), c.roster.end());
  if (unique.size() != c.roster.size()) fail(ErrorKind::InvalidArgument, "campaign " + c.id + " lists an annotator twice");
}

Campaign campaign_from_json(const json& j) {
  Campaign c;
  try {
    c.id = j.at("id").get<std::string>();
    const auto mode = j.value("mode", std::string("single"));
    if (mode == "single") c.mode = CampaignMode::single;
    else if (mode == "multi") c.mode = CampaignMode::multi;
    else fail(ErrorKind::Parse, "campaign mode must be single or multi, got '" + mode + "'");
    c.roster = j.at("roster").get<std::vector<std::string>>();
    if (j.contains("sample_ids") && !j["sample_ids"].is_null()) c.sample_ids = j["sample_ids"].get<std::vector<std::string>>();
    if (j.contains("prelabel_source") && !j["prelabel_source"].is_null()) c.prelabel_source = j["prelabel_source"].get<std::string>();
    c.closed = j.value("closed", false);
  } catch (const json::exception& e) {
    fail(ErrorKind::Parse, std::string("campaign: ") + e.what());
  }
  validate(c);
  return c;
}

json to_json(const Campaign& c) {
  return json{{"id", c.id},
              {"mode", c.mode == CampaignMode::single ? "single" : "multi"},
              {"roster", c.roster},
              {"sample_ids", c.sample_ids},
              {"prelabel_source", c.prelabel_source ? json(*c.prelabel_source) : json(nullptr)},
              {"closed", c.closed}};
}

std::string assigned_annotator(const std::string& sample_id, const std::vector<std::string>& roster) {
  if (roster.empty()) fail(ErrorKind::InvalidArgument, "empty roster");
  std::vector<std::string> sorted = roster;
  std::sort(sorted.begin(), sorted.end());
  std::uint64_t h = 1469598103934665603ull;
  auto mix = [&](std::string_view s) {
    for (unsigned char ch : s) {
      h ^= ch;
      h *= 1099511628211ull;
    }
    h ^= 0x1f;
    h *= 1099511628211ull;
  };
  mix(sample_id);
  for (const auto& name : sorted) mix(name);
  return sorted[static_cast<std::size_t>(h % sorted.size())];
}

AnnotationStore::AnnotationStore(std::filesystem::path path) : path_(std::move(path)) {
  if (!path_.empty() && std::filesystem::exists(path_)) {
    for (const auto& row : read_jsonl(path_)) records_.push_back(annotation_from_json(row));
  }
}

void AnnotationStore::append(const AnnotationRecord& record) {
  std::lock_guard lock(mu_);
  if (!path_.empty()) {
    std::ofstream out(path_, std::ios::binary | std::ios::app);
    if (!out) fail(ErrorKind::Io, "cannot append to " + path_.string());
    out << to_json(record).dump() << '\n';
    out.flush();
    if (!out) fail(ErrorKind::Io, "short write to " + path_.string());
  }
  records_.push_back(record);
}

std::vector<AnnotationRecord> AnnotationStore::resolved() const {
  std::lock_guard lock(mu_);
  return resolve_latest(records_);
}

std::size_t AnnotationStore::raw_size() const {
  std::lock_guard lock(mu_);
  return records_.size();
}

AnnotationService::AnnotationService(const TaxonomyTree& tree, std::vector<Sample> samples,
                                     std::vector<Campaign> campaigns, AnnotationStore& store,
                                     std::vector<AnnotationRecord> prelabels, Clock clock, std::chrono::seconds lease)
    : tree_(tree), samples_(std::move(samples)), store_(store), clock_(std::move(clock)), lease_(lease) {
  for (std::size_t i = 0; i < samples_.size(); ++i) {
    if (!sample_index_.emplace(samples_[i].id, i).second) fail(ErrorKind::Parse, "duplicate sample id " + samples_[i].id);
  }
  for (auto& c : campaigns) {
    validate(c);
    if (c.sample_ids.empty()) {
      for (const auto& s : samples_) c.sample_ids.push_back(s.id);
    }
    for (const auto& id : c.sample_ids) {
      if (!sample_index_.count(id)) fail(ErrorKind::DanglingAnnotation, "campaign " + c.id + " references unknown sample '" + id + "'");
    }
    const std::string id = c.id;
    if (!campaigns_.emplace(id, std::move(c)).second) fail(ErrorKind::InvalidArgument, "duplicate campaign id " + id);
  }
  for (auto& r : resolve_latest(std::move(prelabels))) {
    prelabels_by_source_sample_[prelabel_key(r.annotator_id, r.sample_id)] = r.categories;
  }
}

const Campaign& AnnotationService::campaign(const std::string& id) const {
  auto it = campaigns_.find(id);
  if (it == campaigns_.end()) fail(ErrorKind::UnknownCampaign, "no campaign '" + id + "'");
  return it->second;
}

const Campaign& AnnotationService::open_campaign(const std::string& id, const std::string& annotator) const {
  const Campaign& c = campaign(id);
  if (c.closed) fail(ErrorKind::CampaignClosed, "campaign '" + id + "' is closed");
  if (!in_roster(c, annotator)) fail(ErrorKind::UnknownAnnotator, "'" + annotator + "' is not on the roster of " + id);
  return c;
}

bool AnnotationService::may_label(const Campaign& c, const std::string& annotator, const std::string& sample_id) const {
  return c.mode == CampaignMode::multi || assigned_annotator(sample_id, c.roster) == annotator;
}

std::optional<Task> AnnotationService::next_task(const std::string& campaign_id, const std::string& annotator) {
  const Campaign& c = open_campaign(campaign_id, annotator);
  std::set<std::string> done;
  for (const auto& r : store_.resolved()) {
    if (r.annotator_id == annotator) done.insert(r.sample_id);
  }
  std::lock_guard lock(mu_);
  const auto now = clock_();
  for (const auto& sid : c.sample_ids) {
    if (done.count(sid) || !may_label(c, annotator, sid)) continue;
    if (c.mode == CampaignMode::single) {
      auto lease = leases_.find({c.id, sid});
      if (lease != leases_.end() && lease->second.annotator != annotator && lease->second.expires > now) continue;
      leases_[{c.id, sid}] = Lease{annotator, now + lease_};
    }
    Task task;
    task.sample = &samples_[sample_index_.at(sid)];
    if (c.mode == CampaignMode::single && c.prelabel_source) {
      auto pre = prelabels_by_source_sample_.find(prelabel_key(*c.prelabel_source, sid));
      if (pre != prelabels_by_source_sample_.end()) task.pre_labels = pre->second;
    }
    return task;
  }
  return std::nullopt;
}

AnnotationRecord AnnotationService::submit(const std::string& campaign_id, const std::string& annotator,
                                           const std::string& sample_id, const CategorySet& categories) {
  const Campaign& c = open_campaign(campaign_id, annotator);
  if (std::find(c.sample_ids.begin(), c.sample_ids.end(), sample_id) == c.sample_ids.end()) {
    fail(ErrorKind::NotAssigned, "sample '" + sample_id + "' is not part of campaign " + c.id);
  }
  if (!may_label(c, annotator, sample_id)) {
    fail(ErrorKind::NotAssigned, "sample '" + sample_id + "' is assigned to another annotator");
  }
  CategorySet labels;
  for (int id : categories) {
    if (id == kNotARefusal) continue;
    if (!tree_.contains(id) || !tree_.is_category(id)) {
      fail(ErrorKind::UnknownCategory, "category " + std::to_string(id) + " is not in the taxonomy");
    }
    labels.insert(id);
  }
  if (categories.count(kNotARefusal) && !labels.empty()) {
    fail(ErrorKind::InvalidArgument, "\"not a refusal\" cannot be combined with categories");
  }
  AnnotationRecord rec{sample_id, annotator, std::move(labels), format_time(clock_())};
  store_.append(rec);
  std::lock_guard lock(mu_);
  leases_.erase({c.id, sample_id});
  return rec;
}

CampaignProgress AnnotationService::progress(const std::string& campaign_id) const {
  const Campaign& c = campaign(campaign_id);
  CampaignProgress p;
  for (const auto& a : c.roster) p.per_annotator[a] = 0;
  p.required = c.mode == CampaignMode::multi ? c.sample_ids.size() * c.roster.size() : c.sample_ids.size();
  const std::set<std::string> members(c.sample_ids.begin(), c.sample_ids.end());
  for (const auto& r : store_.resolved()) {
    if (!members.count(r.sample_id) || !in_roster(c, r.annotator_id)) continue;
    if (!may_label(c, r.annotator_id, r.sample_id)) continue;
    ++p.per_annotator[r.annotator_id];
    ++p.done;
  }
  return p;
}

int http_status(ErrorKind kind) {
  switch (kind) {
    case ErrorKind::UnknownAnnotator: return 403;
    case ErrorKind::UnknownCampaign: return 404;
    case ErrorKind::NotAssigned: return 409;
    case ErrorKind::CampaignClosed: return 410;
    case ErrorKind::UnknownCategory: return 422;
    case ErrorKind::Io: return 500;
    default: return 400;
  }
}

namespace {

json progress_json(const CampaignProgress& p) {
  return json{{"per_annotator", p.per_annotator}, {"done", p.done}, {"required", p.required}};
}

json error_json(const Error& e) {
  return json{{"error", std::string(to_string(e.kind()))}, {"message", e.what()}};
}

// "/api/campaigns/<id>/<rest>" -> (id, rest)
std::optional<std::pair<std::string, std::string>> campaign_route(const std::string& path) {
  const std::string prefix = "/api/campaigns/";
  if (path.rfind(prefix, 0) != 0) return std::nullopt;
  const auto slash = path.find('/', prefix.size());
  if (slash == std::string::npos) return std::nullopt;
  return std::make_pair(path.substr(prefix.size(), slash - prefix.size()), path.substr(slash + 1));
}

}  // namespace

ApiResponse handle_api(AnnotationService& service, const ApiRequest& req) {
  try {
    if (req.method == "GET" && req.path == "/api/taxonomy") {
      json body = taxonomy_to_json(service.tree());
      body["categories"] = service.tree().category_ids();
      return {200, body};
    }
    auto route = campaign_route(req.path);
    if (!route) return {404, json{{"error", "NotFound"}, {"message", "no route for " + req.path}}};
    const auto& [campaign_id, action] = *route;

    auto annotator_of = [&]() {
      if (auto it = req.query.find("annotator"); it != req.query.end()) return it->second;
      if (auto it = req.headers.find("x-annotator"); it != req.headers.end()) return it->second;
      fail(ErrorKind::UnknownAnnotator, "no annotator given");
    };

    if (req.method == "GET" && action == "next") {
      const std::string annotator = annotator_of();
      auto task = service.next_task(campaign_id, annotator);
      json body{{"done", !task.has_value()}, {"progress", progress_json(service.progress(campaign_id))}};
      if (task) {
        body["sample"] = to_json(*task->sample);
        if (task->pre_labels) body["pre_labels"] = *task->pre_labels;
        body["mode"] = service.campaign(campaign_id).mode == CampaignMode::single ? "single" : "multi";
      }
      return {200, body};
    }
    if (req.method == "POST" && action == "annotations") {
      json payload;
      try {
        payload = json::parse(req.body);
      } catch (const json::parse_error& e) {
        fail(ErrorKind::Parse, std::string("request body: ") + e.what());
      }
      if (!payload.is_object()) fail(ErrorKind::Parse, "request body must be an object");
      std::string annotator;
      std::string sample_id;
      CategorySet categories;
      try {
        annotator = payload.contains("annotator_id") ? payload["annotator_id"].get<std::string>() : annotator_of();
        sample_id = payload.at("sample_id").get<std::string>();
        for (const auto& c : payload.at("categories")) categories.insert(c.get<int>());
      } catch (const json::exception& e) {
        fail(ErrorKind::Parse, std::string("request body: ") + e.what());
      }
      const auto rec = service.submit(campaign_id, annotator, sample_id, categories);
      return {200, json{{"ok", true}, {"record", to_json(rec)}}};
    }
    if (req.method == "GET" && action == "progress") {
      return {200, progress_json(service.progress(campaign_id))};
    }
    return {404, json{{"error", "NotFound"}, {"message", "no route for " + req.method + " " + req.path}}};
  } catch (const Error& e) {
    return {http_status(e.kind()), error_json(e)};
  }
}

struct AnnotationServer::Impl {
  explicit Impl(AnnotationService& s) : service(s) {}
  AnnotationService& service;
  httplib::Server server;
};

namespace {

constexpr const char* kPlaceholder =
    "<!doctype html><html><head><meta charset=\"utf-8\"><title>Annotation</title></head>"
    "<body><p>The annotation API is running under /api. No UI assets were configured.</p></body></html>";

}  // namespace

AnnotationServer::AnnotationServer(AnnotationService& service, std::filesystem::path static_dir)
    : impl_(std::make_unique<Impl>(service)) {
  auto& srv = impl_->server;
  auto dispatch = [this](const httplib::Request& hreq, httplib::Response& hres) {
    ApiRequest req;
    req.method = hreq.method;
    req.path = hreq.path;
    req.body = hreq.body;
    for (const auto& [k, v] : hreq.params) req.query.emplace(k, v);
    for (const auto& [k, v] : hreq.headers) {
      std::string name = k;
      for (auto& ch : name) ch = static_cast<char>(std::tolower(static_cast<unsigned char>(ch)));
      req.headers.emplace(name, v);
    }
    const ApiResponse res = handle_api(impl_->service, req);
    hres.status = res.status;
    hres.set_content(res.body.dump(), "application/json");
  };
  srv.Get("/api/.*", dispatch);
  srv.Post("/api/.*", dispatch);
  if (!static_dir.empty()) {
    if (!srv.set_mount_point("/", static_dir.string())) {
      fail(ErrorKind::Io, "static directory " + static_dir.string() + " does not exist");
    }
  } else {
    srv.Get("/", [](const httplib::Request&, httplib::Response& res) { res.set_content(kPlaceholder, "text/html"); });
  }
}

AnnotationServer::~AnnotationServer() = default;

bool AnnotationServer::listen(const std::string& host, int port) { return impl_->server.listen(host, port); }

int AnnotationServer::bind_any(const std::string& host) { return impl_->server.bind_to_any_port(host); }

bool AnnotationServer::listen_after_bind() { return impl_->server.listen_after_bind(); }

void AnnotationServer::stop() { impl_->server.stop(); }

}  // namespace refusal
