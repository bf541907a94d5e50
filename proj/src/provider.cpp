#include "refusal/provider.hpp"

#include <cstdlib>
#include <thread>

#include <httplib.h>

#include "refusal/errors.hpp"

namespace refusal {

namespace {

struct SplitUrl {
  std::string origin;  // scheme://host[:port]
  std::string base;    // path prefix without trailing slash
};

SplitUrl split_url(const std::string& url) {
  const auto scheme_end = url.find("://");
  if (scheme_end == std::string::npos) fail(ErrorKind::Provider, "endpoint URL lacks a scheme: " + url);
  const auto path_begin = url.find('/', scheme_end + 3);
  SplitUrl out;
  if (path_begin == std::string::npos) {
    out.origin = url;
  } else {
    out.origin = url.substr(0, path_begin);
    out.base = url.substr(path_begin);
    while (!out.base.empty() && out.base.back() == '/') out.base.pop_back();
  }
  return out;
}

std::string env_or_empty(const char* name) {
  const char* v = std::getenv(name);
  return v ? std::string(v) : std::string{};
}

}  // namespace

json post_json(const HttpEndpoint& endpoint, const std::string& path, const json& body,
               const RetryPolicy& retry) {
  const auto url = split_url(endpoint.url);
  httplib::Client client(url.origin);
  client.set_connection_timeout(endpoint.timeout_seconds, 0);
  client.set_read_timeout(endpoint.timeout_seconds, 0);
  httplib::Headers headers;
  if (!endpoint.api_key.empty()) headers.emplace("Authorization", "Bearer " + endpoint.api_key);

  const std::string payload = body.dump();
  auto backoff = retry.initial_backoff;
  std::string last_error = "no attempt made";
  for (int attempt = 1; attempt <= std::max(1, retry.attempts); ++attempt) {
    auto res = client.Post(url.base + path, headers, payload, "application/json");
    if (!res) {
      last_error = "transport error: " + httplib::to_string(res.error());
    } else if (res->status == 401 || res->status == 403) {
      fail(ErrorKind::Provider, endpoint.url + path + ": authentication rejected (HTTP " + std::to_string(res->status) + ")");
    } else if (res->status >= 500 || res->status == 429) {
      last_error = "HTTP " + std::to_string(res->status);
    } else if (res->status != 200) {
      fail(ErrorKind::Provider, endpoint.url + path + ": HTTP " + std::to_string(res->status) + ": " + res->body);
    } else {
      try {
        return json::parse(res->body);
      } catch (const json::parse_error& e) {
        fail(ErrorKind::Provider, endpoint.url + path + ": reply is not JSON: " + e.what());
      }
    }
    if (attempt < retry.attempts) {
      std::this_thread::sleep_for(backoff);
      backoff *= 2;
    }
  }
  fail(ErrorKind::Provider, endpoint.url + path + ": " + last_error + " after " + std::to_string(retry.attempts) + " attempts");
}

HttpTextModel::HttpTextModel(HttpEndpoint endpoint, std::string model, RetryPolicy retry)
    : endpoint_(std::move(endpoint)), model_(std::move(model)), retry_(retry) {}

HttpTextModel HttpTextModel::from_env() {
  HttpEndpoint ep{env_or_empty("LLM_API_URL"), env_or_empty("LLM_API_KEY")};
  if (ep.url.empty()) fail(ErrorKind::Provider, "LLM_API_URL is not set");
  std::string model = env_or_empty("LLM_MODEL");
  if (model.empty()) model = "default";
  return HttpTextModel(std::move(ep), std::move(model));
}

std::string HttpTextModel::complete(const std::string& prompt, int max_tokens) {
  const json reply = post_json(endpoint_, "", {{"model", model_}, {"prompt", prompt}, {"max_tokens", max_tokens}}, retry_);
  if (!reply.contains("text") || !reply["text"].is_string()) {
    fail(ErrorKind::Provider, "completion reply lacks a \"text\" string");
  }
  return reply["text"].get<std::string>();
}

HttpEmbeddingProvider::HttpEmbeddingProvider(HttpEndpoint endpoint, RetryPolicy retry)
    : endpoint_(std::move(endpoint)), retry_(retry) {}

HttpEmbeddingProvider HttpEmbeddingProvider::from_env() {
  HttpEndpoint ep{env_or_empty("EMBED_API_URL"), env_or_empty("EMBED_API_KEY")};
  if (ep.url.empty()) fail(ErrorKind::Provider, "EMBED_API_URL is not set");
  return HttpEmbeddingProvider(std::move(ep));
}

std::vector<std::vector<float>> HttpEmbeddingProvider::embed(std::span<const std::string> /*ids*/,
                                                             std::span<const std::string> texts) {
  const json reply = post_json(endpoint_, "", {{"texts", std::vector<std::string>(texts.begin(), texts.end())}}, retry_);
  if (!reply.contains("vectors") || !reply["vectors"].is_array()) {
    fail(ErrorKind::Provider, "embedding reply lacks a \"vectors\" array");
  }
  std::vector<std::vector<float>> out;
  try {
    for (const auto& row : reply["vectors"]) out.push_back(row.get<std::vector<float>>());
  } catch (const json::exception& e) {
    fail(ErrorKind::Provider, std::string("malformed embedding vector: ") + e.what());
  }
  if (out.size() != texts.size()) {
    fail(ErrorKind::Provider, "embedding reply has " + std::to_string(out.size()) + " vectors for " + std::to_string(texts.size()) + " texts");
  }
  return out;
}

ScriptedModel::ScriptedModel(std::string name, Responder responder)
    : name_(std::move(name)), responder_(std::move(responder)) {}

std::string ScriptedModel::complete(const std::string& prompt, int /*max_tokens*/) {
  {
    std::lock_guard lock(mu_);
    ++calls_;
  }
  return responder_(prompt);
}

std::size_t ScriptedModel::calls() const {
  std::lock_guard lock(mu_);
  return calls_;
}

ReplayModel::ReplayModel(const std::vector<json>& rows) {
  bool named = false;
  for (const auto& row : rows) {
    if (!row.contains("prompt") || !row.contains("response")) continue;
    if (!named && row.contains("model") && row["model"].is_string()) {
      name_ = row["model"].get<std::string>();
      named = true;
    }
    responses_[row["prompt"].get<std::string>()].push_back(row["response"].get<std::string>());
  }
}

ReplayModel ReplayModel::from_file(const std::string& path) { return ReplayModel(read_jsonl(path)); }

std::string ReplayModel::complete(const std::string& prompt, int /*max_tokens*/) {
  std::lock_guard lock(mu_);
  auto it = responses_.find(prompt);
  if (it == responses_.end()) fail(ErrorKind::Provider, "no recorded response for prompt");
  auto& pos = cursor_[prompt];
  // Repeated prompts walk the recorded responses, then stick on the last.
  const std::string& reply = it->second[std::min(pos, it->second.size() - 1)];
  ++pos;
  return reply;
}

std::string RecordingModel::complete(const std::string& prompt, int max_tokens) {
  std::string reply = inner_.complete(prompt, max_tokens);
  std::lock_guard lock(mu_);
  exchanges_.push_back(json{{"model", inner_.name()}, {"prompt", prompt}, {"response", reply}});
  return reply;
}

std::vector<json> RecordingModel::exchanges() const {
  std::lock_guard lock(mu_);
  return exchanges_;
}

}  // namespace refusal
