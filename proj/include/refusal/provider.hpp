#pragma once

#include <chrono>
#include <functional>
#include <map>
#include <mutex>
#include <span>
#include <string>
#include <vector>

#include "refusal/io.hpp"

namespace refusal {

/// Text-completion backend used by the judge, the collection verifier and
/// the synthetic generator. Implementations must be safe to call from
/// several threads.
class TextModel {
 public:
  virtual ~TextModel() = default;
  virtual std::string complete(const std::string& prompt, int max_tokens) = 0;
  virtual std::string name() const = 0;
};

/// Embedding backend. `ids` and `texts` are parallel; file-backed providers
/// look vectors up by id, remote ones embed the text.
class EmbeddingProvider {
 public:
  virtual ~EmbeddingProvider() = default;
  virtual std::vector<std::vector<float>> embed(std::span<const std::string> ids,
                                                std::span<const std::string> texts) = 0;
};

struct RetryPolicy {
  int attempts = 3;
  std::chrono::milliseconds initial_backoff{200};
};

struct HttpEndpoint {
  std::string url;  // scheme://host[:port][/base]
  std::string api_key;
  int timeout_seconds = 60;
};

/// POSTs a JSON body and returns the parsed JSON reply. Retries transport
/// failures and 5xx/429 replies with exponential backoff, then throws
/// ProviderError.
json post_json(const HttpEndpoint& endpoint, const std::string& path, const json& body,
               const RetryPolicy& retry = {});

/// POST {model, prompt, max_tokens} -> {text}
class HttpTextModel : public TextModel {
 public:
  HttpTextModel(HttpEndpoint endpoint, std::string model, RetryPolicy retry = {});
  /// Reads LLM_API_URL, LLM_API_KEY and LLM_MODEL; ProviderError if the URL is unset.
  static HttpTextModel from_env();

  std::string complete(const std::string& prompt, int max_tokens) override;
  std::string name() const override { return model_; }

 private:
  HttpEndpoint endpoint_;
  std::string model_;
  RetryPolicy retry_;
};

/// POST {texts:[...]} -> {vectors:[[...]...]}
class HttpEmbeddingProvider : public EmbeddingProvider {
 public:
  explicit HttpEmbeddingProvider(HttpEndpoint endpoint, RetryPolicy retry = {});
  /// Reads EMBED_API_URL and EMBED_API_KEY.
  static HttpEmbeddingProvider from_env();

  std::vector<std::vector<float>> embed(std::span<const std::string> ids,
                                        std::span<const std::string> texts) override;

 private:
  HttpEndpoint endpoint_;
  RetryPolicy retry_;
};

/// Model backed by a callable; used for offline runs and tests.
class ScriptedModel : public TextModel {
 public:
  using Responder = std::function<std::string(const std::string& prompt)>;
  ScriptedModel(std::string name, Responder responder);

  std::string complete(const std::string& prompt, int max_tokens) override;
  std::string name() const override { return name_; }
  std::size_t calls() const;

 private:
  std::string name_;
  Responder responder_;
  mutable std::mutex mu_;
  std::size_t calls_ = 0;
};

/// Replays recorded provider responses keyed by exact prompt text. Rows are
/// audit-log lines carrying "prompt" and "response"; the model name comes
/// from the first row's "model" field when present.
class ReplayModel : public TextModel {
 public:
  explicit ReplayModel(const std::vector<json>& rows);
  static ReplayModel from_file(const std::string& path);

  /// ProviderError when the prompt was never recorded.
  std::string complete(const std::string& prompt, int max_tokens) override;
  std::string name() const override { return name_; }

 private:
  std::string name_ = "replay";
  std::map<std::string, std::vector<std::string>> responses_;
  std::map<std::string, std::size_t> cursor_;
  std::mutex mu_;
};

/// Wraps a model and keeps every (prompt, response) exchange so callers
/// can write them to an audit log for later replay.
class RecordingModel : public TextModel {
 public:
  explicit RecordingModel(TextModel& inner) : inner_(inner) {}

  std::string complete(const std::string& prompt, int max_tokens) override;
  std::string name() const override { return inner_.name(); }

  std::vector<json> exchanges() const;

 private:
  TextModel& inner_;
  mutable std::mutex mu_;
  std::vector<json> exchanges_;
};

}  // namespace refusal
