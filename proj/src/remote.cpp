#include "steered/remote.hpp"

#include <chrono>
#include <cmath>

#include <httplib.h>
#include <json.hpp>

#include "steered/error.hpp"

namespace steered {

namespace {

using json = nlohmann::json;

struct ParsedUrl {
  std::string origin;  // scheme://host[:port]
  std::string prefix;  // path prefix without trailing slash
};

ParsedUrl parse_url(const std::string& url) {
  const auto scheme_end = url.find("://");
  if (scheme_end == std::string::npos || !is_remote_url(url)) {
    fail(ErrorKind::usage, "not an http(s) URL: '" + url + "'");
  }
  const auto path_start = url.find('/', scheme_end + 3);
  ParsedUrl parsed;
  parsed.origin = url.substr(0, path_start);
  if (path_start != std::string::npos) parsed.prefix = url.substr(path_start);
  while (!parsed.prefix.empty() && parsed.prefix.back() == '/') parsed.prefix.pop_back();
  if (parsed.origin.size() <= scheme_end + 3) fail(ErrorKind::usage, "URL has no host: '" + url + "'");
  return parsed;
}

httplib::Client make_client(const ParsedUrl& url, int timeout_ms) {
  httplib::Client client(url.origin);
  const auto timeout = std::chrono::milliseconds(timeout_ms);
  client.set_connection_timeout(timeout);
  client.set_read_timeout(timeout);
  client.set_write_timeout(timeout);
  client.set_keep_alive(false);
  return client;
}

std::string describe(const httplib::Result& result) {
  return httplib::to_string(result.error());
}

/// Sends one request. Transport failures throw transport errors, non-200
/// replies and unparseable bodies throw protocol errors.
json exchange(const std::string& base_url, int timeout_ms, const std::string& method,
              const std::string& path, const std::optional<json>& body, int* status_out = nullptr) {
  const auto url = parse_url(base_url);
  auto client = make_client(url, timeout_ms);
  const auto full_path = url.prefix + path;
  httplib::Result result = method == "GET"
                               ? client.Get(full_path)
                               : client.Post(full_path, body ? body->dump() : std::string("{}"),
                                             "application/json");
  if (!result) {
    fail(ErrorKind::transport, method + " " + base_url + path + " failed: " + describe(result));
  }
  if (status_out) *status_out = result->status;
  if (result->status != 200) {
    std::string message = "HTTP " + std::to_string(result->status);
    try {
      auto err = json::parse(result->body);
      if (err.is_object() && err.contains("error") && err["error"].is_string()) {
        message += ": " + err["error"].get<std::string>();
      }
    } catch (const json::exception&) {
    }
    fail(ErrorKind::protocol, method + " " + base_url + path + " returned " + message);
  }
  try {
    return json::parse(result->body);
  } catch (const json::exception& e) {
    fail(ErrorKind::protocol, method + " " + base_url + path + ": malformed JSON reply (" +
                                  e.what() + ")");
  }
}

json exchange_with_retries(const RemoteEndpoint& endpoint, const std::string& path,
                           const json& body) {
  for (int attempt = 0;; ++attempt) {
    try {
      return exchange(endpoint.base_url(), endpoint.timeout_ms(), "POST", path, body);
    } catch (const Error& e) {
      if (e.kind() != ErrorKind::transport || attempt >= kRemoteRetries) throw;
    }
  }
}

std::vector<TokenId> parse_ids(const json& reply, std::size_t vocab_size, const std::string& where) {
  if (!reply.is_object() || !reply.contains("ids") || !reply["ids"].is_array()) {
    fail(ErrorKind::protocol, where + ": reply lacks an 'ids' array");
  }
  std::vector<TokenId> ids;
  for (const auto& v : reply["ids"]) {
    if (!v.is_number_integer()) fail(ErrorKind::protocol, where + ": non-integer token id");
    const auto id = v.get<std::int64_t>();
    if (id < 0 || static_cast<std::size_t>(id) >= vocab_size) {
      fail(ErrorKind::protocol, where + ": token id " + std::to_string(id) + " out of range");
    }
    ids.push_back(static_cast<TokenId>(id));
  }
  return ids;
}

}  // namespace

bool is_remote_url(std::string_view ref) {
  return ref.starts_with("http://") || ref.starts_with("https://");
}

RemoteEndpoint handshake(const std::string& url, int timeout_ms) {
  if (timeout_ms <= 0) fail(ErrorKind::usage, "timeout must be positive");
  const json reply = exchange(url, timeout_ms, "GET", "/v1/vocab", std::nullopt);
  const std::string where = url + "/v1/vocab";
  if (!reply.is_object()) fail(ErrorKind::protocol, where + ": reply is not an object");
  if (!reply.contains("size") || !reply["size"].is_number_integer() ||
      reply["size"].get<std::int64_t>() <= 0) {
    fail(ErrorKind::protocol, where + ": missing or invalid 'size'");
  }
  if (!reply.contains("fingerprint") || !reply["fingerprint"].is_string()) {
    fail(ErrorKind::protocol, where + ": missing 'fingerprint'");
  }
  auto fingerprint = parse_fingerprint_hex(reply["fingerprint"].get<std::string>());
  if (!fingerprint) fail(ErrorKind::protocol, where + ": fingerprint is not 16 hex characters");
  if (!reply.contains("eos_id") || !reply["eos_id"].is_number_integer()) {
    fail(ErrorKind::protocol, where + ": missing 'eos_id'");
  }
  RemoteEndpoint endpoint;
  endpoint.base_url_ = url;
  while (!endpoint.base_url_.empty() && endpoint.base_url_.back() == '/') endpoint.base_url_.pop_back();
  endpoint.timeout_ms_ = timeout_ms;
  endpoint.vocab_size_ = reply["size"].get<std::size_t>();
  endpoint.fingerprint_ = *fingerprint;
  const auto eos = reply["eos_id"].get<std::int64_t>();
  if (eos < 0 || static_cast<std::size_t>(eos) >= endpoint.vocab_size_) {
    fail(ErrorKind::protocol, where + ": eos_id out of range");
  }
  endpoint.eos_id_ = static_cast<TokenId>(eos);
  return endpoint;
}

LogitVector remote_logits(const RemoteEndpoint& endpoint, std::span<const TokenId> context,
                          std::int64_t request_id) {
  json body = {{"id", request_id}, {"ids", std::vector<TokenId>(context.begin(), context.end())}};
  const json reply = exchange_with_retries(endpoint, "/v1/logits", body);
  const std::string where = endpoint.base_url() + "/v1/logits";
  if (!reply.is_object()) fail(ErrorKind::protocol, where + ": reply is not an object");
  if (!reply.contains("id") || !reply["id"].is_number_integer() ||
      reply["id"].get<std::int64_t>() != request_id) {
    fail(ErrorKind::protocol, where + ": reply id does not match request id " +
                                  std::to_string(request_id));
  }
  if (!reply.contains("logits") || !reply["logits"].is_array()) {
    fail(ErrorKind::protocol, where + ": reply lacks a 'logits' array");
  }
  const auto& values = reply["logits"];
  if (values.size() != endpoint.vocab_size()) {
    fail(ErrorKind::protocol, where + ": got " + std::to_string(values.size()) +
                                  " logits, expected " + std::to_string(endpoint.vocab_size()));
  }
  LogitVector z;
  z.values.reserve(values.size());
  for (std::size_t i = 0; i < values.size(); ++i) {
    if (!values[i].is_number()) {
      fail(ErrorKind::protocol, where + ": logit " + std::to_string(i) + " is not a number");
    }
    const double v = values[i].get<double>();
    if (!std::isfinite(v)) {
      fail(ErrorKind::protocol, where + ": logit " + std::to_string(i) + " is not finite");
    }
    z.values.push_back(v);
  }
  return z;
}

std::vector<TokenId> remote_tokenize(const RemoteEndpoint& endpoint, std::string_view text) {
  const json reply =
      exchange_with_retries(endpoint, "/v1/tokenize", json{{"text", std::string(text)}});
  return parse_ids(reply, endpoint.vocab_size(), endpoint.base_url() + "/v1/tokenize");
}

RemoteProvider::RemoteProvider(RemoteEndpoint endpoint) : endpoint_(std::move(endpoint)) {}

std::string RemoteProvider::name() const { return "remote(" + endpoint_.base_url() + ")"; }

LogitVector RemoteProvider::next_logits(std::span<const TokenId> context) const {
  for (TokenId id : context) {
    if (id < 0 || static_cast<std::size_t>(id) >= endpoint_.vocab_size()) {
      fail(ErrorKind::out_of_range, "context token id " + std::to_string(id) +
                                        " outside remote vocabulary of size " +
                                        std::to_string(endpoint_.vocab_size()));
    }
  }
  return remote_logits(endpoint_, context, next_id_.fetch_add(1));
}

std::vector<TokenId> RemoteProvider::tokenize(std::string_view text) const {
  return remote_tokenize(endpoint_, text);
}

std::string RemoteProvider::detokenize(std::span<const TokenId> ids) const {
  int status = 0;
  try {
    const json reply =
        exchange(endpoint_.base_url(), endpoint_.timeout_ms(), "POST", "/v1/detokenize",
                 json{{"ids", std::vector<TokenId>(ids.begin(), ids.end())}}, &status);
    if (reply.is_object() && reply.contains("text") && reply["text"].is_string()) {
      return reply["text"].get<std::string>();
    }
  } catch (const Error& e) {
    if (e.kind() == ErrorKind::transport) throw;
  }
  std::string out;
  for (std::size_t i = 0; i < ids.size(); ++i) {
    if (i) out.push_back(' ');
    out += "[" + std::to_string(ids[i]) + "]";
  }
  return out;
}

std::optional<TokenId> RemoteProvider::single_token(std::string_view token) const {
  auto ids = tokenize(token);
  if (ids.size() != 1) return std::nullopt;
  return ids.front();
}

}  // namespace steered
