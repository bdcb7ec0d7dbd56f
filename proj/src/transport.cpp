#include "rulesmith/transport.hpp"

#include <cstdlib>

#include <httplib.h>

#include "rulesmith/text.hpp"

namespace rulesmith {

using nlohmann::json;

EndpointConfig EndpointConfig::from_env(std::string url, const char* key_variable) {
  EndpointConfig config;
  config.url = std::move(url);
  if (const char* key = std::getenv(key_variable)) config.api_key = key;
  return config;
}

namespace {

std::size_t clamp_slots(std::size_t n) { return n == 0 ? 1 : (n > 1024 ? 1024 : n); }

class SlotGuard {
 public:
  explicit SlotGuard(std::counting_semaphore<1024>& slots) : slots_(slots) { slots_.acquire(); }
  ~SlotGuard() { slots_.release(); }
  SlotGuard(const SlotGuard&) = delete;
  SlotGuard& operator=(const SlotGuard&) = delete;

 private:
  std::counting_semaphore<1024>& slots_;
};

}  // namespace

ChatTransport::ChatTransport(EndpointConfig config)
    : config_(std::move(config)), slots_(static_cast<std::ptrdiff_t>(clamp_slots(config_.max_concurrency))) {
  const auto scheme_end = config_.url.find("://");
  if (scheme_end == std::string::npos) throw AgentError("endpoint URL needs a scheme: " + config_.url);
  const auto path_start = config_.url.find('/', scheme_end + 3);
  if (path_start == std::string::npos) {
    scheme_host_port_ = config_.url;
    path_ = "/v1/chat/completions";
  } else {
    scheme_host_port_ = config_.url.substr(0, path_start);
    path_ = config_.url.substr(path_start);
  }
}

ChatTransport::~ChatTransport() = default;

std::string ChatTransport::complete(const std::vector<ChatMessage>& messages) {
  json body;
  body["model"] = config_.model;
  body["temperature"] = 0;
  body["messages"] = json::array();
  for (const auto& m : messages) body["messages"].push_back({{"role", m.role}, {"content", m.content}});

  httplib::Result result;
  {
    SlotGuard guard(slots_);
    httplib::Client client(scheme_host_port_);
    const auto seconds = std::chrono::duration_cast<std::chrono::seconds>(config_.timeout);
    const auto micros = std::chrono::duration_cast<std::chrono::microseconds>(config_.timeout - seconds);
    client.set_connection_timeout(seconds.count(), micros.count());
    client.set_read_timeout(seconds.count(), micros.count());
    client.set_write_timeout(seconds.count(), micros.count());
    httplib::Headers headers;
    if (!config_.api_key.empty()) headers.emplace("Authorization", "Bearer " + config_.api_key);
    result = client.Post(path_, headers, body.dump(), "application/json");
  }

  if (!result) {
    throw AgentUnavailable("request to " + scheme_host_port_ + path_ + " failed: " + httplib::to_string(result.error()));
  }
  if (result->status != 200) {
    throw AgentUnavailable("endpoint returned HTTP " + std::to_string(result->status));
  }
  json envelope;
  try {
    envelope = json::parse(result->body);
  } catch (const json::parse_error& e) {
    throw ProtocolError(std::string("response body is not JSON: ") + e.what());
  }
  const auto* content = [&]() -> const json* {
    if (!envelope.is_object()) return nullptr;
    auto choices = envelope.find("choices");
    if (choices == envelope.end() || !choices->is_array() || choices->empty()) return nullptr;
    const auto& first = (*choices)[0];
    if (!first.is_object() || !first.contains("message") || !first["message"].is_object()) return nullptr;
    auto it = first["message"].find("content");
    return (it != first["message"].end() && it->is_string()) ? &*it : nullptr;
  }();
  if (!content) throw ProtocolError("response lacks choices[0].message.content", "content");
  return content->get<std::string>();
}

json parse_fenced_object(std::string_view reply) {
  constexpr std::string_view fence = "```";
  const auto open = reply.find(fence);
  if (open == std::string_view::npos) throw ProtocolError("reply contains no fenced block");
  const auto body_start = reply.find('\n', open + fence.size());
  if (body_start == std::string_view::npos) throw ProtocolError("fenced block is not terminated");
  const auto close = reply.find(fence, body_start + 1);
  if (close == std::string_view::npos) throw ProtocolError("fenced block is not terminated");
  if (reply.find(fence, close + fence.size()) != std::string_view::npos) {
    throw ProtocolError("reply contains more than one fenced block");
  }
  json object;
  try {
    object = json::parse(reply.substr(body_start + 1, close - body_start - 1));
  } catch (const json::parse_error& e) {
    throw ProtocolError(std::string("fenced block is not valid JSON: ") + e.what());
  }
  if (!object.is_object()) throw ProtocolError("fenced block must hold a JSON object");
  return object;
}

}  // namespace rulesmith
