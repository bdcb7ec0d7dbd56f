#pragma once

#include <chrono>
#include <cstddef>
#include <memory>
#include <semaphore>
#include <string>
#include <string_view>
#include <vector>

#include <nlohmann/json.hpp>

#include "rulesmith/error.hpp"

namespace rulesmith {

class AgentError : public Error {
 public:
  using Error::Error;
};

/// The endpoint could not produce a usable answer within the retry budget.
class AgentUnavailable : public AgentError {
 public:
  using AgentError::AgentError;
};

/// The endpoint answered, but the payload broke the reply contract. `field`
/// names the offending field when there is one.
class ProtocolError : public AgentUnavailable {
 public:
  explicit ProtocolError(const std::string& message, std::string field = {})
      : AgentUnavailable(message), field_(std::move(field)) {}

  const std::string& field() const noexcept { return field_; }

 private:
  std::string field_;
};

struct EndpointConfig {
  std::string url;  // scheme://host[:port][/path]; path defaults to /v1/chat/completions
  std::string model = "default";
  std::string api_key;
  std::chrono::milliseconds timeout{30'000};
  std::size_t max_concurrency = 4;
  std::size_t max_attempts = 3;

  /// Fills `api_key` from the environment variable when it is set.
  static EndpointConfig from_env(std::string url, const char* key_variable);
};

struct ChatMessage {
  std::string role;
  std::string content;
};

/// POSTs chat-completions requests. Shareable across threads; at most
/// `max_concurrency` requests are in flight at once.
class ChatTransport {
 public:
  explicit ChatTransport(EndpointConfig config);
  ~ChatTransport();

  ChatTransport(const ChatTransport&) = delete;
  ChatTransport& operator=(const ChatTransport&) = delete;

  /// One request, no retries. Returns choices[0].message.content; throws
  /// AgentUnavailable on transport or HTTP failure, ProtocolError when the
  /// response envelope is malformed.
  std::string complete(const std::vector<ChatMessage>& messages);

  const EndpointConfig& config() const noexcept { return config_; }

  /// Runs a conversation until `parse` accepts a reply. A ProtocolError from
  /// `parse` is echoed back to the model before the next attempt; transport
  /// failures are retried as-is. The final error is rethrown once
  /// `max_attempts` is spent.
  template <typename Parse>
  auto converse(std::vector<ChatMessage> messages, Parse&& parse) -> decltype(parse(std::string{}));

 private:
  EndpointConfig config_;
  std::string scheme_host_port_;
  std::string path_;
  std::counting_semaphore<1024> slots_;
};

/// Extracts the single fenced block from a reply and parses it as a JSON
/// object. Throws ProtocolError otherwise.
nlohmann::json parse_fenced_object(std::string_view reply);

template <typename Parse>
auto ChatTransport::converse(std::vector<ChatMessage> messages, Parse&& parse) -> decltype(parse(std::string{})) {
  std::string last_error = "no attempts made";
  bool last_was_protocol = false;
  std::string last_field;
  const std::size_t attempts = config_.max_attempts == 0 ? 1 : config_.max_attempts;
  for (std::size_t attempt = 0; attempt < attempts; ++attempt) {
    std::string reply;
    try {
      reply = complete(messages);
    } catch (const ProtocolError& e) {
      last_error = e.what();
      last_field = e.field();
      last_was_protocol = true;
      continue;
    } catch (const AgentUnavailable& e) {
      last_error = e.what();
      last_was_protocol = false;
      continue;
    }
    try {
      return parse(reply);
    } catch (const ProtocolError& e) {
      last_error = e.what();
      last_field = e.field();
      last_was_protocol = true;
      messages.push_back({"assistant", reply});
      messages.push_back({"user", std::string("Your reply could not be used: ") + e.what() +
                                      ". Answer again with exactly one fenced JSON block."});
    }
  }
  const auto message = "agent gave no usable reply after " + std::to_string(attempts) + " attempts: " + last_error;
  if (last_was_protocol) throw ProtocolError(message, last_field);
  throw AgentUnavailable(message);
}

}  // namespace rulesmith
