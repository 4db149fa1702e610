#pragma once

#include <atomic>
#include <chrono>
#include <memory>
#include <optional>
#include <string>
#include <string_view>
#include <utility>
#include <vector>

#include "apl/errors.hpp"
#include "apl/oracle.hpp"

namespace apl {

struct HttpReply {
  int status = 0;
  std::string body;
};

/// Raised by transports when no HTTP response was obtained at all.
class TransportError : public Error {
 public:
  using Error::Error;
  const char* kind() const noexcept override { return "transport"; }
};

/// Minimal POST-JSON transport. Implementations must be safe to call from
/// several threads at once.
class ChatTransport {
 public:
  using Headers = std::vector<std::pair<std::string, std::string>>;
  virtual ~ChatTransport() = default;
  virtual HttpReply post_json(const std::string& path, const std::string& body, const Headers& headers) = 0;
};

/// cpp-httplib backed transport; `base_url` is scheme://host[:port] plus an optional path prefix.
std::shared_ptr<ChatTransport> make_http_transport(const std::string& base_url,
                                                   std::chrono::seconds timeout = std::chrono::seconds(60));

struct JudgeEndpoint {
  std::string base_url;                       ///< e.g. https://api.openai.com/v1
  std::string path = "/chat/completions";
  std::string model = "gpt-4-1106-preview";
  std::string token_env = "APL_JUDGE_TOKEN";  ///< bearer token is read from this variable per call
  int max_attempts = 3;
  std::chrono::milliseconds initial_backoff{500};
  std::size_t max_in_flight = 4;
  int timeout_seconds = 60;
};

/// Chat-completion request body: {"model", "messages":[system,user], "temperature"}.
std::string build_chat_request(const JudgeRequest& request, const std::string& model);

/// Pulls choices[0].message.content out of a chat-completion response.
/// Falls back to the raw body when it is not a chat-completion JSON object.
std::string extract_reply_content(const std::string& body);

struct ParsedReply {
  Slot choice = Slot::A;
  std::string rationale;
};

/// Takes the last line matching `Preferred: "?[AB]"?` and the first `Comparison:` line.
std::optional<ParsedReply> parse_judge_reply(std::string_view text);

/// Remote chat-model judge rendering the stored templates.
class LlmJudge final : public Oracle {
 public:
  LlmJudge(JudgeEndpoint endpoint, std::shared_ptr<ChatTransport> transport);

  std::string id() const override { return "llm:" + endpoint_.model; }
  Verdict judge(const PresentedPair& pair) override;
  /// Up to endpoint.max_in_flight requests run concurrently.
  std::vector<VerdictOutcome> judge_batch(std::span<const PresentedPair> pairs) override;

  /// Every HTTP request issued, including retries and re-asks.
  std::size_t calls_attempted() const noexcept { return calls_.load(); }

 private:
  std::string ask(const JudgeRequest& request);

  JudgeEndpoint endpoint_;
  std::shared_ptr<ChatTransport> transport_;
  std::atomic<std::size_t> calls_{0};
};

}  // namespace apl
