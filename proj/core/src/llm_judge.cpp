#include "apl/llm_judge.hpp"

#include <cstdlib>
#include <regex>
#include <sstream>
#include <thread>

#include <httplib.h>
#include <json.hpp>

#include "apl/errors.hpp"

namespace apl {

using json = nlohmann::json;

namespace {

class HttplibTransport final : public ChatTransport {
 public:
  HttplibTransport(std::string origin, std::string prefix, std::chrono::seconds timeout)
      : origin_(std::move(origin)), prefix_(std::move(prefix)), timeout_(timeout) {}

  HttpReply post_json(const std::string& path, const std::string& body, const Headers& headers) override {
    // one client per call keeps the transport thread-safe
    httplib::Client client(origin_);
    client.set_connection_timeout(timeout_);
    client.set_read_timeout(timeout_);
    client.set_write_timeout(timeout_);
    httplib::Headers h;
    for (const auto& [k, v] : headers) h.emplace(k, v);
    auto res = client.Post(prefix_ + path, h, body, "application/json");
    if (!res) throw TransportError("request to " + origin_ + prefix_ + path + " failed: " + httplib::to_string(res.error()));
    return {res->status, res->body};
  }

 private:
  std::string origin_;
  std::string prefix_;
  std::chrono::seconds timeout_;
};

std::string trim(std::string_view s) {
  const auto b = s.find_first_not_of(" \t\r\n");
  if (b == std::string_view::npos) return {};
  const auto e = s.find_last_not_of(" \t\r\n");
  return std::string(s.substr(b, e - b + 1));
}

}  // namespace

std::shared_ptr<ChatTransport> make_http_transport(const std::string& base_url, std::chrono::seconds timeout) {
  const auto scheme_end = base_url.find("://");
  if (scheme_end == std::string::npos) throw InvalidInput("judge base URL needs a scheme: " + base_url);
  const auto path_start = base_url.find('/', scheme_end + 3);
  std::string origin = base_url.substr(0, path_start);
  std::string prefix = path_start == std::string::npos ? "" : base_url.substr(path_start);
  while (!prefix.empty() && prefix.back() == '/') prefix.pop_back();
  return std::make_shared<HttplibTransport>(std::move(origin), std::move(prefix), timeout);
}

std::string build_chat_request(const JudgeRequest& request, const std::string& model) {
  const RenderedPrompt rendered =
      render_template(request.template_id, request.prompt, request.completion_a, request.completion_b);
  json body = {
      {"model", model},
      {"messages",
       json::array({{{"role", "system"}, {"content", rendered.system}}, {{"role", "user"}, {"content", rendered.user}}})},
      {"temperature", request.temperature},
  };
  return body.dump();
}

std::string extract_reply_content(const std::string& body) {
  const json j = json::parse(body, nullptr, false);
  if (j.is_discarded() || !j.is_object()) return body;
  try {
    return j.at("choices").at(0).at("message").at("content").get<std::string>();
  } catch (const json::exception&) {
    return body;
  }
}

std::optional<ParsedReply> parse_judge_reply(std::string_view text) {
  static const std::regex preferred(R"(Preferred:\s*["']?\s*([AB])\s*["']?\s*$)");
  static const std::regex comparison(R"(Comparison:\s*(.*)$)");
  std::optional<ParsedReply> out;
  std::optional<std::string> rationale;
  std::istringstream lines{std::string(text)};
  std::string line;
  while (std::getline(lines, line)) {
    if (!line.empty() && line.back() == '\r') line.pop_back();
    std::smatch m;
    if (std::regex_search(line, m, preferred)) {
      out = ParsedReply{m[1] == "A" ? Slot::A : Slot::B, {}};
    } else if (!rationale && std::regex_search(line, m, comparison)) {
      rationale = trim(m[1].str());
    }
  }
  if (out && rationale) out->rationale = *rationale;
  return out;
}

LlmJudge::LlmJudge(JudgeEndpoint endpoint, std::shared_ptr<ChatTransport> transport)
    : endpoint_(std::move(endpoint)), transport_(std::move(transport)) {
  if (!transport_) throw InvalidInput("LLM judge needs a transport");
  if (endpoint_.max_attempts < 1) throw InvalidInput("max_attempts must be >= 1");
  if (endpoint_.max_in_flight < 1) endpoint_.max_in_flight = 1;
}

std::string LlmJudge::ask(const JudgeRequest& request) {
  const std::string body = build_chat_request(request, endpoint_.model);
  ChatTransport::Headers headers;
  if (const char* token = std::getenv(endpoint_.token_env.c_str()); token && *token)
    headers.emplace_back("Authorization", std::string("Bearer ") + token);

  std::string last_error;
  auto backoff = endpoint_.initial_backoff;
  for (int attempt = 0; attempt < endpoint_.max_attempts; ++attempt) {
    if (attempt > 0) {
      std::this_thread::sleep_for(backoff);
      backoff *= 2;
    }
    ++calls_;
    try {
      const HttpReply reply = transport_->post_json(endpoint_.path, body, headers);
      if (reply.status >= 200 && reply.status < 300) return extract_reply_content(reply.body);
      last_error = "HTTP " + std::to_string(reply.status) + ": " + reply.body.substr(0, 200);
    } catch (const TransportError& e) {
      last_error = e.what();
    }
  }
  throw OracleUnavailable("judge endpoint unavailable after " + std::to_string(endpoint_.max_attempts) +
                          " attempts: " + last_error);
}

Verdict LlmJudge::judge(const PresentedPair& pair) {
  pair.request.validate();
  std::string raw;
  for (int ask_round = 0; ask_round < 2; ++ask_round) {
    raw = ask(pair.request);
    if (auto parsed = parse_judge_reply(raw)) return Verdict{parsed->choice, parsed->rationale, false};
  }
  throw ParseFailure("judge reply has no Preferred line after one re-ask", raw);
}

std::vector<VerdictOutcome> LlmJudge::judge_batch(std::span<const PresentedPair> pairs) {
  std::vector<VerdictOutcome> out(pairs.size());
  std::atomic<std::size_t> next{0};
  auto worker = [&] {
    for (std::size_t i = next++; i < pairs.size(); i = next++) {
      const auto t0 = std::chrono::steady_clock::now();
      try {
        out[i].verdict = judge(pairs[i]);
      } catch (...) {
        out[i].error = std::current_exception();
      }
      out[i].latency_ms =
          std::chrono::duration_cast<std::chrono::milliseconds>(std::chrono::steady_clock::now() - t0).count();
    }
  };
  const std::size_t n_threads = std::min(endpoint_.max_in_flight, pairs.size());
  std::vector<std::jthread> threads;
  for (std::size_t t = 1; t < n_threads; ++t) threads.emplace_back(worker);
  worker();
  return out;
}

}  // namespace apl
