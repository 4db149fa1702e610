#include "apl/service.hpp"

#include <charconv>
#include <condition_variable>
#include <cstdlib>
#include <thread>

#include <httplib.h>
#include <json.hpp>

#include "apl/errors.hpp"

namespace apl {

using json = nlohmann::json;

void RunMonitor::publish(const RunConfig& cfg, const RunState& state) {
  auto snap = std::make_shared<RunSnapshot>();
  snap->attached = true;
  snap->step = state.step;
  snap->total_steps = state.total_steps;
  snap->dataset_size = state.dataset.size();
  snap->budget = cfg.budget;
  snap->batch = cfg.batch;
  snap->strategy = std::string(to_string(cfg.strategy));
  snap->mode = std::string(to_string(cfg.mode));
  snap->finished = state.finished();
  for (const auto& r : state.history)
    if (r.eval) snap->waypoint_metrics.push_back({r.dataset_size, r.eval->rate, r.eval->std_error});
  std::lock_guard lock(mu_);
  current_ = std::move(snap);
}

void RunMonitor::detach() {
  std::lock_guard lock(mu_);
  current_ = std::make_shared<RunSnapshot>();
}

std::shared_ptr<const RunSnapshot> RunMonitor::snapshot() const {
  std::lock_guard lock(mu_);
  return current_;
}

ApiOptions ApiOptions::from_env() {
  ApiOptions o;
  if (const char* t = std::getenv("APL_API_TOKEN"); t && *t) o.token = t;
  return o;
}

bool is_loopback(const std::string& host) noexcept {
  return host == "127.0.0.1" || host == "localhost" || host == "::1" || host.rfind("127.", 0) == 0;
}

namespace {

void reply(httplib::Response& res, int status, const json& body) {
  res.status = status;
  res.set_content(body.dump(), "application/json");
}

void reply_error(httplib::Response& res, int status, const std::string& message, const std::string& field = {}) {
  json body = {{"error", message}};
  if (!field.empty()) body["field"] = field;
  reply(res, status, body);
}

json pending_to_json(const PendingItem& p) {
  return {{"id", p.id}, {"prompt", p.prompt}, {"slot_a", p.slot_a}, {"slot_b", p.slot_b}, {"issued_at", p.issued_at_ms}};
}

}  // namespace

struct ApiServer::Impl {
  std::shared_ptr<HumanQueue> queue;
  std::shared_ptr<RunMonitor> monitor;
  ApiOptions options;
  httplib::Server server;
  std::thread thread;
  int port = -1;
  std::mutex done_mu;
  std::condition_variable done_cv;
  bool done = false;

  bool authorized(const httplib::Request& req, httplib::Response& res) const {
    if (!options.token) return true;
    if (req.get_header_value("Authorization") == "Bearer " + *options.token) return true;
    reply_error(res, 401, "missing or wrong bearer token");
    return false;
  }

  void routes() {
    server.Get("/api/health", [this](const httplib::Request& req, httplib::Response& res) {
      if (!authorized(req, res)) return;
      reply(res, 200, {{"status", "ok"}});
    });

    server.Get("/api/pending", [this](const httplib::Request& req, httplib::Response& res) {
      if (!authorized(req, res)) return;
      if (!queue) return reply_error(res, 503, "no run attached");
      std::size_t limit = 0;
      if (req.has_param("limit")) {
        const std::string v = req.get_param_value("limit");
        const auto [ptr, ec] = std::from_chars(v.data(), v.data() + v.size(), limit);
        if (ec != std::errc() || ptr != v.data() + v.size())
          return reply_error(res, 400, "limit must be a non-negative integer", "limit");
      }
      json items = json::array();
      for (const auto& p : queue->pending(limit)) items.push_back(pending_to_json(p));
      reply(res, 200, items);
    });

    server.Post("/api/judgements", [this](const httplib::Request& req, httplib::Response& res) {
      if (!authorized(req, res)) return;
      if (!queue) return reply_error(res, 503, "no run attached");
      const json body = json::parse(req.body, nullptr, false);
      if (body.is_discarded() || !body.is_object()) return reply_error(res, 400, "body must be a JSON object");
      if (!body.contains("id") || !body["id"].is_number_unsigned())
        return reply_error(res, 400, "id must be a non-negative integer", "id");
      if (!body.contains("preferred") || !body["preferred"].is_string())
        return reply_error(res, 400, "preferred must be \"A\" or \"B\"", "preferred");
      const auto slot = parse_slot(body["preferred"].get<std::string>());
      if (!slot) return reply_error(res, 400, "preferred must be \"A\" or \"B\"", "preferred");
      std::string rationale;
      if (body.contains("rationale") && !body["rationale"].is_null()) {
        if (!body["rationale"].is_string()) return reply_error(res, 400, "rationale must be a string", "rationale");
        rationale = body["rationale"].get<std::string>();
      }
      const auto id = body["id"].get<std::uint64_t>();
      switch (queue->post(id, *slot, rationale)) {
        case PostStatus::Accepted: return reply(res, 200, {{"id", id}, {"status", "accepted"}});
        case PostStatus::NotFound: return reply_error(res, 404, "unknown id", "id");
        case PostStatus::Conflict: return reply_error(res, 409, "already judged", "id");
      }
    });

    server.Get("/api/run", [this](const httplib::Request& req, httplib::Response& res) {
      if (!authorized(req, res)) return;
      const auto snap = monitor ? monitor->snapshot() : nullptr;
      if (!snap || !snap->attached) return reply_error(res, 503, "no run attached");
      json metrics = json::array();
      for (const auto& m : snap->waypoint_metrics)
        metrics.push_back({{"size", m.size}, {"win_rate", m.win_rate}, {"stderr", m.std_error}});
      json body = {{"step", snap->step},
                   {"total_steps", snap->total_steps},
                   {"dataset_size", snap->dataset_size},
                   {"budget", snap->budget},
                   {"batch", snap->batch},
                   {"strategy", snap->strategy},
                   {"mode", snap->mode},
                   {"finished", snap->finished},
                   {"waypoint_metrics", metrics}};
      if (queue) body["labeled_in_step"] = queue->labeled_in_batch();
      reply(res, 200, body);
    });
  }
};

ApiServer::ApiServer(std::shared_ptr<HumanQueue> queue, std::shared_ptr<RunMonitor> monitor, ApiOptions options)
    : impl_(std::make_unique<Impl>()) {
  impl_->queue = std::move(queue);
  impl_->monitor = std::move(monitor);
  impl_->options = std::move(options);
  impl_->routes();
}

ApiServer::~ApiServer() { stop(); }

int ApiServer::start() {
  const auto& o = impl_->options;
  if (!is_loopback(o.host) && !o.allow_external)
    throw ConfigError("addr", "refusing to bind " + o.host + " without --allow-external");
  if (o.port == 0) {
    impl_->port = impl_->server.bind_to_any_port(o.host);
  } else {
    impl_->port = impl_->server.bind_to_port(o.host, o.port) ? o.port : -1;
  }
  if (impl_->port < 0) throw Error("cannot bind " + o.host + ":" + std::to_string(o.port));
  impl_->done = false;
  impl_->thread = std::thread([this] {
    impl_->server.listen_after_bind();
    std::lock_guard lock(impl_->done_mu);
    impl_->done = true;
    impl_->done_cv.notify_all();
  });
  impl_->server.wait_until_ready();
  return impl_->port;
}

void ApiServer::stop() {
  if (!impl_) return;
  impl_->server.stop();
  if (impl_->thread.joinable()) impl_->thread.join();
}

void ApiServer::wait() {
  if (!impl_->thread.joinable()) return;
  std::unique_lock lock(impl_->done_mu);
  impl_->done_cv.wait(lock, [this] { return impl_->done; });
}

int ApiServer::port() const noexcept { return impl_->port; }

}  // namespace apl
