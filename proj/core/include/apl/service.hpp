#pragma once

#include <memory>
#include <mutex>
#include <optional>
#include <string>
#include <vector>

#include "apl/engine.hpp"
#include "apl/human_queue.hpp"

namespace apl {

struct WaypointMetric {
  std::size_t size = 0;
  double win_rate = 0.0;
  double std_error = 0.0;
};

/// Immutable view of a run between engine steps.
struct RunSnapshot {
  bool attached = false;
  std::size_t step = 0;
  std::size_t total_steps = 0;
  std::size_t dataset_size = 0;
  std::size_t budget = 0;
  std::size_t batch = 0;
  std::string strategy;
  std::string mode;
  bool finished = false;
  std::vector<WaypointMetric> waypoint_metrics;
};

/// Sink that publishes a snapshot after every engine transition. Readers on other
/// threads always see a whole snapshot.
class RunMonitor final : public RunSink {
 public:
  void on_start(const RunConfig& cfg, const RunState& state) override { publish(cfg, state); }
  void on_step(const RunConfig& cfg, const RunState& state, const StepDelta&) override { publish(cfg, state); }
  void on_finish(const RunConfig& cfg, const RunState& state) override { publish(cfg, state); }

  void publish(const RunConfig& cfg, const RunState& state);
  void detach();
  std::shared_ptr<const RunSnapshot> snapshot() const;

 private:
  mutable std::mutex mu_;
  std::shared_ptr<const RunSnapshot> current_ = std::make_shared<RunSnapshot>();
};

struct ApiOptions {
  std::string host = "127.0.0.1";
  int port = 0;                 ///< 0 picks a free port
  bool allow_external = false;  ///< required to bind anything but loopback
  /// Bearer token checked on every request when set. Defaults to $APL_API_TOKEN.
  std::optional<std::string> token;

  static ApiOptions from_env();
};

bool is_loopback(const std::string& host) noexcept;

/// JSON-over-HTTP front for the human queue and run metrics:
///   GET /api/pending?limit=k   GET /api/run   GET /api/health   POST /api/judgements
/// Either dependency may be null; the endpoints that need it then answer 503.
class ApiServer {
 public:
  ApiServer(std::shared_ptr<HumanQueue> queue, std::shared_ptr<RunMonitor> monitor, ApiOptions options = {});
  ~ApiServer();
  ApiServer(const ApiServer&) = delete;
  ApiServer& operator=(const ApiServer&) = delete;

  /// Binds and serves on a background thread; returns the bound port.
  /// Throws ConfigError("addr", ..) for a non-loopback host without allow_external.
  int start();
  void stop();
  /// Blocks until stop() is called from another thread.
  void wait();
  int port() const noexcept;

 private:
  struct Impl;
  std::unique_ptr<Impl> impl_;
};

}  // namespace apl
