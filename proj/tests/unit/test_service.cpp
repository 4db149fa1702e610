#include <doctest.h>

#include <thread>

#include <httplib.h>
#include <json.hpp>

#include "apl/errors.hpp"
#include "apl/service.hpp"
#include "engine_fixture.hpp"

using namespace apl;
using json = nlohmann::json;

namespace {

httplib::Client client_for(int port) {
  httplib::Client c("127.0.0.1", port);
  c.set_connection_timeout(std::chrono::seconds(5));
  c.set_read_timeout(std::chrono::seconds(5));
  return c;
}

}  // namespace

TEST_CASE("health and detached endpoints") {
  ApiServer server(nullptr, nullptr);
  const int port = server.start();
  CHECK(port > 0);
  auto c = client_for(port);
  auto res = c.Get("/api/health");
  REQUIRE(res);
  CHECK(res->status == 200);
  CHECK(json::parse(res->body)["status"] == "ok");
  CHECK(c.Get("/api/pending")->status == 503);
  CHECK(c.Get("/api/run")->status == 503);
  CHECK(c.Post("/api/judgements", R"({"id":1,"preferred":"A"})", "application/json")->status == 503);
  server.stop();
}

TEST_CASE("labelers list and answer pending comparisons") {
  auto queue = std::make_shared<HumanQueue>();
  ApiServer server(queue, std::make_shared<RunMonitor>());
  auto c = client_for(server.start());

  auto f1 = queue->submit({7, "the movie was", "great", "bad", 0});
  auto f2 = queue->submit({8, "the plot was", "fun", "boring", 0});

  auto res = c.Get("/api/pending");
  REQUIRE(res);
  REQUIRE(res->status == 200);
  const auto items = json::parse(res->body);
  REQUIRE(items.size() == 2);
  CHECK(items[0]["id"] == 7);
  CHECK(items[0]["prompt"] == "the movie was");
  CHECK(items[0]["slot_a"] == "great");
  CHECK(items[0]["slot_b"] == "bad");
  CHECK(items[0]["issued_at"].get<std::int64_t>() > 0);
  CHECK(json::parse(c.Get("/api/pending?limit=1")->body).size() == 1);
  CHECK(c.Get("/api/pending?limit=x")->status == 400);

  res = c.Post("/api/judgements", R"({"id":7,"preferred":"A","rationale":"upbeat"})", "application/json");
  REQUIRE(res);
  CHECK(res->status == 200);
  const auto v = f1.get();
  CHECK(v.choice == Slot::A);
  CHECK(v.rationale == "upbeat");

  CHECK(c.Post("/api/judgements", R"({"id":7,"preferred":"B"})", "application/json")->status == 409);
  CHECK(c.Post("/api/judgements", R"({"id":99,"preferred":"B"})", "application/json")->status == 404);
  CHECK(json::parse(c.Get("/api/pending")->body).size() == 1);

  const auto bad = [&](const std::string& body, const std::string& field) {
    auto r = c.Post("/api/judgements", body, "application/json");
    REQUIRE(r);
    CHECK(r->status == 400);
    if (!field.empty()) CHECK(json::parse(r->body)["field"] == field);
  };
  bad("not json", "");
  bad(R"({"preferred":"A"})", "id");
  bad(R"({"id":-8,"preferred":"A"})", "id");
  bad(R"({"id":8,"preferred":"C"})", "preferred");
  bad(R"({"id":8})", "preferred");
  bad(R"({"id":8,"preferred":"A","rationale":5})", "rationale");

  CHECK(c.Post("/api/judgements", R"({"id":8,"preferred":"B"})", "application/json")->status == 200);
  CHECK(f2.get().choice == Slot::B);
  server.stop();
}

TEST_CASE("run endpoint reports a live snapshot") {
  testing::SmallRun f;
  auto monitor = std::make_shared<RunMonitor>();
  auto queue = std::make_shared<HumanQueue>();
  ApiServer server(queue, monitor);
  auto c = client_for(server.start());

  auto oracle = f.oracle();
  Engine engine(f.cfg, f.theta0, f.pools, oracle, f.ctx());
  engine.add_sink(monitor.get());
  engine.step();
  engine.step();

  auto res = c.Get("/api/run");
  REQUIRE(res);
  REQUIRE(res->status == 200);
  auto body = json::parse(res->body);
  CHECK(body["step"] == 2);
  CHECK(body["total_steps"] == 4);
  CHECK(body["dataset_size"] == 16);
  CHECK(body["budget"] == 32);
  CHECK(body["strategy"] == "certainty");
  CHECK(body["finished"] == false);
  CHECK(body["labeled_in_step"] == 0);
  REQUIRE(body["waypoint_metrics"].size() == 2);
  CHECK(body["waypoint_metrics"][1]["size"] == 16);
  CHECK(body["waypoint_metrics"][1]["win_rate"].get<double>() == engine.state().history[2].eval->rate);

  engine.run();
  CHECK(json::parse(c.Get("/api/run")->body)["finished"] == true);
  monitor->detach();
  CHECK(c.Get("/api/run")->status == 503);
  server.stop();
}

TEST_CASE("bearer token guards every endpoint") {
  ApiOptions opts;
  opts.token = "s3cret";
  ApiServer server(std::make_shared<HumanQueue>(), nullptr, opts);
  auto c = client_for(server.start());
  CHECK(c.Get("/api/health")->status == 401);
  CHECK(c.Get("/api/pending")->status == 401);
  c.set_bearer_token_auth("s3cret");
  CHECK(c.Get("/api/health")->status == 200);
  CHECK(c.Get("/api/pending")->status == 200);
  server.stop();

  ::setenv("APL_API_TOKEN", "from-env", 1);
  CHECK(ApiOptions::from_env().token == std::optional<std::string>("from-env"));
  ::unsetenv("APL_API_TOKEN");
  CHECK(!ApiOptions::from_env().token);
}

TEST_CASE("binding beyond loopback needs explicit consent") {
  CHECK(is_loopback("127.0.0.1"));
  CHECK(is_loopback("localhost"));
  CHECK(is_loopback("::1"));
  CHECK(!is_loopback("0.0.0.0"));
  ApiOptions opts;
  opts.host = "0.0.0.0";
  ApiServer server(nullptr, nullptr, opts);
  try {
    server.start();
    FAIL("expected a config error");
  } catch (const ConfigError& e) {
    CHECK(e.field() == "addr");
  }
}

TEST_CASE("wait returns once another thread stops the server") {
  ApiServer server(nullptr, nullptr);
  server.start();
  std::thread stopper([&] {
    std::this_thread::sleep_for(std::chrono::milliseconds(50));
    server.stop();
  });
  server.wait();
  stopper.join();
  CHECK(server.port() > 0);
}

TEST_CASE("a human-labelled step completes through the HTTP API") {
  testing::SmallRun f;
  f.cfg.eval_waypoints = {};
  auto queue = std::make_shared<HumanQueue>();
  auto monitor = std::make_shared<RunMonitor>();
  ApiServer server(queue, monitor);
  const int port = server.start();
  HumanOracle oracle(queue);
  Engine engine(f.cfg, f.theta0, f.pools, oracle, f.ctx());
  engine.add_sink(monitor.get());

  std::thread labeler([&] {
    auto c = client_for(port);
    std::size_t answered = 0;
    while (answered < f.cfg.batch) {
      auto res = c.Get("/api/pending");
      if (!res) continue;
      for (const auto& item : json::parse(res->body)) {
        const json post = {{"id", item["id"]}, {"preferred", "A"}};
        if (c.Post("/api/judgements", post.dump(), "application/json")->status == 200) ++answered;
      }
      std::this_thread::sleep_for(std::chrono::milliseconds(2));
    }
  });
  engine.step();
  labeler.join();
  CHECK(engine.state().dataset.size() == f.cfg.batch);
  for (const auto& j : engine.state().judgements) {
    CHECK(j.raw_choice == Slot::A);
    CHECK(j.oracle_id == "human");
  }
  CHECK(json::parse(client_for(port).Get("/api/run")->body)["labeled_in_step"] == f.cfg.batch);
  server.stop();
}
