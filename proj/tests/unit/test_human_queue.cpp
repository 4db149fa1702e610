#include <doctest.h>

#include <thread>

#include "apl/errors.hpp"
#include "apl/human_queue.hpp"
#include "apl/synthetic.hpp"
#include "support.hpp"

using namespace apl;
using namespace std::chrono_literals;
using testing::seq;

TEST_CASE("posting a pending item resolves the submission") {
  HumanQueue q;
  auto f = q.submit({5, "p", "a", "b", 0});
  REQUIRE(q.pending().size() == 1);
  CHECK(q.pending()[0].issued_at_ms > 0);
  CHECK(q.post(5, Slot::B, "b reads better") == PostStatus::Accepted);
  const auto v = f.get();
  CHECK(v.choice == Slot::B);
  CHECK(v.rationale == "b reads better");
  CHECK(q.pending().empty());
}

TEST_CASE("unknown ids and duplicate posts are rejected") {
  HumanQueue q;
  auto f = q.submit({1, "p", "a", "b", 0});
  CHECK(q.post(2, Slot::A) == PostStatus::NotFound);
  CHECK(q.pending().size() == 1);
  CHECK(q.post(1, Slot::A) == PostStatus::Accepted);
  CHECK(q.post(1, Slot::B) == PostStatus::Conflict);
  CHECK(f.get().choice == Slot::A);
  CHECK_THROWS_AS(q.submit({1, "p", "a", "b", 0}), InvalidInput);
}

TEST_CASE("pending lists in id order with a limit") {
  HumanQueue q;
  std::vector<std::future<Verdict>> fs;
  for (std::uint64_t id : {9, 3, 7}) fs.push_back(q.submit({id, "p", "a", "b", 0}));
  const auto all = q.pending();
  REQUIRE(all.size() == 3);
  CHECK(all[0].id == 3);
  CHECK(q.pending(2).size() == 2);
}

TEST_CASE("abort cancels pending and later submissions") {
  HumanQueue q;
  auto f = q.submit({1, "p", "a", "b", 0});
  q.abort("shutdown");
  CHECK(q.aborted());
  CHECK_THROWS_AS(f.get(), Cancelled);
  CHECK_THROWS_AS(q.submit({2, "p", "a", "b", 0}).get(), Cancelled);
}

TEST_CASE("human oracle blocks until labelers answer, then demaps") {
  const Vocabulary vocab = synthetic::valence_vocabulary();
  auto queue = std::make_shared<HumanQueue>();
  HumanOracle oracle(queue);
  std::vector<Comparison> pairs;
  for (std::uint64_t i = 0; i < 4; ++i) pairs.push_back({100 + i, seq({2}), seq({7, kEos}, true), seq({12, kEos}, true)});
  const std::vector<std::uint64_t> seeds{1, 2, 3, 4};

  std::thread labeler([&] {
    // answer whichever slot shows "great"
    std::size_t answered = 0;
    while (answered < 4) {
      for (const auto& item : queue->pending()) {
        const Slot s = item.slot_a == "great" ? Slot::A : Slot::B;
        if (queue->post(item.id, s) == PostStatus::Accepted) ++answered;
      }
      std::this_thread::sleep_for(1ms);
    }
  });
  const auto out = label_batch(oracle, pairs, seeds, PresentationContext{&vocab});
  labeler.join();
  CHECK(queue->labeled_in_batch() == 4);
  CHECK(queue->batch_size() == 4);
  for (const auto& o : out) {
    REQUIRE(o.judgement);
    CHECK(o.judgement->winner == 0);
    CHECK(o.judgement->oracle_id == "human");
  }
}

TEST_CASE("human oracle reports cancellation when the run aborts") {
  const Vocabulary vocab = synthetic::valence_vocabulary();
  auto queue = std::make_shared<HumanQueue>();
  HumanOracle oracle(queue);
  const Comparison c{1, seq({2}), seq({7, kEos}, true), seq({12, kEos}, true)};
  std::thread stopper([&] {
    while (queue->pending().empty()) std::this_thread::sleep_for(1ms);
    queue->abort("user stop");
  });
  CHECK_THROWS_AS(label(oracle, c, 0, PresentationContext{&vocab}), Cancelled);
  stopper.join();
}
