#pragma once

#include <condition_variable>
#include <cstdint>
#include <future>
#include <map>
#include <memory>
#include <mutex>
#include <set>
#include <string>
#include <vector>

#include "apl/oracle.hpp"

namespace apl {

struct PendingItem {
  std::uint64_t id = 0;
  std::string prompt;
  std::string slot_a;
  std::string slot_b;
  std::int64_t issued_at_ms = 0;  ///< unix epoch milliseconds
};

enum class PostStatus { Accepted, NotFound, Conflict };

/// Pending human comparisons. The engine submits; API handlers list and post.
/// Posting is first-write-wins per id.
class HumanQueue {
 public:
  std::future<Verdict> submit(PendingItem item);
  /// Oldest first, at most `limit` items (0 = all).
  std::vector<PendingItem> pending(std::size_t limit = 0) const;
  PostStatus post(std::uint64_t id, Slot choice, std::string rationale = {});
  /// Fails every pending submission with Cancelled; later submits fail immediately.
  void abort(const std::string& reason);
  bool aborted() const;

  /// Progress bookkeeping for the current labeling batch.
  void begin_batch(std::size_t size);
  std::size_t batch_size() const;
  std::size_t labeled_in_batch() const;

 private:
  struct Entry {
    PendingItem item;
    std::promise<Verdict> promise;
  };
  mutable std::mutex mu_;
  std::map<std::uint64_t, Entry> pending_;
  std::set<std::uint64_t> resolved_;
  bool aborted_ = false;
  std::string abort_reason_;
  std::size_t batch_size_ = 0;
  std::size_t labeled_in_batch_ = 0;
};

/// Oracle whose verdicts come from people through a HumanQueue.
class HumanOracle final : public Oracle {
 public:
  explicit HumanOracle(std::shared_ptr<HumanQueue> queue) : queue_(std::move(queue)) {}

  std::string id() const override { return "human"; }
  Verdict judge(const PresentedPair& pair) override;
  /// Submits the whole batch, then blocks until every item is resolved or the queue aborts.
  std::vector<VerdictOutcome> judge_batch(std::span<const PresentedPair> pairs) override;

  const std::shared_ptr<HumanQueue>& queue() const noexcept { return queue_; }

 private:
  std::shared_ptr<HumanQueue> queue_;
};

}  // namespace apl
