#include "apl/human_queue.hpp"

#include <chrono>

#include "apl/errors.hpp"

namespace apl {

namespace {
std::int64_t now_ms() {
  return std::chrono::duration_cast<std::chrono::milliseconds>(std::chrono::system_clock::now().time_since_epoch())
      .count();
}
}  // namespace

std::future<Verdict> HumanQueue::submit(PendingItem item) {
  std::lock_guard lock(mu_);
  std::promise<Verdict> promise;
  auto future = promise.get_future();
  if (aborted_) {
    promise.set_exception(std::make_exception_ptr(Cancelled("run aborted: " + abort_reason_)));
    return future;
  }
  if (pending_.count(item.id) || resolved_.count(item.id))
    throw InvalidInput("duplicate pending id " + std::to_string(item.id));
  if (item.issued_at_ms == 0) item.issued_at_ms = now_ms();
  const auto id = item.id;
  pending_.emplace(id, Entry{std::move(item), std::move(promise)});
  return future;
}

std::vector<PendingItem> HumanQueue::pending(std::size_t limit) const {
  std::lock_guard lock(mu_);
  std::vector<PendingItem> out;
  for (const auto& [id, entry] : pending_) {
    if (limit && out.size() >= limit) break;
    out.push_back(entry.item);
  }
  return out;
}

PostStatus HumanQueue::post(std::uint64_t id, Slot choice, std::string rationale) {
  std::lock_guard lock(mu_);
  if (resolved_.count(id)) return PostStatus::Conflict;
  auto it = pending_.find(id);
  if (it == pending_.end()) return PostStatus::NotFound;
  it->second.promise.set_value(Verdict{choice, std::move(rationale), false});
  pending_.erase(it);
  resolved_.insert(id);
  ++labeled_in_batch_;
  return PostStatus::Accepted;
}

void HumanQueue::abort(const std::string& reason) {
  std::lock_guard lock(mu_);
  aborted_ = true;
  abort_reason_ = reason;
  for (auto& [id, entry] : pending_)
    entry.promise.set_exception(std::make_exception_ptr(Cancelled("run aborted: " + reason)));
  pending_.clear();
}

bool HumanQueue::aborted() const {
  std::lock_guard lock(mu_);
  return aborted_;
}

void HumanQueue::begin_batch(std::size_t size) {
  std::lock_guard lock(mu_);
  batch_size_ = size;
  labeled_in_batch_ = 0;
}

std::size_t HumanQueue::batch_size() const {
  std::lock_guard lock(mu_);
  return batch_size_;
}

std::size_t HumanQueue::labeled_in_batch() const {
  std::lock_guard lock(mu_);
  return labeled_in_batch_;
}

Verdict HumanOracle::judge(const PresentedPair& pair) {
  auto out = judge_batch(std::span<const PresentedPair>(&pair, 1));
  if (out[0].error) std::rethrow_exception(out[0].error);
  return *out[0].verdict;
}

std::vector<VerdictOutcome> HumanOracle::judge_batch(std::span<const PresentedPair> pairs) {
  queue_->begin_batch(pairs.size());
  std::vector<std::future<Verdict>> futures;
  futures.reserve(pairs.size());
  const auto t0 = std::chrono::steady_clock::now();
  for (const auto& p : pairs)
    futures.push_back(queue_->submit({p.pair_id, p.request.prompt, p.request.completion_a, p.request.completion_b, 0}));
  std::vector<VerdictOutcome> out(pairs.size());
  for (std::size_t i = 0; i < pairs.size(); ++i) {
    try {
      out[i].verdict = futures[i].get();
    } catch (...) {
      out[i].error = std::current_exception();
    }
    out[i].latency_ms =
        std::chrono::duration_cast<std::chrono::milliseconds>(std::chrono::steady_clock::now() - t0).count();
  }
  return out;
}

}  // namespace apl
