#ifndef HAWKROVER_BUS_HPP
#define HAWKROVER_BUS_HPP

#include <atomic>
#include <bitset>
#include <condition_variable>
#include <deque>
#include <initializer_list>
#include <memory>
#include <mutex>
#include <optional>
#include <vector>

#include "hawkrover/codec.hpp"
#include "hawkrover/error.hpp"

namespace hawkrover {

class Bus;

/// Bounded FIFO owned jointly by the bus and one consumer.
class Subscription {
 public:
  Subscription(std::bitset<kStreamCount> streams, std::size_t capacity) : streams_(streams), capacity_(capacity) {}

  /// Blocks until a record arrives; nullopt once the bus is closed and the queue drained.
  std::optional<TimestampedRecord> next() {
    std::unique_lock lock(mutex_);
    not_empty_.wait(lock, [&] { return !queue_.empty() || closed_ || cancelled_; });
    if (queue_.empty()) return std::nullopt;
    return pop_locked();
  }

  std::optional<TimestampedRecord> try_next() {
    std::lock_guard lock(mutex_);
    if (queue_.empty()) return std::nullopt;
    return pop_locked();
  }

  /// Detaches from the bus; a publisher waiting on this queue is released.
  void cancel() {
    {
      std::lock_guard lock(mutex_);
      cancelled_ = true;
      queue_.clear();
    }
    not_full_.notify_all();
    not_empty_.notify_all();
  }

  bool accepts(StreamId id) const { return streams_.test(static_cast<std::size_t>(id)); }

  std::size_t pending() const {
    std::lock_guard lock(mutex_);
    return queue_.size();
  }

 private:
  friend class Bus;

  TimestampedRecord pop_locked() {
    TimestampedRecord r = std::move(queue_.front());
    queue_.pop_front();
    not_full_.notify_all();
    return r;
  }

  // Returns false if the bus closed while waiting for space.
  bool push(TimestampedRecord record, bool& waited) {
    std::unique_lock lock(mutex_);
    if (queue_.size() >= capacity_ && !cancelled_ && !closed_) {
      waited = true;
      not_full_.wait(lock, [&] { return queue_.size() < capacity_ || cancelled_ || closed_; });
    }
    if (cancelled_) return true;
    if (closed_) return false;
    queue_.push_back(std::move(record));
    not_empty_.notify_one();
    return true;
  }

  void close() {
    {
      std::lock_guard lock(mutex_);
      closed_ = true;
    }
    not_empty_.notify_all();
    not_full_.notify_all();
  }

  bool cancelled() const {
    std::lock_guard lock(mutex_);
    return cancelled_;
  }

  const std::bitset<kStreamCount> streams_;
  const std::size_t capacity_;
  mutable std::mutex mutex_;
  std::condition_variable not_empty_;
  std::condition_variable not_full_;
  std::deque<TimestampedRecord> queue_;
  bool closed_ = false;
  bool cancelled_ = false;
};

/// In-process publish/subscribe transport. Lossless: a full subscriber queue
/// blocks the publisher. Publishes are serialized, so every subscriber sees each
/// stream in publish order.
class Bus {
 public:
  explicit Bus(std::size_t queue_capacity = 1024) : capacity_(queue_capacity) {
    require(queue_capacity > 0, Errc::invalid_argument, "queue capacity must be positive");
  }
  Bus(const Bus&) = delete;
  Bus& operator=(const Bus&) = delete;
  ~Bus() { close(); }

  std::shared_ptr<Subscription> subscribe(std::initializer_list<StreamId> streams) {
    std::bitset<kStreamCount> mask;
    for (auto s : streams) mask.set(static_cast<std::size_t>(s));
    return subscribe(mask);
  }

  std::shared_ptr<Subscription> subscribe(std::bitset<kStreamCount> mask) {
    std::lock_guard lock(subscribers_mutex_);
    require(!closed_.load(), Errc::bus_closed, "subscribe on a closed bus");
    auto sub = std::make_shared<Subscription>(mask, capacity_);
    subscribers_.push_back(sub);
    return sub;
  }

  void publish(TimestampedRecord record) {
    std::lock_guard publish_lock(publish_mutex_);
    require(!closed_.load(), Errc::bus_closed, "publish on a closed bus");
    std::vector<std::shared_ptr<Subscription>> targets;
    {
      std::lock_guard lock(subscribers_mutex_);
      for (const auto& s : subscribers_) {
        if (s->accepts(record.stream) && !s->cancelled()) targets.push_back(s);
      }
    }
    for (std::size_t i = 0; i < targets.size(); ++i) {
      bool waited = false;
      const bool delivered =
          i + 1 == targets.size() ? targets[i]->push(std::move(record), waited) : targets[i]->push(record, waited);
      if (waited) blocked_publishes_.fetch_add(1);
      require(delivered, Errc::bus_closed, "bus closed during publish");
    }
    published_.fetch_add(1);
  }

  void close() {
    if (closed_.exchange(true)) return;
    std::lock_guard lock(subscribers_mutex_);
    for (auto& s : subscribers_) s->close();
  }

  bool closed() const { return closed_.load(); }
  std::uint64_t published() const { return published_.load(); }
  /// Number of publishes that had to wait for queue space.
  std::uint64_t blocked_publishes() const { return blocked_publishes_.load(); }

 private:
  const std::size_t capacity_;
  std::mutex publish_mutex_;
  std::mutex subscribers_mutex_;
  std::vector<std::shared_ptr<Subscription>> subscribers_;
  std::atomic<bool> closed_{false};
  std::atomic<std::uint64_t> published_{0};
  std::atomic<std::uint64_t> blocked_publishes_{0};
};

}  // namespace hawkrover

#endif  // HAWKROVER_BUS_HPP
