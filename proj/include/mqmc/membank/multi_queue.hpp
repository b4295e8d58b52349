#pragma once

#include <cstdint>
#include <map>
#include <set>
#include <span>
#include <stdexcept>
#include <vector>

#include "mqmc/membank/ring_buffer.hpp"
#include "mqmc/types.hpp"

namespace mqmc::bank {

class BankError : public std::runtime_error {
public:
    using std::runtime_error::runtime_error;
};

struct QueueEntry {
    std::vector<double> values;  // key-encoded embedding, dimension d'
    std::uint64_t id = 0;
    CategoryPath path;
    std::uint64_t step = 0;  // enqueue step
};

struct DrawnEntry {
    QueueEntry entry;
    int requested = 0;      // queue key the multiset asked for
    bool fallback = false;  // served from another queue because of a shortfall
};

/// How entries map to queues: one queue per middle category, or all in one.
enum class Keying { ByMiddle, Single };

struct FillReport {
    std::map<int, std::size_t> per_queue;
    std::size_t total = 0;
    std::size_t capacity = 0;
};

// Category-keyed bank of FIFO queues of key embeddings. Negatives are drawn
// by category multiplicity of the current batch and leave the bank.
class MultiQueue {
public:
    MultiQueue(Side side, std::span<const int> queue_ids, std::size_t capacity, Keying keying = Keying::ByMiddle);

    Side side() const { return side_; }
    Keying keying() const { return keying_; }
    std::size_t capacity_per_queue() const { return capacity_; }
    std::size_t queue_count() const { return queues_.size(); }
    std::size_t total_capacity() const { return capacity_ * queues_.size(); }
    std::size_t total() const;

    int queue_for(const CategoryPath& path) const;

    /// Appends in input order; overflowing queues drop their oldest entries.
    /// All categories are validated before anything is inserted.
    void enqueue(std::span<const QueueEntry> entries);

    /// For each queue key with multiplicity n in `batch_paths`, removes the n
    /// oldest entries whose id is not in `anchor_ids`. Shortfalls are filled
    /// from whichever queue currently holds the most eligible entries (ties:
    /// smallest key). Returns fewer than batch_paths.size() entries only when
    /// the bank runs out of eligible entries.
    std::vector<DrawnEntry> draw_negatives(std::span<const CategoryPath> batch_paths,
                                           const std::set<std::uint64_t>& anchor_ids = {});

    FillReport fill_report() const;

    /// Every entry, queue by queue (ascending key), oldest first.
    std::vector<QueueEntry> entries() const;

    std::uint64_t total_enqueued() const { return enqueued_; }
    std::uint64_t total_drawn() const { return drawn_; }
    std::uint64_t total_evicted() const { return evicted_; }

    /// Restores counters after reloading entries from a checkpoint.
    void set_counters(std::uint64_t enqueued, std::uint64_t drawn, std::uint64_t evicted);

private:
    std::size_t eligible(const RingBuffer<QueueEntry>& q, const std::set<std::uint64_t>& anchors) const;
    bool take_oldest(RingBuffer<QueueEntry>& q, const std::set<std::uint64_t>& anchors, QueueEntry& out);

    Side side_;
    Keying keying_;
    std::size_t capacity_;
    std::map<int, RingBuffer<QueueEntry>> queues_;
    std::uint64_t enqueued_ = 0;
    std::uint64_t drawn_ = 0;
    std::uint64_t evicted_ = 0;
};

}  // namespace mqmc::bank
