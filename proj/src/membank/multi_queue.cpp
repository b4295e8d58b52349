#include "mqmc/membank/multi_queue.hpp"

#include <algorithm>

namespace mqmc::bank {

MultiQueue::MultiQueue(Side side, std::span<const int> queue_ids, std::size_t capacity, Keying keying)
    : side_(side), keying_(keying), capacity_(capacity) {
    if (capacity == 0) throw BankError("bank: queue length must be at least 1");
    if (queue_ids.empty()) throw BankError("bank: no categories given");
    if (keying == Keying::Single && queue_ids.size() != 1) throw BankError("bank: single keying takes one queue id");
    for (int id : queue_ids) {
        if (!queues_.emplace(id, RingBuffer<QueueEntry>(capacity)).second) {
            throw BankError("bank: duplicate category id " + std::to_string(id));
        }
    }
}

std::size_t MultiQueue::total() const {
    std::size_t n = 0;
    for (const auto& [id, q] : queues_) n += q.size();
    return n;
}

int MultiQueue::queue_for(const CategoryPath& path) const {
    if (keying_ == Keying::Single) return queues_.begin()->first;
    if (!queues_.count(path.middle)) throw BankError("bank: unknown category " + std::to_string(path.middle));
    return path.middle;
}

void MultiQueue::enqueue(std::span<const QueueEntry> entries) {
    for (const QueueEntry& e : entries) queue_for(e.path);
    for (const QueueEntry& e : entries) {
        if (queues_.at(queue_for(e.path)).push_back(e)) ++evicted_;
        ++enqueued_;
    }
}

std::size_t MultiQueue::eligible(const RingBuffer<QueueEntry>& q, const std::set<std::uint64_t>& anchors) const {
    if (anchors.empty()) return q.size();
    std::size_t n = 0;
    for (std::size_t i = 0; i < q.size(); ++i) n += anchors.count(q[i].id) ? 0 : 1;
    return n;
}

bool MultiQueue::take_oldest(RingBuffer<QueueEntry>& q, const std::set<std::uint64_t>& anchors, QueueEntry& out) {
    for (std::size_t i = 0; i < q.size(); ++i) {
        if (anchors.count(q[i].id)) continue;
        out = q.erase(i);
        ++drawn_;
        return true;
    }
    return false;
}

std::vector<DrawnEntry> MultiQueue::draw_negatives(std::span<const CategoryPath> batch_paths,
                                                   const std::set<std::uint64_t>& anchor_ids) {
    if (total() == 0) throw BankError("bank: empty, warm-up not finished");

    // multiplicity per queue, in order of first appearance
    std::vector<std::pair<int, std::size_t>> wanted;
    for (const CategoryPath& p : batch_paths) {
        const int key = queue_for(p);
        auto it = std::find_if(wanted.begin(), wanted.end(), [&](const auto& w) { return w.first == key; });
        if (it == wanted.end()) wanted.emplace_back(key, 1);
        else ++it->second;
    }

    std::vector<DrawnEntry> out;
    out.reserve(batch_paths.size());
    std::vector<int> shortfall;
    for (const auto& [key, count] : wanted) {
        RingBuffer<QueueEntry>& q = queues_.at(key);
        for (std::size_t n = 0; n < count; ++n) {
            DrawnEntry d;
            d.requested = key;
            if (take_oldest(q, anchor_ids, d.entry)) out.push_back(std::move(d));
            else shortfall.push_back(key);
        }
    }

    for (int key : shortfall) {
        RingBuffer<QueueEntry>* best = nullptr;
        std::size_t best_count = 0;
        for (auto& [id, q] : queues_) {
            const std::size_t n = eligible(q, anchor_ids);
            if (n > best_count) {
                best = &q;
                best_count = n;
            }
        }
        if (!best) break;
        DrawnEntry d;
        d.requested = key;
        d.fallback = true;
        take_oldest(*best, anchor_ids, d.entry);
        out.push_back(std::move(d));
    }
    return out;
}

FillReport MultiQueue::fill_report() const {
    FillReport r;
    for (const auto& [id, q] : queues_) {
        r.per_queue[id] = q.size();
        r.total += q.size();
    }
    r.capacity = total_capacity();
    return r;
}

std::vector<QueueEntry> MultiQueue::entries() const {
    std::vector<QueueEntry> out;
    for (const auto& [id, q] : queues_) {
        for (std::size_t i = 0; i < q.size(); ++i) out.push_back(q[i]);
    }
    return out;
}

void MultiQueue::set_counters(std::uint64_t enqueued, std::uint64_t drawn, std::uint64_t evicted) {
    enqueued_ = enqueued;
    drawn_ = drawn;
    evicted_ = evicted;
}

}  // namespace mqmc::bank
