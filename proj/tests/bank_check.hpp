#pragma once

// Randomized operation sequences against MultiQueue, checked with a plain
// deque-per-category model.

#include <deque>
#include <map>
#include <set>
#include <string>

#include "mqmc/membank/multi_queue.hpp"
#include "mqmc/numerics/random.hpp"

namespace bankcheck {

using namespace mqmc;

struct Violations {
    int conservation = 0, fifo = 0, capacity = 0, purity = 0, anchor = 0, size = 0, model = 0;
    int total() const { return conservation + fifo + capacity + purity + anchor + size + model; }
    std::string describe() const {
        return "conservation=" + std::to_string(conservation) + " fifo=" + std::to_string(fifo) +
               " capacity=" + std::to_string(capacity) + " purity=" + std::to_string(purity) +
               " anchor=" + std::to_string(anchor) + " size=" + std::to_string(size) +
               " model=" + std::to_string(model);
    }
};

struct Model {
    std::map<int, std::deque<bank::QueueEntry>> queues;
    std::size_t capacity;

    std::size_t eligible(const std::deque<bank::QueueEntry>& q, const std::set<std::uint64_t>& anchors) const {
        std::size_t n = 0;
        for (const auto& e : q) n += anchors.count(e.id) ? 0 : 1;
        return n;
    }
    bool take(std::deque<bank::QueueEntry>& q, const std::set<std::uint64_t>& anchors, bank::QueueEntry& out) {
        for (auto it = q.begin(); it != q.end(); ++it) {
            if (anchors.count(it->id)) continue;
            out = *it;
            q.erase(it);
            return true;
        }
        return false;
    }
};

inline Violations run(std::uint64_t seed, int ops, std::size_t categories = 6, std::size_t capacity = 5,
                      std::size_t batch = 8) {
    num::Rng rng(seed);
    std::vector<int> ids;
    for (std::size_t c = 0; c < categories; ++c) ids.push_back(static_cast<int>(c * 3 + 1));  // sparse keys
    bank::MultiQueue q(Side::Product, ids, capacity);
    Model m{{}, capacity};
    for (int id : ids) m.queues[id];

    Violations v;
    std::uint64_t next_id = 0, step = 0;
    for (int op = 0; op < ops; ++op) {
        ++step;
        if (rng.uniform() < 0.55 || q.total() == 0) {
            const std::size_t n = 1 + rng.index(batch);
            std::vector<bank::QueueEntry> in(n);
            for (auto& e : in) {
                e.id = rng.uniform() < 0.2 && next_id > 0 ? rng.index(next_id) : next_id++;  // occasional repeats
                const int key = ids[rng.index(ids.size())];
                e.path = {key / 3, key};
                e.step = step;
                e.values = {static_cast<double>(e.id), rng.normal()};
            }
            q.enqueue(in);
            for (const auto& e : in) {
                auto& dq = m.queues[e.path.middle];
                dq.push_back(e);
                if (dq.size() > capacity) dq.pop_front();
            }
        } else {
            const std::size_t b = 1 + rng.index(batch);
            std::vector<CategoryPath> paths;
            std::set<std::uint64_t> anchors;
            for (std::size_t i = 0; i < b; ++i) {
                const int key = ids[rng.index(ids.size())];
                paths.push_back({key / 3, key});
                if (next_id > 0 && rng.uniform() < 0.5) anchors.insert(rng.index(next_id));
            }
            std::size_t eligible_before = 0;
            for (const auto& [k, dq] : m.queues) eligible_before += m.eligible(dq, anchors);

            const auto drawn = q.draw_negatives(paths, anchors);

            // model draw: primary per category in first-appearance order, then fallbacks
            std::vector<std::pair<int, std::size_t>> wanted;
            for (const auto& p : paths) {
                auto it = std::find_if(wanted.begin(), wanted.end(), [&](auto& w) { return w.first == p.middle; });
                if (it == wanted.end()) wanted.emplace_back(p.middle, 1);
                else ++it->second;
            }
            std::vector<bank::QueueEntry> expect;
            std::size_t missing = 0;
            for (const auto& [key, n] : wanted) {
                for (std::size_t i = 0; i < n; ++i) {
                    bank::QueueEntry e;
                    if (m.take(m.queues[key], anchors, e)) expect.push_back(e);
                    else ++missing;
                }
            }
            for (std::size_t i = 0; i < missing; ++i) {
                std::deque<bank::QueueEntry>* best = nullptr;
                std::size_t best_n = 0;
                for (auto& [k, dq] : m.queues) {
                    const std::size_t n = m.eligible(dq, anchors);
                    if (n > best_n) {
                        best = &dq;
                        best_n = n;
                    }
                }
                if (!best) break;
                bank::QueueEntry e;
                m.take(*best, anchors, e);
                expect.push_back(e);
            }

            if (drawn.size() != std::min(b, eligible_before)) ++v.size;
            if (drawn.size() != expect.size()) ++v.model;
            std::map<int, std::uint64_t> last_step;
            for (std::size_t i = 0; i < drawn.size(); ++i) {
                const auto& d = drawn[i];
                if (anchors.count(d.entry.id)) ++v.anchor;
                if (!d.fallback && d.entry.path.middle != d.requested) ++v.purity;
                if (!d.fallback) {
                    auto [it, fresh] = last_step.emplace(d.requested, d.entry.step);
                    if (!fresh && d.entry.step < it->second) ++v.fifo;
                    it->second = d.entry.step;
                }
                if (i < expect.size() && (expect[i].id != d.entry.id || expect[i].step != d.entry.step)) ++v.model;
            }
        }

        if (q.total() != q.total_enqueued() - q.total_drawn() - q.total_evicted()) ++v.conservation;
        const auto report = q.fill_report();
        for (const auto& [k, n] : report.per_queue) {
            if (n > capacity) ++v.capacity;
            if (n != m.queues[k].size()) ++v.model;
        }
        // every queue oldest-first by enqueue step
        const auto all = q.entries();
        std::map<int, std::uint64_t> prev;
        for (const auto& e : all) {
            auto [it, fresh] = prev.emplace(e.path.middle, e.step);
            if (!fresh && e.step < it->second) ++v.fifo;
            it->second = e.step;
        }
    }
    return v;
}

}  // namespace bankcheck
