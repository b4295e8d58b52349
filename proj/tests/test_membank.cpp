#include <doctest.h>

#include "bank_check.hpp"
#include "mqmc/membank/multi_queue.hpp"
#include "mqmc/membank/ring_buffer.hpp"

using namespace mqmc;
using namespace mqmc::bank;

namespace {

QueueEntry entry(std::uint64_t id, int middle, std::uint64_t step = 0) {
    QueueEntry e;
    e.id = id;
    e.path = {middle / 10, middle};
    e.step = step;
    e.values = {static_cast<double>(id)};
    return e;
}

std::vector<std::uint64_t> ids_of(const std::vector<DrawnEntry>& d) {
    std::vector<std::uint64_t> out;
    for (const auto& x : d) out.push_back(x.entry.id);
    return out;
}

}  // namespace

TEST_SUITE("membank") {

TEST_CASE("ring buffer") {
    RingBuffer<int> r(3);
    CHECK_FALSE(r.push_back(1));
    r.push_back(2);
    r.push_back(3);
    CHECK(r.full());
    CHECK(r.push_back(4) == 1);
    CHECK(r[0] == 2);
    CHECK(r.erase(1) == 3);
    CHECK(r.size() == 2);
    CHECK(r[1] == 4);
    CHECK(r.pop_front() == 2);
    CHECK_THROWS(RingBuffer<int>(0));
}

TEST_CASE("new_bank examples") {
    std::vector<int> thirty;
    for (int i = 0; i < 30; ++i) thirty.push_back(i);
    MultiQueue big(Side::Microvideo, thirty, 192);
    CHECK(big.queue_count() == 30);
    CHECK(big.total() == 0);
    CHECK(big.total_capacity() == 30 * 192);

    const std::vector<int> one{4};
    MultiQueue tiny(Side::Product, one, 1);
    CHECK(tiny.total_capacity() == 1);

    const std::vector<int> dup{1, 2, 1};
    CHECK_THROWS_AS(MultiQueue(Side::Product, dup, 3), BankError);
    CHECK_THROWS_AS(MultiQueue(Side::Product, one, 0), BankError);
    CHECK_THROWS_AS(MultiQueue(Side::Product, std::vector<int>{}, 3), BankError);
}

TEST_CASE("enqueue examples") {
    const std::vector<int> ids{1, 2};
    MultiQueue q(Side::Product, ids, 3);
    std::vector<QueueEntry> in{entry(1, 1), entry(2, 1), entry(3, 1), entry(4, 1)};
    q.enqueue(in);
    std::vector<std::uint64_t> held;
    for (const auto& e : q.entries()) held.push_back(e.id);
    CHECK(held == std::vector<std::uint64_t>{2, 3, 4});
    CHECK(q.total_evicted() == 1);

    MultiQueue r(Side::Product, ids, 5);
    std::vector<QueueEntry> mix{entry(10, 2, 7), entry(11, 1, 7), entry(12, 2, 7)};
    r.enqueue(mix);
    CHECK(r.fill_report().per_queue.at(1) == 1);
    CHECK(r.fill_report().per_queue.at(2) == 2);
    CHECK(r.entries()[1].id == 10);
    CHECK(r.entries()[2].id == 12);

    std::vector<QueueEntry> unknown{entry(20, 1), entry(21, 9)};
    CHECK_THROWS_AS(r.enqueue(unknown), BankError);
    CHECK(r.total() == 3);  // nothing inserted
}

TEST_CASE("draw_negatives examples") {
    const std::vector<int> ids{1, 2, 3};
    MultiQueue q(Side::Product, ids, 4);
    std::vector<QueueEntry> in;
    for (std::uint64_t i = 0; i < 12; ++i) in.push_back(entry(100 + i, 1 + static_cast<int>(i % 3), i));
    q.enqueue(in);
    const std::vector<CategoryPath> want{{0, 1}, {0, 1}, {0, 2}, {0, 3}};
    const auto drawn = q.draw_negatives(want);
    CHECK(ids_of(drawn) == std::vector<std::uint64_t>{100, 103, 101, 102});
    for (const auto& d : drawn) CHECK_FALSE(d.fallback);
    CHECK(q.total() == 8);

    MultiQueue exact(Side::Product, ids, 4);
    std::vector<QueueEntry> single{entry(7, 2)};
    exact.enqueue(single);
    const std::vector<CategoryPath> c{{0, 2}};
    const auto e = exact.draw_negatives(c);
    REQUIRE(e.size() == 1);
    CHECK(e[0].entry.id == 7);
    CHECK_FALSE(e[0].fallback);

    MultiQueue fb(Side::Product, ids, 8);
    std::vector<QueueEntry> five;
    for (std::uint64_t i = 0; i < 5; ++i) five.push_back(entry(50 + i, 3, i));
    fb.enqueue(five);
    const std::vector<CategoryPath> cc{{0, 1}, {0, 1}};
    const auto f = fb.draw_negatives(cc);
    CHECK(ids_of(f) == std::vector<std::uint64_t>{50, 51});
    CHECK(f[0].fallback);
    CHECK(f[0].requested == 1);

    MultiQueue empty(Side::Product, ids, 2);
    CHECK_THROWS_AS(empty.draw_negatives(cc), BankError);
}

TEST_CASE("anchor exclusion takes the next oldest") {
    const std::vector<int> ids{1};
    MultiQueue q(Side::Microvideo, ids, 4);
    std::vector<QueueEntry> in{entry(1, 1, 0), entry(2, 1, 1), entry(3, 1, 2)};
    q.enqueue(in);
    const std::vector<CategoryPath> one{{0, 1}};
    const auto d = q.draw_negatives(one, {1});
    CHECK(ids_of(d) == std::vector<std::uint64_t>{2});
    CHECK(q.entries()[0].id == 1);
}

TEST_CASE("fill_report examples") {
    const std::vector<int> ids{1, 2};
    MultiQueue q(Side::Product, ids, 8);
    for (const auto& [k, n] : q.fill_report().per_queue) CHECK(n == 0);
    std::vector<QueueEntry> in;
    for (std::uint64_t i = 0; i < 10; ++i) in.push_back(entry(i, i < 7 ? 1 : 2));
    q.enqueue(in);
    const FillReport r = q.fill_report();
    CHECK(r.per_queue.at(1) == 7);
    CHECK(r.per_queue.at(2) == 3);
    CHECK(r.total == 10);
    CHECK(r.capacity == 16);
}

TEST_CASE("single keying merges every category") {
    const std::vector<int> one{0};
    MultiQueue q(Side::Product, one, 6, Keying::Single);
    std::vector<QueueEntry> in{entry(1, 11), entry(2, 25), entry(3, 11)};
    q.enqueue(in);
    CHECK(q.fill_report().per_queue.at(0) == 3);
    const std::vector<CategoryPath> want{{2, 25}, {1, 11}};
    CHECK(ids_of(q.draw_negatives(want)) == std::vector<std::uint64_t>{1, 2});
    const std::vector<int> two{0, 1};
    CHECK_THROWS_AS(MultiQueue(Side::Product, two, 6, Keying::Single), BankError);
}

TEST_CASE("randomized operation sequences keep every invariant") {
    for (std::uint64_t seed = 1; seed <= 20; ++seed) {
        const bankcheck::Violations v = bankcheck::run(seed, 1000);
        INFO("seed " << seed << ": " << v.describe());
        CHECK(v.total() == 0);
    }
}

}  // TEST_SUITE
