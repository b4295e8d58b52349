#include "mqmc/dataio/split.hpp"

#include "mqmc/numerics/random.hpp"

namespace mqmc::data {

DatasetSplit split(const std::vector<std::uint64_t>& ids, std::uint64_t seed) {
    if (ids.size() < 5) throw DataError("split: need at least 5 pairs, got " + std::to_string(ids.size()));
    std::vector<std::uint64_t> order = ids;
    num::Rng rng(num::mix_seed(seed, 17));
    rng.shuffle(order);

    const std::size_t held_out = ids.size() / 5;
    const std::size_t train = ids.size() - 2 * held_out;
    DatasetSplit s;
    s.seed = seed;
    s.train.assign(order.begin(), order.begin() + static_cast<std::ptrdiff_t>(train));
    s.validation.assign(order.begin() + static_cast<std::ptrdiff_t>(train),
                        order.begin() + static_cast<std::ptrdiff_t>(train + held_out));
    s.test.assign(order.begin() + static_cast<std::ptrdiff_t>(train + held_out), order.end());
    return s;
}

DatasetSplit split(const Dataset& dataset, std::uint64_t seed) {
    std::vector<std::uint64_t> ids;
    ids.reserve(dataset.pairs.size());
    for (const InstancePair& p : dataset.pairs) ids.push_back(p.id);
    return split(ids, seed);
}

Batcher::Batcher(std::vector<std::uint64_t> train_ids, std::size_t batch_size, std::uint64_t shuffle_seed)
    : train_(std::move(train_ids)), batch_size_(batch_size), seed_(shuffle_seed) {
    if (batch_size_ == 0) throw DataError("batcher: batch size must be positive");
    if (batch_size_ > train_.size()) {
        throw DataError("batcher: batch size " + std::to_string(batch_size_) + " exceeds training set of " +
                        std::to_string(train_.size()));
    }
}

const std::vector<std::uint64_t>& Batcher::epoch_order(std::uint64_t epoch) {
    if (epoch != cached_epoch_) {
        cached_order_ = train_;
        num::Rng rng(num::mix_seed(seed_, epoch));
        rng.shuffle(cached_order_);
        cached_epoch_ = epoch;
    }
    return cached_order_;
}

std::vector<std::uint64_t> Batcher::batch(std::uint64_t step) {
    const std::uint64_t per_epoch = batches_per_epoch();
    const auto& order = epoch_order(step / per_epoch);
    const std::size_t start = static_cast<std::size_t>(step % per_epoch) * batch_size_;
    return {order.begin() + static_cast<std::ptrdiff_t>(start),
            order.begin() + static_cast<std::ptrdiff_t>(start + batch_size_)};
}

std::vector<std::uint64_t> next_batch(const DatasetSplit& split, std::uint64_t step, std::size_t batch_size,
                                      std::uint64_t shuffle_seed) {
    Batcher b(split.train, batch_size, shuffle_seed);
    return b.batch(step);
}

}  // namespace mqmc::data
