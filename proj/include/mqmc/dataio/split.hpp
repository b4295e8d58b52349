#pragma once

#include <cstdint>
#include <map>
#include <vector>

#include "mqmc/dataio/dataset.hpp"

namespace mqmc::data {

struct DatasetSplit {
    std::vector<std::uint64_t> train, validation, test;
    std::uint64_t seed = 0;
};

/// Seeded permutation then a 3:1:1 partition; validation and test get
/// floor(N/5) each, the remainder goes to train.
DatasetSplit split(const std::vector<std::uint64_t>& ids, std::uint64_t seed);
DatasetSplit split(const Dataset& dataset, std::uint64_t seed);

// Epoch-wise shuffled, non-overlapping training batches. The ragged tail of
// each epoch is dropped.
class Batcher {
public:
    Batcher(std::vector<std::uint64_t> train_ids, std::size_t batch_size, std::uint64_t shuffle_seed);

    std::size_t batches_per_epoch() const { return train_.size() / batch_size_; }
    std::size_t dropped_per_epoch() const { return train_.size() % batch_size_; }

    /// Pair ids of the batch consumed at global step `step`.
    std::vector<std::uint64_t> batch(std::uint64_t step);

private:
    const std::vector<std::uint64_t>& epoch_order(std::uint64_t epoch);

    std::vector<std::uint64_t> train_;
    std::size_t batch_size_;
    std::uint64_t seed_;
    std::uint64_t cached_epoch_ = ~0ULL;
    std::vector<std::uint64_t> cached_order_;
};

/// Stateless form: batch for (split, step, batch size, shuffle seed).
std::vector<std::uint64_t> next_batch(const DatasetSplit& split, std::uint64_t step, std::size_t batch_size,
                                      std::uint64_t shuffle_seed);

}  // namespace mqmc::data
