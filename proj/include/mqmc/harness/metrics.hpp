#pragma once

#include <cstdint>
#include <string>
#include <vector>

#include "mqmc/encoders/network.hpp"
#include "mqmc/numerics/tensor.hpp"

namespace mqmc::harness {

enum class Direction { MvToProd, ProdToMv };
const char* direction_name(Direction d);

// Rows are queries, columns the gallery; pair i's counterpart is column i.
struct ScoreMatrix {
    num::Tensor<double> scores;
    Direction direction = Direction::MvToProd;
    bool degenerate = false;  // some embedding had zero norm
};

struct DirectionMetrics {
    double r1 = 0.0, r5 = 0.0, r10 = 0.0;  // percent
    double medr = 0.0;
    double rsum = 0.0;
};

struct MetricsReport {
    DirectionMetrics mv_to_prod;
    DirectionMetrics prod_to_mv;
    std::uint64_t config_hash = 0;
    std::uint64_t step = 0;
    bool degenerate = false;

    double rsum() const { return mv_to_prod.rsum + prod_to_mv.rsum; }
};

/// 1-based rank of column i in row i: one plus the number of columns scoring
/// strictly higher, plus earlier columns scoring equal.
std::vector<std::size_t> true_ranks(const num::Tensor<double>& scores);

DirectionMetrics metrics(const ScoreMatrix& m);
DirectionMetrics metrics_from_ranks(const std::vector<std::size_t>& ranks);

/// Cosine similarity between every microvideo row and every product row.
/// Zero-norm rows score 0 against everything and mark the result degenerate.
ScoreMatrix cosine_scores(const num::Tensor<double>& mv, const num::Tensor<double>& prod);

ScoreMatrix transpose(const ScoreMatrix& m);

}  // namespace mqmc::harness
