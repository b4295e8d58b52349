#include "mqmc/harness/metrics.hpp"

#include <algorithm>
#include <cmath>

namespace mqmc::harness {

const char* direction_name(Direction d) { return d == Direction::MvToProd ? "mv->prod" : "prod->mv"; }

std::vector<std::size_t> true_ranks(const num::Tensor<double>& scores) {
    if (scores.rank() != 2 || scores.rows() != scores.cols()) {
        throw num::NumericsError("metrics: score matrix must be square, got " + num::shape_string(scores.shape()));
    }
    const std::size_t n = scores.rows();
    std::vector<std::size_t> ranks(n);
    for (std::size_t i = 0; i < n; ++i) {
        const double target = scores(i, i);
        std::size_t rank = 1;
        for (std::size_t j = 0; j < n; ++j) {
            const double s = scores(i, j);
            if (s > target || (s == target && j < i)) ++rank;
        }
        ranks[i] = rank;
    }
    return ranks;
}

DirectionMetrics metrics_from_ranks(const std::vector<std::size_t>& ranks) {
    if (ranks.empty()) throw num::NumericsError("metrics: no queries");
    DirectionMetrics m;
    const double n = static_cast<double>(ranks.size());
    auto recall = [&](std::size_t k) {
        const auto hits = std::count_if(ranks.begin(), ranks.end(), [k](std::size_t r) { return r <= k; });
        return 100.0 * static_cast<double>(hits) / n;
    };
    m.r1 = recall(1);
    m.r5 = recall(5);
    m.r10 = recall(10);
    std::vector<std::size_t> sorted = ranks;
    std::sort(sorted.begin(), sorted.end());
    m.medr = static_cast<double>(sorted[(sorted.size() - 1) / 2]);
    m.rsum = m.r1 + m.r5 + m.r10;
    return m;
}

DirectionMetrics metrics(const ScoreMatrix& m) { return metrics_from_ranks(true_ranks(m.scores)); }

ScoreMatrix cosine_scores(const num::Tensor<double>& mv, const num::Tensor<double>& prod) {
    if (mv.cols() != prod.cols()) throw num::NumericsError("cosine_scores: embedding widths differ");
    ScoreMatrix out;
    out.direction = Direction::MvToProd;
    out.scores = num::Tensor<double>::matrix(mv.rows(), prod.rows());
    auto norms = [&](const num::Tensor<double>& t) {
        std::vector<double> n(t.rows());
        for (std::size_t r = 0; r < t.rows(); ++r) {
            n[r] = num::l2_norm(t.row(r));
            if (n[r] == 0.0) out.degenerate = true;
        }
        return n;
    };
    const std::vector<double> nm = norms(mv);
    const std::vector<double> np = norms(prod);
    for (std::size_t i = 0; i < mv.rows(); ++i) {
        for (std::size_t j = 0; j < prod.rows(); ++j) {
            if (nm[i] == 0.0 || np[j] == 0.0) continue;
            const double c = num::dot(mv.row(i), prod.row(j)) / (nm[i] * np[j]);
            out.scores(i, j) = std::clamp(c, -1.0, 1.0);
        }
    }
    return out;
}

ScoreMatrix transpose(const ScoreMatrix& m) {
    ScoreMatrix t;
    t.direction = m.direction == Direction::MvToProd ? Direction::ProdToMv : Direction::MvToProd;
    t.degenerate = m.degenerate;
    t.scores = num::Tensor<double>::matrix(m.scores.cols(), m.scores.rows());
    for (std::size_t i = 0; i < m.scores.rows(); ++i) {
        for (std::size_t j = 0; j < m.scores.cols(); ++j) t.scores(j, i) = m.scores(i, j);
    }
    return t;
}

}  // namespace mqmc::harness
