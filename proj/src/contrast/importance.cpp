#include "mqmc/contrast/importance.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>

namespace mqmc::con {

double euclidean_distance(std::span<const double> a, std::span<const double> b) {
    if (a.size() != b.size()) throw LossError("euclidean_distance: length mismatch");
    double acc = 0.0;
    for (std::size_t i = 0; i < a.size(); ++i) {
        const double d = a[i] - b[i];
        acc += d * d;
    }
    return std::sqrt(acc);
}

namespace {

// Members are summed in a canonical order so the table does not depend on input order.
std::map<int, Centroid> pool(std::span<const InstanceEmbedding> embeddings, std::span<const std::size_t> order,
                             bool coarse_level) {
    std::map<int, Centroid> out;
    for (std::size_t idx : order) {
        const InstanceEmbedding& e = embeddings[idx];
        Centroid& c = out[coarse_level ? e.path.coarse : e.path.middle];
        if (c.mean.empty()) c.mean.assign(e.values.size(), 0.0);
        if (c.mean.size() != e.values.size()) throw LossError("centroids: embeddings differ in dimension");
        for (std::size_t i = 0; i < e.values.size(); ++i) c.mean[i] += e.values[i];
        ++c.count;
    }
    for (auto& [id, c] : out) {
        for (double& v : c.mean) v /= static_cast<double>(c.count);
    }
    return out;
}

double max_pairwise(const std::map<int, Centroid>& table) {
    double best = 0.0;
    for (auto a = table.begin(); a != table.end(); ++a) {
        for (auto b = std::next(a); b != table.end(); ++b) {
            best = std::max(best, euclidean_distance(a->second.mean, b->second.mean));
        }
    }
    return best;
}

}  // namespace

CentroidTable CentroidTable::build(std::span<const InstanceEmbedding> embeddings) {
    if (embeddings.empty()) throw LossError("centroids: empty embedding list");
    std::vector<std::size_t> order(embeddings.size());
    std::iota(order.begin(), order.end(), std::size_t{0});
    std::sort(order.begin(), order.end(), [&](std::size_t x, std::size_t y) {
        const InstanceEmbedding& a = embeddings[x];
        const InstanceEmbedding& b = embeddings[y];
        if (a.id != b.id) return a.id < b.id;
        if (a.path != b.path) return a.path < b.path;
        return a.values < b.values;
    });
    CentroidTable t;
    t.coarse_ = pool(embeddings, order, true);
    t.middle_ = pool(embeddings, order, false);
    t.max_coarse_ = max_pairwise(t.coarse_);
    t.max_middle_ = max_pairwise(t.middle_);
    return t;
}

const Centroid& CentroidTable::coarse(int id) const {
    auto it = coarse_.find(id);
    if (it == coarse_.end()) throw LossError("centroids: unknown coarse category " + std::to_string(id));
    return it->second;
}

const Centroid& CentroidTable::middle(int id) const {
    auto it = middle_.find(id);
    if (it == middle_.end()) throw LossError("centroids: unknown middle category " + std::to_string(id));
    return it->second;
}

double importance(const CategoryPath& anchor, const CategoryPath& negative, const CentroidTable& table, double zeta) {
    auto normalized = [](double distance, double max_distance) {
        return max_distance > 0.0 ? distance / max_distance : 0.0;
    };
    const double n1 = normalized(euclidean_distance(table.coarse(anchor.coarse).mean, table.coarse(negative.coarse).mean),
                                 table.max_coarse_distance());
    const double n2 = normalized(euclidean_distance(table.middle(anchor.middle).mean, table.middle(negative.middle).mean),
                                 table.max_middle_distance());
    const double raw = 1.0 - zeta * (std::exp(n1) + std::exp(n2));
    return std::clamp(raw, 0.0, 1.0);
}

Tensor<double> importance_matrix(std::span<const CategoryPath> anchors, std::span<const CategoryPath> negatives,
                                 const CentroidTable& table, double zeta, bool unit) {
    if (anchors.empty() || negatives.empty()) throw LossError("importance_matrix: empty anchor or negative set");
    Tensor<double> e = Tensor<double>::matrix(anchors.size(), negatives.size(), 1.0);
    if (unit) return e;
    for (std::size_t i = 0; i < anchors.size(); ++i) {
        for (std::size_t k = 0; k < negatives.size(); ++k) e(i, k) = importance(anchors[i], negatives[k], table, zeta);
    }
    return e;
}

}  // namespace mqmc::con
