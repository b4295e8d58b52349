#pragma once

#include <map>
#include <span>
#include <vector>

#include "mqmc/contrast/losses.hpp"
#include "mqmc/types.hpp"

namespace mqmc::con {

struct Centroid {
    std::vector<double> mean;
    std::size_t count = 0;
};

// Mean embedding per category at both ontology levels, plus the largest
// pairwise centroid distance per level (the normalizer for importance()).
class CentroidTable {
public:
    static CentroidTable build(std::span<const InstanceEmbedding> embeddings);

    const Centroid& coarse(int id) const;
    const Centroid& middle(int id) const;
    const std::map<int, Centroid>& coarse_all() const { return coarse_; }
    const std::map<int, Centroid>& middle_all() const { return middle_; }
    double max_coarse_distance() const { return max_coarse_; }
    double max_middle_distance() const { return max_middle_; }

private:
    std::map<int, Centroid> coarse_;
    std::map<int, Centroid> middle_;
    double max_coarse_ = 0.0;
    double max_middle_ = 0.0;
};

double euclidean_distance(std::span<const double> a, std::span<const double> b);

/// 1 - zeta * (exp(n1) + exp(n2)) clamped to [0,1], where n_l is the level-l
/// centroid distance divided by the table's largest level-l distance.
double importance(const CategoryPath& anchor, const CategoryPath& negative, const CentroidTable& table, double zeta);

/// [anchors x negatives] matrix of importance scores; all ones when `unit`.
Tensor<double> importance_matrix(std::span<const CategoryPath> anchors, std::span<const CategoryPath> negatives,
                                 const CentroidTable& table, double zeta, bool unit = false);

}  // namespace mqmc::con
