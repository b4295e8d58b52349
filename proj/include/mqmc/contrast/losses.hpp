#pragma once

#include <span>
#include <stdexcept>
#include <vector>

#include "mqmc/numerics/graph.hpp"

namespace mqmc::con {

using num::Graph;
using num::NodeId;
using num::Tensor;

class LossError : public std::runtime_error {
public:
    using std::runtime_error::runtime_error;
};

struct LossWeights {
    double alpha = 0.1;  // cross-modal
    double beta = 0.1;   // intra-modal
    double delta = 0.8;  // cross-instance
    double tau = 0.07;
    double zeta = 0.1;

    void validate() const;
};

/// Weighted InfoNCE averaged over the rows of `anchors`:
///   -log( e^{cos(a_i,p_i)/tau} / (e^{cos(a_i,p_i)/tau} + sum_k w_ik e^{cos(a_i,n_k)/tau}) )
/// anchors/positives are [B,d], negatives [K,d], weights [B,K] and >= 0.
template <typename T>
NodeId info_nce(Graph<T>& g, NodeId anchors, NodeId positives, NodeId negatives, const Tensor<T>& weights,
                double tau);

/// In-batch InfoNCE: row i of `positives` is the positive of anchor i, every
/// other row a unit-weight negative.
template <typename T>
NodeId in_batch_info_nce(Graph<T>& g, NodeId anchors, NodeId positives, double tau);

/// Cross-modal loss: visual-vs-textual InfoNCE for microvideos plus the same for products.
template <typename T>
NodeId cross_modal_loss(Graph<T>& g, NodeId mv_visual, NodeId mv_text, NodeId prod_visual, NodeId prod_text,
                        double tau);

/// Intra-modal loss: microvideo-vs-product InfoNCE in the visual and in the textual space.
template <typename T>
NodeId intra_modal_loss(Graph<T>& g, NodeId mv_visual, NodeId mv_text, NodeId prod_visual, NodeId prod_text,
                        double tau);

/// Cross-instance momentum loss. Microvideo queries are contrasted against
/// their product keys and the product negative batch (weights mv_weights
/// [B,K_p]); product queries symmetrically against microvideo keys.
template <typename T>
NodeId cross_instance_loss(Graph<T>& g, NodeId mv_query, NodeId prod_query, NodeId mv_key, NodeId prod_key,
                           NodeId prod_negatives, NodeId mv_negatives, const Tensor<T>& mv_weights,
                           const Tensor<T>& prod_weights, double tau);

/// alpha * l1 + beta * l2 + delta * l3.
template <typename T>
NodeId total_loss(Graph<T>& g, NodeId l1, NodeId l2, NodeId l3, const LossWeights& w);

inline double total_loss(double l1, double l2, double l3, const LossWeights& w) {
    return w.alpha * l1 + w.beta * l2 + w.delta * l3;
}

// Plain-value entry points (f64).

double info_nce(std::span<const double> anchor, std::span<const double> positive,
                const std::vector<std::vector<double>>& negatives, std::span<const double> weights, double tau);

struct RefinedBatch {
    Tensor<double> mv_visual, mv_text, prod_visual, prod_text;  // each [B,d]
};

double loss_cross_modal(const RefinedBatch& batch, double tau);
double loss_intra_modal(const RefinedBatch& batch, double tau);

struct InstanceBatch {
    Tensor<double> mv_query, prod_query, mv_key, prod_key;  // [B,d']
    Tensor<double> mv_negatives, prod_negatives;            // [K,d']
    Tensor<double> mv_weights, prod_weights;                // [B,K]
};

double loss_cross_instance(const InstanceBatch& batch, double tau);

}  // namespace mqmc::con
