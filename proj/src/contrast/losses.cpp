#include "mqmc/contrast/losses.hpp"

namespace mqmc::con {

void LossWeights::validate() const {
    auto unit = [](double v) { return v >= 0.0 && v <= 1.0; };
    if (!unit(alpha) || !unit(beta) || !unit(delta)) throw LossError("loss weights must lie in [0,1]");
    if (!(tau > 0.0)) throw LossError("temperature must be positive");
    if (!(zeta >= 0.0)) throw LossError("importance coefficient must be >= 0");
}

namespace {

template <typename T>
NodeId normalize_rows(Graph<T>& g, NodeId x) {
    return g.div(x, g.row_norm(x));
}

}  // namespace

template <typename T>
NodeId info_nce(Graph<T>& g, NodeId anchors, NodeId positives, NodeId negatives, const Tensor<T>& weights,
                double tau) {
    if (!(tau > 0.0)) throw LossError("info_nce: temperature must be positive");
    const auto& a = g.value(anchors);
    const auto& p = g.value(positives);
    const auto& n = g.value(negatives);
    if (a.shape() != p.shape()) throw LossError("info_nce: anchors and positives differ in shape");
    if (n.cols() != a.cols()) throw LossError("info_nce: negatives have a different dimension");
    if (weights.rows() != a.rows() || weights.cols() != n.rows()) {
        throw LossError("info_nce: weight matrix " + num::shape_string(weights.shape()) + " does not match " +
                        std::to_string(a.rows()) + " anchors x " + std::to_string(n.rows()) + " negatives");
    }
    for (T w : weights.values()) {
        if (!(w >= T{0})) throw LossError("info_nce: negative weight");
    }
    // node values move when the graph grows; keep only the extents
    const std::size_t rows = a.rows(), negs = n.rows();
    const T inv_tau = static_cast<T>(1.0 / tau);
    const NodeId an = normalize_rows(g, anchors);
    const NodeId pn = normalize_rows(g, positives);
    const NodeId nn = normalize_rows(g, negatives);

    const NodeId pos = g.scale(g.sum(g.mul(an, pn), num::Axis::Cols), inv_tau);  // [B,1]
    const NodeId neg = g.scale(g.matmul(an, nn, false, true), inv_tau);           // [B,K]
    const NodeId logits = g.concat({pos, neg}, 1);

    Tensor<T> full = Tensor<T>::matrix(rows, negs + 1);
    for (std::size_t r = 0; r < rows; ++r) {
        full(r, 0) = T{1};
        for (std::size_t k = 0; k < negs; ++k) full(r, k + 1) = weights(r, k);
    }
    const NodeId lse = g.logsumexp(logits, std::move(full));
    return g.mean(g.add(lse, g.scale(pos, T{-1})));
}

template <typename T>
NodeId in_batch_info_nce(Graph<T>& g, NodeId anchors, NodeId positives, double tau) {
    const std::size_t b = g.value(anchors).rows();
    if (b < 2) throw LossError("in-batch contrast needs a batch of at least 2");
    Tensor<T> w = Tensor<T>::matrix(b, b, T{1});
    for (std::size_t i = 0; i < b; ++i) w(i, i) = T{0};
    return info_nce(g, anchors, positives, positives, w, tau);
}

template <typename T>
NodeId cross_modal_loss(Graph<T>& g, NodeId mv_visual, NodeId mv_text, NodeId prod_visual, NodeId prod_text,
                        double tau) {
    return g.add(in_batch_info_nce(g, mv_visual, mv_text, tau), in_batch_info_nce(g, prod_visual, prod_text, tau));
}

template <typename T>
NodeId intra_modal_loss(Graph<T>& g, NodeId mv_visual, NodeId mv_text, NodeId prod_visual, NodeId prod_text,
                        double tau) {
    return g.add(in_batch_info_nce(g, mv_visual, prod_visual, tau), in_batch_info_nce(g, mv_text, prod_text, tau));
}

template <typename T>
NodeId cross_instance_loss(Graph<T>& g, NodeId mv_query, NodeId prod_query, NodeId mv_key, NodeId prod_key,
                           NodeId prod_negatives, NodeId mv_negatives, const Tensor<T>& mv_weights,
                           const Tensor<T>& prod_weights, double tau) {
    const NodeId mv_term = info_nce(g, mv_query, prod_key, prod_negatives, mv_weights, tau);
    const NodeId prod_term = info_nce(g, prod_query, mv_key, mv_negatives, prod_weights, tau);
    return g.add(mv_term, prod_term);
}

template <typename T>
NodeId total_loss(Graph<T>& g, NodeId l1, NodeId l2, NodeId l3, const LossWeights& w) {
    const NodeId a = g.scale(l1, static_cast<T>(w.alpha));
    const NodeId b = g.scale(l2, static_cast<T>(w.beta));
    const NodeId c = g.scale(l3, static_cast<T>(w.delta));
    return g.add(g.add(a, b), c);
}

double info_nce(std::span<const double> anchor, std::span<const double> positive,
                const std::vector<std::vector<double>>& negatives, std::span<const double> weights, double tau) {
    if (anchor.size() != positive.size()) throw LossError("info_nce: anchor and positive differ in length");
    if (weights.size() != negatives.size()) throw LossError("info_nce: one weight per negative required");
    if (negatives.empty()) return 0.0;
    Graph<double> g;
    const NodeId a = g.constant(Tensor<double>({1, anchor.size()}, {anchor.begin(), anchor.end()}));
    const NodeId p = g.constant(Tensor<double>({1, positive.size()}, {positive.begin(), positive.end()}));
    std::vector<double> flat;
    for (const auto& n : negatives) {
        if (n.size() != anchor.size()) throw LossError("info_nce: negative has a different dimension");
        flat.insert(flat.end(), n.begin(), n.end());
    }
    const NodeId n = g.constant(Tensor<double>({negatives.size(), anchor.size()}, std::move(flat)));
    const Tensor<double> w({1, weights.size()}, {weights.begin(), weights.end()});
    return g.value(info_nce(g, a, p, n, w, tau))[0];
}

double loss_cross_modal(const RefinedBatch& batch, double tau) {
    Graph<double> g;
    const NodeId l = cross_modal_loss(g, g.constant(batch.mv_visual), g.constant(batch.mv_text),
                                      g.constant(batch.prod_visual), g.constant(batch.prod_text), tau);
    return g.value(l)[0];
}

double loss_intra_modal(const RefinedBatch& batch, double tau) {
    Graph<double> g;
    const NodeId l = intra_modal_loss(g, g.constant(batch.mv_visual), g.constant(batch.mv_text),
                                      g.constant(batch.prod_visual), g.constant(batch.prod_text), tau);
    return g.value(l)[0];
}

double loss_cross_instance(const InstanceBatch& batch, double tau) {
    Graph<double> g;
    const NodeId l = cross_instance_loss(g, g.constant(batch.mv_query), g.constant(batch.prod_query),
                                         g.constant(batch.mv_key), g.constant(batch.prod_key),
                                         g.constant(batch.prod_negatives), g.constant(batch.mv_negatives),
                                         batch.mv_weights, batch.prod_weights, tau);
    return g.value(l)[0];
}

#define MQMC_INSTANTIATE(T)                                                                                      \
    template NodeId info_nce<T>(Graph<T>&, NodeId, NodeId, NodeId, const Tensor<T>&, double);                   \
    template NodeId in_batch_info_nce<T>(Graph<T>&, NodeId, NodeId, double);                                    \
    template NodeId cross_modal_loss<T>(Graph<T>&, NodeId, NodeId, NodeId, NodeId, double);                     \
    template NodeId intra_modal_loss<T>(Graph<T>&, NodeId, NodeId, NodeId, NodeId, double);                     \
    template NodeId cross_instance_loss<T>(Graph<T>&, NodeId, NodeId, NodeId, NodeId, NodeId, NodeId,           \
                                           const Tensor<T>&, const Tensor<T>&, double);                         \
    template NodeId total_loss<T>(Graph<T>&, NodeId, NodeId, NodeId, const LossWeights&);

MQMC_INSTANTIATE(float)
MQMC_INSTANTIATE(double)

#undef MQMC_INSTANTIATE

}  // namespace mqmc::con
