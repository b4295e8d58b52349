#pragma once

#include <cstdint>
#include <map>
#include <optional>
#include <string>
#include <vector>

#include "mqmc/contrast/importance.hpp"
#include "mqmc/dataio/dataset.hpp"
#include "mqmc/dataio/split.hpp"
#include "mqmc/encoders/checkpoint.hpp"
#include "mqmc/encoders/network.hpp"
#include "mqmc/harness/config.hpp"
#include "mqmc/harness/metrics.hpp"
#include "mqmc/membank/multi_queue.hpp"
#include "mqmc/numerics/grad_check.hpp"

namespace mqmc::harness {

using enc::ModelParams;
using enc::Role;
using num::Graph;
using num::NodeId;
using num::Tensor;

template <typename T>
struct BatchFeatures {
    Tensor<T> mv_visual, mv_text, prod_visual, prod_text;  // [B, in]
    std::vector<std::uint64_t> ids;
    std::vector<CategoryPath> paths;
};

template <typename T>
BatchFeatures<T> gather(const data::Dataset& ds, const std::vector<std::uint64_t>& ids);

// Graph nodes shared by every objective: refined features, the in-batch
// losses and both sides' query and key embeddings.
struct FrontNodes {
    std::optional<NodeId> mv_visual, mv_text, prod_visual, prod_text;
    std::map<Role, NodeId> batch_norm;
    NodeId l1 = 0, l2 = 0;
    NodeId mv_query = 0, prod_query = 0, mv_key = 0, prod_key = 0;
};

/// Binds all parameters (query side with gradients, key encoders without) and
/// builds everything up to the encoders in training mode.
template <typename T>
FrontNodes build_front(Graph<T>& g, enc::Binder<T>& b, const ModelParams<T>& params, const BatchFeatures<T>& batch,
                       const enc::ModelDims& dims, enc::Modality modality, double tau);

struct ObjectiveNodes {
    NodeId l3 = 0, total = 0;
};

template <typename T>
ObjectiveNodes finish_objective(Graph<T>& g, const FrontNodes& f, NodeId prod_negatives, NodeId mv_negatives,
                                const Tensor<T>& mv_weights, const Tensor<T>& prod_weights,
                                const con::LossWeights& w);

struct StepLog {
    std::uint64_t step = 0;  // 1-based index of the finished step
    double l1 = 0.0, l2 = 0.0, l3 = 0.0, total = 0.0;
    double lr = 0.0;
    std::size_t bank_fill = 0;  // entries across both banks after enqueueing
    bool warmup = false;        // negatives came from the batch's own keys
    std::size_t negatives = 0;  // K per side
    std::size_t fallback = 0;   // drawn entries served from another queue
    double importance_min = 0.0, importance_max = 0.0, importance_mean = 0.0;

    std::string to_json() const;
};

// Sequential training state: parameters, optimizer moments and both banks.
class Trainer {
public:
    Trainer(TrainConfig config, const data::Dataset& dataset, data::DatasetSplit split);

    /// One full update on the next training batch.
    StepLog step();

    std::uint64_t current_step() const { return step_; }
    const TrainConfig& config() const { return config_; }
    const enc::ModelDims& dims() const { return dims_; }
    const data::DatasetSplit& split() const { return split_; }
    const ModelParams<float>& params() const { return params_; }
    ModelParams<float>& mutable_params() { return params_; }
    const bank::MultiQueue& bank(Side side) const { return side == Side::Microvideo ? mv_bank_ : prod_bank_; }

    enc::Checkpoint checkpoint() const;
    /// Restores parameters, optimizer state, banks and the step counter.
    void restore(const enc::Checkpoint& ckpt);

private:
    TrainConfig config_;
    const data::Dataset& dataset_;
    data::DatasetSplit split_;
    enc::ModelDims dims_;
    data::Batcher batcher_;
    ModelParams<float> params_;
    std::map<std::string, num::AdamState<float>> adam_;
    bank::MultiQueue mv_bank_;
    bank::MultiQueue prod_bank_;
    std::uint64_t step_ = 0;
};

enc::ModelDims dims_for(const TrainConfig& cfg, const data::Dataset& ds);
bank::MultiQueue make_bank(Side side, const TrainConfig& cfg, const data::Ontology& ontology);

/// Scores the given pairs with both sides' query encoders and computes both directions.
MetricsReport evaluate(const ModelParams<float>& params, const data::Dataset& ds,
                       const std::vector<std::uint64_t>& ids, const enc::ModelDims& dims, enc::Modality modality);

/// The mv->prod score matrix for the given pairs (prod->mv is its transpose).
ScoreMatrix score_all(const ModelParams<float>& params, const data::Dataset& ds,
                      const std::vector<std::uint64_t>& ids, const enc::ModelDims& dims, enc::Modality modality);

// Gradient check of the combined objective on a toy problem in f64.
struct ToyObjective {
    std::size_t batch = 4, visual = 6, text = 5, hidden = 8, refined = 8, fused = 8, negatives = 4;
    double tau = 0.07;
    std::uint64_t seed = 3;
};

num::GradCheckReport check_full_objective(const ToyObjective& toy, double eps, double tolerance);

}  // namespace mqmc::harness
