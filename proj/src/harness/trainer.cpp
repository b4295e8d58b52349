#include "mqmc/harness/trainer.hpp"

#include <algorithm>
#include <limits>

#include <nlohmann/json.hpp>

#include "mqmc/numerics/random.hpp"

namespace mqmc::harness {

using enc::Binder;
using enc::Modality;

template <typename T>
BatchFeatures<T> gather(const data::Dataset& ds, const std::vector<std::uint64_t>& ids) {
    if (ids.empty()) throw data::DataError("gather: empty batch");
    const std::size_t n = ids.size();
    BatchFeatures<T> b;
    b.mv_visual = Tensor<T>::matrix(n, ds.visual_dim);
    b.prod_visual = Tensor<T>::matrix(n, ds.visual_dim);
    b.mv_text = Tensor<T>::matrix(n, ds.text_dim);
    b.prod_text = Tensor<T>::matrix(n, ds.text_dim);
    for (std::size_t r = 0; r < n; ++r) {
        const data::InstancePair& p = ds.by_id(ids[r]);
        std::copy(p.mv_visual.begin(), p.mv_visual.end(), b.mv_visual.row(r).begin());
        std::copy(p.prod_visual.begin(), p.prod_visual.end(), b.prod_visual.row(r).begin());
        std::copy(p.mv_text.begin(), p.mv_text.end(), b.mv_text.row(r).begin());
        std::copy(p.prod_text.begin(), p.prod_text.end(), b.prod_text.row(r).begin());
        b.ids.push_back(p.id);
        b.paths.push_back(p.path);
    }
    return b;
}

template <typename T>
FrontNodes build_front(Graph<T>& g, Binder<T>& b, const ModelParams<T>& params, const BatchFeatures<T>& batch,
                       const enc::ModelDims& dims, Modality modality, double tau) {
    for (const auto& [role, set] : params.sets) b.bind(set, !enc::is_key_role(role));

    FrontNodes f;
    auto project = [&](Role role, const Tensor<T>& x) {
        const enc::ProjectOut p = enc::project(g, b, g.constant(x), params.at(role), dims, enc::Mode::Train);
        if (p.batch_norm) f.batch_norm[role] = *p.batch_norm;
        return p.out;
    };
    if (modality != Modality::TextOnly) {
        f.mv_visual = project(Role::ProjectorMvVisual, batch.mv_visual);
        f.prod_visual = project(Role::ProjectorProdVisual, batch.prod_visual);
    }
    if (modality != Modality::VisualOnly) {
        f.mv_text = project(Role::ProjectorMvText, batch.mv_text);
        f.prod_text = project(Role::ProjectorProdText, batch.prod_text);
    }

    if (modality == Modality::All) {
        f.l1 = con::cross_modal_loss(g, *f.mv_visual, *f.mv_text, *f.prod_visual, *f.prod_text, tau);
        f.l2 = con::intra_modal_loss(g, *f.mv_visual, *f.mv_text, *f.prod_visual, *f.prod_text, tau);
    } else {
        // a missing modality has no features to align with; only its own intra-modal term survives
        f.l1 = g.constant(Tensor<T>::vector({T{0}}));
        f.l2 = modality == Modality::VisualOnly ? con::in_batch_info_nce(g, *f.mv_visual, *f.prod_visual, tau)
                                                : con::in_batch_info_nce(g, *f.mv_text, *f.prod_text, tau);
    }

    const NodeId mv_fused = enc::fuse(g, b, f.mv_visual, f.mv_text, Role::FusionMv);
    const NodeId prod_fused = enc::fuse(g, b, f.prod_visual, f.prod_text, Role::FusionProd);
    f.mv_query = enc::encode(g, b, mv_fused, Role::EncoderMvQuery, dims);
    f.prod_query = enc::encode(g, b, prod_fused, Role::EncoderProdQuery, dims);
    f.mv_key = enc::encode(g, b, mv_fused, Role::EncoderMvKey, dims);
    f.prod_key = enc::encode(g, b, prod_fused, Role::EncoderProdKey, dims);
    return f;
}

template <typename T>
ObjectiveNodes finish_objective(Graph<T>& g, const FrontNodes& f, NodeId prod_negatives, NodeId mv_negatives,
                                const Tensor<T>& mv_weights, const Tensor<T>& prod_weights,
                                const con::LossWeights& w) {
    ObjectiveNodes o;
    o.l3 = con::cross_instance_loss(g, f.mv_query, f.prod_query, f.mv_key, f.prod_key, prod_negatives, mv_negatives,
                                    mv_weights, prod_weights, w.tau);
    o.total = con::total_loss(g, f.l1, f.l2, o.l3, w);
    return o;
}

std::string StepLog::to_json() const {
    nlohmann::ordered_json j;
    j["step"] = step;
    j["L1"] = l1;
    j["L2"] = l2;
    j["L3"] = l3;
    j["L"] = total;
    j["lr"] = lr;
    j["bank_fill"] = bank_fill;
    j["negatives"] = negatives;
    j["warmup"] = warmup;
    j["fallback"] = fallback;
    j["importance_min"] = importance_min;
    j["importance_max"] = importance_max;
    j["importance_mean"] = importance_mean;
    return j.dump();
}

enc::ModelDims dims_for(const TrainConfig& cfg, const data::Dataset& ds) {
    enc::ModelDims d = cfg.dims;
    d.visual_in = ds.visual_dim;
    d.text_in = ds.text_dim;
    return d;
}

bank::MultiQueue make_bank(Side side, const TrainConfig& cfg, const data::Ontology& ontology) {
    const std::vector<int> ids = ontology.middle_ids();
    if (cfg.queue_mode == QueueMode::Single) {
        const std::vector<int> one{0};
        return bank::MultiQueue(side, one, cfg.queue_length * ids.size(), bank::Keying::Single);
    }
    return bank::MultiQueue(side, ids, cfg.queue_length, bank::Keying::ByMiddle);
}

Trainer::Trainer(TrainConfig config, const data::Dataset& dataset, data::DatasetSplit split)
    : config_(std::move(config)),
      dataset_(dataset),
      split_(std::move(split)),
      dims_(dims_for(config_, dataset)),
      batcher_(split_.train, config_.batch_size, config_.shuffle_seed),
      params_(enc::init_params<float>(dims_, config_.param_seed)),
      mv_bank_(make_bank(Side::Microvideo, config_, dataset.ontology)),
      prod_bank_(make_bank(Side::Product, config_, dataset.ontology)) {
    config_.validate();
    for (const auto& [role, set] : params_.sets) {
        if (!set.trainable) continue;
        for (const auto& [name, t] : set.tensors) {
            adam_.emplace(Binder<float>::input_name(role, name), num::AdamState<float>(t.shape()));
        }
    }
}

namespace {

std::vector<InstanceEmbedding> key_embeddings(const Tensor<float>& keys, Side side, const BatchFeatures<float>& b) {
    std::vector<InstanceEmbedding> out(keys.rows());
    for (std::size_t r = 0; r < keys.rows(); ++r) {
        out[r].values.assign(keys.row(r).begin(), keys.row(r).end());
        out[r].role = EmbeddingRole::Key;
        out[r].side = side;
        out[r].id = b.ids[r];
        out[r].path = b.paths[r];
    }
    return out;
}

struct Negatives {
    Tensor<float> values;  // [K, d']
    std::vector<CategoryPath> paths;
    bool warmup = false;
    std::size_t fallback = 0;
};

// Negatives for anchors of the other side, taken from `bank` (or, while it
// holds fewer than B entries, from this batch's keys of the bank's side).
Negatives negatives_from(bank::MultiQueue& bank, const std::vector<InstanceEmbedding>& batch_keys,
                         const std::vector<CategoryPath>& batch_paths, const std::set<std::uint64_t>& anchor_ids) {
    Negatives n;
    std::vector<bank::DrawnEntry> drawn;
    if (bank.total() >= batch_paths.size()) drawn = bank.draw_negatives(batch_paths, anchor_ids);
    if (drawn.empty()) {
        n.warmup = true;
        n.values = Tensor<float>::matrix(batch_keys.size(), batch_keys.front().values.size());
        for (std::size_t r = 0; r < batch_keys.size(); ++r) {
            std::copy(batch_keys[r].values.begin(), batch_keys[r].values.end(), n.values.row(r).begin());
            n.paths.push_back(batch_keys[r].path);
        }
        return n;
    }
    n.values = Tensor<float>::matrix(drawn.size(), drawn.front().entry.values.size());
    for (std::size_t r = 0; r < drawn.size(); ++r) {
        std::copy(drawn[r].entry.values.begin(), drawn[r].entry.values.end(), n.values.row(r).begin());
        n.paths.push_back(drawn[r].entry.path);
        n.fallback += drawn[r].fallback ? 1 : 0;
    }
    return n;
}

con::CentroidTable centroids(const bank::MultiQueue& bank, const std::vector<InstanceEmbedding>& batch_keys) {
    std::vector<InstanceEmbedding> all = batch_keys;
    for (const bank::QueueEntry& e : bank.entries()) {
        InstanceEmbedding x;
        x.values = e.values;
        x.role = EmbeddingRole::Key;
        x.side = bank.side();
        x.id = e.id;
        x.path = e.path;
        all.push_back(std::move(x));
    }
    return con::CentroidTable::build(all);
}

}  // namespace

StepLog Trainer::step() {
    const std::vector<std::uint64_t> ids = batcher_.batch(step_);
    const BatchFeatures<float> batch = gather<float>(dataset_, ids);
    const double tau = config_.weights.tau;

    Graph<float> g;
    Binder<float> b(g);
    const FrontNodes f = build_front(g, b, params_, batch, dims_, config_.modality, tau);

    const auto mv_keys = key_embeddings(g.value(f.mv_key), Side::Microvideo, batch);
    const auto prod_keys = key_embeddings(g.value(f.prod_key), Side::Product, batch);

    // importance tables see the bank before this step's draws
    const bool unit = config_.importance_mode == ImportanceMode::Unit;
    const con::CentroidTable prod_table = centroids(prod_bank_, prod_keys);
    const con::CentroidTable mv_table = centroids(mv_bank_, mv_keys);

    const std::set<std::uint64_t> anchors(ids.begin(), ids.end());
    const Negatives prod_negs = negatives_from(prod_bank_, prod_keys, batch.paths, anchors);
    const Negatives mv_negs = negatives_from(mv_bank_, mv_keys, batch.paths, anchors);

    auto weights = [&](const Negatives& n, const con::CentroidTable& table) {
        Tensor<double> w = con::importance_matrix(batch.paths, n.paths, table, config_.weights.zeta, unit);
        if (n.warmup) {
            for (std::size_t i = 0; i < std::min(w.rows(), w.cols()); ++i) w(i, i) = 0.0;
        }
        return w;
    };
    const Tensor<double> mv_w = weights(prod_negs, prod_table);
    const Tensor<double> prod_w = weights(mv_negs, mv_table);

    const ObjectiveNodes o = finish_objective(g, f, g.constant(prod_negs.values), g.constant(mv_negs.values),
                                              mv_w.cast<float>(), prod_w.cast<float>(), config_.weights);

    StepLog log;
    log.l1 = g.value(f.l1)[0];
    log.l2 = g.value(f.l2)[0];
    log.l3 = g.value(o.l3)[0];
    log.total = con::total_loss(log.l1, log.l2, log.l3, config_.weights);
    log.lr = num::cosine_lr(step_, std::max<std::uint64_t>(config_.steps, 1), config_.lr);
    log.warmup = prod_negs.warmup || mv_negs.warmup;
    log.negatives = prod_negs.values.rows();
    log.fallback = prod_negs.fallback + mv_negs.fallback;
    {
        double lo = std::numeric_limits<double>::infinity(), hi = -lo, sum = 0.0;
        std::size_t count = 0;
        for (const Tensor<double>* w : {&mv_w, &prod_w}) {
            for (std::size_t i = 0; i < w->rows(); ++i) {
                for (std::size_t j = 0; j < w->cols(); ++j) {
                    if ((prod_negs.warmup || mv_negs.warmup) && i == j) continue;
                    lo = std::min(lo, (*w)(i, j));
                    hi = std::max(hi, (*w)(i, j));
                    sum += (*w)(i, j);
                    ++count;
                }
            }
        }
        log.importance_min = lo;
        log.importance_max = hi;
        log.importance_mean = count ? sum / static_cast<double>(count) : 0.0;
    }

    g.backward(o.total);
    const auto grads = b.gradients();

    for (auto& [role, set] : params_.sets) {
        if (!set.trainable) continue;
        const auto& role_grads = grads.at(role);
        for (auto& [name, tensor] : set.tensors) {
            num::adam_step(tensor, role_grads.at(name), adam_.at(Binder<float>::input_name(role, name)), log.lr,
                           config_.weight_decay);
        }
    }
    for (const auto& [role, bn] : f.batch_norm) enc::update_running_stats(params_.at(role), g, bn, dims_);

    enc::momentum_update(params_.at(Role::EncoderMvKey), params_.at(Role::EncoderMvQuery), config_.momentum);
    enc::momentum_update(params_.at(Role::EncoderProdKey), params_.at(Role::EncoderProdQuery), config_.momentum);

    auto enqueue = [&](bank::MultiQueue& bank, const std::vector<InstanceEmbedding>& keys) {
        std::vector<bank::QueueEntry> entries(keys.size());
        for (std::size_t r = 0; r < keys.size(); ++r) {
            entries[r].values = keys[r].values;
            entries[r].id = keys[r].id;
            entries[r].path = keys[r].path;
            entries[r].step = step_;
        }
        bank.enqueue(entries);
    };
    enqueue(mv_bank_, mv_keys);
    enqueue(prod_bank_, prod_keys);

    ++step_;
    log.step = step_;
    log.bank_fill = mv_bank_.total() + prod_bank_.total();
    return log;
}

enc::Checkpoint Trainer::checkpoint() const {
    enc::Checkpoint c;
    c.config_hash = config_.hash();
    c.step = step_;
    c.config_text = config_.to_text();
    c.params = params_;
    c.adam = adam_;
    c.banks = {enc::BankSnapshot::of(mv_bank_), enc::BankSnapshot::of(prod_bank_)};
    return c;
}

void Trainer::restore(const enc::Checkpoint& ckpt) {
    if (ckpt.config_hash != config_.hash()) {
        throw enc::CheckpointError("checkpoint: config hash does not match the current configuration");
    }
    for (const auto& [role, set] : params_.sets) {
        const auto found = ckpt.params.sets.find(role);
        if (found == ckpt.params.sets.end()) {
            throw enc::CheckpointError(std::string("checkpoint: missing parameters for ") + enc::role_name(role));
        }
        for (const auto& [name, t] : set.tensors) {
            if (found->second.tensors.at(name).shape() != t.shape()) {
                throw enc::CheckpointError("checkpoint: shape mismatch for " + Binder<float>::input_name(role, name));
            }
        }
    }
    params_ = ckpt.params;
    if (!ckpt.adam.empty()) adam_ = ckpt.adam;
    for (const enc::BankSnapshot& s : ckpt.banks) {
        (s.side == Side::Microvideo ? mv_bank_ : prod_bank_) = s.restore();
    }
    step_ = ckpt.step;
}

ScoreMatrix score_all(const ModelParams<float>& params, const data::Dataset& ds,
                      const std::vector<std::uint64_t>& ids, const enc::ModelDims& dims, Modality modality) {
    if (ids.empty()) throw data::DataError("score_all: empty evaluation split");
    const BatchFeatures<float> b = gather<float>(ds, ids);
    const Tensor<float> mv =
        enc::embed_batch(params, Side::Microvideo, b.mv_visual, b.mv_text, dims, EmbeddingRole::Query, modality);
    const Tensor<float> prod =
        enc::embed_batch(params, Side::Product, b.prod_visual, b.prod_text, dims, EmbeddingRole::Query, modality);
    return cosine_scores(mv.cast<double>(), prod.cast<double>());
}

MetricsReport evaluate(const ModelParams<float>& params, const data::Dataset& ds,
                       const std::vector<std::uint64_t>& ids, const enc::ModelDims& dims, Modality modality) {
    const ScoreMatrix s = score_all(params, ds, ids, dims, modality);
    MetricsReport r;
    r.mv_to_prod = metrics(s);
    r.prod_to_mv = metrics(transpose(s));
    r.degenerate = s.degenerate;
    return r;
}

num::GradCheckReport check_full_objective(const ToyObjective& toy, double eps, double tolerance) {
    enc::ModelDims dims;
    dims.visual_in = toy.visual;
    dims.text_in = toy.text;
    dims.hidden = toy.hidden;
    dims.refined = toy.refined;
    dims.fused = toy.fused;

    num::Rng rng(toy.seed);
    auto random = [&](std::size_t r, std::size_t c, double sd) {
        Tensor<double> t = Tensor<double>::matrix(r, c);
        for (double& v : t.values()) v = rng.normal(0.0, sd);
        return t;
    };
    BatchFeatures<double> batch;
    batch.mv_visual = random(toy.batch, toy.visual, 1.0);
    batch.mv_text = random(toy.batch, toy.text, 1.0);
    batch.prod_visual = random(toy.batch, toy.visual, 1.0);
    batch.prod_text = random(toy.batch, toy.text, 1.0);
    const Tensor<double> prod_negs = random(toy.negatives, toy.fused, 0.3);
    const Tensor<double> mv_negs = random(toy.negatives, toy.fused, 0.3);
    Tensor<double> mv_w = Tensor<double>::matrix(toy.batch, toy.negatives);
    Tensor<double> prod_w = Tensor<double>::matrix(toy.batch, toy.negatives);
    for (double& v : mv_w.values()) v = rng.uniform(0.4, 1.0);
    for (double& v : prod_w.values()) v = rng.uniform(0.4, 1.0);

    ModelParams<double> base = enc::init_params<double>(dims, num::mix_seed(toy.seed, 1));
    // key encoders away from their query twins, so both paths are exercised
    for (Role r : {Role::EncoderMvKey, Role::EncoderProdKey}) {
        for (auto& [name, t] : base.at(r).tensors) {
            for (double& v : t.values()) v += rng.normal(0.0, 0.05);
        }
    }
    con::LossWeights w;
    w.tau = toy.tau;

    num::ParamMap start;
    for (const auto& [role, set] : base.sets) {
        if (!set.trainable) continue;
        for (const auto& [name, t] : set.tensors) start.emplace(Binder<double>::input_name(role, name), t);
    }

    // Keys are stop-gradient targets, so central differences must see them fixed.
    Tensor<double> mv_key, prod_key;
    {
        Graph<double> g;
        Binder<double> b(g);
        const FrontNodes f = build_front(g, b, base, batch, dims, Modality::All, w.tau);
        mv_key = g.value(f.mv_key);
        prod_key = g.value(f.prod_key);
    }

    const num::LossFn fn = [&](const num::ParamMap& p) {
        ModelParams<double> params = base;
        for (auto& [role, set] : params.sets) {
            if (!set.trainable) continue;
            for (auto& [name, t] : set.tensors) t = p.at(Binder<double>::input_name(role, name));
        }
        Graph<double> g;
        Binder<double> b(g);
        FrontNodes f = build_front(g, b, params, batch, dims, Modality::All, w.tau);
        f.mv_key = g.constant(mv_key);
        f.prod_key = g.constant(prod_key);
        const ObjectiveNodes o = finish_objective(g, f, g.constant(prod_negs), g.constant(mv_negs), mv_w, prod_w, w);
        num::LossAndGrad out;
        out.loss = g.value(o.total)[0];
        out.grads = g.backward(o.total);
        return out;
    };
    return num::grad_check(fn, start, eps, tolerance);
}

template BatchFeatures<float> gather<float>(const data::Dataset&, const std::vector<std::uint64_t>&);
template BatchFeatures<double> gather<double>(const data::Dataset&, const std::vector<std::uint64_t>&);
template FrontNodes build_front<float>(Graph<float>&, Binder<float>&, const ModelParams<float>&,
                                       const BatchFeatures<float>&, const enc::ModelDims&, Modality, double);
template FrontNodes build_front<double>(Graph<double>&, Binder<double>&, const ModelParams<double>&,
                                        const BatchFeatures<double>&, const enc::ModelDims&, Modality, double);
template ObjectiveNodes finish_objective<float>(Graph<float>&, const FrontNodes&, NodeId, NodeId,
                                                const Tensor<float>&, const Tensor<float>&, const con::LossWeights&);
template ObjectiveNodes finish_objective<double>(Graph<double>&, const FrontNodes&, NodeId, NodeId,
                                                 const Tensor<double>&, const Tensor<double>&,
                                                 const con::LossWeights&);

}  // namespace mqmc::harness
