#include "mqmc/encoders/network.hpp"

namespace mqmc::enc {

using num::Tensor;

const char* modality_name(Modality m) {
    switch (m) {
        case Modality::All: return "all";
        case Modality::VisualOnly: return "visual-only";
        case Modality::TextOnly: return "text-only";
    }
    return "?";
}

Modality modality_from_name(const std::string& name) {
    if (name == "all") return Modality::All;
    if (name == "visual-only") return Modality::VisualOnly;
    if (name == "text-only") return Modality::TextOnly;
    throw ShapeError("unknown modality mode '" + name + "'");
}

SideRoles roles_for(Side side) {
    if (side == Side::Microvideo) {
        return {Role::ProjectorMvVisual, Role::ProjectorMvText, Role::FusionMv, Role::EncoderMvQuery,
                Role::EncoderMvKey};
    }
    return {Role::ProjectorProdVisual, Role::ProjectorProdText, Role::FusionProd, Role::EncoderProdQuery,
            Role::EncoderProdKey};
}

template <typename T>
std::string Binder<T>::input_name(Role role, const std::string& tensor) {
    return std::string(role_name(role)) + "/" + tensor;
}

template <typename T>
void Binder<T>::bind(const ParamSet<T>& set, bool requires_grad) {
    if (bound(set.role)) throw ShapeError(std::string("bind: role already bound: ") + role_name(set.role));
    auto& slots = nodes_[set.role];
    for (const auto& [name, tensor] : set.tensors) {
        slots[name] = graph_.input(input_name(set.role, name), tensor, requires_grad);
    }
    grads_[set.role] = requires_grad;
}

template <typename T>
NodeId Binder<T>::node(Role role, const std::string& tensor) const {
    auto r = nodes_.find(role);
    if (r == nodes_.end()) throw ShapeError(std::string("role not bound: ") + role_name(role));
    auto t = r->second.find(tensor);
    if (t == r->second.end()) {
        throw ShapeError(std::string("tensor '") + tensor + "' missing from " + role_name(role));
    }
    return t->second;
}

template <typename T>
std::map<Role, std::map<std::string, Tensor<T>>> Binder<T>::gradients() const {
    std::map<Role, std::map<std::string, Tensor<T>>> out;
    for (const auto& [role, slots] : nodes_) {
        if (!grads_.at(role)) continue;
        auto& dst = out[role];
        for (const auto& [name, id] : slots) dst.emplace(name, graph_.grad(id));
    }
    return out;
}

template <typename T>
ProjectOut project(Graph<T>& g, const Binder<T>& b, NodeId x, const ParamSet<T>& set, const ModelDims& dims,
                   Mode mode) {
    const Tensor<T>& w1 = set.tensors.at("W1");
    if (g.value(x).cols() != w1.cols()) {
        throw ShapeError(std::string("project: ") + role_name(set.role) + " expects input dimension " +
                         std::to_string(w1.cols()) + ", got " + std::to_string(g.value(x).cols()));
    }
    ProjectOut result;
    NodeId h = g.matmul(x, b.node(set.role, "W1"), false, true);
    if (set.tensors.count("bn_gamma")) {
        const NodeId gamma = b.node(set.role, "bn_gamma");
        const NodeId beta = b.node(set.role, "bn_beta");
        const T eps = static_cast<T>(dims.bn_eps);
        if (mode == Mode::Train) {
            h = g.batch_norm(h, gamma, beta, eps);
            result.batch_norm = h;
        } else {
            h = g.batch_norm_frozen(h, gamma, beta, set.buffers.at("bn_mean"), set.buffers.at("bn_var"), eps);
        }
    }
    h = g.leaky_relu(h, static_cast<T>(dims.leaky_slope));
    result.out = g.matmul(h, b.node(set.role, "W2"), false, true);
    return result;
}

template <typename T>
NodeId fuse(Graph<T>& g, const Binder<T>& b, std::optional<NodeId> visual, std::optional<NodeId> text, Role role) {
    std::optional<NodeId> u;
    if (visual) u = g.matmul(*visual, b.node(role, "W2"), false, true);
    if (text) {
        const NodeId t = g.matmul(*text, b.node(role, "W1"), false, true);
        u = u ? g.add(*u, t) : t;
    }
    if (!u) throw ShapeError("fuse: at least one modality is required");
    const NodeId gate = g.sigmoid(g.matmul(*u, b.node(role, "W3"), false, true));
    return g.mul(*u, gate);
}

template <typename T>
NodeId encode(Graph<T>& g, const Binder<T>& b, NodeId fused, Role role, const ModelDims& dims) {
    if (g.value(fused).cols() != dims.fused) {
        throw ShapeError("encode: expects dimension " + std::to_string(dims.fused) + ", got " +
                         std::to_string(g.value(fused).cols()));
    }
    const NodeId input = is_key_role(role) ? g.detach(fused) : fused;
    const NodeId h = g.leaky_relu(g.matmul(input, b.node(role, "W1"), false, true), static_cast<T>(dims.leaky_slope));
    const NodeId out = g.matmul(h, b.node(role, "W2"), false, true);
    return is_key_role(role) ? g.detach(out) : out;
}

template <typename T>
void update_running_stats(ParamSet<T>& projector, const Graph<T>& g, NodeId bn, const ModelDims& dims) {
    auto [mean, var] = g.batch_stats(bn);
    const double rows = static_cast<double>(g.value(bn).rows());
    const double unbias = rows > 1 ? rows / (rows - 1.0) : 1.0;
    const double mom = dims.bn_momentum;
    Tensor<T>& rm = projector.buffers.at("bn_mean");
    Tensor<T>& rv = projector.buffers.at("bn_var");
    for (std::size_t c = 0; c < rm.size(); ++c) {
        rm[c] = static_cast<T>((1.0 - mom) * rm[c] + mom * mean[c]);
        rv[c] = static_cast<T>((1.0 - mom) * rv[c] + mom * var[c] * unbias);
    }
}

namespace {

template <typename T>
Tensor<T> as_row(std::span<const T> v) {
    return Tensor<T>(num::Shape{1, v.size()}, std::vector<T>(v.begin(), v.end()));
}

template <typename T>
std::vector<T> to_vector(const Tensor<T>& t) {
    return {t.values().begin(), t.values().end()};
}

}  // namespace

template <typename T>
std::vector<T> project(std::span<const T> raw, const ParamSet<T>& set, const ModelDims& dims) {
    if (raw.empty()) throw ShapeError("project: empty input");
    Graph<T> g;
    Binder<T> b(g);
    b.bind(set, false);
    const NodeId x = g.constant(as_row(raw));
    return to_vector(g.value(project(g, b, x, set, dims, Mode::Eval).out));
}

template <typename T>
std::vector<T> fuse(std::span<const T> visual, std::span<const T> text, const ParamSet<T>& set) {
    const std::size_t d = set.tensors.at("W2").cols();
    if (visual.size() != d || text.size() != d) {
        throw ShapeError("fuse: expects two vectors of dimension " + std::to_string(d));
    }
    Graph<T> g;
    Binder<T> b(g);
    b.bind(set, false);
    const NodeId v = g.constant(as_row(visual));
    const NodeId t = g.constant(as_row(text));
    return to_vector(g.value(fuse(g, b, v, t, set.role)));
}

template <typename T>
InstanceEmbedding encode(std::span<const T> fused, const ParamSet<T>& set, const ModelDims& dims, Side side,
                         std::uint64_t id, CategoryPath path) {
    if (fused.empty()) throw ShapeError("encode: empty input");
    Graph<T> g;
    Binder<T> b(g);
    b.bind(set, false);
    const NodeId f = g.constant(as_row(fused));
    const Tensor<T>& out = g.value(encode(g, b, f, set.role, dims));
    InstanceEmbedding e;
    e.values.assign(out.values().begin(), out.values().end());
    e.role = is_key_role(set.role) ? EmbeddingRole::Key : EmbeddingRole::Query;
    e.side = side;
    e.id = id;
    e.path = path;
    return e;
}

template <typename T>
Tensor<T> embed_batch(const ModelParams<T>& params, Side side, const Tensor<T>& visual, const Tensor<T>& text,
                      const ModelDims& dims, EmbeddingRole role, Modality modality) {
    const SideRoles roles = roles_for(side);
    Graph<T> g;
    Binder<T> b(g);
    const Role enc_role = role == EmbeddingRole::Query ? roles.query_encoder : roles.key_encoder;
    for (Role r : {roles.visual_projector, roles.text_projector, roles.fusion, enc_role}) b.bind(params.at(r), false);

    std::optional<NodeId> v, t;
    if (modality != Modality::TextOnly) {
        v = project(g, b, g.constant(visual), params.at(roles.visual_projector), dims, Mode::Eval).out;
    }
    if (modality != Modality::VisualOnly) {
        t = project(g, b, g.constant(text), params.at(roles.text_projector), dims, Mode::Eval).out;
    }
    const NodeId fused = fuse(g, b, v, t, roles.fusion);
    return g.value(encode(g, b, fused, enc_role, dims));
}

#define MQMC_INSTANTIATE(T)                                                                                   \
    template class Binder<T>;                                                                                 \
    template ProjectOut project<T>(Graph<T>&, const Binder<T>&, NodeId, const ParamSet<T>&, const ModelDims&, \
                                   Mode);                                                                     \
    template NodeId fuse<T>(Graph<T>&, const Binder<T>&, std::optional<NodeId>, std::optional<NodeId>, Role); \
    template NodeId encode<T>(Graph<T>&, const Binder<T>&, NodeId, Role, const ModelDims&);                  \
    template void update_running_stats<T>(ParamSet<T>&, const Graph<T>&, NodeId, const ModelDims&);           \
    template std::vector<T> project<T>(std::span<const T>, const ParamSet<T>&, const ModelDims&);             \
    template std::vector<T> fuse<T>(std::span<const T>, std::span<const T>, const ParamSet<T>&);              \
    template InstanceEmbedding encode<T>(std::span<const T>, const ParamSet<T>&, const ModelDims&, Side,      \
                                         std::uint64_t, CategoryPath);                                        \
    template Tensor<T> embed_batch<T>(const ModelParams<T>&, Side, const Tensor<T>&, const Tensor<T>&,        \
                                      const ModelDims&, EmbeddingRole, Modality);

MQMC_INSTANTIATE(float)
MQMC_INSTANTIATE(double)

#undef MQMC_INSTANTIATE

}  // namespace mqmc::enc
