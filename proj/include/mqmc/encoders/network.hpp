#pragma once

#include <map>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include "mqmc/encoders/params.hpp"
#include "mqmc/numerics/graph.hpp"
#include "mqmc/types.hpp"

namespace mqmc::enc {

using num::Graph;
using num::NodeId;

enum class Mode { Train, Eval };
enum class Modality { All, VisualOnly, TextOnly };

const char* modality_name(Modality m);
Modality modality_from_name(const std::string& name);

// Places ParamSet tensors into a graph as named inputs "<role>/<tensor>" and
// reads their gradients back after a backward pass.
template <typename T>
class Binder {
public:
    explicit Binder(Graph<T>& graph) : graph_(graph) {}

    void bind(const ParamSet<T>& set, bool requires_grad);
    NodeId node(Role role, const std::string& tensor) const;
    bool bound(Role role) const { return nodes_.count(role) > 0; }

    /// Gradients of every requires-grad tensor from the graph's last backward().
    std::map<Role, std::map<std::string, num::Tensor<T>>> gradients() const;

    static std::string input_name(Role role, const std::string& tensor);

private:
    Graph<T>& graph_;
    std::map<Role, std::map<std::string, NodeId>> nodes_;
    std::map<Role, bool> grads_;
};

struct ProjectOut {
    NodeId out = 0;
    std::optional<NodeId> batch_norm;  // training-mode BN node, for running-stat updates
};

/// W2 * leaky(BN(W1 * x)) on a [B, in] batch; BN only when the set carries it.
template <typename T>
ProjectOut project(Graph<T>& g, const Binder<T>& b, NodeId x, const ParamSet<T>& set, const ModelDims& dims,
                   Mode mode);

/// Context gating: u = W2 v + W1 t, out = u * sigmoid(W3 u). A missing
/// modality contributes nothing to u.
template <typename T>
NodeId fuse(Graph<T>& g, const Binder<T>& b, std::optional<NodeId> visual, std::optional<NodeId> text, Role role);

/// Two-layer MLP d' -> d' -> d' with leaky-relu. Key roles detach the output.
template <typename T>
NodeId encode(Graph<T>& g, const Binder<T>& b, NodeId fused, Role role, const ModelDims& dims);

/// Folds a finished training-mode BN node's batch statistics into the running buffers.
template <typename T>
void update_running_stats(ParamSet<T>& projector, const Graph<T>& g, NodeId bn, const ModelDims& dims);

// Single-instance helpers (evaluation mode, no gradients).

template <typename T>
std::vector<T> project(std::span<const T> raw, const ParamSet<T>& set, const ModelDims& dims);

template <typename T>
std::vector<T> fuse(std::span<const T> visual, std::span<const T> text, const ParamSet<T>& set);

template <typename T>
InstanceEmbedding encode(std::span<const T> fused, const ParamSet<T>& set, const ModelDims& dims, Side side,
                         std::uint64_t id, CategoryPath path);

struct SideRoles {
    Role visual_projector;
    Role text_projector;
    Role fusion;
    Role query_encoder;
    Role key_encoder;
};

SideRoles roles_for(Side side);

/// Evaluation-mode pass of a whole side: raw [N, in] features -> encoded [N, d'].
template <typename T>
num::Tensor<T> embed_batch(const ModelParams<T>& params, Side side, const num::Tensor<T>& visual,
                           const num::Tensor<T>& text, const ModelDims& dims, EmbeddingRole role,
                           Modality modality = Modality::All);

}  // namespace mqmc::enc
