#pragma once

#include <map>
#include <optional>
#include <string>
#include <vector>

#include "mqmc/numerics/tensor.hpp"

namespace mqmc::num {

using NodeId = std::size_t;

enum class Op {
    Input,
    MatMul,
    Add,
    Mul,
    Scale,
    LeakyRelu,
    Sigmoid,
    Exp,
    Log,
    RowNorm,
    Div,
    Sum,
    Mean,
    Concat,
    LogSumExp,
    BatchNorm,
    Detach,
};

const char* op_name(Op op);

// Reduction target for Sum/Mean: everything, down dim 0 (-> [1,c]) or along
// dim 1 (-> [r,1]).
enum class Axis { All, Rows, Cols };

// Define-by-run computation graph. Every builder call evaluates its node
// immediately; forward() re-evaluates the whole tape after rebinding named
// inputs. Node ids are a topological order by construction.
template <typename T>
class Graph {
public:
    NodeId input(std::string name, Tensor<T> value, bool requires_grad = false);
    NodeId constant(Tensor<T> value);

    NodeId matmul(NodeId a, NodeId b, bool transpose_a = false, bool transpose_b = false);
    NodeId add(NodeId a, NodeId b);
    NodeId mul(NodeId a, NodeId b);
    NodeId scale(NodeId a, T factor);
    NodeId leaky_relu(NodeId a, T slope);
    NodeId sigmoid(NodeId a);
    NodeId exp(NodeId a);
    NodeId log(NodeId a);
    /// Per-row Euclidean norm, [r,c] -> [r,1].
    NodeId row_norm(NodeId a);
    /// b may match a's shape, be an [r,1] column broadcast over a's columns, or hold one element.
    NodeId div(NodeId a, NodeId b);
    NodeId sum(NodeId a, Axis axis = Axis::All);
    NodeId mean(NodeId a, Axis axis = Axis::All);
    /// axis 0 stacks rows, axis 1 stacks columns.
    NodeId concat(const std::vector<NodeId>& parts, int axis);
    /// Row-wise log(sum_c w_rc * exp(x_rc)) with max subtraction; weights default to one.
    NodeId logsumexp(NodeId a, std::optional<Tensor<T>> weights = std::nullopt);
    /// Batch normalization over dim 0 using the batch's own statistics.
    NodeId batch_norm(NodeId x, NodeId gamma, NodeId beta, T eps);
    /// Batch normalization with frozen statistics (evaluation mode).
    NodeId batch_norm_frozen(NodeId x, NodeId gamma, NodeId beta, const Tensor<T>& mean,
                             const Tensor<T>& var, T eps);
    /// Identity in the forward pass; blocks gradient flow.
    NodeId detach(NodeId a);

    void name_output(NodeId id, std::string name);

    /// Rebinds named inputs, re-evaluates every node and returns the named outputs.
    std::map<std::string, Tensor<T>> forward(const std::map<std::string, Tensor<T>>& bindings);

    /// Reverse sweep from `output`. Without a seed the output must hold a single element.
    /// Returns gradients of every named requires-grad input.
    std::map<std::string, Tensor<T>> backward(NodeId output,
                                              std::optional<Tensor<T>> seed = std::nullopt);

    const Tensor<T>& value(NodeId id) const { return nodes_.at(id).value; }
    /// Gradient from the last backward(); zeros if none reached the node.
    Tensor<T> grad(NodeId id) const;
    Op op(NodeId id) const { return nodes_.at(id).op; }
    std::size_t size() const { return nodes_.size(); }
    std::optional<NodeId> find_input(const std::string& name) const;

    /// Batch statistics cached by a training-mode batch_norm node: {mean, biased var}.
    std::pair<Tensor<T>, Tensor<T>> batch_stats(NodeId bn) const;

private:
    struct Node {
        Op op = Op::Input;
        std::vector<NodeId> inputs;
        Tensor<T> value;
        Tensor<T> grad;
        bool has_grad = false;
        bool requires_grad = false;
        bool needs_grad = false;
        std::string name;
        T scalar{0};
        bool flag_a = false;
        bool flag_b = false;
        int axis = 0;
        Axis reduce = Axis::All;
        std::optional<Tensor<T>> aux;   // lse weights, bn xhat, frozen mean
        std::optional<Tensor<T>> aux2;  // bn inverse std, frozen var
        std::optional<Tensor<T>> aux3;  // bn batch mean
    };

    NodeId push(Node node);
    void evaluate(NodeId id);
    void propagate(NodeId id);
    void accumulate(NodeId id, const Tensor<T>& g);
    const Node& at(NodeId id) const;

    std::vector<Node> nodes_;
    std::map<std::string, NodeId> named_inputs_;
    std::map<std::string, NodeId> named_outputs_;
};

extern template class Graph<float>;
extern template class Graph<double>;

}  // namespace mqmc::num
