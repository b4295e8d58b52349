#include "mqmc/numerics/graph.hpp"

#include <Eigen/Dense>

#include <algorithm>
#include <limits>

namespace mqmc::num {

std::string shape_string(const Shape& shape) {
    std::string out = "[";
    for (std::size_t i = 0; i < shape.size(); ++i) {
        if (i) out += ",";
        out += std::to_string(shape[i]);
    }
    return out + "]";
}

const char* op_name(Op op) {
    switch (op) {
        case Op::Input: return "input";
        case Op::MatMul: return "matmul";
        case Op::Add: return "add";
        case Op::Mul: return "mul";
        case Op::Scale: return "scale";
        case Op::LeakyRelu: return "leaky_relu";
        case Op::Sigmoid: return "sigmoid";
        case Op::Exp: return "exp";
        case Op::Log: return "log";
        case Op::RowNorm: return "row_norm";
        case Op::Div: return "div";
        case Op::Sum: return "sum";
        case Op::Mean: return "mean";
        case Op::Concat: return "concat";
        case Op::LogSumExp: return "logsumexp";
        case Op::BatchNorm: return "batch_norm";
        case Op::Detach: return "detach";
    }
    return "?";
}

namespace {

template <typename T>
using RowMat = Eigen::Matrix<T, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>;

template <typename T>
Eigen::Map<const RowMat<T>> view(const Tensor<T>& t) {
    return {t.data(), static_cast<Eigen::Index>(t.rows()), static_cast<Eigen::Index>(t.cols())};
}

template <typename T>
Eigen::Map<RowMat<T>> view(Tensor<T>& t) {
    return {t.data(), static_cast<Eigen::Index>(t.rows()), static_cast<Eigen::Index>(t.cols())};
}

[[noreturn]] void fail(NodeId id, Op op, const std::string& what) {
    throw NumericsError("node " + std::to_string(id) + " (" + op_name(op) + "): " + what);
}

template <typename T>
T sigmoid_scalar(T x) {
    if (x >= T{0}) return T{1} / (T{1} + std::exp(-x));
    const T e = std::exp(x);
    return e / (T{1} + e);
}

}  // namespace

template <typename T>
const typename Graph<T>::Node& Graph<T>::at(NodeId id) const {
    if (id >= nodes_.size()) throw NumericsError("unknown node id " + std::to_string(id));
    return nodes_[id];
}

template <typename T>
NodeId Graph<T>::push(Node node) {
    for (NodeId in : node.inputs) {
        at(in);
        node.needs_grad = node.needs_grad || nodes_[in].needs_grad;
    }
    if (node.op == Op::Detach) node.needs_grad = false;
    nodes_.push_back(std::move(node));
    const NodeId id = nodes_.size() - 1;
    evaluate(id);
    return id;
}

template <typename T>
NodeId Graph<T>::input(std::string name, Tensor<T> value, bool requires_grad) {
    if (!name.empty() && named_inputs_.count(name)) {
        throw NumericsError("duplicate input name '" + name + "'");
    }
    Node n;
    n.op = Op::Input;
    n.value = std::move(value);
    n.requires_grad = requires_grad;
    n.needs_grad = requires_grad;
    n.name = name;
    const NodeId id = push(std::move(n));
    if (!name.empty()) named_inputs_[name] = id;
    return id;
}

template <typename T>
NodeId Graph<T>::constant(Tensor<T> value) {
    return input("", std::move(value), false);
}

template <typename T>
NodeId Graph<T>::matmul(NodeId a, NodeId b, bool transpose_a, bool transpose_b) {
    Node n;
    n.op = Op::MatMul;
    n.inputs = {a, b};
    n.flag_a = transpose_a;
    n.flag_b = transpose_b;
    return push(std::move(n));
}

template <typename T>
NodeId Graph<T>::add(NodeId a, NodeId b) {
    Node n;
    n.op = Op::Add;
    n.inputs = {a, b};
    return push(std::move(n));
}

template <typename T>
NodeId Graph<T>::mul(NodeId a, NodeId b) {
    Node n;
    n.op = Op::Mul;
    n.inputs = {a, b};
    return push(std::move(n));
}

template <typename T>
NodeId Graph<T>::scale(NodeId a, T factor) {
    Node n;
    n.op = Op::Scale;
    n.inputs = {a};
    n.scalar = factor;
    return push(std::move(n));
}

template <typename T>
NodeId Graph<T>::leaky_relu(NodeId a, T slope) {
    if (!(slope > T{0} && slope < T{1})) throw NumericsError("leaky_relu: slope must lie in (0,1)");
    Node n;
    n.op = Op::LeakyRelu;
    n.inputs = {a};
    n.scalar = slope;
    return push(std::move(n));
}

template <typename T>
NodeId Graph<T>::sigmoid(NodeId a) {
    Node n;
    n.op = Op::Sigmoid;
    n.inputs = {a};
    return push(std::move(n));
}

template <typename T>
NodeId Graph<T>::exp(NodeId a) {
    Node n;
    n.op = Op::Exp;
    n.inputs = {a};
    return push(std::move(n));
}

template <typename T>
NodeId Graph<T>::log(NodeId a) {
    Node n;
    n.op = Op::Log;
    n.inputs = {a};
    return push(std::move(n));
}

template <typename T>
NodeId Graph<T>::row_norm(NodeId a) {
    Node n;
    n.op = Op::RowNorm;
    n.inputs = {a};
    return push(std::move(n));
}

template <typename T>
NodeId Graph<T>::div(NodeId a, NodeId b) {
    Node n;
    n.op = Op::Div;
    n.inputs = {a, b};
    return push(std::move(n));
}

template <typename T>
NodeId Graph<T>::sum(NodeId a, Axis axis) {
    Node n;
    n.op = Op::Sum;
    n.inputs = {a};
    n.reduce = axis;
    return push(std::move(n));
}

template <typename T>
NodeId Graph<T>::mean(NodeId a, Axis axis) {
    Node n;
    n.op = Op::Mean;
    n.inputs = {a};
    n.reduce = axis;
    return push(std::move(n));
}

template <typename T>
NodeId Graph<T>::concat(const std::vector<NodeId>& parts, int axis) {
    if (parts.empty()) throw NumericsError("concat: no inputs");
    if (axis != 0 && axis != 1) throw NumericsError("concat: axis must be 0 or 1");
    Node n;
    n.op = Op::Concat;
    n.inputs = parts;
    n.axis = axis;
    return push(std::move(n));
}

template <typename T>
NodeId Graph<T>::logsumexp(NodeId a, std::optional<Tensor<T>> weights) {
    Node n;
    n.op = Op::LogSumExp;
    n.inputs = {a};
    if (weights) {
        for (T w : weights->values()) {
            if (!(w >= T{0}) || !std::isfinite(w)) throw NumericsError("logsumexp: weights must be finite and >= 0");
        }
    }
    n.aux = std::move(weights);
    return push(std::move(n));
}

template <typename T>
NodeId Graph<T>::batch_norm(NodeId x, NodeId gamma, NodeId beta, T eps) {
    Node n;
    n.op = Op::BatchNorm;
    n.inputs = {x, gamma, beta};
    n.scalar = eps;
    n.flag_a = false;
    return push(std::move(n));
}

template <typename T>
NodeId Graph<T>::batch_norm_frozen(NodeId x, NodeId gamma, NodeId beta, const Tensor<T>& mean,
                                   const Tensor<T>& var, T eps) {
    Node n;
    n.op = Op::BatchNorm;
    n.inputs = {x, gamma, beta};
    n.scalar = eps;
    n.flag_a = true;
    n.aux3 = mean;
    n.aux2 = var;  // replaced by inverse std during evaluation
    n.flag_b = true;
    return push(std::move(n));
}

template <typename T>
NodeId Graph<T>::detach(NodeId a) {
    Node n;
    n.op = Op::Detach;
    n.inputs = {a};
    return push(std::move(n));
}

template <typename T>
void Graph<T>::name_output(NodeId id, std::string name) {
    at(id);
    named_outputs_[std::move(name)] = id;
}

template <typename T>
std::optional<NodeId> Graph<T>::find_input(const std::string& name) const {
    auto it = named_inputs_.find(name);
    if (it == named_inputs_.end()) return std::nullopt;
    return it->second;
}

template <typename T>
std::pair<Tensor<T>, Tensor<T>> Graph<T>::batch_stats(NodeId bn) const {
    const Node& n = at(bn);
    if (n.op != Op::BatchNorm || n.flag_a) throw NumericsError("batch_stats: not a training batch_norm node");
    const Tensor<T>& x = nodes_[n.inputs[0]].value;
    const Tensor<T>& mean = *n.aux3;
    Tensor<T> var(mean.shape());
    for (std::size_t r = 0; r < x.rows(); ++r) {
        for (std::size_t c = 0; c < x.cols(); ++c) {
            const T d = x(r, c) - mean[c];
            var[c] += d * d;
        }
    }
    for (T& v : var.values()) v /= static_cast<T>(x.rows());
    return {*n.aux3, var};
}

template <typename T>
Tensor<T> Graph<T>::grad(NodeId id) const {
    const Node& n = at(id);
    if (n.has_grad) return n.grad;
    return Tensor<T>(n.value.shape());
}

template <typename T>
std::map<std::string, Tensor<T>> Graph<T>::forward(const std::map<std::string, Tensor<T>>& bindings) {
    for (const auto& [name, value] : bindings) {
        auto it = named_inputs_.find(name);
        if (it == named_inputs_.end()) throw NumericsError("forward: unknown input '" + name + "'");
        Node& n = nodes_[it->second];
        if (value.shape() != n.value.shape()) {
            fail(it->second, Op::Input, "bound shape " + shape_string(value.shape()) + " != " +
                                            shape_string(n.value.shape()));
        }
        n.value = value;
        if (!n.value.all_finite()) fail(it->second, Op::Input, "non-finite value");
    }
    for (NodeId id = 0; id < nodes_.size(); ++id) {
        if (nodes_[id].op != Op::Input) evaluate(id);
    }
    std::map<std::string, Tensor<T>> out;
    for (const auto& [name, id] : named_outputs_) out.emplace(name, nodes_[id].value);
    return out;
}

template <typename T>
void Graph<T>::evaluate(NodeId id) {
    Node& n = nodes_[id];
    auto in = [&](std::size_t k) -> const Tensor<T>& { return nodes_[n.inputs[k]].value; };

    switch (n.op) {
        case Op::Input:
            break;
        case Op::MatMul: {
            const Tensor<T>& a = in(0);
            const Tensor<T>& b = in(1);
            const std::size_t ar = n.flag_a ? a.cols() : a.rows();
            const std::size_t ac = n.flag_a ? a.rows() : a.cols();
            const std::size_t br = n.flag_b ? b.cols() : b.rows();
            const std::size_t bc = n.flag_b ? b.rows() : b.cols();
            if (ac != br) {
                fail(id, n.op, "inner dimensions differ: " + shape_string(a.shape()) + " x " +
                                   shape_string(b.shape()));
            }
            Tensor<T> out = (b.rank() == 1 && !n.flag_b) ? Tensor<T>(Shape{ar}) : Tensor<T>(Shape{ar, bc});
            auto o = view(out);
            auto va = view(a);
            auto vb = view(b);
            if (!n.flag_a && !n.flag_b) o.noalias() = va * vb;
            else if (!n.flag_a && n.flag_b) o.noalias() = va * vb.transpose();
            else if (n.flag_a && !n.flag_b) o.noalias() = va.transpose() * vb;
            else o.noalias() = va.transpose() * vb.transpose();
            n.value = std::move(out);
            break;
        }
        case Op::Add:
        case Op::Mul: {
            const Tensor<T>& a = in(0);
            const Tensor<T>& b = in(1);
            if (a.shape() != b.shape()) {
                fail(id, n.op, "shape mismatch " + shape_string(a.shape()) + " vs " + shape_string(b.shape()));
            }
            Tensor<T> out(a.shape());
            if (n.op == Op::Add) {
                for (std::size_t i = 0; i < out.size(); ++i) out[i] = a[i] + b[i];
            } else {
                for (std::size_t i = 0; i < out.size(); ++i) out[i] = a[i] * b[i];
            }
            n.value = std::move(out);
            break;
        }
        case Op::Scale:
        case Op::LeakyRelu:
        case Op::Sigmoid:
        case Op::Exp:
        case Op::Log:
        case Op::Detach: {
            const Tensor<T>& a = in(0);
            Tensor<T> out(a.shape());
            for (std::size_t i = 0; i < out.size(); ++i) {
                const T x = a[i];
                switch (n.op) {
                    case Op::Scale: out[i] = n.scalar * x; break;
                    case Op::LeakyRelu: out[i] = x >= T{0} ? x : n.scalar * x; break;
                    case Op::Sigmoid: out[i] = sigmoid_scalar(x); break;
                    case Op::Exp: out[i] = std::exp(x); break;
                    case Op::Log: out[i] = std::log(x); break;
                    default: out[i] = x; break;
                }
            }
            n.value = std::move(out);
            break;
        }
        case Op::RowNorm: {
            const Tensor<T>& a = in(0);
            Tensor<T> out(Shape{a.rows(), 1});
            for (std::size_t r = 0; r < a.rows(); ++r) {
                T acc{0};
                for (T v : a.row(r)) acc += v * v;
                if (acc == T{0}) fail(id, n.op, "zero-norm row " + std::to_string(r));
                out[r] = std::sqrt(acc);
            }
            n.value = std::move(out);
            break;
        }
        case Op::Div: {
            const Tensor<T>& a = in(0);
            const Tensor<T>& b = in(1);
            Tensor<T> out(a.shape());
            if (b.shape() == a.shape()) {
                for (std::size_t i = 0; i < out.size(); ++i) out[i] = a[i] / b[i];
            } else if (b.size() == 1) {
                for (std::size_t i = 0; i < out.size(); ++i) out[i] = a[i] / b[0];
            } else if (b.rows() == a.rows() && b.cols() == 1) {
                for (std::size_t r = 0; r < a.rows(); ++r) {
                    for (std::size_t c = 0; c < a.cols(); ++c) out(r, c) = a(r, c) / b[r];
                }
            } else {
                fail(id, n.op, "cannot broadcast " + shape_string(b.shape()) + " over " + shape_string(a.shape()));
            }
            n.value = std::move(out);
            break;
        }
        case Op::Sum:
        case Op::Mean: {
            const Tensor<T>& a = in(0);
            Tensor<T> out;
            T denom{1};
            if (n.reduce == Axis::All) {
                out = Tensor<T>(Shape{1});
                for (T v : a.values()) out[0] += v;
                denom = static_cast<T>(a.size());
            } else if (n.reduce == Axis::Rows) {
                out = Tensor<T>(Shape{1, a.cols()});
                for (std::size_t r = 0; r < a.rows(); ++r) {
                    for (std::size_t c = 0; c < a.cols(); ++c) out[c] += a(r, c);
                }
                denom = static_cast<T>(a.rows());
            } else {
                out = Tensor<T>(Shape{a.rows(), 1});
                for (std::size_t r = 0; r < a.rows(); ++r) {
                    for (T v : a.row(r)) out[r] += v;
                }
                denom = static_cast<T>(a.cols());
            }
            if (n.op == Op::Mean) {
                for (T& v : out.values()) v /= denom;
            }
            n.value = std::move(out);
            break;
        }
        case Op::Concat: {
            std::size_t rows = 0, cols = 0;
            for (std::size_t k = 0; k < n.inputs.size(); ++k) {
                const Tensor<T>& p = in(k);
                if (n.axis == 0) {
                    if (k > 0 && p.cols() != cols) fail(id, n.op, "column counts differ");
                    cols = p.cols();
                    rows += p.rows();
                } else {
                    if (k > 0 && p.rows() != rows) fail(id, n.op, "row counts differ");
                    rows = p.rows();
                    cols += p.cols();
                }
            }
            Tensor<T> out(Shape{rows, cols});
            std::size_t offset = 0;
            for (std::size_t k = 0; k < n.inputs.size(); ++k) {
                const Tensor<T>& p = in(k);
                for (std::size_t r = 0; r < p.rows(); ++r) {
                    for (std::size_t c = 0; c < p.cols(); ++c) {
                        if (n.axis == 0) out(offset + r, c) = p(r, c);
                        else out(r, offset + c) = p(r, c);
                    }
                }
                offset += n.axis == 0 ? p.rows() : p.cols();
            }
            n.value = std::move(out);
            break;
        }
        case Op::LogSumExp: {
            const Tensor<T>& a = in(0);
            if (n.aux && (n.aux->rows() != a.rows() || n.aux->cols() != a.cols())) {
                fail(id, n.op, "weights shape " + shape_string(n.aux->shape()) + " != " + shape_string(a.shape()));
            }
            Tensor<T> out(Shape{a.rows(), 1});
            for (std::size_t r = 0; r < a.rows(); ++r) {
                T mx = -std::numeric_limits<T>::infinity();
                for (std::size_t c = 0; c < a.cols(); ++c) {
                    const T w = n.aux ? (*n.aux)(r, c) : T{1};
                    if (w > T{0}) mx = std::max(mx, a(r, c));
                }
                if (!std::isfinite(mx)) fail(id, n.op, "row " + std::to_string(r) + " has no positive weight");
                T acc{0};
                for (std::size_t c = 0; c < a.cols(); ++c) {
                    const T w = n.aux ? (*n.aux)(r, c) : T{1};
                    if (w > T{0}) acc += w * std::exp(a(r, c) - mx);
                }
                out[r] = mx + std::log(acc);
            }
            n.value = std::move(out);
            break;
        }
        case Op::BatchNorm: {
            const Tensor<T>& x = in(0);
            const Tensor<T>& gamma = in(1);
            const Tensor<T>& beta = in(2);
            const std::size_t rows = x.rows(), cols = x.cols();
            if (x.rank() != 2 || gamma.size() != cols || beta.size() != cols) {
                fail(id, n.op, "expects [B,c] input with c-element gamma/beta");
            }
            Tensor<T> mean(Shape{cols});
            Tensor<T> inv_std(Shape{cols});
            if (n.flag_a) {
                // frozen: aux3 holds mean; aux2 held var on construction
                mean = *n.aux3;
                if (mean.size() != cols) fail(id, n.op, "frozen statistics have wrong length");
                if (n.flag_b) {
                    const Tensor<T> var = *n.aux2;
                    if (var.size() != cols) fail(id, n.op, "frozen statistics have wrong length");
                    for (std::size_t c = 0; c < cols; ++c) inv_std[c] = T{1} / std::sqrt(var[c] + n.scalar);
                    n.aux2 = inv_std;
                    n.flag_b = false;
                } else {
                    inv_std = *n.aux2;
                }
            } else {
                for (std::size_t r = 0; r < rows; ++r) {
                    for (std::size_t c = 0; c < cols; ++c) mean[c] += x(r, c);
                }
                for (std::size_t c = 0; c < cols; ++c) mean[c] /= static_cast<T>(rows);
                Tensor<T> var(Shape{cols});
                for (std::size_t r = 0; r < rows; ++r) {
                    for (std::size_t c = 0; c < cols; ++c) {
                        const T d = x(r, c) - mean[c];
                        var[c] += d * d;
                    }
                }
                for (std::size_t c = 0; c < cols; ++c) {
                    var[c] /= static_cast<T>(rows);
                    inv_std[c] = T{1} / std::sqrt(var[c] + n.scalar);
                }
                n.aux3 = mean;
                n.aux2 = inv_std;
            }
            Tensor<T> xhat(x.shape());
            Tensor<T> out(x.shape());
            for (std::size_t r = 0; r < rows; ++r) {
                for (std::size_t c = 0; c < cols; ++c) {
                    const T h = (x(r, c) - mean[c]) * inv_std[c];
                    xhat(r, c) = h;
                    out(r, c) = gamma[c] * h + beta[c];
                }
            }
            n.aux = std::move(xhat);
            n.value = std::move(out);
            break;
        }
    }
    if (!n.value.all_finite()) fail(id, n.op, "non-finite value");
}

template <typename T>
void Graph<T>::accumulate(NodeId id, const Tensor<T>& g) {
    Node& n = nodes_[id];
    if (!n.needs_grad) return;
    if (!n.has_grad) {
        n.grad = g;
        n.has_grad = true;
        return;
    }
    for (std::size_t i = 0; i < g.size(); ++i) n.grad[i] += g[i];
}

template <typename T>
std::map<std::string, Tensor<T>> Graph<T>::backward(NodeId output, std::optional<Tensor<T>> seed) {
    const Node& out = at(output);
    if (out.op == Op::Detach) fail(output, out.op, "backward requested on a non-differentiable node");
    for (Node& n : nodes_) {
        n.has_grad = false;
        n.grad = Tensor<T>();
    }
    Tensor<T> s;
    if (seed) {
        if (seed->shape() != out.value.shape()) {
            fail(output, out.op, "seed shape " + shape_string(seed->shape()) + " != output shape " +
                                     shape_string(out.value.shape()));
        }
        s = std::move(*seed);
    } else {
        if (out.value.size() != 1) fail(output, out.op, "non-scalar output needs a seed gradient");
        s = Tensor<T>(out.value.shape(), T{1});
    }
    nodes_[output].grad = std::move(s);
    nodes_[output].has_grad = true;

    for (NodeId id = output + 1; id-- > 0;) {
        if (nodes_[id].has_grad && nodes_[id].needs_grad) propagate(id);
    }

    std::map<std::string, Tensor<T>> grads;
    for (const auto& [name, id] : named_inputs_) {
        if (nodes_[id].requires_grad) grads.emplace(name, grad(id));
    }
    return grads;
}

template <typename T>
void Graph<T>::propagate(NodeId id) {
    const Node& n = nodes_[id];
    const Tensor<T>& g = n.grad;
    auto in = [&](std::size_t k) -> const Tensor<T>& { return nodes_[n.inputs[k]].value; };
    auto wants = [&](std::size_t k) { return nodes_[n.inputs[k]].needs_grad; };

    switch (n.op) {
        case Op::Input:
        case Op::Detach:
            break;
        case Op::MatMul: {
            const Tensor<T>& a = in(0);
            const Tensor<T>& b = in(1);
            const RowMat<T> gm = view(g);
            auto va = view(a);
            auto vb = view(b);
            if (wants(0)) {
                Tensor<T> ga(a.shape());
                auto o = view(ga);
                if (!n.flag_a && !n.flag_b) o.noalias() = gm * vb.transpose();
                else if (!n.flag_a && n.flag_b) o.noalias() = gm * vb;
                else if (n.flag_a && !n.flag_b) o.noalias() = vb * gm.transpose();
                else o.noalias() = vb.transpose() * gm.transpose();
                accumulate(n.inputs[0], ga);
            }
            if (wants(1)) {
                Tensor<T> gb(b.shape());
                auto o = view(gb);
                if (!n.flag_a && !n.flag_b) o.noalias() = va.transpose() * gm;
                else if (n.flag_a && !n.flag_b) o.noalias() = va * gm;
                else if (!n.flag_a && n.flag_b) o.noalias() = gm.transpose() * va;
                else o.noalias() = gm.transpose() * va.transpose();
                accumulate(n.inputs[1], gb);
            }
            break;
        }
        case Op::Add:
            if (wants(0)) accumulate(n.inputs[0], g);
            if (wants(1)) accumulate(n.inputs[1], g);
            break;
        case Op::Mul: {
            const Tensor<T>& a = in(0);
            const Tensor<T>& b = in(1);
            if (wants(0)) {
                Tensor<T> ga(a.shape());
                for (std::size_t i = 0; i < ga.size(); ++i) ga[i] = g[i] * b[i];
                accumulate(n.inputs[0], ga);
            }
            if (wants(1)) {
                Tensor<T> gb(b.shape());
                for (std::size_t i = 0; i < gb.size(); ++i) gb[i] = g[i] * a[i];
                accumulate(n.inputs[1], gb);
            }
            break;
        }
        case Op::Scale:
        case Op::LeakyRelu:
        case Op::Sigmoid:
        case Op::Exp:
        case Op::Log: {
            const Tensor<T>& a = in(0);
            Tensor<T> ga(a.shape());
            for (std::size_t i = 0; i < ga.size(); ++i) {
                const T x = a[i];
                const T y = n.value[i];
                switch (n.op) {
                    case Op::Scale: ga[i] = g[i] * n.scalar; break;
                    case Op::LeakyRelu: ga[i] = x >= T{0} ? g[i] : g[i] * n.scalar; break;
                    case Op::Sigmoid: ga[i] = g[i] * y * (T{1} - y); break;
                    case Op::Exp: ga[i] = g[i] * y; break;
                    default: ga[i] = g[i] / x; break;
                }
            }
            accumulate(n.inputs[0], ga);
            break;
        }
        case Op::RowNorm: {
            const Tensor<T>& a = in(0);
            Tensor<T> ga(a.shape());
            for (std::size_t r = 0; r < a.rows(); ++r) {
                const T factor = g[r] / n.value[r];
                for (std::size_t c = 0; c < a.cols(); ++c) ga(r, c) = factor * a(r, c);
            }
            accumulate(n.inputs[0], ga);
            break;
        }
        case Op::Div: {
            const Tensor<T>& a = in(0);
            const Tensor<T>& b = in(1);
            const bool same = b.shape() == a.shape();
            const bool scalar = !same && b.size() == 1;
            auto denom = [&](std::size_t r, std::size_t c) -> T {
                if (same) return b(r, c);
                if (scalar) return b[0];
                return b[r];
            };
            if (wants(0)) {
                Tensor<T> ga(a.shape());
                for (std::size_t r = 0; r < a.rows(); ++r) {
                    for (std::size_t c = 0; c < a.cols(); ++c) ga(r, c) = g(r, c) / denom(r, c);
                }
                accumulate(n.inputs[0], ga);
            }
            if (wants(1)) {
                Tensor<T> gb(b.shape());
                for (std::size_t r = 0; r < a.rows(); ++r) {
                    for (std::size_t c = 0; c < a.cols(); ++c) {
                        const T d = denom(r, c);
                        const T contrib = -g(r, c) * a(r, c) / (d * d);
                        if (same) gb(r, c) += contrib;
                        else if (scalar) gb[0] += contrib;
                        else gb[r] += contrib;
                    }
                }
                accumulate(n.inputs[1], gb);
            }
            break;
        }
        case Op::Sum:
        case Op::Mean: {
            const Tensor<T>& a = in(0);
            Tensor<T> ga(a.shape());
            T denom{1};
            if (n.op == Op::Mean) {
                denom = n.reduce == Axis::All    ? static_cast<T>(a.size())
                        : n.reduce == Axis::Rows ? static_cast<T>(a.rows())
                                                 : static_cast<T>(a.cols());
            }
            for (std::size_t r = 0; r < a.rows(); ++r) {
                for (std::size_t c = 0; c < a.cols(); ++c) {
                    const T up = n.reduce == Axis::All ? g[0] : n.reduce == Axis::Rows ? g[c] : g[r];
                    ga(r, c) = up / denom;
                }
            }
            accumulate(n.inputs[0], ga);
            break;
        }
        case Op::Concat: {
            std::size_t offset = 0;
            for (std::size_t k = 0; k < n.inputs.size(); ++k) {
                const Tensor<T>& p = in(k);
                if (wants(k)) {
                    Tensor<T> gp(p.shape());
                    for (std::size_t r = 0; r < p.rows(); ++r) {
                        for (std::size_t c = 0; c < p.cols(); ++c) {
                            gp(r, c) = n.axis == 0 ? g(offset + r, c) : g(r, offset + c);
                        }
                    }
                    accumulate(n.inputs[k], gp);
                }
                offset += n.axis == 0 ? p.rows() : p.cols();
            }
            break;
        }
        case Op::LogSumExp: {
            const Tensor<T>& a = in(0);
            Tensor<T> ga(a.shape());
            for (std::size_t r = 0; r < a.rows(); ++r) {
                for (std::size_t c = 0; c < a.cols(); ++c) {
                    const T w = n.aux ? (*n.aux)(r, c) : T{1};
                    ga(r, c) = w > T{0} ? g[r] * w * std::exp(a(r, c) - n.value[r]) : T{0};
                }
            }
            accumulate(n.inputs[0], ga);
            break;
        }
        case Op::BatchNorm: {
            const Tensor<T>& x = in(0);
            const Tensor<T>& gamma = in(1);
            const Tensor<T>& xhat = *n.aux;
            const Tensor<T>& inv_std = *n.aux2;
            const std::size_t rows = x.rows(), cols = x.cols();
            Tensor<T> sum_g(Shape{cols});
            Tensor<T> sum_gx(Shape{cols});
            for (std::size_t r = 0; r < rows; ++r) {
                for (std::size_t c = 0; c < cols; ++c) {
                    sum_g[c] += g(r, c);
                    sum_gx[c] += g(r, c) * xhat(r, c);
                }
            }
            if (wants(0)) {
                Tensor<T> gx(x.shape());
                const T count = static_cast<T>(rows);
                for (std::size_t r = 0; r < rows; ++r) {
                    for (std::size_t c = 0; c < cols; ++c) {
                        if (n.flag_a) {
                            gx(r, c) = g(r, c) * gamma[c] * inv_std[c];
                        } else {
                            gx(r, c) = gamma[c] * inv_std[c] / count *
                                       (count * g(r, c) - sum_g[c] - xhat(r, c) * sum_gx[c]);
                        }
                    }
                }
                accumulate(n.inputs[0], gx);
            }
            if (wants(1)) {
                Tensor<T> gg(in(1).shape());
                for (std::size_t c = 0; c < cols; ++c) gg[c] = sum_gx[c];
                accumulate(n.inputs[1], gg);
            }
            if (wants(2)) {
                Tensor<T> gb(in(2).shape());
                for (std::size_t c = 0; c < cols; ++c) gb[c] = sum_g[c];
                accumulate(n.inputs[2], gb);
            }
            break;
        }
    }
}

template class Graph<float>;
template class Graph<double>;

}  // namespace mqmc::num
