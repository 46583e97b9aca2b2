#pragma once

#include <cstddef>
#include <vector>

#include "htnn/contraction_plan.hpp"
#include "htnn/errors.hpp"
#include "htnn/ht_tensor.hpp"
#include "htnn/tensor.hpp"

namespace htnn {

/// Gradients of a scalar loss with respect to every HT component and the input.
struct LayerGradients {
    std::vector<Tensor> components; ///< same shapes as HTTensor::components()
    Tensor input;                   ///< length N, or (batch, N) for batched calls

    LayerGradients& operator+=(const LayerGradients& other) {
        for (std::size_t i = 0; i < components.size(); ++i) {
            components[i] += other.components[i];
        }
        return *this;
    }
};

/// Intermediate results of one batched forward pass, consumed by backward().
struct ForwardTape {
    std::vector<Tensor> slots;
    std::size_t batch = 0;
    const HTLinearLayer* layer = nullptr;
};

namespace detail {

inline std::vector<Tensor> layer_operands(const HTLinearLayer& layer, const Tensor& x_batch) {
    const auto& ht = layer.core();
    const auto& tree = ht.tree();
    std::vector<Tensor> ops;
    ops.reserve(tree.num_nodes() + 1);
    for (std::size_t id = 0; id < tree.num_nodes(); ++id) {
        const Tensor& c = ht.component(id);
        const auto& n = tree.node(id);
        Shape rest;
        if (n.is_leaf()) {
            rest = {layer.out_shape()[n.first_mode()], layer.in_shape()[n.first_mode()]};
        } else {
            rest = {c.dim(1), c.dim(2)};
        }
        if (id == tree.root()) {
            // Sum the root rank mode out; a reshape when it has length 1.
            const std::size_t rd = c.dim(0);
            const std::size_t len = c.size() / rd;
            std::vector<double> summed(c.data().begin(), c.data().begin() + static_cast<std::ptrdiff_t>(len));
            for (std::size_t k = 1; k < rd; ++k) {
                for (std::size_t e = 0; e < len; ++e) {
                    summed[e] += c[k * len + e];
                }
            }
            ops.emplace_back(std::move(rest), std::move(summed));
        } else {
            rest.insert(rest.begin(), c.dim(0));
            ops.push_back(c.reshaped(std::move(rest)));
        }
    }
    Shape xs{x_batch.dim(0)};
    xs.insert(xs.end(), layer.in_shape().begin(), layer.in_shape().end());
    ops.push_back(x_batch.reshaped(std::move(xs)));
    return ops;
}

inline Tensor as_batch(const Tensor& x, std::size_t n, const char* what) {
    if (x.order() == 1) {
        if (x.size() != n) {
            throw ShapeError(std::string(what) + " has length " + std::to_string(x.size()) + ", expected " +
                             std::to_string(n));
        }
        return x.reshaped(Shape{1, n});
    }
    if (x.order() != 2 || x.dim(1) != n) {
        throw ShapeError(std::string(what) + " has shape " + shape_string(x.shape()) + ", expected (batch, " +
                         std::to_string(n) + ")");
    }
    return x;
}

} // namespace detail

/**
 * HT matrix-vector product y = W x without forming W.
 *
 * `x` is a length-N vector or a (batch, N) matrix of independent inputs; the
 * result has the matching length-M or (batch, M) shape. The contraction order
 * is the layer's precomputed plan.
 */
inline Tensor forward(const HTLinearLayer& layer, const Tensor& x, ForwardTape* tape = nullptr) {
    const Tensor xb = detail::as_batch(x, layer.in_size(), "input");
    const std::size_t batch = xb.dim(0);
    std::vector<Tensor> slots;
    Tensor y = layer.plan().execute(detail::layer_operands(layer, xb), tape ? &slots : nullptr);
    if (tape) {
        tape->slots = std::move(slots);
        tape->batch = batch;
        tape->layer = &layer;
    }
    if (x.order() == 1) {
        return std::move(y).reshaped(Shape{layer.out_size()});
    }
    return std::move(y).reshaped(Shape{batch, layer.out_size()});
}

/// Gradients given a tape from forward() on the same layer and dL/dy.
inline LayerGradients backward(const HTLinearLayer& layer, const ForwardTape& tape, const Tensor& dldy) {
    if (tape.layer != &layer || tape.slots.empty()) {
        throw StateError("forward tape was recorded on a different layer");
    }
    const Tensor gb = detail::as_batch(dldy, layer.out_size(), "output gradient");
    if (gb.dim(0) != tape.batch) {
        throw ShapeError("output gradient batch " + std::to_string(gb.dim(0)) + " does not match forward batch " +
                         std::to_string(tape.batch));
    }
    Shape ys{tape.batch};
    ys.insert(ys.end(), layer.out_shape().begin(), layer.out_shape().end());
    std::vector<Tensor> op_grads = layer.plan().backpropagate(tape.slots, gb.reshaped(std::move(ys)));

    const auto& ht = layer.core();
    const auto& tree = ht.tree();
    LayerGradients out;
    out.components.reserve(tree.num_nodes());
    for (std::size_t id = 0; id < tree.num_nodes(); ++id) {
        const Tensor& c = ht.component(id);
        if (id == tree.root()) {
            // Every root rank slice receives the same gradient.
            const std::size_t rd = c.dim(0);
            const auto& g = op_grads[id];
            std::vector<double> full;
            full.reserve(c.size());
            for (std::size_t k = 0; k < rd; ++k) {
                full.insert(full.end(), g.data().begin(), g.data().end());
            }
            out.components.emplace_back(c.shape(), std::move(full));
        } else {
            out.components.push_back(std::move(op_grads[id]).reshaped(c.shape()));
        }
    }
    Tensor& gx = op_grads.back();
    if (dldy.order() == 1) {
        out.input = std::move(gx).reshaped(Shape{layer.in_size()});
    } else {
        out.input = std::move(gx).reshaped(Shape{tape.batch, layer.in_size()});
    }
    return out;
}

/// Gradients for L = sum(dldy * forward(layer, x)); recomputes the forward pass.
inline LayerGradients backward(const HTLinearLayer& layer, const Tensor& x, const Tensor& dldy) {
    ForwardTape tape;
    forward(layer, x, &tape);
    return backward(layer, tape, dldy);
}

/// Forward flops of the plan built for (tree, shapes), one input vector.
/// One multiply-add counts as 2 flops; summing a root rank of length r_D > 1
/// counts r_D - 1 additions per summed entry as multiply-adds.
inline std::size_t forward_flops(const DimTree& tree, std::span<const std::size_t> in_shape,
                                 std::span<const std::size_t> out_shape) {
    const ContractionPlan plan = HTLinearLayer::make_forward_plan(tree, in_shape, out_shape);
    std::size_t madds = plan.total_madds();
    const auto& root = tree.node(tree.root());
    if (root.rank > 1) {
        const Shape fused = HTLinearLayer::fused_shape(in_shape, out_shape);
        madds += (root.rank - 1) * (num_elements(component_shape(tree, fused, tree.root())) / root.rank);
    }
    return 2 * madds;
}

inline std::size_t flop_count_forward(const HTLinearLayer& layer) {
    return forward_flops(layer.tree(), layer.in_shape(), layer.out_shape());
}

} // namespace htnn
