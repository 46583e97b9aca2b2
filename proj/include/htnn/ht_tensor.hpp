#pragma once

#include <cmath>
#include <cstddef>
#include <cstdint>
#include <memory>
#include <string>
#include <vector>

#include "htnn/contraction_plan.hpp"
#include "htnn/dim_tree.hpp"
#include "htnn/errors.hpp"
#include "htnn/rng.hpp"
#include "htnn/tensor.hpp"

namespace htnn {

/// Shape of the component stored at `node`: (r_s, n_i) for a leaf on mode i,
/// (r_s, r_left, r_right) for an internal node.
inline Shape component_shape(const DimTree& tree, std::span<const std::size_t> dense_shape, std::size_t node) {
    const auto& n = tree.node(node);
    if (n.is_leaf()) {
        return {n.rank, dense_shape[n.first_mode()]};
    }
    return {n.rank, tree.node(*n.left).rank, tree.node(*n.right).rank};
}

/// Element count over all components, from structure alone.
inline std::size_t param_count(const DimTree& tree, std::span<const std::size_t> dense_shape) {
    std::size_t total = 0;
    for (std::size_t id = 0; id < tree.num_nodes(); ++id) {
        total += num_elements(component_shape(tree, dense_shape, id));
    }
    return total;
}

/// Component initialization scale.
///
/// Every component is drawn i.i.d. N(0, sigma^2) with one sigma shared by all
/// 2d-1 components, chosen so a reconstructed entry has variance
/// `target_variance`: each entry is a sum of prod(bond ranks) uncorrelated
/// products of 2d-1 factors.
struct ScalePolicy {
    double target_variance = 1.0;

    static ScalePolicy variance_preserving(std::size_t fan_in) {
        return ScalePolicy{1.0 / static_cast<double>(fan_in)};
    }

    double component_stddev(const DimTree& tree) const {
        double bonds = 1.0;
        for (const auto& n : tree.nodes()) {
            bonds *= static_cast<double>(n.rank);
        }
        const double components = static_cast<double>(tree.num_nodes());
        return std::sqrt(std::pow(target_variance / bonds, 1.0 / components));
    }
};

/**
 * Hierarchical Tucker tensor: one (r_i x n_i) leaf frame per mode and one
 * (r_s x r_left x r_right) transfer tensor per internal node, indexed by
 * tree node id.
 */
class HTTensor {
public:
    HTTensor() = default;

    HTTensor(DimTree tree, Shape dense_shape, std::vector<Tensor> components)
        : tree_(std::move(tree)), dense_shape_(std::move(dense_shape)), components_(std::move(components)) {
        check_structure();
    }

    static HTTensor random(DimTree tree, Shape dense_shape, std::uint64_t seed, ScalePolicy policy = {}) {
        require_valid(tree);
        if (dense_shape.size() != tree.order()) {
            throw StructureError("dense shape of order " + std::to_string(dense_shape.size()) +
                                 " for a tree over " + std::to_string(tree.order()) + " modes");
        }
        Rng rng(seed);
        const double sd = policy.component_stddev(tree);
        std::vector<Tensor> comps;
        comps.reserve(tree.num_nodes());
        for (std::size_t id = 0; id < tree.num_nodes(); ++id) {
            Tensor t(component_shape(tree, dense_shape, id));
            for (double& v : t.storage()) {
                v = sd * rng.normal();
            }
            comps.push_back(std::move(t));
        }
        return HTTensor(std::move(tree), std::move(dense_shape), std::move(comps));
    }

    const DimTree& tree() const noexcept { return tree_; }
    const Shape& dense_shape() const noexcept { return dense_shape_; }
    std::size_t order() const noexcept { return tree_.order(); }

    const Tensor& component(std::size_t node) const { return components_.at(node); }
    /// Values may change; shapes must not.
    Tensor& component(std::size_t node) { return components_.at(node); }
    const std::vector<Tensor>& components() const noexcept { return components_; }
    std::vector<Tensor>& components() noexcept { return components_; }

    const Tensor& leaf_frame(std::size_t mode) const { return components_.at(tree_.leaf_of(mode)); }
    const Tensor& transfer(std::size_t node) const {
        if (tree_.is_leaf(node)) {
            throw ArgumentError("node " + tree_.label(node) + " is a leaf and has no transfer tensor");
        }
        return components_.at(node);
    }

    std::size_t param_count() const {
        std::size_t total = 0;
        for (const auto& c : components_) {
            total += c.size();
        }
        return total;
    }

    void check_structure() const {
        require_valid(tree_);
        if (dense_shape_.size() != tree_.order()) {
            throw StructureError("dense shape does not match tree order");
        }
        if (components_.size() != tree_.num_nodes()) {
            throw StructureError("expected " + std::to_string(tree_.num_nodes()) + " components, got " +
                                 std::to_string(components_.size()));
        }
        for (std::size_t id = 0; id < tree_.num_nodes(); ++id) {
            const Shape want = component_shape(tree_, dense_shape_, id);
            if (components_[id].shape() != want) {
                throw StructureError("component at node " + tree_.label(id) + " has shape " +
                                     shape_string(components_[id].shape()) + ", expected " + shape_string(want));
            }
        }
    }

    friend bool operator==(const HTTensor&, const HTTensor&) = default;

private:
    DimTree tree_;
    Shape dense_shape_;
    std::vector<Tensor> components_;
};

/// Frame U_s: rank mode first, then the dense modes of s in increasing order.
inline Tensor frame(const HTTensor& ht, std::size_t node) {
    const auto& tree = ht.tree();
    if (node >= tree.num_nodes()) {
        throw ArgumentError("unknown tree node " + std::to_string(node));
    }
    if (tree.is_leaf(node)) {
        return ht.component(node);
    }
    const Tensor left = frame(ht, tree.left(node));
    const Tensor right = frame(ht, tree.right(node));
    // (r_s, r_l, r_r) x (r_l, dense_l...) -> (r_s, r_r, dense_l...)
    const Tensor partial = contract(ht.component(node), left, {1}, {0});
    // (r_s, r_r, dense_l...) x (r_r, dense_r...) -> (r_s, dense_l..., dense_r...)
    return contract(partial, right, {1}, {0});
}

/**
 * Tensorized M x N weight matrix in HT format.
 *
 * Leaf i stores a (r_i x m_i*n_i) frame whose fused column index is
 * a*n_i + b for output index a and input index b. The root rank mode is
 * summed out at the layer boundary, which is a plain reshape when r_root = 1.
 */
class HTLinearLayer {
public:
    HTLinearLayer() = default;

    HTLinearLayer(HTTensor core, Shape in_shape, Shape out_shape)
        : core_(std::move(core)), in_shape_(std::move(in_shape)), out_shape_(std::move(out_shape)) {
        const std::size_t d = core_.order();
        if (in_shape_.size() != d || out_shape_.size() != d) {
            throw StructureError("layer shapes must have one entry per tree mode");
        }
        for (std::size_t i = 0; i < d; ++i) {
            if (core_.dense_shape()[i] != in_shape_[i] * out_shape_[i]) {
                throw StructureError("leaf " + std::to_string(i + 1) + " dense length " +
                                     std::to_string(core_.dense_shape()[i]) + " is not m_i*n_i = " +
                                     std::to_string(in_shape_[i] * out_shape_[i]));
            }
        }
        plan_ = std::make_shared<const ContractionPlan>(make_forward_plan(core_.tree(), in_shape_, out_shape_));
    }

    static Shape fused_shape(std::span<const std::size_t> in_shape, std::span<const std::size_t> out_shape) {
        if (in_shape.size() != out_shape.size()) {
            throw StructureError("input and output shapes differ in order");
        }
        Shape fused(in_shape.size());
        for (std::size_t i = 0; i < fused.size(); ++i) {
            fused[i] = in_shape[i] * out_shape[i];
        }
        return fused;
    }

    /// Random layer whose dense matrix has entry variance 1/N.
    static HTLinearLayer random(DimTree tree, Shape in_shape, Shape out_shape, std::uint64_t seed) {
        const std::size_t n = num_elements(in_shape);
        return random(std::move(tree), std::move(in_shape), std::move(out_shape), seed,
                      ScalePolicy::variance_preserving(n));
    }

    static HTLinearLayer random(DimTree tree, Shape in_shape, Shape out_shape, std::uint64_t seed,
                                ScalePolicy policy) {
        Shape fused = fused_shape(in_shape, out_shape);
        HTTensor core = HTTensor::random(std::move(tree), std::move(fused), seed, policy);
        return HTLinearLayer(std::move(core), std::move(in_shape), std::move(out_shape));
    }

    const HTTensor& core() const noexcept { return core_; }
    HTTensor& core() noexcept { return core_; }
    const DimTree& tree() const noexcept { return core_.tree(); }
    const Shape& in_shape() const noexcept { return in_shape_; }
    const Shape& out_shape() const noexcept { return out_shape_; }
    std::size_t in_size() const { return num_elements(in_shape_); }
    std::size_t out_size() const { return num_elements(out_shape_); }
    std::size_t param_count() const { return core_.param_count(); }
    const ContractionPlan& plan() const { return *plan_; }

    friend bool operator==(const HTLinearLayer& a, const HTLinearLayer& b) {
        return a.core_ == b.core_ && a.in_shape_ == b.in_shape_ && a.out_shape_ == b.out_shape_;
    }

    /**
     * Network of one matvec: x (batch, n_1..n_d), one (r, m_i, n_i) operand
     * per leaf, one (r_s, r_l, r_r) operand per internal node, and the root
     * component with its rank mode already summed out. Output labels are
     * (batch, m_1..m_d). Operands are ordered by tree node id, x last.
     */
    static ContractionPlan make_forward_plan(const DimTree& tree, std::span<const std::size_t> in_shape,
                                             std::span<const std::size_t> out_shape, std::size_t batch = 1) {
        const std::size_t d = tree.order();
        std::vector<std::size_t> sizes;
        auto new_label = [&sizes](std::size_t size) {
            sizes.push_back(size);
            return static_cast<int>(sizes.size() - 1);
        };
        std::vector<int> in_label(d), out_label(d), rank_label(tree.num_nodes(), -1);
        for (std::size_t i = 0; i < d; ++i) {
            in_label[i] = new_label(in_shape[i]);
            out_label[i] = new_label(out_shape[i]);
        }
        for (std::size_t id = 1; id < tree.num_nodes(); ++id) {
            rank_label[id] = new_label(tree.node(id).rank);
        }
        const int batch_label = new_label(batch);
        std::vector<std::vector<int>> operands;
        for (std::size_t id = 0; id < tree.num_nodes(); ++id) {
            const auto& n = tree.node(id);
            std::vector<int> labels;
            if (id != tree.root()) {
                labels.push_back(rank_label[id]);
            }
            if (n.is_leaf()) {
                labels.push_back(out_label[n.first_mode()]);
                labels.push_back(in_label[n.first_mode()]);
            } else {
                labels.push_back(rank_label[*n.left]);
                labels.push_back(rank_label[*n.right]);
            }
            operands.push_back(std::move(labels));
        }
        std::vector<int> x_labels{batch_label};
        x_labels.insert(x_labels.end(), in_label.begin(), in_label.end());
        operands.push_back(std::move(x_labels));
        std::vector<int> output{batch_label};
        output.insert(output.end(), out_label.begin(), out_label.end());
        return ContractionPlan(std::move(operands), std::move(sizes), std::move(output));
    }

private:
    HTTensor core_;
    Shape in_shape_;
    Shape out_shape_;
    std::shared_ptr<const ContractionPlan> plan_;
};

/// Dense tensor of shape (m_1..m_d, n_1..n_d).
inline Tensor reconstruct_dense(const HTLinearLayer& layer) {
    const auto& ht = layer.core();
    const std::size_t d = ht.order();
    const Tensor root = frame(ht, ht.tree().root());
    const std::size_t root_rank = root.dim(0);
    const std::size_t rest = root.size() / root_rank;
    // Sum the root rank mode out.
    std::vector<double> summed(rest, 0.0);
    for (std::size_t k = 0; k < root_rank; ++k) {
        for (std::size_t e = 0; e < rest; ++e) {
            summed[e] += root[k * rest + e];
        }
    }
    Shape pairs;
    for (std::size_t i = 0; i < d; ++i) {
        pairs.push_back(layer.out_shape()[i]);
        pairs.push_back(layer.in_shape()[i]);
    }
    Tensor interleaved(std::move(pairs), std::move(summed));
    std::vector<std::size_t> perm;
    for (std::size_t i = 0; i < d; ++i) {
        perm.push_back(2 * i);
    }
    for (std::size_t i = 0; i < d; ++i) {
        perm.push_back(2 * i + 1);
    }
    return permute(interleaved, perm);
}

/// Row-major M x N matrix: output modes flattened to rows, input modes to columns.
inline Tensor as_matrix(const HTLinearLayer& layer) {
    return reconstruct_dense(layer).reshaped(Shape{layer.out_size(), layer.in_size()});
}

} // namespace htnn
