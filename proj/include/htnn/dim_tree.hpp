#pragma once

#include <algorithm>
#include <cstddef>
#include <optional>
#include <string>
#include <vector>

#include "htnn/errors.hpp"

namespace htnn {

/// How a non-root node with an odd number of modes is split.
/// The root always puts floor(d/2) modes on the left.
enum class OddSplit {
    right_heavy, ///< {3,4,5} -> {3} | {4,5}
    left_heavy,  ///< {3,4,5} -> {3,4} | {5}
};

struct TreeNode {
    std::vector<std::size_t> modes; ///< sorted 0-based mode indices
    std::size_t rank = 1;
    std::optional<std::size_t> parent;
    std::optional<std::size_t> left;
    std::optional<std::size_t> right;

    bool is_leaf() const noexcept { return !left && !right; }
    std::size_t first_mode() const { return modes.front(); }
    std::size_t last_mode() const { return modes.back(); }
};

struct TreeViolation {
    std::size_t node;
    std::string what;
};

/**
 * Binary dimension tree over modes {0, ..., d-1}.
 *
 * Nodes are stored in pre-order, the root at index 0. A node is identified
 * in text by its 1-based interval "[mu,nu]".
 */
class DimTree {
public:
    DimTree() = default;

    /// Unchecked construction; run validate() before relying on the result.
    DimTree(std::size_t d, std::vector<TreeNode> nodes) : d_(d), nodes_(std::move(nodes)) {}

    static DimTree balanced(std::size_t d, OddSplit odd = OddSplit::right_heavy) {
        if (d < 1) {
            throw ArgumentError("dimension tree needs d >= 1");
        }
        DimTree tree;
        tree.d_ = d;
        tree.build(0, d, std::nullopt, odd, true);
        return tree;
    }

    std::size_t order() const noexcept { return d_; }
    std::size_t num_nodes() const noexcept { return nodes_.size(); }
    std::size_t root() const noexcept { return 0; }
    const TreeNode& node(std::size_t id) const { return nodes_.at(id); }
    TreeNode& node(std::size_t id) { return nodes_.at(id); }
    const std::vector<TreeNode>& nodes() const noexcept { return nodes_; }

    bool is_leaf(std::size_t id) const { return node(id).is_leaf(); }
    std::size_t left(std::size_t id) const { return node(id).left.value(); }
    std::size_t right(std::size_t id) const { return node(id).right.value(); }

    std::optional<std::size_t> father(std::size_t id) const { return node(id).parent; }

    std::optional<std::size_t> brother(std::size_t id) const {
        const auto p = node(id).parent;
        if (!p) {
            return std::nullopt;
        }
        return left(*p) == id ? right(*p) : left(*p);
    }

    /// Node id of the leaf holding `mode`.
    std::size_t leaf_of(std::size_t mode) const {
        for (std::size_t id = 0; id < nodes_.size(); ++id) {
            if (nodes_[id].is_leaf() && nodes_[id].modes.size() == 1 && nodes_[id].modes[0] == mode) {
                return id;
            }
        }
        throw ArgumentError("no leaf for mode " + std::to_string(mode));
    }

    /// Node whose set is the interval [first, last] (0-based, inclusive).
    std::optional<std::size_t> find(std::size_t first, std::size_t last) const {
        for (std::size_t id = 0; id < nodes_.size(); ++id) {
            const auto& m = nodes_[id].modes;
            if (!m.empty() && m.front() == first && m.back() == last && m.size() == last - first + 1) {
                return id;
            }
        }
        return std::nullopt;
    }

    std::vector<std::size_t> post_order() const {
        std::vector<std::size_t> out;
        out.reserve(nodes_.size());
        if (!nodes_.empty()) {
            post_order_from(root(), out);
        }
        return out;
    }

    std::vector<std::size_t> internal_nodes() const {
        std::vector<std::size_t> out;
        for (std::size_t id = 0; id < nodes_.size(); ++id) {
            if (!nodes_[id].is_leaf()) {
                out.push_back(id);
            }
        }
        return out;
    }

    std::string label(std::size_t id) const {
        const auto& n = node(id);
        if (n.modes.empty()) {
            return "[]";
        }
        return "[" + std::to_string(n.first_mode() + 1) + "," + std::to_string(n.last_mode() + 1) + "]";
    }

    friend bool operator==(const DimTree& a, const DimTree& b) {
        if (a.d_ != b.d_ || a.nodes_.size() != b.nodes_.size()) {
            return false;
        }
        for (std::size_t i = 0; i < a.nodes_.size(); ++i) {
            const auto& x = a.nodes_[i];
            const auto& y = b.nodes_[i];
            if (x.modes != y.modes || x.rank != y.rank || x.parent != y.parent || x.left != y.left ||
                x.right != y.right) {
                return false;
            }
        }
        return true;
    }

private:
    std::size_t build(std::size_t first, std::size_t count, std::optional<std::size_t> parent, OddSplit odd,
                      bool is_root) {
        const std::size_t id = nodes_.size();
        TreeNode n;
        for (std::size_t k = 0; k < count; ++k) {
            n.modes.push_back(first + k);
        }
        n.parent = parent;
        nodes_.push_back(std::move(n));
        if (count > 1) {
            std::size_t left_count = count / 2;
            if (!is_root && odd == OddSplit::left_heavy) {
                left_count = count - count / 2;
            }
            const std::size_t l = build(first, left_count, id, odd, false);
            const std::size_t r = build(first + left_count, count - left_count, id, odd, false);
            nodes_[id].left = l;
            nodes_[id].right = r;
        }
        return id;
    }

    void post_order_from(std::size_t id, std::vector<std::size_t>& out) const {
        const auto& n = nodes_[id];
        if (n.left) {
            post_order_from(*n.left, out);
        }
        if (n.right) {
            post_order_from(*n.right, out);
        }
        out.push_back(id);
    }

    std::size_t d_ = 0;
    std::vector<TreeNode> nodes_;
};

/// Copy of `tree` with singleton nodes at `leaf_rank`, other non-root nodes at
/// `internal_rank` and the root at `root_rank`.
inline DimTree assign_ranks(DimTree tree, std::size_t leaf_rank, std::size_t internal_rank,
                            std::size_t root_rank = 1) {
    if (leaf_rank < 1 || internal_rank < 1 || root_rank < 1) {
        throw ArgumentError("ranks must be positive");
    }
    for (std::size_t id = 0; id < tree.num_nodes(); ++id) {
        auto& n = tree.node(id);
        if (id == tree.root()) {
            n.rank = root_rank;
        } else if (n.is_leaf()) {
            n.rank = leaf_rank;
        } else {
            n.rank = internal_rank;
        }
    }
    return tree;
}

/// Every violated tree invariant; empty means the tree is valid.
inline std::vector<TreeViolation> validate(const DimTree& tree) {
    std::vector<TreeViolation> out;
    const std::size_t d = tree.order();
    const auto& nodes = tree.nodes();
    if (d == 0 || nodes.empty()) {
        out.push_back({0, "empty tree"});
        return out;
    }
    if (nodes[0].parent) {
        out.push_back({0, "root has a parent"});
    }
    std::size_t leaves = 0;
    std::size_t internals = 0;
    std::vector<int> leaf_hits(d, 0);
    for (std::size_t id = 0; id < nodes.size(); ++id) {
        const auto& n = nodes[id];
        if (n.rank < 1) {
            out.push_back({id, "nonpositive rank"});
        }
        if (n.modes.empty()) {
            out.push_back({id, "empty node set"});
            continue;
        }
        bool contiguous = std::is_sorted(n.modes.begin(), n.modes.end());
        for (std::size_t k = 1; contiguous && k < n.modes.size(); ++k) {
            contiguous = n.modes[k] == n.modes[k - 1] + 1;
        }
        if (!contiguous) {
            out.push_back({id, "non-contiguous node set"});
        }
        if (n.modes.back() >= d) {
            out.push_back({id, "mode index out of range"});
            continue;
        }
        if (n.left.has_value() != n.right.has_value()) {
            out.push_back({id, "internal node with a single child"});
            continue;
        }
        if (n.is_leaf()) {
            ++leaves;
            if (n.modes.size() != 1) {
                out.push_back({id, "leaf is not a singleton"});
            } else {
                ++leaf_hits[n.modes[0]];
            }
            continue;
        }
        ++internals;
        const std::size_t l = *n.left;
        const std::size_t r = *n.right;
        if (l >= nodes.size() || r >= nodes.size()) {
            out.push_back({id, "child index out of range"});
            continue;
        }
        if (nodes[l].parent != id || nodes[r].parent != id) {
            out.push_back({id, "child does not point back to parent"});
        }
        std::vector<std::size_t> joined = nodes[l].modes;
        joined.insert(joined.end(), nodes[r].modes.begin(), nodes[r].modes.end());
        std::sort(joined.begin(), joined.end());
        const bool disjoint = std::adjacent_find(joined.begin(), joined.end()) == joined.end();
        if (!disjoint || joined != n.modes) {
            out.push_back({id, "children do not partition node set"});
        }
    }
    if (nodes[0].modes.size() != d) {
        out.push_back({0, "root does not cover all modes"});
    }
    if (leaves != d) {
        out.push_back({0, "expected " + std::to_string(d) + " leaves, found " + std::to_string(leaves)});
    }
    if (internals + 1 != d) {
        out.push_back({0, "expected " + std::to_string(d - 1) + " internal nodes, found " +
                              std::to_string(internals)});
    }
    for (std::size_t m = 0; m < d; ++m) {
        if (leaf_hits[m] != 1) {
            out.push_back({0, "mode " + std::to_string(m + 1) + " is not covered by exactly one leaf"});
        }
    }
    return out;
}

inline void require_valid(const DimTree& tree) {
    const auto v = validate(tree);
    if (!v.empty()) {
        throw StructureError("invalid dimension tree at node " + std::to_string(v.front().node) + ": " +
                             v.front().what);
    }
}

} // namespace htnn
