#pragma once

#include <bit>
#include <cstddef>
#include <cstdint>
#include <limits>
#include <string>
#include <vector>

#include "htnn/errors.hpp"
#include "htnn/tensor.hpp"

namespace htnn {

/// One pairwise contraction in a plan. Slots 0..K-1 are the network operands;
/// step i writes slot K+i.
struct PlanStep {
    std::size_t lhs = 0;
    std::size_t rhs = 0;
    std::vector<std::size_t> modes_lhs; ///< contracted modes of lhs
    std::vector<std::size_t> modes_rhs; ///< paired modes of rhs
    std::vector<int> labels;            ///< labels of the result, in contract() output order
    std::size_t madds = 0;              ///< multiply-adds at the sizes the plan was built for
};

/**
 * Pairwise contraction order for a tensor network.
 *
 * Every label must occur exactly twice among the operands and the output
 * list. Up to 14 operands the order minimizing the total multiply-add count
 * is found exhaustively over connected sub-networks; larger networks fall
 * back to a greedy pairing.
 */
class ContractionPlan {
public:
    static constexpr std::size_t exhaustive_limit = 14;

    ContractionPlan() = default;

    ContractionPlan(std::vector<std::vector<int>> operand_labels, std::vector<std::size_t> label_sizes,
                    std::vector<int> output_labels)
        : operands_(std::move(operand_labels)), sizes_(std::move(label_sizes)), output_(std::move(output_labels)) {
        const std::size_t k = operands_.size();
        if (k == 0 || k > 63) {
            throw ArgumentError("contraction plan needs 1..63 operands");
        }
        if (sizes_.size() > 64) {
            throw ArgumentError("contraction plan supports at most 64 labels");
        }
        endpoints_.assign(sizes_.size(), 0);
        std::vector<int> count(sizes_.size(), 0);
        for (std::size_t i = 0; i < k; ++i) {
            for (int l : operands_[i]) {
                check_label(l);
                endpoints_[l] |= std::uint64_t{1} << i;
                ++count[l];
            }
        }
        for (int l : output_) {
            check_label(l);
            ++count[l];
        }
        for (std::size_t l = 0; l < count.size(); ++l) {
            if (count[l] != 0 && count[l] != 2) {
                throw ArgumentError("label " + std::to_string(l) + " must appear exactly twice");
            }
        }
        if (k <= exhaustive_limit) {
            optimize_exhaustive();
        } else {
            optimize_greedy();
        }
        final_labels_ = k == 1 ? operands_[0] : steps_.back().labels;
        for (const auto& s : steps_) {
            total_madds_ += s.madds;
        }
        output_perm_.clear();
        for (int l : output_) {
            for (std::size_t p = 0; p < final_labels_.size(); ++p) {
                if (final_labels_[p] == l) {
                    output_perm_.push_back(p);
                }
            }
        }
    }

    std::size_t num_operands() const noexcept { return operands_.size(); }
    const std::vector<PlanStep>& steps() const noexcept { return steps_; }
    std::size_t total_madds() const noexcept { return total_madds_; }
    /// Permutation taking the last step's result into output-label order.
    const std::vector<std::size_t>& output_permutation() const noexcept { return output_perm_; }
    std::size_t result_slot() const noexcept { return operands_.size() + steps_.size() - 1; }

    /// Contract `operands` (one per network operand, any sizes consistent
    /// with the labels) and return the result in output-label order. All
    /// intermediate slots are appended to `tape` when it is non-null.
    Tensor execute(std::vector<Tensor> operands, std::vector<Tensor>* tape = nullptr) const {
        if (operands.size() != operands_.size()) {
            throw ArgumentError("plan expects " + std::to_string(operands_.size()) + " operands");
        }
        std::vector<Tensor> slots = std::move(operands);
        slots.reserve(operands_.size() + steps_.size());
        for (const auto& s : steps_) {
            slots.push_back(contract(slots[s.lhs], slots[s.rhs], s.modes_lhs, s.modes_rhs));
        }
        Tensor out = permute(slots.back(), output_perm_);
        if (tape) {
            *tape = std::move(slots);
        }
        return out;
    }

    /// Reverse pass over a tape from execute(); returns one gradient per operand.
    std::vector<Tensor> backpropagate(const std::vector<Tensor>& tape, const Tensor& grad_output) const {
        const std::size_t k = operands_.size();
        if (tape.size() != k + steps_.size()) {
            throw StateError("tape does not belong to this plan");
        }
        std::vector<Tensor> grads(tape.size());
        grads.back() = permute(grad_output, inverse_permutation(output_perm_));
        if (grads.back().shape() != tape.back().shape()) {
            throw ShapeError("output gradient shape " + shape_string(grad_output.shape()) +
                             " does not match the forward result");
        }
        for (std::size_t i = steps_.size(); i-- > 0;) {
            const PlanStep& s = steps_[i];
            const Tensor& g = grads[k + i];
            grads[s.lhs] = contract_grad_lhs(g, tape[s.lhs], tape[s.rhs], s.modes_lhs, s.modes_rhs);
            grads[s.rhs] = contract_grad_rhs(g, tape[s.lhs], tape[s.rhs], s.modes_lhs, s.modes_rhs);
            grads[k + i] = Tensor();
        }
        grads.resize(k);
        return grads;
    }

    /// d(contract(a,b))/da applied to the output gradient g.
    static Tensor contract_grad_lhs(const Tensor& g, const Tensor& a, const Tensor& b,
                                    std::span<const std::size_t> ma, std::span<const std::size_t> mb) {
        const auto free_a = detail::free_modes(a.order(), ma);
        const auto free_b = detail::free_modes(b.order(), mb);
        // g modes: free_a..., free_b...; contract g's free_b block with b's free modes.
        std::vector<std::size_t> g_modes;
        for (std::size_t i = 0; i < free_b.size(); ++i) {
            g_modes.push_back(free_a.size() + i);
        }
        // t modes: free_a..., then b's contracted modes in ascending order.
        Tensor t = contract(g, b, g_modes, free_b);
        std::vector<std::size_t> perm(a.order());
        for (std::size_t i = 0; i < free_a.size(); ++i) {
            perm[free_a[i]] = i;
        }
        for (std::size_t i = 0; i < ma.size(); ++i) {
            perm[ma[i]] = free_a.size() + rank_in(mb, mb[i]);
        }
        return permute(t, perm);
    }

    static Tensor contract_grad_rhs(const Tensor& g, const Tensor& a, const Tensor& b,
                                    std::span<const std::size_t> ma, std::span<const std::size_t> mb) {
        const auto free_a = detail::free_modes(a.order(), ma);
        const auto free_b = detail::free_modes(b.order(), mb);
        std::vector<std::size_t> g_modes(free_a.size());
        for (std::size_t i = 0; i < free_a.size(); ++i) {
            g_modes[i] = i;
        }
        // t modes: a's contracted modes in ascending order, then free_b...
        Tensor t = contract(a, g, free_a, g_modes);
        std::vector<std::size_t> perm(b.order());
        for (std::size_t i = 0; i < mb.size(); ++i) {
            perm[mb[i]] = rank_in(ma, ma[i]);
        }
        for (std::size_t i = 0; i < free_b.size(); ++i) {
            perm[free_b[i]] = mb.size() + i;
        }
        return permute(t, perm);
    }

private:
    // Position of `value` among the entries of `list` sorted ascending.
    static std::size_t rank_in(std::span<const std::size_t> list, std::size_t value) {
        std::size_t r = 0;
        for (std::size_t v : list) {
            r += v < value ? 1 : 0;
        }
        return r;
    }

    void check_label(int l) const {
        if (l < 0 || static_cast<std::size_t>(l) >= sizes_.size()) {
            throw ArgumentError("label " + std::to_string(l) + " has no size");
        }
    }

    // Labels with exactly one endpoint inside `subset` (the output counts as outside).
    std::uint64_t open_labels(std::uint64_t subset) const {
        std::uint64_t mask = 0;
        for (std::size_t l = 0; l < endpoints_.size(); ++l) {
            if (std::popcount(endpoints_[l] & subset) == 1) {
                mask |= std::uint64_t{1} << l;
            }
        }
        return mask;
    }

    double mask_size(std::uint64_t mask) const {
        double s = 1.0;
        while (mask) {
            const int l = std::countr_zero(mask);
            s *= static_cast<double>(sizes_[l]);
            mask &= mask - 1;
        }
        return s;
    }

    void optimize_exhaustive() {
        const std::size_t k = operands_.size();
        const std::uint64_t full = (std::uint64_t{1} << k) - 1;
        constexpr double inf = std::numeric_limits<double>::infinity();
        std::vector<std::uint64_t> open(full + 1);
        for (std::uint64_t s = 1; s <= full; ++s) {
            open[s] = open_labels(s);
        }
        std::vector<double> best(full + 1, inf);
        std::vector<std::uint64_t> split(full + 1, 0);
        for (std::size_t i = 0; i < k; ++i) {
            best[std::uint64_t{1} << i] = 0.0;
        }
        // Subsets in increasing popcount so sub-results are final when used.
        std::vector<std::vector<std::uint64_t>> by_size(k + 1);
        for (std::uint64_t s = 1; s <= full; ++s) {
            by_size[std::popcount(s)].push_back(s);
        }
        for (std::size_t size = 2; size <= k; ++size) {
            for (std::uint64_t s : by_size[size]) {
                const std::uint64_t low = s & (~s + 1);
                // Enumerate splits whose left part contains the lowest operand.
                for (std::uint64_t a = (s - 1) & s; a; a = (a - 1) & s) {
                    if (!(a & low)) {
                        continue;
                    }
                    const std::uint64_t b = s ^ a;
                    if (best[a] == inf || best[b] == inf || (open[a] & open[b]) == 0) {
                        continue;
                    }
                    const double cost = best[a] + best[b] + mask_size(open[a] | open[b]);
                    if (cost < best[s]) {
                        best[s] = cost;
                        split[s] = a;
                    }
                }
            }
        }
        if (k > 1 && best[full] == inf) {
            throw ArgumentError("tensor network is not connected");
        }
        std::vector<std::size_t> slot_of(full + 1, 0);
        for (std::size_t i = 0; i < k; ++i) {
            slot_of[std::uint64_t{1} << i] = i;
        }
        if (k > 1) {
            emit(full, split, slot_of);
        }
    }

    std::size_t emit(std::uint64_t s, const std::vector<std::uint64_t>& split, std::vector<std::size_t>& slot_of) {
        if (std::popcount(s) == 1) {
            return slot_of[s];
        }
        const std::uint64_t a = split[s];
        const std::uint64_t b = s ^ a;
        const std::size_t la = emit(a, split, slot_of);
        const std::size_t lb = emit(b, split, slot_of);
        slot_of[s] = push_step(la, lb);
        return slot_of[s];
    }

    void optimize_greedy() {
        std::vector<std::size_t> live(operands_.size());
        std::vector<std::uint64_t> members(operands_.size());
        for (std::size_t i = 0; i < live.size(); ++i) {
            live[i] = i;
            members[i] = std::uint64_t{1} << i;
        }
        while (live.size() > 1) {
            double best_cost = std::numeric_limits<double>::infinity();
            std::size_t bi = 0;
            std::size_t bj = 0;
            for (std::size_t i = 0; i < live.size(); ++i) {
                for (std::size_t j = i + 1; j < live.size(); ++j) {
                    const std::uint64_t oi = open_labels(members[i]);
                    const std::uint64_t oj = open_labels(members[j]);
                    if ((oi & oj) == 0) {
                        continue;
                    }
                    const double cost = mask_size(oi | oj);
                    if (cost < best_cost) {
                        best_cost = cost;
                        bi = i;
                        bj = j;
                    }
                }
            }
            if (best_cost == std::numeric_limits<double>::infinity()) {
                throw ArgumentError("tensor network is not connected");
            }
            const std::size_t slot = push_step(live[bi], live[bj]);
            members[bi] |= members[bj];
            live[bi] = slot;
            live.erase(live.begin() + static_cast<std::ptrdiff_t>(bj));
            members.erase(members.begin() + static_cast<std::ptrdiff_t>(bj));
        }
    }

    const std::vector<int>& slot_labels(std::size_t slot) const {
        return slot < operands_.size() ? operands_[slot] : steps_[slot - operands_.size()].labels;
    }

    std::size_t push_step(std::size_t lhs, std::size_t rhs) {
        PlanStep step;
        step.lhs = lhs;
        step.rhs = rhs;
        const auto& la = slot_labels(lhs);
        const auto& lb = slot_labels(rhs);
        std::vector<bool> shared_a(la.size(), false);
        std::vector<bool> shared_b(lb.size(), false);
        for (std::size_t i = 0; i < la.size(); ++i) {
            for (std::size_t j = 0; j < lb.size(); ++j) {
                if (la[i] == lb[j]) {
                    step.modes_lhs.push_back(i);
                    step.modes_rhs.push_back(j);
                    shared_a[i] = true;
                    shared_b[j] = true;
                }
            }
        }
        std::size_t madds = 1;
        for (std::size_t i = 0; i < la.size(); ++i) {
            madds *= sizes_[la[i]];
            if (!shared_a[i]) {
                step.labels.push_back(la[i]);
            }
        }
        for (std::size_t j = 0; j < lb.size(); ++j) {
            if (!shared_b[j]) {
                step.labels.push_back(lb[j]);
                madds *= sizes_[lb[j]];
            }
        }
        step.madds = madds;
        steps_.push_back(std::move(step));
        return operands_.size() + steps_.size() - 1;
    }

    std::vector<std::vector<int>> operands_;
    std::vector<std::size_t> sizes_;
    std::vector<int> output_;
    std::vector<std::uint64_t> endpoints_;
    std::vector<PlanStep> steps_;
    std::vector<int> final_labels_;
    std::vector<std::size_t> output_perm_;
    std::size_t total_madds_ = 0;
};

} // namespace htnn
