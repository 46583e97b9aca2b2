#pragma once

#include <cstdint>
#include <cstdio>
#include <functional>
#include <string>
#include <vector>

#include "htnn/ht_layer.hpp"
#include "htnn/ht_lstm.hpp"
#include "htnn/rng.hpp"

namespace htnn {

struct VerifyOptions {
    std::uint64_t seed = 1;
    std::size_t layers = 100;       ///< forward-equivalence trials
    std::size_t max_order = 6;      ///< d drawn from [2, max_order]
    std::size_t max_mode = 4;       ///< mode sizes drawn from [1, max_mode]
    std::size_t max_rank = 4;       ///< ranks drawn from [1, max_rank]
    std::size_t gradient_layers = 20;
    std::size_t lstm_instances = 10;
    bool inject_fault = false; ///< corrupt a transfer tensor after taking the dense snapshot
    double forward_tol = 1e-10;
    double gradient_tol = 1e-5;
};

struct VerifyCheck {
    std::string name;
    double worst = 0.0;
    double tol = 0.0;
    std::string worst_config;
    bool passed() const { return worst <= tol; }
};

struct VerifyReport {
    std::vector<VerifyCheck> checks;
    bool passed() const {
        for (const auto& c : checks)
            if (!c.passed()) return false;
        return true;
    }

    std::string text() const {
        std::string out;
        char buf[256];
        for (const auto& c : checks) {
            std::snprintf(buf, sizeof buf, "%-22s worst=%.6e tol=%.1e %s", c.name.c_str(), c.worst, c.tol,
                          c.passed() ? "PASS" : "FAIL");
            out += buf;
            if (!c.passed()) out += "  config: " + c.worst_config;
            out += "\n";
        }
        out += passed() ? "verify: all checks passed\n" : "verify: FAILED\n";
        return out;
    }
};

namespace detail {

inline std::vector<double> central_differences(const std::function<double()>& f, std::span<double> param) {
    std::vector<double> out(param.size());
    for (std::size_t i = 0; i < param.size(); ++i) {
        const double saved = param[i];
        const double h = 1e-6 * std::max(1.0, std::abs(saved));
        param[i] = saved + h;
        const double fp = f();
        param[i] = saved - h;
        const double fm = f();
        param[i] = saved;
        out[i] = (fp - fm) / (2.0 * h);
    }
    return out;
}

inline Tensor normal_tensor(Shape shape, Rng& rng) {
    Tensor t(std::move(shape));
    for (double& v : t.storage()) v = rng.normal();
    return t;
}

inline std::string describe(const HTLinearLayer& layer) {
    std::string s = "in=" + shape_string(layer.in_shape()) + " out=" + shape_string(layer.out_shape()) + " ranks=";
    for (std::size_t id = 0; id < layer.tree().num_nodes(); ++id) {
        s += (id ? "," : "") + std::to_string(layer.tree().node(id).rank);
    }
    return s;
}

inline HTLinearLayer random_layer(Rng& rng, std::size_t max_order, std::size_t max_mode, std::size_t max_rank) {
    const std::size_t d = 2 + rng.below(max_order - 1);
    DimTree tree = DimTree::balanced(d);
    for (std::size_t id = 0; id < tree.num_nodes(); ++id) tree.node(id).rank = 1 + rng.below(max_rank);
    tree.node(tree.root()).rank = 1;
    Shape in(d), out(d);
    for (auto& v : in) v = 1 + rng.below(max_mode);
    for (auto& v : out) v = 1 + rng.below(max_mode);
    return HTLinearLayer::random(std::move(tree), std::move(in), std::move(out), rng.next_u64());
}

inline void record(VerifyCheck& c, double err, const std::string& config) {
    if (err > c.worst || (c.worst_config.empty() && err >= c.worst)) {
        c.worst = err;
        c.worst_config = config;
    }
}

} // namespace detail

/// Forward equivalence against the reconstructed dense matrix, and
/// finite-difference gradient checks for HT layers and HT-LSTMs.
inline VerifyReport run_verification(const VerifyOptions& opt) {
    if (opt.max_order < 2 || opt.max_mode < 1 || opt.max_rank < 1) {
        throw ArgumentError("verify sizes must allow d >= 2, modes >= 1, ranks >= 1");
    }
    Rng rng(opt.seed);
    VerifyReport report;

    VerifyCheck fwd{"forward_equivalence", 0.0, opt.forward_tol, ""};
    for (std::size_t trial = 0; trial < opt.layers; ++trial) {
        HTLinearLayer layer = detail::random_layer(rng, opt.max_order, opt.max_mode, opt.max_rank);
        const Tensor w = as_matrix(layer);
        if (opt.inject_fault && trial == 0) {
            layer.core().component(layer.tree().root())[0] += 1.0;
        }
        const Tensor x = detail::normal_tensor({layer.in_size()}, rng);
        const Tensor y = forward(layer, x);
        std::vector<double> want(layer.out_size(), 0.0);
        for (std::size_t i = 0; i < want.size(); ++i)
            for (std::size_t j = 0; j < x.size(); ++j) want[i] += w[i * x.size() + j] * x[j];
        detail::record(fwd, relative_error(y.data(), want), "trial " + std::to_string(trial) + " " +
                                                                detail::describe(layer));
    }
    report.checks.push_back(fwd);

    VerifyCheck grad{"layer_gradients", 0.0, opt.gradient_tol, ""};
    for (std::size_t trial = 0; trial < opt.gradient_layers; ++trial) {
        HTLinearLayer layer = detail::random_layer(rng, std::min<std::size_t>(opt.max_order, 5),
                                                   std::min<std::size_t>(opt.max_mode, 3),
                                                   std::min<std::size_t>(opt.max_rank, 3));
        Tensor x = detail::normal_tensor({layer.in_size()}, rng);
        const Tensor u = detail::normal_tensor({layer.out_size()}, rng);
        const LayerGradients g = backward(layer, x, u);
        auto loss = [&] {
            const Tensor y = forward(layer, x);
            double s = 0.0;
            for (std::size_t i = 0; i < y.size(); ++i) s += u[i] * y[i];
            return s;
        };
        const std::string cfg = "trial " + std::to_string(trial) + " " + detail::describe(layer);
        for (std::size_t id = 0; id < layer.tree().num_nodes(); ++id) {
            const auto fd = detail::central_differences(loss, layer.core().component(id).data());
            detail::record(grad, relative_error(g.components[id].data(), fd), cfg + " node " + std::to_string(id));
        }
        detail::record(grad, relative_error(g.input.data(), detail::central_differences(loss, x.data())),
                       cfg + " input");
    }
    report.checks.push_back(grad);

    VerifyCheck lstm{"lstm_gradients", 0.0, opt.gradient_tol, ""};
    for (std::size_t trial = 0; trial < opt.lstm_instances; ++trial) {
        LSTMShape s;
        s.in_shape = {2, 4};
        s.out_shape = {2, 2};
        s.classes = 3;
        s.leaf_rank = 1 + rng.below(3);
        s.internal_rank = 1 + rng.below(3);
        s.concatenated_gates = trial % 5 == 4;
        LSTMParams p = LSTMParams::random(s, rng.next_u64());
        for (auto& b : p.b)
            for (double& v : b.storage()) v = 0.5 * rng.normal();
        std::vector<Tensor> xs{detail::normal_tensor({8}, rng), detail::normal_tensor({8}, rng)};
        const Tensor w = detail::normal_tensor({3}, rng);
        LSTMCache cache;
        sequence_forward(p, xs, 0.0, 0, true, &cache);
        const LSTMGradients g = sequence_backward(p, cache, w);
        auto loss = [&] {
            const Tensor z = sequence_forward(p, xs, 0.0, 0, true);
            return w[0] * z[0] + w[1] * z[1] + w[2] * z[2];
        };
        const auto tensors = p.tensors();
        const auto names = p.tensor_names();
        const std::string cfg = "lstm trial " + std::to_string(trial) + " T=2 H=4 N=8 ranks " +
                                std::to_string(s.leaf_rank) + "/" + std::to_string(s.internal_rank);
        for (std::size_t i = 0; i < tensors.size(); ++i) {
            const auto fd = detail::central_differences(loss, tensors[i]->data());
            detail::record(lstm, relative_error(g.params[i].data(), fd), cfg + " " + names[i]);
        }
    }
    report.checks.push_back(lstm);
    return report;
}

} // namespace htnn
