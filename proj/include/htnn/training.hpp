#pragma once

#include <chrono>
#include <cmath>
#include <cstdint>
#include <functional>
#include <numeric>
#include <string>
#include <vector>

#include <json.hpp>

#include "htnn/errors.hpp"
#include "htnn/ht_lstm.hpp"
#include "htnn/rng.hpp"
#include "htnn/tensor.hpp"

namespace htnn {

struct TrainConfig {
    double learning_rate = 1e-3;
    double adam_beta1 = 0.9;
    double adam_beta2 = 0.999;
    double adam_epsilon = 1e-8;
    double l2_coefficient = 1e-3;
    double dropout_rate = 0.25;
    std::size_t batch_size = 16;
    std::size_t epochs = 100;
    std::uint64_t seed = 1;
    double grad_clip = 0.0;    ///< global-norm clip; 0 disables
    bool deterministic = true; ///< log wall_ms as 0 so logs are reproducible

    void validate() const {
        if (!(learning_rate >= 0.0)) throw ArgumentError("learning_rate must be >= 0");
        if (!(dropout_rate >= 0.0 && dropout_rate < 1.0)) throw ArgumentError("dropout_rate must lie in [0, 1)");
        if (batch_size < 1) throw ArgumentError("batch_size must be >= 1");
        if (!(adam_beta1 >= 0.0 && adam_beta1 < 1.0 && adam_beta2 >= 0.0 && adam_beta2 < 1.0)) {
            throw ArgumentError("Adam betas must lie in [0, 1)");
        }
        if (!(adam_epsilon > 0.0)) throw ArgumentError("adam_epsilon must be > 0");
        if (!(l2_coefficient >= 0.0) || !(grad_clip >= 0.0)) throw ArgumentError("l2_coefficient and grad_clip must be >= 0");
    }
};

struct LossAndGrad {
    double loss;
    std::vector<double> grad;
};

/// Softmax cross-entropy for a 0-based class label.
inline LossAndGrad cross_entropy(std::span<const double> logits, std::size_t label) {
    if (logits.size() < 2) {
        throw ArgumentError("cross entropy needs at least 2 classes");
    }
    if (label >= logits.size()) {
        throw ArgumentError("label " + std::to_string(label) + " out of range for " + std::to_string(logits.size()) +
                            " classes");
    }
    double top = logits[0];
    for (double v : logits) top = std::max(top, v);
    double sum = 0.0;
    std::vector<double> grad(logits.size());
    for (std::size_t k = 0; k < logits.size(); ++k) {
        grad[k] = std::exp(logits[k] - top);
        sum += grad[k];
    }
    for (double& g : grad) g /= sum;
    const double loss = std::log(sum) + top - logits[label];
    grad[label] -= 1.0;
    return {loss, std::move(grad)};
}

struct AdamState {
    std::vector<Tensor> m;
    std::vector<Tensor> v;
    std::size_t t = 0;
};

/**
 * One bias-corrected Adam update. The L2 term l2*theta is added to each
 * gradient before the moment update. Moments are created on first use.
 */
inline void adam_step(std::span<Tensor* const> params, std::span<const Tensor> grads, AdamState& state,
                      const TrainConfig& cfg) {
    if (params.size() != grads.size()) {
        throw ShapeError("Adam got " + std::to_string(params.size()) + " parameters and " +
                         std::to_string(grads.size()) + " gradients");
    }
    if (state.m.empty()) {
        for (const Tensor* p : params) {
            state.m.emplace_back(p->shape());
            state.v.emplace_back(p->shape());
        }
    }
    if (state.m.size() != params.size()) {
        throw ShapeError("Adam state was built for a different parameter list");
    }
    ++state.t;
    const double b1 = cfg.adam_beta1, b2 = cfg.adam_beta2;
    const double c1 = 1.0 - std::pow(b1, static_cast<double>(state.t));
    const double c2 = 1.0 - std::pow(b2, static_cast<double>(state.t));
    for (std::size_t i = 0; i < params.size(); ++i) {
        Tensor& p = *params[i];
        const Tensor& g = grads[i];
        if (g.shape() != p.shape() || state.m[i].shape() != p.shape()) {
            throw ShapeError("gradient shape " + shape_string(g.shape()) + " does not match parameter shape " +
                             shape_string(p.shape()));
        }
        for (std::size_t k = 0; k < p.size(); ++k) {
            const double gk = g[k] + cfg.l2_coefficient * p[k];
            double& m = state.m[i][k];
            double& v = state.v[i][k];
            m = b1 * m + (1.0 - b1) * gk;
            v = b2 * v + (1.0 - b2) * gk * gk;
            p[k] -= cfg.learning_rate * (m / c1) / (std::sqrt(v / c2) + cfg.adam_epsilon);
        }
    }
}

struct Sample {
    Tensor x; ///< (T, N)
    std::size_t label = 0;
};

/// Class-template sequences plus Gaussian noise. Labels are 0-based.
struct SynthDataset {
    std::vector<Sample> train;
    std::vector<Sample> test;
    std::vector<Tensor> templates; ///< one (T, N) template per class
    std::size_t steps = 0, input_size = 0, classes = 0;
    std::uint64_t seed = 0;
};

/// Each class contributes its first round(0.8 * samples_per_class) samples
/// to train and the rest to test.
inline SynthDataset make_synth_dataset(std::size_t n, std::size_t steps, std::size_t classes,
                                       std::size_t samples_per_class, double noise_sigma, std::uint64_t seed) {
    if (n < 1 || steps < 1 || classes < 1) {
        throw ArgumentError("dataset needs N, T, C >= 1");
    }
    SynthDataset data;
    data.steps = steps;
    data.input_size = n;
    data.classes = classes;
    data.seed = seed;
    Rng rng(seed);
    for (std::size_t c = 0; c < classes; ++c) {
        Tensor t(Shape{steps, n});
        for (double& v : t.storage()) v = rng.normal();
        data.templates.push_back(std::move(t));
    }
    const auto n_train = static_cast<std::size_t>(std::llround(0.8 * static_cast<double>(samples_per_class)));
    for (std::size_t c = 0; c < classes; ++c) {
        for (std::size_t s = 0; s < samples_per_class; ++s) {
            Sample sample{data.templates[c], c};
            for (double& v : sample.x.storage()) v += noise_sigma * rng.normal();
            (s < n_train ? data.train : data.test).push_back(std::move(sample));
        }
    }
    return data;
}

/// Stack samples[idx[begin..end)] into a (B, T, N) batch.
inline Tensor stack_batch(const std::vector<Sample>& samples, std::span<const std::size_t> idx) {
    const Shape& s = samples.at(idx[0]).x.shape();
    Tensor out(Shape{idx.size(), s[0], s[1]});
    const std::size_t len = s[0] * s[1];
    for (std::size_t b = 0; b < idx.size(); ++b) {
        std::copy_n(samples[idx[b]].x.data().begin(), len, out.data().begin() + b * len);
    }
    return out;
}

struct EvalResult {
    double loss = 0.0;
    double accuracy = 0.0;
};

/// Mean loss and accuracy in eval mode (no dropout).
inline EvalResult evaluate(const LSTMParams& p, const std::vector<Sample>& samples, std::size_t batch = 64) {
    if (samples.empty()) return {};
    EvalResult r;
    std::size_t correct = 0;
    std::vector<std::size_t> idx(samples.size());
    std::iota(idx.begin(), idx.end(), 0);
    Rng unused(0);
    for (std::size_t start = 0; start < idx.size(); start += batch) {
        const std::size_t len = std::min(batch, idx.size() - start);
        const std::span<const std::size_t> part(idx.data() + start, len);
        const Tensor logits = forward_batch(p, stack_batch(samples, part), 0.0, unused, false);
        const std::size_t c = p.classes();
        for (std::size_t b = 0; b < len; ++b) {
            const std::span<const double> row(logits.data().data() + b * c, c);
            const std::size_t label = samples[part[b]].label;
            r.loss += cross_entropy(row, label).loss;
            if (static_cast<std::size_t>(std::max_element(row.begin(), row.end()) - row.begin()) == label) ++correct;
        }
    }
    r.loss /= static_cast<double>(samples.size());
    r.accuracy = static_cast<double>(correct) / static_cast<double>(samples.size());
    return r;
}

struct EpochRecord {
    std::size_t epoch = 0;
    double loss = 0.0; ///< mean training loss over the epoch's minibatches, dropout active
    double train_acc = 0.0;
    double test_acc = 0.0;
    double wall_ms = 0.0;

    std::string to_json() const {
        nlohmann::ordered_json j;
        j["epoch"] = epoch;
        j["loss"] = loss;
        j["train_acc"] = train_acc;
        j["test_acc"] = test_acc;
        j["wall_ms"] = wall_ms;
        return j.dump();
    }
};

inline double global_norm(const std::vector<Tensor>& grads) {
    double s = 0.0;
    for (const auto& g : grads)
        for (double v : g.data()) s += v * v;
    return std::sqrt(s);
}

/**
 * Minibatch training with a seeded Fisher-Yates shuffle each epoch.
 * `on_epoch` receives every record as soon as it is complete.
 * Throws DivergenceError on a non-finite loss.
 */
inline std::vector<EpochRecord> train(LSTMParams& model, const SynthDataset& data, const TrainConfig& cfg,
                                      const std::function<void(const EpochRecord&)>& on_epoch = {}) {
    cfg.validate();
    if (data.train.empty()) {
        throw ArgumentError("training set is empty");
    }
    if (data.input_size != model.input_size() || data.classes != model.classes()) {
        throw ShapeError("dataset has N=" + std::to_string(data.input_size) + ", C=" + std::to_string(data.classes) +
                         " but the model expects N=" + std::to_string(model.input_size()) +
                         ", C=" + std::to_string(model.classes()));
    }
    Rng rng(cfg.seed);
    AdamState adam;
    std::vector<EpochRecord> log;
    std::vector<std::size_t> order(data.train.size());
    std::iota(order.begin(), order.end(), 0);
    const std::size_t classes = model.classes();
    for (std::size_t epoch = 1; epoch <= cfg.epochs; ++epoch) {
        const auto t0 = std::chrono::steady_clock::now();
        for (std::size_t i = order.size(); i > 1; --i) {
            std::swap(order[i - 1], order[rng.below(i)]);
        }
        double loss_sum = 0.0;
        for (std::size_t start = 0; start < order.size(); start += cfg.batch_size) {
            const std::size_t len = std::min(cfg.batch_size, order.size() - start);
            const std::span<const std::size_t> part(order.data() + start, len);
            LSTMCache cache;
            const Tensor logits = forward_batch(model, stack_batch(data.train, part), cfg.dropout_rate, rng, true, &cache);
            Tensor dlogits(Shape{len, classes});
            for (std::size_t b = 0; b < len; ++b) {
                const auto ce = cross_entropy(std::span(logits.data().data() + b * classes, classes),
                                              data.train[part[b]].label);
                if (!std::isfinite(ce.loss)) {
                    throw DivergenceError("non-finite loss at epoch " + std::to_string(epoch) + ", sample " +
                                          std::to_string(part[b]));
                }
                loss_sum += ce.loss;
                for (std::size_t k = 0; k < classes; ++k) dlogits[b * classes + k] = ce.grad[k] / static_cast<double>(len);
            }
            LSTMGradients grads = backward_batch(model, cache, dlogits);
            if (cfg.grad_clip > 0.0) {
                const double norm = global_norm(grads.params);
                if (norm > cfg.grad_clip) {
                    for (auto& g : grads.params) g *= cfg.grad_clip / norm;
                }
            }
            const auto params = model.tensors();
            adam_step(params, grads.params, adam, cfg);
        }
        EpochRecord rec;
        rec.epoch = epoch;
        rec.loss = loss_sum / static_cast<double>(order.size());
        rec.train_acc = evaluate(model, data.train).accuracy;
        rec.test_acc = evaluate(model, data.test).accuracy;
        if (!std::isfinite(rec.loss)) {
            throw DivergenceError("non-finite loss at epoch " + std::to_string(epoch));
        }
        if (!cfg.deterministic) {
            rec.wall_ms = std::chrono::duration<double, std::milli>(std::chrono::steady_clock::now() - t0).count();
        }
        log.push_back(rec);
        if (on_epoch) on_epoch(rec);
    }
    return log;
}

/// Accuracy of assigning each sample to the class with the nearest template.
inline double nearest_template_accuracy(const SynthDataset& data, const std::vector<Sample>& samples) {
    std::size_t correct = 0;
    for (const auto& s : samples) {
        std::size_t best = 0;
        double best_d = INFINITY;
        for (std::size_t c = 0; c < data.templates.size(); ++c) {
            double d = 0.0;
            for (std::size_t k = 0; k < s.x.size(); ++k) {
                const double e = s.x[k] - data.templates[c][k];
                d += e * e;
            }
            if (d < best_d) {
                best_d = d;
                best = c;
            }
        }
        if (best == s.label) ++correct;
    }
    return samples.empty() ? 0.0 : static_cast<double>(correct) / static_cast<double>(samples.size());
}

} // namespace htnn
