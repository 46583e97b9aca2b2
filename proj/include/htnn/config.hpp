#pragma once

#include <cstdint>
#include <functional>
#include <map>
#include <sstream>
#include <string>
#include <vector>

#include "htnn/errors.hpp"
#include "htnn/ht_lstm.hpp"
#include "htnn/training.hpp"

namespace htnn {

struct DataSpec {
    std::size_t seq_len = 6;
    std::size_t samples_per_class = 40;
    double noise_sigma = 1.0;
};

/**
 * Everything a train or eval run needs. Defaults describe the synthetic
 * benchmark: N = 576 as 8x8x3x3, H = 64 as 4x4x2x2, T = 6, 5 classes,
 * every HT rank 3.
 *
 * `seed` derives the other streams: data uses seed, initialization seed + 1,
 * shuffling and dropout seed + 2.
 */
struct RunConfig {
    DataSpec data;
    LSTMShape model = default_shape();
    TrainConfig train = default_train();
    std::uint64_t seed = 1;
    std::string model_out = "model.htnn";
    std::string log_out = "train_log.jsonl";

    static LSTMShape default_shape() {
        LSTMShape s;
        s.in_shape = {8, 8, 3, 3};
        s.out_shape = {4, 4, 2, 2};
        s.classes = 5;
        s.leaf_rank = 3;
        s.internal_rank = 3;
        return s;
    }

    static TrainConfig default_train() {
        TrainConfig t;
        t.epochs = 50;
        return t;
    }

    std::uint64_t data_seed() const { return seed; }
    std::uint64_t init_seed() const { return seed + 1; }

    TrainConfig train_config() const {
        TrainConfig t = train;
        t.seed = seed + 2;
        return t;
    }

    SynthDataset make_dataset() const {
        return make_synth_dataset(num_elements(model.in_shape), data.seq_len, model.classes, data.samples_per_class,
                                  data.noise_sigma, data_seed());
    }
};

namespace detail {

inline std::string trim(const std::string& s) {
    const auto a = s.find_first_not_of(" \t\r");
    if (a == std::string::npos) return "";
    const auto b = s.find_last_not_of(" \t\r");
    return s.substr(a, b - a + 1);
}

inline double parse_double(const std::string& key, const std::string& v) {
    std::size_t used = 0;
    double out = 0.0;
    try {
        out = std::stod(v, &used);
    } catch (const std::exception&) {
        used = 0;
    }
    if (used != v.size() || v.empty()) throw ParseError(key + ": expected a number, got \"" + v + "\"");
    return out;
}

inline std::uint64_t parse_uint(const std::string& key, const std::string& v) {
    if (v.empty() || v.find_first_not_of("0123456789") != std::string::npos) {
        throw ParseError(key + ": expected a non-negative integer, got \"" + v + "\"");
    }
    try {
        return std::stoull(v);
    } catch (const std::exception&) {
        throw ParseError(key + ": integer out of range: \"" + v + "\"");
    }
}

inline bool parse_bool(const std::string& key, const std::string& v) {
    if (v == "true" || v == "1" || v == "on") return true;
    if (v == "false" || v == "0" || v == "off") return false;
    throw ParseError(key + ": expected true or false, got \"" + v + "\"");
}

} // namespace detail

/// Comma-separated positive integers, e.g. "2,4,8,16".
inline std::vector<std::size_t> parse_size_list(const std::string& key, const std::string& v) {
    std::vector<std::size_t> out;
    std::stringstream in(v);
    std::string tok;
    while (std::getline(in, tok, ',')) {
        const auto x = detail::parse_uint(key, detail::trim(tok));
        if (x == 0) throw ParseError(key + ": entries must be >= 1");
        out.push_back(x);
    }
    if (out.empty() || (!v.empty() && v.back() == ',')) throw ParseError(key + ": malformed list \"" + v + "\"");
    return out;
}

/// Applies one key=value assignment; unknown keys are rejected.
inline void set_config_value(RunConfig& c, const std::string& key, const std::string& v) {
    using namespace detail;
    static const std::map<std::string, std::function<void(RunConfig&, const std::string&, const std::string&)>> setters{
        {"seed", [](RunConfig& c, auto& k, auto& v) { c.seed = parse_uint(k, v); }},
        {"seq_len", [](RunConfig& c, auto& k, auto& v) { c.data.seq_len = parse_uint(k, v); }},
        {"samples_per_class", [](RunConfig& c, auto& k, auto& v) { c.data.samples_per_class = parse_uint(k, v); }},
        {"noise_sigma", [](RunConfig& c, auto& k, auto& v) { c.data.noise_sigma = parse_double(k, v); }},
        {"in_shape", [](RunConfig& c, auto& k, auto& v) { c.model.in_shape = parse_size_list(k, v); }},
        {"out_shape", [](RunConfig& c, auto& k, auto& v) { c.model.out_shape = parse_size_list(k, v); }},
        {"classes", [](RunConfig& c, auto& k, auto& v) { c.model.classes = parse_uint(k, v); }},
        {"leaf_rank", [](RunConfig& c, auto& k, auto& v) { c.model.leaf_rank = parse_uint(k, v); }},
        {"internal_rank", [](RunConfig& c, auto& k, auto& v) { c.model.internal_rank = parse_uint(k, v); }},
        {"root_rank", [](RunConfig& c, auto& k, auto& v) { c.model.root_rank = parse_uint(k, v); }},
        {"odd_split",
         [](RunConfig& c, auto& k, auto& v) {
             if (v == "right") c.model.odd_split = OddSplit::right_heavy;
             else if (v == "left") c.model.odd_split = OddSplit::left_heavy;
             else throw ParseError(k + ": expected right or left, got \"" + v + "\"");
         }},
        {"gates",
         [](RunConfig& c, auto& k, auto& v) {
             if (v == "separate") c.model.concatenated_gates = false;
             else if (v == "concatenated") c.model.concatenated_gates = true;
             else throw ParseError(k + ": expected separate or concatenated, got \"" + v + "\"");
         }},
        {"forget_bias", [](RunConfig& c, auto& k, auto& v) { c.model.forget_bias = parse_double(k, v); }},
        {"learning_rate", [](RunConfig& c, auto& k, auto& v) { c.train.learning_rate = parse_double(k, v); }},
        {"adam_beta1", [](RunConfig& c, auto& k, auto& v) { c.train.adam_beta1 = parse_double(k, v); }},
        {"adam_beta2", [](RunConfig& c, auto& k, auto& v) { c.train.adam_beta2 = parse_double(k, v); }},
        {"adam_epsilon", [](RunConfig& c, auto& k, auto& v) { c.train.adam_epsilon = parse_double(k, v); }},
        {"l2_coefficient", [](RunConfig& c, auto& k, auto& v) { c.train.l2_coefficient = parse_double(k, v); }},
        {"dropout_rate", [](RunConfig& c, auto& k, auto& v) { c.train.dropout_rate = parse_double(k, v); }},
        {"batch_size", [](RunConfig& c, auto& k, auto& v) { c.train.batch_size = parse_uint(k, v); }},
        {"epochs", [](RunConfig& c, auto& k, auto& v) { c.train.epochs = parse_uint(k, v); }},
        {"grad_clip", [](RunConfig& c, auto& k, auto& v) { c.train.grad_clip = parse_double(k, v); }},
        {"deterministic", [](RunConfig& c, auto& k, auto& v) { c.train.deterministic = parse_bool(k, v); }},
        {"model_out", [](RunConfig& c, auto&, auto& v) { c.model_out = v; }},
        {"log_out", [](RunConfig& c, auto&, auto& v) { c.log_out = v; }},
    };
    const auto it = setters.find(key);
    if (it == setters.end()) throw ParseError("unknown config key \"" + key + "\"");
    it->second(c, key, v);
}

/// key = value per line; '#' starts a comment.
inline RunConfig parse_run_config(const std::string& text) {
    RunConfig c;
    std::istringstream in(text);
    std::string line;
    std::size_t lineno = 0;
    while (std::getline(in, line)) {
        ++lineno;
        const auto hash = line.find('#');
        if (hash != std::string::npos) line.resize(hash);
        line = detail::trim(line);
        if (line.empty()) continue;
        const auto eq = line.find('=');
        if (eq == std::string::npos) throw ParseError("line " + std::to_string(lineno) + ": expected key = value");
        try {
            set_config_value(c, detail::trim(line.substr(0, eq)), detail::trim(line.substr(eq + 1)));
        } catch (const ParseError& e) {
            throw ParseError("line " + std::to_string(lineno) + ": " + e.what());
        }
    }
    if (c.model.in_shape.size() != c.model.out_shape.size()) {
        throw ParseError("in_shape and out_shape must have the same number of entries");
    }
    c.train.validate();
    return c;
}

} // namespace htnn
