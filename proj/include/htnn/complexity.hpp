#pragma once

#include <cstdio>
#include <optional>
#include <string>
#include <vector>

#include "htnn/dim_tree.hpp"
#include "htnn/errors.hpp"
#include "htnn/ht_layer.hpp"
#include "htnn/ht_tensor.hpp"

namespace htnn {

enum class Format { dense, ht, tt, tr, bt };

inline const char* format_name(Format f) {
    switch (f) {
    case Format::dense: return "dense";
    case Format::ht: return "HT";
    case Format::tt: return "TT";
    case Format::tr: return "TR";
    case Format::bt: return "BT";
    }
    return "?";
}

/**
 * One weight-matrix format over a fixed tensorization.
 *
 * TT, TR and BT cores use fused (m_k n_k) modes and the uniform rank `rank`;
 * HT uses leaf_rank / internal_rank / root_rank on a balanced tree.
 */
struct FormatConfig {
    Format format = Format::ht;
    Shape in_shape;  ///< n_1..n_d
    Shape out_shape; ///< m_1..m_d
    std::size_t rank = 1;
    std::size_t leaf_rank = 1;
    std::size_t internal_rank = 1;
    std::size_t root_rank = 1;
    OddSplit odd_split = OddSplit::right_heavy;
    std::size_t cp_rank = 1; ///< BT block count C

    std::size_t order() const { return in_shape.size(); }

    static FormatConfig uniform(Format f, Shape in, Shape out, std::size_t r,
                                OddSplit odd = OddSplit::right_heavy) {
        FormatConfig c;
        c.format = f;
        c.in_shape = std::move(in);
        c.out_shape = std::move(out);
        c.rank = c.leaf_rank = c.internal_rank = r;
        c.odd_split = odd;
        return c;
    }

    DimTree tree() const {
        return assign_ranks(DimTree::balanced(order(), odd_split), leaf_rank, internal_rank, root_rank);
    }

    /// Largest rank over non-root nodes for HT, the uniform rank otherwise.
    std::size_t max_rank() const { return format == Format::ht ? std::max(leaf_rank, internal_rank) : rank; }

    void validate() const {
        if (in_shape.empty() || in_shape.size() != out_shape.size()) {
            throw ArgumentError("input and output tensorizations must have the same nonzero order");
        }
        for (std::size_t v : in_shape)
            if (v < 1) throw ArgumentError("mode sizes must be >= 1");
        for (std::size_t v : out_shape)
            if (v < 1) throw ArgumentError("mode sizes must be >= 1");
        if (rank < 1 || leaf_rank < 1 || internal_rank < 1 || root_rank < 1 || cp_rank < 1) {
            throw ArgumentError("ranks must be >= 1");
        }
    }
};

inline std::size_t checked_pow(std::size_t base, std::size_t exp) {
    std::size_t out = 1;
    for (std::size_t i = 0; i < exp; ++i) out *= base;
    return out;
}

inline std::size_t count_params(const FormatConfig& c) {
    c.validate();
    const std::size_t d = c.order();
    const Shape fused = HTLinearLayer::fused_shape(c.in_shape, c.out_shape);
    std::size_t total = 0;
    switch (c.format) {
    case Format::dense: return num_elements(c.in_shape) * num_elements(c.out_shape);
    case Format::ht: return param_count(c.tree(), fused);
    case Format::tt:
        for (std::size_t k = 0; k < d; ++k) {
            const std::size_t left = k == 0 ? 1 : c.rank;
            const std::size_t right = k + 1 == d ? 1 : c.rank;
            total += left * fused[k] * right;
        }
        return total;
    case Format::tr:
        for (std::size_t k = 0; k < d; ++k) total += c.rank * fused[k] * c.rank;
        return total;
    case Format::bt:
        for (std::size_t k = 0; k < d; ++k) total += fused[k] * c.rank;
        return c.cp_rank * (total + checked_pow(c.rank, d));
    }
    return 0;
}

/**
 * Forward flops for one input vector (1 multiply-add = 2 flops).
 *
 * HT uses the layer's own contraction plan. TT and TR absorb cores left to
 * right: step k maps a state (m_1..m_{k-1}, r_{k-1}, n_k..n_d) to
 * (m_1..m_k, r_k, n_{k+1}..n_d); TR additionally carries the open first bond
 * and closes it at the last core. BT absorbs each block's factors left to
 * right, then contracts the r^d core.
 */
inline std::size_t count_forward_flops(const FormatConfig& c) {
    c.validate();
    const std::size_t d = c.order();
    const auto& n = c.in_shape;
    const auto& m = c.out_shape;
    auto prod = [](const Shape& s, std::size_t lo, std::size_t hi) {
        std::size_t p = 1;
        for (std::size_t i = lo; i < hi; ++i) p *= s[i];
        return p;
    };
    const std::size_t r = c.rank;
    std::size_t madds = 0;
    switch (c.format) {
    case Format::dense: return 2 * num_elements(n) * num_elements(m);
    case Format::ht: return forward_flops(c.tree(), n, m);
    case Format::tt:
        for (std::size_t k = 0; k < d; ++k) {
            const std::size_t left = k == 0 ? 1 : r;
            const std::size_t right = k + 1 == d ? 1 : r;
            madds += prod(m, 0, k + 1) * prod(n, k, d) * left * right;
        }
        break;
    case Format::tr:
        if (d == 1) {
            madds = m[0] * n[0] * r;
            break;
        }
        for (std::size_t k = 0; k < d; ++k) {
            const std::size_t carried = (k == 0 || k + 1 == d) ? 1 : r;
            madds += prod(m, 0, k + 1) * prod(n, k, d) * r * r * carried;
        }
        break;
    case Format::bt: {
        std::size_t block = 0;
        for (std::size_t k = 0; k < d; ++k) {
            block += checked_pow(r, k) * prod(m, 0, k + 1) * r * prod(n, k, d);
        }
        block += prod(m, 0, d) * checked_pow(r, d);
        madds = c.cp_rank * block;
        break;
    }
    }
    return 2 * madds;
}

struct ComplexityRow {
    std::string format; ///< "HT", "HT-left" for the left-heavy split, ...
    std::size_t rank = 0;
    std::size_t params = 0;
    std::size_t fwd_flops = 0;
    double compression_ratio = 0.0;
};

/// `gates` multiplies every count, e.g. 4 for the input maps of an LSTM.
inline ComplexityRow make_row(const FormatConfig& c, std::size_t gates = 1) {
    FormatConfig dense = c;
    dense.format = Format::dense;
    ComplexityRow row;
    row.format = format_name(c.format);
    if (c.format == Format::ht && c.odd_split == OddSplit::left_heavy) row.format += "-left";
    row.rank = c.format == Format::dense ? 0 : c.max_rank();
    row.params = gates * count_params(c);
    row.fwd_flops = gates * count_forward_flops(c);
    row.compression_ratio = static_cast<double>(gates * count_params(dense)) / static_cast<double>(row.params);
    return row;
}

/// One row per (format, rank), ranks outermost, formats in the given order.
inline std::vector<ComplexityRow> sweep(const FormatConfig& tmpl, const std::vector<std::size_t>& ranks,
                                        const std::vector<Format>& formats = {Format::ht, Format::tt, Format::tr,
                                                                              Format::bt},
                                        std::size_t gates = 1) {
    if (ranks.empty()) {
        throw ArgumentError("rank list is empty");
    }
    std::vector<ComplexityRow> rows;
    for (std::size_t r : ranks) {
        for (Format f : formats) {
            FormatConfig c = tmpl;
            c.format = f;
            c.rank = c.leaf_rank = c.internal_rank = r;
            rows.push_back(make_row(c, gates));
        }
    }
    return rows;
}

inline std::string format_ratio(double v) {
    char buf[64];
    std::snprintf(buf, sizeof buf, "%.2f", v);
    return buf;
}

inline std::string to_csv(const std::vector<ComplexityRow>& rows) {
    std::string out = "format,rank,params,fwd_flops,compression_ratio\n";
    for (const auto& r : rows) {
        out += r.format + "," + std::to_string(r.rank) + "," + std::to_string(r.params) + "," +
               std::to_string(r.fwd_flops) + "," + format_ratio(r.compression_ratio) + "\n";
    }
    return out;
}

struct Preset {
    std::string name;
    FormatConfig config; ///< HT configuration from the experiment description
    std::size_t gates = 4;
    std::optional<std::size_t> reported_params; ///< figure printed in the source tables, if any
    std::optional<double> reported_ratio;
};

inline std::vector<Preset> published_presets() {
    auto ht = [](Shape in, Shape out, std::size_t leaf, std::size_t internal) {
        FormatConfig c;
        c.format = Format::ht;
        c.in_shape = std::move(in);
        c.out_shape = std::move(out);
        c.rank = internal;
        c.leaf_rank = leaf;
        c.internal_rank = internal;
        return c;
    };
    return {
        {"ucf11-e2e", ht({8, 10, 10, 9, 8}, {4, 4, 2, 4, 2}, 4, 5), 4, 1245, 47375.0},
        {"youtube-e2e", ht({8, 10, 10, 9, 8}, {4, 4, 2, 4, 2}, 3, 4), 4, 810, 72818.0},
        {"ucf11-cnn", ht({8, 8, 8, 4}, {4, 8, 8, 8}, 4, 4), 4, std::nullopt, 12945.0},
        {"hmdb51-cnn", ht({8, 8, 8, 4}, {4, 8, 8, 8}, 4, 4), 4, std::nullopt, 12945.0},
    };
}

/// Single-matrix comparison setting, swept over uniform ranks.
inline FormatConfig figure3_config() {
    return FormatConfig::uniform(Format::ht, {8, 10, 10, 9, 8}, {4, 4, 2, 4, 2}, 4);
}

inline const Preset* find_preset(const std::string& name) {
    static const std::vector<Preset> presets = published_presets();
    for (const auto& p : presets)
        if (p.name == name) return &p;
    return nullptr;
}

/// Dense baseline, then the preset's HT configuration under both odd splits.
inline std::vector<ComplexityRow> preset_report(const Preset& p) {
    FormatConfig dense = p.config;
    dense.format = Format::dense;
    std::vector<ComplexityRow> rows{make_row(dense, p.gates), make_row(p.config, p.gates)};
    FormatConfig left = p.config;
    left.odd_split = OddSplit::left_heavy;
    rows.push_back(make_row(left, p.gates));
    return rows;
}

} // namespace htnn
