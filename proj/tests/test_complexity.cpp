#include <gtest/gtest.h>

#include <cmath>

#include "htnn/complexity.hpp"
#include "test_support.hpp"

namespace htnn {
namespace {

const Shape fig_in{8, 10, 10, 9, 8};
const Shape fig_out{4, 4, 2, 4, 2};

std::size_t params_at(Format f, std::size_t r) {
    return count_params(FormatConfig::uniform(f, fig_in, fig_out, r));
}

TEST(Params, TensorTrainExample) {
    // Cores (1,4,3) and (3,6,1).
    EXPECT_EQ(count_params(FormatConfig::uniform(Format::tt, {2, 2}, {2, 3}, 3)), 30u);
}

TEST(Params, RankOneDegenerateForms) {
    const Shape in{3, 2, 4}, out{2, 5, 1};
    const std::size_t sum_mn = 6 + 10 + 4;
    EXPECT_EQ(count_params(FormatConfig::uniform(Format::tt, in, out, 1)), sum_mn);
    EXPECT_EQ(count_params(FormatConfig::uniform(Format::tr, in, out, 1)), sum_mn);
    EXPECT_EQ(count_params(FormatConfig::uniform(Format::bt, in, out, 1)), sum_mn + 1);
    EXPECT_EQ(count_params(FormatConfig::uniform(Format::ht, in, out, 1)), sum_mn + 2);
}

TEST(Params, Figure3RankFour) {
    EXPECT_EQ(params_at(Format::ht, 4), 144u * 4 + 16 + 3 * 64);
    EXPECT_EQ(params_at(Format::ht, 4), 784u);
    EXPECT_EQ(params_at(Format::tr, 4), 2304u);
    EXPECT_EQ(params_at(Format::bt, 4), 144u * 4 + 1024);
}

TEST(Params, Figure3HtSmallestAtEveryRank) {
    for (std::size_t r : {2, 4, 8, 16}) {
        const auto ht = params_at(Format::ht, r);
        EXPECT_LT(ht, params_at(Format::tt, r)) << r;
        EXPECT_LT(ht, params_at(Format::tr, r)) << r;
        EXPECT_LT(ht, params_at(Format::bt, r)) << r;
    }
}

TEST(Params, HtFormulaMatchesConstructedTensor) {
    for (const auto& p : published_presets()) {
        for (OddSplit odd : {OddSplit::right_heavy, OddSplit::left_heavy}) {
            FormatConfig c = p.config;
            c.odd_split = odd;
            const HTLinearLayer layer = HTLinearLayer::random(c.tree(), c.in_shape, c.out_shape, 1);
            std::size_t elements = 0;
            for (const auto& t : layer.core().components()) elements += t.size();
            EXPECT_EQ(count_params(c), elements) << p.name;
        }
    }
}

TEST(Presets, Ucf11EndToEnd) {
    const Preset* p = find_preset("ucf11-e2e");
    ASSERT_NE(p, nullptr);
    EXPECT_EQ(count_params(p->config), 861u);
    FormatConfig left = p->config;
    left.odd_split = OddSplit::left_heavy;
    EXPECT_EQ(count_params(left), 861u);
    const auto rows = preset_report(*p);
    ASSERT_EQ(rows.size(), 3u);
    EXPECT_EQ(rows[0].format, "dense");
    EXPECT_EQ(rows[0].params, 58982400u);
    EXPECT_EQ(rows[1].params, 3444u);
    EXPECT_EQ(rows[2].format, "HT-left");
    EXPECT_EQ(rows[1].rank, 5u);
    EXPECT_GT(make_row(p->config).compression_ratio, 10000.0);
    EXPECT_NEAR(make_row(p->config).compression_ratio, 57600.0 * 256 / 861, 1e-9);
}

TEST(Presets, CnnFrontEnd) {
    for (const char* name : {"ucf11-cnn", "hmdb51-cnn"}) {
        const Preset* p = find_preset(name);
        ASSERT_NE(p, nullptr);
        // Leaves 4 * (32 + 64 + 64 + 32), transfers 1*4*4 + 2 * 4*4*4.
        EXPECT_EQ(count_params(p->config), 768u + 144u);
    }
}

TEST(Presets, YoutubeEndToEnd) {
    const Preset* p = find_preset("youtube-e2e");
    ASSERT_NE(p, nullptr);
    // Leaves 3 * 144; transfers 1*4*4 + 4*3*3 + 4*3*4 + 4*3*3.
    EXPECT_EQ(count_params(p->config), 432u + 16 + 36 + 48 + 36);
    EXPECT_EQ(find_preset("nope"), nullptr);
}

TEST(Flops, DenseBaseline) {
    FormatConfig c = FormatConfig::uniform(Format::dense, fig_in, fig_out, 1);
    EXPECT_EQ(count_forward_flops(c), 29491200u);
}

TEST(Flops, HtMatchesLayer) {
    for (std::size_t r : {2, 4, 8}) {
        const FormatConfig c = FormatConfig::uniform(Format::ht, fig_in, fig_out, r);
        const HTLinearLayer layer = HTLinearLayer::random(c.tree(), fig_in, fig_out, 1);
        EXPECT_EQ(count_forward_flops(c), flop_count_forward(layer));
    }
}

TEST(Flops, HtBelowDenseAtEveryRank) {
    for (std::size_t r : {2, 4, 8, 16}) {
        EXPECT_LT(count_forward_flops(FormatConfig::uniform(Format::ht, fig_in, fig_out, r)), 29491200u) << r;
    }
}

TEST(Flops, HandCountedChains) {
    const Shape in{4, 5}, out{2, 3};
    // TT: (m1, r1, n2) = 2*2*5 entries over n1 = 4, then (m1, m2) over (r1, n2).
    EXPECT_EQ(count_forward_flops(FormatConfig::uniform(Format::tt, in, out, 2)), 2u * (80 + 60));
    // TR: (r0, m1, r1, n2) = 40 entries over n1, then 6 outputs over (r0, r1, n2).
    EXPECT_EQ(count_forward_flops(FormatConfig::uniform(Format::tr, in, out, 2)), 2u * (160 + 120));
    // BT: (m1, r1, n2) over n1, (m1, r1, m2, r2) over n2, then 6 outputs over r^2.
    EXPECT_EQ(count_forward_flops(FormatConfig::uniform(Format::bt, in, out, 2)), 2u * (80 + 120 + 24));
}

// Tensor-train matvec with explicit loops that counts its multiply-adds.
std::pair<std::vector<double>, std::size_t> tt_matvec_counting(const std::vector<Tensor>& cores, const Shape& in,
                                                               const Shape& out, std::span<const double> x) {
    const std::size_t d = in.size();
    // state indexed (done_m, r, rest_n), flattened row-major.
    std::vector<double> state(x.begin(), x.end());
    std::size_t done_m = 1, rest_n = num_elements(in), r_prev = 1, madds = 0;
    for (std::size_t k = 0; k < d; ++k) {
        const Tensor& g = cores[k]; // (r_prev, m_k, n_k, r_next)
        const std::size_t mk = out[k], nk = in[k], r_next = g.dim(3);
        rest_n /= nk;
        std::vector<double> next(done_m * mk * r_next * rest_n, 0.0);
        for (std::size_t a = 0; a < done_m; ++a)
            for (std::size_t i = 0; i < mk; ++i)
                for (std::size_t q = 0; q < r_next; ++q)
                    for (std::size_t b = 0; b < rest_n; ++b) {
                        double acc = 0.0;
                        for (std::size_t p = 0; p < r_prev; ++p)
                            for (std::size_t j = 0; j < nk; ++j) {
                                acc += g.at({p, i, j, q}) * state[((a * r_prev + p) * nk + j) * rest_n + b];
                                ++madds;
                            }
                        next[((a * mk + i) * r_next + q) * rest_n + b] = acc;
                    }
        state = std::move(next);
        done_m *= mk;
        r_prev = r_next;
    }
    return {state, madds};
}

TEST(Flops, TensorTrainCountMatchesInstrumentedMatvec) {
    Rng rng(5);
    for (int trial = 0; trial < 10; ++trial) {
        const std::size_t d = 1 + rng.below(4);
        const Shape in = testing::random_shape(d, 3, rng), out = testing::random_shape(d, 3, rng);
        const std::size_t r = 1 + rng.below(3);
        std::vector<Tensor> cores;
        std::size_t elems = 0;
        for (std::size_t k = 0; k < d; ++k) {
            cores.push_back(testing::random_tensor({k == 0 ? 1 : r, out[k], in[k], k + 1 == d ? 1 : r}, rng));
            elems += cores.back().size();
        }
        const Tensor x = testing::random_tensor({num_elements(in)}, rng);
        const auto [y, madds] = tt_matvec_counting(cores, in, out, x.data());
        const FormatConfig c = FormatConfig::uniform(Format::tt, in, out, r);
        EXPECT_EQ(count_forward_flops(c), 2 * madds);
        EXPECT_EQ(count_params(c), elems);
        EXPECT_EQ(y.size(), num_elements(out));
    }
}

TEST(Growth, ParamTermsScaleAsExpected) {
    // Leaf term is exactly linear in leaf rank; transfer term is cubic in a
    // uniform internal rank once r dominates.
    auto leaf_term = [](std::size_t r) { return static_cast<double>(144 * r); };
    std::vector<double> lx, ly;
    for (std::size_t r : {4, 8, 16, 32}) {
        const double total = static_cast<double>(params_at(Format::ht, r));
        lx.push_back(std::log(static_cast<double>(r)));
        ly.push_back(std::log(total - leaf_term(r) - static_cast<double>(r * r)));
    }
    EXPECT_NEAR((ly.back() - ly.front()) / (lx.back() - lx.front()), 3.0, 1e-12);
}

TEST(Sweep, TableShape) {
    const auto rows = sweep(figure3_config(), {2, 4, 8, 16});
    EXPECT_EQ(rows.size(), 16u);
    const auto one = sweep(figure3_config(), {4}, {Format::tt});
    ASSERT_EQ(one.size(), 1u);
    const std::string csv = to_csv(one);
    EXPECT_EQ(csv.substr(0, csv.find('\n')), "format,rank,params,fwd_flops,compression_ratio");
    EXPECT_THROW(sweep(figure3_config(), {}), ArgumentError);
}

} // namespace
} // namespace htnn
