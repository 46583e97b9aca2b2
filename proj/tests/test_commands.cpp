#include <gtest/gtest.h>

#include <sstream>

#include "htnn/commands.hpp"

namespace htnn {
namespace {

std::string temp(const std::string& name) { return ::testing::TempDir() + "htnn_cmd_" + name; }

TEST(RunConfigParse, DefaultsDescribeTheBenchmark) {
    const RunConfig c;
    EXPECT_EQ(c.model.in_shape, (Shape{8, 8, 3, 3}));
    EXPECT_EQ(num_elements(c.model.in_shape), 576u);
    EXPECT_EQ(num_elements(c.model.out_shape), 64u);
    EXPECT_EQ(c.data.seq_len, 6u);
    EXPECT_EQ(c.model.classes, 5u);
    EXPECT_EQ(c.train.learning_rate, 1e-3);
    EXPECT_EQ(c.train.l2_coefficient, 1e-3);
    EXPECT_EQ(c.train.dropout_rate, 0.25);
    EXPECT_EQ(c.train.batch_size, 16u);
}

TEST(RunConfigParse, ReadsKeysAndComments) {
    const RunConfig c = parse_run_config(
        "# comment\n\nseed = 9\nin_shape = 2,3\nout_shape=2, 2\nepochs = 3  # trailing\n"
        "gates = concatenated\nodd_split = left\nnoise_sigma = 0.5\ndeterministic = false\n");
    EXPECT_EQ(c.seed, 9u);
    EXPECT_EQ(c.model.in_shape, (Shape{2, 3}));
    EXPECT_EQ(c.model.out_shape, (Shape{2, 2}));
    EXPECT_EQ(c.train.epochs, 3u);
    EXPECT_TRUE(c.model.concatenated_gates);
    EXPECT_EQ(c.model.odd_split, OddSplit::left_heavy);
    EXPECT_EQ(c.data.noise_sigma, 0.5);
    EXPECT_FALSE(c.train.deterministic);
    EXPECT_EQ(c.train_config().seed, 11u);
}

TEST(RunConfigParse, RejectsBadInput) {
    EXPECT_THROW(parse_run_config("learning_rat = 1\n"), ParseError);
    EXPECT_THROW(parse_run_config("epochs = -1\n"), ParseError);
    EXPECT_THROW(parse_run_config("epochs\n"), ParseError);
    EXPECT_THROW(parse_run_config("in_shape = 2,,3\n"), ParseError);
    EXPECT_THROW(parse_run_config("in_shape = 2,3,\n"), ParseError);
    EXPECT_THROW(parse_run_config("in_shape = 2,3\n"), ParseError); // out_shape still has 4 entries
    EXPECT_THROW(parse_run_config("dropout_rate = 1.5\n"), ArgumentError);
    EXPECT_THROW(parse_size_list("--ranks", "2,x"), ParseError);
    EXPECT_THROW(parse_size_list("--ranks", "0"), ParseError);
    EXPECT_EQ(parse_size_list("--ranks", "2,4,8,16"), (std::vector<std::size_t>{2, 4, 8, 16}));
}

TEST(Verify, DefaultScalePasses) {
    std::ostringstream out, err;
    EXPECT_EQ(cmd_verify({}, out, err), exit_ok);
    EXPECT_NE(out.str().find("all checks passed"), std::string::npos);
}

TEST(Verify, InjectedFaultFails) {
    VerifyOptions opt;
    opt.inject_fault = true;
    std::ostringstream out, err;
    EXPECT_EQ(cmd_verify(opt, out, err), exit_verify_failed);
    EXPECT_NE(out.str().find("config: trial 0"), std::string::npos);
}

TEST(Verify, ReportIsDeterministic) {
    VerifyOptions opt;
    opt.seed = 42;
    opt.layers = 20;
    std::ostringstream a, b, err;
    cmd_verify(opt, a, err);
    cmd_verify(opt, b, err);
    EXPECT_EQ(a.str(), b.str());
}

std::vector<std::string> data_lines(const std::string& table) {
    std::vector<std::string> rows;
    std::istringstream in(table);
    std::string line;
    while (std::getline(in, line))
        if (!line.empty() && line[0] != '#') rows.push_back(line);
    return rows;
}

TEST(Analyze, Figure3Sweep) {
    std::ostringstream out, err;
    ASSERT_EQ(cmd_analyze({"figure3", std::nullopt, "2,4,8,16", std::nullopt}, out, err), exit_ok);
    const auto rows = data_lines(out.str());
    ASSERT_EQ(rows.size(), 17u); // header + 16
    EXPECT_EQ(rows[0], "format,rank,params,fwd_flops,compression_ratio");
    EXPECT_EQ(rows[5].substr(0, 9), "HT,4,784,");
}

TEST(Analyze, PaperPresetIncludesDenseBaseline) {
    std::ostringstream out, err;
    ASSERT_EQ(cmd_analyze({"ucf11-e2e", std::nullopt, std::nullopt, std::nullopt}, out, err), exit_ok);
    EXPECT_NE(out.str().find("dense,0,58982400,"), std::string::npos);
    EXPECT_NE(out.str().find("HT,5,3444,"), std::string::npos);
    EXPECT_NE(out.str().find("HT-left,5,3444,"), std::string::npos);
}

TEST(Analyze, UsageErrors) {
    std::ostringstream out, err;
    EXPECT_EQ(cmd_analyze({"figure3", std::nullopt, "2,four", std::nullopt}, out, err), exit_usage);
    EXPECT_EQ(cmd_analyze({"nope", std::nullopt, std::nullopt, std::nullopt}, out, err), exit_usage);
    EXPECT_EQ(cmd_analyze({}, out, err), exit_usage);
    EXPECT_EQ(cmd_analyze({std::nullopt, temp("missing.cfg"), std::nullopt, std::nullopt}, out, err), exit_io);
}

RunConfig quick_config(const std::string& tag) {
    RunConfig c = parse_run_config("in_shape = 2,3\nout_shape = 2,2\nclasses = 3\nseq_len = 2\n"
                                   "samples_per_class = 5\nleaf_rank = 2\ninternal_rank = 2\nepochs = 2\n");
    c.model_out = temp(tag + ".htnn");
    c.log_out = temp(tag + ".jsonl");
    return c;
}

TEST(Train, WritesModelAndLogDeterministically) {
    std::ostringstream out, err;
    RunConfig a = quick_config("a"), b = quick_config("b");
    ASSERT_EQ(cmd_train(a, out, err), exit_ok) << err.str();
    ASSERT_EQ(cmd_train(b, out, err), exit_ok) << err.str();
    EXPECT_EQ(read_file(a.model_out), read_file(b.model_out));
    EXPECT_EQ(read_file(a.log_out), read_file(b.log_out));
    const std::string log = read_file(a.log_out);
    EXPECT_EQ(std::count(log.begin(), log.end(), '\n'), 2);
    EXPECT_EQ(cmd_eval(a.model_out, a, out, err), exit_ok);
}

TEST(Train, ZeroEpochsSavesInitialization) {
    std::ostringstream out, err;
    RunConfig c = quick_config("zero");
    c.train.epochs = 0;
    ASSERT_EQ(cmd_train(c, out, err), exit_ok);
    EXPECT_EQ(load_model(c.model_out), LSTMParams::random(c.model, c.init_seed()));
    EXPECT_TRUE(read_file(c.log_out).empty());
}

TEST(Train, ExitCodes) {
    std::ostringstream out, err;
    RunConfig c = quick_config("io");
    c.model_out = "/nonexistent-dir/m.htnn";
    EXPECT_EQ(cmd_train(c, out, err), exit_io);
    RunConfig d = quick_config("diverge");
    d.train.learning_rate = 1e300;
    d.train.adam_epsilon = 1e-300;
    d.train.epochs = 5;
    EXPECT_EQ(cmd_train(d, out, err), exit_diverged);
}

TEST(Eval, CorruptModelIsIoError) {
    std::ostringstream out, err;
    RunConfig c = quick_config("corrupt");
    ASSERT_EQ(cmd_train(c, out, err), exit_ok);
    const std::string bytes = read_file(c.model_out);
    write_file(c.model_out, bytes.substr(0, bytes.size() - 8));
    EXPECT_EQ(cmd_eval(c.model_out, c, out, err), exit_io);
    EXPECT_NE(err.str().find("payload length mismatch"), std::string::npos);
}

} // namespace
} // namespace htnn
