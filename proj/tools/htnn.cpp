// htnn: verify, analyze, train and eval subcommands.

#include <iostream>
#include <optional>
#include <string>

#include <CLI11.hpp>

#include "htnn/commands.hpp"

namespace {

template <class T>
std::optional<T> opt_if(const CLI::Option* o, const T& v) {
    return o->count() ? std::optional<T>(v) : std::nullopt;
}

} // namespace

int main(int argc, char** argv) {
    using namespace htnn;
    CLI::App app{"Hierarchical Tucker layers and HT-LSTM tools"};
    app.require_subcommand(1);

    // verify
    auto* verify = app.add_subcommand("verify", "Check HT layers against dense and finite-difference oracles");
    VerifyOptions vopt;
    std::string verify_out;
    verify->add_option("--seed", vopt.seed, "RNG seed");
    verify->add_option("--layers", vopt.layers, "Forward-equivalence trials");
    verify->add_option("--max-order", vopt.max_order, "Largest tensor order d")->check(CLI::Range(2, 12));
    verify->add_option("--max-mode", vopt.max_mode, "Largest mode size")->check(CLI::PositiveNumber);
    verify->add_option("--max-rank", vopt.max_rank, "Largest hierarchical rank")->check(CLI::PositiveNumber);
    verify->add_option("--gradient-layers", vopt.gradient_layers, "Finite-difference layer checks");
    verify->add_option("--lstm", vopt.lstm_instances, "Finite-difference HT-LSTM checks");
    verify->add_flag("--inject-fault", vopt.inject_fault, "Corrupt one transfer tensor (negative control)");
    auto* verify_out_opt = verify->add_option("--out", verify_out, "Write the report here instead of stdout");

    // analyze
    auto* analyze = app.add_subcommand("analyze", "Parameter and flop counts for HT, TT, TR and BT formats");
    std::string preset, analyze_config, ranks, analyze_out;
    auto* preset_opt = analyze->add_option("--preset", preset,
                                           "figure3, ucf11-e2e, youtube-e2e, ucf11-cnn or hmdb51-cnn");
    auto* aconfig_opt = analyze->add_option("--config", analyze_config, "Run config whose model shapes to analyze");
    auto* ranks_opt = analyze->add_option("--ranks", ranks, "Comma-separated uniform ranks, e.g. 2,4,8,16");
    auto* aout_opt = analyze->add_option("--out", analyze_out, "Write the table here instead of stdout");

    // train
    auto* trainc = app.add_subcommand("train", "Train an HT-LSTM on the synthetic sequence task");
    std::string train_config, model_out, log_out;
    std::uint64_t seed = 0;
    std::size_t epochs = 0;
    bool deterministic = true;
    auto* tconfig_opt = trainc->add_option("--config", train_config, "key = value run config");
    auto* seed_opt = trainc->add_option("--seed", seed, "Overrides the config seed");
    auto* epochs_opt = trainc->add_option("--epochs", epochs, "Overrides the config epoch count");
    auto* tout_opt = trainc->add_option("--out", model_out, "Model file path");
    auto* log_opt = trainc->add_option("--log", log_out, "Training log path (JSON lines)");
    auto* det_opt = trainc->add_flag("--deterministic,!--no-deterministic", deterministic,
                                     "Log wall_ms as 0 so logs are byte-reproducible (default on)");

    // eval
    auto* evalc = app.add_subcommand("eval", "Evaluate a saved model on the synthetic task");
    std::string eval_model, eval_config;
    std::uint64_t eval_seed = 0;
    evalc->add_option("--model", eval_model, "Model file")->required();
    auto* econfig_opt = evalc->add_option("--config", eval_config, "Run config describing the dataset");
    auto* eseed_opt = evalc->add_option("--seed", eval_seed, "Overrides the config seed");

    try {
        app.parse(argc, argv);
    } catch (const CLI::CallForHelp& e) {
        return app.exit(e);
    } catch (const CLI::CallForAllHelp& e) {
        return app.exit(e);
    } catch (const CLI::ParseError& e) {
        app.exit(e);
        return exit_usage;
    }

    if (verify->parsed()) {
        return cmd_verify(vopt, std::cout, std::cerr, opt_if(verify_out_opt, verify_out));
    }
    if (analyze->parsed()) {
        AnalyzeRequest req{opt_if(preset_opt, preset), opt_if(aconfig_opt, analyze_config), opt_if(ranks_opt, ranks),
                           opt_if(aout_opt, analyze_out)};
        const int code = cmd_analyze(req, std::cout, std::cerr);
        if (code == exit_usage) std::cerr << analyze->help();
        return code;
    }
    if (trainc->parsed()) {
        RunConfig cfg;
        const int loaded = guarded(std::cerr, [&] {
            cfg = load_run_config(opt_if(tconfig_opt, train_config));
            return exit_ok;
        });
        if (loaded != exit_ok) return loaded;
        if (seed_opt->count()) cfg.seed = seed;
        if (epochs_opt->count()) cfg.train.epochs = epochs;
        if (tout_opt->count()) cfg.model_out = model_out;
        if (log_opt->count()) cfg.log_out = log_out;
        if (det_opt->count()) cfg.train.deterministic = deterministic;
        return cmd_train(cfg, std::cout, std::cerr);
    }
    if (evalc->parsed()) {
        RunConfig cfg;
        const int loaded = guarded(std::cerr, [&] {
            cfg = load_run_config(opt_if(econfig_opt, eval_config));
            return exit_ok;
        });
        if (loaded != exit_ok) return loaded;
        if (eseed_opt->count()) cfg.seed = eval_seed;
        return cmd_eval(eval_model, cfg, std::cout, std::cerr);
    }
    return exit_usage;
}
