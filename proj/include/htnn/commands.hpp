#pragma once

#include <fstream>
#include <functional>
#include <optional>
#include <ostream>
#include <string>
#include <vector>

#include "htnn/complexity.hpp"
#include "htnn/config.hpp"
#include "htnn/errors.hpp"
#include "htnn/model_io.hpp"
#include "htnn/training.hpp"
#include "htnn/verify.hpp"

namespace htnn {

enum ExitCode : int {
    exit_ok = 0,
    exit_verify_failed = 1,
    exit_usage = 2,
    exit_diverged = 3,
    exit_io = 4,
};

/// Runs `body`, mapping library errors to exit codes and printing them to `err`.
inline int guarded(std::ostream& err, const std::function<int()>& body) {
    try {
        return body();
    } catch (const DivergenceError& e) {
        err << "error: training diverged: " << e.what() << "\n";
        return exit_diverged;
    } catch (const IoError& e) {
        err << "error: " << e.what() << "\n";
        return exit_io;
    } catch (const ParseError& e) {
        err << "error: " << e.what() << "\n";
        return exit_usage;
    } catch (const ArgumentError& e) {
        err << "error: " << e.what() << "\n";
        return exit_usage;
    } catch (const Error& e) {
        err << "error: " << e.what() << "\n";
        return exit_usage;
    }
}

inline RunConfig load_run_config(const std::optional<std::string>& path) {
    return path ? parse_run_config(read_file(*path)) : RunConfig{};
}

inline int cmd_verify(const VerifyOptions& opt, std::ostream& out, std::ostream& err,
                      const std::optional<std::string>& out_path = std::nullopt) {
    return guarded(err, [&] {
        const VerifyReport report = run_verification(opt);
        const std::string text = "seed " + std::to_string(opt.seed) + "\n" + report.text();
        if (out_path) {
            write_file(*out_path, text);
        } else {
            out << text;
        }
        return report.passed() ? exit_ok : exit_verify_failed;
    });
}

struct AnalyzeRequest {
    std::optional<std::string> preset;
    std::optional<std::string> config_path;
    std::optional<std::string> ranks; ///< comma list; parsed here so malformed lists map to usage
    std::optional<std::string> out_path;
};

inline std::string analyze_table(const AnalyzeRequest& req) {
    std::optional<std::vector<std::size_t>> ranks;
    if (req.ranks) ranks = parse_size_list("--ranks", *req.ranks);
    std::string meta = "# 1 multiply-add = 2 flops; reshapes and permutations are free\n";
    std::vector<ComplexityRow> rows;
    if (req.preset && req.config_path) throw ArgumentError("give either --preset or --config, not both");
    if (req.preset && *req.preset == "figure3") {
        rows = sweep(figure3_config(), ranks.value_or(std::vector<std::size_t>{2, 4, 8, 16}));
    } else if (req.preset) {
        const Preset* p = find_preset(*req.preset);
        if (!p) {
            throw ArgumentError("unknown preset \"" + *req.preset +
                                "\"; known: figure3, ucf11-e2e, youtube-e2e, ucf11-cnn, hmdb51-cnn");
        }
        meta += "# counts cover " + std::to_string(p->gates) + " gate layers\n";
        if (p->reported_params) meta += "# reported elsewhere: params " + std::to_string(*p->reported_params) + "\n";
        if (p->reported_ratio) meta += "# reported elsewhere: compression " + format_ratio(*p->reported_ratio) + "\n";
        if (ranks) {
            rows = sweep(p->config, *ranks, {Format::ht, Format::tt, Format::tr, Format::bt}, p->gates);
        } else {
            rows = preset_report(*p);
        }
    } else if (req.config_path) {
        const RunConfig c = load_run_config(req.config_path);
        FormatConfig tmpl = FormatConfig::uniform(Format::ht, c.model.in_shape, c.model.out_shape, 1);
        tmpl.odd_split = c.model.odd_split;
        tmpl.root_rank = c.model.root_rank;
        meta += "# counts cover 4 gate layers\n";
        if (ranks) {
            rows = sweep(tmpl, *ranks, {Format::ht, Format::tt, Format::tr, Format::bt}, 4);
        } else {
            FormatConfig dense = tmpl;
            dense.format = Format::dense;
            FormatConfig ht = tmpl;
            ht.leaf_rank = c.model.leaf_rank;
            ht.internal_rank = c.model.internal_rank;
            rows = {make_row(dense, 4), make_row(ht, 4)};
        }
    } else {
        throw ArgumentError("analyze needs --preset NAME or --config PATH");
    }
    return meta + to_csv(rows);
}

inline int cmd_analyze(const AnalyzeRequest& req, std::ostream& out, std::ostream& err) {
    return guarded(err, [&] {
        const std::string table = analyze_table(req);
        if (req.out_path) {
            write_file(*req.out_path, table);
        } else {
            out << table;
        }
        return exit_ok;
    });
}

/// Trains from `cfg`; writes the model to cfg.model_out and one JSON record
/// per epoch to cfg.log_out.
inline int cmd_train(const RunConfig& cfg, std::ostream& out, std::ostream& err) {
    return guarded(err, [&] {
        std::ofstream log(cfg.log_out, std::ios::binary | std::ios::trunc);
        if (!log) throw IoError("cannot write " + cfg.log_out);
        {
            std::ofstream probe(cfg.model_out, std::ios::binary | std::ios::app);
            if (!probe) throw IoError("cannot write " + cfg.model_out);
        }
        const SynthDataset data = cfg.make_dataset();
        LSTMParams model = LSTMParams::random(cfg.model, cfg.init_seed());
        EpochRecord last;
        train(model, data, cfg.train_config(), [&](const EpochRecord& r) {
            log << r.to_json() << "\n";
            log.flush();
            last = r;
        });
        if (!log) throw IoError("write failed for " + cfg.log_out);
        save_model(cfg.model_out, model);
        out << "trained " << last.epoch << " epochs, " << model.param_count() << " parameters, final loss "
            << last.loss << ", test accuracy " << last.test_acc << "\n";
        out << "model: " << cfg.model_out << "\nlog: " << cfg.log_out << "\n";
        return exit_ok;
    });
}

/// Loads a model and reports accuracy on the dataset described by `cfg`.
inline int cmd_eval(const std::string& model_path, const RunConfig& cfg, std::ostream& out, std::ostream& err) {
    return guarded(err, [&] {
        LSTMParams model;
        try {
            model = load_model(model_path);
        } catch (const ParseError& e) {
            throw IoError(model_path + ": " + e.what());
        } catch (const StructureError& e) {
            throw IoError(model_path + ": " + e.what());
        }
        const SynthDataset data = cfg.make_dataset();
        const EvalResult tr = evaluate(model, data.train), te = evaluate(model, data.test);
        nlohmann::ordered_json j;
        j["train_loss"] = tr.loss;
        j["train_acc"] = tr.accuracy;
        j["test_loss"] = te.loss;
        j["test_acc"] = te.accuracy;
        out << j.dump() << "\n";
        return exit_ok;
    });
}

} // namespace htnn
