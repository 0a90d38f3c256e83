#include "quadapt/cli.hpp"

#include <cstdio>
#include <fstream>
#include <iostream>
#include <random>

#include "CLI11.hpp"
#include "quadapt/adapter.hpp"
#include "quadapt/basemodel.hpp"
#include "quadapt/gradcheck.hpp"
#include "quadapt/harness.hpp"
#include "quadapt/runconfig.hpp"

namespace quadapt {

namespace {

using nlohmann::json;

void write_text_file(const std::string& path, const std::string& content) {
    std::ofstream f(path, std::ios::binary | std::ios::trunc);
    if (!f) throw IoError("cannot open " + path + " for writing");
    f << content;
    if (!f) throw IoError("failed writing " + path);
}

bool ends_with(const std::string& s, const std::string& suffix) {
    return s.size() >= suffix.size() && s.compare(s.size() - suffix.size(), suffix.size(),
                                                  suffix) == 0;
}

// Report files are .json or .csv by extension.
void write_report(const std::string& path, const json& as_json, const std::string& as_csv) {
    if (ends_with(path, ".json")) {
        write_text_file(path, as_json.dump(2) + "\n");
    } else if (ends_with(path, ".csv")) {
        write_text_file(path, as_csv);
    } else {
        throw ValueError("report path must end in .json or .csv: " + path);
    }
}

std::string eval_csv(const json& j) {
    std::string out = "pretrain_test_mse,downstream_test_mse,adapter\n";
    char buf[96];
    std::snprintf(buf, sizeof(buf), "%.17g,%.17g,%d\n", j["pretrain_test_mse"].get<double>(),
                  j["downstream_test_mse"].get<double>(), j["adapter"].get<bool>() ? 1 : 0);
    return out + buf;
}

int run_gradcheck(int probes, const std::string& seed_arg) {
    std::uint64_t seed = 2024;
    if (seed_arg == "auto") {
        seed = std::random_device{}();
    } else if (!seed_arg.empty()) {
        seed = std::stoull(seed_arg);
    }
    auto results = run_gradcheck_suite(probes, seed);
    bool all_passed = true;
    for (const auto& r : results) {
        if (!r.passed) {
            all_passed = false;
            std::cerr << "FAIL " << r.name << " max_rel_err=" << r.max_rel_err << "\n";
        }
    }
    if (!all_passed) return 2;
    std::cout << "ALL GRADCHECKS PASSED (" << results.size() << " ops)\n";
    return 0;
}

int dispatch(const std::vector<std::string>& args) {
    CLI::App app{"quadratic kernel adapters for frozen networks"};
    app.require_subcommand(1);

    // gradcheck
    auto* gradcheck_cmd =
        app.add_subcommand("gradcheck", "run the finite-difference suite over every op");
    int probes = 100;
    std::string gradcheck_seed;
    gradcheck_cmd->add_option("--probes", probes, "random probes per op (default 100)");
    gradcheck_cmd->add_option("--seed", gradcheck_seed, "probe seed, or 'auto'");

    // genbench
    auto* genbench_cmd = app.add_subcommand("genbench", "generate and export a shift benchmark");
    std::string genbench_config, genbench_out;
    genbench_cmd->add_option("--config", genbench_config, "bench config JSON")->required();
    genbench_cmd->add_option("--out", genbench_out, "output directory")->required();

    // pretrain
    auto* pretrain_cmd = app.add_subcommand("pretrain", "train a base model on the pretrain split");
    std::string pretrain_config, pretrain_out, pretrain_report;
    pretrain_cmd->add_option("--config", pretrain_config, "run config JSON")->required();
    pretrain_cmd->add_option("--out", pretrain_out, "base checkpoint directory")->required();
    pretrain_cmd->add_option("--report", pretrain_report, "train report (.json/.csv)");

    // adapt
    auto* adapt_cmd = app.add_subcommand("adapt", "train an adapter on a frozen base");
    std::string adapt_base, adapt_config, adapt_out, adapt_report;
    adapt_cmd->add_option("--base", adapt_base, "base checkpoint directory")->required();
    adapt_cmd->add_option("--config", adapt_config, "run config JSON")->required();
    adapt_cmd->add_option("--out", adapt_out, "adapter checkpoint directory");
    adapt_cmd->add_option("--report", adapt_report, "train report (.json/.csv)");

    // eval
    auto* eval_cmd = app.add_subcommand("eval", "evaluate a base (+ optional adapter) on a bench");
    std::string eval_base, eval_adapter, eval_bench, eval_report;
    eval_cmd->add_option("--base", eval_base, "base checkpoint directory")->required();
    eval_cmd->add_option("--adapter", eval_adapter, "adapter checkpoint directory");
    eval_cmd->add_option("--bench", eval_bench, "benchmark directory")->required();
    eval_cmd->add_option("--report", eval_report, "eval report (.json/.csv)");

    // compare
    auto* compare_cmd = app.add_subcommand("compare", "head-to-head adapter comparison");
    std::string compare_config, compare_report;
    compare_cmd->add_option("--config", compare_config, "run config JSON")->required();
    compare_cmd->add_option("--report", compare_report, "comparison report (.json/.csv)");

    // savings
    auto* savings_cmd = app.add_subcommand("savings", "scratch-vs-adapter parameter-step ratio");
    std::string savings_config, savings_report;
    savings_cmd->add_option("--config", savings_config, "run config JSON")->required();
    savings_cmd->add_option("--report", savings_report, "savings report (.json/.csv)");

    // inspect
    auto* inspect_cmd = app.add_subcommand("inspect", "print a checkpoint manifest");
    std::string inspect_path;
    inspect_cmd->add_option("path", inspect_path, "checkpoint directory")->required();

    std::vector<std::string> reversed(args.rbegin(), args.rend());
    try {
        app.parse(reversed);
    } catch (const CLI::ParseError& e) {
        if (e.get_exit_code() == 0) {  // --help
            std::cout << app.help();
            return 0;
        }
        std::cerr << e.what() << "\n";
        return 1;
    }

    if (gradcheck_cmd->parsed()) {
        return run_gradcheck(probes, gradcheck_seed);
    }

    if (genbench_cmd->parsed()) {
        auto cfg = BenchConfig::from_json(load_json_file(genbench_config));
        auto bench = generate(cfg);
        export_benchmark(bench, genbench_out);
        std::cout << "benchmark written to " << genbench_out << "\n";
        return 0;
    }

    if (pretrain_cmd->parsed()) {
        auto cfg = parse_pretrain_config(load_json_file(pretrain_config));
        auto bench = cfg.bench.realize();
        PretrainSpec spec{cfg.model.dims, cfg.model.activation, cfg.train};
        auto result = pretrain(bench, spec);
        if (result.report.diverged) {
            std::cerr << "pretrain diverged\n";
            return 2;
        }
        save_base_checkpoint(result.model, pretrain_out);
        if (!pretrain_report.empty()) {
            write_report(pretrain_report, result.report.to_json(), result.report.to_csv());
        }
        std::cout << "pretrain final test mse " << result.report.final_test_loss
                  << ", checkpoint written to " << pretrain_out << "\n";
        return 0;
    }

    if (adapt_cmd->parsed()) {
        auto cfg = parse_adapt_config(load_json_file(adapt_config));
        auto bench = cfg.bench.realize();
        const double target = cfg.target_mse.value_or(default_target_mse(bench.config));
        auto result = adapt(adapt_base, bench, cfg.adapter, cfg.train, target);
        if (!adapt_out.empty()) save_adapter_checkpoint(result.model, adapt_out);
        if (!adapt_report.empty()) {
            write_report(adapt_report, result.report.to_json(), result.report.to_csv());
        }
        if (result.report.diverged) {
            std::cerr << "adapter training diverged\n";
            return 2;
        }
        std::cout << "adapt final test mse " << result.report.final_test_loss << "\n";
        return 0;
    }

    if (eval_cmd->parsed()) {
        BaseModel base = init_primary_from_checkpoint(eval_base);
        auto bench = load_benchmark(eval_bench);
        std::function<TensorPtr(const TensorPtr&)> forward;
        AdaptedModel adapted;
        const bool with_adapter = !eval_adapter.empty();
        if (with_adapter) {
            adapted = load_adapter_checkpoint(base, eval_adapter);
            forward = [&adapted](const TensorPtr& X) { return adapted.forward(X); };
        } else {
            forward = [&base](const TensorPtr& X) { return base.forward(X); };
        }
        json report{{"pretrain_test_mse", evaluate_mse(forward, bench.pretrain_test)},
                    {"downstream_test_mse", evaluate_mse(forward, bench.downstream_test)},
                    {"adapter", with_adapter}};
        if (!eval_report.empty()) write_report(eval_report, report, eval_csv(report));
        std::cout << report.dump(2) << "\n";
        return 0;
    }

    if (compare_cmd->parsed()) {
        auto cfg = parse_compare_config(load_json_file(compare_config));
        auto bench = cfg.bench.realize();
        auto table = compare(bench, cfg.options());
        if (!compare_report.empty()) {
            write_report(compare_report, table.to_json(), table.to_csv());
        }
        std::cout << table.to_csv();
        for (const auto& row : table.rows) {
            for (const auto& o : row.per_seed) {
                if (o.diverged) {
                    std::cerr << "row '" << row.name << "' seed " << o.seed << " diverged\n";
                    return 2;
                }
            }
        }
        return 0;
    }

    if (savings_cmd->parsed()) {
        auto cfg = parse_savings_config(load_json_file(savings_config));
        auto bench = cfg.bench.realize();
        auto report = scratch_vs_adapt(bench, cfg.options());
        if (!savings_report.empty()) {
            write_report(savings_report, report.to_json(), report.to_csv());
        }
        std::cout << report.to_csv();
        if (report.target_unreached) {
            std::cout << "target unreached: ratio reported as inf\n";
        } else {
            std::cout << "median parameter-step ratio " << *report.median_ratio << "\n";
        }
        return 0;
    }

    if (inspect_cmd->parsed()) {
        auto ckpt = read_checkpoint(inspect_path);
        std::cout << ckpt.manifest.dump(2) << "\n";
        return 0;
    }

    std::cerr << "no subcommand\n";
    return 1;
}

}  // namespace

int cli_main(const std::vector<std::string>& args) {
    try {
        return dispatch(args);
    } catch (const NonFiniteError& e) {
        std::cerr << "numerical failure: " << e.what() << "\n";
        return 2;
    } catch (const TapeError& e) {
        std::cerr << "numerical failure: " << e.what() << "\n";
        return 2;
    } catch (const Error& e) {
        std::cerr << "error: " << e.what() << "\n";
        return 1;
    } catch (const std::exception& e) {
        std::cerr << "error: " << e.what() << "\n";
        return 1;
    }
}

}  // namespace quadapt
