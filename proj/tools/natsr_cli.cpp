// Command-line front end: synth, run, bound-check, ablate.

#include "natsr/error.hpp"
#include "natsr/experiments.hpp"

#include <CLI11.hpp>

#include <fstream>
#include <iostream>

using namespace natsr;

int main(int argc, char** argv) {
    CLI::App app{"Online forecasting with score-driven natural-gradient replay"};
    app.require_subcommand(1);

    SynthOptions synth;
    std::string synth_out;
    auto* synth_cmd = app.add_subcommand("synth", "Generate a synthetic stream as CSV");
    synth_cmd->add_option("--kind", synth.kind, "outlier_sine | regime | recurring")->capture_default_str();
    synth_cmd->add_option("--length", synth.length)->capture_default_str();
    synth_cmd->add_option("--period", synth.period, "period of the first regime")->capture_default_str();
    synth_cmd->add_option("--amplitude", synth.amplitude)->capture_default_str();
    synth_cmd->add_option("--noise-sd", synth.noise_sd)->capture_default_str();
    synth_cmd->add_option("--outlier-prob", synth.outlier_prob)->capture_default_str();
    synth_cmd->add_option("--outlier-magnitude", synth.outlier_magnitude)->capture_default_str();
    synth_cmd->add_option("--amplitude-b", synth.amplitude_b, "amplitude of the second regime")->capture_default_str();
    synth_cmd->add_option("--frequency-b", synth.frequency_b, "cycles per step of the second regime")
        ->capture_default_str();
    synth_cmd->add_option("--cycles", synth.cycles, "A/B pairs for the recurring kind")->capture_default_str();
    synth_cmd->add_option("--seed", synth.seed)->capture_default_str();
    synth_cmd->add_option("--out", synth_out, "output CSV path")->required();

    RunOptions run;
    std::string run_variant;
    std::uint64_t run_seed = 0;
    std::vector<std::uint64_t> run_seeds;
    auto* run_cmd = app.add_subcommand("run", "Warm up and run the online loop");
    run_cmd->add_option("--config", run.config)->required();
    run_cmd->add_option("--data", run.data)->required();
    run_cmd->add_option("--out", run.out_dir)->required();
    auto* seed_opt = run_cmd->add_option("--seed", run_seed);
    run_cmd->add_option("--seeds", run_seeds, "several seeds, run concurrently")->excludes(seed_opt);
    run_cmd->add_option("--variant", run_variant, "natsr_stable | natsr_fast | ogd | er");

    BoundCheckOptions bound;
    auto* bound_cmd = app.add_subcommand("bound-check", "Randomized check of the step-norm bound");
    bound_cmd->add_option("--trials", bound.trials)->capture_default_str();
    bound_cmd->add_option("--max-layers", bound.max_layers)->capture_default_str();
    bound_cmd->add_option("--max-width", bound.max_width)->capture_default_str();
    bound_cmd->add_option("--seed", bound.seed)->capture_default_str();

    RunOptions ablate;
    std::vector<std::uint64_t> ablate_seeds{0, 1, 2};
    auto* ablate_cmd = app.add_subcommand("ablate", "Dynamic-scale and replay ablation table");
    ablate_cmd->add_option("--config", ablate.config)->required();
    ablate_cmd->add_option("--data", ablate.data)->required();
    ablate_cmd->add_option("--out", ablate.out_dir)->required();
    ablate_cmd->add_option("--seeds", ablate_seeds)->capture_default_str();

    try {
        app.parse(argc, argv);
    } catch (const CLI::ParseError& e) {
        const int code = app.exit(e);
        return code == 0 ? kExitOk : kExitConfig;
    }

    try {
        if (*synth_cmd) {
            cmd_synth(synth, synth_out);
            std::cout << "wrote " << synth_out << "\n";
        } else if (*run_cmd) {
            run.seeds = run_seeds.empty() ? std::vector<std::uint64_t>{run_seed} : run_seeds;
            if (!run_variant.empty()) {
                run.variant = parse_variant(run_variant);
            }
            for (const auto& s : cmd_run(run)) {
                std::cout << summary_csv_row(s) << "\n";
            }
        } else if (*bound_cmd) {
            const BoundCheckReport rep = cmd_bound_check(bound);
            std::cout << format_bound_report(rep);
            if (rep.violations > 0) {
                return kExitNumeric;
            }
        } else if (*ablate_cmd) {
            ablate.seeds = ablate_seeds;
            for (const auto& r : cmd_ablate(ablate)) {
                std::cout << r.name << " seed=" << r.seed << " mase=" << r.mase << " delta=" << r.relative_delta
                          << "\n";
            }
        }
    } catch (const std::exception& e) {
        std::cerr << "error: " << e.what() << "\n";
        return exit_code_for(e);
    }
    return kExitOk;
}
