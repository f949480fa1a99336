// flowprobe: build the toy generation stack and run its experiments.
//
// Subcommands:
//   build        dataset -> encoder -> teacher -> adapter -> reflow -> student
//   replacement  many-step teacher vs few-step student with the frozen adapter
//   mech-sweep   step sweep with identity/visual/stream probes
//   ablations    prompt-complexity and conditioning-scale grids
//   report       collect CSV outputs into report.md
//
// Exit codes: 0 success, 1 error, 2 internal invariant violation,
// 3 phenomenon absent (valid sweep, qualitative predicates not met).

#include <iostream>

#include "CLI11.hpp"
#include "flowprobe/harness/commands.hpp"

using namespace flowprobe;

namespace {

struct CliOverrides {
    std::string config_path;
    std::string out_dir;
    std::string steps;
    int64_t seed = -1;
    double id_scale = -1.0;
    int threads = -1;
};

harness::ExperimentConfig resolve_config(const CliOverrides& o) {
    harness::ExperimentConfig c;
    if (!o.config_path.empty()) c = harness::ExperimentConfig::load(o.config_path);
    if (o.seed >= 0) c.master_seed = static_cast<uint64_t>(o.seed);
    if (!o.out_dir.empty()) c.out_dir = o.out_dir;
    if (o.id_scale >= 0.0) c.eval_id_scale = o.id_scale;
    if (o.threads >= 0) c.threads = o.threads;
    if (!o.steps.empty()) {
        std::vector<int> steps;
        std::stringstream ss(o.steps);
        std::string item;
        while (std::getline(ss, item, ',')) steps.push_back(std::stoi(item));
        if (steps.empty()) throw ContractError("--steps: empty list");
        c.sweep_steps = steps;
    }
    return c;
}

}  // namespace

int main(int argc, char** argv) {
    CLI::App app{"flowprobe: few-step backbone replacement lab"};
    app.require_subcommand(1);
    app.fallthrough();

    CliOverrides o;
    app.add_option("--config", o.config_path, "key = value config file");
    app.add_option("--seed", o.seed, "master seed override");
    app.add_option("--out-dir", o.out_dir, "output directory override");
    app.add_option("--id-scale", o.id_scale, "adapter scale for evaluation arms");
    app.add_option("--threads", o.threads, "worker threads (0 = auto, FLOWPROBE_THREADS fallback)");

    auto* cmd_build = app.add_subcommand("build", "train and checkpoint all artifacts");
    auto* cmd_repl = app.add_subcommand("replacement", "backbone replacement comparison");
    auto* cmd_sweep = app.add_subcommand("mech-sweep", "mechanistic step sweep");
    std::string reference_csv = "data/reference_sweep_pattern.csv";
    bool dump_traj = false;
    cmd_sweep->add_option("--reference", reference_csv, "reference sweep pattern CSV for overlays");
    cmd_sweep->add_flag("--dump-traj", dump_traj, "write one full trajectory dump");
    cmd_sweep->add_option("--steps", o.steps, "comma-separated step counts");
    auto* cmd_abl = app.add_subcommand("ablations", "prompt and scale ablation grids");
    auto* cmd_rep = app.add_subcommand("report", "aggregate outputs into report.md");

    CLI11_PARSE(app, argc, argv);

    try {
        const harness::ExperimentConfig config = resolve_config(o);
        if (cmd_build->parsed()) {
            const auto result = harness::build_all(config, std::cout);
            std::cout << "build complete: " << result.built << " built, " << result.skipped
                      << " skipped\n";
        } else if (cmd_repl->parsed()) {
            harness::cmd_replacement(config, std::cout);
        } else if (cmd_sweep->parsed()) {
            const auto result = harness::cmd_mech_sweep(config, reference_csv, dump_traj, std::cout);
            if (result.outcome != harness::MechSweepOutcome::Ok) {
                std::cerr << (result.outcome == harness::MechSweepOutcome::ArtifactBug
                                  ? "invariant violation: "
                                  : "phenomenon absent: ")
                          << result.outcome_detail << "\n";
                return static_cast<int>(result.outcome);
            }
        } else if (cmd_abl->parsed()) {
            harness::cmd_ablations(config, std::cout);
        } else if (cmd_rep->parsed()) {
            harness::cmd_report(config, std::cout);
        }
    } catch (const ContractError& e) {
        std::cerr << e.what() << "\n";
        return 2;
    } catch (const std::exception& e) {
        std::cerr << e.what() << "\n";
        return 1;
    }
    return 0;
}
