#pragma once

#include <iosfwd>

#include "flowprobe/harness/pipeline.hpp"
#include "flowprobe/probes/probes.hpp"

namespace flowprobe::harness {

struct ArmSummary {
    std::string arm;
    int steps = 0;
    double guidance = 0.0;
    int n = 0;
    double idsim_mean = 0.0;
    double lpips_mean = 0.0;
    double latency_median_s = 0.0;
};

struct PromptBreakdownRow {
    faces::TransformKind kind;
    double baseline_idsim = 0.0;
    double ours_idsim = 0.0;
};

// Backbone-replacement comparison: many-step guided teacher vs few-step
// unguided student with the same frozen adapter, plus a small truncated
// teacher diagnostic arm.
struct ReplacementReport {
    ArmSummary baseline;   // teacher arm
    ArmSummary ours;       // student arm
    ArmSummary diagnostic; // teacher at the student step count, plain prompt subset
    std::vector<PromptBreakdownRow> per_prompt;
    double idsim_delta = 0.0;  // ours - baseline
    double lpips_delta = 0.0;
    double speedup = 0.0;      // baseline latency / ours latency
};

ReplacementReport cmd_replacement(const ExperimentConfig& c, std::ostream& log);

enum class MechSweepOutcome : int {
    Ok = 0,
    ArtifactBug = 2,        // an internal invariant failed; the data is not valid
    PhenomenonAbsent = 3,   // data valid, qualitative predicates not met
};

struct MechSweepResult {
    probes::StepSweepResult sweep;
    probes::PatternReport pattern;
    MechSweepOutcome outcome = MechSweepOutcome::Ok;
    std::string outcome_detail;
};

MechSweepResult cmd_mech_sweep(const ExperimentConfig& c, const std::string& reference_csv,
                               bool dump_traj, std::ostream& log);

struct AblationResult {
    // long-format cells: one row per (arm, step)
    struct Cell {
        std::string arm;  // prompt name or alpha value
        int steps = 0;
        double idsim = 0.0;
    };
    std::vector<Cell> prompt_grid;
    std::vector<Cell> alpha_grid;
    bool stylized_below_plain = false;  // soft expectation, reported not asserted
};

AblationResult cmd_ablations(const ExperimentConfig& c, std::ostream& log);

void cmd_report(const ExperimentConfig& c, std::ostream& log);

}  // namespace flowprobe::harness
