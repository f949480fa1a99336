#pragma once

#include <optional>
#include <string>
#include <vector>

#include "flowprobe/flow/sampler.hpp"

namespace flowprobe::probes {

// Identity lift at one step count: similarity at full adapter scale minus
// similarity at the weak-adapter scale.
double adapter_lift(double idsim_full, double idsim_weak);

struct StreamRatioResult {
    std::vector<double> per_entry;  // ||s1|| / (||s0|| + eps) per (step, block)
    double mean = 0.0;
};

StreamRatioResult stream_ratio(const std::vector<flow::StreamEntry>& capture,
                               double eps_denom = 1e-8);

// Variance of the 4-neighbour Laplacian over the interior 30x30 region,
// computed on pixels scaled to [0,255].
double sharpness(const faces::FaceImage& image);

// Population standard deviation of pixels scaled to [0,255].
double contrast(const faces::FaceImage& image);

struct EarlyWindowResult {
    double t_star = 0.0;            // smallest step count reaching theta * peak
    double attained_fraction = 0.0; // value at t_star divided by the peak
};

// Smallest T on a (strictly increasing in T) curve whose value reaches
// theta times the curve maximum; ties resolve to the smallest T.
EarlyWindowResult early_window(const std::vector<std::pair<double, double>>& curve,
                               double theta = 0.95);

// Spearman rank correlation (average ranks on ties).
double spearman(const std::vector<double>& x, const std::vector<double>& y);

// One row of the mechanistic step sweep.
struct SweepRecord {
    int steps = 0;
    double idsim_full = 0.0;   // mean similarity at alpha = 1
    double idsim_weak = 0.0;   // mean similarity at alpha = 0.25
    double lift = 0.0;         // idsim_full - idsim_weak
    double stream_ratio = 0.0; // mean over steps, blocks, subjects at alpha = 1
    double det_conf = 0.0;
    double sharpness = 0.0;
    double contrast = 0.0;
    double lpips_like = 0.0;   // mean perceptual distance to the reference render
    double latency_s = 0.0;    // median wall-clock per image
    int n_subjects = 0;
};

// Minimal row view the qualitative pattern predicates need.
struct PatternRow {
    double steps = 0.0;
    double idsim_full = 0.0;
    double stream_ratio = 0.0;
    double sharpness = 0.0;
    double idsim_weak = 0.0;
    bool has_weak = false;
};

PatternRow to_pattern_row(const SweepRecord& r);

struct PatternThresholds {
    double theta = 0.95;        // early-window threshold
    double end_ratio = 0.8;     // (a): value at max T over peak
    double early_frac = 0.5;    // (a): "early" = before this fraction of max T
    double sharp_rho = 0.8;     // (b): min Spearman(T, sharpness)
    double stream_rho = -0.5;   // (c): max Spearman(T, stream ratio)
    double weak_ratio = 0.3;    // (d): weak similarity cap as fraction of peak
};

struct PredicateResult {
    std::string name;
    bool pass = false;
    double measured = 0.0;
    std::string detail;
};

struct PatternReport {
    std::vector<PredicateResult> predicates;
    bool all_pass = false;
};

// Qualitative trend predicates over a step sweep:
//  (a) similarity at the largest T holds >= end_ratio of the peak, and the
//      peak (or the early window) sits before early_frac of the range;
//  (b) sharpness rank-correlates positively with T;
//  (c) stream ratio rank-correlates negatively with T;
//  (d) weak-adapter similarity stays below weak_ratio of the peak.
PatternReport pattern_check(const std::vector<PatternRow>& rows, const PatternThresholds& thresholds);

// Checked-in reference sweep pattern (CSV with optional empty cells).
struct ReferenceRow {
    double steps = 0.0;
    double idsim_full = 0.0;
    std::optional<double> idsim_weak;
    std::optional<double> lift;
    double stream_ratio = 0.0;
    double det_conf = 0.0;
    double sharpness = 0.0;
};

struct ReferencePattern {
    std::vector<ReferenceRow> rows;
    PatternThresholds thresholds;

    std::vector<PatternRow> pattern_rows() const;
};

ReferencePattern load_reference_pattern(const std::string& csv_path);

struct StepSweepConfig {
    std::vector<int> steps{1, 2, 4, 6, 8, 12, 16, 20, 24, 28};
    std::vector<double> alphas{1.0, 0.25, 0.0};
    int n_subjects = 10;
    faces::PromptTransform prompt{faces::TransformKind::Stylized, 0.6};
    double guidance = 3.5;
    uint64_t seed = 0;
    int threads = 1;
};

struct StepSweepResult {
    std::vector<SweepRecord> records;
    // Mean similarity for every alpha in the config (keyed by alpha order).
    std::vector<std::vector<double>> idsim_by_alpha;  // [alpha][record]
    bool alpha0_ratio_zero = true;   // stream ratios identically zero at alpha = 0
    bool paired_noise_ok = true;     // identical eps per identity across T and alpha
};

// Paired-noise step sweep: per identity the initial noise is fixed across
// all step counts and adapter scales. Probes other than similarity are
// measured on the full-scale (alpha = 1) arm.
StepSweepResult run_step_sweep(const flow::FlowBackbone& backbone,
                               const adapter::AdapterStack& adapter_stack,
                               const enc::EncoderModel& encoder, const StepSweepConfig& config);

}  // namespace flowprobe::probes
