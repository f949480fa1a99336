#pragma once

#include <cstdint>
#include <string>
#include <vector>

namespace flowprobe::harness {

// Full experiment configuration. A config plus the code version determines
// every output byte (wall-clock timing fields aside).
struct ExperimentConfig {
    uint64_t master_seed = 0;
    std::string out_dir = "out";
    int threads = 0;  // 0 -> FLOWPROBE_THREADS env var, then hardware count

    // dataset
    int n_identities = 28;
    int train_samples_per = 4;    // per identity per transform, flow/adapter training
    int encoder_samples_per = 6;  // encoder training
    int heldout_samples_per = 2;  // encoder accuracy gate
    double background_strength = 0.5;
    double stylized_strength = 0.9;

    // encoder
    int encoder_epochs = 120;
    double encoder_lr = 3e-3;
    int encoder_batch = 32;
    double encoder_target_acc = 0.95;

    // teacher
    int teacher_epochs = 500;
    double teacher_lr = 2e-3;
    int teacher_batch = 32;
    int teacher_hidden = 96;
    double prompt_dropout = 0.1;

    // adapter
    int adapter_epochs = 400;
    double adapter_lr = 2e-3;
    int adapter_batch = 32;
    int adapter_hidden = 64;

    // reflow
    int reflow_pairs = 192;
    int reflow_epochs = 240;
    double reflow_lr = 1e-3;
    int reflow_batch = 32;

    // distill
    int distill_pairs = 192;
    int distill_epochs = 120;
    double distill_lr = 5e-4;
    int distill_batch = 16;
    int target_steps = 4;

    // replacement experiment arms
    int teacher_steps = 28;
    double teacher_guidance = 3.5;
    int student_steps = 4;
    double student_guidance = 0.0;
    int diagnostic_subjects = 10;
    double eval_id_scale = 1.0;

    // mechanistic sweep
    std::vector<int> sweep_steps{1, 2, 4, 6, 8, 12, 16, 20, 24, 28};
    std::vector<double> sweep_alphas{1.0, 0.25, 0.0};
    int sweep_subjects = 10;
    double early_window_theta = 0.95;

    // ablations
    std::vector<double> ablation_alphas{0.25, 0.5, 1.0, 1.5, 2.0};

    static ExperimentConfig load(const std::string& path);
    void save(const std::string& path) const;

    // Stage-scoped config hashes for build idempotence.
    std::string dataset_hash() const;
    std::string encoder_hash() const;
    std::string teacher_hash() const;
    std::string adapter_hash() const;
    std::string reflow_hash() const;
    std::string student_hash() const;

    int resolve_threads() const;
};

}  // namespace flowprobe::harness
