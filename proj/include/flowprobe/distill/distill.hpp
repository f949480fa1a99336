#pragma once

#include <vector>

#include "flowprobe/flow/sampler.hpp"

namespace flowprobe::distill {

// (noise, teacher endpoint) pair from a prompt-conditioned teacher run; the
// endpoint is the raw ODE state before clamping.
struct Coupling {
    nd::Tensor eps;
    nd::Tensor x0hat;
    int prompt_row = 0;
};

std::vector<Coupling> generate_couplings(const flow::FlowBackbone& teacher, int n_pairs, int steps,
                                         double guidance, uint64_t seed);

struct ReflowConfig {
    int n_pairs = 192;
    int epochs = 80;
    double lr = 1e-3;
    int batch = 32;
    int sample_steps = 28;
    double sample_guidance = 3.5;
    uint64_t seed = 0;
};

// Straight-line flow matching on teacher couplings (eps, x0hat). The new
// backbone starts from the teacher's weights, so its hidden-state geometry
// stays in the family the adapter was trained against.
flow::FlowBackbone reflow(const flow::FlowBackbone& teacher, const ReflowConfig& config,
                          flow::FlowTrainReport* report = nullptr);

struct DistillConfig {
    int target_steps = 4;
    int n_pairs = 192;
    int epochs = 60;
    double lr = 5e-4;
    int batch = 16;
    int teacher_steps = 28;
    double teacher_guidance = 3.5;
    uint64_t seed = 0;
};

// Endpoint distillation: unrolls the student for target_steps at guidance 0
// and regresses its endpoint onto the teacher's many-step endpoint from the
// same noise and prompt. The student starts from the reflowed weights and is
// marked distilled, with provenance metadata (teacher_sha, reflow_sha,
// target_steps).
flow::FlowBackbone distill_endpoint(const flow::FlowBackbone& reflowed,
                                    const flow::FlowBackbone& teacher, const DistillConfig& config,
                                    flow::FlowTrainReport* report = nullptr);

}  // namespace flowprobe::distill
