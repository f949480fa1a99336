#pragma once

#include <functional>
#include <optional>
#include <string>
#include <vector>

#include "flowprobe/adapter/adapter.hpp"
#include "flowprobe/flow/backbone.hpp"

namespace flowprobe::flow {

struct StreamEntry {
    int step = 0;     // 0-based sampler step
    double t = 0.0;   // time at which the velocity was evaluated
    int block = 0;
    double s0_norm = 0.0;
    double s1_norm = 0.0;
};

struct Trajectory {
    std::vector<nd::Tensor> states;    // T+1 unclamped states, x(t=1) first
    std::vector<StreamEntry> streams;  // T x blocks entries when captured
    nd::Tensor initial_noise;          // [1024]
    double wall_seconds = 0.0;
};

struct SampleConfig {
    int steps = 28;
    double guidance = 3.5;
    faces::PromptTransform prompt;
    const adapter::AdapterStack* adapter = nullptr;
    double adapter_scale = 1.0;
    const enc::IdentityEmbedding* e_id = nullptr;  // required when adapter is set
    uint64_t seed = 0;
    bool capture_streams = false;
    bool record_states = true;
    int conditioned_identity = -1;  // carried onto the output image
};

// Euler integration of dx/dt from t=1 (noise) to t=0 in uniform steps:
// x <- x + dt * v. Guided velocity v = v_uncond + g (v_cond - v_uncond) when
// g > 0 (the prompt is swapped for the learned null embedding on the
// unconditional branch); plain conditional velocity when g = 0. Adapter
// residuals are injected at every block on both branches. Pixels are clamped
// only when forming the final image; trajectory states stay raw.
std::pair<faces::FaceImage, Trajectory> sample(const FlowBackbone& backbone,
                                               const SampleConfig& config);

// The same sampler over an arbitrary velocity field (for analytic checks).
using VelocityField = std::function<nd::Tensor(const nd::Tensor& x, double t)>;
Trajectory integrate_field(const VelocityField& field, const nd::Tensor& eps, int steps,
                           bool record_states);

// Initial noise for a sample seed (standard normal, 1024 values).
nd::Tensor sample_noise(uint64_t seed);

// Trajectory dump: step,t,block,s0_norm,s1_norm rows.
void write_trajectory_csv(const std::string& path, const Trajectory& traj);

}  // namespace flowprobe::flow
