#include "flowprobe/flow/sampler.hpp"

#include <chrono>
#include <cstdio>
#include <fstream>

#include "flowprobe/common/error.hpp"
#include "flowprobe/common/rng.hpp"

namespace flowprobe::flow {

using nd::Tape;
using nd::Tensor;
using nd::Value;

nd::Tensor sample_noise(uint64_t seed) {
    Rng rng(seed);
    Tensor eps({kStateDim});
    for (int i = 0; i < kStateDim; ++i) eps[i] = rng.normal();
    return eps;
}

namespace {

// Adapter residual provider for single-sample forwards.
struct SampleHook final : ConditioningHook {
    const adapter::AdapterStack* stack = nullptr;
    Tensor e_rows;  // [1 x 8]
    double alpha = 1.0;

    Value residual(Tape& tape, int block, const Tensor& t_emb) override {
        if (stack == nullptr || alpha == 0.0) return {};
        Value r = stack->head_forward(tape, block, e_rows, t_emb);
        return nd::scale(r, alpha);
    }
};

Tensor eval_velocity(const FlowBackbone& backbone, const Tensor& x, double t, int prompt_row_idx,
                     SampleHook* hook, std::vector<BlockStreams>* capture) {
    Tensor x_row({1, kStateDim});
    for (int i = 0; i < kStateDim; ++i) x_row[i] = x[i];
    const Tensor t_emb = time_embedding(t);

    Tape tape;
    FlowBackbone& b = const_cast<FlowBackbone&>(backbone);  // non-trainable forward is read-only
    Value v = b.forward(tape, tape.constant_ref(x_row), t_emb, {prompt_row_idx}, false,
                        (hook && hook->stack && hook->alpha != 0.0) ? hook : nullptr, capture);
    Tensor out({kStateDim});
    for (int i = 0; i < kStateDim; ++i) out[i] = v.val()[i];
    return out;
}

}  // namespace

Trajectory integrate_field(const VelocityField& field, const Tensor& eps, int steps,
                           bool record_states) {
    if (steps < 1) throw ContractError("sampling requires steps >= 1");
    if (eps.numel() != kStateDim) throw ShapeError("integrate_field: noise must have 1024 elements");

    Trajectory traj;
    traj.initial_noise = eps;
    Tensor x = eps;
    if (record_states) traj.states.push_back(x);
    for (int k = 0; k < steps; ++k) {
        const double t_cur = 1.0 - static_cast<double>(k) / steps;
        const double t_next = 1.0 - static_cast<double>(k + 1) / steps;
        const double dt = t_cur - t_next;
        const Tensor v = field(x, t_cur);
        if (v.numel() != kStateDim) throw ShapeError("velocity field returned wrong size");
        for (int i = 0; i < kStateDim; ++i) x[i] += dt * v[i];
        x.ensure_finite("euler step");
        if (record_states) traj.states.push_back(x);
    }
    if (!record_states) traj.states.push_back(x);
    return traj;
}

std::pair<faces::FaceImage, Trajectory> sample(const FlowBackbone& backbone,
                                               const SampleConfig& config) {
    if (config.steps < 1) throw ContractError("sample: steps must be >= 1");
    if (config.guidance < 0.0) throw ContractError("sample: guidance must be nonnegative");
    if (config.adapter != nullptr) {
        if (config.adapter->head_count() != backbone.blocks())
            throw CompatError("adapter head count does not match backbone block count");
        if (config.e_id == nullptr)
            throw ContractError("sample: adapter conditioning requires an identity embedding");
        if (config.adapter_scale < 0.0) throw ContractError("sample: adapter scale must be >= 0");
    }

    SampleHook hook;
    if (config.adapter != nullptr) {
        hook.stack = config.adapter;
        hook.alpha = config.adapter_scale;
        hook.e_rows = Tensor({1, enc::kEmbedDim});
        for (int i = 0; i < enc::kEmbedDim; ++i) hook.e_rows[i] = config.e_id->vector[i];
    }

    const int cond_row = prompt_row(config.prompt.kind);
    const auto t0 = std::chrono::steady_clock::now();

    Trajectory traj;
    std::vector<BlockStreams>* capture_ptr = nullptr;
    std::vector<BlockStreams> capture;

    const Tensor eps = sample_noise(config.seed);
    traj.initial_noise = eps;
    Tensor x = eps;
    if (config.record_states) traj.states.push_back(x);

    for (int k = 0; k < config.steps; ++k) {
        const double t_cur = 1.0 - static_cast<double>(k) / config.steps;
        const double t_next = 1.0 - static_cast<double>(k + 1) / config.steps;
        const double dt = t_cur - t_next;

        capture.clear();
        capture_ptr = config.capture_streams ? &capture : nullptr;

        // Stream norms are recorded from the conditional branch. The
        // unconditional branch drops the prompt only; identity residuals
        // ride both branches, so guidance does not amplify them.
        const Tensor v_cond = eval_velocity(backbone, x, t_cur, cond_row, &hook, capture_ptr);
        Tensor v = v_cond;
        if (config.guidance > 0.0) {
            const Tensor v_unc = eval_velocity(backbone, x, t_cur, kNullPromptRow, &hook, nullptr);
            for (int i = 0; i < kStateDim; ++i)
                v[i] = v_unc[i] + config.guidance * (v_cond[i] - v_unc[i]);
        }

        if (config.capture_streams) {
            for (int b = 0; b < backbone.blocks(); ++b) {
                StreamEntry e;
                e.step = k;
                e.t = t_cur;
                e.block = b;
                e.s0_norm = capture[static_cast<size_t>(b)].s0_norm;
                e.s1_norm = capture[static_cast<size_t>(b)].s1_norm;
                traj.streams.push_back(e);
            }
        }

        for (int i = 0; i < kStateDim; ++i) x[i] += dt * v[i];
        x.ensure_finite("euler step");
        if (config.record_states) traj.states.push_back(x);
    }
    if (!config.record_states) traj.states.push_back(x);

    traj.wall_seconds = std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();

    faces::FaceImage img =
        faces::FaceImage::from_flat(x, config.conditioned_identity, config.prompt);
    return {std::move(img), std::move(traj)};
}

void write_trajectory_csv(const std::string& path, const Trajectory& traj) {
    std::ofstream f(path, std::ios::trunc);
    if (!f) throw IoError("cannot open for write: " + path);
    f << "step,t,block,s0_norm,s1_norm\n";
    char line[160];
    for (const StreamEntry& e : traj.streams) {
        std::snprintf(line, sizeof(line), "%d,%.9f,%d,%.9f,%.9f\n", e.step, e.t, e.block, e.s0_norm,
                      e.s1_norm);
        f << line;
    }
}

}  // namespace flowprobe::flow
