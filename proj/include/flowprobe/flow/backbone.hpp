#pragma once

#include <map>
#include <string>
#include <vector>

#include "flowprobe/faces/faces.hpp"
#include "flowprobe/nd/tape.hpp"

namespace flowprobe::flow {

constexpr int kStateDim = faces::kImagePixels;  // pixel-space flow, no latent
constexpr int kBlocks = 4;
constexpr int kTimeDim = 16;
constexpr int kPromptDim = 16;
constexpr int kNullPromptRow = 3;  // learned null embedding for the unconditional branch

// Sinusoidal time embedding on t in [0,1], 8 sin/cos pairs with geometric
// frequencies.
nd::Tensor time_embedding(double t);                               // [1 x 16]
nd::Tensor time_embedding_rows(const std::vector<double>& ts);     // [B x 16]

int prompt_row(faces::TransformKind kind);

// x_t = (1-t) x0 + t eps; t=1 is pure noise, t=0 is data.
nd::Tensor interpolate(const nd::Tensor& x0, const nd::Tensor& eps, double t);
// v* = x0 - eps.
nd::Tensor velocity_target(const nd::Tensor& x0, const nd::Tensor& eps);

// Per-block conditioning residual source (the identity adapter implements
// this). Returns an invalid Value when there is nothing to inject.
struct ConditioningHook {
    virtual ~ConditioningHook() = default;
    virtual nd::Value residual(nd::Tape& tape, int block, const nd::Tensor& t_emb) = 0;
};

// Per-block stream norms for a single-sample forward: s0 is the primary-path
// block output, s1 the conditioning residual added at that block.
struct BlockStreams {
    double s0_norm = 0.0;
    double s1_norm = 0.0;
};

// Velocity-prediction backbone: 4 residual MLP blocks over the flattened
// image, each conditioned on the time embedding and a learned prompt
// embedding, with pre/post per-channel layer scales, plus a linear output
// head. Teacher and student share this architecture; that is what makes the
// frozen adapter portable between them.
class FlowBackbone {
public:
    static FlowBackbone random_init(uint64_t seed, int hidden = 96);

    // Forward a batch on the given tape. x is a tape node [B x 1024]; t_emb
    // [B x 16]; one prompt-table row index per batch row. capture (single
    // sample only) receives per-block stream norms.
    nd::Value forward(nd::Tape& tape, nd::Value x, const nd::Tensor& t_emb,
                      const std::vector<int>& prompt_rows, bool trainable,
                      ConditioningHook* hook = nullptr, std::vector<BlockStreams>* capture = nullptr);

    int blocks() const { return kBlocks; }
    int hidden() const { return hidden_; }

    bool distilled() const { return distilled_; }
    void set_distilled(bool v) { distilled_ = v; }
    double default_guidance() const { return distilled_ ? 0.0 : 3.5; }
    int default_steps() const { return distilled_ ? 4 : 28; }

    void freeze() { frozen_ = true; }
    bool frozen() const { return frozen_; }

    nd::ParamSet& params() { return params_; }
    const nd::ParamSet& params() const { return params_; }
    std::string checksum() const;

    std::map<std::string, std::string>& meta() { return meta_; }
    const std::map<std::string, std::string>& meta() const { return meta_; }

    void save(const std::string& path) const;
    static FlowBackbone load(const std::string& path);

    FlowBackbone clone_params() const;  // fresh unfrozen copy of weights and meta

private:
    nd::ParamSet params_;
    std::map<std::string, std::string> meta_;
    int hidden_ = 96;
    bool distilled_ = false;
    bool frozen_ = false;
};

struct FlowTrainConfig {
    int epochs = 160;
    double lr = 2e-3;
    int batch = 32;
    double prompt_dropout = 0.1;
    int hidden = 96;
    uint64_t seed = 0;
};

struct FlowTrainReport {
    double initial_loss = 0.0;
    double final_loss = 0.0;
};

// Flow-matching regression of the velocity field on a rendered dataset,
// conditioned on the prompt transform (with dropout to the null row for the
// guidance branch) and unconditional on identity. Returns an unfrozen
// backbone; callers freeze it once they are done training.
FlowBackbone train_teacher(const std::vector<faces::FaceImage>& dataset,
                           const FlowTrainConfig& config, FlowTrainReport* report = nullptr);

}  // namespace flowprobe::flow
