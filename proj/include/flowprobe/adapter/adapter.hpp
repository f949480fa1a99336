#pragma once

#include <string>
#include <vector>

#include "flowprobe/encoder/encoder.hpp"
#include "flowprobe/flow/backbone.hpp"

namespace flowprobe::adapter {

constexpr int kHeadInput = enc::kEmbedDim + flow::kTimeDim;  // 8 + 16

// Frozen residual identity adapter: one small MLP head per backbone block
// mapping (identity embedding, time embedding) to a 1024-dim residual. The
// global scale alpha is an inference-time knob, never trained.
class AdapterStack {
public:
    static AdapterStack random_init(uint64_t seed, int hidden = 48);

    int head_count() const { return flow::kBlocks; }
    int hidden() const { return hidden_; }

    // Batched head forward on a tape; e_id_rows [B x 8], t_emb [B x 16].
    nd::Value head_forward(nd::Tape& tape, int block, const nd::Tensor& e_id_rows,
                           const nd::Tensor& t_emb) const;
    nd::Value head_forward_train(nd::Tape& tape, int block, const nd::Tensor& e_id_rows,
                                 const nd::Tensor& t_emb);

    // Single-vector head evaluation: the residual before alpha scaling.
    nd::Tensor head_eval(int block, const enc::IdentityEmbedding& e_id, double t) const;

    void freeze() { frozen_ = true; }
    bool frozen() const { return frozen_; }

    const std::string& trained_against() const { return trained_against_; }
    void set_trained_against(std::string sha) { trained_against_ = std::move(sha); }

    nd::ParamSet& params() { return params_; }
    const nd::ParamSet& params() const { return params_; }
    std::string checksum() const;

    void save(const std::string& path) const;
    static AdapterStack load(const std::string& path);

private:
    nd::ParamSet params_;
    std::string trained_against_;
    int hidden_ = 48;
    bool frozen_ = false;
};

// h + alpha * head_block(e_id, t). alpha = 0 returns h bitwise unchanged;
// the residual is exactly linear in alpha.
nd::Tensor inject(const AdapterStack& adapter, int block, const nd::Tensor& h,
                  const enc::IdentityEmbedding& e_id, double t, double alpha);

struct AdapterTrainConfig {
    int epochs = 120;
    double lr = 2e-3;
    int batch = 32;
    int hidden = 64;
    double prompt_dropout = 0.1;
    uint64_t seed = 0;
};

struct AdapterTrainReport {
    double initial_loss = 0.0;
    double final_loss = 0.0;
};

// Canonical reference render for an identity: plain transform, strength 0,
// noise seed 0. Its embedding is the e_id the adapter conditions on.
faces::FaceImage reference_render(int identity_id);

// Flow-matching training of the adapter against a frozen teacher and frozen
// encoder; only adapter parameters receive gradients. Returns the frozen
// stack with trained_against set to the teacher checksum.
AdapterStack train_adapter(const flow::FlowBackbone& teacher, const enc::EncoderModel& encoder,
                           const std::vector<faces::FaceImage>& dataset,
                           const AdapterTrainConfig& config, AdapterTrainReport* report = nullptr);

// Training-free binding of a frozen adapter to a (typically distilled)
// backbone. No parameter changes of any kind.
struct BoundAdapter {
    const AdapterStack* stack = nullptr;
    std::string backbone_sha;
    bool cross_backbone = false;
};

BoundAdapter transfer(const AdapterStack& adapter, const flow::FlowBackbone& student);

}  // namespace flowprobe::adapter
