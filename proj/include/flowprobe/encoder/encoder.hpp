#pragma once

#include <string>
#include <vector>

#include "flowprobe/faces/faces.hpp"
#include "flowprobe/nd/tape.hpp"

namespace flowprobe::enc {

// Unit-norm 8-dim identity embedding.
struct IdentityEmbedding {
    nd::Tensor vector;  // [8], L2 norm 1 +- 1e-9

    double dot(const IdentityEmbedding& o) const {
        double s = 0.0;
        for (int i = 0; i < 8; ++i) s += vector[i] * o.vector[i];
        return s;
    }
};

constexpr int kEmbedDim = 8;
constexpr int kHidden1 = 128;
constexpr int kHidden2 = 64;

struct EncoderTrainConfig {
    int epochs = 60;
    double lr = 3e-3;
    int batch = 32;
    double target_accuracy = 0.95;
    uint64_t seed = 0;
};

// Identity embedding network: 1024 -> 128 -> 64 -> 8 MLP plus a linear
// classifier head over identities. Trained once on clean renders, then
// frozen; every probe in this project measures through the frozen model.
class EncoderModel {
public:
    static EncoderModel random_init(int n_identities, uint64_t seed);

    struct ForwardValues {
        nd::Value h1, h2, embedding, logits;
    };
    ForwardValues forward(nd::Tape& tape, const nd::Tensor& x_batch, bool trainable);

    void freeze();
    bool frozen() const { return frozen_; }
    int n_identities() const { return n_identities_; }

    nd::ParamSet& params() { return params_; }
    const nd::ParamSet& params() const { return params_; }
    // Content checksum of the parameter set (recomputed on demand).
    std::string checksum() const;

    void save(const std::string& path) const;
    static EncoderModel load(const std::string& path);

private:
    nd::ParamSet params_;
    int n_identities_ = 0;
    bool frozen_ = false;
};

struct EncoderTrainReport {
    double final_heldout_accuracy = 0.0;
    double final_loss = 0.0;
    int epochs_run = 0;
};

// Cross-entropy identity classification on (train); the held-out accuracy
// gate must clear config.target_accuracy or training fails. Returns the
// frozen model.
EncoderModel train_encoder(const std::vector<faces::FaceImage>& train,
                           const std::vector<faces::FaceImage>& heldout, int n_identities,
                           const EncoderTrainConfig& config, EncoderTrainReport* report = nullptr);

// Frozen-model probes.
IdentityEmbedding embed(const EncoderModel& model, const faces::FaceImage& image);
double id_similarity(const EncoderModel& model, const faces::FaceImage& generated,
                     const faces::FaceImage& reference);
double detector_confidence(const EncoderModel& model, const faces::FaceImage& image);
double perceptual_distance(const EncoderModel& model, const faces::FaceImage& a,
                           const faces::FaceImage& b);

double heldout_accuracy(EncoderModel& model, const std::vector<faces::FaceImage>& data);

}  // namespace flowprobe::enc
