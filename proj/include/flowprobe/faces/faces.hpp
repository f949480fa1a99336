#pragma once

#include <array>
#include <cstdint>
#include <string>
#include <vector>

#include "flowprobe/nd/tensor.hpp"

namespace flowprobe::faces {

constexpr int kImageSize = 32;
constexpr int kImagePixels = kImageSize * kImageSize;
// Central face box: rows/cols [6, 26) — the 20x20 region transforms must
// leave untouched.
constexpr int kFaceBoxLo = 6;
constexpr int kFaceBoxHi = 26;
constexpr int kNumBlobs = 5;

enum class TransformKind { Plain = 0, Background = 1, Stylized = 2 };

const char* transform_name(TransformKind k);
TransformKind transform_from_name(const std::string& name);

struct PromptTransform {
    TransformKind kind = TransformKind::Plain;
    double strength = 0.0;  // in [0, 1]
};

struct Blob {
    double cx;         // [0.15, 0.85] of image width
    double cy;         // [0.15, 0.85]
    double radius;     // [0.05, 0.2]
    double intensity;  // [0.3, 1.0]
};

// Procedural parameters for one synthetic identity. Derivation from
// identity_id is deterministic, and two of blob 0's parameters live on
// coarse lattices (step > 0.02) indexed by id mod 29 and id/29 mod 23, so
// any two distinct ids below 667 differ in at least one parameter by 0.02+.
struct IdentitySpec {
    int identity_id = 0;
    std::array<Blob, kNumBlobs> blobs{};
    uint64_t asymmetry_seed = 0;

    static IdentitySpec make(int identity_id);
};

struct FaceImage {
    nd::Tensor pixels;  // [32 x 32], values in [0, 1]
    int source_identity = -1;
    PromptTransform transform;

    nd::Tensor flat() const;  // [1 x 1024] row vector
    static FaceImage from_flat(const nd::Tensor& row, int identity, PromptTransform tr);
};

// Pure function of (spec, transform, noise_seed).
FaceImage render_identity(const IdentitySpec& spec, const PromptTransform& transform,
                          uint64_t noise_seed);

// Balanced dataset: one sample per (identity, transform in mix, sample
// index), rendered with seeds derived from master_seed. Requires >= 2
// identities.
std::vector<FaceImage> make_dataset(int n_identities, int samples_per, const std::vector<PromptTransform>& transform_mix,
                                    uint64_t master_seed);

// PGM (P5, 8-bit) image io.
void write_pgm(const std::string& path, const FaceImage& img);
FaceImage read_pgm(const std::string& path);

// Directory export: id{III}_t{kind}_s{seed}.pgm files plus manifest.csv with
// columns file,identity_id,transform,strength,seed.
struct DatasetExportEntry {
    std::string file;
    int identity_id;
    TransformKind kind;
    double strength;
    uint64_t seed;
};
void export_pgm_dataset(const std::string& dir, int n_identities, int samples_per,
                        const std::vector<PromptTransform>& transform_mix, uint64_t master_seed);

// The noise seed make_dataset used for a given (identity, transform index,
// sample index); exposed so paired evaluations can re-render exact samples.
uint64_t dataset_noise_seed(uint64_t master_seed, int identity, int transform_index, int sample_index);

}  // namespace flowprobe::faces
