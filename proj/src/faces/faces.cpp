#include "flowprobe/faces/faces.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <filesystem>
#include <fstream>

#include "flowprobe/common/error.hpp"
#include "flowprobe/common/rng.hpp"

namespace flowprobe::faces {

namespace {

constexpr double kNoiseScale = 0.02;
constexpr double kEdgeGain = 6.0;
constexpr double kBackgroundGain = 0.35;

double clamp01(double v) { return std::min(1.0, std::max(0.0, v)); }

bool in_face_box(int r, int c) {
    return r >= kFaceBoxLo && r < kFaceBoxHi && c >= kFaceBoxLo && c < kFaceBoxHi;
}

}  // namespace

const char* transform_name(TransformKind k) {
    switch (k) {
        case TransformKind::Plain: return "plain";
        case TransformKind::Background: return "background";
        case TransformKind::Stylized: return "stylized";
    }
    return "?";
}

TransformKind transform_from_name(const std::string& name) {
    if (name == "plain") return TransformKind::Plain;
    if (name == "background") return TransformKind::Background;
    if (name == "stylized") return TransformKind::Stylized;
    throw ContractError("unknown transform name: " + name);
}

IdentitySpec IdentitySpec::make(int identity_id) {
    if (identity_id < 0) throw ContractError("identity_id must be nonnegative");
    IdentitySpec spec;
    spec.identity_id = identity_id;
    spec.asymmetry_seed = derive_seed(0xface5, "identity", static_cast<uint64_t>(identity_id));
    Rng rng(spec.asymmetry_seed);

    for (int b = 0; b < kNumBlobs; ++b) {
        Blob& blob = spec.blobs[static_cast<size_t>(b)];
        blob.cx = rng.uniform(0.15, 0.85);
        blob.cy = rng.uniform(0.15, 0.85);
        blob.radius = rng.uniform(0.05, 0.2);
        blob.intensity = rng.uniform(0.3, 1.0);
    }

    // Lattice-coded parameters guarantee pairwise separation: steps are
    // 0.7/28 = 0.025 and 0.7/22 ~ 0.0318, and (id mod 29, id/29 mod 23) is
    // injective for id < 667.
    const int gx = identity_id % 29;
    const int gy = (identity_id / 29) % 23;
    spec.blobs[0].cx = 0.15 + 0.7 * gx / 28.0;
    spec.blobs[0].cy = 0.15 + 0.7 * gy / 22.0;
    return spec;
}

nd::Tensor FaceImage::flat() const {
    nd::Tensor row({1, kImagePixels});
    for (int i = 0; i < kImagePixels; ++i) row[i] = pixels[i];
    return row;
}

FaceImage FaceImage::from_flat(const nd::Tensor& row, int identity, PromptTransform tr) {
    if (row.numel() != kImagePixels) throw ShapeError("from_flat: expected 1024 values");
    FaceImage img;
    img.pixels = nd::Tensor({kImageSize, kImageSize});
    for (int i = 0; i < kImagePixels; ++i) img.pixels[i] = clamp01(row[i]);
    img.source_identity = identity;
    img.transform = tr;
    return img;
}

FaceImage render_identity(const IdentitySpec& spec, const PromptTransform& transform,
                          uint64_t noise_seed) {
    if (transform.strength < 0.0 || transform.strength > 1.0)
        throw ContractError("transform strength must lie in [0,1]");

    nd::Tensor img({kImageSize, kImageSize});

    // Gaussian blob composite.
    for (int r = 0; r < kImageSize; ++r) {
        const double y = (r + 0.5) / kImageSize;
        for (int c = 0; c < kImageSize; ++c) {
            const double x = (c + 0.5) / kImageSize;
            double v = 0.0;
            for (const Blob& b : spec.blobs) {
                const double dx = x - b.cx;
                const double dy = y - b.cy;
                v += b.intensity * std::exp(-(dx * dx + dy * dy) / (2.0 * b.radius * b.radius));
            }
            img.at(r, c) = clamp01(v);
        }
    }

    if (transform.kind == TransformKind::Background && transform.strength > 0.0) {
        // Low-frequency diagonal gradient outside the face box only.
        for (int r = 0; r < kImageSize; ++r)
            for (int c = 0; c < kImageSize; ++c) {
                if (in_face_box(r, c)) continue;
                const double ramp = 0.5 * (static_cast<double>(r) / (kImageSize - 1) +
                                           static_cast<double>(c) / (kImageSize - 1));
                img.at(r, c) = clamp01(img.at(r, c) + kBackgroundGain * transform.strength * ramp);
            }
    } else if (transform.kind == TransformKind::Stylized && transform.strength > 0.0) {
        // Tone curve p -> p^(1+strength) plus 2-px edge emphasis.
        nd::Tensor curved({kImageSize, kImageSize});
        for (int i = 0; i < kImagePixels; ++i)
            curved[i] = std::pow(img[i], 1.0 + transform.strength);
        nd::Tensor edges({kImageSize, kImageSize});
        for (int r = 0; r < kImageSize; ++r)
            for (int c = 0; c < kImageSize; ++c) {
                const int rp = std::min(r + 1, kImageSize - 1), rm = std::max(r - 1, 0);
                const int cp = std::min(c + 1, kImageSize - 1), cm = std::max(c - 1, 0);
                edges.at(r, c) = 0.5 * (std::abs(img.at(rp, c) - img.at(rm, c)) +
                                        std::abs(img.at(r, cp) - img.at(r, cm)));
            }
        for (int i = 0; i < kImagePixels; ++i)
            img[i] = clamp01(curved[i] + kEdgeGain * transform.strength * edges[i]);
    }

    // Per-sample texture noise, then final clamp.
    Rng noise(noise_seed);
    for (int i = 0; i < kImagePixels; ++i) img[i] = clamp01(img[i] + kNoiseScale * noise.normal());

    FaceImage out;
    out.pixels = std::move(img);
    out.source_identity = spec.identity_id;
    out.transform = transform;
    return out;
}

uint64_t dataset_noise_seed(uint64_t master_seed, int identity, int transform_index, int sample_index) {
    return derive_seed(master_seed, "render", static_cast<uint64_t>(identity),
                       static_cast<uint64_t>(transform_index), static_cast<uint64_t>(sample_index));
}

std::vector<FaceImage> make_dataset(int n_identities, int samples_per, const std::vector<PromptTransform>& transform_mix,
                                    uint64_t master_seed) {
    if (n_identities < 2) throw ContractError("make_dataset requires at least 2 identities");
    if (samples_per < 1) throw ContractError("make_dataset requires at least 1 sample per cell");
    if (transform_mix.empty()) throw ContractError("make_dataset requires a non-empty transform mix");

    std::vector<FaceImage> out;
    out.reserve(static_cast<size_t>(n_identities) * transform_mix.size() * static_cast<size_t>(samples_per));
    for (int id = 0; id < n_identities; ++id) {
        const IdentitySpec spec = IdentitySpec::make(id);
        for (size_t ti = 0; ti < transform_mix.size(); ++ti)
            for (int s = 0; s < samples_per; ++s)
                out.push_back(render_identity(spec, transform_mix[ti],
                                              dataset_noise_seed(master_seed, id, static_cast<int>(ti), s)));
    }
    return out;
}

void write_pgm(const std::string& path, const FaceImage& img) {
    std::ofstream f(path, std::ios::binary | std::ios::trunc);
    if (!f) throw IoError("cannot open for write: " + path);
    f << "P5\n" << kImageSize << " " << kImageSize << "\n255\n";
    for (int i = 0; i < kImagePixels; ++i) {
        const int v = static_cast<int>(std::lround(clamp01(img.pixels[i]) * 255.0));
        f.put(static_cast<char>(v));
    }
    if (!f) throw IoError("write failed: " + path);
}

FaceImage read_pgm(const std::string& path) {
    std::ifstream f(path, std::ios::binary);
    if (!f) throw IoError("cannot open: " + path);
    std::string magic;
    int w = 0, h = 0, maxval = 0;
    f >> magic >> w >> h >> maxval;
    if (magic != "P5" || w != kImageSize || h != kImageSize || maxval != 255)
        throw IoError("unsupported pgm header in " + path);
    f.get();  // single whitespace after maxval
    FaceImage img;
    img.pixels = nd::Tensor({kImageSize, kImageSize});
    for (int i = 0; i < kImagePixels; ++i) {
        const int v = f.get();
        if (v < 0) throw IoError("truncated pgm: " + path);
        img.pixels[i] = v / 255.0;
    }
    return img;
}

void export_pgm_dataset(const std::string& dir, int n_identities, int samples_per,
                        const std::vector<PromptTransform>& transform_mix, uint64_t master_seed) {
    std::filesystem::create_directories(dir);
    std::ofstream manifest(dir + "/manifest.csv", std::ios::trunc);
    if (!manifest) throw IoError("cannot write manifest in " + dir);
    manifest << "file,identity_id,transform,strength,seed\n";

    for (int id = 0; id < n_identities; ++id) {
        const IdentitySpec spec = IdentitySpec::make(id);
        for (size_t ti = 0; ti < transform_mix.size(); ++ti)
            for (int s = 0; s < samples_per; ++s) {
                const uint64_t seed = dataset_noise_seed(master_seed, id, static_cast<int>(ti), s);
                const FaceImage img = render_identity(spec, transform_mix[ti], seed);
                char name[96];
                std::snprintf(name, sizeof(name), "id%03d_t%s_s%llu.pgm", id,
                              transform_name(transform_mix[ti].kind),
                              static_cast<unsigned long long>(seed));
                write_pgm(dir + "/" + name, img);
                char strength[32];
                std::snprintf(strength, sizeof(strength), "%.6f", transform_mix[ti].strength);
                manifest << name << "," << id << "," << transform_name(transform_mix[ti].kind) << ","
                         << strength << "," << seed << "\n";
            }
    }
}

}  // namespace flowprobe::faces
