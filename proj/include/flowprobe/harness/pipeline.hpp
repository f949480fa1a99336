#pragma once

#include <iosfwd>
#include <string>
#include <vector>

#include "flowprobe/adapter/adapter.hpp"
#include "flowprobe/distill/distill.hpp"
#include "flowprobe/harness/config.hpp"

namespace flowprobe::harness {

struct ArtifactPaths {
    std::string dataset_dir;
    std::string encoder;
    std::string teacher;
    std::string adapter;
    std::string reflowed;
    std::string student;

    static ArtifactPaths in(const std::string& out_dir);
};

// Prompt transforms used throughout: plain portrait, background scene,
// stylized stress test, with strengths from the config.
std::vector<faces::PromptTransform> transform_mix(const ExperimentConfig& c);

std::vector<faces::FaceImage> flow_dataset(const ExperimentConfig& c);
std::vector<faces::FaceImage> encoder_dataset(const ExperimentConfig& c);
std::vector<faces::FaceImage> heldout_dataset(const ExperimentConfig& c);

struct BuildResult {
    int built = 0;
    int skipped = 0;
};

// dataset -> encoder -> teacher -> adapter -> reflow -> student, writing
// checkpoints with provenance. Stages whose artifacts already match the
// config hash (and upstream checksums) are skipped.
BuildResult build_all(const ExperimentConfig& c, std::ostream& log);

struct Artifacts {
    enc::EncoderModel encoder;
    flow::FlowBackbone teacher;
    adapter::AdapterStack adapter_stack;
    flow::FlowBackbone student;
    std::string encoder_sha;
    std::string teacher_sha;
    std::string adapter_sha;
    std::string student_sha;
};

Artifacts load_artifacts(const ExperimentConfig& c);

}  // namespace flowprobe::harness
