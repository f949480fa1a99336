#include "flowprobe/harness/pipeline.hpp"

#include <filesystem>
#include <fstream>
#include <ostream>

#include "flowprobe/common/error.hpp"
#include "flowprobe/common/rng.hpp"
#include "flowprobe/nd/checkpoint.hpp"

namespace flowprobe::harness {

namespace fs = std::filesystem;

ArtifactPaths ArtifactPaths::in(const std::string& out_dir) {
    ArtifactPaths p;
    p.dataset_dir = out_dir + "/dataset";
    p.encoder = out_dir + "/checkpoints/encoder.fpv";
    p.teacher = out_dir + "/checkpoints/teacher.fpv";
    p.adapter = out_dir + "/checkpoints/adapter.fpv";
    p.reflowed = out_dir + "/checkpoints/reflowed.fpv";
    p.student = out_dir + "/checkpoints/student.fpv";
    return p;
}

std::vector<faces::PromptTransform> transform_mix(const ExperimentConfig& c) {
    return {{faces::TransformKind::Plain, 0.0},
            {faces::TransformKind::Background, c.background_strength},
            {faces::TransformKind::Stylized, c.stylized_strength}};
}

std::vector<faces::FaceImage> flow_dataset(const ExperimentConfig& c) {
    return faces::make_dataset(c.n_identities, c.train_samples_per, transform_mix(c),
                               derive_seed(c.master_seed, "ds-flow"));
}

std::vector<faces::FaceImage> encoder_dataset(const ExperimentConfig& c) {
    return faces::make_dataset(c.n_identities, c.encoder_samples_per, transform_mix(c),
                               derive_seed(c.master_seed, "ds-encoder"));
}

std::vector<faces::FaceImage> heldout_dataset(const ExperimentConfig& c) {
    return faces::make_dataset(c.n_identities, c.heldout_samples_per, transform_mix(c),
                               derive_seed(c.master_seed, "ds-heldout"));
}

namespace {

struct StageGuard {
    const char* stage;
    std::ostream& log;

    template <typename Fn>
    void operator()(bool skip, Fn&& fn, BuildResult& result) const {
        if (skip) {
            log << "[skip]  " << stage << "\n";
            ++result.skipped;
            return;
        }
        log << "[build] " << stage << "\n";
        log.flush();
        try {
            fn();
        } catch (const std::exception& e) {
            throw TrainingError(std::string("stage '") + stage + "' failed: " + e.what());
        }
        ++result.built;
    }
};

std::string read_text(const std::string& path) {
    std::ifstream f(path);
    if (!f) return {};
    std::string s((std::istreambuf_iterator<char>(f)), std::istreambuf_iterator<char>());
    return s;
}

void write_text(const std::string& path, const std::string& text) {
    std::ofstream f(path, std::ios::trunc);
    if (!f) throw IoError("cannot write " + path);
    f << text;
}

// Checkpoint meta probe that tolerates a missing file but propagates
// corruption (checksum mismatch must fail the build loudly).
bool checkpoint_matches(const std::string& path, const nd::MetaMap& expected) {
    if (!fs::exists(path)) return false;
    const nd::Checkpoint ck = nd::load_checkpoint(path);  // throws CompatError when corrupt
    for (const auto& [k, v] : expected) {
        auto it = ck.meta.find(k);
        if (it == ck.meta.end() || it->second != v) return false;
    }
    return true;
}

std::string meta_of(const std::string& path, const std::string& key) {
    const nd::Checkpoint ck = nd::load_checkpoint(path);
    auto it = ck.meta.find(key);
    return it == ck.meta.end() ? std::string{} : it->second;
}

}  // namespace

BuildResult build_all(const ExperimentConfig& c, std::ostream& log) {
    const ArtifactPaths paths = ArtifactPaths::in(c.out_dir);
    fs::create_directories(c.out_dir + "/checkpoints");
    BuildResult result;

    // 1. dataset export
    StageGuard{"dataset", log}(
        fs::exists(paths.dataset_dir + "/manifest.csv") &&
            read_text(paths.dataset_dir + "/.confighash") == c.dataset_hash(),
        [&] {
            faces::export_pgm_dataset(paths.dataset_dir, c.n_identities, c.train_samples_per,
                                      transform_mix(c), derive_seed(c.master_seed, "ds-flow"));
            write_text(paths.dataset_dir + "/.confighash", c.dataset_hash());
        },
        result);

    // 2. encoder
    StageGuard{"encoder", log}(
        checkpoint_matches(paths.encoder, {{"config_hash", c.encoder_hash()}}),
        [&] {
            enc::EncoderTrainConfig tc;
            tc.epochs = c.encoder_epochs;
            tc.lr = c.encoder_lr;
            tc.batch = c.encoder_batch;
            tc.target_accuracy = c.encoder_target_acc;
            tc.seed = derive_seed(c.master_seed, "encoder");
            enc::EncoderTrainReport rep;
            enc::EncoderModel model =
                enc::train_encoder(encoder_dataset(c), heldout_dataset(c), c.n_identities, tc, &rep);
            nd::MetaMap meta;
            meta["kind"] = "encoder";
            meta["n_identities"] = std::to_string(c.n_identities);
            meta["config_hash"] = c.encoder_hash();
            meta["heldout_accuracy"] = std::to_string(rep.final_heldout_accuracy);
            nd::save_checkpoint(paths.encoder, model.params(), meta);
            log << "        heldout accuracy " << rep.final_heldout_accuracy << "\n";
        },
        result);

    // 3. teacher
    StageGuard{"teacher", log}(
        checkpoint_matches(paths.teacher, {{"config_hash", c.teacher_hash()}, {"distilled", "0"}}),
        [&] {
            flow::FlowTrainConfig tc;
            tc.epochs = c.teacher_epochs;
            tc.lr = c.teacher_lr;
            tc.batch = c.teacher_batch;
            tc.hidden = c.teacher_hidden;
            tc.prompt_dropout = c.prompt_dropout;
            tc.seed = derive_seed(c.master_seed, "teacher");
            flow::FlowTrainReport rep;
            flow::FlowBackbone teacher = flow::train_teacher(flow_dataset(c), tc, &rep);
            teacher.meta()["config_hash"] = c.teacher_hash();
            teacher.save(paths.teacher);
            log << "        flow loss " << rep.initial_loss << " -> " << rep.final_loss << "\n";
        },
        result);

    const std::string teacher_sha = meta_of(paths.teacher, "content_sha");

    // 4. adapter
    StageGuard{"adapter", log}(
        checkpoint_matches(paths.adapter,
                           {{"config_hash", c.adapter_hash()}, {"trained_against", teacher_sha}}),
        [&] {
            flow::FlowBackbone teacher = flow::FlowBackbone::load(paths.teacher);
            enc::EncoderModel encoder = enc::EncoderModel::load(paths.encoder);
            adapter::AdapterTrainConfig ac;
            ac.epochs = c.adapter_epochs;
            ac.lr = c.adapter_lr;
            ac.batch = c.adapter_batch;
            ac.hidden = c.adapter_hidden;
            ac.prompt_dropout = c.prompt_dropout;
            ac.seed = derive_seed(c.master_seed, "adapter");
            adapter::AdapterTrainReport rep;
            adapter::AdapterStack stack =
                adapter::train_adapter(teacher, encoder, flow_dataset(c), ac, &rep);
            nd::MetaMap meta;
            meta["kind"] = "adapter";
            meta["heads"] = std::to_string(stack.head_count());
            meta["hidden"] = std::to_string(c.adapter_hidden);
            meta["trained_against"] = stack.trained_against();
            meta["config_hash"] = c.adapter_hash();
            nd::save_checkpoint(paths.adapter, stack.params(), meta);
            log << "        adapter loss " << rep.initial_loss << " -> " << rep.final_loss << "\n";
        },
        result);

    // 5. reflow
    StageGuard{"reflow", log}(
        checkpoint_matches(paths.reflowed,
                           {{"config_hash", c.reflow_hash()}, {"teacher_sha", teacher_sha}}),
        [&] {
            flow::FlowBackbone teacher = flow::FlowBackbone::load(paths.teacher);
            distill::ReflowConfig rc;
            rc.n_pairs = c.reflow_pairs;
            rc.epochs = c.reflow_epochs;
            rc.lr = c.reflow_lr;
            rc.batch = c.reflow_batch;
            rc.sample_steps = c.teacher_steps;
            rc.sample_guidance = c.teacher_guidance;
            rc.seed = derive_seed(c.master_seed, "reflow");
            flow::FlowTrainReport rep;
            flow::FlowBackbone reflowed = distill::reflow(teacher, rc, &rep);
            reflowed.meta()["config_hash"] = c.reflow_hash();
            reflowed.save(paths.reflowed);
            log << "        reflow loss " << rep.initial_loss << " -> " << rep.final_loss << "\n";
        },
        result);

    // 6. student
    StageGuard{"student", log}(
        checkpoint_matches(paths.student, {{"config_hash", c.student_hash()},
                                           {"teacher_sha", teacher_sha},
                                           {"distilled", "1"}}),
        [&] {
            flow::FlowBackbone teacher = flow::FlowBackbone::load(paths.teacher);
            flow::FlowBackbone reflowed = flow::FlowBackbone::load(paths.reflowed);
            distill::DistillConfig dc;
            dc.target_steps = c.target_steps;
            dc.n_pairs = c.distill_pairs;
            dc.epochs = c.distill_epochs;
            dc.lr = c.distill_lr;
            dc.batch = c.distill_batch;
            dc.teacher_steps = c.teacher_steps;
            dc.teacher_guidance = c.teacher_guidance;
            dc.seed = derive_seed(c.master_seed, "distill");
            flow::FlowTrainReport rep;
            flow::FlowBackbone student = distill::distill_endpoint(reflowed, teacher, dc, &rep);
            student.meta()["config_hash"] = c.student_hash();
            student.save(paths.student);
            log << "        distill loss " << rep.initial_loss << " -> " << rep.final_loss << "\n";
        },
        result);

    return result;
}

Artifacts load_artifacts(const ExperimentConfig& c) {
    const ArtifactPaths paths = ArtifactPaths::in(c.out_dir);
    for (const std::string& p : {paths.encoder, paths.teacher, paths.adapter, paths.student})
        if (!fs::exists(p)) throw IoError("missing artifact (run build first): " + p);

    Artifacts a{enc::EncoderModel::load(paths.encoder), flow::FlowBackbone::load(paths.teacher),
                adapter::AdapterStack::load(paths.adapter), flow::FlowBackbone::load(paths.student),
                "", "", "", ""};
    a.encoder_sha = a.encoder.checksum();
    a.teacher_sha = a.teacher.checksum();
    a.adapter_sha = a.adapter_stack.checksum();
    a.student_sha = a.student.checksum();

    if (a.adapter_stack.trained_against() != a.teacher_sha)
        throw CompatError("adapter was not trained against this teacher checkpoint");
    return a;
}

}  // namespace flowprobe::harness
