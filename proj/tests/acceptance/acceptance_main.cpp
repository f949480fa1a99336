// Acceptance suite: runs every release criterion end to end and prints one
// PASS/FAIL line per criterion. Exit code 0 only if all criteria pass.
//
// Usage: acceptance [--data-dir DIR] [--out-dir DIR]
//   --data-dir  directory holding reference_sweep_pattern.csv (default: data)
//   --out-dir   working directory for built artifacts (default: acceptance_out)
//
// The full-pipeline criteria reuse artifacts across runs when the config
// hash matches, so re-runs are cheap.

#include <chrono>
#include <cmath>
#include <cstring>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <sstream>
#include <vector>

#include "flowprobe/common/rng.hpp"
#include "flowprobe/harness/commands.hpp"

using namespace flowprobe;
namespace fs = std::filesystem;

namespace {

struct Criterion {
    int id;
    std::string label;
    bool pass = false;
    std::string detail;
    double seconds = 0.0;
};

std::vector<Criterion> g_results;

template <typename Fn>
void run_criterion(int id, const std::string& label, Fn&& fn) {
    Criterion c{id, label};
    const auto t0 = std::chrono::steady_clock::now();
    try {
        c.detail = fn();
        c.pass = true;
    } catch (const std::exception& e) {
        c.pass = false;
        c.detail = e.what();
    }
    c.seconds = std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
    std::cout << "CRITERION " << c.id << ": " << (c.pass ? "PASS" : "FAIL") << " — " << c.label
              << " (" << c.detail << ") [" << c.seconds << "s]" << std::endl;
    g_results.push_back(std::move(c));
}

struct CheckFail : std::runtime_error {
    using std::runtime_error::runtime_error;
};

void require(bool cond, const std::string& msg) {
    if (!cond) throw CheckFail(msg);
}

std::string fmt(double v) {
    std::ostringstream os;
    os << v;
    return os.str();
}

// ---------------------------------------------------------------- criterion 1

double rel_err(double a, double b) {
    return std::abs(a - b) / std::max({std::abs(a), std::abs(b), 1e-3});
}

std::string check_gradients() {
    const auto t0 = std::chrono::steady_clock::now();
    double worst = 0.0;
    int configs = 0;
    for (uint64_t seed = 0; seed < 110; ++seed) {
        Rng rng(derive_seed(4242, "accept-fd", seed));
        const int batch = 2 + static_cast<int>(rng.randint(3));
        const int in_dim = 3 + static_cast<int>(rng.randint(4));
        const int out_dim = 2 + static_cast<int>(rng.randint(3));
        const int depth = 1 + static_cast<int>(rng.randint(2));
        std::vector<int> hidden;
        for (int i = 0; i < depth; ++i) hidden.push_back(3 + static_cast<int>(rng.randint(5)));

        nd::Tensor x({batch, in_dim});
        for (double& v : x.vec()) v = rng.uniform(-1, 1);
        nd::Tensor target({batch, out_dim});
        for (double& v : target.vec()) v = rng.uniform(-1, 1);

        nd::ParamSet ps;
        int prev = in_dim;
        for (size_t l = 0; l < hidden.size(); ++l) {
            nd::Tensor w({prev, hidden[l]});
            for (double& v : w.vec()) v = rng.uniform(-0.7, 0.7);
            ps.add("w" + std::to_string(l), std::move(w));
            nd::Tensor b({1, hidden[l]});
            for (double& v : b.vec()) v = rng.uniform(-0.3, 0.3);
            ps.add("b" + std::to_string(l), std::move(b));
            prev = hidden[l];
        }
        nd::Tensor wout({prev, out_dim});
        for (double& v : wout.vec()) v = rng.uniform(-0.7, 0.7);
        ps.add("wout", std::move(wout));
        nd::Tensor bout({1, out_dim});
        for (double& v : bout.vec()) v = rng.uniform(-0.3, 0.3);
        ps.add("bout", std::move(bout));

        auto loss_of = [&](nd::Tape& tape) {
            nd::Value h = tape.constant(x);
            for (size_t l = 0; l < hidden.size(); ++l) {
                nd::Value z = nd::add_row(nd::matmul(h, tape.param(ps, "w" + std::to_string(l))),
                                          tape.param(ps, "b" + std::to_string(l)));
                h = (l % 2 == seed % 2) ? nd::tanh_act(z) : nd::silu(z);
            }
            nd::Value out =
                nd::add_row(nd::matmul(h, tape.param(ps, "wout")), tape.param(ps, "bout"));
            if (seed % 3 == 0) out = nd::scale(out, 1.5);
            return nd::mse(out, tape.constant(target));
        };

        {
            nd::Tape tape;
            tape.backward(loss_of(tape));
        }
        const double h = 1e-5;
        for (auto& [name, entry] : ps.entries()) {
            for (int64_t i = 0; i < entry.value.numel(); ++i) {
                const double orig = entry.value[i];
                entry.value[i] = orig + h;
                double lp;
                {
                    nd::Tape tape;
                    lp = loss_of(tape).val()[0];
                }
                entry.value[i] = orig - h;
                double lm;
                {
                    nd::Tape tape;
                    lm = loss_of(tape).val()[0];
                }
                entry.value[i] = orig;
                worst = std::max(worst, rel_err(entry.grad[i], (lp - lm) / (2 * h)));
            }
        }
        ++configs;
    }
    const double secs = std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
    require(configs >= 100, "ran only " + std::to_string(configs) + " configs");
    require(worst < 1e-4, "max relative error " + fmt(worst));
    require(secs < 30.0, "runtime " + fmt(secs) + "s exceeds 30s");
    return std::to_string(configs) + " configs, max rel err " + fmt(worst);
}

// ---------------------------------------------------------------- criterion 2

std::string check_sampler_analytics() {
    Rng rng(7);
    nd::Tensor x0({flow::kStateDim}), eps({flow::kStateDim});
    for (int i = 0; i < flow::kStateDim; ++i) {
        x0[i] = rng.normal();
        eps[i] = rng.normal();
    }
    const nd::Tensor at0 = flow::interpolate(x0, eps, 0.0);
    const nd::Tensor at1 = flow::interpolate(x0, eps, 1.0);
    require(std::memcmp(at0.data(), x0.data(), sizeof(double) * flow::kStateDim) == 0,
            "interpolation endpoint t=0 not exact");
    require(std::memcmp(at1.data(), eps.data(), sizeof(double) * flow::kStateDim) == 0,
            "interpolation endpoint t=1 not exact");

    const nd::Tensor v = flow::velocity_target(x0, eps);
    double worst = 0.0;
    for (int steps : {1, 4, 28}) {
        const flow::Trajectory traj =
            flow::integrate_field([&](const nd::Tensor&, double) { return v; }, eps, steps, false);
        for (int i = 0; i < flow::kStateDim; ++i)
            worst = std::max(worst, std::abs(traj.states.back()[i] - x0[i]));
    }
    require(worst < 1e-10, "constant-field recovery error " + fmt(worst));
    return "endpoints exact, constant-field recovery max err " + fmt(worst);
}

// ---------------------------------------------------------------- criterion 3

std::string check_probe_arithmetic(const std::string& reference_csv) {
    const probes::ReferencePattern ref = probes::load_reference_pattern(reference_csv);
    require(ref.rows.size() == 10, "expected 10 reference rows");

    // Lift reproduction on the internally consistent rows (4, 6, 8). The
    // remaining reference rows carry a published lift that differs from the
    // difference of their own similarity columns by up to 0.065 — far beyond
    // rounding — so they are reported, not asserted.
    int asserted = 0;
    std::string inconsistent;
    for (const auto& r : ref.rows) {
        if (!r.idsim_weak || !r.lift) continue;
        const double recomputed = probes::adapter_lift(r.idsim_full, *r.idsim_weak);
        const double diff = std::abs(recomputed - *r.lift);
        if (r.steps == 4 || r.steps == 6 || r.steps == 8) {
            require(diff <= 0.001 + 1e-9, "lift mismatch at T=" + fmt(r.steps) + ": " + fmt(diff));
            ++asserted;
        } else if (diff > 0.0015) {
            inconsistent += (inconsistent.empty() ? "" : ",") + std::string("T=") + fmt(r.steps) +
                            " off " + fmt(diff);
        }
    }
    require(asserted == 3, "expected 3 asserted lift rows");
    if (!inconsistent.empty())
        std::cout << "  note: reference lift column internally inconsistent at " << inconsistent
                  << " (documented, not asserted)" << std::endl;

    std::vector<std::pair<double, double>> curve;
    for (const auto& r : ref.rows) curve.emplace_back(r.steps, r.idsim_full);
    const auto ew = probes::early_window(curve, 0.95);
    require(ew.t_star == 8.0, "early window returned T*=" + fmt(ew.t_star));

    const auto report = probes::pattern_check(ref.pattern_rows(), ref.thresholds);
    require(report.all_pass, "pattern predicates failed on the reference rows");
    return "lift rows ok, T*=8, all four predicates pass";
}

// ---------------------------------------------------------------- criterion 4

std::string check_injection_contracts() {
    const adapter::AdapterStack stack = adapter::AdapterStack::random_init(31, 16);
    Rng rng(32);
    enc::IdentityEmbedding e;
    e.vector = nd::Tensor({enc::kEmbedDim});
    double norm = 0.0;
    for (int i = 0; i < enc::kEmbedDim; ++i) {
        e.vector[i] = rng.normal();
        norm += e.vector[i] * e.vector[i];
    }
    for (int i = 0; i < enc::kEmbedDim; ++i) e.vector[i] /= std::sqrt(norm);
    nd::Tensor h({flow::kStateDim});
    for (int i = 0; i < flow::kStateDim; ++i) h[i] = rng.normal();

    const nd::Tensor noop = adapter::inject(stack, 0, h, e, 0.5, 0.0);
    require(std::memcmp(noop.data(), h.data(), sizeof(double) * flow::kStateDim) == 0,
            "scale-zero injection is not a bitwise no-op");

    const nd::Tensor head = stack.head_eval(0, e, 0.5);
    for (double alpha : {0.0, 0.25, 0.5, 1.0, 2.0}) {
        const nd::Tensor out = adapter::inject(stack, 0, h, e, 0.5, alpha);
        for (int i = 0; i < flow::kStateDim; ++i)
            require(out[i] == h[i] + alpha * head[i],
                    "residual not exactly linear at alpha=" + fmt(alpha));
    }

    flow::FlowBackbone net = flow::FlowBackbone::random_init(33, 16);
    net.freeze();
    adapter::AdapterStack frozen = adapter::AdapterStack::random_init(34, 16);
    frozen.freeze();
    flow::SampleConfig cfg;
    cfg.steps = 5;
    cfg.guidance = 0.0;
    cfg.adapter = &frozen;
    cfg.adapter_scale = 0.0;
    cfg.e_id = &e;
    cfg.seed = 35;
    cfg.capture_streams = true;
    const auto [img, traj] = flow::sample(net, cfg);
    const auto ratios = probes::stream_ratio(traj.streams);
    for (double r : ratios.per_entry)
        require(r == 0.0, "stream ratio nonzero under scale-zero sampling");
    return "no-op, linearity, and silent-stream contracts hold";
}

// ---------------------------------------------------------------- criterion 5

std::string check_transfer_contracts() {
    const int n_id = 2;
    const std::vector<faces::PromptTransform> mix{{faces::TransformKind::Plain, 0.0}};
    const auto train = faces::make_dataset(n_id, 6, mix, 600);
    const auto held = faces::make_dataset(n_id, 2, mix, 601);
    enc::EncoderTrainConfig ec;
    ec.epochs = 50;
    ec.batch = 8;
    ec.seed = 41;
    const enc::EncoderModel encoder = enc::train_encoder(train, held, n_id, ec);
    const std::string encoder_sha = encoder.checksum();

    flow::FlowBackbone teacher = flow::FlowBackbone::random_init(42, 16);
    teacher.freeze();
    const std::string teacher_sha = teacher.checksum();

    adapter::AdapterTrainConfig ac;
    ac.epochs = 2;
    ac.batch = 4;
    ac.hidden = 8;
    ac.seed = 43;
    const adapter::AdapterStack stack = adapter::train_adapter(teacher, encoder, train, ac);
    require(teacher.checksum() == teacher_sha, "teacher changed during adapter training");
    require(encoder.checksum() == encoder_sha, "encoder changed during adapter training");
    const std::string adapter_sha = stack.checksum();

    flow::FlowBackbone student = flow::FlowBackbone::random_init(44, 16);
    student.set_distilled(true);
    student.freeze();
    const adapter::BoundAdapter bound = adapter::transfer(stack, student);
    require(stack.checksum() == adapter_sha, "transfer changed adapter bytes");
    require(bound.cross_backbone, "transfer should record the cross-backbone binding");

    const enc::IdentityEmbedding e_id = enc::embed(encoder, adapter::reference_render(0));
    flow::SampleConfig cfg;
    cfg.steps = 4;
    cfg.guidance = 0.0;
    cfg.adapter = bound.stack;
    cfg.adapter_scale = 1.0;
    cfg.e_id = &e_id;
    cfg.seed = 45;
    for (int s = 0; s < 3; ++s) {
        cfg.seed = 45 + static_cast<uint64_t>(s);
        flow::sample(student, cfg);
    }
    require(stack.checksum() == adapter_sha, "student sampling changed adapter bytes");
    return "adapter, teacher, and encoder checksums invariant";
}

// ------------------------------------------------------- criteria 6 and 7

harness::ExperimentConfig default_config(const std::string& out_dir) {
    harness::ExperimentConfig c;  // defaults transcribe the experiment plan
    c.out_dir = out_dir;
    c.master_seed = 0;
    return c;
}

std::string check_replacement_phenomenon(const harness::ExperimentConfig& c) {
    std::ostringstream log;
    const harness::ReplacementReport rep = harness::cmd_replacement(c, log);
    const double ratio = rep.ours.idsim_mean / rep.baseline.idsim_mean;
    require(rep.ours.n == c.n_identities * 3, "unexpected evaluation set size");
    require(ratio >= 0.9, "student/teacher similarity ratio " + fmt(ratio) + " below 0.9");
    require(rep.speedup >= 3.0, "speedup " + fmt(rep.speedup) + " below 3.0");
    return "idsim " + fmt(rep.baseline.idsim_mean) + " -> " + fmt(rep.ours.idsim_mean) +
           " (ratio " + fmt(ratio) + "), speedup " + fmt(rep.speedup) + "x";
}

std::string check_sweep_phenomenon(const harness::ExperimentConfig& c,
                                   const std::string& reference_csv) {
    std::ostringstream log;
    const harness::MechSweepResult res = harness::cmd_mech_sweep(c, reference_csv, false, log);
    require(res.outcome != harness::MechSweepOutcome::ArtifactBug,
            "invariant violation: " + res.outcome_detail);
    require(res.outcome == harness::MechSweepOutcome::Ok,
            "phenomenon absent: " + res.outcome_detail);
    std::string detail;
    for (const auto& p : res.pattern.predicates)
        detail += (detail.empty() ? "" : ", ") + p.name + "=" + fmt(p.measured);
    return detail;
}

// ---------------------------------------------------------------- criterion 8

harness::ExperimentConfig tiny_config(const std::string& out_dir) {
    harness::ExperimentConfig c;
    c.master_seed = 0;
    c.out_dir = out_dir;
    c.threads = 2;
    c.n_identities = 3;
    c.train_samples_per = 2;
    c.encoder_samples_per = 5;
    c.heldout_samples_per = 2;
    c.encoder_epochs = 60;
    c.teacher_epochs = 4;
    c.teacher_hidden = 12;
    c.adapter_epochs = 3;
    c.adapter_hidden = 8;
    c.reflow_pairs = 4;
    c.reflow_epochs = 2;
    c.distill_pairs = 4;
    c.distill_epochs = 2;
    c.distill_batch = 4;
    c.teacher_steps = 6;
    c.student_steps = 2;
    c.target_steps = 2;
    c.diagnostic_subjects = 2;
    c.sweep_steps = {1, 2, 3, 4, 6};
    c.sweep_subjects = 2;
    return c;
}

std::string slurp(const std::string& path) {
    std::ifstream f(path, std::ios::binary);
    require(f.good(), "missing output file " + path);
    std::stringstream ss;
    ss << f.rdbuf();
    return ss.str();
}

// Wall-clock fields (latency_s / speedup columns) are measurements, not
// derived values; determinism is asserted on everything else.
std::string strip_timing_columns(const std::string& csv) {
    std::stringstream in(csv);
    std::string line, out;
    std::vector<size_t> drop;
    bool header = true;
    while (std::getline(in, line)) {
        std::vector<std::string> cells;
        std::stringstream ls(line);
        std::string cell;
        while (std::getline(ls, cell, ',')) cells.push_back(cell);
        if (header) {
            for (size_t i = 0; i < cells.size(); ++i)
                if (cells[i] == "latency_s" || cells[i] == "speedup") drop.push_back(i);
            header = false;
        }
        for (size_t i = 0; i < cells.size(); ++i) {
            if (std::find(drop.begin(), drop.end(), i) != drop.end()) continue;
            out += cells[i];
            out += ',';
        }
        out += '\n';
    }
    return out;
}

std::string check_determinism(const std::string& scratch, const std::string& reference_csv) {
    const std::string dir_a = scratch + "/det_a";
    const std::string dir_b = scratch + "/det_b";
    fs::remove_all(dir_a);
    fs::remove_all(dir_b);
    std::ostringstream log;
    for (const std::string& dir : {dir_a, dir_b}) {
        const harness::ExperimentConfig c = tiny_config(dir);
        harness::build_all(c, log);
        harness::cmd_replacement(c, log);
        harness::cmd_mech_sweep(c, reference_csv, false, log);
        harness::cmd_ablations(c, log);
    }
    int files = 0;
    for (const char* rel :
         {"dataset/manifest.csv", "mech_sweep/sweep.csv", "mech_sweep/pattern_report.csv",
          "ablations/prompt_grid.csv", "ablations/alpha_grid.csv",
          "replacement/replacement_report.csv", "replacement/replacement_per_identity.csv"}) {
        const std::string a = strip_timing_columns(slurp(dir_a + "/" + rel));
        const std::string b = strip_timing_columns(slurp(dir_b + "/" + rel));
        require(a == b, std::string("determinism violated in ") + rel);
        ++files;
    }
    return std::to_string(files) + " csv outputs byte-identical (timing columns excluded)";
}

// ---------------------------------------------------------------- criterion 9

std::string check_probe_unit_oracles() {
    faces::FaceImage constant;
    constant.pixels = nd::Tensor::full({faces::kImageSize, faces::kImageSize}, 0.42);
    require(probes::sharpness(constant) == 0.0, "constant image sharpness nonzero");

    faces::FaceImage impulse;
    impulse.pixels = nd::Tensor({faces::kImageSize, faces::kImageSize});
    impulse.pixels.at(16, 16) = 1.0;
    const double expected = (1020.0 * 1020.0 + 4.0 * 255.0 * 255.0) / 900.0;
    require(std::abs(probes::sharpness(impulse) - expected) < 1e-9,
            "impulse sharpness mismatch: " + fmt(probes::sharpness(impulse)));

    faces::FaceImage half;
    half.pixels = nd::Tensor({faces::kImageSize, faces::kImageSize});
    for (int r = 16; r < 32; ++r)
        for (int c = 0; c < 32; ++c) half.pixels.at(r, c) = 1.0;
    require(probes::contrast(half) == 127.5, "half-image contrast is not exactly 127.5");

    std::vector<flow::StreamEntry> cap;
    cap.push_back({0, 1.0, 0, 2.0, 1.0});
    cap.push_back({0, 1.0, 1, 4.0, 1.0});
    cap.push_back({1, 0.5, 0, 8.0, 1.0});
    cap.push_back({1, 0.5, 1, 10.0, 1.0});
    const double hand = (1.0 / (2.0 + 1e-8) + 1.0 / (4.0 + 1e-8) + 1.0 / (8.0 + 1e-8) +
                         1.0 / (10.0 + 1e-8)) /
                        4.0;
    require(std::abs(probes::stream_ratio(cap).mean - hand) < 1e-12, "stream ratio mean mismatch");
    return "sharpness, contrast, and stream-ratio oracles exact";
}

}  // namespace

int main(int argc, char** argv) {
    std::string data_dir = "data";
    std::string out_dir = "acceptance_out";
    for (int i = 1; i < argc; ++i) {
        const std::string arg = argv[i];
        if (arg == "--data-dir" && i + 1 < argc) data_dir = argv[++i];
        else if (arg == "--out-dir" && i + 1 < argc) out_dir = argv[++i];
    }
    const std::string reference_csv = data_dir + "/reference_sweep_pattern.csv";
    fs::create_directories(out_dir);

    run_criterion(1, "gradient correctness vs central finite differences", check_gradients);
    run_criterion(2, "interpolation endpoints and constant-field integration",
                  check_sampler_analytics);
    run_criterion(3, "probe arithmetic on the reference sweep pattern",
                  [&] { return check_probe_arithmetic(reference_csv); });
    run_criterion(4, "residual injection contracts", check_injection_contracts);
    run_criterion(5, "training-free transfer contracts", check_transfer_contracts);

    const harness::ExperimentConfig full = default_config(out_dir + "/default");
    bool built = false;
    run_criterion(6, "backbone replacement phenomenon at the default config", [&] {
        std::ostringstream log;
        harness::build_all(full, log);
        built = true;
        std::cout << log.str();
        return check_replacement_phenomenon(full);
    });
    run_criterion(7, "mechanistic sweep pattern at the default config", [&] {
        if (!built) {
            std::ostringstream log;
            harness::build_all(full, log);
        }
        return check_sweep_phenomenon(full, reference_csv);
    });
    run_criterion(8, "byte-determinism of repeated full runs",
                  [&] { return check_determinism(out_dir, reference_csv); });
    run_criterion(9, "probe unit oracles", check_probe_unit_oracles);

    // Supplementary module-level checks that need the trained default
    // artifacts; failures count like criteria failures.
    run_criterion(10, "supplementary: adapter margin and distillation quality", [&] {
        harness::Artifacts a = harness::load_artifacts(full);

        // conditioning margin: alpha = 1 beats the unconditioned baseline on
        // identities the adapter never trained on, and on the student arm
        auto mean_idsim = [&](const flow::FlowBackbone& net, int steps, double guidance,
                              double alpha, int id_lo, int id_hi) {
            double acc = 0.0;
            for (int id = id_lo; id < id_hi; ++id) {
                const faces::FaceImage ref = adapter::reference_render(id);
                const enc::IdentityEmbedding e_id = enc::embed(a.encoder, ref);
                flow::SampleConfig sc;
                sc.steps = steps;
                sc.guidance = guidance;
                sc.prompt = {faces::TransformKind::Plain, 0.0};
                sc.adapter = &a.adapter_stack;
                sc.adapter_scale = alpha;
                sc.e_id = &e_id;
                sc.seed = derive_seed(9090, "margin", static_cast<uint64_t>(id));
                sc.record_states = false;
                auto [img, traj] = flow::sample(net, sc);
                acc += enc::id_similarity(a.encoder, img, ref);
            }
            return acc / (id_hi - id_lo);
        };
        const double teacher_full = mean_idsim(a.teacher, full.teacher_steps, full.teacher_guidance,
                                               1.0, full.n_identities, full.n_identities + 6);
        const double teacher_off = mean_idsim(a.teacher, full.teacher_steps, full.teacher_guidance,
                                              0.0, full.n_identities, full.n_identities + 6);
        require(teacher_full > teacher_off,
                "no unseen-identity margin: " + fmt(teacher_full) + " vs " + fmt(teacher_off));
        const double student_full = mean_idsim(a.student, full.student_steps, full.student_guidance,
                                               1.0, 0, 10);
        const double student_off = mean_idsim(a.student, full.student_steps, full.student_guidance,
                                              0.0, 0, 10);
        require(student_full > student_off, "no student-arm margin: " + fmt(student_full) + " vs " +
                                                fmt(student_off));

        // distillation quality, paired over shared noise and prompts
        const std::string rpath = harness::ArtifactPaths::in(full.out_dir).reflowed;
        const flow::FlowBackbone reflowed = flow::FlowBackbone::load(rpath);
        int reflow_wins = 0;
        double mse_student = 0.0, mse_teacher4 = 0.0;
        const int n_pairs = 60;
        for (int i = 0; i < n_pairs; ++i) {
            const auto kind = static_cast<faces::TransformKind>(i % 3);
            const uint64_t seed = derive_seed(9191, "distq", static_cast<uint64_t>(i));
            auto run = [&](const flow::FlowBackbone& net, int steps, double guidance) {
                flow::SampleConfig sc;
                sc.steps = steps;
                sc.guidance = guidance;
                sc.prompt = {kind, 0.0};
                sc.seed = seed;
                sc.record_states = false;
                return flow::sample(net, sc);
            };
            auto [t28, traj28] = run(a.teacher, full.teacher_steps, full.teacher_guidance);
            auto [t4, traj4] = run(a.teacher, full.student_steps, full.teacher_guidance);
            auto [r4, trajr] = run(reflowed, full.student_steps, 0.0);
            auto [s4, trajs] = run(a.student, full.student_steps, full.student_guidance);

            if (enc::perceptual_distance(a.encoder, r4, t28) <
                enc::perceptual_distance(a.encoder, t4, t28))
                ++reflow_wins;
            for (int p = 0; p < faces::kImagePixels; ++p) {
                const double ds = s4.pixels[p] - t28.pixels[p];
                const double dt = t4.pixels[p] - t28.pixels[p];
                mse_student += ds * ds;
                mse_teacher4 += dt * dt;
            }
        }
        require(reflow_wins * 2 > n_pairs,
                "reflow does not improve few-step fidelity: wins " + fmt(reflow_wins) + "/" +
                    fmt(n_pairs));
        require(mse_student < mse_teacher4, "endpoint distillation did not beat the truncated teacher");
        return "margins positive (teacher " + fmt(teacher_full) + ">" + fmt(teacher_off) +
               ", student " + fmt(student_full) + ">" + fmt(student_off) + "), reflow wins " +
               fmt(reflow_wins) + "/" + fmt(n_pairs) + ", distill mse " + fmt(mse_student) + " < " +
               fmt(mse_teacher4);
    });

    int failures = 0;
    for (const auto& c : g_results)
        if (!c.pass) ++failures;
    std::cout << (failures == 0 ? "ALL CRITERIA PASS" : std::to_string(failures) + " CRITERIA FAILED")
              << std::endl;
    return failures == 0 ? 0 : 1;
}
