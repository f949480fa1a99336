#include "flowprobe/harness/commands.hpp"

#include <algorithm>
#include <atomic>
#include <cmath>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <ostream>
#include <sstream>
#include <thread>

#include "flowprobe/common/error.hpp"
#include "flowprobe/common/rng.hpp"
#include "flowprobe/harness/svg.hpp"

namespace flowprobe::harness {

namespace fs = std::filesystem;

namespace {

std::string f9(double v) {
    char buf[48];
    std::snprintf(buf, sizeof(buf), "%.9f", v);
    return buf;
}

std::string f6(double v) {
    char buf[48];
    std::snprintf(buf, sizeof(buf), "%.6f", v);
    return buf;
}

double median(std::vector<double> v) {
    if (v.empty()) return 0.0;
    std::sort(v.begin(), v.end());
    const size_t n = v.size();
    return (n % 2 == 1) ? v[n / 2] : 0.5 * (v[n / 2 - 1] + v[n / 2]);
}

std::ofstream open_csv(const std::string& path) {
    fs::create_directories(fs::path(path).parent_path());
    std::ofstream f(path, std::ios::trunc);
    if (!f) throw IoError("cannot write " + path);
    return f;
}

struct SampleMeasure {
    double idsim = 0.0;
    double lpips = 0.0;
    double latency_s = 0.0;
    faces::FaceImage image;
};

struct EvalItem {
    int identity = 0;
    faces::PromptTransform prompt;
    uint64_t seed = 0;
};

// One generated sample measured against the subject's reference render. The
// same routine backs every command so identical (backbone, T, alpha, prompt,
// identity, seed) cells agree bit-for-bit across commands.
SampleMeasure measure_one(const flow::FlowBackbone& backbone, const adapter::AdapterStack& stack,
                          double alpha, const enc::EncoderModel& encoder, int steps, double guidance,
                          const EvalItem& item, const faces::FaceImage& reference,
                          const enc::IdentityEmbedding& e_id) {
    flow::SampleConfig sc;
    sc.steps = steps;
    sc.guidance = guidance;
    sc.prompt = item.prompt;
    sc.adapter = &stack;
    sc.adapter_scale = alpha;
    sc.e_id = &e_id;
    sc.seed = item.seed;
    sc.record_states = false;
    sc.conditioned_identity = item.identity;
    auto [img, traj] = flow::sample(backbone, sc);

    SampleMeasure m;
    m.idsim = enc::id_similarity(encoder, img, reference);
    m.lpips = enc::perceptual_distance(encoder, img, reference);
    m.latency_s = traj.wall_seconds;
    m.image = std::move(img);
    return m;
}

void parallel_for(size_t count, int threads, const std::function<void(size_t)>& fn) {
    if (threads <= 1 || count <= 1) {
        for (size_t i = 0; i < count; ++i) fn(i);
        return;
    }
    std::atomic<size_t> next{0};
    std::vector<std::thread> pool;
    const int workers = std::min<int>(threads, static_cast<int>(count));
    pool.reserve(static_cast<size_t>(workers));
    for (int w = 0; w < workers; ++w)
        pool.emplace_back([&]() {
            for (size_t i = next.fetch_add(1); i < count; i = next.fetch_add(1)) fn(i);
        });
    for (auto& th : pool) th.join();
}

struct ArmOutput {
    ArmSummary summary;
    std::vector<SampleMeasure> samples;  // parallel to items
};

ArmOutput run_arm(const std::string& name, const flow::FlowBackbone& backbone,
                  const adapter::AdapterStack& stack, double alpha, const enc::EncoderModel& encoder,
                  int steps, double guidance, const std::vector<EvalItem>& items,
                  const std::vector<faces::FaceImage>& references,
                  const std::vector<enc::IdentityEmbedding>& e_ids, int threads) {
    ArmOutput out;
    out.samples.resize(items.size());
    parallel_for(items.size(), threads, [&](size_t i) {
        const EvalItem& item = items[i];
        out.samples[i] = measure_one(backbone, stack, alpha, encoder, steps, guidance, item,
                                     references[static_cast<size_t>(item.identity)],
                                     e_ids[static_cast<size_t>(item.identity)]);
    });

    out.summary.arm = name;
    out.summary.steps = steps;
    out.summary.guidance = guidance;
    out.summary.n = static_cast<int>(items.size());
    std::vector<double> lats;
    for (const auto& m : out.samples) {
        out.summary.idsim_mean += m.idsim;
        out.summary.lpips_mean += m.lpips;
        lats.push_back(m.latency_s);
    }
    out.summary.idsim_mean /= static_cast<double>(items.size());
    out.summary.lpips_mean /= static_cast<double>(items.size());
    out.summary.latency_median_s = median(lats);
    return out;
}

}  // namespace

ReplacementReport cmd_replacement(const ExperimentConfig& c, std::ostream& log) {
    Artifacts a = load_artifacts(c);
    const int threads = c.resolve_threads();
    const auto prompts = transform_mix(c);

    std::vector<faces::FaceImage> references;
    std::vector<enc::IdentityEmbedding> e_ids;
    for (int id = 0; id < c.n_identities; ++id) {
        references.push_back(adapter::reference_render(id));
        e_ids.push_back(enc::embed(a.encoder, references.back()));
    }

    // Paired noise per (identity, prompt) cell, shared by both arms.
    std::vector<EvalItem> items;
    for (int id = 0; id < c.n_identities; ++id)
        for (size_t pi = 0; pi < prompts.size(); ++pi)
            items.push_back({id, prompts[pi],
                             derive_seed(c.master_seed, "repl-eps", static_cast<uint64_t>(id), pi)});

    // The student arm goes through the training-free transfer handle; the
    // adapter bytes are untouched by construction and verified here.
    const std::string adapter_sha_before = a.adapter_stack.checksum();
    const adapter::BoundAdapter bound = adapter::transfer(a.adapter_stack, a.student);

    log << "replacement: " << items.size() << " samples per arm, threads=" << threads << "\n";
    ArmOutput baseline = run_arm("teacher_28step", a.teacher, a.adapter_stack, c.eval_id_scale,
                                 a.encoder, c.teacher_steps, c.teacher_guidance, items, references,
                                 e_ids, threads);
    ArmOutput ours = run_arm("student_4step", a.student, *bound.stack, c.eval_id_scale, a.encoder,
                             c.student_steps, c.student_guidance, items, references, e_ids, threads);

    if (a.adapter_stack.checksum() != adapter_sha_before)
        throw ContractError("adapter parameters changed during evaluation");

    // Truncated-teacher diagnostic: plain prompt, small subject subset.
    std::vector<EvalItem> diag_items;
    const int diag_n = std::min(c.diagnostic_subjects, c.n_identities);
    for (int id = 0; id < diag_n; ++id)
        diag_items.push_back({id, prompts[0],
                              derive_seed(c.master_seed, "repl-eps", static_cast<uint64_t>(id), 0)});
    ArmOutput diag = run_arm("teacher_truncated", a.teacher, a.adapter_stack, c.eval_id_scale,
                             a.encoder, c.student_steps, c.teacher_guidance, diag_items, references,
                             e_ids, threads);

    ReplacementReport rep;
    rep.baseline = baseline.summary;
    rep.ours = ours.summary;
    rep.diagnostic = diag.summary;
    rep.idsim_delta = rep.ours.idsim_mean - rep.baseline.idsim_mean;
    rep.lpips_delta = rep.ours.lpips_mean - rep.baseline.lpips_mean;
    rep.speedup = rep.baseline.latency_median_s / rep.ours.latency_median_s;

    for (size_t pi = 0; pi < prompts.size(); ++pi) {
        PromptBreakdownRow row;
        row.kind = prompts[pi].kind;
        int n = 0;
        for (size_t i = 0; i < items.size(); ++i) {
            if (items[i].prompt.kind != prompts[pi].kind) continue;
            row.baseline_idsim += baseline.samples[i].idsim;
            row.ours_idsim += ours.samples[i].idsim;
            ++n;
        }
        row.baseline_idsim /= n;
        row.ours_idsim /= n;
        rep.per_prompt.push_back(row);
    }

    // Per-identity CSV.
    {
        auto f = open_csv(c.out_dir + "/replacement/replacement_per_identity.csv");
        f << "arm,identity,prompt,steps,guidance,idsim,lpips_like,latency_s,encoder_sha,backbone_sha\n";
        auto dump = [&](const ArmOutput& arm, const std::string& sha) {
            for (size_t i = 0; i < items.size(); ++i)
                f << arm.summary.arm << "," << items[i].identity << ","
                  << faces::transform_name(items[i].prompt.kind) << "," << arm.summary.steps << ","
                  << f6(arm.summary.guidance) << "," << f9(arm.samples[i].idsim) << ","
                  << f9(arm.samples[i].lpips) << "," << f6(arm.samples[i].latency_s) << ","
                  << a.encoder_sha << "," << sha << "\n";
        };
        dump(baseline, a.teacher_sha);
        dump(ours, a.student_sha);
        for (size_t i = 0; i < diag_items.size(); ++i)
            f << diag.summary.arm << "," << diag_items[i].identity << ","
              << faces::transform_name(diag_items[i].prompt.kind) << "," << diag.summary.steps << ","
              << f6(diag.summary.guidance) << "," << f9(diag.samples[i].idsim) << ","
              << f9(diag.samples[i].lpips) << "," << f6(diag.samples[i].latency_s) << ","
              << a.encoder_sha << "," << a.teacher_sha << "\n";
    }

    // Report CSV: arm rows, delta row, per-prompt rows.
    {
        auto f = open_csv(c.out_dir + "/replacement/replacement_report.csv");
        f << "row,arm,prompt,steps,guidance,n,idsim,lpips_like,latency_s,speedup,encoder_sha,backbone_sha\n";
        auto arm_row = [&](const ArmSummary& s, const std::string& sha, double speedup) {
            f << "arm," << s.arm << ",all," << s.steps << "," << f6(s.guidance) << "," << s.n << ","
              << f9(s.idsim_mean) << "," << f9(s.lpips_mean) << "," << f6(s.latency_median_s) << ","
              << f6(speedup) << "," << a.encoder_sha << "," << sha << "\n";
        };
        arm_row(rep.baseline, a.teacher_sha, 1.0);
        arm_row(rep.ours, a.student_sha, rep.speedup);
        arm_row(rep.diagnostic, a.teacher_sha,
                rep.baseline.latency_median_s / rep.diagnostic.latency_median_s);
        f << "delta,ours_vs_baseline,all," << rep.ours.steps << "," << f6(rep.ours.guidance) << ","
          << rep.ours.n << "," << f9(rep.idsim_delta) << "," << f9(rep.lpips_delta) << ","
          << f6(rep.ours.latency_median_s - rep.baseline.latency_median_s) << "," << f6(rep.speedup)
          << "," << a.encoder_sha << "," << a.student_sha << "\n";
        for (const auto& row : rep.per_prompt) {
            f << "prompt," << "baseline" << "," << faces::transform_name(row.kind) << ","
              << rep.baseline.steps << "," << f6(rep.baseline.guidance) << ","
              << rep.baseline.n / static_cast<int>(rep.per_prompt.size()) << ","
              << f9(row.baseline_idsim) << ",,," << "," << a.encoder_sha << "," << a.teacher_sha
              << "\n";
            f << "prompt," << "ours" << "," << faces::transform_name(row.kind) << ","
              << rep.ours.steps << "," << f6(rep.ours.guidance) << ","
              << rep.ours.n / static_cast<int>(rep.per_prompt.size()) << "," << f9(row.ours_idsim)
              << ",,," << "," << a.encoder_sha << "," << a.student_sha << "\n";
        }
    }

    // A few sample images per arm for eyeballing.
    {
        const std::string dir = c.out_dir + "/replacement/samples";
        fs::create_directories(dir);
        const int show = std::min(3, c.n_identities);
        for (int id = 0; id < show; ++id)
            for (size_t pi = 0; pi < prompts.size(); ++pi) {
                const size_t i = static_cast<size_t>(id) * prompts.size() + pi;
                char name[128];
                std::snprintf(name, sizeof(name), "%s/baseline_id%03d_%s.pgm", dir.c_str(), id,
                              faces::transform_name(prompts[pi].kind));
                faces::write_pgm(name, baseline.samples[i].image);
                std::snprintf(name, sizeof(name), "%s/ours_id%03d_%s.pgm", dir.c_str(), id,
                              faces::transform_name(prompts[pi].kind));
                faces::write_pgm(name, ours.samples[i].image);
            }
    }

    log << "  baseline idsim " << f6(rep.baseline.idsim_mean) << " lpips "
        << f6(rep.baseline.lpips_mean) << " latency " << f6(rep.baseline.latency_median_s) << "s\n";
    log << "  ours     idsim " << f6(rep.ours.idsim_mean) << " lpips " << f6(rep.ours.lpips_mean)
        << " latency " << f6(rep.ours.latency_median_s) << "s (speedup " << f6(rep.speedup)
        << "x)\n";
    return rep;
}

MechSweepResult cmd_mech_sweep(const ExperimentConfig& c, const std::string& reference_csv,
                               bool dump_traj, std::ostream& log) {
    Artifacts a = load_artifacts(c);

    probes::StepSweepConfig sc;
    sc.steps = c.sweep_steps;
    sc.alphas = c.sweep_alphas;
    sc.n_subjects = std::min(c.sweep_subjects, c.n_identities);
    sc.prompt = {faces::TransformKind::Stylized, c.stylized_strength};
    sc.guidance = c.teacher_guidance;
    sc.seed = c.master_seed;
    sc.threads = c.resolve_threads();

    log << "mech-sweep: " << sc.steps.size() << " step counts x " << sc.alphas.size()
        << " scales x " << sc.n_subjects << " subjects\n";
    MechSweepResult result;
    result.sweep = probes::run_step_sweep(a.teacher, a.adapter_stack, a.encoder, sc);

    // Internal validity checks: paired noise, zero-scale stream silence,
    // lift identity.
    std::string bug;
    if (!result.sweep.paired_noise_ok) bug = "initial noise differed across step counts";
    if (bug.empty() && !result.sweep.alpha0_ratio_zero)
        bug = "stream ratio nonzero in a zero-scale run";
    if (bug.empty())
        for (const auto& r : result.sweep.records)
            if (std::abs(r.lift - (r.idsim_full - r.idsim_weak)) > 1e-12) {
                bug = "lift does not recompute from similarity columns";
                break;
            }

    // Sweep CSV.
    {
        auto f = open_csv(c.out_dir + "/mech_sweep/sweep.csv");
        f << "steps,idsim_full,idsim_weak,lift,stream_ratio,det_conf,sharpness,contrast,lpips_like,"
             "latency_s,n_subjects,encoder_sha,backbone_sha\n";
        for (const auto& r : result.sweep.records)
            f << r.steps << "," << f9(r.idsim_full) << "," << f9(r.idsim_weak) << "," << f9(r.lift)
              << "," << f9(r.stream_ratio) << "," << f9(r.det_conf) << "," << f9(r.sharpness) << ","
              << f9(r.contrast) << "," << f9(r.lpips_like) << "," << f6(r.latency_s) << ","
              << r.n_subjects << "," << a.encoder_sha << "," << a.teacher_sha << "\n";
    }

    if (dump_traj && !result.sweep.records.empty()) {
        // One full-resolution trajectory dump: first subject, largest step
        // count, full adapter scale.
        const int T = c.sweep_steps.back();
        flow::SampleConfig cfg;
        cfg.steps = T;
        cfg.guidance = sc.guidance;
        cfg.prompt = sc.prompt;
        cfg.adapter = &a.adapter_stack;
        cfg.adapter_scale = 1.0;
        const faces::FaceImage ref = adapter::reference_render(0);
        const enc::IdentityEmbedding e0 = enc::embed(a.encoder, ref);
        cfg.e_id = &e0;
        cfg.seed = derive_seed(c.master_seed, "sweep-eps", 0);
        cfg.capture_streams = true;
        cfg.record_states = false;
        auto [img, traj] = flow::sample(a.teacher, cfg);
        flow::write_trajectory_csv(
            c.out_dir + "/mech_sweep/traj_" + std::to_string(cfg.seed) + ".csv", traj);
    }

    probes::PatternThresholds th;
    th.theta = c.early_window_theta;
    std::vector<probes::PatternRow> rows;
    for (const auto& r : result.sweep.records) rows.push_back(probes::to_pattern_row(r));

    if (bug.empty()) {
        try {
            result.pattern = probes::pattern_check(rows, th);
        } catch (const ContractError& e) {
            bug = e.what();
        }
    }

    // Pattern report CSV.
    {
        auto f = open_csv(c.out_dir + "/mech_sweep/pattern_report.csv");
        f << "predicate,pass,measured,detail,encoder_sha,backbone_sha\n";
        for (const auto& p : result.pattern.predicates)
            f << p.name << "," << (p.pass ? "1" : "0") << "," << f9(p.measured) << ",\""
              << p.detail << "\"," << a.encoder_sha << "," << a.teacher_sha << "\n";
    }

    // Plots with the reference sweep pattern overlaid (rescaled to its own
    // peak since the absolute scales differ).
    {
        probes::ReferencePattern ref;
        bool have_ref = false;
        try {
            ref = probes::load_reference_pattern(reference_csv);
            have_ref = true;
        } catch (const std::exception&) {
            have_ref = false;  // plots simply omit the overlay
        }

        auto series_of = [&](auto getter, const std::string& label, const std::string& color) {
            Series s;
            s.label = label;
            s.color = color;
            for (const auto& r : result.sweep.records)
                s.points.emplace_back(static_cast<double>(r.steps), getter(r));
            return s;
        };

        {
            std::vector<Series> ss;
            ss.push_back(series_of([](const probes::SweepRecord& r) { return r.idsim_full; },
                                   "identity similarity (full)", "#1f77b4"));
            ss.push_back(series_of([](const probes::SweepRecord& r) { return r.idsim_weak; },
                                   "identity similarity (weak)", "#17becf"));
            if (have_ref) {
                Series rs;
                rs.label = "reference pattern (rescaled)";
                rs.color = "#888888";
                rs.rescale_to_left_axis = true;
                for (const auto& r : ref.rows) rs.points.emplace_back(r.steps, r.idsim_full);
                ss.push_back(rs);
            }
            write_line_chart(c.out_dir + "/mech_sweep/idsim_vs_steps.svg",
                             {"identity similarity vs step count", "steps", "cosine similarity"}, ss);
        }
        {
            std::vector<Series> ss;
            ss.push_back(series_of([](const probes::SweepRecord& r) { return r.sharpness; },
                                   "sharpness", "#d62728"));
            if (have_ref) {
                Series rs;
                rs.label = "reference pattern (rescaled)";
                rs.color = "#888888";
                rs.rescale_to_left_axis = true;
                for (const auto& r : ref.rows) rs.points.emplace_back(r.steps, r.sharpness);
                ss.push_back(rs);
            }
            write_line_chart(c.out_dir + "/mech_sweep/sharpness_vs_steps.svg",
                             {"sharpness vs step count", "steps", "laplacian variance"}, ss);
        }
        {
            std::vector<Series> ss;
            ss.push_back(series_of([](const probes::SweepRecord& r) { return r.stream_ratio; },
                                   "stream ratio", "#2ca02c"));
            if (have_ref) {
                Series rs;
                rs.label = "reference pattern (rescaled)";
                rs.color = "#888888";
                rs.rescale_to_left_axis = true;
                for (const auto& r : ref.rows) rs.points.emplace_back(r.steps, r.stream_ratio);
                ss.push_back(rs);
            }
            write_line_chart(c.out_dir + "/mech_sweep/stream_ratio_vs_steps.svg",
                             {"conditioning stream ratio vs step count", "steps", "||s1|| / ||s0||"},
                             ss);
        }
    }

    if (!bug.empty()) {
        result.outcome = MechSweepOutcome::ArtifactBug;
        result.outcome_detail = bug;
    } else if (!result.pattern.all_pass) {
        result.outcome = MechSweepOutcome::PhenomenonAbsent;
        std::string failed;
        for (const auto& p : result.pattern.predicates)
            if (!p.pass) failed += (failed.empty() ? "" : ", ") + p.name;
        result.outcome_detail = "predicates failed: " + failed;
    }

    for (const auto& p : result.pattern.predicates)
        log << "  [" << (p.pass ? "pass" : "FAIL") << "] " << p.name << " = " << p.measured << " ("
            << p.detail << ")\n";
    return result;
}

AblationResult cmd_ablations(const ExperimentConfig& c, std::ostream& log) {
    Artifacts a = load_artifacts(c);
    const int threads = c.resolve_threads();
    const int n_subjects = std::min(c.sweep_subjects, c.n_identities);

    std::vector<faces::FaceImage> references;
    std::vector<enc::IdentityEmbedding> e_ids;
    for (int id = 0; id < n_subjects; ++id) {
        references.push_back(adapter::reference_render(id));
        e_ids.push_back(enc::embed(a.encoder, references.back()));
    }

    // Mean similarity for one (prompt, T, alpha) cell; noise seeds match the
    // mechanistic sweep so shared cells agree exactly.
    auto cell_idsim = [&](const faces::PromptTransform& prompt, int steps, double alpha) {
        std::vector<double> vals(static_cast<size_t>(n_subjects));
        parallel_for(static_cast<size_t>(n_subjects), threads, [&](size_t id) {
            EvalItem item{static_cast<int>(id), prompt,
                          derive_seed(c.master_seed, "sweep-eps", id)};
            vals[id] = measure_one(a.teacher, a.adapter_stack, alpha, a.encoder, steps,
                                   c.teacher_guidance, item, references[id], e_ids[id])
                           .idsim;
        });
        double mean = 0.0;
        for (double v : vals) mean += v;
        return mean / static_cast<double>(n_subjects);
    };

    AblationResult result;
    const auto prompts = transform_mix(c);

    log << "ablations: prompt grid " << prompts.size() << "x" << c.sweep_steps.size()
        << ", scale grid " << c.ablation_alphas.size() << "x" << c.sweep_steps.size() << "\n";

    for (const auto& prompt : prompts)
        for (int T : c.sweep_steps)
            result.prompt_grid.push_back(
                {faces::transform_name(prompt.kind), T, cell_idsim(prompt, T, 1.0)});

    const faces::PromptTransform stress{faces::TransformKind::Stylized, c.stylized_strength};
    for (double alpha : c.ablation_alphas)
        for (int T : c.sweep_steps)
            result.alpha_grid.push_back({f6(alpha), T, cell_idsim(stress, T, alpha)});

    double plain_peak = 0.0, stylized_peak = 0.0;
    for (const auto& cell : result.prompt_grid) {
        if (cell.arm == "plain") plain_peak = std::max(plain_peak, cell.idsim);
        if (cell.arm == "stylized") stylized_peak = std::max(stylized_peak, cell.idsim);
    }
    result.stylized_below_plain = stylized_peak < plain_peak;

    {
        auto f = open_csv(c.out_dir + "/ablations/prompt_grid.csv");
        f << "prompt,steps,idsim,encoder_sha,backbone_sha\n";
        for (const auto& cell : result.prompt_grid)
            f << cell.arm << "," << cell.steps << "," << f9(cell.idsim) << "," << a.encoder_sha
              << "," << a.teacher_sha << "\n";
    }
    {
        auto f = open_csv(c.out_dir + "/ablations/alpha_grid.csv");
        f << "alpha,steps,idsim,encoder_sha,backbone_sha\n";
        for (const auto& cell : result.alpha_grid)
            f << cell.arm << "," << cell.steps << "," << f9(cell.idsim) << "," << a.encoder_sha
              << "," << a.teacher_sha << "\n";
    }
    {
        auto f = open_csv(c.out_dir + "/ablations/notes.csv");
        f << "check,value,encoder_sha,backbone_sha\n";
        f << "stylized_peak_below_plain_peak," << (result.stylized_below_plain ? "1" : "0") << ","
          << a.encoder_sha << "," << a.teacher_sha << "\n";
    }

    log << "  stylized peak below plain peak: " << (result.stylized_below_plain ? "yes" : "no")
        << "\n";
    return result;
}

void cmd_report(const ExperimentConfig& c, std::ostream& log) {
    std::ofstream f(c.out_dir + "/report.md", std::ios::trunc);
    if (!f) throw IoError("cannot write report.md");

    auto copy_csv = [&](const std::string& path, const std::string& title) {
        std::ifstream in(path);
        if (!in) return;
        f << "## " << title << "\n\n```\n";
        std::string line;
        while (std::getline(in, line)) f << line << "\n";
        f << "```\n\n";
    };

    f << "# flowprobe results\n\n";
    f << "Outputs under `" << c.out_dir << "`.\n\n";
    copy_csv(c.out_dir + "/replacement/replacement_report.csv", "Backbone replacement");
    copy_csv(c.out_dir + "/mech_sweep/sweep.csv", "Mechanistic step sweep");
    copy_csv(c.out_dir + "/mech_sweep/pattern_report.csv", "Pattern predicates");
    copy_csv(c.out_dir + "/ablations/notes.csv", "Ablation notes");
    f << "## Plots\n\n";
    for (const char* p : {"mech_sweep/idsim_vs_steps.svg", "mech_sweep/sharpness_vs_steps.svg",
                          "mech_sweep/stream_ratio_vs_steps.svg"})
        f << "- `" << p << "`\n";
    log << "wrote " << c.out_dir << "/report.md\n";
}

}  // namespace flowprobe::harness
