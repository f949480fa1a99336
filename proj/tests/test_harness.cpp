#include <filesystem>
#include <fstream>
#include <sstream>

#include "doctest.h"
#include "flowprobe/harness/commands.hpp"
#include "flowprobe/harness/svg.hpp"

using namespace flowprobe;
using namespace flowprobe::harness;

namespace fs = std::filesystem;

namespace {

// Smallest config that still trains: used for end-to-end harness checks.
ExperimentConfig tiny_config(const std::string& out_dir) {
    ExperimentConfig c;
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
    REQUIRE(f.good());
    std::stringstream ss;
    ss << f.rdbuf();
    return ss.str();
}

// Strip the wall-clock columns (latency_s, speedup) from a CSV so the rest
// can be compared byte-for-byte across runs.
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

const std::string kRefCsv = [] {
    for (const char* p : {"data/reference_sweep_pattern.csv", "../data/reference_sweep_pattern.csv",
                          "../../data/reference_sweep_pattern.csv"})
        if (fs::exists(p)) return std::string(p);
    return std::string("data/reference_sweep_pattern.csv");
}();

}  // namespace

TEST_CASE("config file round trip and unknown-key rejection") {
    const auto dir = fs::temp_directory_path() / "flowprobe_cfg";
    fs::create_directories(dir);
    const std::string path = (dir / "cfg.toml").string();

    ExperimentConfig c = tiny_config("somewhere");
    c.sweep_alphas = {1.0, 0.25, 0.0};
    c.save(path);
    const ExperimentConfig loaded = ExperimentConfig::load(path);
    CHECK(loaded.out_dir == "somewhere");
    CHECK(loaded.n_identities == 3);
    CHECK(loaded.teacher_epochs == 4);
    CHECK(loaded.sweep_steps == std::vector<int>{1, 2, 3, 4, 6});
    CHECK(loaded.sweep_alphas == std::vector<double>{1.0, 0.25, 0.0});
    CHECK(loaded.dataset_hash() == c.dataset_hash());
    CHECK(loaded.student_hash() == c.student_hash());

    {
        std::ofstream f(path, std::ios::app);
        f << "bogus_key = 3\n";
    }
    CHECK_THROWS_AS(ExperimentConfig::load(path), IoError);
}

TEST_CASE("default configuration transcribes the experiment plan") {
    const ExperimentConfig c;
    CHECK(c.n_identities == 28);
    CHECK(c.master_seed == 0);
    CHECK(c.teacher_steps == 28);
    CHECK(c.teacher_guidance == 3.5);
    CHECK(c.student_steps == 4);
    CHECK(c.student_guidance == 0.0);
    CHECK(c.target_steps == 4);
    CHECK(c.diagnostic_subjects == 10);
    CHECK(c.sweep_subjects == 10);
    CHECK(c.sweep_steps == std::vector<int>{1, 2, 4, 6, 8, 12, 16, 20, 24, 28});
    CHECK(c.sweep_alphas == std::vector<double>{1.0, 0.25, 0.0});
    CHECK(c.ablation_alphas == std::vector<double>{0.25, 0.5, 1.0, 1.5, 2.0});
    CHECK(c.early_window_theta == 0.95);
    CHECK(c.eval_id_scale == 1.0);

    probes::StepSweepConfig sc;
    CHECK(sc.steps == std::vector<int>{1, 2, 4, 6, 8, 12, 16, 20, 24, 28});
}

TEST_CASE("thread resolution uses the environment fallback") {
    ExperimentConfig c;
    c.threads = 3;
    CHECK(c.resolve_threads() == 3);
    c.threads = 0;
    setenv("FLOWPROBE_THREADS", "5", 1);
    CHECK(c.resolve_threads() == 5);
    unsetenv("FLOWPROBE_THREADS");
    CHECK(c.resolve_threads() >= 1);
}

TEST_CASE("stage hashes react to their inputs") {
    ExperimentConfig a = tiny_config("x");
    ExperimentConfig b = a;
    CHECK(a.teacher_hash() == b.teacher_hash());
    b.teacher_epochs += 1;
    CHECK(a.teacher_hash() != b.teacher_hash());
    CHECK(a.student_hash() != b.student_hash());  // downstream hash shifts too
    CHECK(a.dataset_hash() == b.dataset_hash());  // upstream unaffected
}

TEST_CASE("svg charts are well-formed xml") {
    const auto dir = fs::temp_directory_path() / "flowprobe_svg";
    fs::create_directories(dir);
    const std::string path = (dir / "chart.svg").string();
    Series s1{"measured", "#1f77b4", {{1, 0.1}, {2, 0.4}, {4, 0.5}}, false};
    Series s2{"reference (rescaled)", "#888888", {{1, 10.0}, {2, 40.0}, {4, 55.0}}, true};
    write_line_chart(path, {"title with <angle> & amp", "steps", "value"}, {s1, s2});

    const std::string xml = slurp(path);
    CHECK(xml.find("<svg") != std::string::npos);
    CHECK(xml.rfind("</svg>") != std::string::npos);
    CHECK(xml.find("&amp; amp") != std::string::npos);
    CHECK(xml.find("<angle>") == std::string::npos);  // escaped

    // tag balance check
    int depth = 0;
    size_t i = 0;
    while ((i = xml.find('<', i)) != std::string::npos) {
        const size_t close = xml.find('>', i);
        REQUIRE(close != std::string::npos);
        const std::string tag = xml.substr(i, close - i + 1);
        if (tag.rfind("<?", 0) == 0 || tag.find("/>") != std::string::npos) {
            // declaration or self-closing
        } else if (tag.rfind("</", 0) == 0) {
            --depth;
        } else {
            ++depth;
        }
        i = close + 1;
    }
    CHECK(depth == 0);
}

TEST_CASE("end-to-end harness on a tiny config") {
    const auto dir = fs::temp_directory_path() / "flowprobe_e2e";
    fs::remove_all(dir);
    const ExperimentConfig c = tiny_config(dir.string());

    std::ostringstream log;
    const BuildResult r1 = build_all(c, log);
    CHECK(r1.built == 6);
    CHECK(r1.skipped == 0);

    // idempotence: a rerun skips everything
    const BuildResult r2 = build_all(c, log);
    CHECK(r2.built == 0);
    CHECK(r2.skipped == 6);

    // artifacts exist
    const ArtifactPaths paths = ArtifactPaths::in(c.out_dir);
    for (const std::string& p :
         {paths.encoder, paths.teacher, paths.adapter, paths.reflowed, paths.student})
        CHECK(fs::exists(p));
    CHECK(fs::exists(paths.dataset_dir + "/manifest.csv"));

    // changing a stage config rebuilds from that stage only
    ExperimentConfig c2 = c;
    c2.distill_epochs += 1;
    const BuildResult r3 = build_all(c2, log);
    CHECK(r3.built == 1);
    CHECK(r3.skipped == 5);

    // replacement command produces reports and a sane structure
    const ReplacementReport rep = cmd_replacement(c, log);
    CHECK(rep.baseline.n == c.n_identities * 3);
    CHECK(rep.ours.n == c.n_identities * 3);
    CHECK(rep.diagnostic.n == c.diagnostic_subjects);
    CHECK(rep.speedup > 0.0);
    CHECK(rep.per_prompt.size() == 3);
    // deltas recompute from the arm means exactly
    CHECK(rep.idsim_delta == rep.ours.idsim_mean - rep.baseline.idsim_mean);
    CHECK(rep.lpips_delta == rep.ours.lpips_mean - rep.baseline.lpips_mean);
    CHECK(rep.speedup == rep.baseline.latency_median_s / rep.ours.latency_median_s);
    CHECK(fs::exists(c.out_dir + "/replacement/replacement_report.csv"));
    CHECK(fs::exists(c.out_dir + "/replacement/replacement_per_identity.csv"));

    // mech sweep emits CSVs and SVGs; tiny models may or may not show the
    // phenomenon, but the data must be internally valid
    const MechSweepResult sweep = cmd_mech_sweep(c, kRefCsv, true, log);
    CHECK(sweep.outcome != MechSweepOutcome::ArtifactBug);
    CHECK(sweep.sweep.records.size() == c.sweep_steps.size());
    for (size_t i = 0; i < sweep.sweep.records.size(); ++i)
        CHECK(sweep.sweep.records[i].steps == c.sweep_steps[i]);
    CHECK(fs::exists(c.out_dir + "/mech_sweep/sweep.csv"));
    CHECK(fs::exists(c.out_dir + "/mech_sweep/pattern_report.csv"));
    CHECK(fs::exists(c.out_dir + "/mech_sweep/idsim_vs_steps.svg"));

    // lift recomputes exactly
    for (const auto& r : sweep.sweep.records)
        CHECK(r.lift == r.idsim_full - r.idsim_weak);

    // ablations: shared-seed consistency with the sweep's weak arm
    const AblationResult abl = cmd_ablations(c, log);
    CHECK(abl.prompt_grid.size() == 3 * c.sweep_steps.size());
    CHECK(abl.alpha_grid.size() == c.ablation_alphas.size() * c.sweep_steps.size());
    for (size_t si = 0; si < c.sweep_steps.size(); ++si) {
        const auto& rec = sweep.sweep.records[si];
        for (const auto& cell : abl.alpha_grid) {
            if (cell.steps == rec.steps && cell.arm == "0.250000")
                CHECK(cell.idsim == rec.idsim_weak);
            if (cell.steps == rec.steps && cell.arm == "1.000000")
                CHECK(cell.idsim == rec.idsim_full);
        }
    }

    cmd_report(c, log);
    CHECK(fs::exists(c.out_dir + "/report.md"));
}

TEST_CASE("two identical runs produce byte-identical non-timing csv output") {
    const auto dir_a = fs::temp_directory_path() / "flowprobe_det_a";
    const auto dir_b = fs::temp_directory_path() / "flowprobe_det_b";
    fs::remove_all(dir_a);
    fs::remove_all(dir_b);

    std::ostringstream log;
    for (const auto& dir : {dir_a, dir_b}) {
        ExperimentConfig c = tiny_config(dir.string());
        build_all(c, log);
        cmd_replacement(c, log);
        cmd_mech_sweep(c, kRefCsv, false, log);
        cmd_ablations(c, log);
    }

    for (const char* rel :
         {"dataset/manifest.csv", "mech_sweep/sweep.csv", "mech_sweep/pattern_report.csv",
          "ablations/prompt_grid.csv", "ablations/alpha_grid.csv",
          "replacement/replacement_report.csv", "replacement/replacement_per_identity.csv"}) {
        const std::string a = slurp((dir_a / rel).string());
        const std::string b = slurp((dir_b / rel).string());
        INFO("file: ", rel);
        CHECK(strip_timing_columns(a) == strip_timing_columns(b));
    }

    // checkpoints are bit-identical as well
    for (const char* rel : {"checkpoints/encoder.fpv", "checkpoints/teacher.fpv",
                            "checkpoints/adapter.fpv", "checkpoints/student.fpv"}) {
        CHECK(slurp((dir_a / rel).string()) == slurp((dir_b / rel).string()));
    }
}

TEST_CASE("corrupt checkpoint fails the build with the file named") {
    const auto dir = fs::temp_directory_path() / "flowprobe_corrupt";
    fs::remove_all(dir);
    ExperimentConfig c = tiny_config(dir.string());
    std::ostringstream log;
    build_all(c, log);

    // flip one byte in the teacher checkpoint
    const std::string victim = ArtifactPaths::in(c.out_dir).teacher;
    {
        std::fstream f(victim, std::ios::in | std::ios::out | std::ios::binary);
        f.seekg(-1, std::ios::end);
        char ch;
        f.get(ch);
        f.seekp(-1, std::ios::end);
        ch = static_cast<char>(ch ^ 0x2);
        f.put(ch);
    }
    try {
        build_all(c, log);
        FAIL("expected a checksum failure");
    } catch (const std::exception& e) {
        CHECK(std::string(e.what()).find("teacher.fpv") != std::string::npos);
    }
}
