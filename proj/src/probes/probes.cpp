#include "flowprobe/probes/probes.hpp"

#include <algorithm>
#include <atomic>
#include <cmath>
#include <fstream>
#include <numeric>
#include <sstream>
#include <thread>

#include "flowprobe/common/error.hpp"
#include "flowprobe/common/hash.hpp"
#include "flowprobe/common/rng.hpp"

namespace flowprobe::probes {

double adapter_lift(double idsim_full, double idsim_weak) {
    if (idsim_full < -1.0 || idsim_full > 1.0 || idsim_weak < -1.0 || idsim_weak > 1.0)
        throw ContractError("adapter_lift: similarities must lie in [-1,1]");
    return idsim_full - idsim_weak;
}

StreamRatioResult stream_ratio(const std::vector<flow::StreamEntry>& capture, double eps_denom) {
    if (capture.empty()) throw ContractError("stream_ratio: empty capture");
    StreamRatioResult out;
    out.per_entry.reserve(capture.size());
    double acc = 0.0;
    for (const auto& e : capture) {
        if (e.s0_norm < 0.0 || e.s1_norm < 0.0) throw ContractError("stream_ratio: negative norm");
        const double r = e.s1_norm / (e.s0_norm + eps_denom);
        out.per_entry.push_back(r);
        acc += r;
    }
    out.mean = acc / static_cast<double>(capture.size());
    return out;
}

double sharpness(const faces::FaceImage& image) {
    const int n = faces::kImageSize;
    std::vector<double> resp;
    resp.reserve(static_cast<size_t>((n - 2) * (n - 2)));
    for (int r = 1; r < n - 1; ++r)
        for (int c = 1; c < n - 1; ++c) {
            const double p = 255.0 * image.pixels.at(r, c);
            const double up = 255.0 * image.pixels.at(r - 1, c);
            const double dn = 255.0 * image.pixels.at(r + 1, c);
            const double lf = 255.0 * image.pixels.at(r, c - 1);
            const double rt = 255.0 * image.pixels.at(r, c + 1);
            resp.push_back(up + dn + lf + rt - 4.0 * p);
        }
    double mean = 0.0;
    for (double v : resp) mean += v;
    mean /= static_cast<double>(resp.size());
    double var = 0.0;
    for (double v : resp) var += (v - mean) * (v - mean);
    return var / static_cast<double>(resp.size());
}

double contrast(const faces::FaceImage& image) {
    const int64_t n = image.pixels.numel();
    double mean = 0.0;
    for (int64_t i = 0; i < n; ++i) mean += 255.0 * image.pixels[i];
    mean /= static_cast<double>(n);
    double var = 0.0;
    for (int64_t i = 0; i < n; ++i) {
        const double d = 255.0 * image.pixels[i] - mean;
        var += d * d;
    }
    return std::sqrt(var / static_cast<double>(n));
}

EarlyWindowResult early_window(const std::vector<std::pair<double, double>>& curve, double theta) {
    if (curve.empty()) throw ContractError("early_window: empty curve");
    if (theta <= 0.0 || theta > 1.0) throw ContractError("early_window: theta must lie in (0,1]");
    for (size_t i = 1; i < curve.size(); ++i)
        if (curve[i].first <= curve[i - 1].first)
            throw ContractError("early_window: step counts must be strictly increasing");

    double peak = curve[0].second;
    for (const auto& [t, v] : curve) peak = std::max(peak, v);
    const double threshold = theta * peak;
    for (const auto& [t, v] : curve) {
        if (v >= threshold) return {t, peak == 0.0 ? 1.0 : v / peak};
    }
    // theta <= 1 guarantees the peak row qualifies; unreachable.
    return {curve.back().first, 1.0};
}

double spearman(const std::vector<double>& x, const std::vector<double>& y) {
    if (x.size() != y.size()) throw ContractError("spearman: length mismatch");
    const size_t n = x.size();
    if (n < 2) throw ContractError("spearman: need at least 2 points");

    auto ranks = [](const std::vector<double>& v) {
        const size_t n = v.size();
        std::vector<size_t> idx(n);
        std::iota(idx.begin(), idx.end(), size_t{0});
        std::sort(idx.begin(), idx.end(), [&](size_t a, size_t b) { return v[a] < v[b]; });
        std::vector<double> r(n);
        size_t i = 0;
        while (i < n) {
            size_t j = i;
            while (j + 1 < n && v[idx[j + 1]] == v[idx[i]]) ++j;
            const double avg = 0.5 * (static_cast<double>(i) + static_cast<double>(j)) + 1.0;
            for (size_t k = i; k <= j; ++k) r[idx[k]] = avg;
            i = j + 1;
        }
        return r;
    };

    const std::vector<double> rx = ranks(x);
    const std::vector<double> ry = ranks(y);
    double mx = 0.0, my = 0.0;
    for (size_t i = 0; i < n; ++i) {
        mx += rx[i];
        my += ry[i];
    }
    mx /= static_cast<double>(n);
    my /= static_cast<double>(n);
    double sxy = 0.0, sxx = 0.0, syy = 0.0;
    for (size_t i = 0; i < n; ++i) {
        sxy += (rx[i] - mx) * (ry[i] - my);
        sxx += (rx[i] - mx) * (rx[i] - mx);
        syy += (ry[i] - my) * (ry[i] - my);
    }
    if (sxx == 0.0 || syy == 0.0) return 0.0;
    return sxy / std::sqrt(sxx * syy);
}

PatternRow to_pattern_row(const SweepRecord& r) {
    PatternRow p;
    p.steps = r.steps;
    p.idsim_full = r.idsim_full;
    p.stream_ratio = r.stream_ratio;
    p.sharpness = r.sharpness;
    p.idsim_weak = r.idsim_weak;
    p.has_weak = true;
    return p;
}

PatternReport pattern_check(const std::vector<PatternRow>& rows, const PatternThresholds& th) {
    if (rows.size() < 5) throw ContractError("pattern_check: need at least 5 sweep rows");
    for (size_t i = 1; i < rows.size(); ++i)
        if (rows[i].steps <= rows[i - 1].steps)
            throw ContractError("pattern_check: rows must be sorted by step count");

    PatternReport report;
    const double max_t = rows.back().steps;

    double peak = rows.front().idsim_full;
    double peak_t = rows.front().steps;
    for (const auto& r : rows)
        if (r.idsim_full > peak) {
            peak = r.idsim_full;
            peak_t = r.steps;
        }

    std::vector<std::pair<double, double>> curve;
    std::vector<double> steps, sharp, stream, weak;
    for (const auto& r : rows) {
        curve.emplace_back(r.steps, r.idsim_full);
        steps.push_back(r.steps);
        sharp.push_back(r.sharpness);
        stream.push_back(r.stream_ratio);
        if (r.has_weak) weak.push_back(r.idsim_weak);
    }

    {
        PredicateResult p;
        p.name = "early_saturation";
        const double end_ratio = peak == 0.0 ? 1.0 : rows.back().idsim_full / peak;
        const EarlyWindowResult ew = early_window(curve, th.theta);
        const bool early = (peak_t < th.early_frac * max_t) || (ew.t_star <= th.early_frac * max_t);
        p.pass = (end_ratio >= th.end_ratio) && early;
        p.measured = end_ratio;
        std::ostringstream os;
        os << "end/peak=" << end_ratio << " peak_T=" << peak_t << " window_T=" << ew.t_star
           << " max_T=" << max_t;
        p.detail = os.str();
        report.predicates.push_back(std::move(p));
    }
    {
        PredicateResult p;
        p.name = "sharpness_rises";
        p.measured = spearman(steps, sharp);
        p.pass = p.measured > th.sharp_rho;
        p.detail = "spearman(T, sharpness)";
        report.predicates.push_back(std::move(p));
    }
    {
        PredicateResult p;
        p.name = "stream_ratio_falls";
        p.measured = spearman(steps, stream);
        p.pass = p.measured < th.stream_rho;
        p.detail = "spearman(T, stream_ratio)";
        report.predicates.push_back(std::move(p));
    }
    {
        PredicateResult p;
        p.name = "weak_adapter_low";
        if (weak.empty()) {
            p.pass = false;
            p.detail = "no weak-adapter rows";
        } else {
            p.measured = *std::max_element(weak.begin(), weak.end());
            p.pass = p.measured < th.weak_ratio * peak;
            std::ostringstream os;
            os << "max_weak=" << p.measured << " cap=" << th.weak_ratio * peak;
            p.detail = os.str();
        }
        report.predicates.push_back(std::move(p));
    }

    report.all_pass = std::all_of(report.predicates.begin(), report.predicates.end(),
                                  [](const PredicateResult& p) { return p.pass; });
    return report;
}

std::vector<PatternRow> ReferencePattern::pattern_rows() const {
    std::vector<PatternRow> out;
    out.reserve(rows.size());
    for (const auto& r : rows) {
        PatternRow p;
        p.steps = r.steps;
        p.idsim_full = r.idsim_full;
        p.stream_ratio = r.stream_ratio;
        p.sharpness = r.sharpness;
        if (r.idsim_weak) {
            p.idsim_weak = *r.idsim_weak;
            p.has_weak = true;
        }
        out.push_back(p);
    }
    return out;
}

ReferencePattern load_reference_pattern(const std::string& csv_path) {
    std::ifstream f(csv_path);
    if (!f) throw IoError("cannot open reference pattern: " + csv_path);
    std::string header;
    std::getline(f, header);
    if (header != "steps,idsim_full,idsim_weak,lift,stream_ratio,det_conf,sharpness")
        throw IoError("unexpected reference pattern header: " + header);

    ReferencePattern ref;
    std::string line;
    while (std::getline(f, line)) {
        if (line.empty()) continue;
        std::stringstream ss(line);
        std::string cell;
        std::vector<std::string> cells;
        while (std::getline(ss, cell, ',')) cells.push_back(cell);
        while (cells.size() < 7) cells.emplace_back();
        ReferenceRow r;
        r.steps = std::stod(cells[0]);
        r.idsim_full = std::stod(cells[1]);
        if (!cells[2].empty()) r.idsim_weak = std::stod(cells[2]);
        if (!cells[3].empty()) r.lift = std::stod(cells[3]);
        r.stream_ratio = std::stod(cells[4]);
        r.det_conf = std::stod(cells[5]);
        r.sharpness = std::stod(cells[6]);
        ref.rows.push_back(r);
    }
    if (ref.rows.empty()) throw IoError("reference pattern has no rows");
    return ref;
}

namespace {

double median(std::vector<double> v) {
    if (v.empty()) return 0.0;
    std::sort(v.begin(), v.end());
    const size_t n = v.size();
    return (n % 2 == 1) ? v[n / 2] : 0.5 * (v[n / 2 - 1] + v[n / 2]);
}

std::string tensor_checksum(const nd::Tensor& t) {
    return sha256_hex(t.data(), sizeof(double) * static_cast<size_t>(t.numel()));
}

struct SubjectMeasure {
    double idsim = 0.0;
    double stream_ratio_mean = 0.0;
    bool streams_all_zero = true;
    double det_conf = 0.0;
    double sharp = 0.0;
    double contr = 0.0;
    double lpips = 0.0;
    double latency = 0.0;
    std::string eps_sha;
};

}  // namespace

StepSweepResult run_step_sweep(const flow::FlowBackbone& backbone,
                               const adapter::AdapterStack& adapter_stack,
                               const enc::EncoderModel& encoder, const StepSweepConfig& config) {
    if (!backbone.frozen()) throw ContractError("run_step_sweep: backbone must be frozen");
    if (!adapter_stack.frozen()) throw ContractError("run_step_sweep: adapter must be frozen");
    if (!encoder.frozen()) throw ContractError("run_step_sweep: encoder must be frozen");
    if (config.n_subjects < 1) throw ContractError("run_step_sweep: need at least one subject");
    if (config.steps.empty()) throw ContractError("run_step_sweep: empty step list");

    const auto it_full = std::find(config.alphas.begin(), config.alphas.end(), 1.0);
    const auto it_weak = std::find(config.alphas.begin(), config.alphas.end(), 0.25);
    if (it_full == config.alphas.end() || it_weak == config.alphas.end())
        throw ContractError("run_step_sweep: alpha list must include 1.0 and 0.25");

    // Frozen per-subject context: reference render, embedding, noise seed.
    struct Subject {
        faces::FaceImage reference;
        enc::IdentityEmbedding e_id;
        uint64_t noise_seed;
        std::string eps_sha;
    };
    std::vector<Subject> subjects;
    subjects.reserve(static_cast<size_t>(config.n_subjects));
    for (int id = 0; id < config.n_subjects; ++id) {
        Subject s;
        s.reference = adapter::reference_render(id);
        s.e_id = enc::embed(encoder, s.reference);
        s.noise_seed = derive_seed(config.seed, "sweep-eps", static_cast<uint64_t>(id));
        s.eps_sha = tensor_checksum(flow::sample_noise(s.noise_seed));
        subjects.push_back(std::move(s));
    }

    const int workers = std::max(1, config.threads);
    StepSweepResult result;
    result.idsim_by_alpha.assign(config.alphas.size(), {});

    for (int T : config.steps) {
        SweepRecord rec;
        rec.steps = T;
        rec.n_subjects = config.n_subjects;

        std::vector<double> full_latencies;
        for (size_t ai = 0; ai < config.alphas.size(); ++ai) {
            const double alpha = config.alphas[ai];
            std::vector<SubjectMeasure> measures(subjects.size());

            auto run_subject = [&](size_t si) {
                const Subject& s = subjects[si];
                flow::SampleConfig sc;
                sc.steps = T;
                sc.guidance = config.guidance;
                sc.prompt = config.prompt;
                sc.adapter = &adapter_stack;
                sc.adapter_scale = alpha;
                sc.e_id = &s.e_id;
                sc.seed = s.noise_seed;
                sc.capture_streams = true;
                sc.record_states = false;
                sc.conditioned_identity = static_cast<int>(si);
                auto [img, traj] = flow::sample(backbone, sc);

                SubjectMeasure m;
                m.eps_sha = tensor_checksum(traj.initial_noise);
                m.idsim = enc::id_similarity(encoder, img, s.reference);
                // The record keeps the ratio at the run's final denoising
                // step (the step indexed by the row's T), averaged over
                // blocks; the zero-scale silence check covers every entry.
                std::vector<flow::StreamEntry> last_step;
                for (const auto& e : traj.streams)
                    if (e.step == T - 1) last_step.push_back(e);
                const StreamRatioResult sr = stream_ratio(last_step);
                m.stream_ratio_mean = sr.mean;
                const StreamRatioResult all = stream_ratio(traj.streams);
                m.streams_all_zero =
                    std::all_of(all.per_entry.begin(), all.per_entry.end(), [](double r) { return r == 0.0; });
                m.det_conf = enc::detector_confidence(encoder, img);
                m.sharp = sharpness(img);
                m.contr = contrast(img);
                m.lpips = enc::perceptual_distance(encoder, img, s.reference);
                m.latency = traj.wall_seconds;
                measures[si] = std::move(m);
            };

            if (workers == 1 || subjects.size() == 1) {
                for (size_t si = 0; si < subjects.size(); ++si) run_subject(si);
            } else {
                std::vector<std::thread> pool;
                std::atomic<size_t> next{0};
                for (int w = 0; w < workers; ++w)
                    pool.emplace_back([&]() {
                        for (size_t si = next.fetch_add(1); si < subjects.size(); si = next.fetch_add(1))
                            run_subject(si);
                    });
                for (auto& th : pool) th.join();
            }

            // Deterministic reduction in subject order.
            double idsim_mean = 0.0;
            for (size_t si = 0; si < measures.size(); ++si) {
                idsim_mean += measures[si].idsim;
                if (measures[si].eps_sha != subjects[si].eps_sha) result.paired_noise_ok = false;
            }
            idsim_mean /= static_cast<double>(measures.size());
            result.idsim_by_alpha[ai].push_back(idsim_mean);

            if (alpha == 1.0) {
                rec.idsim_full = idsim_mean;
                double sr = 0.0, dc = 0.0, sh = 0.0, co = 0.0, lp = 0.0;
                std::vector<double> lats;
                for (const auto& m : measures) {
                    sr += m.stream_ratio_mean;
                    dc += m.det_conf;
                    sh += m.sharp;
                    co += m.contr;
                    lp += m.lpips;
                    lats.push_back(m.latency);
                }
                const double n = static_cast<double>(measures.size());
                rec.stream_ratio = sr / n;
                rec.det_conf = dc / n;
                rec.sharpness = sh / n;
                rec.contrast = co / n;
                rec.lpips_like = lp / n;
                full_latencies = std::move(lats);
            } else if (alpha == 0.25) {
                rec.idsim_weak = idsim_mean;
            } else if (alpha == 0.0) {
                for (const auto& m : measures)
                    if (!m.streams_all_zero) result.alpha0_ratio_zero = false;
            }
        }

        rec.lift = adapter_lift(rec.idsim_full, rec.idsim_weak);
        rec.latency_s = median(full_latencies);
        result.records.push_back(rec);
    }
    return result;
}

}  // namespace flowprobe::probes
