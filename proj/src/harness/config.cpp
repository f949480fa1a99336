#include "flowprobe/harness/config.hpp"

#include <algorithm>
#include <cctype>
#include <cstdlib>
#include <fstream>
#include <map>
#include <sstream>
#include <thread>

#include "flowprobe/common/error.hpp"
#include "flowprobe/common/hash.hpp"

namespace flowprobe::harness {

namespace {

std::string trim(const std::string& s) {
    size_t a = 0, b = s.size();
    while (a < b && std::isspace(static_cast<unsigned char>(s[a]))) ++a;
    while (b > a && std::isspace(static_cast<unsigned char>(s[b - 1]))) --b;
    return s.substr(a, b - a);
}

std::string unquote(const std::string& s) {
    if (s.size() >= 2 && ((s.front() == '"' && s.back() == '"') || (s.front() == '\'' && s.back() == '\'')))
        return s.substr(1, s.size() - 2);
    return s;
}

// Flat key/value file with optional [section] headers that prefix keys,
// '#' comments, and [a, b, c] lists.
std::map<std::string, std::string> parse_kv_file(const std::string& path) {
    std::ifstream f(path);
    if (!f) throw IoError("cannot open config: " + path);
    std::map<std::string, std::string> kv;
    std::string line, section;
    int lineno = 0;
    while (std::getline(f, line)) {
        ++lineno;
        const size_t hash = line.find('#');
        if (hash != std::string::npos) line = line.substr(0, hash);
        line = trim(line);
        if (line.empty()) continue;
        if (line.front() == '[' && line.back() == ']') {
            section = trim(line.substr(1, line.size() - 2));
            continue;
        }
        const size_t eq = line.find('=');
        if (eq == std::string::npos)
            throw IoError(path + ":" + std::to_string(lineno) + ": expected key = value");
        std::string key = trim(line.substr(0, eq));
        if (!section.empty()) key = section + "." + key;
        kv[key] = trim(line.substr(eq + 1));
    }
    return kv;
}

std::vector<std::string> split_list(const std::string& raw) {
    std::string body = trim(raw);
    if (body.size() < 2 || body.front() != '[' || body.back() != ']')
        throw IoError("expected a [..] list, got: " + raw);
    body = body.substr(1, body.size() - 2);
    std::vector<std::string> items;
    std::stringstream ss(body);
    std::string item;
    while (std::getline(ss, item, ',')) {
        item = trim(item);
        if (!item.empty()) items.push_back(item);
    }
    return items;
}

struct Loader {
    std::map<std::string, std::string> kv;
    std::map<std::string, bool> used;

    bool has(const std::string& k) const { return kv.count(k) != 0; }

    void get(const std::string& k, int& out) {
        if (!has(k)) return;
        used[k] = true;
        out = std::stoi(kv.at(k));
    }
    void get(const std::string& k, uint64_t& out) {
        if (!has(k)) return;
        used[k] = true;
        out = std::stoull(kv.at(k));
    }
    void get(const std::string& k, double& out) {
        if (!has(k)) return;
        used[k] = true;
        out = std::stod(kv.at(k));
    }
    void get(const std::string& k, std::string& out) {
        if (!has(k)) return;
        used[k] = true;
        out = unquote(kv.at(k));
    }
    void get(const std::string& k, std::vector<int>& out) {
        if (!has(k)) return;
        used[k] = true;
        out.clear();
        for (const auto& item : split_list(kv.at(k))) out.push_back(std::stoi(item));
    }
    void get(const std::string& k, std::vector<double>& out) {
        if (!has(k)) return;
        used[k] = true;
        out.clear();
        for (const auto& item : split_list(kv.at(k))) out.push_back(std::stod(item));
    }

    void check_all_used(const std::string& path) const {
        for (const auto& [k, v] : kv)
            if (!used.count(k)) throw IoError("unknown config key in " + path + ": " + k);
    }
};

}  // namespace

ExperimentConfig ExperimentConfig::load(const std::string& path) {
    Loader ld;
    ld.kv = parse_kv_file(path);
    ExperimentConfig c;

    ld.get("master_seed", c.master_seed);
    ld.get("out_dir", c.out_dir);
    ld.get("threads", c.threads);

    ld.get("dataset.n_identities", c.n_identities);
    ld.get("dataset.train_samples_per", c.train_samples_per);
    ld.get("dataset.encoder_samples_per", c.encoder_samples_per);
    ld.get("dataset.heldout_samples_per", c.heldout_samples_per);
    ld.get("dataset.background_strength", c.background_strength);
    ld.get("dataset.stylized_strength", c.stylized_strength);

    ld.get("encoder.epochs", c.encoder_epochs);
    ld.get("encoder.lr", c.encoder_lr);
    ld.get("encoder.batch", c.encoder_batch);
    ld.get("encoder.target_accuracy", c.encoder_target_acc);

    ld.get("teacher.epochs", c.teacher_epochs);
    ld.get("teacher.lr", c.teacher_lr);
    ld.get("teacher.batch", c.teacher_batch);
    ld.get("teacher.hidden", c.teacher_hidden);
    ld.get("teacher.prompt_dropout", c.prompt_dropout);

    ld.get("adapter.epochs", c.adapter_epochs);
    ld.get("adapter.lr", c.adapter_lr);
    ld.get("adapter.batch", c.adapter_batch);
    ld.get("adapter.hidden", c.adapter_hidden);

    ld.get("reflow.pairs", c.reflow_pairs);
    ld.get("reflow.epochs", c.reflow_epochs);
    ld.get("reflow.lr", c.reflow_lr);
    ld.get("reflow.batch", c.reflow_batch);

    ld.get("distill.pairs", c.distill_pairs);
    ld.get("distill.epochs", c.distill_epochs);
    ld.get("distill.lr", c.distill_lr);
    ld.get("distill.batch", c.distill_batch);
    ld.get("distill.target_steps", c.target_steps);

    ld.get("replacement.teacher_steps", c.teacher_steps);
    ld.get("replacement.teacher_guidance", c.teacher_guidance);
    ld.get("replacement.student_steps", c.student_steps);
    ld.get("replacement.student_guidance", c.student_guidance);
    ld.get("replacement.diagnostic_subjects", c.diagnostic_subjects);
    ld.get("replacement.id_scale", c.eval_id_scale);

    ld.get("sweep.steps", c.sweep_steps);
    ld.get("sweep.alphas", c.sweep_alphas);
    ld.get("sweep.subjects", c.sweep_subjects);
    ld.get("sweep.theta", c.early_window_theta);

    ld.get("ablations.alphas", c.ablation_alphas);

    ld.check_all_used(path);
    return c;
}

namespace {

std::string fmt(double v) {
    char buf[40];
    std::snprintf(buf, sizeof(buf), "%.17g", v);
    return buf;
}

// Human-facing rendering for saved config files; %.12g round-trips every
// value that came from a short decimal literal.
std::string pretty(double v) {
    char buf[40];
    std::snprintf(buf, sizeof(buf), "%.12g", v);
    return buf;
}

template <typename T>
std::string fmt_list(const std::vector<T>& v) {
    std::string s = "[";
    for (size_t i = 0; i < v.size(); ++i) {
        if (i) s += ", ";
        if constexpr (std::is_same_v<T, double>)
            s += pretty(v[i]);
        else
            s += std::to_string(v[i]);
    }
    return s + "]";
}

}  // namespace

void ExperimentConfig::save(const std::string& path) const {
    std::ofstream f(path, std::ios::trunc);
    if (!f) throw IoError("cannot write config: " + path);
    f << "master_seed = " << master_seed << "\n";
    f << "out_dir = \"" << out_dir << "\"\n";
    f << "threads = " << threads << "\n\n";
    f << "[dataset]\n";
    f << "n_identities = " << n_identities << "\n";
    f << "train_samples_per = " << train_samples_per << "\n";
    f << "encoder_samples_per = " << encoder_samples_per << "\n";
    f << "heldout_samples_per = " << heldout_samples_per << "\n";
    f << "background_strength = " << pretty(background_strength) << "\n";
    f << "stylized_strength = " << pretty(stylized_strength) << "\n\n";
    f << "[encoder]\n";
    f << "epochs = " << encoder_epochs << "\n";
    f << "lr = " << pretty(encoder_lr) << "\n";
    f << "batch = " << encoder_batch << "\n";
    f << "target_accuracy = " << pretty(encoder_target_acc) << "\n\n";
    f << "[teacher]\n";
    f << "epochs = " << teacher_epochs << "\n";
    f << "lr = " << pretty(teacher_lr) << "\n";
    f << "batch = " << teacher_batch << "\n";
    f << "hidden = " << teacher_hidden << "\n";
    f << "prompt_dropout = " << pretty(prompt_dropout) << "\n\n";
    f << "[adapter]\n";
    f << "epochs = " << adapter_epochs << "\n";
    f << "lr = " << pretty(adapter_lr) << "\n";
    f << "batch = " << adapter_batch << "\n";
    f << "hidden = " << adapter_hidden << "\n\n";
    f << "[reflow]\n";
    f << "pairs = " << reflow_pairs << "\n";
    f << "epochs = " << reflow_epochs << "\n";
    f << "lr = " << pretty(reflow_lr) << "\n";
    f << "batch = " << reflow_batch << "\n\n";
    f << "[distill]\n";
    f << "pairs = " << distill_pairs << "\n";
    f << "epochs = " << distill_epochs << "\n";
    f << "lr = " << pretty(distill_lr) << "\n";
    f << "batch = " << distill_batch << "\n";
    f << "target_steps = " << target_steps << "\n\n";
    f << "[replacement]\n";
    f << "teacher_steps = " << teacher_steps << "\n";
    f << "teacher_guidance = " << pretty(teacher_guidance) << "\n";
    f << "student_steps = " << student_steps << "\n";
    f << "student_guidance = " << pretty(student_guidance) << "\n";
    f << "diagnostic_subjects = " << diagnostic_subjects << "\n";
    f << "id_scale = " << pretty(eval_id_scale) << "\n\n";
    f << "[sweep]\n";
    f << "steps = " << fmt_list(sweep_steps) << "\n";
    f << "alphas = " << fmt_list(sweep_alphas) << "\n";
    f << "subjects = " << sweep_subjects << "\n";
    f << "theta = " << pretty(early_window_theta) << "\n\n";
    f << "[ablations]\n";
    f << "alphas = " << fmt_list(ablation_alphas) << "\n";
}

namespace {

std::string hash_of(std::initializer_list<std::string> parts) {
    std::string joined;
    for (const auto& p : parts) {
        joined += p;
        joined += '\x1f';
    }
    return sha256_hex(joined);
}

}  // namespace

std::string ExperimentConfig::dataset_hash() const {
    return hash_of({"dataset", std::to_string(master_seed), std::to_string(n_identities),
                    std::to_string(train_samples_per), fmt(background_strength),
                    fmt(stylized_strength)});
}

std::string ExperimentConfig::encoder_hash() const {
    return hash_of({"encoder", dataset_hash(), std::to_string(encoder_samples_per),
                    std::to_string(heldout_samples_per), std::to_string(encoder_epochs),
                    fmt(encoder_lr), std::to_string(encoder_batch), fmt(encoder_target_acc)});
}

std::string ExperimentConfig::teacher_hash() const {
    return hash_of({"teacher", dataset_hash(), std::to_string(teacher_epochs), fmt(teacher_lr),
                    std::to_string(teacher_batch), std::to_string(teacher_hidden),
                    fmt(prompt_dropout)});
}

std::string ExperimentConfig::adapter_hash() const {
    return hash_of({"adapter", teacher_hash(), encoder_hash(), std::to_string(adapter_epochs),
                    fmt(adapter_lr), std::to_string(adapter_batch), std::to_string(adapter_hidden)});
}

std::string ExperimentConfig::reflow_hash() const {
    return hash_of({"reflow", teacher_hash(), std::to_string(reflow_pairs),
                    std::to_string(reflow_epochs), fmt(reflow_lr), std::to_string(reflow_batch),
                    std::to_string(teacher_steps), fmt(teacher_guidance)});
}

std::string ExperimentConfig::student_hash() const {
    return hash_of({"student", reflow_hash(), std::to_string(distill_pairs),
                    std::to_string(distill_epochs), fmt(distill_lr), std::to_string(distill_batch),
                    std::to_string(target_steps)});
}

int ExperimentConfig::resolve_threads() const {
    if (threads > 0) return threads;
    if (const char* env = std::getenv("FLOWPROBE_THREADS")) {
        const int v = std::atoi(env);
        if (v > 0) return v;
    }
    const unsigned hw = std::thread::hardware_concurrency();
    return hw == 0 ? 1 : static_cast<int>(std::min(hw, 8u));
}

}  // namespace flowprobe::harness
