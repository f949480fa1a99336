#include "flowprobe/flow/backbone.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>

#include "flowprobe/common/error.hpp"
#include "flowprobe/common/rng.hpp"
#include "flowprobe/common/schedule.hpp"
#include "flowprobe/nd/checkpoint.hpp"

namespace flowprobe::flow {

using nd::Tape;
using nd::Tensor;
using nd::Value;

nd::Tensor time_embedding(double t) {
    if (t < 0.0 || t > 1.0) throw ContractError("time embedding requires t in [0,1]");
    Tensor e({1, kTimeDim});
    // Non-dyadic ladder starting at a quarter period: the lowest pair
    // (sin, cos of pi*t/2) is monotone over [0,1], which keeps the t = 1
    // boundary the sampler always evaluates well conditioned, and no two
    // features vanish at the same t.
    for (int i = 0; i < kTimeDim / 2; ++i) {
        const double w = 0.5 * M_PI * std::pow(1.7, i);
        e[2 * i] = std::sin(w * t);
        e[2 * i + 1] = std::cos(w * t);
    }
    return e;
}

nd::Tensor time_embedding_rows(const std::vector<double>& ts) {
    Tensor e({static_cast<int>(ts.size()), kTimeDim});
    for (size_t r = 0; r < ts.size(); ++r) {
        const Tensor row = time_embedding(ts[r]);
        for (int c = 0; c < kTimeDim; ++c) e.at(static_cast<int>(r), c) = row[c];
    }
    return e;
}

int prompt_row(faces::TransformKind kind) { return static_cast<int>(kind); }

nd::Tensor interpolate(const nd::Tensor& x0, const nd::Tensor& eps, double t) {
    if (!x0.same_shape(eps)) throw ShapeError("interpolate: shapes differ");
    if (t < 0.0 || t > 1.0) throw ContractError("interpolate: t must lie in [0,1]");
    if (t == 0.0) return x0;
    if (t == 1.0) return eps;
    Tensor out(x0.shape());
    const int64_t n = x0.numel();
    for (int64_t i = 0; i < n; ++i) out[i] = (1.0 - t) * x0[i] + t * eps[i];
    return out;
}

nd::Tensor velocity_target(const nd::Tensor& x0, const nd::Tensor& eps) {
    if (!x0.same_shape(eps)) throw ShapeError("velocity_target: shapes differ");
    Tensor out(x0.shape());
    const int64_t n = x0.numel();
    for (int64_t i = 0; i < n; ++i) out[i] = x0[i] - eps[i];
    return out;
}

FlowBackbone FlowBackbone::random_init(uint64_t seed, int hidden) {
    if (hidden < 1) throw ContractError("hidden width must be positive");
    FlowBackbone m;
    m.hidden_ = hidden;
    Rng rng(derive_seed(seed, "backbone-init"));
    const int in_dim = kStateDim + kTimeDim + kPromptDim;
    for (int b = 0; b < kBlocks; ++b) {
        const std::string p = "blk" + std::to_string(b) + ".";
        // Pre/post layer scales are per-channel affine functions of the time
        // embedding; the diagonal branch path lets the block apply
        // time-varying per-channel gains to the state itself, which the
        // velocity field of a flow needs near t = 0.
        m.params_.add(p + "pre.base", Tensor::full({1, kStateDim}, 1.0));
        m.params_.add(p + "pre.mod", Tensor({kTimeDim, kStateDim}));
        m.params_.add(p + "post.base", Tensor::full({1, kStateDim}, 0.1));
        m.params_.add(p + "post.mod", Tensor({kTimeDim, kStateDim}));
        m.params_.add(p + "diag", Tensor({1, kStateDim}));
        m.params_.add_linear_init(p + "w1", in_dim, hidden, rng);
        m.params_.add(p + "b1", Tensor({1, hidden}));
        m.params_.add_linear_init(p + "w2", hidden, kStateDim, rng);
        m.params_.add(p + "b2", Tensor({1, kStateDim}));
    }
    {
        Tensor table({kNullPromptRow + 1, kPromptDim});
        for (double& x : table.vec()) x = rng.uniform(-0.5, 0.5);
        m.params_.add("prompt.table", std::move(table));
    }
    // Per-channel affine output head. The flow's velocity is dominated by a
    // negative state gain (v = x0 - eps with x_1 = eps), so the head gain
    // starts at -1; cross-pixel mixing lives in the blocks.
    m.params_.add("head.gain", Tensor::full({1, kStateDim}, -1.0));
    m.params_.add("head.b", Tensor({1, kStateDim}));
    m.meta_["hidden"] = std::to_string(hidden);
    return m;
}

nd::Value FlowBackbone::forward(Tape& tape, Value x, const Tensor& t_emb,
                                const std::vector<int>& prompt_rows, bool trainable,
                                ConditioningHook* hook, std::vector<BlockStreams>* capture) {
    if (trainable && frozen_) throw ContractError("trainable forward on a frozen backbone");
    const int batch = x.val().rows();
    if (x.val().cols() != kStateDim) throw ShapeError("forward: state dim mismatch");
    if (t_emb.rows() != batch || t_emb.cols() != kTimeDim) throw ShapeError("forward: time embedding shape");
    if (static_cast<int>(prompt_rows.size()) != batch) throw ShapeError("forward: prompt row count");
    if (capture != nullptr && batch != 1)
        throw ContractError("stream capture is defined for single-sample forwards");

    auto leaf = [&](const std::string& name) {
        return trainable ? tape.param(params_, name) : tape.constant_ref(params_.at(name).value);
    };

    Value temb = tape.constant_ref(t_emb);
    Value pemb = nd::gather_rows(leaf("prompt.table"), prompt_rows);

    Value h = x;
    for (int b = 0; b < kBlocks; ++b) {
        const std::string p = "blk" + std::to_string(b) + ".";
        Value pre = nd::add_row(nd::matmul(temb, leaf(p + "pre.mod")), leaf(p + "pre.base"));
        Value post = nd::add_row(nd::matmul(temb, leaf(p + "post.mod")), leaf(p + "post.base"));
        Value g = nd::mul(pre, h);  // time-scaled state, [B x 1024]
        Value inp = nd::concat_cols(nd::concat_cols(g, temb), pemb);
        Value z = nd::silu(nd::add_row(nd::matmul(inp, leaf(p + "w1")), leaf(p + "b1")));
        Value branch = nd::add(nd::mul_row(g, leaf(p + "diag")),
                               nd::add_row(nd::matmul(z, leaf(p + "w2")), leaf(p + "b2")));
        Value u = nd::add(h, nd::mul(post, branch));  // primary-path block output

        // Conditioning residual updates the hidden state the next block sees.
        Value res = hook ? hook->residual(tape, b, t_emb) : Value{};
        if (capture) {
            BlockStreams s;
            s.s0_norm = u.val().l2_norm();
            s.s1_norm = res.valid() ? res.val().l2_norm() : 0.0;
            capture->push_back(s);
        }
        h = res.valid() ? nd::add(u, res) : u;
    }
    return nd::add_row(nd::mul_row(h, leaf("head.gain")), leaf("head.b"));
}

std::string FlowBackbone::checksum() const { return nd::param_checksum(params_); }

void FlowBackbone::save(const std::string& path) const {
    nd::MetaMap meta(meta_.begin(), meta_.end());
    meta["kind"] = "backbone";
    meta["distilled"] = distilled_ ? "1" : "0";
    meta["blocks"] = std::to_string(kBlocks);
    meta["hidden"] = std::to_string(hidden_);
    nd::save_checkpoint(path, params_, meta);
}

FlowBackbone FlowBackbone::load(const std::string& path) {
    nd::Checkpoint ck = nd::load_checkpoint(path);
    if (ck.meta.count("kind") && ck.meta.at("kind") != "backbone")
        throw CompatError("checkpoint is not a backbone: " + path);
    FlowBackbone m;
    m.params_ = std::move(ck.params);
    m.meta_ = std::map<std::string, std::string>(ck.meta.begin(), ck.meta.end());
    m.distilled_ = ck.meta.count("distilled") && ck.meta.at("distilled") == "1";
    m.hidden_ = ck.meta.count("hidden") ? std::stoi(ck.meta.at("hidden")) : 96;
    m.frozen_ = true;  // loaded backbones are inference artifacts
    return m;
}

FlowBackbone FlowBackbone::clone_params() const {
    FlowBackbone m;
    for (const auto& [name, e] : params_.entries()) m.params_.add(name, e.value);
    m.meta_ = meta_;
    m.hidden_ = hidden_;
    m.distilled_ = distilled_;
    m.frozen_ = false;
    return m;
}

FlowBackbone train_teacher(const std::vector<faces::FaceImage>& dataset,
                           const FlowTrainConfig& config, FlowTrainReport* report) {
    if (dataset.empty()) throw ContractError("train_teacher requires a non-empty dataset");

    FlowBackbone model = FlowBackbone::random_init(config.seed, config.hidden);
    Rng rng(derive_seed(config.seed, "teacher-train"));

    std::vector<size_t> order(dataset.size());
    std::iota(order.begin(), order.end(), size_t{0});
    const int64_t steps_per_epoch =
        static_cast<int64_t>((order.size() + static_cast<size_t>(config.batch) - 1) /
                             static_cast<size_t>(config.batch));
    const int64_t total_steps = steps_per_epoch * config.epochs;

    double initial_loss = 0.0, final_loss = 0.0;
    try {
        for (int epoch = 0; epoch < config.epochs; ++epoch) {
            rng.shuffle(order);
            double epoch_loss = 0.0;
            int batches = 0;
            for (size_t start = 0; start < order.size(); start += static_cast<size_t>(config.batch)) {
                const size_t end = std::min(order.size(), start + static_cast<size_t>(config.batch));
                const int bsz = static_cast<int>(end - start);

                Tensor xt({bsz, kStateDim});
                Tensor vstar({bsz, kStateDim});
                std::vector<double> ts(static_cast<size_t>(bsz));
                std::vector<int> rows(static_cast<size_t>(bsz));
                for (int r = 0; r < bsz; ++r) {
                    const faces::FaceImage& img = dataset[order[start + static_cast<size_t>(r)]];
                    const double t = rng.uniform();
                    ts[static_cast<size_t>(r)] = t;
                    rows[static_cast<size_t>(r)] = (rng.uniform() < config.prompt_dropout)
                                                       ? kNullPromptRow
                                                       : prompt_row(img.transform.kind);
                    for (int c = 0; c < kStateDim; ++c) {
                        const double x0 = img.pixels[c];
                        const double eps = rng.normal();
                        xt.at(r, c) = (1.0 - t) * x0 + t * eps;
                        vstar.at(r, c) = x0 - eps;
                    }
                }
                const Tensor temb = time_embedding_rows(ts);

                Tape tape;
                Value pred = model.forward(tape, tape.constant_ref(xt), temb, rows, true);
                Value loss = nd::mse(pred, tape.constant_ref(vstar));
                epoch_loss += loss.val()[0];
                ++batches;
                tape.backward(loss);
                model.params().clip_grad_norm(10.0);
                model.params().adam_step(cosine_lr(config.lr, model.params().step_count(), total_steps), 0.9,
                                         0.999, 1e-8);
            }
            epoch_loss /= std::max(1, batches);
            if (epoch == 0) initial_loss = epoch_loss;
            final_loss = epoch_loss;
        }
    } catch (const NumericError& e) {
        throw TrainingError(std::string("teacher training diverged: ") + e.what());
    }

    if (report) {
        report->initial_loss = initial_loss;
        report->final_loss = final_loss;
    }
    return model;
}

}  // namespace flowprobe::flow
