#include "flowprobe/adapter/adapter.hpp"

#include <algorithm>
#include <numeric>

#include "flowprobe/common/error.hpp"
#include "flowprobe/common/rng.hpp"
#include "flowprobe/common/schedule.hpp"
#include "flowprobe/nd/checkpoint.hpp"

namespace flowprobe::adapter {

using nd::Tape;
using nd::Tensor;
using nd::Value;

AdapterStack AdapterStack::random_init(uint64_t seed, int hidden) {
    if (hidden < 1) throw ContractError("adapter hidden width must be positive");
    AdapterStack a;
    a.hidden_ = hidden;
    Rng rng(derive_seed(seed, "adapter-init"));
    for (int b = 0; b < flow::kBlocks; ++b) {
        const std::string p = "head" + std::to_string(b) + ".";
        a.params_.add_linear_init(p + "w1", kHeadInput, hidden, rng);
        a.params_.add(p + "b1", Tensor({1, hidden}));
        a.params_.add_linear_init(p + "w2", hidden, flow::kStateDim, rng);
        a.params_.add(p + "b2", Tensor({1, flow::kStateDim}));
    }
    return a;
}

namespace {

Value head_forward_impl(const AdapterStack& stack, nd::ParamSet* trainable, Tape& tape, int block,
                        const Tensor& e_id_rows, const Tensor& t_emb) {
    if (block < 0 || block >= flow::kBlocks) throw ContractError("head index out of range");
    if (e_id_rows.cols() != enc::kEmbedDim || t_emb.cols() != flow::kTimeDim ||
        e_id_rows.rows() != t_emb.rows())
        throw ShapeError("adapter head input shapes");

    const std::string p = "head" + std::to_string(block) + ".";
    auto leaf = [&](const std::string& name) {
        return trainable ? tape.param(*trainable, name)
                         : tape.constant_ref(stack.params().at(name).value);
    };
    Value in = nd::concat_cols(tape.constant_ref(e_id_rows), tape.constant_ref(t_emb));
    Value z = nd::silu(nd::add_row(nd::matmul(in, leaf(p + "w1")), leaf(p + "b1")));
    return nd::add_row(nd::matmul(z, leaf(p + "w2")), leaf(p + "b2"));
}

}  // namespace

Value AdapterStack::head_forward(Tape& tape, int block, const Tensor& e_id_rows,
                                 const Tensor& t_emb) const {
    return head_forward_impl(*this, nullptr, tape, block, e_id_rows, t_emb);
}

Value AdapterStack::head_forward_train(Tape& tape, int block, const Tensor& e_id_rows,
                                       const Tensor& t_emb) {
    if (frozen_) throw ContractError("trainable forward on a frozen adapter");
    return head_forward_impl(*this, &params_, tape, block, e_id_rows, t_emb);
}

Tensor AdapterStack::head_eval(int block, const enc::IdentityEmbedding& e_id, double t) const {
    Tensor e_rows({1, enc::kEmbedDim});
    for (int i = 0; i < enc::kEmbedDim; ++i) e_rows[i] = e_id.vector[i];
    const Tensor t_emb = flow::time_embedding(t);
    Tape tape;
    Value r = head_forward(tape, block, e_rows, t_emb);
    Tensor out({flow::kStateDim});
    for (int i = 0; i < flow::kStateDim; ++i) out[i] = r.val()[i];
    return out;
}

std::string AdapterStack::checksum() const { return nd::param_checksum(params_); }

void AdapterStack::save(const std::string& path) const {
    nd::MetaMap meta;
    meta["kind"] = "adapter";
    meta["heads"] = std::to_string(flow::kBlocks);
    meta["hidden"] = std::to_string(hidden_);
    meta["trained_against"] = trained_against_;
    nd::save_checkpoint(path, params_, meta);
}

AdapterStack AdapterStack::load(const std::string& path) {
    nd::Checkpoint ck = nd::load_checkpoint(path);
    if (ck.meta.count("kind") && ck.meta.at("kind") != "adapter")
        throw CompatError("checkpoint is not an adapter: " + path);
    AdapterStack a;
    a.params_ = std::move(ck.params);
    a.hidden_ = ck.meta.count("hidden") ? std::stoi(ck.meta.at("hidden")) : 48;
    a.trained_against_ = ck.meta.count("trained_against") ? ck.meta.at("trained_against") : "";
    a.frozen_ = true;
    return a;
}

Tensor inject(const AdapterStack& adapter, int block, const Tensor& h,
              const enc::IdentityEmbedding& e_id, double t, double alpha) {
    if (block < 0 || block >= adapter.head_count()) throw ContractError("inject: block out of range");
    if (h.numel() != flow::kStateDim) throw ShapeError("inject: hidden state must have 1024 elements");
    if (alpha < 0.0) throw ContractError("inject: alpha must be nonnegative");
    if (alpha == 0.0) return h;

    const Tensor r = adapter.head_eval(block, e_id, t);
    Tensor out(h.shape());
    for (int i = 0; i < flow::kStateDim; ++i) out[i] = h[i] + alpha * r[i];
    out.ensure_finite("inject");
    return out;
}

faces::FaceImage reference_render(int identity_id) {
    return faces::render_identity(faces::IdentitySpec::make(identity_id),
                                  {faces::TransformKind::Plain, 0.0}, 0);
}

AdapterStack train_adapter(const flow::FlowBackbone& teacher, const enc::EncoderModel& encoder,
                           const std::vector<faces::FaceImage>& dataset,
                           const AdapterTrainConfig& config, AdapterTrainReport* report) {
    if (!teacher.frozen()) throw ContractError("train_adapter requires a frozen teacher");
    if (!encoder.frozen()) throw ContractError("train_adapter requires a frozen encoder");
    if (dataset.empty()) throw ContractError("train_adapter requires a non-empty dataset");

    const std::string teacher_sha_before = teacher.checksum();
    const std::string encoder_sha_before = encoder.checksum();

    // One embedding per identity, from the canonical reference render.
    int max_id = 0;
    for (const auto& img : dataset) max_id = std::max(max_id, img.source_identity);
    std::vector<enc::IdentityEmbedding> e_ids;
    e_ids.reserve(static_cast<size_t>(max_id) + 1);
    for (int id = 0; id <= max_id; ++id) e_ids.push_back(enc::embed(encoder, reference_render(id)));

    AdapterStack adapter = AdapterStack::random_init(config.seed, config.hidden);
    flow::FlowBackbone& teacher_mut = const_cast<flow::FlowBackbone&>(teacher);  // forward is read-only

    struct TrainHook final : flow::ConditioningHook {
        AdapterStack* stack;
        const Tensor* e_rows;
        Value residual(Tape& tape, int block, const Tensor& t_emb) override {
            return stack->head_forward_train(tape, block, *e_rows, t_emb);
        }
    };

    Rng rng(derive_seed(config.seed, "adapter-train"));
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

                Tensor xt({bsz, flow::kStateDim});
                Tensor vstar({bsz, flow::kStateDim});
                Tensor e_rows({bsz, enc::kEmbedDim});
                std::vector<double> ts(static_cast<size_t>(bsz));
                std::vector<int> rows(static_cast<size_t>(bsz));
                for (int r = 0; r < bsz; ++r) {
                    const faces::FaceImage& img = dataset[order[start + static_cast<size_t>(r)]];
                    // One draw in eight lands in the noise-side band the
                    // sampler always starts from; plain uniform draws leave
                    // the t = 1 boundary underfit.
                    double t = rng.uniform();
                    if (rng.uniform() < 0.125) t = rng.uniform(0.9, 1.0);
                    ts[static_cast<size_t>(r)] = t;
                    rows[static_cast<size_t>(r)] = (rng.uniform() < config.prompt_dropout)
                                                       ? flow::kNullPromptRow
                                                       : flow::prompt_row(img.transform.kind);
                    const auto& e = e_ids[static_cast<size_t>(img.source_identity)];
                    for (int c = 0; c < enc::kEmbedDim; ++c) e_rows.at(r, c) = e.vector[c];
                    for (int c = 0; c < flow::kStateDim; ++c) {
                        const double x0 = img.pixels[c];
                        const double eps = rng.normal();
                        xt.at(r, c) = (1.0 - t) * x0 + t * eps;
                        vstar.at(r, c) = x0 - eps;
                    }
                }
                const Tensor temb = flow::time_embedding_rows(ts);

                TrainHook hook;
                hook.stack = &adapter;
                hook.e_rows = &e_rows;

                Tape tape;
                Value pred = teacher_mut.forward(tape, tape.constant_ref(xt), temb, rows,
                                                 /*trainable=*/false, &hook);
                Value loss = nd::mse(pred, tape.constant_ref(vstar));
                epoch_loss += loss.val()[0];
                ++batches;
                tape.backward(loss);
                adapter.params().clip_grad_norm(10.0);
                adapter.params().adam_step(cosine_lr(config.lr, adapter.params().step_count(), total_steps),
                                           0.9, 0.999, 1e-8);
            }
            epoch_loss /= std::max(1, batches);
            if (epoch == 0) initial_loss = epoch_loss;
            final_loss = epoch_loss;
        }
    } catch (const NumericError& e) {
        throw TrainingError(std::string("adapter training diverged: ") + e.what());
    }

    if (teacher.checksum() != teacher_sha_before)
        throw ContractError("teacher parameters changed during adapter training");
    if (encoder.checksum() != encoder_sha_before)
        throw ContractError("encoder parameters changed during adapter training");

    adapter.set_trained_against(teacher_sha_before);
    adapter.freeze();
    if (report) {
        report->initial_loss = initial_loss;
        report->final_loss = final_loss;
    }
    return adapter;
}

BoundAdapter transfer(const AdapterStack& adapter, const flow::FlowBackbone& student) {
    if (!adapter.frozen()) throw ContractError("transfer requires a frozen adapter");
    if (!student.frozen()) throw ContractError("transfer requires a frozen backbone");
    if (student.blocks() != adapter.head_count())
        throw CompatError("adapter head count does not match backbone block count");
    BoundAdapter b;
    b.stack = &adapter;
    b.backbone_sha = student.checksum();
    b.cross_backbone = (b.backbone_sha != adapter.trained_against());
    return b;
}

}  // namespace flowprobe::adapter
