#include "flowprobe/encoder/encoder.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>

#include "flowprobe/common/error.hpp"
#include "flowprobe/common/rng.hpp"
#include "flowprobe/nd/checkpoint.hpp"

namespace flowprobe::enc {

using nd::Tape;
using nd::Tensor;
using nd::Value;

namespace {

Tensor batch_matrix(const std::vector<faces::FaceImage>& images, const std::vector<size_t>& idx) {
    Tensor x({static_cast<int>(idx.size()), faces::kImagePixels});
    for (size_t r = 0; r < idx.size(); ++r)
        for (int c = 0; c < faces::kImagePixels; ++c)
            x.at(static_cast<int>(r), c) = images[idx[r]].pixels[c];
    return x;
}

void require_frozen(const EncoderModel& model, const char* op) {
    if (!model.frozen()) throw ContractError(std::string(op) + " requires a frozen encoder");
}

}  // namespace

EncoderModel EncoderModel::random_init(int n_identities, uint64_t seed) {
    if (n_identities < 2) throw ContractError("encoder needs at least 2 identities");
    EncoderModel m;
    m.n_identities_ = n_identities;
    Rng rng(derive_seed(seed, "encoder-init"));
    m.params_.add_linear_init("l1.w", faces::kImagePixels, kHidden1, rng);
    m.params_.add("l1.b", Tensor({1, kHidden1}));
    m.params_.add_linear_init("l2.w", kHidden1, kHidden2, rng);
    m.params_.add("l2.b", Tensor({1, kHidden2}));
    m.params_.add_linear_init("l3.w", kHidden2, kEmbedDim, rng);
    m.params_.add("l3.b", Tensor({1, kEmbedDim}));
    m.params_.add_linear_init("cls.w", kEmbedDim, n_identities, rng);
    m.params_.add("cls.b", Tensor({1, n_identities}));
    return m;
}

EncoderModel::ForwardValues EncoderModel::forward(Tape& tape, const Tensor& x_batch, bool trainable) {
    auto leaf = [&](const std::string& name) {
        return trainable ? tape.param(params_, name) : tape.constant_ref(params_.at(name).value);
    };
    Value x = tape.constant_ref(x_batch);
    ForwardValues f;
    f.h1 = nd::tanh_act(nd::add_row(nd::matmul(x, leaf("l1.w")), leaf("l1.b")));
    f.h2 = nd::tanh_act(nd::add_row(nd::matmul(f.h1, leaf("l2.w")), leaf("l2.b")));
    f.embedding = nd::add_row(nd::matmul(f.h2, leaf("l3.w")), leaf("l3.b"));
    f.logits = nd::add_row(nd::matmul(f.embedding, leaf("cls.w")), leaf("cls.b"));
    return f;
}

void EncoderModel::freeze() { frozen_ = true; }

std::string EncoderModel::checksum() const { return nd::param_checksum(params_); }

void EncoderModel::save(const std::string& path) const {
    nd::MetaMap meta;
    meta["kind"] = "encoder";
    meta["n_identities"] = std::to_string(n_identities_);
    nd::save_checkpoint(path, params_, meta);
}

EncoderModel EncoderModel::load(const std::string& path) {
    nd::Checkpoint ck = nd::load_checkpoint(path);
    if (ck.meta.count("kind") && ck.meta.at("kind") != "encoder")
        throw CompatError("checkpoint is not an encoder: " + path);
    EncoderModel m;
    m.n_identities_ = std::stoi(ck.meta.at("n_identities"));
    m.params_ = std::move(ck.params);
    m.frozen_ = true;  // loaded models are measurement instruments
    return m;
}

double heldout_accuracy(EncoderModel& model, const std::vector<faces::FaceImage>& data) {
    if (data.empty()) return 0.0;
    std::vector<size_t> idx(data.size());
    std::iota(idx.begin(), idx.end(), size_t{0});
    const Tensor x = batch_matrix(data, idx);
    Tape tape;
    auto f = model.forward(tape, x, false);
    const Tensor& logits = f.logits.val();
    int correct = 0;
    for (int r = 0; r < logits.rows(); ++r) {
        int best = 0;
        for (int c = 1; c < logits.cols(); ++c)
            if (logits.at(r, c) > logits.at(r, best)) best = c;
        if (best == data[static_cast<size_t>(r)].source_identity) ++correct;
    }
    return static_cast<double>(correct) / static_cast<double>(data.size());
}

EncoderModel train_encoder(const std::vector<faces::FaceImage>& train,
                           const std::vector<faces::FaceImage>& heldout, int n_identities,
                           const EncoderTrainConfig& config, EncoderTrainReport* report) {
    if (n_identities < 2) throw ContractError("train_encoder requires n_identities >= 2");
    if (train.empty()) throw ContractError("train_encoder requires a non-empty dataset");

    EncoderModel model = EncoderModel::random_init(n_identities, config.seed);
    Rng shuffle_rng(derive_seed(config.seed, "encoder-shuffle"));

    std::vector<size_t> order(train.size());
    std::iota(order.begin(), order.end(), size_t{0});

    double last_loss = 0.0;
    for (int epoch = 0; epoch < config.epochs; ++epoch) {
        shuffle_rng.shuffle(order);
        double epoch_loss = 0.0;
        int batches = 0;
        for (size_t start = 0; start < order.size(); start += static_cast<size_t>(config.batch)) {
            const size_t end = std::min(order.size(), start + static_cast<size_t>(config.batch));
            std::vector<size_t> idx(order.begin() + static_cast<long>(start),
                                    order.begin() + static_cast<long>(end));
            const Tensor x = batch_matrix(train, idx);
            std::vector<int> labels;
            labels.reserve(idx.size());
            for (size_t i : idx) labels.push_back(train[i].source_identity);

            Tape tape;
            auto f = model.forward(tape, x, true);
            Value loss = nd::softmax_xent(f.logits, labels);
            epoch_loss += loss.val()[0];
            ++batches;
            tape.backward(loss);
            model.params().adam_step(config.lr, 0.9, 0.999, 1e-8);
        }
        last_loss = epoch_loss / std::max(1, batches);
    }

    const double acc = heldout_accuracy(model, heldout.empty() ? train : heldout);
    if (report) {
        report->final_heldout_accuracy = acc;
        report->final_loss = last_loss;
        report->epochs_run = config.epochs;
    }
    if (acc < config.target_accuracy) {
        throw TrainingError("encoder accuracy " + std::to_string(acc) + " below required " +
                            std::to_string(config.target_accuracy));
    }
    model.freeze();
    return model;
}

IdentityEmbedding embed(const EncoderModel& model, const faces::FaceImage& image) {
    require_frozen(model, "embed");
    EncoderModel& m = const_cast<EncoderModel&>(model);  // forward is read-only
    Tape tape;
    auto f = m.forward(tape, image.flat(), false);
    const Tensor& e = f.embedding.val();
    double norm = 0.0;
    for (int i = 0; i < kEmbedDim; ++i) norm += e[i] * e[i];
    norm = std::sqrt(norm);
    if (norm < 1e-12) throw NumericError("degenerate zero embedding");
    IdentityEmbedding out;
    out.vector = Tensor({kEmbedDim});
    for (int i = 0; i < kEmbedDim; ++i) out.vector[i] = e[i] / norm;
    return out;
}

double id_similarity(const EncoderModel& model, const faces::FaceImage& generated,
                     const faces::FaceImage& reference) {
    const IdentityEmbedding a = embed(model, generated);
    const IdentityEmbedding b = embed(model, reference);
    return std::clamp(a.dot(b), -1.0, 1.0);
}

double detector_confidence(const EncoderModel& model, const faces::FaceImage& image) {
    require_frozen(model, "detector_confidence");
    EncoderModel& m = const_cast<EncoderModel&>(model);
    Tape tape;
    auto f = m.forward(tape, image.flat(), false);
    const Tensor probs = nd::softmax_rows(f.logits.val());
    double best = 0.0;
    for (int c = 0; c < probs.cols(); ++c) best = std::max(best, probs.at(0, c));
    return best;
}

double perceptual_distance(const EncoderModel& model, const faces::FaceImage& a,
                           const faces::FaceImage& b) {
    require_frozen(model, "perceptual_distance");
    EncoderModel& m = const_cast<EncoderModel&>(model);
    Tape ta, tb;
    const Tensor& fa = m.forward(ta, a.flat(), false).h2.val();
    const Tensor& fb = m.forward(tb, b.flat(), false).h2.val();
    double acc = 0.0;
    for (int i = 0; i < kHidden2; ++i) {
        const double d = fa[i] - fb[i];
        acc += d * d;
    }
    return acc / kHidden2;
}

}  // namespace flowprobe::enc
