#include "flowprobe/distill/distill.hpp"

#include <algorithm>
#include <numeric>

#include "flowprobe/common/error.hpp"
#include "flowprobe/common/rng.hpp"
#include "flowprobe/common/schedule.hpp"

namespace flowprobe::distill {

using nd::Tape;
using nd::Tensor;
using nd::Value;

std::vector<Coupling> generate_couplings(const flow::FlowBackbone& teacher, int n_pairs, int steps,
                                         double guidance, uint64_t seed) {
    if (!teacher.frozen()) throw ContractError("coupling generation requires a frozen teacher");
    if (n_pairs < 1) throw ContractError("coupling generation requires n_pairs >= 1");

    std::vector<Coupling> out;
    out.reserve(static_cast<size_t>(n_pairs));
    for (int i = 0; i < n_pairs; ++i) {
        const auto kind = static_cast<faces::TransformKind>(i % 3);
        flow::SampleConfig cfg;
        cfg.steps = steps;
        cfg.guidance = guidance;
        cfg.prompt = {kind, 0.0};  // strength affects rendering, not conditioning
        cfg.seed = derive_seed(seed, "coupling", static_cast<uint64_t>(i));
        cfg.record_states = false;
        auto [img, traj] = flow::sample(teacher, cfg);

        Coupling c;
        c.eps = traj.initial_noise;
        c.x0hat = traj.states.back();
        c.prompt_row = flow::prompt_row(kind);
        out.push_back(std::move(c));
    }
    return out;
}

flow::FlowBackbone reflow(const flow::FlowBackbone& teacher, const ReflowConfig& config,
                          flow::FlowTrainReport* report) {
    if (!teacher.frozen()) throw ContractError("reflow requires a frozen teacher");

    const std::vector<Coupling> pairs =
        generate_couplings(teacher, config.n_pairs, config.sample_steps, config.sample_guidance,
                           derive_seed(config.seed, "reflow-pairs"));

    flow::FlowBackbone model = teacher.clone_params();
    model.meta()["teacher_sha"] = teacher.checksum();

    Rng rng(derive_seed(config.seed, "reflow-train"));
    std::vector<size_t> order(pairs.size());
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
                std::vector<double> ts(static_cast<size_t>(bsz));
                std::vector<int> rows(static_cast<size_t>(bsz));
                for (int r = 0; r < bsz; ++r) {
                    const Coupling& c = pairs[order[start + static_cast<size_t>(r)]];
                    const double t = rng.uniform();
                    ts[static_cast<size_t>(r)] = t;
                    rows[static_cast<size_t>(r)] = c.prompt_row;
                    for (int k = 0; k < flow::kStateDim; ++k) {
                        xt.at(r, k) = (1.0 - t) * c.x0hat[k] + t * c.eps[k];
                        vstar.at(r, k) = c.x0hat[k] - c.eps[k];
                    }
                }
                const Tensor temb = flow::time_embedding_rows(ts);

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
        throw TrainingError(std::string("reflow training diverged: ") + e.what());
    }

    if (report) {
        report->initial_loss = initial_loss;
        report->final_loss = final_loss;
    }
    return model;
}

flow::FlowBackbone distill_endpoint(const flow::FlowBackbone& reflowed,
                                    const flow::FlowBackbone& teacher, const DistillConfig& config,
                                    flow::FlowTrainReport* report) {
    if (!teacher.frozen()) throw ContractError("distill_endpoint requires a frozen teacher");
    if (!reflowed.frozen()) throw ContractError("distill_endpoint requires a frozen reflowed model");
    if (config.target_steps < 1) throw ContractError("distill_endpoint requires target_steps >= 1");

    flow::FlowBackbone student = reflowed.clone_params();
    student.set_distilled(true);
    student.meta()["teacher_sha"] = teacher.checksum();
    student.meta()["reflow_sha"] = reflowed.checksum();
    student.meta()["target_steps"] = std::to_string(config.target_steps);

    if (config.epochs == 0) return student;  // no-op training keeps the weights bit-identical

    // Teacher endpoints from shared noise and prompts.
    const std::vector<Coupling> pairs =
        generate_couplings(teacher, config.n_pairs, config.teacher_steps, config.teacher_guidance,
                           derive_seed(config.seed, "distill-pairs"));

    Rng rng(derive_seed(config.seed, "distill-train"));
    std::vector<size_t> order(pairs.size());
    std::iota(order.begin(), order.end(), size_t{0});
    const int64_t steps_per_epoch =
        static_cast<int64_t>((order.size() + static_cast<size_t>(config.batch) - 1) /
                             static_cast<size_t>(config.batch));
    const int64_t total_steps = steps_per_epoch * config.epochs;

    const int T = config.target_steps;
    double initial_loss = 0.0, final_loss = 0.0;
    try {
        for (int epoch = 0; epoch < config.epochs; ++epoch) {
            rng.shuffle(order);
            double epoch_loss = 0.0;
            int batches = 0;
            for (size_t start = 0; start < order.size(); start += static_cast<size_t>(config.batch)) {
                const size_t end = std::min(order.size(), start + static_cast<size_t>(config.batch));
                const int bsz = static_cast<int>(end - start);

                Tensor eps({bsz, flow::kStateDim});
                Tensor target({bsz, flow::kStateDim});
                std::vector<int> rows(static_cast<size_t>(bsz));
                for (int r = 0; r < bsz; ++r) {
                    const Coupling& c = pairs[order[start + static_cast<size_t>(r)]];
                    rows[static_cast<size_t>(r)] = c.prompt_row;
                    for (int k = 0; k < flow::kStateDim; ++k) {
                        eps.at(r, k) = c.eps[k];
                        target.at(r, k) = c.x0hat[k];
                    }
                }

                // Unrolled student sampling at guidance 0 on one tape.
                Tape tape;
                Value x = tape.constant_ref(eps);
                for (int k = 0; k < T; ++k) {
                    const double t_cur = 1.0 - static_cast<double>(k) / T;
                    const double t_next = 1.0 - static_cast<double>(k + 1) / T;
                    const Tensor temb = flow::time_embedding_rows(
                        std::vector<double>(static_cast<size_t>(bsz), t_cur));
                    Value v = student.forward(tape, x, temb, rows, true);
                    x = nd::add(x, nd::scale(v, t_cur - t_next));
                }
                Value loss = nd::mse(x, tape.constant_ref(target));
                epoch_loss += loss.val()[0];
                ++batches;
                tape.backward(loss);
                student.params().clip_grad_norm(10.0);
                student.params().adam_step(cosine_lr(config.lr, student.params().step_count(), total_steps),
                                           0.9, 0.999, 1e-8);
            }
            epoch_loss /= std::max(1, batches);
            if (epoch == 0) initial_loss = epoch_loss;
            final_loss = epoch_loss;
        }
    } catch (const NumericError& e) {
        throw TrainingError(std::string("endpoint distillation diverged: ") + e.what());
    }

    if (report) {
        report->initial_loss = initial_loss;
        report->final_loss = final_loss;
    }
    return student;
}

}  // namespace flowprobe::distill
