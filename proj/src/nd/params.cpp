#include "flowprobe/nd/params.hpp"

namespace flowprobe::nd {

void ParamSet::clip_grad_norm(double max_norm) {
    if (!grads_populated_) throw ContractError("clip_grad_norm called without populated gradients");
    double total = 0.0;
    for (const auto& [name, e] : entries_)
        for (double g : e.grad.vec()) total += g * g;
    total = std::sqrt(total);
    if (total <= max_norm || total == 0.0) return;
    const double scale = max_norm / total;
    for (auto& [name, e] : entries_)
        for (double& g : e.grad.vec()) g *= scale;
}

void ParamSet::adam_step(double lr, double beta1, double beta2, double eps) {
    if (!grads_populated_) throw ContractError("adam_step called without populated gradients");
    if (!(lr > 0.0)) throw ContractError("learning rate must be positive");
    if (!(beta1 > 0.0 && beta1 < 1.0 && beta2 > 0.0 && beta2 < 1.0))
        throw ContractError("betas must lie in (0,1)");
    if (!(eps > 0.0)) throw ContractError("eps must be positive");

    ++step_count_;
    const double bc1 = 1.0 - std::pow(beta1, static_cast<double>(step_count_));
    const double bc2 = 1.0 - std::pow(beta2, static_cast<double>(step_count_));

    for (auto& [name, e] : entries_) {
        double* p = e.value.data();
        double* g = e.grad.data();
        double* m = e.m.data();
        double* v = e.v.data();
        const int64_t n = e.value.numel();
        for (int64_t i = 0; i < n; ++i) {
            m[i] = beta1 * m[i] + (1.0 - beta1) * g[i];
            v[i] = beta2 * v[i] + (1.0 - beta2) * g[i] * g[i];
            const double mhat = m[i] / bc1;
            const double vhat = v[i] / bc2;
            p[i] -= lr * mhat / (std::sqrt(vhat) + eps);
        }
        e.value.ensure_finite("adam_step");
    }
    zero_grads();
}

}  // namespace flowprobe::nd
