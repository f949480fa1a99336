#pragma once

#include <map>
#include <string>

#include "flowprobe/common/rng.hpp"
#include "flowprobe/nd/tensor.hpp"

namespace flowprobe::nd {

struct ParamEntry {
    Tensor value;
    Tensor grad;   // same shape as value
    Tensor m;      // first moment
    Tensor v;      // second moment
};

// Named parameter collection with gradient buffers and adaptive-moment
// optimizer state. std::map keeps iteration order deterministic.
class ParamSet {
public:
    ParamEntry& add(const std::string& name, Tensor value) {
        if (entries_.count(name)) throw ContractError("duplicate parameter name: " + name);
        ParamEntry e;
        e.grad = Tensor::zeros(value.shape());
        e.m = Tensor::zeros(value.shape());
        e.v = Tensor::zeros(value.shape());
        e.value = std::move(value);
        return entries_.emplace(name, std::move(e)).first->second;
    }

    ParamEntry& at(const std::string& name) {
        auto it = entries_.find(name);
        if (it == entries_.end()) throw ContractError("unknown parameter: " + name);
        return it->second;
    }

    const ParamEntry& at(const std::string& name) const {
        auto it = entries_.find(name);
        if (it == entries_.end()) throw ContractError("unknown parameter: " + name);
        return it->second;
    }

    bool has(const std::string& name) const { return entries_.count(name) != 0; }

    std::map<std::string, ParamEntry>& entries() { return entries_; }
    const std::map<std::string, ParamEntry>& entries() const { return entries_; }

    size_t size() const { return entries_.size(); }
    int64_t step_count() const { return step_count_; }

    bool grads_populated() const { return grads_populated_; }
    void mark_grads_populated() { grads_populated_ = true; }

    void zero_grads() {
        for (auto& [name, e] : entries_)
            for (double& g : e.grad.vec()) g = 0.0;
        grads_populated_ = false;
    }

    // Standard adaptive-moment update with bias correction. Gradients are
    // zeroed after the step and the step counter advances by one.
    void adam_step(double lr, double beta1, double beta2, double eps);

    // Scale gradients down to the given global L2 norm when they exceed it.
    void clip_grad_norm(double max_norm);

    // Random init helper: uniform(-s, s) with s = sqrt(6 / (fan_in + fan_out)).
    Tensor& add_linear_init(const std::string& name, int fan_in, int fan_out, Rng& rng) {
        Tensor w({fan_in, fan_out});
        const double s = std::sqrt(6.0 / (fan_in + fan_out));
        for (double& x : w.vec()) x = rng.uniform(-s, s);
        return add(name, std::move(w)).value;
    }

private:
    std::map<std::string, ParamEntry> entries_;
    int64_t step_count_ = 0;
    bool grads_populated_ = false;
};

}  // namespace flowprobe::nd
