#pragma once

#include <cmath>

namespace flowprobe {

// Cosine learning-rate decay from base_lr to floor_frac * base_lr.
inline double cosine_lr(double base_lr, int64_t step, int64_t total_steps, double floor_frac = 0.1) {
    if (total_steps <= 1) return base_lr;
    const double progress = static_cast<double>(step) / static_cast<double>(total_steps - 1);
    const double lo = base_lr * floor_frac;
    return lo + (base_lr - lo) * 0.5 * (1.0 + std::cos(M_PI * progress));
}

}  // namespace flowprobe
