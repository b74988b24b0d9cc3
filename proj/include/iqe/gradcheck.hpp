#pragma once
// Central-difference gradient verification. Runs in double precision: the
// 32-bit training mode is too coarse for finite differences.

#include <functional>

#include "iqe/tensor.hpp"

namespace iqe {

struct GradCheckOptions {
    double step = 1e-5;
    // Check at most this many elements per input (seeded subsample); <= 0 checks all.
    int max_elements_per_input = -1;
    uint64_t seed = 0;
    // Skip elements where both sides are below this magnitude: the central
    // difference of a composite objective cannot resolve gradients under the
    // floating-point cancellation floor eps*|f|/(2h), so such comparisons
    // carry no information. 0 disables the filter.
    double min_signal = 0.0;
    // When the central comparison fails, accept the element if the analytic
    // value matches either one-sided slope: at a relu/max kink the correct
    // gradient is one of the one-sided limits and the straddling central
    // difference averages them. A wrong gradient fails all three comparisons.
    bool one_sided_fallback = false;
};

// f must evaluate a scalar from the current contents of `inputs`. Returns the
// max over checked elements of |analytic - numeric| / max(1e-8, |analytic| + |numeric|).
inline double grad_check(const std::function<TensorT<double>()>& f,
                         std::vector<TensorT<double>> inputs,
                         GradCheckOptions opt = {}) {
    for (auto& t : inputs) {
        t.set_requires_grad(true);
        t.zero_grad();
    }
    std::vector<std::vector<double>> analytic;
    {
        TapeT<double> tape;
        TensorT<double> y = f();
        tape.backward(y);
    }
    for (auto& t : inputs)
        analytic.push_back(t.has_grad() ? t.grad() : std::vector<double>((size_t)t.size(), 0.0));

    // Numeric side runs without a tape (pure forward evaluations).
    double worst = 0.0;
    double f0 = 0.0;
    bool have_f0 = false;
    Rng rng(mix_seed(opt.seed, 0x67adc0de));
    for (size_t k = 0; k < inputs.size(); ++k) {
        auto& t = inputs[k];
        t.set_requires_grad(false);
        std::vector<long> picks;
        if (opt.max_elements_per_input > 0 && t.size() > opt.max_elements_per_input) {
            for (int i = 0; i < opt.max_elements_per_input; ++i)
                picks.push_back((long)(rng.next_u64() % (uint64_t)t.size()));
        } else {
            for (long i = 0; i < t.size(); ++i) picks.push_back(i);
        }
        for (long i : picks) {
            const double saved = t.values()[(size_t)i];
            t.values()[(size_t)i] = saved + opt.step;
            const double up = f().item();
            t.values()[(size_t)i] = saved - opt.step;
            const double dn = f().item();
            t.values()[(size_t)i] = saved;
            const double numeric = (up - dn) / (2.0 * opt.step);
            const double a = analytic[k][(size_t)i];
            if (opt.min_signal > 0 && std::abs(a) < opt.min_signal && std::abs(numeric) < opt.min_signal)
                continue;
            double rel = std::abs(a - numeric) / std::max(1e-8, std::abs(a) + std::abs(numeric));
            if (opt.one_sided_fallback && rel > worst) {
                if (!have_f0) {
                    f0 = f().item();
                    have_f0 = true;
                }
                const double fwd = (up - f0) / opt.step;
                const double bwd = (f0 - dn) / opt.step;
                const double rel_fwd = std::abs(a - fwd) / std::max(1e-8, std::abs(a) + std::abs(fwd));
                const double rel_bwd = std::abs(a - bwd) / std::max(1e-8, std::abs(a) + std::abs(bwd));
                rel = std::min(rel, std::min(rel_fwd, rel_bwd));
            }
            worst = std::max(worst, rel);
        }
        t.set_requires_grad(true);
    }
    for (auto& t : inputs) t.set_requires_grad(false);
    return worst;
}

}  // namespace iqe
