#pragma once

#include <cmath>
#include <cstdint>
#include <functional>
#include <set>
#include <string>
#include <vector>

#include "cloudclass/ad/tensor.hpp"
#include "cloudclass/core/rng.hpp"

namespace cloudclass::ad {

struct GradCheckOptions {
    double delta = 1e-3;
    std::size_t max_samples_per_tensor = 8; // larger tensors are subsampled
    std::uint64_t sample_seed = 17;
};

struct GradCheckEntry {
    std::string name;
    double max_rel_err = 0.0;
    double worst_analytic = 0.0;
    double worst_numeric = 0.0;
    std::size_t elements_checked = 0;
};

struct GradCheckReport {
    double max_rel_err = 0.0;
    std::vector<GradCheckEntry> entries;

    bool passed(double tol) const { return max_rel_err < tol; }
};

/// Compares reverse-mode gradients against central differences in double
/// precision. The error metric is |a - n| / max(|a|, |n|, 1): relative for
/// O(1) gradients, absolute for near-zero ones where a pure ratio would
/// amplify truncation noise.
///
/// `loss_fn(tape)` must rebuild the computation from the current input
/// values and return a scalar; it is called with nullptr for the
/// finite-difference probes. Inputs must already require gradients.
inline GradCheckReport grad_check(
    const std::function<Tensor<double>(Tape<double>*)>& loss_fn,
    std::vector<std::pair<std::string, Tensor<double>>> inputs, GradCheckOptions opt = {}) {
    for (auto& [name, t] : inputs) {
        if (!t.requires_grad())
            throw ValidationError("grad_check: input '" + name + "' does not require gradients");
        t.zero_grad();
    }

    Tape<double> tape;
    Tensor<double> loss = loss_fn(&tape);
    tape.backward(loss);

    GradCheckReport report;
    Rng rng(opt.sample_seed);
    for (auto& [name, t] : inputs) {
        GradCheckEntry entry;
        entry.name = name;

        std::vector<std::size_t> picks;
        if (t.numel() <= opt.max_samples_per_tensor) {
            picks.resize(t.numel());
            for (std::size_t i = 0; i < picks.size(); ++i) picks[i] = i;
        } else {
            std::set<std::size_t> chosen;
            while (chosen.size() < opt.max_samples_per_tensor)
                chosen.insert(static_cast<std::size_t>(rng.below(t.numel())));
            picks.assign(chosen.begin(), chosen.end());
        }

        for (std::size_t i : picks) {
            const double analytic = t.grad()[i];
            const double saved = t.values()[i];
            t.values()[i] = saved + opt.delta;
            const double up = loss_fn(nullptr).item();
            t.values()[i] = saved - opt.delta;
            const double down = loss_fn(nullptr).item();
            t.values()[i] = saved;
            const double numeric = (up - down) / (2.0 * opt.delta);

            const double denom = std::max({std::abs(analytic), std::abs(numeric), 1.0});
            const double err = std::abs(analytic - numeric) / denom;
            if (err > entry.max_rel_err) {
                entry.max_rel_err = err;
                entry.worst_analytic = analytic;
                entry.worst_numeric = numeric;
            }
            ++entry.elements_checked;
        }
        report.max_rel_err = std::max(report.max_rel_err, entry.max_rel_err);
        report.entries.push_back(std::move(entry));
    }
    return report;
}

} // namespace cloudclass::ad
