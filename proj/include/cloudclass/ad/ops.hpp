#pragma once

#include <cstdint>
#include <span>
#include <vector>

#include "cloudclass/ad/tensor.hpp"
#include "cloudclass/core/rng.hpp"

// Differentiable primitives. Forward contracts are standard; every output is
// scanned for non-finite values and every reduction runs in a fixed
// sequential order, so results are bit-identical across runs.
namespace cloudclass::ad {

template <typename S>
Tensor<S> matmul(Tape<S>* tape, const Tensor<S>& a, const Tensor<S>& b) {
    if (a.rank() != 2 || b.rank() != 2 || a.dim(1) != b.dim(0))
        throw ValidationError("matmul: incompatible shapes");
    const std::size_t m = a.dim(0), k = a.dim(1), n = b.dim(1);

    Tensor<S> out = Tensor<S>::zeros({m, n});
    {
        const S* av = a.values().data();
        const S* bv = b.values().data();
        S* ov = out.values().data();
        for (std::size_t i = 0; i < m; ++i)
            for (std::size_t p = 0; p < k; ++p) {
                const S aip = av[i * k + p];
                const S* brow = bv + p * n;
                S* orow = ov + i * n;
                for (std::size_t j = 0; j < n; ++j) orow[j] += aip * brow[j];
            }
    }
    check_finite(out.values(), "matmul");

    if (tape && (a.requires_grad() || b.requires_grad())) {
        out.set_requires_grad(true);
        tape->record("matmul", out, [a = a, b = b, out, m, k, n]() mutable {
            const S* gy = out.grad().data();
            if (a.requires_grad()) {
                S* ga = a.grad().data();
                const S* bv = b.values().data();
                for (std::size_t i = 0; i < m; ++i)
                    for (std::size_t p = 0; p < k; ++p) {
                        S acc = 0;
                        const S* brow = bv + p * n;
                        const S* grow = gy + i * n;
                        for (std::size_t j = 0; j < n; ++j) acc += grow[j] * brow[j];
                        ga[i * k + p] += acc;
                    }
            }
            if (b.requires_grad()) {
                S* gb = b.grad().data();
                const S* av = a.values().data();
                for (std::size_t i = 0; i < m; ++i)
                    for (std::size_t p = 0; p < k; ++p) {
                        const S aip = av[i * k + p];
                        const S* grow = gy + i * n;
                        S* gbrow = gb + p * n;
                        for (std::size_t j = 0; j < n; ++j) gbrow[j] += aip * grow[j];
                    }
            }
        });
    }
    return out;
}

/// Adds a length-F bias to the last axis.
template <typename S>
Tensor<S> bias_add(Tape<S>* tape, const Tensor<S>& x, const Tensor<S>& b) {
    if (b.rank() != 1 || x.shape().back() != b.dim(0))
        throw ValidationError("bias_add: bias must match the last axis");
    const std::size_t f = b.dim(0);
    const std::size_t rows = x.numel() / f;

    Tensor<S> out = Tensor<S>::zeros(x.shape());
    for (std::size_t r = 0; r < rows; ++r)
        for (std::size_t j = 0; j < f; ++j)
            out.values()[r * f + j] = x.values()[r * f + j] + b.values()[j];
    check_finite(out.values(), "bias_add");

    if (tape && (x.requires_grad() || b.requires_grad())) {
        out.set_requires_grad(true);
        tape->record("bias_add", out, [x = x, b = b, out, rows, f]() mutable {
            const auto& gy = out.grad();
            if (x.requires_grad()) {
                auto& gx = x.grad();
                for (std::size_t i = 0; i < gy.size(); ++i) gx[i] += gy[i];
            }
            if (b.requires_grad()) {
                auto& gb = b.grad();
                for (std::size_t r = 0; r < rows; ++r)
                    for (std::size_t j = 0; j < f; ++j) gb[j] += gy[r * f + j];
            }
        });
    }
    return out;
}

template <typename S>
Tensor<S> relu(Tape<S>* tape, const Tensor<S>& x) {
    Tensor<S> out = Tensor<S>::zeros(x.shape());
    for (std::size_t i = 0; i < x.numel(); ++i)
        out.values()[i] = x.values()[i] > S(0) ? x.values()[i] : S(0);
    check_finite(out.values(), "relu");

    if (tape && x.requires_grad()) {
        out.set_requires_grad(true);
        tape->record("relu", out, [x = x, out]() mutable {
            auto& gx = x.grad();
            const auto& gy = out.grad();
            const auto& xv = x.values();
            for (std::size_t i = 0; i < xv.size(); ++i)
                if (xv[i] > S(0)) gx[i] += gy[i];
        });
    }
    return out;
}

/// relu restricted to a fixed active set: out = active ? x : 0. Evaluates
/// the smooth piece selected at the reference point, like
/// max_reduce_set_fixed does for pooling.
template <typename S>
Tensor<S> relu_fixed(Tape<S>* tape, const Tensor<S>& x,
                     const std::vector<std::uint32_t>& active) {
    if (active.size() != x.numel()) throw ValidationError("relu_fixed: mask size mismatch");
    Tensor<S> out = Tensor<S>::zeros(x.shape());
    for (std::size_t i = 0; i < x.numel(); ++i)
        out.values()[i] = active[i] ? x.values()[i] : S(0);
    check_finite(out.values(), "relu_fixed");

    if (tape && x.requires_grad()) {
        out.set_requires_grad(true);
        auto mask = std::make_shared<std::vector<std::uint32_t>>(active);
        tape->record("relu_fixed", out, [x = x, out, mask]() mutable {
            auto& gx = x.grad();
            const auto& gy = out.grad();
            for (std::size_t i = 0; i < gx.size(); ++i)
                if ((*mask)[i]) gx[i] += gy[i];
        });
    }
    return out;
}

/// Concatenates two tensors along `axis`; all other dims must agree.
template <typename S>
Tensor<S> concat(Tape<S>* tape, const Tensor<S>& a, const Tensor<S>& b, std::size_t axis) {
    if (a.rank() != b.rank() || axis >= a.rank())
        throw ValidationError("concat: rank mismatch or bad axis");
    for (std::size_t i = 0; i < a.rank(); ++i)
        if (i != axis && a.dim(i) != b.dim(i))
            throw ValidationError("concat: shapes differ off the concat axis");

    std::vector<std::size_t> shape = a.shape();
    shape[axis] += b.dim(axis);

    std::size_t outer = 1, inner = 1;
    for (std::size_t i = 0; i < axis; ++i) outer *= a.dim(i);
    for (std::size_t i = axis + 1; i < a.rank(); ++i) inner *= a.dim(i);
    const std::size_t wa = a.dim(axis) * inner;
    const std::size_t wb = b.dim(axis) * inner;

    Tensor<S> out = Tensor<S>::zeros(shape);
    for (std::size_t o = 0; o < outer; ++o) {
        std::copy_n(a.values().data() + o * wa, wa, out.values().data() + o * (wa + wb));
        std::copy_n(b.values().data() + o * wb, wb, out.values().data() + o * (wa + wb) + wa);
    }

    if (tape && (a.requires_grad() || b.requires_grad())) {
        out.set_requires_grad(true);
        tape->record("concat", out, [a = a, b = b, out, outer, wa, wb]() mutable {
            const S* gy = out.grad().data();
            for (std::size_t o = 0; o < outer; ++o) {
                if (a.requires_grad()) {
                    S* ga = a.grad().data() + o * wa;
                    const S* src = gy + o * (wa + wb);
                    for (std::size_t i = 0; i < wa; ++i) ga[i] += src[i];
                }
                if (b.requires_grad()) {
                    S* gb = b.grad().data() + o * wb;
                    const S* src = gy + o * (wa + wb) + wa;
                    for (std::size_t i = 0; i < wb; ++i) gb[i] += src[i];
                }
            }
        });
    }
    return out;
}

/// Inverted dropout: kept units scale by 1/(1-p) in training; identity (the
/// same tensor, no tape node) in evaluation or at p = 0.
template <typename S>
Tensor<S> dropout(Tape<S>* tape, const Tensor<S>& x, double p, std::uint64_t seed, bool training) {
    if (p < 0.0 || p >= 1.0) throw ValidationError("dropout: p must be in [0,1)");
    if (!training || p == 0.0) return x;

    const S inv_keep = S(1.0 / (1.0 - p));
    auto mask = std::make_shared<std::vector<std::uint8_t>>(x.numel());
    Rng rng(seed);
    for (auto& m : *mask) m = rng.uniform() >= p ? 1 : 0;

    Tensor<S> out = Tensor<S>::zeros(x.shape());
    for (std::size_t i = 0; i < x.numel(); ++i)
        out.values()[i] = (*mask)[i] ? x.values()[i] * inv_keep : S(0);
    check_finite(out.values(), "dropout");

    if (tape && x.requires_grad()) {
        out.set_requires_grad(true);
        tape->record("dropout", out, [x = x, out, mask, inv_keep]() mutable {
            auto& gx = x.grad();
            const auto& gy = out.grad();
            for (std::size_t i = 0; i < gx.size(); ++i)
                if ((*mask)[i]) gx[i] += gy[i] * inv_keep;
        });
    }
    return out;
}

inline constexpr double kBatchNormEps = 1e-5;

/// Normalizes each last-axis feature over all leading dims. Training mode
/// uses batch statistics and decays the running stats as
/// running = momentum * running + (1 - momentum) * batch (unbiased variance
/// in the running buffer). Evaluation normalizes with the running stats.
template <typename S>
Tensor<S> batch_norm(Tape<S>* tape, const Tensor<S>& x, const Tensor<S>& gamma,
                     const Tensor<S>& beta, std::vector<S>& running_mean,
                     std::vector<S>& running_var, S momentum, bool training,
                     bool update_running_stats = true) {
    const std::size_t f = x.shape().back();
    if (gamma.numel() != f || beta.numel() != f || running_mean.size() != f ||
        running_var.size() != f)
        throw ValidationError("batch_norm: parameter length must match the feature axis");
    const std::size_t rows = x.numel() / f;
    if (training && rows < 2)
        throw ValidationError("batch_norm: training mode needs at least 2 rows");

    auto xhat = std::make_shared<std::vector<S>>(x.numel());
    auto ivar = std::make_shared<std::vector<S>>(f);
    const S* xv = x.values().data();

    if (training) {
        for (std::size_t j = 0; j < f; ++j) {
            double mean = 0;
            for (std::size_t r = 0; r < rows; ++r) mean += xv[r * f + j];
            mean /= static_cast<double>(rows);
            double var = 0;
            for (std::size_t r = 0; r < rows; ++r) {
                const double c = xv[r * f + j] - mean;
                var += c * c;
            }
            var /= static_cast<double>(rows);
            const double iv = 1.0 / std::sqrt(var + kBatchNormEps);
            (*ivar)[j] = static_cast<S>(iv);
            for (std::size_t r = 0; r < rows; ++r)
                (*xhat)[r * f + j] = static_cast<S>((xv[r * f + j] - mean) * iv);
            if (update_running_stats) {
                const double unbiased = var * static_cast<double>(rows) / (rows - 1);
                running_mean[j] = static_cast<S>(momentum * running_mean[j] + (S(1) - momentum) * S(mean));
                running_var[j] = static_cast<S>(momentum * running_var[j] + (S(1) - momentum) * S(unbiased));
            }
        }
    } else {
        for (std::size_t j = 0; j < f; ++j) {
            const double iv = 1.0 / std::sqrt(static_cast<double>(running_var[j]) + kBatchNormEps);
            (*ivar)[j] = static_cast<S>(iv);
            for (std::size_t r = 0; r < rows; ++r)
                (*xhat)[r * f + j] = static_cast<S>((xv[r * f + j] - running_mean[j]) * iv);
        }
    }

    Tensor<S> out = Tensor<S>::zeros(x.shape());
    for (std::size_t r = 0; r < rows; ++r)
        for (std::size_t j = 0; j < f; ++j)
            out.values()[r * f + j] = gamma.values()[j] * (*xhat)[r * f + j] + beta.values()[j];
    check_finite(out.values(), "batch_norm");

    if (tape && (x.requires_grad() || gamma.requires_grad() || beta.requires_grad())) {
        out.set_requires_grad(true);
        tape->record("batch_norm", out,
                     [x = x, gamma = gamma, beta = beta, out, xhat, ivar, rows, f, training]() mutable {
            const auto& gy = out.grad();
            if (gamma.requires_grad()) {
                auto& gg = gamma.grad();
                for (std::size_t r = 0; r < rows; ++r)
                    for (std::size_t j = 0; j < f; ++j)
                        gg[j] += gy[r * f + j] * (*xhat)[r * f + j];
            }
            if (beta.requires_grad()) {
                auto& gb = beta.grad();
                for (std::size_t r = 0; r < rows; ++r)
                    for (std::size_t j = 0; j < f; ++j) gb[j] += gy[r * f + j];
            }
            if (x.requires_grad()) {
                auto& gx = x.grad();
                if (training) {
                    // dx = (gamma*ivar/m) * (m*gy - sum(gy) - xhat*sum(gy*xhat))
                    for (std::size_t j = 0; j < f; ++j) {
                        double sum_gy = 0, sum_gy_xhat = 0;
                        for (std::size_t r = 0; r < rows; ++r) {
                            sum_gy += gy[r * f + j];
                            sum_gy_xhat += gy[r * f + j] * (*xhat)[r * f + j];
                        }
                        const double scale =
                            static_cast<double>(gamma.values()[j]) * (*ivar)[j] / rows;
                        for (std::size_t r = 0; r < rows; ++r)
                            gx[r * f + j] += static_cast<S>(
                                scale * (rows * static_cast<double>(gy[r * f + j]) - sum_gy -
                                         (*xhat)[r * f + j] * sum_gy_xhat));
                    }
                } else {
                    for (std::size_t r = 0; r < rows; ++r)
                        for (std::size_t j = 0; j < f; ++j)
                            gx[r * f + j] += gy[r * f + j] * gamma.values()[j] * (*ivar)[j];
                }
            }
        });
    }
    return out;
}

template <typename S>
struct MaxReduceOut {
    Tensor<S> values;                  // [B, F]
    std::vector<std::uint32_t> argmax; // B*F, first index on ties
};

/// Per-feature max over the set axis of a [B, N, F] tensor. The backward
/// pass routes the gradient to the argmax element only.
template <typename S>
MaxReduceOut<S> max_reduce_set(Tape<S>* tape, const Tensor<S>& x) {
    if (x.rank() != 3) throw ValidationError("max_reduce_set: expected [B,N,F]");
    const std::size_t bsz = x.dim(0), n = x.dim(1), f = x.dim(2);

    MaxReduceOut<S> out;
    out.values = Tensor<S>::zeros({bsz, f});
    out.argmax.assign(bsz * f, 0);
    for (std::size_t b = 0; b < bsz; ++b)
        for (std::size_t j = 0; j < f; ++j) {
            S best = x.values()[(b * n) * f + j];
            std::uint32_t best_i = 0;
            for (std::size_t i = 1; i < n; ++i) {
                const S v = x.values()[(b * n + i) * f + j];
                if (v > best) {
                    best = v;
                    best_i = static_cast<std::uint32_t>(i);
                }
            }
            out.values.values()[b * f + j] = best;
            out.argmax[b * f + j] = best_i;
        }
    check_finite(out.values.values(), "max_reduce_set");

    if (tape && x.requires_grad()) {
        out.values.set_requires_grad(true);
        auto arg = std::make_shared<std::vector<std::uint32_t>>(out.argmax);
        Tensor<S> y = out.values;
        tape->record("max_reduce_set", y, [x = x, y, arg, bsz, n, f]() mutable {
            auto& gx = x.grad();
            const auto& gy = y.grad();
            for (std::size_t b = 0; b < bsz; ++b)
                for (std::size_t j = 0; j < f; ++j)
                    gx[(b * n + (*arg)[b * f + j]) * f + j] += gy[b * f + j];
        });
    }
    return out;
}

/// max_reduce_set restricted to a fixed selection pattern: out[b, f] =
/// x[b, arg[b*F + f], f]. This is the smooth piece of the max that reverse
/// mode differentiates; the gradient checker probes it so that finite
/// differences cannot wander across argmax boundaries.
template <typename S>
Tensor<S> max_reduce_set_fixed(Tape<S>* tape, const Tensor<S>& x,
                               const std::vector<std::uint32_t>& argmax) {
    if (x.rank() != 3) throw ValidationError("max_reduce_set_fixed: expected [B,N,F]");
    const std::size_t bsz = x.dim(0), n = x.dim(1), f = x.dim(2);
    if (argmax.size() != bsz * f)
        throw ValidationError("max_reduce_set_fixed: selection size mismatch");

    Tensor<S> out = Tensor<S>::zeros({bsz, f});
    for (std::size_t b = 0; b < bsz; ++b)
        for (std::size_t j = 0; j < f; ++j) {
            const std::uint32_t i = argmax[b * f + j];
            if (i >= n) throw ValidationError("max_reduce_set_fixed: index out of range");
            out.values()[b * f + j] = x.values()[(b * n + i) * f + j];
        }

    if (tape && x.requires_grad()) {
        out.set_requires_grad(true);
        auto arg = std::make_shared<std::vector<std::uint32_t>>(argmax);
        tape->record("max_reduce_set_fixed", out, [x = x, out, arg, bsz, n, f]() mutable {
            auto& gx = x.grad();
            const auto& gy = out.grad();
            for (std::size_t b = 0; b < bsz; ++b)
                for (std::size_t j = 0; j < f; ++j)
                    gx[(b * n + (*arg)[b * f + j]) * f + j] += gy[b * f + j];
        });
    }
    return out;
}

/// Numerically stable mean cross-entropy over rows of [B, C] logits.
template <typename S>
Tensor<S> softmax_cross_entropy(Tape<S>* tape, const Tensor<S>& logits,
                                const std::vector<std::uint32_t>& targets) {
    if (logits.rank() != 2) throw ValidationError("softmax_cross_entropy: expected [B,C]");
    const std::size_t bsz = logits.dim(0), c = logits.dim(1);
    if (targets.size() != bsz)
        throw ValidationError("softmax_cross_entropy: one target per row required");
    for (std::uint32_t t : targets)
        if (t >= c) throw ValidationError("softmax_cross_entropy: target out of range");

    auto probs = std::make_shared<std::vector<S>>(bsz * c);
    double total = 0;
    for (std::size_t b = 0; b < bsz; ++b) {
        const S* row = logits.values().data() + b * c;
        double zmax = row[0];
        for (std::size_t j = 1; j < c; ++j) zmax = std::max(zmax, static_cast<double>(row[j]));
        double denom = 0;
        for (std::size_t j = 0; j < c; ++j) denom += std::exp(row[j] - zmax);
        for (std::size_t j = 0; j < c; ++j)
            (*probs)[b * c + j] = static_cast<S>(std::exp(row[j] - zmax) / denom);
        total += std::log(denom) - (row[targets[b]] - zmax);
    }
    Tensor<S> loss = Tensor<S>::scalar(static_cast<S>(total / static_cast<double>(bsz)));
    check_finite(loss.values(), "softmax_cross_entropy");

    if (tape && logits.requires_grad()) {
        loss.set_requires_grad(true);
        auto tgt = std::make_shared<std::vector<std::uint32_t>>(targets);
        tape->record("softmax_cross_entropy", loss, [logits = logits, loss, probs, tgt, bsz, c]() mutable {
            auto& gx = logits.grad();
            const S g = loss.grad()[0] / static_cast<S>(bsz);
            for (std::size_t b = 0; b < bsz; ++b)
                for (std::size_t j = 0; j < c; ++j) {
                    const S onehot = (*tgt)[b] == j ? S(1) : S(0);
                    gx[b * c + j] += ((*probs)[b * c + j] - onehot) * g;
                }
        });
    }
    return loss;
}

/// Gathers rows along the set axis: out[b, r, :] = x[b, idx[b*R + r], :].
template <typename S>
Tensor<S> gather_set(Tape<S>* tape, const Tensor<S>& x, const std::vector<std::uint32_t>& idx,
                     std::size_t r_out) {
    if (x.rank() != 3) throw ValidationError("gather_set: expected [B,N,F]");
    const std::size_t bsz = x.dim(0), n = x.dim(1), f = x.dim(2);
    if (idx.size() != bsz * r_out) throw ValidationError("gather_set: index count mismatch");
    for (std::uint32_t i : idx)
        if (i >= n) throw ValidationError("gather_set: index out of range");

    Tensor<S> out = Tensor<S>::zeros({bsz, r_out, f});
    for (std::size_t b = 0; b < bsz; ++b)
        for (std::size_t r = 0; r < r_out; ++r)
            std::copy_n(x.values().data() + (b * n + idx[b * r_out + r]) * f, f,
                        out.values().data() + (b * r_out + r) * f);

    if (tape && x.requires_grad()) {
        out.set_requires_grad(true);
        auto table = std::make_shared<std::vector<std::uint32_t>>(idx);
        tape->record("gather_set", out, [x = x, out, table, bsz, n, f, r_out]() mutable {
            auto& gx = x.grad();
            const auto& gy = out.grad();
            for (std::size_t b = 0; b < bsz; ++b)
                for (std::size_t r = 0; r < r_out; ++r) {
                    S* dst = gx.data() + (b * n + (*table)[b * r_out + r]) * f;
                    const S* src = gy.data() + (b * r_out + r) * f;
                    for (std::size_t j = 0; j < f; ++j) dst[j] += src[j];
                }
        });
    }
    return out;
}

/// Three-neighbor weighted interpolation of sparse features onto dense
/// points: out[b, d, :] = sum_c w[b,d,c] * sparse[b, idx[b,d,c], :].
template <typename S>
Tensor<S> interpolate(Tape<S>* tape, const Tensor<S>& sparse,
                      const std::vector<std::uint32_t>& idx, const std::vector<S>& weights,
                      std::size_t dense_n) {
    if (sparse.rank() != 3) throw ValidationError("interpolate: expected [B,S,F]");
    const std::size_t bsz = sparse.dim(0), sn = sparse.dim(1), f = sparse.dim(2);
    if (idx.size() != bsz * dense_n * 3 || weights.size() != idx.size())
        throw ValidationError("interpolate: index/weight count mismatch");
    for (std::uint32_t i : idx)
        if (i >= sn) throw ValidationError("interpolate: index out of range");

    Tensor<S> out = Tensor<S>::zeros({bsz, dense_n, f});
    for (std::size_t b = 0; b < bsz; ++b)
        for (std::size_t d = 0; d < dense_n; ++d) {
            S* dst = out.values().data() + (b * dense_n + d) * f;
            for (std::size_t c = 0; c < 3; ++c) {
                const std::size_t o = (b * dense_n + d) * 3 + c;
                const S w = weights[o];
                if (w == S(0)) continue;
                const S* src = sparse.values().data() + (b * sn + idx[o]) * f;
                for (std::size_t j = 0; j < f; ++j) dst[j] += w * src[j];
            }
        }
    check_finite(out.values(), "interpolate");

    if (tape && sparse.requires_grad()) {
        out.set_requires_grad(true);
        auto table = std::make_shared<std::vector<std::uint32_t>>(idx);
        auto wts = std::make_shared<std::vector<S>>(weights);
        tape->record("interpolate", out, [sparse = sparse, out, table, wts, bsz, sn, f, dense_n]() mutable {
            auto& gx = sparse.grad();
            const auto& gy = out.grad();
            for (std::size_t b = 0; b < bsz; ++b)
                for (std::size_t d = 0; d < dense_n; ++d)
                    for (std::size_t c = 0; c < 3; ++c) {
                        const std::size_t o = (b * dense_n + d) * 3 + c;
                        const S w = (*wts)[o];
                        if (w == S(0)) continue;
                        S* dst = gx.data() + (b * sn + (*table)[o]) * f;
                        const S* src = gy.data() + (b * dense_n + d) * f;
                        for (std::size_t j = 0; j < f; ++j) dst[j] += w * src[j];
                    }
        });
    }
    return out;
}

/// Broadcasts [B, F] to [B, N, F].
template <typename S>
Tensor<S> repeat_set(Tape<S>* tape, const Tensor<S>& x, std::size_t n) {
    if (x.rank() != 2) throw ValidationError("repeat_set: expected [B,F]");
    const std::size_t bsz = x.dim(0), f = x.dim(1);
    Tensor<S> out = Tensor<S>::zeros({bsz, n, f});
    for (std::size_t b = 0; b < bsz; ++b)
        for (std::size_t i = 0; i < n; ++i)
            std::copy_n(x.values().data() + b * f, f, out.values().data() + (b * n + i) * f);

    if (tape && x.requires_grad()) {
        out.set_requires_grad(true);
        tape->record("repeat_set", out, [x = x, out, bsz, n, f]() mutable {
            auto& gx = x.grad();
            const auto& gy = out.grad();
            for (std::size_t b = 0; b < bsz; ++b)
                for (std::size_t i = 0; i < n; ++i)
                    for (std::size_t j = 0; j < f; ++j) gx[b * f + j] += gy[(b * n + i) * f + j];
        });
    }
    return out;
}

template <typename S>
Tensor<S> reshape(Tape<S>* tape, const Tensor<S>& x, std::vector<std::size_t> shape) {
    Tensor<S> out = Tensor<S>::from(std::move(shape), x.values());
    if (out.numel() != x.numel()) throw ValidationError("reshape: element count changed");

    if (tape && x.requires_grad()) {
        out.set_requires_grad(true);
        tape->record("reshape", out, [x = x, out]() mutable {
            auto& gx = x.grad();
            const auto& gy = out.grad();
            for (std::size_t i = 0; i < gx.size(); ++i) gx[i] += gy[i];
        });
    }
    return out;
}

template <typename S>
Tensor<S> add(Tape<S>* tape, const Tensor<S>& a, const Tensor<S>& b) {
    if (a.shape() != b.shape()) throw ValidationError("add: shape mismatch");
    Tensor<S> out = Tensor<S>::zeros(a.shape());
    for (std::size_t i = 0; i < a.numel(); ++i) out.values()[i] = a.values()[i] + b.values()[i];
    check_finite(out.values(), "add");

    if (tape && (a.requires_grad() || b.requires_grad())) {
        out.set_requires_grad(true);
        tape->record("add", out, [a = a, b = b, out]() mutable {
            const auto& gy = out.grad();
            if (a.requires_grad()) {
                auto& ga = a.grad();
                for (std::size_t i = 0; i < gy.size(); ++i) ga[i] += gy[i];
            }
            if (b.requires_grad()) {
                auto& gb = b.grad();
                for (std::size_t i = 0; i < gy.size(); ++i) gb[i] += gy[i];
            }
        });
    }
    return out;
}

template <typename S>
Tensor<S> sub(Tape<S>* tape, const Tensor<S>& a, const Tensor<S>& b) {
    if (a.shape() != b.shape()) throw ValidationError("sub: shape mismatch");
    Tensor<S> out = Tensor<S>::zeros(a.shape());
    for (std::size_t i = 0; i < a.numel(); ++i) out.values()[i] = a.values()[i] - b.values()[i];
    check_finite(out.values(), "sub");

    if (tape && (a.requires_grad() || b.requires_grad())) {
        out.set_requires_grad(true);
        tape->record("sub", out, [a = a, b = b, out]() mutable {
            const auto& gy = out.grad();
            if (a.requires_grad()) {
                auto& ga = a.grad();
                for (std::size_t i = 0; i < gy.size(); ++i) ga[i] += gy[i];
            }
            if (b.requires_grad()) {
                auto& gb = b.grad();
                for (std::size_t i = 0; i < gy.size(); ++i) gb[i] -= gy[i];
            }
        });
    }
    return out;
}

template <typename S>
Tensor<S> scale(Tape<S>* tape, const Tensor<S>& x, S c) {
    Tensor<S> out = Tensor<S>::zeros(x.shape());
    for (std::size_t i = 0; i < x.numel(); ++i) out.values()[i] = c * x.values()[i];
    check_finite(out.values(), "scale");

    if (tape && x.requires_grad()) {
        out.set_requires_grad(true);
        tape->record("scale", out, [x = x, out, c]() mutable {
            if (c == S(0)) return; // a zero-weighted branch contributes nothing
            auto& gx = x.grad();
            const auto& gy = out.grad();
            for (std::size_t i = 0; i < gx.size(); ++i) gx[i] += c * gy[i];
        });
    }
    return out;
}

} // namespace cloudclass::ad
