#pragma once

#include "tmtb/types.hpp"

#include <algorithm>
#include <array>
#include <cmath>
#include <string>
#include <vector>

namespace tmtb {

struct LossWeights {
    double alpha = 0.01;  // TV weight inside the regression loss
    int scales = 3;       // J, number of SSIM pyramid levels
    double tau = 1e-3;    // foreground threshold on ground-truth density
    int warmup_epochs = 20;
    double reg = 1.0;
    double cls = 1.0;
    double unsup = 1.0;
    double inpaint = 1.0;
};

/// Loss value plus its gradient with respect to the (student) prediction.
template <typename Scalar>
struct RasterLoss {
    Scalar value = 0;
    Raster<Scalar> grad;
};

// ---------------------------------------------------------------------------
// SSIM with an 11x11 Gaussian window (sigma 1.5), zero-padded "same" filtering.

inline constexpr int kSsimWindow = 11;
inline constexpr double kSsimSigma = 1.5;

inline std::array<double, kSsimWindow> ssim_kernel_1d() {
    std::array<double, kSsimWindow> g{};
    double sum = 0.0;
    for (int i = 0; i < kSsimWindow; ++i) {
        const double d = i - kSsimWindow / 2;
        g[static_cast<std::size_t>(i)] = std::exp(-d * d / (2.0 * kSsimSigma * kSsimSigma));
        sum += g[static_cast<std::size_t>(i)];
    }
    for (auto& v : g) v /= sum;
    return g;
}

/// Separable Gaussian filter. The kernel is symmetric and the padding is zero,
/// so the operator is self-adjoint and also serves as its own backward pass.
template <typename Scalar>
Raster<Scalar> gaussian_blur(const Raster<Scalar>& x) {
    static const auto g = ssim_kernel_1d();
    const Index h = x.rows(), w = x.cols(), r = kSsimWindow / 2;
    Raster<Scalar> tmp = Raster<Scalar>::Zero(h, w), out = Raster<Scalar>::Zero(h, w);
    for (Index y = 0; y < h; ++y)
        for (Index xx = 0; xx < w; ++xx) {
            Scalar acc = 0;
            for (Index k = -r; k <= r; ++k) {
                const Index sx = xx + k;
                if (sx >= 0 && sx < w) acc += Scalar(g[static_cast<std::size_t>(k + r)]) * x(y, sx);
            }
            tmp(y, xx) = acc;
        }
    for (Index y = 0; y < h; ++y)
        for (Index xx = 0; xx < w; ++xx) {
            Scalar acc = 0;
            for (Index k = -r; k <= r; ++k) {
                const Index sy = y + k;
                if (sy >= 0 && sy < h) acc += Scalar(g[static_cast<std::size_t>(k + r)]) * tmp(sy, xx);
            }
            out(y, xx) = acc;
        }
    return out;
}

/// Mean local SSIM. Stabilisers use dynamic range R = max(1, max(a), max(b)).
/// The gradient is with respect to `a`; R is treated as a constant.
template <typename Scalar>
RasterLoss<Scalar> ssim_with_grad(const Raster<Scalar>& a, const Raster<Scalar>& b, bool want_grad = true) {
    require_shape(a.rows() == b.rows() && a.cols() == b.cols(), "ssim: shape mismatch");
    require_shape(a.size() > 0, "ssim: empty map");
    const Scalar range = std::max({Scalar(1), a.maxCoeff(), b.maxCoeff()});
    const Scalar c1 = (Scalar(0.01) * range) * (Scalar(0.01) * range);
    const Scalar c2 = (Scalar(0.03) * range) * (Scalar(0.03) * range);

    const Raster<Scalar> mu1 = gaussian_blur(a), mu2 = gaussian_blur(b);
    const Raster<Scalar> e11 = gaussian_blur<Scalar>(a.cwiseProduct(a));
    const Raster<Scalar> e22 = gaussian_blur<Scalar>(b.cwiseProduct(b));
    const Raster<Scalar> e12 = gaussian_blur<Scalar>(a.cwiseProduct(b));

    const Index n = a.size();
    Raster<Scalar> dmu1(a.rows(), a.cols()), de11(a.rows(), a.cols()), de12(a.rows(), a.cols());
    Scalar total = 0;
    for (Index i = 0; i < n; ++i) {
        const Scalar m1 = mu1.data()[i], m2 = mu2.data()[i];
        const Scalar A1 = Scalar(2) * m1 * m2 + c1;
        const Scalar A2 = Scalar(2) * (e12.data()[i] - m1 * m2) + c2;
        const Scalar B1 = m1 * m1 + m2 * m2 + c1;
        const Scalar B2 = (e11.data()[i] - m1 * m1) + (e22.data()[i] - m2 * m2) + c2;
        const Scalar den = B1 * B2;
        const Scalar s = A1 * A2 / den;
        total += s;
        if (want_grad) {
            dmu1.data()[i] = ((Scalar(2) * m2) * A2 + A1 * (Scalar(-2) * m2)) / den -
                             s * ((Scalar(2) * m1) * B2 + B1 * (Scalar(-2) * m1)) / den;
            de12.data()[i] = A1 * Scalar(2) / den;
            de11.data()[i] = -s / B2;
        }
    }
    RasterLoss<Scalar> out;
    out.value = total / Scalar(n);
    if (want_grad) {
        const Scalar inv_n = Scalar(1) / Scalar(n);
        out.grad = (gaussian_blur(dmu1) + Scalar(2) * a.cwiseProduct(gaussian_blur(de11)) +
                    b.cwiseProduct(gaussian_blur(de12))) *
                   inv_n;
    }
    return out;
}

template <typename Scalar>
Scalar ssim(const DensityMap<Scalar>& a, const DensityMap<Scalar>& b) {
    return ssim_with_grad(a.values, b.values, false).value;
}

// ---------------------------------------------------------------------------

/// 2x2 average pooling, trailing odd row/column dropped.
template <typename Scalar>
Raster<Scalar> avg_pool2(const Raster<Scalar>& x) {
    const Index h = x.rows() / 2, w = x.cols() / 2;
    Raster<Scalar> out(h, w);
    for (Index y = 0; y < h; ++y)
        for (Index xx = 0; xx < w; ++xx)
            out(y, xx) = Scalar(0.25) * (x(2 * y, 2 * xx) + x(2 * y, 2 * xx + 1) + x(2 * y + 1, 2 * xx) +
                                         x(2 * y + 1, 2 * xx + 1));
    return out;
}

template <typename Scalar>
Raster<Scalar> avg_pool2_backward(const Raster<Scalar>& dy, Index in_rows, Index in_cols) {
    Raster<Scalar> dx = Raster<Scalar>::Zero(in_rows, in_cols);
    for (Index y = 0; y < dy.rows(); ++y)
        for (Index xx = 0; xx < dy.cols(); ++xx) {
            const Scalar g = Scalar(0.25) * dy(y, xx);
            dx(2 * y, 2 * xx) += g;
            dx(2 * y, 2 * xx + 1) += g;
            dx(2 * y + 1, 2 * xx) += g;
            dx(2 * y + 1, 2 * xx + 1) += g;
        }
    return dx;
}

/// Count-scaled total-variation distance between the normalised maps:
/// 0.5 * || pred / (sum pred + eps) - gt / (sum gt + eps) ||_1 * sum gt.
template <typename Scalar>
RasterLoss<Scalar> loss_tv(const Raster<Scalar>& pred, const Raster<Scalar>& gt) {
    require_shape(pred.rows() == gt.rows() && pred.cols() == gt.cols(), "tv loss: shape mismatch");
    constexpr Scalar eps = Scalar(1e-8);
    const Scalar mass = gt.sum();
    const Scalar sp = pred.sum() + eps, sg = mass + eps;
    RasterLoss<Scalar> out;
    out.grad.resize(pred.rows(), pred.cols());
    Scalar l1 = 0, weighted = 0;
    for (Index i = 0; i < pred.size(); ++i) {
        const Scalar r = pred.data()[i] / sp - gt.data()[i] / sg;
        const Scalar sgn = Scalar((r > 0) - (r < 0));
        l1 += std::abs(r);
        out.grad.data()[i] = sgn;
        weighted += sgn * pred.data()[i];
    }
    const Scalar scale = Scalar(0.5) * mass;
    out.value = scale * l1;
    out.grad = (out.grad.array() / sp - weighted / (sp * sp)).matrix() * scale;
    return out;
}

/// Multi-scale masked SSIM loss plus alpha * TV:
/// (1/J) sum_j [1 - SSIM(D_j(pred*M), D_j(gt*M))] + alpha * TV(pred, gt).
template <typename Scalar>
RasterLoss<Scalar> loss_reg(const Raster<Scalar>& pred, const Raster<Scalar>& gt, const ForegroundMask<Scalar>& mask,
                            const LossWeights& w) {
    require_shape(pred.rows() == gt.rows() && pred.cols() == gt.cols() && mask.rows() == gt.rows() &&
                      mask.cols() == gt.cols(),
                  "regression loss: shape mismatch");
    require(w.scales >= 1, "regression loss needs at least one scale");
    const Index min_side = Index(1) << w.scales;
    require_shape(pred.rows() >= min_side && pred.cols() >= min_side,
                  "regression loss: map smaller than 2^J = " + std::to_string(min_side));

    const Scalar inv_j = Scalar(1) / Scalar(w.scales);
    std::vector<Raster<Scalar>> p_levels{pred.cwiseProduct(mask)};
    Raster<Scalar> g_level = gt.cwiseProduct(mask);
    RasterLoss<Scalar> out;
    std::vector<Raster<Scalar>> level_grads;
    for (int j = 1; j <= w.scales; ++j) {
        p_levels.push_back(avg_pool2(p_levels.back()));
        g_level = avg_pool2(g_level);
        auto s = ssim_with_grad(p_levels.back(), g_level);
        out.value += inv_j * (Scalar(1) - s.value);
        level_grads.push_back(-inv_j * s.grad);
    }
    // Back through the pooling chain: level j's gradient enters at depth j.
    Raster<Scalar> acc = level_grads.back();
    for (int j = w.scales; j >= 1; --j) {
        const auto& below = p_levels[static_cast<std::size_t>(j - 1)];
        acc = avg_pool2_backward(acc, below.rows(), below.cols());
        if (j - 1 >= 1) acc += level_grads[static_cast<std::size_t>(j - 2)];
    }
    out.grad = acc.cwiseProduct(mask);
    if (w.alpha != 0.0) {
        const auto tv = loss_tv(pred, gt);
        out.value += Scalar(w.alpha) * tv.value;
        out.grad += Scalar(w.alpha) * tv.grad;
    }
    return out;
}

/// Mean per-cell cross-entropy against one-hot targets; log clamped at 1e-12.
/// Gradient is with respect to the probabilities.
template <typename Scalar>
struct ProbLoss {
    Scalar value = 0;
    Mat<Scalar> grad;
};

inline constexpr double kLogClamp = 1e-12;

template <typename Scalar>
ProbLoss<Scalar> loss_cls(const IndexRaster& target, const BinProbMap<Scalar>& probs) {
    require_shape(target.rows() == probs.height && target.cols() == probs.width, "classification loss: shape mismatch");
    const Index n = probs.cells();
    ProbLoss<Scalar> out;
    out.grad = Mat<Scalar>::Zero(probs.channels(), n);
    const Scalar inv_n = Scalar(1) / Scalar(n);
    for (Index p = 0; p < n; ++p) {
        const int k = target.data()[p];
        require(k >= 0 && k < probs.channels(), "classification loss: target bin out of range");
        const Scalar q = probs.values(k, p);
        if (q > Scalar(kLogClamp)) {
            out.value -= std::log(q);
            out.grad(k, p) = -inv_n / q;
        } else {
            out.value -= std::log(Scalar(kLogClamp));
        }
    }
    out.value *= inv_n;
    return out;
}

// ---------------------------------------------------------------------------
// Student/teacher consistency. Teacher inputs are constants: no gradient is
// produced for them.

template <typename Scalar>
struct ConsistencyLoss {
    Scalar value = 0;
    Scalar density_term = 0;
    Scalar prob_term = 0;
    Raster<Scalar> grad_density;  // d/d y_student
    Mat<Scalar> grad_probs;       // d/d p_student
};

namespace detail {

template <typename Scalar>
ConsistencyLoss<Scalar> weighted_consistency(const Raster<Scalar>& y_st, const Raster<Scalar>& y_ema,
                                             const BinProbMap<Scalar>& p_st, const BinProbMap<Scalar>& p_ema,
                                             const WeightedMask<Scalar>* mask) {
    require_shape(y_st.rows() == y_ema.rows() && y_st.cols() == y_ema.cols(), "consistency: density shape mismatch");
    require_shape(p_st.values.rows() == p_ema.values.rows() && p_st.values.cols() == p_ema.values.cols(),
                  "consistency: probability shape mismatch");
    require_shape(p_st.cells() == y_st.size(), "consistency: density and probability grids differ");
    if (mask) require_shape(mask->rows() == y_st.rows() && mask->cols() == y_st.cols(), "consistency: mask shape mismatch");

    const Index n = y_st.size(), k = p_st.channels();
    const Scalar inv_y = Scalar(1) / Scalar(n), inv_p = Scalar(1) / Scalar(n * k);
    ConsistencyLoss<Scalar> out;
    out.grad_density.resize(y_st.rows(), y_st.cols());
    out.grad_probs.resize(k, n);
    Scalar sy = 0, sp = 0;
    for (Index i = 0; i < n; ++i) {
        const Scalar m = mask ? mask->data()[i] : Scalar(1);
        const Scalar d = y_st.data()[i] - y_ema.data()[i];
        sy += m * std::abs(d);
        out.grad_density.data()[i] = m * Scalar((d > 0) - (d < 0)) * inv_y;
        for (Index c = 0; c < k; ++c) {
            const Scalar dp = p_st.values(c, i) - p_ema.values(c, i);
            sp += m * std::abs(dp);
            out.grad_probs(c, i) = m * Scalar((dp > 0) - (dp < 0)) * inv_p;
        }
    }
    out.density_term = sy * inv_y;
    out.prob_term = sp * inv_p;
    out.value = out.density_term + out.prob_term;
    return out;
}

}  // namespace detail

/// MAE(y_st, y_ema) + MAE(p_st, p_ema).
template <typename Scalar>
ConsistencyLoss<Scalar> loss_consistency(const Raster<Scalar>& y_st, const Raster<Scalar>& y_ema,
                                         const BinProbMap<Scalar>& p_st, const BinProbMap<Scalar>& p_ema) {
    return detail::weighted_consistency(y_st, y_ema, p_st, p_ema, static_cast<const WeightedMask<Scalar>*>(nullptr));
}

/// Consistency weighted per cell by the inconsistency mask (broadcast over bins).
template <typename Scalar>
ConsistencyLoss<Scalar> loss_inpaint(const Raster<Scalar>& y_st, const Raster<Scalar>& y_ema,
                                     const BinProbMap<Scalar>& p_st, const BinProbMap<Scalar>& p_ema,
                                     const WeightedMask<Scalar>& mask) {
    return detail::weighted_consistency(y_st, y_ema, p_st, p_ema, &mask);
}

// ---------------------------------------------------------------------------
// Schedules and the total objective.

/// exp(-5 (1 - t/T_w)^2) for t < T_w, 1 afterwards (and always 1 when T_w = 0).
inline double warmup_weight(double epoch, int warmup_epochs) {
    require(epoch >= 0.0, "warm-up weight needs a non-negative epoch");
    if (warmup_epochs <= 0 || epoch >= warmup_epochs) return 1.0;
    const double r = 1.0 - epoch / static_cast<double>(warmup_epochs);
    return std::exp(-5.0 * r * r);
}

struct LossComponents {
    double reg = 0.0;      // supervised regression
    double cls = 0.0;      // supervised classification
    double unsup = 0.0;    // consistency on unlabeled images
    double inpaint = 0.0;  // weighted consistency on inpainted images
};

struct TotalLoss {
    double value = 0.0;
    double lambda = 0.0;
};

/// L = w_reg L_reg + w_cls L_cls + lambda_w (w_u L_u + w_inp L_inp).
inline TotalLoss total_loss(const LossComponents& c, double epoch, const LossWeights& w) {
    const std::pair<const char*, double> parts[] = {
        {"supervised regression", c.reg}, {"supervised classification", c.cls},
        {"unsupervised consistency", c.unsup}, {"inpainting consistency", c.inpaint}};
    for (const auto& [name, v] : parts)
        if (!std::isfinite(v)) throw Error(std::string("non-finite loss component: ") + name);
    TotalLoss t;
    t.lambda = warmup_weight(epoch, w.warmup_epochs);
    t.value = (w.reg * c.reg + w.cls * c.cls) + t.lambda * (w.unsup * c.unsup) + t.lambda * (w.inpaint * c.inpaint);
    return t;
}

}  // namespace tmtb
