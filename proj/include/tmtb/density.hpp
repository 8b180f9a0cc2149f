#pragma once

#include "tmtb/annotations.hpp"
#include "tmtb/types.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <vector>

namespace tmtb {

enum class KernelMode { adaptive, fixed };

struct DensityOptions {
    Index stride = 8;
    KernelMode mode = KernelMode::adaptive;
    double sigma_fixed = 4.0;
    double adaptive_beta = 0.3;
    int adaptive_neighbours = 3;
    double sigma_min = 1.0;
    double sigma_max = 32.0;
};

/// Per-point Gaussian widths. Adaptive mode uses beta times the mean distance
/// to the k nearest other points, clamped; with fewer than k + 1 points every
/// sigma falls back to the fixed value.
inline std::vector<double> kernel_sigmas(const PointAnnotations& ann, const DensityOptions& opt) {
    const std::size_t n = ann.points.size();
    std::vector<double> sigmas(n, opt.sigma_fixed);
    const auto k = static_cast<std::size_t>(opt.adaptive_neighbours);
    if (opt.mode == KernelMode::fixed || n < k + 1) return sigmas;

    std::vector<double> dist(n - 1);
    for (std::size_t i = 0; i < n; ++i) {
        std::size_t m = 0;
        for (std::size_t j = 0; j < n; ++j) {
            if (j == i) continue;
            const double dx = ann.points[i].x - ann.points[j].x;
            const double dy = ann.points[i].y - ann.points[j].y;
            dist[m++] = std::sqrt(dx * dx + dy * dy);
        }
        std::partial_sort(dist.begin(), dist.begin() + static_cast<std::ptrdiff_t>(k), dist.end());
        double mean = 0.0;
        for (std::size_t j = 0; j < k; ++j) mean += dist[j];
        mean /= static_cast<double>(k);
        sigmas[i] = std::clamp(opt.adaptive_beta * mean, opt.sigma_min, opt.sigma_max);
    }
    return sigmas;
}

/// Ground-truth density generated directly at `opt.stride`. Every point
/// contributes a Gaussian sampled at pixel centres within 3 sigma and
/// normalised over the in-image part of that window, so each point adds
/// exactly unit mass. Pixel weights are summed into their stride cell.
template <typename Scalar = double>
DensityMap<Scalar> generate_density_map(const PointAnnotations& ann, const DensityOptions& opt = {}) {
    require(opt.stride >= 1, "stride must be >= 1");
    require(opt.mode != KernelMode::fixed || opt.sigma_fixed > 0.0, "sigma_fixed must be positive");
    validate(ann);

    const Index h = ann.height, w = ann.width, s = opt.stride;
    DensityMap<Scalar> out((h + s - 1) / s, (w + s - 1) / s, s);
    Raster<double> acc = Raster<double>::Zero(out.height(), out.width());
    const auto sigmas = kernel_sigmas(ann, opt);

    std::vector<double> gx, gy;
    for (std::size_t i = 0; i < ann.points.size(); ++i) {
        const auto& p = ann.points[i];
        const double sigma = sigmas[i];
        const double radius = std::ceil(3.0 * sigma);
        const Index x0 = std::max<Index>(0, static_cast<Index>(std::floor(p.x - radius)));
        const Index x1 = std::min<Index>(w - 1, static_cast<Index>(std::floor(p.x + radius)));
        const Index y0 = std::max<Index>(0, static_cast<Index>(std::floor(p.y - radius)));
        const Index y1 = std::min<Index>(h - 1, static_cast<Index>(std::floor(p.y + radius)));
        const double inv = 1.0 / (2.0 * sigma * sigma);

        gx.assign(static_cast<std::size_t>(x1 - x0 + 1), 0.0);
        gy.assign(static_cast<std::size_t>(y1 - y0 + 1), 0.0);
        double sx = 0.0, sy = 0.0;
        for (Index x = x0; x <= x1; ++x) {
            const double d = static_cast<double>(x) + 0.5 - p.x;
            sx += gx[static_cast<std::size_t>(x - x0)] = std::exp(-d * d * inv);
        }
        for (Index y = y0; y <= y1; ++y) {
            const double d = static_cast<double>(y) + 0.5 - p.y;
            sy += gy[static_cast<std::size_t>(y - y0)] = std::exp(-d * d * inv);
        }
        const double norm = 1.0 / (sx * sy);
        for (Index y = y0; y <= y1; ++y) {
            const double wy = gy[static_cast<std::size_t>(y - y0)] * norm;
            for (Index x = x0; x <= x1; ++x) {
                acc(y / s, x / s) += wy * gx[static_cast<std::size_t>(x - x0)];
            }
        }
    }
    out.values = acc.cast<Scalar>();
    return out;
}

/// Non-overlapping sum pooling by `factor`; trailing partial cells are kept.
template <typename Scalar>
DensityMap<Scalar> sum_pool(const DensityMap<Scalar>& dm, Index factor) {
    require(factor >= 1, "pool factor must be >= 1");
    DensityMap<Scalar> out((dm.height() + factor - 1) / factor, (dm.width() + factor - 1) / factor,
                           dm.stride * factor);
    for (Index y = 0; y < dm.height(); ++y)
        for (Index x = 0; x < dm.width(); ++x) out.values(y / factor, x / factor) += dm.values(y, x);
    return out;
}

/// M = 1(density > tau), strict.
template <typename Scalar>
ForegroundMask<Scalar> gt_foreground_mask(const DensityMap<Scalar>& dm, Scalar tau) {
    require(tau >= Scalar(0), "tau must be non-negative");
    return (dm.values.array() > tau).template cast<Scalar>().matrix();
}

}  // namespace tmtb
