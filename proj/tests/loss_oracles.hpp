#pragma once

// Straightforward re-statements of the loss formulas, written for clarity
// rather than speed. The library implementations are checked against these.

#include "tmtb/types.hpp"

#include <algorithm>
#include <cmath>

namespace tmtb::testing {

/// Windowed SSIM evaluated pixel by pixel with an explicit 11x11 window
/// (zero outside the map), averaged over the map.
inline double ssim_direct(const Raster<double>& a, const Raster<double>& b) {
    double g1[11], gsum = 0.0;
    for (int i = 0; i < 11; ++i) {
        g1[i] = std::exp(-(i - 5.0) * (i - 5.0) / (2.0 * 1.5 * 1.5));
        gsum += g1[i];
    }
    const double R = std::max({1.0, a.maxCoeff(), b.maxCoeff()});
    const double C1 = (0.01 * R) * (0.01 * R), C2 = (0.03 * R) * (0.03 * R);
    double total = 0.0;
    for (Index y = 0; y < a.rows(); ++y)
        for (Index x = 0; x < a.cols(); ++x) {
            double ma = 0, mb = 0, saa = 0, sbb = 0, sab = 0;
            for (int dy = -5; dy <= 5; ++dy)
                for (int dx = -5; dx <= 5; ++dx) {
                    const Index yy = y + dy, xx = x + dx;
                    if (yy < 0 || yy >= a.rows() || xx < 0 || xx >= a.cols()) continue;
                    const double wgt = g1[dy + 5] * g1[dx + 5] / (gsum * gsum);
                    const double va = a(yy, xx), vb = b(yy, xx);
                    ma += wgt * va;
                    mb += wgt * vb;
                    saa += wgt * va * va;
                    sbb += wgt * vb * vb;
                    sab += wgt * va * vb;
                }
            const double va = saa - ma * ma, vb = sbb - mb * mb, cov = sab - ma * mb;
            total += ((2 * ma * mb + C1) * (2 * cov + C2)) / ((ma * ma + mb * mb + C1) * (va + vb + C2));
        }
    return total / static_cast<double>(a.size());
}

inline Raster<double> pool2_direct(const Raster<double>& x) {
    Raster<double> out(x.rows() / 2, x.cols() / 2);
    for (Index y = 0; y < out.rows(); ++y)
        for (Index xx = 0; xx < out.cols(); ++xx) out(y, xx) = x.block(2 * y, 2 * xx, 2, 2).mean();
    return out;
}

inline double tv_direct(const Raster<double>& p, const Raster<double>& g) {
    const double sp = p.sum() + 1e-8, sg = g.sum() + 1e-8;
    return 0.5 * (p / sp - g / sg).cwiseAbs().sum() * g.sum();
}

inline double loss_reg_direct(const Raster<double>& p, const Raster<double>& g, const Raster<double>& m, int J,
                              double alpha) {
    Raster<double> a = p.cwiseProduct(m), b = g.cwiseProduct(m);
    double acc = 0.0;
    for (int j = 1; j <= J; ++j) {
        a = pool2_direct(a);
        b = pool2_direct(b);
        acc += 1.0 - ssim_direct(a, b);
    }
    return acc / J + alpha * tv_direct(p, g);
}

}  // namespace tmtb::testing
