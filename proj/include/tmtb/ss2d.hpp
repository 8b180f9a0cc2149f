#pragma once

#include "tmtb/nn.hpp"
#include "tmtb/scan.hpp"

#include <array>

namespace tmtb {

/// Input-dependent S6 parameters for one traversal path. B, C and the
/// pre-softplus step are linear projections of the scanned sequence.
template <typename ScalarT>
struct ScanPath {
    using Scalar = ScalarT;
    nn::Linear<Scalar> dt_proj;
    nn::Linear<Scalar> b_proj;
    nn::Linear<Scalar> c_proj;
    Mat<Scalar> a_log;  // A = -exp(a_log), E x N
    Mat<Scalar> d;      // E x 1

    ScanPath() = default;
    ScanPath(Index channels, Index state_dim, std::mt19937_64& rng)
        : dt_proj(channels, channels, rng),
          b_proj(channels, state_dim, rng, false),
          c_proj(channels, state_dim, rng, false),
          a_log(channels, state_dim),
          d(Mat<Scalar>::Ones(channels, 1)) {
        dt_proj.weight *= Scalar(0.1);
        // Initial steps log-uniform in [1e-3, 1e-1], stored through the inverse softplus.
        std::uniform_real_distribution<double> u(std::log(1e-3), std::log(1e-1));
        for (Index i = 0; i < channels; ++i) {
            const double dt = std::exp(u(rng));
            dt_proj.bias(i, 0) = static_cast<Scalar>(dt + std::log(-std::expm1(-dt)));
        }
        for (Index i = 0; i < channels; ++i)
            for (Index s = 0; s < state_dim; ++s) a_log(i, s) = static_cast<Scalar>(std::log(double(s + 1)));
    }

    Mat<Scalar> A() const { return -a_log.array().exp().matrix(); }

    template <typename F>
    void visit(F&& f, const std::string& prefix = "") {
        dt_proj.visit(f, prefix + "dt_proj.");
        b_proj.visit(f, prefix + "b_proj.");
        c_proj.visit(f, prefix + "c_proj.");
        f(prefix + "a_log", a_log, true);
        f(prefix + "d", d, true);
    }
};

/// 2-D selective-scan block:
/// LN -> in_proj (x, z) -> SiLU(x) -> cross-scan -> per-path S6 -> cross-merge
/// -> LN -> gate by SiLU(z) -> out_proj -> residual.
template <typename ScalarT>
struct SS2DBlock {
    using Scalar = ScalarT;
    nn::LayerNorm<Scalar> norm;
    nn::Linear<Scalar> in_proj;
    std::array<ScanPath<Scalar>, kScanPaths> paths;
    nn::LayerNorm<Scalar> out_norm;
    nn::Linear<Scalar> out_proj;

    struct Cache {
        typename nn::LayerNorm<Scalar>::Cache norm;
        Mat<Scalar> xn, xa, z, u;
        std::array<Mat<Scalar>, kScanPaths> seq, dt_pre;
        std::array<ScanParams<Scalar>, kScanPaths> scan;
        typename nn::LayerNorm<Scalar>::Cache out_norm;
        Mat<Scalar> merged_norm, gate, gated;
        Index height = 0, width = 0;
    };

    SS2DBlock() = default;
    SS2DBlock(Index channels, Index inner, Index state_dim, std::mt19937_64& rng)
        : norm(channels),
          in_proj(channels, 2 * inner, rng),
          out_norm(inner),
          out_proj(inner, channels, rng) {
        for (auto& p : paths) p = ScanPath<Scalar>(inner, state_dim, rng);
    }

    Index inner() const { return out_proj.in_features(); }

    FeatureMap<Scalar> forward(const FeatureMap<Scalar>& x, Cache& c, const ScanEngine& engine) const {
        const Index e = inner();
        c.height = x.height;
        c.width = x.width;
        c.xn = norm.forward(x.values, c.norm);
        const Mat<Scalar> xz = in_proj.forward(c.xn);
        c.xa = xz.topRows(e);
        c.z = xz.bottomRows(e);
        c.u = nn::silu(c.xa);
        c.seq = cross_scan(c.u, x.height, x.width);
        std::array<Mat<Scalar>, kScanPaths> ys;
        for (int p = 0; p < kScanPaths; ++p) {
            const auto& path = paths[static_cast<std::size_t>(p)];
            auto& sp = c.scan[static_cast<std::size_t>(p)];
            c.dt_pre[p] = path.dt_proj.forward(c.seq[p]);
            sp.delta = nn::softplus(c.dt_pre[p]);
            sp.B = path.b_proj.forward(c.seq[p]);
            sp.C = path.c_proj.forward(c.seq[p]);
            sp.A = path.A();
            sp.D = path.d.col(0);
            ys[p] = selective_scan(c.seq[p], sp, engine);
        }
        const Mat<Scalar> merged = cross_merge(ys, x.height, x.width);
        c.merged_norm = out_norm.forward(merged, c.out_norm);
        c.gate = nn::silu(c.z);
        c.gated = c.merged_norm.cwiseProduct(c.gate);
        FeatureMap<Scalar> out = x;
        out.values += out_proj.forward(c.gated);
        return out;
    }

    Mat<Scalar> backward(const Cache& c, const Mat<Scalar>& dy, SS2DBlock& grad, const ScanEngine& engine) const {
        const Index e = inner();
        const Mat<Scalar> dgated = out_proj.backward(c.gated, dy, grad.out_proj);
        const Mat<Scalar> dmerged_norm = dgated.cwiseProduct(c.gate);
        const Mat<Scalar> dz = nn::silu_backward(c.z, Mat<Scalar>(dgated.cwiseProduct(c.merged_norm)));
        const Mat<Scalar> dmerged = out_norm.backward(c.out_norm, dmerged_norm, grad.out_norm);
        const auto dys = cross_scan(dmerged, c.height, c.width);

        std::array<Mat<Scalar>, kScanPaths> dseq;
        for (int p = 0; p < kScanPaths; ++p) {
            const auto idx = static_cast<std::size_t>(p);
            const auto& path = paths[idx];
            auto& gpath = grad.paths[idx];
            const auto& sp = c.scan[idx];
            const auto g = selective_scan_backward(c.seq[p], sp, dys[p], engine);
            const Mat<Scalar> ddt_pre = nn::softplus_backward(c.dt_pre[p], g.delta);
            dseq[p] = g.u;
            dseq[p] += path.dt_proj.backward(c.seq[p], ddt_pre, gpath.dt_proj);
            dseq[p] += path.b_proj.backward(c.seq[p], g.B, gpath.b_proj);
            dseq[p] += path.c_proj.backward(c.seq[p], g.C, gpath.c_proj);
            gpath.a_log += g.A.cwiseProduct(sp.A);
            gpath.d.col(0) += g.D;
        }
        const Mat<Scalar> du = cross_merge(dseq, c.height, c.width);
        Mat<Scalar> dxz(2 * e, du.cols());
        dxz.topRows(e) = nn::silu_backward(c.xa, du);
        dxz.bottomRows(e) = dz;
        const Mat<Scalar> dxn = in_proj.backward(c.xn, dxz, grad.in_proj);
        Mat<Scalar> dx = norm.backward(c.norm, dxn, grad.norm);
        dx += dy;
        return dx;
    }

    template <typename F>
    void visit(F&& f, const std::string& prefix = "") {
        norm.visit(f, prefix + "norm.");
        in_proj.visit(f, prefix + "in_proj.");
        for (int p = 0; p < kScanPaths; ++p)
            paths[static_cast<std::size_t>(p)].visit(f, prefix + "path" + std::to_string(p) + ".");
        out_norm.visit(f, prefix + "out_norm.");
        out_proj.visit(f, prefix + "out_proj.");
    }
};

}  // namespace tmtb
