#pragma once

#include "tmtb/types.hpp"

#include <array>
#include <cmath>
#include <filesystem>
#include <memory>
#include <string>
#include <vector>

namespace tmtb {

/// Parameters of one selective-scan path over a sequence of length L with E
/// channels and an N-dimensional diagonal state per channel.
///   delta: E x L positive steps     A: E x N, entries <= 0
///   B, C:  N x L input-dependent    D: E skip coefficients
template <typename Scalar>
struct ScanParams {
    Mat<Scalar> delta;
    Mat<Scalar> B;
    Mat<Scalar> C;
    Mat<Scalar> A;
    Vec<Scalar> D;

    Index channels() const { return A.rows(); }
    Index state_dim() const { return A.cols(); }
    Index length() const { return delta.cols(); }
};

template <typename Scalar>
struct ScanGradients {
    Mat<Scalar> u;
    Mat<Scalar> delta;
    Mat<Scalar> B;
    Mat<Scalar> C;
    Mat<Scalar> A;
    Vec<Scalar> D;
};

template <typename Scalar>
void check_scan_shapes(const Mat<Scalar>& u, const ScanParams<Scalar>& p) {
    const Index e = p.A.rows(), n = p.A.cols(), l = u.cols();
    require_shape(l >= 1, "selective scan needs a sequence of length >= 1");
    require_shape(u.rows() == e && p.delta.rows() == e && p.delta.cols() == l && p.B.rows() == n &&
                      p.B.cols() == l && p.C.rows() == n && p.C.cols() == l && p.D.size() == e,
                  "selective scan: inconsistent shapes");
    require((p.delta.array() > Scalar(0)).all(), "selective scan: delta must be strictly positive");
}

/// Sequential zero-order-hold scan: Abar = exp(delta*A), Bbar = delta*B,
/// h_k = Abar_k h_{k-1} + Bbar_k u_k (h_{-1} = 0), y_k = C_k h_k + D u_k.
/// This is the ground truth every other scan implementation is checked against.
template <typename Scalar>
Mat<Scalar> selective_scan_reference(const Mat<Scalar>& u, const ScanParams<Scalar>& p) {
    check_scan_shapes(u, p);
    const Index e = p.channels(), n = p.state_dim(), l = u.cols();
    Mat<Scalar> h = Mat<Scalar>::Zero(n, e);
    Mat<Scalar> y(e, l);
    for (Index k = 0; k < l; ++k) {
        for (Index d = 0; d < e; ++d) {
            const Scalar dt = p.delta(d, k), du = dt * u(d, k);
            Scalar acc = p.D(d) * u(d, k);
            for (Index s = 0; s < n; ++s) {
                Scalar& hs = h(s, d);
                hs = std::exp(dt * p.A(d, s)) * hs + du * p.B(s, k);
                acc += p.C(s, k) * hs;
            }
            y(d, k) = acc;
        }
    }
    return y;
}

/// Adjoint of selective_scan_reference. The state trajectory is recomputed.
template <typename Scalar>
ScanGradients<Scalar> selective_scan_reference_backward(const Mat<Scalar>& u, const ScanParams<Scalar>& p,
                                                        const Mat<Scalar>& grad_y) {
    check_scan_shapes(u, p);
    const Index e = p.channels(), n = p.state_dim(), l = u.cols();
    require_shape(grad_y.rows() == e && grad_y.cols() == l, "selective scan backward: grad shape mismatch");

    // states[k] holds h_k as an n x e block.
    Mat<Scalar> states(n, e * l);
    {
        Mat<Scalar> h = Mat<Scalar>::Zero(n, e);
        for (Index k = 0; k < l; ++k) {
            for (Index d = 0; d < e; ++d) {
                const Scalar dt = p.delta(d, k), du = dt * u(d, k);
                for (Index s = 0; s < n; ++s) h(s, d) = std::exp(dt * p.A(d, s)) * h(s, d) + du * p.B(s, k);
            }
            states.middleCols(k * e, e) = h;
        }
    }

    ScanGradients<Scalar> g;
    g.u = Mat<Scalar>::Zero(e, l);
    g.delta = Mat<Scalar>::Zero(e, l);
    g.B = Mat<Scalar>::Zero(n, l);
    g.C = Mat<Scalar>::Zero(n, l);
    g.A = Mat<Scalar>::Zero(e, n);
    g.D = Vec<Scalar>::Zero(e);

    Mat<Scalar> gh = Mat<Scalar>::Zero(n, e);
    for (Index k = l - 1; k >= 0; --k) {
        for (Index d = 0; d < e; ++d) {
            const Scalar gy = grad_y(d, k), uk = u(d, k), dt = p.delta(d, k);
            g.D(d) += gy * uk;
            Scalar gu = gy * p.D(d);
            Scalar gdt = 0;
            for (Index s = 0; s < n; ++s) {
                const Scalar hk = states(s, k * e + d);
                const Scalar hprev = k > 0 ? states(s, (k - 1) * e + d) : Scalar(0);
                Scalar& ghs = gh(s, d);
                ghs += gy * p.C(s, k);
                g.C(s, k) += gy * hk;
                const Scalar a = std::exp(dt * p.A(d, s));
                const Scalar ga = ghs * hprev * a;
                gdt += ga * p.A(d, s) + ghs * p.B(s, k) * uk;
                g.A(d, s) += ga * dt;
                g.B(s, k) += ghs * dt * uk;
                gu += ghs * dt * p.B(s, k);
                ghs *= a;
            }
            g.u(d, k) = gu;
            g.delta(d, k) = gdt;
        }
    }
    return g;
}

// ---------------------------------------------------------------------------
// External kernel loading.

class NativeScanLibrary;

/// Chooses between the reference scan and a dynamically loaded kernel that
/// implements scan_abi.h. Loading never fails hard: a missing or incompatible
/// library leaves the engine on the reference path.
class ScanEngine {
public:
    ScanEngine() = default;

    static ScanEngine reference() { return {}; }
    /// Tries `path`, then $TMTB_SCAN_LIBRARY. Falls back to the reference scan.
    static ScanEngine load_native(const std::filesystem::path& path = {});

    bool is_native() const { return static_cast<bool>(native_); }
    const std::string& fallback_reason() const { return reason_; }
    std::string name() const { return is_native() ? "native" : "reference"; }

    Mat<float> forward(const Mat<float>& u, const ScanParams<float>& p) const;
    ScanGradients<float> backward(const Mat<float>& u, const ScanParams<float>& p, const Mat<float>& grad_y) const;

private:
    std::shared_ptr<const NativeScanLibrary> native_;
    std::string reason_;
};

template <typename Scalar>
Mat<Scalar> selective_scan(const Mat<Scalar>& u, const ScanParams<Scalar>& p, const ScanEngine& engine) {
    if constexpr (std::is_same_v<Scalar, float>) {
        if (engine.is_native()) return engine.forward(u, p);
    }
    return selective_scan_reference(u, p);
}

template <typename Scalar>
ScanGradients<Scalar> selective_scan_backward(const Mat<Scalar>& u, const ScanParams<Scalar>& p,
                                              const Mat<Scalar>& grad_y, const ScanEngine& engine) {
    if constexpr (std::is_same_v<Scalar, float>) {
        if (engine.is_native()) return engine.backward(u, p, grad_y);
    }
    return selective_scan_reference_backward(u, p, grad_y);
}

// ---------------------------------------------------------------------------
// Cross-scan / cross-merge over an h x w grid.

inline constexpr int kScanPaths = 4;

/// Token visited at step k of each traversal path: 0 row-major, 1 column-major,
/// 2 and 3 their reversals.
inline std::vector<Index> scan_order(Index h, Index w, int path) {
    const Index n = h * w;
    std::vector<Index> order(static_cast<std::size_t>(n));
    for (Index k = 0; k < n; ++k) {
        const Index kk = path >= 2 ? n - 1 - k : k;
        order[static_cast<std::size_t>(k)] = (path % 2 == 0) ? kk : (kk % h) * w + kk / h;
    }
    return order;
}

template <typename Scalar>
std::array<Mat<Scalar>, kScanPaths> cross_scan(const Mat<Scalar>& x, Index h, Index w) {
    require_shape(x.cols() == h * w, "cross scan: column count does not match grid");
    std::array<Mat<Scalar>, kScanPaths> seqs;
    for (int p = 0; p < kScanPaths; ++p) {
        const auto order = scan_order(h, w, p);
        seqs[p].resize(x.rows(), x.cols());
        for (Index k = 0; k < x.cols(); ++k) seqs[p].col(k) = x.col(order[static_cast<std::size_t>(k)]);
    }
    return seqs;
}

template <typename Scalar>
std::array<Mat<Scalar>, kScanPaths> cross_scan(const FeatureMap<Scalar>& fm) {
    return cross_scan(fm.values, fm.height, fm.width);
}

template <typename Scalar>
Mat<Scalar> cross_merge(const std::array<Mat<Scalar>, kScanPaths>& seqs, Index h, Index w) {
    const Index rows = seqs[0].rows();
    Mat<Scalar> out = Mat<Scalar>::Zero(rows, h * w);
    for (int p = 0; p < kScanPaths; ++p) {
        require_shape(seqs[p].cols() == h * w && seqs[p].rows() == rows,
                      "cross merge: sequence " + std::to_string(p) + " has the wrong length");
        const auto order = scan_order(h, w, p);
        for (Index k = 0; k < h * w; ++k) out.col(order[static_cast<std::size_t>(k)]) += seqs[p].col(k);
    }
    return out;
}

}  // namespace tmtb
