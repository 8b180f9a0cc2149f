// Stand-in for an external scan kernel: exercises the dynamic loader and the
// buffer layout without depending on the real native build.

#include "tmtb/scan.hpp"
#include "tmtb/scan_abi.h"

#include <cmath>
#include <vector>

#ifndef FAKE_ABI_VERSION
#define FAKE_ABI_VERSION TMTB_SCAN_ABI_VERSION
#endif

namespace {

int32_t validate(const tmtb_scan_buffers* in) {
    if (!in || !in->u || !in->delta || !in->b || !in->c || !in->a || !in->d) return TMTB_SCAN_NULL_POINTER;
    const uint64_t ld = in->length * in->channels, ln = in->length * in->state_dim;
    if (in->u_len != ld || in->delta_len != ld || in->b_len != ln || in->c_len != ln ||
        in->a_len != in->channels * in->state_dim || in->d_len != in->channels)
        return TMTB_SCAN_LENGTH_MISMATCH;
    for (uint64_t i = 0; i < ld; ++i)
        if (!(in->delta[i] > 0.0f)) return TMTB_SCAN_NON_POSITIVE_DELTA;
    return TMTB_SCAN_OK;
}

}  // namespace

extern "C" {

uint32_t tmtb_scan_abi_version(void) { return FAKE_ABI_VERSION; }

void tmtb_scan_forward(const tmtb_scan_buffers* in, float* y, uint64_t y_len, int32_t* error) {
    int32_t code = validate(in);
    if (code == TMTB_SCAN_OK && (!y)) code = TMTB_SCAN_NULL_POINTER;
    if (code == TMTB_SCAN_OK && y_len != in->length * in->channels) code = TMTB_SCAN_LENGTH_MISMATCH;
    if (code != TMTB_SCAN_OK) {
        *error = code;
        return;
    }
    const uint64_t E = in->channels, N = in->state_dim;
    std::vector<double> h(E * N, 0.0);
    for (uint64_t k = 0; k < in->length; ++k)
        for (uint64_t d = 0; d < E; ++d) {
            const double dt = in->delta[k * E + d], uk = in->u[k * E + d];
            double acc = double(in->d[d]) * uk;
            for (uint64_t n = 0; n < N; ++n) {
                double& hs = h[d * N + n];
                hs = std::exp(dt * in->a[d * N + n]) * hs + dt * in->b[k * N + n] * uk;
                acc += in->c[k * N + n] * hs;
            }
            y[k * E + d] = static_cast<float>(acc);
        }
    *error = TMTB_SCAN_OK;
}

void tmtb_scan_backward(const tmtb_scan_buffers* in, tmtb_scan_gradients* g, int32_t* error) {
    int32_t code = validate(in);
    if (code == TMTB_SCAN_OK && (!g || !g->grad_y)) code = TMTB_SCAN_NULL_POINTER;
    if (code != TMTB_SCAN_OK) {
        *error = code;
        return;
    }
    using tmtb::Index;
    using tmtb::Mat;
    const auto L = static_cast<Index>(in->length), E = static_cast<Index>(in->channels),
               N = static_cast<Index>(in->state_dim);
    tmtb::ScanParams<double> p;
    const Mat<double> u = Eigen::Map<const Mat<float>>(in->u, E, L).cast<double>();
    p.delta = Eigen::Map<const Mat<float>>(in->delta, E, L).cast<double>();
    p.B = Eigen::Map<const Mat<float>>(in->b, N, L).cast<double>();
    p.C = Eigen::Map<const Mat<float>>(in->c, N, L).cast<double>();
    p.A = Eigen::Map<const Mat<float>>(in->a, N, E).transpose().cast<double>();
    p.D = Eigen::Map<const Eigen::VectorXf>(in->d, E).cast<double>();
    const Mat<double> gy = Eigen::Map<const Mat<float>>(g->grad_y, E, L).cast<double>();
    const auto r = tmtb::selective_scan_reference_backward(u, p, gy);
    Eigen::Map<Mat<float>>(g->grad_u, E, L) = r.u.cast<float>();
    Eigen::Map<Mat<float>>(g->grad_delta, E, L) = r.delta.cast<float>();
    Eigen::Map<Mat<float>>(g->grad_b, N, L) = r.B.cast<float>();
    Eigen::Map<Mat<float>>(g->grad_c, N, L) = r.C.cast<float>();
    Eigen::Map<Mat<float>>(g->grad_a, N, E) = r.A.transpose().cast<float>();
    Eigen::Map<Eigen::VectorXf>(g->grad_d, E) = r.D.cast<float>();
    *error = TMTB_SCAN_OK;
}

}  // extern "C"
