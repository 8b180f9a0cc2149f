/*
 * C ABI for an external selective-scan kernel.
 *
 * A kernel library exports the three symbols below. All arrays are
 * contiguous little-endian float32, token-major:
 *
 *   u, delta, y      length * channels     element [k * channels + d]
 *   b, c             length * state_dim    element [k * state_dim + n]
 *   a                channels * state_dim  element [d * state_dim + n]  (A, entries <= 0)
 *   d                channels
 *
 * Every *_len field carries the element count of its array and must agree
 * with length/channels/state_dim. Output arrays must not alias inputs.
 *
 * Recurrence (per channel d, state n):
 *   h[k] = exp(delta[k,d] * a[d,n]) * h[k-1] + delta[k,d] * b[k,n] * u[k,d],  h[-1] = 0
 *   y[k,d] = sum_n c[k,n] * h[k,d,n] + d[d] * u[k,d]
 *
 * On failure a kernel writes a non-zero code to *error and leaves outputs
 * untouched.
 */
#ifndef TMTB_SCAN_ABI_H
#define TMTB_SCAN_ABI_H

#include <stdint.h>

#ifdef __cplusplus
extern "C" {
#endif

#define TMTB_SCAN_ABI_VERSION 1

enum tmtb_scan_error {
    TMTB_SCAN_OK = 0,
    TMTB_SCAN_NULL_POINTER = 1,
    TMTB_SCAN_LENGTH_MISMATCH = 2,
    TMTB_SCAN_NON_POSITIVE_DELTA = 3,
    TMTB_SCAN_INTERNAL = 4
};

typedef struct tmtb_scan_buffers {
    uint64_t length;
    uint64_t channels;
    uint64_t state_dim;
    const float* u;
    uint64_t u_len;
    const float* delta;
    uint64_t delta_len;
    const float* b;
    uint64_t b_len;
    const float* c;
    uint64_t c_len;
    const float* a;
    uint64_t a_len;
    const float* d;
    uint64_t d_len;
} tmtb_scan_buffers;

typedef struct tmtb_scan_gradients {
    const float* grad_y; /* upstream, length * channels */
    uint64_t grad_y_len;
    float* grad_u;
    uint64_t grad_u_len;
    float* grad_delta;
    uint64_t grad_delta_len;
    float* grad_b;
    uint64_t grad_b_len;
    float* grad_c;
    uint64_t grad_c_len;
    float* grad_a;
    uint64_t grad_a_len;
    float* grad_d;
    uint64_t grad_d_len;
} tmtb_scan_gradients;

typedef uint32_t (*tmtb_scan_abi_version_fn)(void);
typedef void (*tmtb_scan_forward_fn)(const tmtb_scan_buffers* in, float* y, uint64_t y_len, int32_t* error);
typedef void (*tmtb_scan_backward_fn)(const tmtb_scan_buffers* in, tmtb_scan_gradients* grads, int32_t* error);

/* Exported symbol names: */
/*   uint32_t tmtb_scan_abi_version(void);                                                    */
/*   void tmtb_scan_forward(const tmtb_scan_buffers*, float* y, uint64_t y_len, int32_t* error); */
/*   void tmtb_scan_backward(const tmtb_scan_buffers*, tmtb_scan_gradients*, int32_t* error);   */

#ifdef __cplusplus
}
#endif

#endif /* TMTB_SCAN_ABI_H */
