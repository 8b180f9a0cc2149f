#include "tmtb/scan.hpp"
#include "tmtb/scan_abi.h"

#include <dlfcn.h>

#include <cstdlib>

namespace tmtb {

class NativeScanLibrary {
public:
    static std::shared_ptr<const NativeScanLibrary> open(const std::filesystem::path& path, std::string& reason) {
        void* handle = ::dlopen(path.c_str(), RTLD_NOW | RTLD_LOCAL);
        if (!handle) {
            const char* msg = ::dlerror();
            reason = "cannot load " + path.string() + ": " + (msg ? msg : "unknown error");
            return nullptr;
        }
        auto lib = std::shared_ptr<NativeScanLibrary>(new NativeScanLibrary(handle));
        auto version = reinterpret_cast<tmtb_scan_abi_version_fn>(::dlsym(handle, "tmtb_scan_abi_version"));
        lib->forward_ = reinterpret_cast<tmtb_scan_forward_fn>(::dlsym(handle, "tmtb_scan_forward"));
        lib->backward_ = reinterpret_cast<tmtb_scan_backward_fn>(::dlsym(handle, "tmtb_scan_backward"));
        if (!version || !lib->forward_ || !lib->backward_) {
            reason = path.string() + " does not export the tmtb_scan_* symbols";
            return nullptr;
        }
        if (version() != TMTB_SCAN_ABI_VERSION) {
            reason = path.string() + " implements ABI version " + std::to_string(version()) + ", expected " +
                     std::to_string(TMTB_SCAN_ABI_VERSION);
            return nullptr;
        }
        return lib;
    }

    ~NativeScanLibrary() {
        if (handle_) ::dlclose(handle_);
    }
    NativeScanLibrary(const NativeScanLibrary&) = delete;
    NativeScanLibrary& operator=(const NativeScanLibrary&) = delete;

    tmtb_scan_forward_fn forward_ = nullptr;
    tmtb_scan_backward_fn backward_ = nullptr;

private:
    explicit NativeScanLibrary(void* handle) : handle_(handle) {}
    void* handle_ = nullptr;
};

namespace {

// Token-major copies of the column-major Eigen operands. Mat<float> with
// channels as rows is already token-major in memory; A is stored E x N
// column-major and must be transposed to the [d * N + n] layout.
struct PackedInputs {
    Mat<float> a_rowmajor;
    tmtb_scan_buffers buf{};

    PackedInputs(const Mat<float>& u, const ScanParams<float>& p) : a_rowmajor(p.A.transpose()) {
        buf.length = static_cast<uint64_t>(u.cols());
        buf.channels = static_cast<uint64_t>(p.channels());
        buf.state_dim = static_cast<uint64_t>(p.state_dim());
        buf.u = u.data();
        buf.u_len = static_cast<uint64_t>(u.size());
        buf.delta = p.delta.data();
        buf.delta_len = static_cast<uint64_t>(p.delta.size());
        buf.b = p.B.data();
        buf.b_len = static_cast<uint64_t>(p.B.size());
        buf.c = p.C.data();
        buf.c_len = static_cast<uint64_t>(p.C.size());
        buf.a = a_rowmajor.data();
        buf.a_len = static_cast<uint64_t>(a_rowmajor.size());
        buf.d = p.D.data();
        buf.d_len = static_cast<uint64_t>(p.D.size());
    }
};

void check_code(int32_t code, const char* what) {
    if (code != TMTB_SCAN_OK)
        throw Error(std::string("native scan ") + what + " failed with error code " + std::to_string(code));
}

}  // namespace

ScanEngine ScanEngine::load_native(const std::filesystem::path& path) {
    ScanEngine engine;
    std::filesystem::path candidate = path;
    if (candidate.empty()) {
        if (const char* env = std::getenv("TMTB_SCAN_LIBRARY")) candidate = env;
    }
    if (candidate.empty()) {
        engine.reason_ = "no native scan library configured";
        return engine;
    }
    engine.native_ = NativeScanLibrary::open(candidate, engine.reason_);
    return engine;
}

Mat<float> ScanEngine::forward(const Mat<float>& u, const ScanParams<float>& p) const {
    require(is_native(), "native scan not loaded");
    check_scan_shapes(u, p);
    PackedInputs in(u, p);
    Mat<float> y(u.rows(), u.cols());
    int32_t code = TMTB_SCAN_INTERNAL;
    native_->forward_(&in.buf, y.data(), static_cast<uint64_t>(y.size()), &code);
    check_code(code, "forward");
    return y;
}

ScanGradients<float> ScanEngine::backward(const Mat<float>& u, const ScanParams<float>& p,
                                          const Mat<float>& grad_y) const {
    require(is_native(), "native scan not loaded");
    check_scan_shapes(u, p);
    require_shape(grad_y.rows() == u.rows() && grad_y.cols() == u.cols(), "native scan: grad shape mismatch");
    PackedInputs in(u, p);
    ScanGradients<float> g;
    g.u.resize(u.rows(), u.cols());
    g.delta.resize(u.rows(), u.cols());
    g.B.resize(p.B.rows(), p.B.cols());
    g.C.resize(p.C.rows(), p.C.cols());
    Mat<float> ga_rowmajor(p.A.cols(), p.A.rows());
    g.D.resize(p.D.size());

    tmtb_scan_gradients out{};
    out.grad_y = grad_y.data();
    out.grad_y_len = static_cast<uint64_t>(grad_y.size());
    out.grad_u = g.u.data();
    out.grad_u_len = static_cast<uint64_t>(g.u.size());
    out.grad_delta = g.delta.data();
    out.grad_delta_len = static_cast<uint64_t>(g.delta.size());
    out.grad_b = g.B.data();
    out.grad_b_len = static_cast<uint64_t>(g.B.size());
    out.grad_c = g.C.data();
    out.grad_c_len = static_cast<uint64_t>(g.C.size());
    out.grad_a = ga_rowmajor.data();
    out.grad_a_len = static_cast<uint64_t>(ga_rowmajor.size());
    out.grad_d = g.D.data();
    out.grad_d_len = static_cast<uint64_t>(g.D.size());

    int32_t code = TMTB_SCAN_INTERNAL;
    native_->backward_(&in.buf, &out, &code);
    check_code(code, "backward");
    g.A = ga_rowmajor.transpose();
    return g;
}

}  // namespace tmtb
