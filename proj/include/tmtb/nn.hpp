#pragma once

#include "tmtb/types.hpp"

#include <cmath>
#include <functional>
#include <random>
#include <string>
#include <vector>

namespace tmtb::nn {

/// Visitor signature used by every module: (name, tensor, trainable).
/// Non-trainable entries are running statistics; they follow the EMA teacher
/// but never receive optimizer updates.
template <typename Scalar>
using ParamVisitor = std::function<void(const std::string&, Mat<Scalar>&, bool)>;

template <typename Scalar>
struct NamedParam {
    std::string name;
    Mat<Scalar>* value = nullptr;
    bool trainable = true;
};

template <typename Module>
auto parameter_list(Module& m) {
    using Scalar = typename Module::Scalar;
    std::vector<NamedParam<Scalar>> out;
    m.visit([&out](const std::string& name, Mat<Scalar>& v, bool trainable) {
        out.push_back({name, &v, trainable});
    });
    return out;
}

template <typename Module>
void zero_parameters(Module& m) {
    for (auto& p : parameter_list(m)) p.value->setZero();
}

template <typename Module>
Module zeros_like(const Module& m) {
    Module out = m;
    zero_parameters(out);
    return out;
}

template <typename Scalar>
Mat<Scalar> uniform_init(Index rows, Index cols, Scalar bound, std::mt19937_64& rng) {
    std::uniform_real_distribution<double> u(-static_cast<double>(bound), static_cast<double>(bound));
    Mat<Scalar> m(rows, cols);
    for (Index i = 0; i < m.size(); ++i) m.data()[i] = static_cast<Scalar>(u(rng));
    return m;
}

// ---------------------------------------------------------------------------
// Elementwise activations. Backward functions take the forward input.

template <typename Derived>
auto relu(const Eigen::MatrixBase<Derived>& x) {
    return x.cwiseMax(typename Derived::Scalar(0));
}

template <typename Scalar>
Mat<Scalar> relu_backward(const Mat<Scalar>& x, const Mat<Scalar>& dy) {
    return (x.array() > Scalar(0)).select(dy, Scalar(0));
}

template <typename Scalar>
Scalar sigmoid(Scalar v) {
    return v >= Scalar(0) ? Scalar(1) / (Scalar(1) + std::exp(-v)) : std::exp(v) / (Scalar(1) + std::exp(v));
}

template <typename Scalar>
Mat<Scalar> silu(const Mat<Scalar>& x) {
    return x.unaryExpr([](Scalar v) { return v * sigmoid(v); });
}

template <typename Scalar>
Mat<Scalar> silu_backward(const Mat<Scalar>& x, const Mat<Scalar>& dy) {
    return dy.binaryExpr(x, [](Scalar g, Scalar v) {
        const Scalar s = sigmoid(v);
        return g * (s * (Scalar(1) + v * (Scalar(1) - s)));
    });
}

template <typename Scalar>
Mat<Scalar> softplus(const Mat<Scalar>& x) {
    return x.unaryExpr([](Scalar v) {
        return v > Scalar(20) ? v : std::log1p(std::exp(v));
    });
}

template <typename Scalar>
Mat<Scalar> softplus_backward(const Mat<Scalar>& x, const Mat<Scalar>& dy) {
    return dy.binaryExpr(x, [](Scalar g, Scalar v) { return g * sigmoid(v); });
}

/// Column-wise softmax.
template <typename Scalar>
Mat<Scalar> softmax(const Mat<Scalar>& logits) {
    Mat<Scalar> out(logits.rows(), logits.cols());
    for (Index p = 0; p < logits.cols(); ++p) {
        const Scalar m = logits.col(p).maxCoeff();
        out.col(p) = (logits.col(p).array() - m).exp().matrix();
        out.col(p) /= out.col(p).sum();
    }
    return out;
}

template <typename Scalar>
Mat<Scalar> softmax_backward(const Mat<Scalar>& probs, const Mat<Scalar>& dprobs) {
    Mat<Scalar> out(probs.rows(), probs.cols());
    for (Index p = 0; p < probs.cols(); ++p) {
        const Scalar dot = probs.col(p).dot(dprobs.col(p));
        out.col(p) = probs.col(p).cwiseProduct((dprobs.col(p).array() - dot).matrix());
    }
    return out;
}

// ---------------------------------------------------------------------------

/// Per-token affine map: y = W x + b applied to every column.
template <typename ScalarT>
struct Linear {
    using Scalar = ScalarT;
    Mat<Scalar> weight;
    Mat<Scalar> bias;

    Linear() = default;
    Linear(Index in, Index out, std::mt19937_64& rng, bool with_bias = true)
        : weight(uniform_init<Scalar>(out, in, Scalar(1) / std::sqrt(Scalar(in)), rng)),
          bias(with_bias ? Mat<Scalar>::Zero(out, 1) : Mat<Scalar>()) {}

    Index in_features() const { return weight.cols(); }
    Index out_features() const { return weight.rows(); }
    bool has_bias() const { return bias.size() > 0; }

    Mat<Scalar> forward(const Mat<Scalar>& x) const {
        require_shape(x.rows() == weight.cols(), "linear: input has wrong channel count");
        Mat<Scalar> y = weight * x;
        if (has_bias()) y.colwise() += bias.col(0);
        return y;
    }

    Mat<Scalar> backward(const Mat<Scalar>& x, const Mat<Scalar>& dy, Linear& grad) const {
        grad.weight.noalias() += dy * x.transpose();
        if (has_bias()) grad.bias.col(0) += dy.rowwise().sum();
        return weight.transpose() * dy;
    }

    template <typename F>
    void visit(F&& f, const std::string& prefix = "") {
        f(prefix + "weight", weight, true);
        if (has_bias()) f(prefix + "bias", bias, true);
    }
};

/// Normalises each column (token) over its channels.
template <typename ScalarT>
struct LayerNorm {
    using Scalar = ScalarT;
    Mat<Scalar> gamma;
    Mat<Scalar> beta;
    Scalar eps = Scalar(1e-5);

    struct Cache {
        Mat<Scalar> xhat;
        Eigen::Matrix<Scalar, 1, Eigen::Dynamic> inv_std;
    };

    LayerNorm() = default;
    explicit LayerNorm(Index channels)
        : gamma(Mat<Scalar>::Ones(channels, 1)), beta(Mat<Scalar>::Zero(channels, 1)) {}

    Mat<Scalar> forward(const Mat<Scalar>& x, Cache& cache) const {
        require_shape(x.rows() == gamma.rows(), "layer norm: channel mismatch");
        const Scalar n = Scalar(x.rows());
        const auto mean = x.colwise().sum() / n;
        cache.xhat = x.rowwise() - mean;
        const auto var = cache.xhat.array().square().colwise().sum() / n;
        cache.inv_std = (var + eps).rsqrt().matrix();
        cache.xhat = cache.xhat * cache.inv_std.asDiagonal();
        Mat<Scalar> y = gamma.col(0).asDiagonal() * cache.xhat;
        y.colwise() += beta.col(0);
        return y;
    }

    Mat<Scalar> backward(const Cache& cache, const Mat<Scalar>& dy, LayerNorm& grad) const {
        grad.gamma.col(0) += dy.cwiseProduct(cache.xhat).rowwise().sum();
        grad.beta.col(0) += dy.rowwise().sum();
        const Mat<Scalar> dxhat = gamma.col(0).asDiagonal() * dy;
        const Scalar n = Scalar(dy.rows());
        const auto sum_d = dxhat.colwise().sum();
        const auto sum_dx = dxhat.cwiseProduct(cache.xhat).colwise().sum();
        Mat<Scalar> dx = (n * dxhat).rowwise() - sum_d;
        dx -= cache.xhat * sum_dx.asDiagonal();
        return dx * (cache.inv_std / n).asDiagonal();
    }

    template <typename F>
    void visit(F&& f, const std::string& prefix = "") {
        f(prefix + "gamma", gamma, true);
        f(prefix + "beta", beta, true);
    }
};

// ---------------------------------------------------------------------------
// Spatial rearrangements on Tensor-layout matrices (channels x h*w).

/// Space-to-depth: each factor x factor block of cells becomes one token with
/// factor^2 * C channels, ordered (dy, dx, c).
template <typename Scalar>
Mat<Scalar> unfold_patches(const Mat<Scalar>& x, Index h, Index w, Index factor) {
    require_shape(h % factor == 0 && w % factor == 0, "patch unfold: size not divisible by factor");
    const Index c = x.rows(), oh = h / factor, ow = w / factor;
    Mat<Scalar> out(c * factor * factor, oh * ow);
    for (Index y = 0; y < oh; ++y)
        for (Index xx = 0; xx < ow; ++xx)
            for (Index dy = 0; dy < factor; ++dy)
                for (Index dx = 0; dx < factor; ++dx)
                    out.block((dy * factor + dx) * c, y * ow + xx, c, 1) =
                        x.col((y * factor + dy) * w + xx * factor + dx);
    return out;
}

template <typename Scalar>
Mat<Scalar> fold_patches(const Mat<Scalar>& cols, Index h, Index w, Index factor) {
    const Index c = cols.rows() / (factor * factor), oh = h / factor, ow = w / factor;
    Mat<Scalar> out(c, h * w);
    for (Index y = 0; y < oh; ++y)
        for (Index xx = 0; xx < ow; ++xx)
            for (Index dy = 0; dy < factor; ++dy)
                for (Index dx = 0; dx < factor; ++dx)
                    out.col((y * factor + dy) * w + xx * factor + dx) =
                        cols.block((dy * factor + dx) * c, y * ow + xx, c, 1);
    return out;
}

template <typename Scalar>
Mat<Scalar> upsample_nearest(const Mat<Scalar>& x, Index h, Index w, Index factor) {
    if (factor == 1) return x;
    const Index ow = w * factor;
    Mat<Scalar> out(x.rows(), h * factor * ow);
    for (Index y = 0; y < h * factor; ++y)
        for (Index xx = 0; xx < ow; ++xx) out.col(y * ow + xx) = x.col((y / factor) * w + xx / factor);
    return out;
}

template <typename Scalar>
Mat<Scalar> upsample_nearest_backward(const Mat<Scalar>& dy, Index h, Index w, Index factor) {
    if (factor == 1) return dy;
    const Index ow = w * factor;
    Mat<Scalar> out = Mat<Scalar>::Zero(dy.rows(), h * w);
    for (Index y = 0; y < h * factor; ++y)
        for (Index xx = 0; xx < ow; ++xx) out.col((y / factor) * w + xx / factor) += dy.col(y * ow + xx);
    return out;
}

/// im2col for a k x k window with zero padding k/2, stride 1.
template <typename Scalar>
Mat<Scalar> im2col(const Mat<Scalar>& x, Index h, Index w, Index k) {
    const Index c = x.rows(), r = k / 2;
    Mat<Scalar> cols = Mat<Scalar>::Zero(c * k * k, h * w);
    for (Index ky = 0; ky < k; ++ky)
        for (Index kx = 0; kx < k; ++kx) {
            const Index row0 = (ky * k + kx) * c;
            for (Index y = 0; y < h; ++y) {
                const Index sy = y + ky - r;
                if (sy < 0 || sy >= h) continue;
                for (Index xx = 0; xx < w; ++xx) {
                    const Index sx = xx + kx - r;
                    if (sx < 0 || sx >= w) continue;
                    cols.block(row0, y * w + xx, c, 1) = x.col(sy * w + sx);
                }
            }
        }
    return cols;
}

template <typename Scalar>
Mat<Scalar> col2im(const Mat<Scalar>& cols, Index c, Index h, Index w, Index k) {
    const Index r = k / 2;
    Mat<Scalar> x = Mat<Scalar>::Zero(c, h * w);
    for (Index ky = 0; ky < k; ++ky)
        for (Index kx = 0; kx < k; ++kx) {
            const Index row0 = (ky * k + kx) * c;
            for (Index y = 0; y < h; ++y) {
                const Index sy = y + ky - r;
                if (sy < 0 || sy >= h) continue;
                for (Index xx = 0; xx < w; ++xx) {
                    const Index sx = xx + kx - r;
                    if (sx < 0 || sx >= w) continue;
                    x.col(sy * w + sx) += cols.block(row0, y * w + xx, c, 1);
                }
            }
        }
    return x;
}

/// Same-size k x k convolution (k odd) implemented as im2col + GEMM.
template <typename ScalarT>
struct Conv2d {
    using Scalar = ScalarT;
    Linear<Scalar> proj;
    Index kernel = 3;

    struct Cache {
        Mat<Scalar> cols;
    };

    Conv2d() = default;
    Conv2d(Index in, Index out, Index k, std::mt19937_64& rng) : proj(in * k * k, out, rng), kernel(k) {
        require(k % 2 == 1, "conv kernel size must be odd");
    }

    Index in_channels() const { return proj.in_features() / (kernel * kernel); }

    Mat<Scalar> forward(const Mat<Scalar>& x, Index h, Index w, Cache& cache) const {
        require_shape(x.rows() == in_channels(), "conv: input has wrong channel count");
        cache.cols = kernel == 1 ? x : im2col(x, h, w, kernel);
        return proj.forward(cache.cols);
    }

    Mat<Scalar> backward(const Cache& cache, const Mat<Scalar>& dy, Index h, Index w, Conv2d& grad) const {
        Mat<Scalar> dcols = proj.backward(cache.cols, dy, grad.proj);
        return kernel == 1 ? dcols : col2im(dcols, in_channels(), h, w, kernel);
    }

    template <typename F>
    void visit(F&& f, const std::string& prefix = "") {
        proj.visit(f, prefix);
    }
};

/// Batch normalisation that always normalises with its running statistics.
/// Training forwards report the per-call statistics in the cache; the owner
/// folds them into the running estimates with `update_stats`, so the forward
/// pass itself stays const and train/eval behaviour is identical.
template <typename ScalarT>
struct BatchNorm {
    using Scalar = ScalarT;
    Mat<Scalar> gamma;
    Mat<Scalar> beta;
    Mat<Scalar> running_mean;
    Mat<Scalar> running_var;
    Scalar eps = Scalar(1e-5);
    Scalar momentum = Scalar(0.1);

    struct Cache {
        Mat<Scalar> xhat;
        Vec<Scalar> batch_mean;
        Vec<Scalar> batch_var;
    };

    BatchNorm() = default;
    explicit BatchNorm(Index channels)
        : gamma(Mat<Scalar>::Ones(channels, 1)),
          beta(Mat<Scalar>::Zero(channels, 1)),
          running_mean(Mat<Scalar>::Zero(channels, 1)),
          running_var(Mat<Scalar>::Ones(channels, 1)) {}

    Vec<Scalar> inv_std() const { return (running_var.col(0).array() + eps).rsqrt().matrix(); }

    Mat<Scalar> forward(const Mat<Scalar>& x, Cache& cache) const {
        const Scalar n = Scalar(x.cols());
        cache.batch_mean = x.rowwise().sum() / n;
        cache.batch_var = (x.colwise() - cache.batch_mean).array().square().rowwise().sum().matrix() / n;
        cache.xhat = inv_std().asDiagonal() * (x.colwise() - running_mean.col(0));
        Mat<Scalar> y = gamma.col(0).asDiagonal() * cache.xhat;
        y.colwise() += beta.col(0);
        return y;
    }

    Mat<Scalar> backward(const Cache& cache, const Mat<Scalar>& dy, BatchNorm& grad) const {
        grad.gamma.col(0) += dy.cwiseProduct(cache.xhat).rowwise().sum();
        grad.beta.col(0) += dy.rowwise().sum();
        return (gamma.col(0).cwiseProduct(inv_std())).asDiagonal() * dy;
    }

    void update_stats(const Cache& cache) {
        running_mean.col(0) = (Scalar(1) - momentum) * running_mean.col(0) + momentum * cache.batch_mean;
        running_var.col(0) = (Scalar(1) - momentum) * running_var.col(0) + momentum * cache.batch_var;
    }

    template <typename F>
    void visit(F&& f, const std::string& prefix = "") {
        f(prefix + "gamma", gamma, true);
        f(prefix + "beta", beta, true);
        f(prefix + "running_mean", running_mean, false);
        f(prefix + "running_var", running_var, false);
    }
};

}  // namespace tmtb::nn
