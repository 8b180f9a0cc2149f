#pragma once

#include "tmtb/nn.hpp"

namespace tmtb {

/// Up-sample -> 3x3 conv -> batch norm -> ReLU -> 1x1 conv -> ReLU.
/// Produces a non-negative single-channel density at feature stride / upsample.
template <typename ScalarT>
struct RegressionHead {
    using Scalar = ScalarT;
    Index upsample = 1;
    nn::Conv2d<Scalar> conv;
    nn::BatchNorm<Scalar> bn;
    nn::Conv2d<Scalar> out;

    struct Cache {
        typename nn::Conv2d<Scalar>::Cache conv, out;
        typename nn::BatchNorm<Scalar>::Cache bn;
        Mat<Scalar> bn_out, pre;
        Index height = 0, width = 0;  // input grid
    };

    RegressionHead() = default;
    RegressionHead(Index channels, Index hidden, Index up, std::mt19937_64& rng)
        : upsample(up), conv(channels, hidden, 3, rng), bn(hidden), out(hidden, 1, 1, rng) {}

    DensityMap<Scalar> forward(const FeatureMap<Scalar>& fm, Cache& c) const {
        require_shape(fm.stride % upsample == 0, "regression head: upsample exceeds feature stride");
        c.height = fm.height;
        c.width = fm.width;
        const Index h = fm.height * upsample, w = fm.width * upsample;
        const Mat<Scalar> up = nn::upsample_nearest(fm.values, fm.height, fm.width, upsample);
        c.bn_out = bn.forward(conv.forward(up, h, w, c.conv), c.bn);
        c.pre = out.forward(nn::relu(c.bn_out), h, w, c.out);
        DensityMap<Scalar> dm(h, w, fm.stride / upsample);
        Eigen::Map<Eigen::Matrix<Scalar, 1, Eigen::Dynamic>>(dm.values.data(), h * w) = nn::relu(c.pre);
        return dm;
    }

    /// `ddensity` is the loss gradient with respect to the density raster.
    Mat<Scalar> backward(const Cache& c, const Raster<Scalar>& ddensity, RegressionHead& grad) const {
        const Index h = c.height * upsample, w = c.width * upsample;
        const Mat<Scalar> dy = Eigen::Map<const Eigen::Matrix<Scalar, 1, Eigen::Dynamic>>(ddensity.data(), h * w);
        Mat<Scalar> d = out.backward(c.out, nn::relu_backward(c.pre, dy), h, w, grad.out);
        d = bn.backward(c.bn, nn::relu_backward(c.bn_out, d), grad.bn);
        d = conv.backward(c.conv, d, h, w, grad.conv);
        return nn::upsample_nearest_backward(d, c.height, c.width, upsample);
    }

    void update_stats(const Cache& c) { bn.update_stats(c.bn); }

    template <typename F>
    void visit(F&& f, const std::string& prefix = "") {
        conv.visit(f, prefix + "conv.");
        bn.visit(f, prefix + "bn.");
        out.visit(f, prefix + "out.");
    }
};

/// Up-sample -> 3x3 conv -> ReLU -> 1x1 conv -> per-cell softmax over K bins.
template <typename ScalarT>
struct ClassificationHead {
    using Scalar = ScalarT;
    Index upsample = 1;
    nn::Conv2d<Scalar> conv;
    nn::Conv2d<Scalar> out;

    struct Cache {
        typename nn::Conv2d<Scalar>::Cache conv, out;
        Mat<Scalar> hidden, probs;
        Index height = 0, width = 0;
    };

    ClassificationHead() = default;
    ClassificationHead(Index channels, Index hidden, Index num_bins, Index up, std::mt19937_64& rng)
        : upsample(up), conv(channels, hidden, 3, rng), out(hidden, num_bins, 1, rng) {}

    Index num_bins() const { return out.proj.out_features(); }

    BinProbMap<Scalar> forward(const FeatureMap<Scalar>& fm, Cache& c) const {
        c.height = fm.height;
        c.width = fm.width;
        const Index h = fm.height * upsample, w = fm.width * upsample;
        const Mat<Scalar> up = nn::upsample_nearest(fm.values, fm.height, fm.width, upsample);
        c.hidden = conv.forward(up, h, w, c.conv);
        c.probs = nn::softmax(out.forward(nn::relu(c.hidden), h, w, c.out));
        BinProbMap<Scalar> pm;
        pm.values = c.probs;
        pm.height = h;
        pm.width = w;
        pm.stride = fm.stride / upsample;
        return pm;
    }

    /// `dprobs` is the loss gradient with respect to the probabilities.
    Mat<Scalar> backward(const Cache& c, const Mat<Scalar>& dprobs, ClassificationHead& grad) const {
        const Index h = c.height * upsample, w = c.width * upsample;
        Mat<Scalar> d = out.backward(c.out, nn::softmax_backward(c.probs, dprobs), h, w, grad.out);
        d = conv.backward(c.conv, nn::relu_backward(c.hidden, d), h, w, grad.conv);
        return nn::upsample_nearest_backward(d, c.height, c.width, upsample);
    }

    template <typename F>
    void visit(F&& f, const std::string& prefix = "") {
        conv.visit(f, prefix + "conv.");
        out.visit(f, prefix + "out.");
    }
};

}  // namespace tmtb
