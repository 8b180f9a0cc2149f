#pragma once

#include "tmtb/backbone.hpp"
#include "tmtb/heads.hpp"

namespace tmtb {

struct ModelConfig {
    BackboneConfig backbone;
    Index head_hidden = 32;
    Index head_upsample = 1;
    Index num_bins = 6;
    std::uint64_t seed = 0;
};

/// Backbone with the density regression head and the count-interval
/// classification head.
template <typename ScalarT>
struct CountingModel {
    using Scalar = ScalarT;
    ModelConfig config;
    Backbone<Scalar> backbone;
    RegressionHead<Scalar> regression;
    ClassificationHead<Scalar> classification;

    struct Output {
        DensityMap<Scalar> density;
        BinProbMap<Scalar> probs;
    };

    struct Cache {
        typename Backbone<Scalar>::Cache backbone;
        typename RegressionHead<Scalar>::Cache regression;
        typename ClassificationHead<Scalar>::Cache classification;
        Index feat_height = 0, feat_width = 0;
    };

    CountingModel() = default;
    explicit CountingModel(const ModelConfig& cfg) : config(cfg) {
        std::mt19937_64 rng(cfg.seed);
        backbone = Backbone<Scalar>(cfg.backbone, rng);
        regression = RegressionHead<Scalar>(cfg.backbone.dim2, cfg.head_hidden, cfg.head_upsample, rng);
        classification =
            ClassificationHead<Scalar>(cfg.backbone.dim2, cfg.head_hidden, cfg.num_bins, cfg.head_upsample, rng);
    }

    Index stride() const { return config.backbone.output_stride() / config.head_upsample; }

    Output forward(const Image<Scalar>& img, Cache& c, const ScanEngine& engine) const {
        const FeatureMap<Scalar> fm = backbone.forward(img, c.backbone, engine);
        c.feat_height = fm.height;
        c.feat_width = fm.width;
        return {regression.forward(fm, c.regression), classification.forward(fm, c.classification)};
    }

    Output forward(const Image<Scalar>& img, const ScanEngine& engine) const {
        Cache c;
        return forward(img, c, engine);
    }

    /// Accumulates parameter gradients into `grad`; returns d(loss)/d(image).
    Mat<Scalar> backward(const Cache& c, const Raster<Scalar>& ddensity, const Mat<Scalar>& dprobs,
                         CountingModel& grad, const ScanEngine& engine) const {
        Mat<Scalar> dfeat = regression.backward(c.regression, ddensity, grad.regression);
        dfeat += classification.backward(c.classification, dprobs, grad.classification);
        return backbone.backward(c.backbone, dfeat, grad.backbone, engine);
    }

    void update_norm_stats(const Cache& c) { regression.update_stats(c.regression); }

    template <typename F>
    void visit(F&& f, const std::string& prefix = "") {
        backbone.visit(f, prefix + "backbone.");
        regression.visit(f, prefix + "regression.");
        classification.visit(f, prefix + "classification.");
    }
};

}  // namespace tmtb
