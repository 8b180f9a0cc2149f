#pragma once

#include "tmtb/ss2d.hpp"

#include <vector>

namespace tmtb {

struct BackboneConfig {
    Index patch = 4;       // stem stride; the downsample doubles it
    Index dim1 = 32;
    Index dim2 = 64;
    Index depth1 = 2;
    Index depth2 = 2;
    Index state_dim = 8;
    Index expand = 1;      // inner channels = expand * dim

    Index output_stride() const { return patch * 2; }
};

/// Stride-`patch` patch embedding, a stage of SS2D blocks, 2x2 patch merging
/// and a second stage. Output stride is 2 * patch (8 by default).
template <typename ScalarT>
struct Backbone {
    using Scalar = ScalarT;
    BackboneConfig config;
    nn::Linear<Scalar> stem;
    nn::LayerNorm<Scalar> stem_norm;
    std::vector<SS2DBlock<Scalar>> stage1;
    nn::Linear<Scalar> merge;
    nn::LayerNorm<Scalar> merge_norm;
    std::vector<SS2DBlock<Scalar>> stage2;

    struct Cache {
        Mat<Scalar> stem_in, merge_in;
        typename nn::LayerNorm<Scalar>::Cache stem_norm, merge_norm;
        std::vector<typename SS2DBlock<Scalar>::Cache> stage1, stage2;
        Index height = 0, width = 0;
    };

    Backbone() = default;
    Backbone(const BackboneConfig& cfg, std::mt19937_64& rng)
        : config(cfg),
          stem(3 * cfg.patch * cfg.patch, cfg.dim1, rng),
          stem_norm(cfg.dim1),
          merge(4 * cfg.dim1, cfg.dim2, rng),
          merge_norm(cfg.dim2) {
        for (Index i = 0; i < cfg.depth1; ++i)
            stage1.emplace_back(cfg.dim1, cfg.expand * cfg.dim1, cfg.state_dim, rng);
        for (Index i = 0; i < cfg.depth2; ++i)
            stage2.emplace_back(cfg.dim2, cfg.expand * cfg.dim2, cfg.state_dim, rng);
    }

    FeatureMap<Scalar> forward(const Image<Scalar>& img, Cache& c, const ScanEngine& engine) const {
        const Index s = config.output_stride();
        require_shape(img.height % s == 0 && img.width % s == 0,
                      "backbone input " + std::to_string(img.height) + "x" + std::to_string(img.width) +
                          " is not divisible by the output stride " + std::to_string(s));
        require_shape(img.channels() == 3, "backbone expects a 3-channel image");
        c.height = img.height;
        c.width = img.width;

        FeatureMap<Scalar> fm;
        fm.height = img.height / config.patch;
        fm.width = img.width / config.patch;
        fm.stride = config.patch;
        c.stem_in = nn::unfold_patches(img.values, img.height, img.width, config.patch);
        fm.values = stem_norm.forward(stem.forward(c.stem_in), c.stem_norm);

        c.stage1.resize(stage1.size());
        for (std::size_t i = 0; i < stage1.size(); ++i) fm = stage1[i].forward(fm, c.stage1[i], engine);

        c.merge_in = nn::unfold_patches(fm.values, fm.height, fm.width, Index(2));
        fm.height /= 2;
        fm.width /= 2;
        fm.stride *= 2;
        fm.values = merge_norm.forward(merge.forward(c.merge_in), c.merge_norm);

        c.stage2.resize(stage2.size());
        for (std::size_t i = 0; i < stage2.size(); ++i) fm = stage2[i].forward(fm, c.stage2[i], engine);
        return fm;
    }

    /// Returns the gradient with respect to the input image.
    Mat<Scalar> backward(const Cache& c, const Mat<Scalar>& dout, Backbone& grad, const ScanEngine& engine) const {
        Mat<Scalar> d = dout;
        for (std::size_t i = stage2.size(); i-- > 0;) d = stage2[i].backward(c.stage2[i], d, grad.stage2[i], engine);
        d = merge_norm.backward(c.merge_norm, d, grad.merge_norm);
        d = merge.backward(c.merge_in, d, grad.merge);
        const Index h1 = c.height / config.patch, w1 = c.width / config.patch;
        d = nn::fold_patches(d, h1, w1, Index(2));
        for (std::size_t i = stage1.size(); i-- > 0;) d = stage1[i].backward(c.stage1[i], d, grad.stage1[i], engine);
        d = stem_norm.backward(c.stem_norm, d, grad.stem_norm);
        d = stem.backward(c.stem_in, d, grad.stem);
        return nn::fold_patches(d, c.height, c.width, config.patch);
    }

    template <typename F>
    void visit(F&& f, const std::string& prefix = "") {
        stem.visit(f, prefix + "stem.");
        stem_norm.visit(f, prefix + "stem_norm.");
        for (std::size_t i = 0; i < stage1.size(); ++i) stage1[i].visit(f, prefix + "stage1." + std::to_string(i) + ".");
        merge.visit(f, prefix + "merge.");
        merge_norm.visit(f, prefix + "merge_norm.");
        for (std::size_t i = 0; i < stage2.size(); ++i) stage2[i].visit(f, prefix + "stage2." + std::to_string(i) + ".");
    }
};

}  // namespace tmtb
