#pragma once

#include "tmtb/annotations.hpp"
#include "tmtb/rng.hpp"
#include "tmtb/types.hpp"

#include <optional>
#include <vector>

namespace tmtb {

/// Geometry shared by every view cut from one source image.
struct CropWindow {
    Index y0 = 0, x0 = 0;
    Index height = 0, width = 0;
    bool flip = false;  // horizontal, applied after cropping
};

/// Things cut together with the image. Cell rasters (density, bins) must
/// share one stride; pixel rasters match the image.
struct CropTargets {
    std::optional<PointAnnotations> points;
    std::optional<DensityMap<float>> density;
    std::optional<IndexRaster> bins;
    std::optional<Raster<float>> mask;
};

struct CroppedView {
    Image<float> image;
    CropTargets targets;
    CropWindow window;
};

/// Mirror-pads (bottom/right) so the image is at least `min_h` x `min_w`.
/// Cell and pixel targets are zero-padded (bins with cell_stride); points keep
/// their coordinates.
CroppedView pad_reflect(const Image<float>& image, const CropTargets& targets, Index min_h, Index min_w,
                        Index cell_stride);

/// Random crop of size crop_h x crop_w, origin on the `align` grid (the
/// density stride), then a shared horizontal flip with probability flip_p.
/// Points outside the window are dropped.
CroppedView paired_crop(const Image<float>& image, const CropTargets& targets, Index crop_h, Index crop_w,
                        Index align, double flip_p, Rng& rng);

/// Applies an explicit window; paired_crop draws one and calls this.
CroppedView apply_window(const Image<float>& image, const CropTargets& targets, const CropWindow& window,
                         Index align);

// ---------------------------------------------------------------------------

struct StrongAugmentConfig {
    double brightness = 0.3;
    double contrast = 0.3;
    double saturation = 0.3;
    double grayscale_p = 0.1;
    double blur_p = 0.2;
    double blur_sigma_min = 0.1;
    double blur_sigma_max = 2.0;
    Index patch_size = 32;
    double mask_ratio = 0.3;

    /// Every op off: strong_augment becomes the identity.
    static StrongAugmentConfig disabled() { return {0, 0, 0, 0, 0, 0.1, 2.0, 32, 0.0}; }
};

struct MaskedView {
    Image<float> image;
    std::vector<Index> masked_patches;  // row-major patch indices, ascending
};

/// Weak view: photometric identity.
Image<float> weak_augment(const Image<float>& view, Rng& rng);

/// jitter -> grayscale -> blur -> patch mask.
MaskedView strong_augment(const Image<float>& view, const StrongAugmentConfig& cfg, Rng& rng);

/// floor(ratio * n + 0.5)
Index masked_patch_count(Index n_patches, double ratio);

/// Zero-fills exactly masked_patch_count patches of a patch_size grid.
MaskedView patch_aligned_mask(const Image<float>& view, Index patch_size, double ratio, Rng& rng);

// individual photometric ops, exposed for tests
Image<float> adjust_brightness(const Image<float>& img, double factor);
Image<float> adjust_contrast(const Image<float>& img, double factor);
Image<float> adjust_saturation(const Image<float>& img, double factor);
Image<float> to_grayscale(const Image<float>& img);
Image<float> gaussian_blur(const Image<float>& img, double sigma);

struct AugmentedPair {
    Image<float> weak;
    MaskedView strong;
    CropWindow window;
};

/// Weak and strong views of one already-cropped image.
AugmentedPair make_pair(const Image<float>& cropped, const CropWindow& window, const StrongAugmentConfig& cfg,
                        Rng& rng);

}  // namespace tmtb
