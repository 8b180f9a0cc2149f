#include "tmtb/augmentation.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>

namespace tmtb {

namespace {

/// Mirror index into [0, n) without repeating the edge sample.
Index reflect(Index i, Index n) {
    if (n == 1) return 0;
    const Index period = 2 * (n - 1);
    i %= period;
    if (i < 0) i += period;
    return i < n ? i : period - i;
}

template <typename M>
M zero_pad(const M& src, Index rows, Index cols) {
    M out = M::Zero(std::max(rows, src.rows()), std::max(cols, src.cols()));
    out.topLeftCorner(src.rows(), src.cols()) = src;
    return out;
}

float gray_of(const Image<float>& img, Index p) {
    return 0.299f * img.values(0, p) + 0.587f * img.values(1, p) + 0.114f * img.values(2, p);
}

void clamp01(Image<float>& img) { img.values = img.values.cwiseMax(0.0f).cwiseMin(1.0f); }

}  // namespace

CroppedView pad_reflect(const Image<float>& image, const CropTargets& targets, Index min_h, Index min_w,
                        Index cell_stride) {
    const Index h = std::max(image.height, min_h), w = std::max(image.width, min_w);
    CroppedView out;
    out.targets = targets;
    out.window = {0, 0, h, w, false};
    if (h == image.height && w == image.width) {
        out.image = image;
        return out;
    }
    out.image = Image<float>(image.channels(), h, w);
    for (Index y = 0; y < h; ++y)
        for (Index x = 0; x < w; ++x)
            out.image.values.col(y * w + x) =
                image.values.col(reflect(y, image.height) * image.width + reflect(x, image.width));
    if (out.targets.points) {
        out.targets.points->height = h;
        out.targets.points->width = w;
    }
    if (auto& d = out.targets.density) {
        const Index s = d->stride;
        d->values = zero_pad(d->values, (h + s - 1) / s, (w + s - 1) / s);
    }
    if (auto& b = out.targets.bins) *b = zero_pad(*b, (h + cell_stride - 1) / cell_stride, (w + cell_stride - 1) / cell_stride);
    if (auto& m = out.targets.mask) *m = zero_pad(*m, h, w);
    return out;
}

CroppedView apply_window(const Image<float>& image, const CropTargets& targets, const CropWindow& win, Index align) {
    require(align >= 1, "crop alignment must be >= 1");
    require_shape(win.y0 >= 0 && win.x0 >= 0 && win.y0 + win.height <= image.height &&
                      win.x0 + win.width <= image.width && win.height > 0 && win.width > 0,
                  "crop window outside the image");
    const Index ch = win.height, cw = win.width;

    CroppedView out;
    out.window = win;
    out.image = Image<float>(image.channels(), ch, cw);
    for (Index y = 0; y < ch; ++y)
        for (Index x = 0; x < cw; ++x) {
            const Index sx = win.x0 + (win.flip ? cw - 1 - x : x);
            out.image.values.col(y * cw + x) = image.values.col((win.y0 + y) * image.width + sx);
        }

    if (targets.points) {
        PointAnnotations pts;
        pts.height = ch;
        pts.width = cw;
        for (const auto& p : targets.points->points) {
            double x = p.x - static_cast<double>(win.x0), y = p.y - static_cast<double>(win.y0);
            if (x < 0 || y < 0 || x >= static_cast<double>(cw) || y >= static_cast<double>(ch)) continue;
            if (win.flip) {
                x = static_cast<double>(cw) - x;
                if (x >= static_cast<double>(cw)) x = std::nextafter(static_cast<double>(cw), 0.0);
            }
            pts.points.push_back({x, y});
        }
        out.targets.points = std::move(pts);
    }

    auto cut_cells = [&](const auto& src, Index s) {
        require_shape(win.y0 % s == 0 && win.x0 % s == 0 && ch % s == 0 && cw % s == 0,
                      "crop window is not aligned to the cell stride " + std::to_string(s));
        const Index cy = win.y0 / s, cx = win.x0 / s, hh = ch / s, ww = cw / s;
        require_shape(cy + hh <= src.rows() && cx + ww <= src.cols(), "cell raster smaller than the crop window");
        std::decay_t<decltype(src)> r = src.block(cy, cx, hh, ww);
        if (win.flip) r = r.rowwise().reverse().eval();
        return r;
    };
    if (targets.density) out.targets.density = DensityMap<float>(cut_cells(targets.density->values, targets.density->stride),
                                                                  targets.density->stride);
    if (targets.bins) out.targets.bins = cut_cells(*targets.bins, align);
    if (targets.mask) {
        require_shape(targets.mask->rows() == image.height && targets.mask->cols() == image.width,
                      "pixel mask does not match the image");
        Raster<float> m = targets.mask->block(win.y0, win.x0, ch, cw);
        if (win.flip) m = m.rowwise().reverse().eval();
        out.targets.mask = std::move(m);
    }
    return out;
}

CroppedView paired_crop(const Image<float>& image, const CropTargets& targets, Index crop_h, Index crop_w,
                        Index align, double flip_p, Rng& rng) {
    require(crop_h > 0 && crop_w > 0, "crop size must be positive");
    require(align >= 1 && crop_h % align == 0 && crop_w % align == 0, "crop size must be a multiple of the stride");
    const CroppedView padded = pad_reflect(image, targets, crop_h, crop_w, align);
    const Image<float>& img = padded.image;
    // Origins on the alignment grid whose window still fits.
    const Index ny = (img.height - crop_h) / align, nx = (img.width - crop_w) / align;
    std::uniform_int_distribution<Index> dy(0, ny), dx(0, nx);
    std::bernoulli_distribution flip(std::clamp(flip_p, 0.0, 1.0));
    CropWindow win;
    win.y0 = dy(rng) * align;
    win.x0 = dx(rng) * align;
    win.height = crop_h;
    win.width = crop_w;
    win.flip = flip(rng);
    return apply_window(img, padded.targets, win, align);
}

// ---------------------------------------------------------------------------

Image<float> adjust_brightness(const Image<float>& img, double factor) {
    Image<float> out = img;
    out.values *= static_cast<float>(factor);
    clamp01(out);
    return out;
}

Image<float> adjust_contrast(const Image<float>& img, double factor) {
    double mean = 0.0;
    for (Index p = 0; p < img.cells(); ++p) mean += gray_of(img, p);
    const float m = static_cast<float>(mean / static_cast<double>(std::max<Index>(1, img.cells())));
    const float f = static_cast<float>(factor);
    Image<float> out = img;
    out.values = ((img.values.array() - m) * f + m).matrix();
    clamp01(out);
    return out;
}

Image<float> adjust_saturation(const Image<float>& img, double factor) {
    const float f = static_cast<float>(factor);
    Image<float> out = img;
    for (Index p = 0; p < img.cells(); ++p) {
        const float g = gray_of(img, p);
        out.values.col(p) = ((img.values.col(p).array() - g) * f + g).matrix();
    }
    clamp01(out);
    return out;
}

Image<float> to_grayscale(const Image<float>& img) {
    Image<float> out = img;
    for (Index p = 0; p < img.cells(); ++p) out.values.col(p).setConstant(gray_of(img, p));
    return out;
}

Image<float> gaussian_blur(const Image<float>& img, double sigma) {
    require(sigma > 0.0, "blur sigma must be positive");
    const Index r = static_cast<Index>(std::ceil(3.0 * sigma));
    std::vector<float> k(static_cast<std::size_t>(2 * r + 1));
    double sum = 0.0;
    for (Index i = -r; i <= r; ++i) sum += k[static_cast<std::size_t>(i + r)] = static_cast<float>(std::exp(-0.5 * i * i / (sigma * sigma)));
    for (auto& v : k) v = static_cast<float>(v / sum);

    const Index h = img.height, w = img.width;
    Image<float> tmp(img.channels(), h, w), out(img.channels(), h, w);
    for (Index y = 0; y < h; ++y)
        for (Index x = 0; x < w; ++x)
            for (Index i = -r; i <= r; ++i)
                tmp.values.col(y * w + x) += k[static_cast<std::size_t>(i + r)] * img.values.col(y * w + reflect(x + i, w));
    for (Index y = 0; y < h; ++y)
        for (Index x = 0; x < w; ++x)
            for (Index i = -r; i <= r; ++i)
                out.values.col(y * w + x) += k[static_cast<std::size_t>(i + r)] * tmp.values.col(reflect(y + i, h) * w + x);
    return out;
}

Image<float> weak_augment(const Image<float>& view, Rng&) { return view; }

MaskedView strong_augment(const Image<float>& view, const StrongAugmentConfig& cfg, Rng& rng) {
    std::uniform_real_distribution<double> u(0.0, 1.0);
    auto factor = [&](double range) { return 1.0 + range * (2.0 * u(rng) - 1.0); };
    Image<float> img = view;
    if (cfg.brightness > 0) img = adjust_brightness(img, factor(cfg.brightness));
    if (cfg.contrast > 0) img = adjust_contrast(img, factor(cfg.contrast));
    if (cfg.saturation > 0) img = adjust_saturation(img, factor(cfg.saturation));
    if (cfg.grayscale_p > 0 && u(rng) < cfg.grayscale_p) img = to_grayscale(img);
    if (cfg.blur_p > 0 && u(rng) < cfg.blur_p)
        img = gaussian_blur(img, cfg.blur_sigma_min + (cfg.blur_sigma_max - cfg.blur_sigma_min) * u(rng));
    return patch_aligned_mask(img, cfg.patch_size, cfg.mask_ratio, rng);
}

Index masked_patch_count(Index n_patches, double ratio) {
    require(ratio >= 0.0 && ratio <= 1.0, "mask ratio must be in [0, 1]");
    return std::min(n_patches, static_cast<Index>(std::floor(ratio * static_cast<double>(n_patches) + 0.5)));
}

MaskedView patch_aligned_mask(const Image<float>& view, Index patch_size, double ratio, Rng& rng) {
    require(patch_size >= 1, "patch size must be >= 1");
    require_shape(view.height % patch_size == 0 && view.width % patch_size == 0,
                  "image " + std::to_string(view.height) + "x" + std::to_string(view.width) +
                      " is not divisible by patch size " + std::to_string(patch_size));
    const Index py = view.height / patch_size, px = view.width / patch_size, n = py * px;
    const Index k = masked_patch_count(n, ratio);

    MaskedView out{view, {}};
    if (k == 0) return out;
    // partial Fisher-Yates
    std::vector<Index> idx(static_cast<std::size_t>(n));
    std::iota(idx.begin(), idx.end(), Index(0));
    for (Index i = 0; i < k; ++i) {
        std::uniform_int_distribution<Index> pick(i, n - 1);
        std::swap(idx[static_cast<std::size_t>(i)], idx[static_cast<std::size_t>(pick(rng))]);
    }
    idx.resize(static_cast<std::size_t>(k));
    std::sort(idx.begin(), idx.end());
    for (Index id : idx) {
        const Index y0 = (id / px) * patch_size, x0 = (id % px) * patch_size;
        for (Index y = y0; y < y0 + patch_size; ++y)
            out.image.values.middleCols(y * view.width + x0, patch_size).setZero();
    }
    out.masked_patches = std::move(idx);
    return out;
}

AugmentedPair make_pair(const Image<float>& cropped, const CropWindow& window, const StrongAugmentConfig& cfg,
                        Rng& rng) {
    AugmentedPair pair;
    pair.window = window;
    pair.weak = weak_augment(cropped, rng);
    pair.strong = strong_augment(cropped, cfg, rng);
    return pair;
}

}  // namespace tmtb
