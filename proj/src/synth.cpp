#include "tmtb/synth.hpp"

#include <algorithm>
#include <array>
#include <cmath>
#include <random>
#include <sstream>

namespace tmtb {

namespace {

using Rgb = std::array<float, 3>;

float quantize(float v) { return std::round(std::clamp(v, 0.0f, 1.0f) * 255.0f) / 255.0f; }

class Canvas {
public:
    Canvas(Index h, Index w) : img_(3, h, w) {}

    void set(Index y, Index x, const Rgb& c) {
        for (int k = 0; k < 3; ++k) img_(k, y, x) = c[static_cast<std::size_t>(k)];
    }

    void blend(Index y, Index x, const Rgb& c, float alpha) {
        for (int k = 0; k < 3; ++k) {
            float& v = img_(k, y, x);
            v = (1.0f - alpha) * v + alpha * c[static_cast<std::size_t>(k)];
        }
    }

    void disc(double cx, double cy, double r, const Rgb& c) {
        const Index x0 = std::max<Index>(0, static_cast<Index>(std::floor(cx - r - 1)));
        const Index x1 = std::min<Index>(img_.width - 1, static_cast<Index>(std::ceil(cx + r + 1)));
        const Index y0 = std::max<Index>(0, static_cast<Index>(std::floor(cy - r - 1)));
        const Index y1 = std::min<Index>(img_.height - 1, static_cast<Index>(std::ceil(cy + r + 1)));
        for (Index y = y0; y <= y1; ++y)
            for (Index x = x0; x <= x1; ++x) {
                const double d = std::hypot(static_cast<double>(x) + 0.5 - cx, static_cast<double>(y) + 0.5 - cy);
                const double a = std::clamp(r + 0.5 - d, 0.0, 1.0);
                if (a > 0.0) blend(y, x, c, static_cast<float>(a));
            }
    }

    void rect(Index y0, Index x0, Index hh, Index ww, const Rgb& c, float alpha) {
        for (Index y = std::max<Index>(0, y0); y < std::min(img_.height, y0 + hh); ++y)
            for (Index x = std::max<Index>(0, x0); x < std::min(img_.width, x0 + ww); ++x) blend(y, x, c, alpha);
    }

    Image<float> finish(float gain) {
        img_.values = img_.values.unaryExpr([gain](float v) { return quantize(v * gain); });
        return std::move(img_);
    }

    Index height() const { return img_.height; }
    Index width() const { return img_.width; }

private:
    Image<float> img_;
};

Rgb random_colour(std::mt19937_64& rng, float lo, float hi) {
    std::uniform_real_distribution<float> u(lo, hi);
    return {u(rng), u(rng), u(rng)};
}

void paint_background(Canvas& cv, BackgroundStyle style, std::mt19937_64& rng) {
    std::uniform_real_distribution<float> u01(0.0f, 1.0f);
    const Rgb base = random_colour(rng, 0.45f, 0.85f);
    const Index h = cv.height(), w = cv.width();
    switch (style) {
    case BackgroundStyle::plain:
        for (Index y = 0; y < h; ++y)
            for (Index x = 0; x < w; ++x) cv.set(y, x, base);
        break;
    case BackgroundStyle::gradient: {
        const Rgb other = random_colour(rng, 0.35f, 0.9f);
        const float angle = u01(rng) * 6.2831853f;
        const float cx = std::cos(angle), sy = std::sin(angle);
        for (Index y = 0; y < h; ++y)
            for (Index x = 0; x < w; ++x) {
                const float t = 0.5f + 0.5f * (cx * (static_cast<float>(x) / static_cast<float>(w) - 0.5f) +
                                               sy * (static_cast<float>(y) / static_cast<float>(h) - 0.5f));
                Rgb c;
                for (std::size_t k = 0; k < 3; ++k) c[k] = (1 - t) * base[k] + t * other[k];
                cv.set(y, x, c);
            }
        break;
    }
    case BackgroundStyle::noise: {
        std::normal_distribution<float> n(0.0f, 0.06f);
        for (Index y = 0; y < h; ++y)
            for (Index x = 0; x < w; ++x) {
                const float e = n(rng);
                cv.set(y, x, {base[0] + e, base[1] + e, base[2] + e});
            }
        break;
    }
    case BackgroundStyle::stripes: {
        const Rgb other = random_colour(rng, 0.4f, 0.9f);
        const int period = 12 + static_cast<int>(u01(rng) * 20.0f);
        const bool vertical = u01(rng) < 0.5f;
        for (Index y = 0; y < h; ++y)
            for (Index x = 0; x < w; ++x) {
                const Index t = vertical ? x : y;
                cv.set(y, x, (t / period) % 2 == 0 ? base : other);
            }
        break;
    }
    case BackgroundStyle::clutter: {
        for (Index y = 0; y < h; ++y)
            for (Index x = 0; x < w; ++x) cv.set(y, x, base);
        std::uniform_int_distribution<Index> py(0, h - 1), px(0, w - 1), sz(6, 28);
        for (int i = 0; i < 14; ++i) {
            const Rgb c = random_colour(rng, 0.5f, 1.0f);
            cv.rect(py(rng), px(rng), sz(rng), sz(rng), c, 0.8f);
        }
        break;
    }
    }
}

}  // namespace

BackgroundStyle parse_background_style(std::string_view name) {
    if (name == "plain") return BackgroundStyle::plain;
    if (name == "gradient") return BackgroundStyle::gradient;
    if (name == "noise") return BackgroundStyle::noise;
    if (name == "stripes") return BackgroundStyle::stripes;
    if (name == "clutter") return BackgroundStyle::clutter;
    throw Error("unknown background style: " + std::string(name));
}

std::string_view to_string(BackgroundStyle style) {
    switch (style) {
    case BackgroundStyle::plain: return "plain";
    case BackgroundStyle::gradient: return "gradient";
    case BackgroundStyle::noise: return "noise";
    case BackgroundStyle::stripes: return "stripes";
    case BackgroundStyle::clutter: return "clutter";
    }
    return "plain";
}

std::size_t synth_capacity(Index height, Index width) {
    const double uh = static_cast<double>(height) - 2.0 * kSynthBorderMargin;
    const double uw = static_cast<double>(width) - 2.0 * kSynthBorderMargin;
    if (uh <= 0 || uw <= 0) return 0;
    return static_cast<std::size_t>(std::floor(0.5 * uh * uw / (kSynthHeadSpacing * kSynthHeadSpacing)));
}

SyntheticScene synth_scene(std::uint64_t seed, std::size_t n_people, Index height, Index width,
                           BackgroundStyle style) {
    require(height >= 64 && width >= 64, "synthetic scenes must be at least 64x64");
    const std::size_t capacity = synth_capacity(height, width);
    if (n_people > capacity) {
        std::ostringstream os;
        os << "cannot place " << n_people << " heads in a " << width << "x" << height
           << " scene (capacity " << capacity << ")";
        throw Error(os.str());
    }

    std::mt19937_64 rng(seed);
    Canvas cv(height, width);
    paint_background(cv, style, rng);

    std::uniform_real_distribution<double> ux(kSynthBorderMargin, static_cast<double>(width) - kSynthBorderMargin);
    std::uniform_real_distribution<double> uy(kSynthBorderMargin, static_cast<double>(height) - kSynthBorderMargin);
    std::uniform_real_distribution<double> radius(2.4, 3.4);
    std::uniform_real_distribution<float> tone(0.05f, 0.3f);
    std::uniform_real_distribution<float> gain(0.55f, 1.0f);

    SyntheticScene scene;
    scene.annotations.height = height;
    scene.annotations.width = width;
    auto& pts = scene.annotations.points;
    const double min_d2 = kSynthHeadSpacing * kSynthHeadSpacing;
    std::size_t attempts = 0;
    const std::size_t max_attempts = 2000 * (n_people + 1);
    while (pts.size() < n_people) {
        if (++attempts > max_attempts) {
            std::ostringstream os;
            os << "head placement failed after " << max_attempts << " attempts (" << pts.size() << " of "
               << n_people << " placed, capacity " << capacity << ")";
            throw Error(os.str());
        }
        const Point p{ux(rng), uy(rng)};
        const bool clear = std::all_of(pts.begin(), pts.end(), [&](const Point& q) {
            return (p.x - q.x) * (p.x - q.x) + (p.y - q.y) * (p.y - q.y) >= min_d2;
        });
        if (clear) pts.push_back(p);
    }
    for (const auto& p : pts) {
        const float t = tone(rng);
        cv.disc(p.x, p.y, radius(rng), {t, t * 0.8f, t * 0.6f});
    }
    scene.image = cv.finish(gain(rng));
    return scene;
}

}  // namespace tmtb
