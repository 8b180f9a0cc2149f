#include "tmtb/dataset.hpp"
#include "tmtb/io.hpp"
#include "tmtb/rng.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <numeric>

namespace tmtb {

Dataset Dataset::load(const std::filesystem::path& dir) {
    const auto records = read_annotations(dir / "annotations.jsonl");
    Dataset d;
    d.samples.reserve(records.size());
    for (const auto& r : records) {
        Sample s;
        s.id = r.image;
        s.image = io::read_png(dir / r.image);
        require_shape(s.image.height == r.annotations.height && s.image.width == r.annotations.width,
                      r.image + ": image is " + std::to_string(s.image.height) + "x" + std::to_string(s.image.width) +
                          " but the annotation says " + std::to_string(r.annotations.height) + "x" +
                          std::to_string(r.annotations.width));
        s.points = r.annotations;
        d.samples.push_back(std::move(s));
    }
    return d;
}

void Dataset::save(const std::filesystem::path& dir) const {
    std::filesystem::create_directories(dir / "images");
    std::vector<AnnotationRecord> records;
    for (const auto& s : samples) {
        require(s.points.has_value(), "cannot save unlabeled sample " + s.id);
        const std::string rel = s.id.find('/') == std::string::npos ? "images/" + s.id : s.id;
        io::write_png(dir / rel, s.image);
        records.push_back({rel, *s.points});
    }
    write_annotations(dir / "annotations.jsonl", records);
}

Dataset synth_dataset(const SynthSpec& spec) {
    require(spec.min_count <= spec.max_count, "synth: min_count > max_count");
    static const BackgroundStyle styles[] = {BackgroundStyle::plain, BackgroundStyle::gradient, BackgroundStyle::noise,
                                             BackgroundStyle::stripes, BackgroundStyle::clutter};
    Dataset d;
    d.samples.reserve(spec.n);
    for (std::size_t i = 0; i < spec.n; ++i) {
        auto rng = make_rng({spec.seed, i, 0x5CE7E});
        std::uniform_int_distribution<std::size_t> count(spec.min_count, spec.max_count);
        const std::size_t n = count(rng);
        auto scene = synth_scene(rng(), n, spec.height, spec.width, styles[i % 5]);
        char name[32];
        std::snprintf(name, sizeof name, "images/%05zu.png", i);
        d.samples.push_back({name, std::move(scene.image), std::move(scene.annotations)});
    }
    return d;
}

Split split_labeled(const Dataset& data, double labeled_fraction, std::uint64_t seed) {
    require(labeled_fraction > 0.0 && labeled_fraction <= 1.0, "labeled_fraction must be in (0, 1]");
    require(!data.empty(), "cannot split an empty dataset");
    const std::size_t n = data.size();
    const auto n_lab = std::clamp<std::size_t>(static_cast<std::size_t>(std::lround(labeled_fraction * n)), 1, n);
    std::vector<std::size_t> order(n);
    std::iota(order.begin(), order.end(), 0);
    auto rng = make_rng({seed, 0x5B117});
    std::shuffle(order.begin(), order.end(), rng);
    std::sort(order.begin(), order.begin() + static_cast<std::ptrdiff_t>(n_lab));
    std::sort(order.begin() + static_cast<std::ptrdiff_t>(n_lab), order.end());

    Split s;
    for (std::size_t i = 0; i < n; ++i) {
        Sample smp = data.samples[order[i]];
        if (i < n_lab) {
            require(smp.points.has_value(), "labeled sample " + smp.id + " has no annotations");
            s.labeled.push_back(std::move(smp));
        } else {
            smp.points.reset();
            s.unlabeled.push_back(std::move(smp));
        }
    }
    return s;
}

}  // namespace tmtb
