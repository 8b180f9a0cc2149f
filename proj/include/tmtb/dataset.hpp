#pragma once

#include "tmtb/annotations.hpp"
#include "tmtb/synth.hpp"
#include "tmtb/types.hpp"

#include <filesystem>
#include <optional>
#include <string>
#include <vector>

namespace tmtb {

struct Sample {
    std::string id;
    Image<float> image;
    std::optional<PointAnnotations> points;  // absent for unlabeled images
};

/// On disk: `<dir>/annotations.jsonl`, one record per image, image paths
/// relative to `dir`.
struct Dataset {
    std::vector<Sample> samples;

    std::size_t size() const { return samples.size(); }
    bool empty() const { return samples.empty(); }

    static Dataset load(const std::filesystem::path& dir);
    void save(const std::filesystem::path& dir) const;
};

struct SynthSpec {
    std::size_t n = 400;
    Index height = 256, width = 256;
    std::size_t min_count = 5, max_count = 80;
    std::uint64_t seed = 0;
};

/// Deterministic synthetic dataset; counts uniform in [min_count, max_count],
/// background style cycling with the scene index. Ids are the relative image
/// paths used by save().
Dataset synth_dataset(const SynthSpec& spec);

/// Labeled/unlabeled split: round(fraction * n) labeled images (at least one),
/// chosen by a seeded shuffle. Unlabeled samples lose their points.
struct Split {
    std::vector<Sample> labeled;
    std::vector<Sample> unlabeled;
};
Split split_labeled(const Dataset& data, double labeled_fraction, std::uint64_t seed);

}  // namespace tmtb
