#pragma once

#include "tmtb/annotations.hpp"
#include "tmtb/types.hpp"

#include <cstdint>
#include <string>
#include <string_view>

namespace tmtb {

enum class BackgroundStyle { plain, gradient, noise, stripes, clutter };

BackgroundStyle parse_background_style(std::string_view name);
std::string_view to_string(BackgroundStyle style);

struct SyntheticScene {
    Image<float> image;  // 3 x (h*w), values are multiples of 1/255
    PointAnnotations annotations;
};

/// Minimum centre-to-centre distance between drawn heads, in pixels.
inline constexpr double kSynthHeadSpacing = 7.0;
/// Heads are kept this far from the image border.
inline constexpr double kSynthBorderMargin = 6.0;

/// Largest head count synth_scene accepts for the given size.
std::size_t synth_capacity(Index height, Index width);

/// Deterministic procedural crowd scene. Every drawn head has exactly one
/// recorded point at its centre.
SyntheticScene synth_scene(std::uint64_t seed, std::size_t n_people, Index height, Index width,
                           BackgroundStyle style);

}  // namespace tmtb
