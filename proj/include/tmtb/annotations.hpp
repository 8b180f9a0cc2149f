#pragma once

#include "tmtb/types.hpp"

#include <filesystem>
#include <string>
#include <vector>

namespace tmtb {

struct Point {
    double x = 0.0;
    double y = 0.0;
    bool operator==(const Point&) const = default;
};

/// Head positions in image pixel coordinates (sub-pixel allowed).
struct PointAnnotations {
    std::vector<Point> points;
    Index height = 0;
    Index width = 0;

    std::size_t count() const { return points.size(); }
    bool operator==(const PointAnnotations&) const = default;
};

/// Throws OutOfBoundsError naming the first point outside [0,w)x[0,h).
void validate(const PointAnnotations& ann);

/// One line of an annotation file.
struct AnnotationRecord {
    std::string image;
    PointAnnotations annotations;
    bool operator==(const AnnotationRecord&) const = default;
};

std::string to_json_line(const AnnotationRecord& rec);
AnnotationRecord parse_json_line(const std::string& line);

std::vector<AnnotationRecord> read_annotations(const std::filesystem::path& path);
void write_annotations(const std::filesystem::path& path, const std::vector<AnnotationRecord>& records);

}  // namespace tmtb
