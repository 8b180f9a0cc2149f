#include "tmtb/annotations.hpp"

#include <json.hpp>

#include <fstream>
#include <sstream>

namespace tmtb {

using nlohmann::json;

void validate(const PointAnnotations& ann) {
    require(ann.height > 0 && ann.width > 0, "annotation image size must be positive");
    for (std::size_t i = 0; i < ann.points.size(); ++i) {
        const auto& p = ann.points[i];
        if (!(p.x >= 0.0 && p.x < static_cast<double>(ann.width) && p.y >= 0.0 &&
              p.y < static_cast<double>(ann.height))) {
            std::ostringstream os;
            os << "point " << i << " (" << p.x << ", " << p.y << ") lies outside the "
               << ann.width << "x" << ann.height << " image";
            throw OutOfBoundsError(os.str());
        }
    }
}

std::string to_json_line(const AnnotationRecord& rec) {
    json pts = json::array();
    for (const auto& p : rec.annotations.points) pts.push_back({p.x, p.y});
    json j = {{"image", rec.image},
              {"width", rec.annotations.width},
              {"height", rec.annotations.height},
              {"points", std::move(pts)}};
    return j.dump();
}

AnnotationRecord parse_json_line(const std::string& line) {
    json j;
    try {
        j = json::parse(line);
    } catch (const json::parse_error& e) {
        throw Error(std::string("malformed annotation record: ") + e.what());
    }
    AnnotationRecord rec;
    try {
        rec.image = j.at("image").get<std::string>();
        rec.annotations.width = j.at("width").get<Index>();
        rec.annotations.height = j.at("height").get<Index>();
        for (const auto& p : j.at("points")) {
            require(p.is_array() && p.size() == 2, "annotation point must be [x, y]");
            rec.annotations.points.push_back({p[0].get<double>(), p[1].get<double>()});
        }
    } catch (const json::exception& e) {
        throw Error(std::string("malformed annotation record: ") + e.what());
    }
    validate(rec.annotations);
    return rec;
}

std::vector<AnnotationRecord> read_annotations(const std::filesystem::path& path) {
    std::ifstream in(path);
    require(static_cast<bool>(in), "cannot open annotation file " + path.string());
    std::vector<AnnotationRecord> out;
    std::string line;
    while (std::getline(in, line)) {
        if (line.empty()) continue;
        out.push_back(parse_json_line(line));
    }
    return out;
}

void write_annotations(const std::filesystem::path& path, const std::vector<AnnotationRecord>& records) {
    std::ofstream out(path);
    require(static_cast<bool>(out), "cannot write annotation file " + path.string());
    for (const auto& r : records) out << to_json_line(r) << '\n';
}

}  // namespace tmtb
