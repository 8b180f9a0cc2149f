#pragma once

#include "tmtb/types.hpp"

#include <cmath>
#include <span>

namespace tmtb {

struct CountErrors {
    double mae = 0.0;
    double rmse = 0.0;
};

inline CountErrors count_errors(std::span<const double> gt, std::span<const double> pred) {
    require(!gt.empty(), "count metrics need at least one image");
    require(gt.size() == pred.size(), "ground-truth and predicted count lists differ in length");
    double abs_sum = 0.0, sq_sum = 0.0;
    for (std::size_t i = 0; i < gt.size(); ++i) {
        const double d = gt[i] - pred[i];
        abs_sum += std::abs(d);
        sq_sum += d * d;
    }
    const double n = static_cast<double>(gt.size());
    return {abs_sum / n, std::sqrt(sq_sum / n)};
}

inline double mae(std::span<const double> gt, std::span<const double> pred) { return count_errors(gt, pred).mae; }
inline double rmse(std::span<const double> gt, std::span<const double> pred) { return count_errors(gt, pred).rmse; }

}  // namespace tmtb
