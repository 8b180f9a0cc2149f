#pragma once

#include "tmtb/types.hpp"

#include <algorithm>
#include <vector>

namespace tmtb {

/// Count-interval bins. `edges[0]` must be 0: bin 0 holds exactly-zero cells,
/// bin k (1 <= k < edges.size()) holds (edges[k-1], edges[k]], and the last bin
/// holds everything above edges.back(). K = edges.size() + 1.
class BinSpec {
public:
    BinSpec() : BinSpec(std::vector<double>{0.0, 1.0, 2.0, 4.0, 8.0}) {}

    explicit BinSpec(std::vector<double> edges) : edges_(std::move(edges)) {
        require(edges_.size() >= 2, "bin spec needs at least 3 intervals");
        require(edges_.front() == 0.0, "first bin edge must be 0 (zero-count bin)");
        for (std::size_t i = 1; i < edges_.size(); ++i)
            require(edges_[i] > edges_[i - 1], "bin edges must be strictly increasing");
    }

    Index num_bins() const { return static_cast<Index>(edges_.size()) + 1; }
    const std::vector<double>& edges() const { return edges_; }

    int index_of(double count) const {
        if (count <= 0.0) return 0;
        return static_cast<int>(std::lower_bound(edges_.begin(), edges_.end(), count) - edges_.begin());
    }

private:
    std::vector<double> edges_;
};

template <typename Scalar>
IndexRaster bin_index_map(const Raster<Scalar>& counts, const BinSpec& spec) {
    IndexRaster out(counts.rows(), counts.cols());
    for (Index i = 0; i < counts.size(); ++i)
        out.data()[i] = spec.index_of(static_cast<double>(counts.data()[i]));
    return out;
}

template <typename Scalar>
BinProbMap<Scalar> one_hot(const IndexRaster& bins, Index num_bins) {
    BinProbMap<Scalar> out(num_bins, bins.rows(), bins.cols());
    for (Index p = 0; p < bins.size(); ++p) {
        const int k = bins.data()[p];
        require(k >= 0 && k < num_bins, "bin index out of range");
        out.values(k, p) = Scalar(1);
    }
    return out;
}

/// Per-cell argmax; ties resolve to the lowest bin.
template <typename Scalar>
IndexRaster argmax_bins(const BinProbMap<Scalar>& probs) {
    IndexRaster out(probs.height, probs.width);
    for (Index p = 0; p < probs.cells(); ++p) {
        Index best = 0;
        probs.values.col(p).maxCoeff(&best);
        out.data()[p] = static_cast<int>(best);
    }
    return out;
}

}  // namespace tmtb
