#pragma once

#include <Eigen/Dense>

#include <cstdint>
#include <stdexcept>
#include <string>

namespace tmtb {

using Index = Eigen::Index;

template <typename Scalar>
using Mat = Eigen::Matrix<Scalar, Eigen::Dynamic, Eigen::Dynamic>;

template <typename Scalar>
using Vec = Eigen::Matrix<Scalar, Eigen::Dynamic, 1>;

/// Row-major 2-D grid. `data()[y * cols() + x]` addresses cell (y, x), which
/// matches the token order used by Tensor columns.
template <typename Scalar>
using Raster = Eigen::Matrix<Scalar, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>;

using IndexRaster = Raster<int>;

/// Channel-first dense grid. Column `y * width + x` holds the channel vector
/// of cell (y, x). Used for images (3 channels, stride 1), backbone features
/// and per-cell bin distributions.
template <typename Scalar>
struct Tensor {
    Mat<Scalar> values;
    Index height = 0;
    Index width = 0;
    Index stride = 1;

    Tensor() = default;
    Tensor(Index channels, Index h, Index w, Index s = 1)
        : values(Mat<Scalar>::Zero(channels, h * w)), height(h), width(w), stride(s) {}

    Index channels() const { return values.rows(); }
    Index cells() const { return height * width; }

    Scalar& operator()(Index c, Index y, Index x) { return values(c, y * width + x); }
    Scalar operator()(Index c, Index y, Index x) const { return values(c, y * width + x); }

    template <typename Other>
    Tensor<Other> cast() const {
        Tensor<Other> out;
        out.values = values.template cast<Other>();
        out.height = height;
        out.width = width;
        out.stride = stride;
        return out;
    }
};

template <typename Scalar>
using Image = Tensor<Scalar>;

template <typename Scalar>
using FeatureMap = Tensor<Scalar>;

/// Per-cell probability vectors over the K count-interval bins.
template <typename Scalar>
using BinProbMap = Tensor<Scalar>;

template <typename Scalar>
struct DensityMap {
    Raster<Scalar> values;
    Index stride = 1;

    DensityMap() = default;
    DensityMap(Index h, Index w, Index s) : values(Raster<Scalar>::Zero(h, w)), stride(s) {}
    explicit DensityMap(Raster<Scalar> v, Index s = 1) : values(std::move(v)), stride(s) {}

    Index height() const { return values.rows(); }
    Index width() const { return values.cols(); }
    Scalar count() const { return values.sum(); }

    template <typename Other>
    DensityMap<Other> cast() const {
        return DensityMap<Other>(values.template cast<Other>(), stride);
    }
};

/// Binary grid stored in the scalar type so it composes with density arithmetic.
template <typename Scalar>
using ForegroundMask = Raster<Scalar>;

/// Per-cell weights in [0, 1] applied to the inpainting consistency loss.
template <typename Scalar>
using WeightedMask = Raster<Scalar>;

class Error : public std::runtime_error {
public:
    using std::runtime_error::runtime_error;
};

class ShapeError : public Error {
public:
    using Error::Error;
};

class OutOfBoundsError : public Error {
public:
    using Error::Error;
};

inline void require(bool cond, const std::string& msg) {
    if (!cond) throw Error(msg);
}

inline void require_shape(bool cond, const std::string& msg) {
    if (!cond) throw ShapeError(msg);
}

}  // namespace tmtb
