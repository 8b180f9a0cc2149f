#pragma once

// Central finite-difference checks used by the unit and acceptance suites.

#include "tmtb/nn.hpp"

#include <algorithm>
#include <functional>
#include <random>
#include <string>
#include <vector>

namespace tmtb::testing {

struct GradCheckResult {
    std::string worst_name;
    double worst_rel_error = 0.0;
    int checked_tensors = 0;
};

inline double relative_error(const Eigen::VectorXd& analytic, const Eigen::VectorXd& numeric) {
    const double scale = std::max({analytic.norm(), numeric.norm(), 1e-10});
    return (analytic - numeric).norm() / scale;
}

/// Compares `analytic` against central differences of `loss` with respect to
/// up to `max_entries` randomly chosen entries of `x`.
inline double check_tensor(Mat<double>& x, const Mat<double>& analytic, const std::function<double()>& loss,
                           std::mt19937_64& rng, int max_entries = 24, double h = 1e-6) {
    std::vector<Index> idx(static_cast<std::size_t>(x.size()));
    for (Index i = 0; i < x.size(); ++i) idx[static_cast<std::size_t>(i)] = i;
    std::shuffle(idx.begin(), idx.end(), rng);
    idx.resize(std::min<std::size_t>(idx.size(), static_cast<std::size_t>(max_entries)));
    Eigen::VectorXd a(static_cast<Index>(idx.size())), n(static_cast<Index>(idx.size()));
    for (std::size_t j = 0; j < idx.size(); ++j) {
        double& v = x.data()[idx[j]];
        const double orig = v;
        v = orig + h;
        const double lp = loss();
        v = orig - h;
        const double lm = loss();
        v = orig;
        n(static_cast<Index>(j)) = (lp - lm) / (2.0 * h);
        a(static_cast<Index>(j)) = analytic.data()[idx[j]];
    }
    return relative_error(a, n);
}

/// Checks every trainable tensor of `module`. `analytic_grad` must fill a
/// zero-initialised gradient module for the scalar returned by `loss`.
template <typename Module>
GradCheckResult check_module_gradients(Module& module, const std::function<double()>& loss,
                                       const std::function<void(Module&)>& analytic_grad, std::uint64_t seed = 7,
                                       int max_entries = 24) {
    Module grad = nn::zeros_like(module);
    analytic_grad(grad);
    auto params = nn::parameter_list(module);
    auto grads = nn::parameter_list(grad);
    std::mt19937_64 rng(seed);
    GradCheckResult res;
    for (std::size_t i = 0; i < params.size(); ++i) {
        if (!params[i].trainable) continue;
        const double err = check_tensor(*params[i].value, *grads[i].value, loss, rng, max_entries);
        ++res.checked_tensors;
        if (err >= res.worst_rel_error) {
            res.worst_rel_error = err;
            res.worst_name = params[i].name;
        }
    }
    return res;
}

inline Mat<double> random_mat(Index rows, Index cols, std::mt19937_64& rng, double scale = 1.0) {
    std::normal_distribution<double> n(0.0, scale);
    Mat<double> m(rows, cols);
    for (Index i = 0; i < m.size(); ++i) m.data()[i] = n(rng);
    return m;
}

}  // namespace tmtb::testing
