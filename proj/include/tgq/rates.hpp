#pragma once

#include <cmath>
#include <limits>
#include <string>
#include <utility>
#include <vector>

#include "tgq/errors.hpp"

namespace tgq {

/// Least-squares fit of log(defect) against log(hbar).
struct RateFit {
    /// "fit", "exact" (every defect at or below the floor) or "insufficient-data".
    std::string verdict = "insufficient-data";
    double slope = std::numeric_limits<double>::quiet_NaN();
    double intercept = std::numeric_limits<double>::quiet_NaN();
    /// Root-mean-square residual of the fit in log space.
    double residual = std::numeric_limits<double>::quiet_NaN();
    int points = 0;
};

/// Fits defect ~ C hbar^slope. Defects at or below `floor` count as exact and are
/// excluded; fewer than four remaining points give an insufficient-data verdict.
inline RateFit fit_rate(const std::vector<std::pair<double, double>>& points, double floor = 0.0) {
    std::vector<double> lx, ly;
    for (const auto& [h, d] : points) {
        if (!(h > 0.0) || !std::isfinite(h)) throw PreconditionError("fit_rate: hbar values must be positive");
        if (!(d >= 0.0) || !std::isfinite(d)) throw PreconditionError("fit_rate: defects must be finite and nonnegative");
        if (d <= floor) continue;
        lx.push_back(std::log(h));
        ly.push_back(std::log(d));
    }
    RateFit r;
    r.points = static_cast<int>(lx.size());
    if (!points.empty() && lx.empty()) {
        r.verdict = "exact";
        return r;
    }
    if (lx.size() < 4) return r;
    const double n = static_cast<double>(lx.size());
    double mx = 0.0, my = 0.0;
    for (std::size_t i = 0; i < lx.size(); ++i) {
        mx += lx[i];
        my += ly[i];
    }
    mx /= n;
    my /= n;
    double sxx = 0.0, sxy = 0.0;
    for (std::size_t i = 0; i < lx.size(); ++i) {
        sxx += (lx[i] - mx) * (lx[i] - mx);
        sxy += (lx[i] - mx) * (ly[i] - my);
    }
    if (!(sxx > 0.0)) return r;
    r.slope = sxy / sxx;
    r.intercept = my - r.slope * mx;
    double ss = 0.0;
    for (std::size_t i = 0; i < lx.size(); ++i) {
        const double e = ly[i] - (r.intercept + r.slope * lx[i]);
        ss += e * e;
    }
    r.residual = std::sqrt(ss / n);
    r.verdict = "fit";
    return r;
}

/// Geometric list of `count` values from `start` to `end` inclusive.
inline std::vector<double> geometric_list(double start, double end, int count) {
    if (count < 1 || !(start > 0.0) || !(end > 0.0)) throw PreconditionError("geometric_list: bad arguments");
    std::vector<double> v(count);
    for (int k = 0; k < count; ++k)
        v[k] = count == 1 ? start : start * std::pow(end / start, static_cast<double>(k) / (count - 1));
    return v;
}

}  // namespace tgq
