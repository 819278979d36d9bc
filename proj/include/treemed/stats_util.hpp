#pragma once

#include <boost/math/distributions/normal.hpp>

#include <algorithm>
#include <cmath>

namespace treemed {

inline double normal_cdf(double z) {
    static const boost::math::normal_distribution<double> d;
    return boost::math::cdf(d, z);
}

inline double normal_quantile(double p) {
    static const boost::math::normal_distribution<double> d;
    return boost::math::quantile(d, p);
}

// Upper tail of chi-square with 1 dof.
inline double chisq1_sf(double stat) {
    if (stat <= 0.0) return 1.0;
    return std::erfc(std::sqrt(stat * 0.5));
}

inline double clamp01(double x, double lo = 0.0, double hi = 1.0) {
    return std::min(hi, std::max(lo, x));
}

}  // namespace treemed
