#pragma once

#include "treemed/error.hpp"
#include "treemed/parallel.hpp"
#include "treemed/stats_util.hpp"

#include <algorithm>
#include <cmath>
#include <cstddef>
#include <string>
#include <vector>

namespace treemed {

enum class PiMethod { JinCai, Storey };

// Estimated shares of the three component nulls (conditioned on the overall
// null) plus the two marginal null proportions they were built from.
struct NullProportions {
    double pi00 = 1.0;
    double pi10 = 0.0;
    double pi01 = 0.0;
    double pi0_alpha = 1.0;
    double pi0_beta = 1.0;
    PiMethod method = PiMethod::JinCai;
};

inline double z_from_p(double p, int sign) {
    if (p <= 0.0) p = 1e-300;  // permutation zeros are clamped upstream; belt only
    if (p > 1.0) throw InputError("z_from_p: p must be in (0,1]");
    double z = normal_quantile(1.0 - p / 2.0);
    return (sign < 0 ? -1.0 : 1.0) * z;
}

// Characteristic-function estimator of the proportion of true nulls among
// z-scores: psi(t) = int_{-1}^{1} (1-|xi|) Re(phi_J(t xi)) exp(t^2 xi^2 / 2) dxi,
// minimized over t in [0, sqrt(log J)]. Trapezoid grid; the cosine sums use
// the addition recurrence over the uniform xi grid, and the integrand is
// even in xi so only [0,1] is evaluated.
inline double jin_cai_pi0(const std::vector<double>& z, int t_points = 101,
                          int xi_points = 201) {
    const std::size_t j_count = z.size();
    if (j_count == 0) throw InputError("jin_cai_pi0: empty input");
    for (double v : z)
        if (!std::isfinite(v)) throw NumericError("jin_cai_pi0: non-finite z-score");

    const int half = xi_points / 2 + 1;  // xi grid on [0,1], 0 included
    const double dxi = 1.0 / static_cast<double>(half - 1);
    const double t_max = std::sqrt(std::log(std::max<double>(j_count, 2)));
    const double dt = t_max / static_cast<double>(t_points - 1);

    std::vector<double> psi(t_points);
    parallel_for(static_cast<std::size_t>(t_points), [&](std::size_t ti) {
        double t = dt * static_cast<double>(ti);
        // S[k] = sum_j cos(t * xi_k * z_j)
        std::vector<double> s(half, 0.0);
        for (double zj : z) {
            double step = t * dxi * zj;
            double c1 = 1.0;              // cos(0)
            double c2 = std::cos(step);   // cos(step)
            double two_cos = 2.0 * c2;
            s[0] += c1;
            if (half > 1) s[1] += c2;
            for (int k = 2; k < half; ++k) {
                double c3 = two_cos * c2 - c1;
                s[k] += c3;
                c1 = c2;
                c2 = c3;
            }
        }
        double acc = 0.0;
        for (int k = 0; k < half; ++k) {
            double xi = dxi * static_cast<double>(k);
            double w = (k == 0 || k == half - 1) ? 0.5 : 1.0;
            double integrand = (1.0 - xi) * (s[k] / static_cast<double>(j_count)) *
                               std::exp(0.5 * t * t * xi * xi);
            acc += w * integrand;
        }
        // x2: even integrand over [-1,1]
        psi[ti] = 2.0 * dxi * acc;
    });
    double best = psi[0];
    for (double v : psi) best = std::min(best, v);
    return clamp01(best, 0.01, 1.0);
}

inline double storey_pi0(const std::vector<double>& p, double lambda = 0.5) {
    if (p.empty()) throw InputError("storey_pi0: empty input");
    if (lambda <= 0.0 || lambda >= 1.0) throw InputError("storey_pi0: lambda must be in (0,1)");
    std::size_t tail = 0;
    for (double v : p)
        if (v > lambda) ++tail;
    double est = static_cast<double>(tail) /
                 ((1.0 - lambda) * static_cast<double>(p.size()));
    return clamp01(est, 0.01, 1.0);
}

inline NullProportions compose_jin_cai(double pi0_alpha, double pi0_beta) {
    NullProportions out;
    out.method = PiMethod::JinCai;
    out.pi0_alpha = clamp01(pi0_alpha);
    out.pi0_beta = clamp01(pi0_beta);
    double pi0 = out.pi0_alpha + out.pi0_beta - out.pi0_alpha * out.pi0_beta;
    if (pi0 <= 0.0) pi0 = 1e-12;
    out.pi00 = out.pi0_alpha * out.pi0_beta / pi0;
    out.pi10 = (1.0 - out.pi0_alpha) * out.pi0_beta / pi0;
    out.pi01 = out.pi0_alpha * (1.0 - out.pi0_beta) / pi0;
    return out;
}

// Storey variant: pi00 from the joint tail count, then
// pi01 = pi0_alpha - pi00 and pi10 = pi0_beta - pi00, clamped and
// renormalized to sum 1.
inline NullProportions compose_storey(const std::vector<double>& p_alpha,
                                      const std::vector<double>& p_beta,
                                      double lambda = 0.5) {
    if (p_alpha.size() != p_beta.size() || p_alpha.empty())
        throw InputError("compose_storey: mismatched or empty inputs");
    NullProportions out;
    out.method = PiMethod::Storey;
    out.pi0_alpha = storey_pi0(p_alpha, lambda);
    out.pi0_beta = storey_pi0(p_beta, lambda);
    std::size_t joint = 0;
    for (std::size_t j = 0; j < p_alpha.size(); ++j)
        if (p_alpha[j] > lambda && p_beta[j] > lambda) ++joint;
    double pi00 = static_cast<double>(joint) /
                  ((1.0 - lambda) * (1.0 - lambda) * static_cast<double>(p_alpha.size()));
    pi00 = clamp01(pi00, 0.0, 1.0);
    double pi01 = std::max(out.pi0_alpha - pi00, 0.0);
    double pi10 = std::max(out.pi0_beta - pi00, 0.0);
    double total = pi00 + pi01 + pi10;
    if (total <= 0.0) {
        out.pi00 = 1.0;
        out.pi10 = out.pi01 = 0.0;
    } else {
        out.pi00 = pi00 / total;
        out.pi10 = pi10 / total;
        out.pi01 = pi01 / total;
    }
    return out;
}

// Piecewise-constant nonincreasing density on [0,1]: piece k covers
// (knots[k-1], knots[k]] (knots[-1] == 0) with height heights[k];
// knots.back() == 1.
struct GrenanderDensity {
    std::vector<double> knots;
    std::vector<double> heights;

    double density(double p) const {
        for (std::size_t k = 0; k < knots.size(); ++k)
            if (p <= knots[k] + 1e-15) return heights[k];
        return heights.back();
    }

    double cdf(double p) const {
        if (p <= 0.0) return 0.0;
        double acc = 0.0, left = 0.0;
        for (std::size_t k = 0; k < knots.size(); ++k) {
            double right = std::min(p, knots[k]);
            if (right > left) acc += heights[k] * (right - left);
            if (p <= knots[k]) break;
            left = knots[k];
        }
        return std::min(acc, 1.0);
    }
};

// Left derivative of the least concave majorant of the empirical CDF,
// computed with an upper-hull (monotone chain) sweep over the points
// (0,0), (p_(i), i/J), (1,1).
inline GrenanderDensity grenander(std::vector<double> p) {
    if (p.empty()) throw InputError("grenander: empty input");
    std::sort(p.begin(), p.end());
    if (p.front() <= 0.0 || p.back() > 1.0 + 1e-12)
        throw InputError("grenander: p-values must be in (0,1]");
    const std::size_t j_count = p.size();

    std::vector<double> xs{0.0}, ys{0.0};
    for (std::size_t i = 0; i < j_count; ++i) {
        double x = p[i];
        double y = static_cast<double>(i + 1) / static_cast<double>(j_count);
        if (!xs.empty() && xs.back() == x) {
            ys.back() = y;  // ties: keep the topmost ECDF value
        } else {
            xs.push_back(x);
            ys.push_back(y);
        }
    }
    if (xs.back() < 1.0) {
        xs.push_back(1.0);
        ys.push_back(1.0);
    }

    // upper concave hull
    std::vector<std::size_t> hull;
    for (std::size_t i = 0; i < xs.size(); ++i) {
        while (hull.size() >= 2) {
            std::size_t a = hull[hull.size() - 2], b = hull[hull.size() - 1];
            double cross = (xs[b] - xs[a]) * (ys[i] - ys[a]) -
                           (ys[b] - ys[a]) * (xs[i] - xs[a]);
            if (cross >= 0.0)
                hull.pop_back();  // b below or on chord a->i
            else
                break;
        }
        hull.push_back(i);
    }

    GrenanderDensity out;
    for (std::size_t k = 1; k < hull.size(); ++k) {
        std::size_t a = hull[k - 1], b = hull[k];
        double slope = (ys[b] - ys[a]) / (xs[b] - xs[a]);
        out.knots.push_back(xs[b]);
        out.heights.push_back(slope);
    }
    return out;
}

enum class AltSide { Alpha, Beta };

// CDF of the alternative-component p-value density, recovered by peeling the
// null (uniform) mass off the Grenander estimate:
// f_alt(p) = max{(f(p) - pi00 - pi_other) / pi_self, 0}, then the cumulative
// integral normalized by its total mass. A vanishing weight short-circuits
// to 1 (the term degrades to the joint-significance contribution).
inline double alt_cdf(double p_eval, const GrenanderDensity& density,
                      const NullProportions& props, AltSide which) {
    double self_w = which == AltSide::Alpha ? props.pi10 : props.pi01;
    double other_w = which == AltSide::Alpha ? props.pi01 : props.pi10;
    if (self_w < 0.01) return 1.0;
    p_eval = clamp01(p_eval);

    double mass = 0.0, part = 0.0, left = 0.0;
    for (std::size_t k = 0; k < density.knots.size(); ++k) {
        double h = std::max((density.heights[k] - props.pi00 - other_w) / self_w, 0.0);
        double right = density.knots[k];
        mass += h * (right - left);
        double upto = std::min(p_eval, right);
        if (upto > left) part += h * (upto - left);
        left = right;
    }
    if (mass <= 0.0) return 1.0;
    return clamp01(part / mass);
}

inline double mixture_pvalue(double p_max, const NullProportions& props, double f_alpha_alt,
                             double f_beta_alt) {
    double v = props.pi00 * p_max * p_max + props.pi10 * p_max * f_alpha_alt +
               props.pi01 * p_max * f_beta_alt;
    return std::min(std::max(v, 1e-300), 1.0);
}

inline double simes_global(const std::vector<double>& p_med) {
    if (p_med.empty()) throw InputError("simes_global: empty input");
    std::vector<double> p = p_med;
    std::sort(p.begin(), p.end());
    const double j_count = static_cast<double>(p.size());
    double best = 1.0;
    for (std::size_t i = 0; i < p.size(); ++i)
        best = std::min(best, j_count * p[i] / static_cast<double>(i + 1));
    return std::min(best, 1.0);
}

struct BhResult {
    std::vector<double> q_values;    // aligned with the input
    std::vector<std::size_t> selected;  // indices with q_value <= q
};

inline BhResult bh_select(const std::vector<double>& p_med, double q) {
    if (q <= 0.0 || q >= 1.0) throw InputError("bh_select: q must be in (0,1)");
    const std::size_t j_count = p_med.size();
    BhResult out;
    out.q_values.assign(j_count, 1.0);
    if (j_count == 0) return out;

    std::vector<std::size_t> idx(j_count);
    for (std::size_t i = 0; i < j_count; ++i) idx[i] = i;
    std::sort(idx.begin(), idx.end(),
              [&](std::size_t a, std::size_t b) { return p_med[a] < p_med[b]; });

    double running = 1.0;
    for (std::size_t r = j_count; r-- > 0;) {
        double adj = static_cast<double>(j_count) * p_med[idx[r]] / static_cast<double>(r + 1);
        running = std::min(running, adj);
        out.q_values[idx[r]] = running;
    }
    for (std::size_t i = 0; i < j_count; ++i)
        if (out.q_values[i] <= q) out.selected.push_back(i);
    std::sort(out.selected.begin(), out.selected.end());
    return out;
}

}  // namespace treemed
