#pragma once

#include "treemed/error.hpp"
#include "treemed/rng.hpp"
#include "treemed/score_test.hpp"

#include <Eigen/Dense>

#include <algorithm>
#include <cstdint>
#include <utility>

namespace treemed {

struct PermConfig {
    long max_perms = 100000;
    long target_exceedances = 50;  // h: stop once this many permuted stats >= observed
    long batch = 500;
    std::uint64_t seed = 0;

    void validate() const {
        if (target_exceedances < 10) throw InputError("perm config: h must be >= 10");
        if (max_perms < 1000) throw InputError("perm config: max_perms must be >= 1000");
        if (batch < 1 || batch > max_perms)
            throw InputError("perm config: batch must be in [1, max_perms]");
    }
};

struct PermResult {
    double p = 1.0;
    long perms_used = 0;
};

enum class PermKind : std::uint64_t { Alpha = 1, Beta = 2 };

namespace detail {

template <class Rng>
inline void shuffle_vector(Eigen::VectorXd& v, Rng& rng) {
    for (int i = static_cast<int>(v.size()) - 1; i > 0; --i) {
        int j = static_cast<int>(rng() % static_cast<std::uint64_t>(i + 1));
        std::swap(v[i], v[j]);
    }
}

}  // namespace detail

// Besag-Clifford sequential scheme: draw permuted statistics in batches,
// stop once the exceedance count reaches h or the budget is spent.
// Exceedance is >= so ties count against significance. Each batch gets its
// own substream derived from (seed, stream_a, stream_b, batch index), so the
// result is a pure function of data, seed, and config.
template <class Resample>
PermResult perm_pvalue(double observed_stat, Resample&& resample, const PermConfig& config,
                       std::uint64_t stream_a = 0, std::uint64_t stream_b = 0) {
    config.validate();
    long drawn = 0;
    long exceed = 0;
    std::uint64_t batch_idx = 0;
    while (drawn < config.max_perms && exceed < config.target_exceedances) {
        SplitMix64 rng = substream(config.seed, stream_a, stream_b, batch_idx);
        long bsize = std::min(config.batch, config.max_perms - drawn);
        for (long i = 0; i < bsize; ++i)
            if (resample(rng) >= observed_stat) ++exceed;
        drawn += bsize;
        ++batch_idx;
    }
    PermResult out;
    out.perms_used = drawn;
    out.p = static_cast<double>(1 + exceed) / static_cast<double>(1 + drawn);
    return out;
}

// Freedman-Lane resampler for the alpha test: the log-ratio is regressed on
// the confounders, the residuals are permuted and added back to the fit, and
// the score statistic against the original (X, T) is recomputed. With
// intercept-only X this reduces to permuting the log-ratio against T.
class AlphaResampler {
public:
    AlphaResampler(const AlphaScoreContext& ctx, const Eigen::VectorXd& logratio)
        : ctx_(ctx),
          null_resid_(logratio - ctx.null_q() * (ctx.null_q().transpose() * logratio)) {}

    template <class Rng>
    double operator()(Rng& rng) {
        buf_ = null_resid_;
        detail::shuffle_vector(buf_, rng);
        double score = ctx_.treatment_perp().dot(buf_);
        Eigen::VectorXd rm = buf_ - ctx_.null_q() * (ctx_.null_q().transpose() * buf_);
        double sigma2 = rm.squaredNorm() / static_cast<double>(ctx_.n());
        if (sigma2 < 1e-300) return 0.0;
        return score * score / (sigma2 * ctx_.treatment_ss());
    }

private:
    const AlphaScoreContext& ctx_;
    Eigen::VectorXd null_resid_;
    Eigen::VectorXd buf_;
};

// Freedman-Lane on the mediator direction for the beta test: residuals of
// logratio ~ (X, T) are permuted and added back; the outcome is never
// permuted, preserving its association with (X, T) under the beta null.
class BetaResampler {
public:
    BetaResampler(const BetaScoreContext& ctx, const Eigen::VectorXd& logratio)
        : ctx_(ctx),
          null_resid_(logratio - ctx.null_q() * (ctx.null_q().transpose() * logratio)),
          fitted_(logratio - null_resid_) {}

    template <class Rng>
    double operator()(Rng& rng) {
        buf_ = null_resid_;
        detail::shuffle_vector(buf_, rng);
        if (ctx_.kind() == OutcomeKind::Continuous) {
            double u = ctx_.null_residuals().dot(buf_);
            Eigen::VectorXd lm = buf_ - ctx_.null_q() * (ctx_.null_q().transpose() * buf_);
            double v = ctx_.sigma2() * lm.squaredNorm();
            if (v < 1e-300) return 0.0;
            return u * u / v;
        }
        Eigen::VectorXd lstar = fitted_ + buf_;
        double u = lstar.dot(ctx_.null_residuals());
        Eigen::VectorXd wl = ctx_.weights().asDiagonal() * lstar;
        Eigen::VectorXd s = ctx_.null_design().transpose() * wl;
        double v = lstar.dot(wl) - s.dot(ctx_.info_llt().solve(s));
        if (v < 1e-300) return 0.0;
        return u * u / v;
    }

private:
    const BetaScoreContext& ctx_;
    Eigen::VectorXd null_resid_;
    Eigen::VectorXd fitted_;
    Eigen::VectorXd buf_;
};

}  // namespace treemed
