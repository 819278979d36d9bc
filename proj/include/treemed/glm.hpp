#pragma once

#include "treemed/error.hpp"

#include <Eigen/Dense>

#include <cmath>
#include <string>

namespace treemed {

struct LinearFit {
    Eigen::VectorXd coef;
    Eigen::VectorXd fitted;
    Eigen::VectorXd residuals;
    double sigma2_ml = 0.0;  // RSS / n
};

inline void check_full_rank(const Eigen::MatrixXd& X, const char* what) {
    Eigen::ColPivHouseholderQR<Eigen::MatrixXd> qr(X);
    qr.setThreshold(1e-10);
    if (qr.rank() < X.cols()) {
        // name the first column that is linearly dependent on the ones before it
        for (int k = 1; k <= X.cols(); ++k) {
            Eigen::ColPivHouseholderQR<Eigen::MatrixXd> sub(X.leftCols(k));
            sub.setThreshold(1e-10);
            if (sub.rank() < k)
                throw NumericError(std::string(what) + ": singular design, column " +
                                   std::to_string(k - 1) + " is linearly dependent");
        }
        throw NumericError(std::string(what) + ": singular design");
    }
}

inline LinearFit fit_linear(const Eigen::MatrixXd& X, const Eigen::VectorXd& y) {
    if (y.size() != X.rows()) throw NumericError("fit_linear: size mismatch");
    if (X.rows() <= X.cols()) throw NumericError("fit_linear: n must exceed k");
    check_full_rank(X, "fit_linear");
    LinearFit fit;
    fit.coef = X.householderQr().solve(y);
    fit.fitted = X * fit.coef;
    fit.residuals = y - fit.fitted;
    fit.sigma2_ml = fit.residuals.squaredNorm() / static_cast<double>(X.rows());
    return fit;
}

struct LogisticFit {
    Eigen::VectorXd coef;
    Eigen::VectorXd fitted_prob;
    bool converged = false;
    bool separation_flag = false;
    int iterations = 0;
};

// IRLS with expected information; convergence when the max coefficient
// change drops below tol. Separation is flagged when coefficients diverge.
inline LogisticFit fit_logistic(const Eigen::MatrixXd& X, const Eigen::VectorXd& y,
                                double tol = 1e-8, int max_iter = 100) {
    const int n = static_cast<int>(X.rows());
    const int k = static_cast<int>(X.cols());
    if (y.size() != n) throw NumericError("fit_logistic: size mismatch");
    int ones = 0;
    for (int i = 0; i < n; ++i) {
        if (y[i] != 0.0 && y[i] != 1.0)
            throw InputError("fit_logistic: response must be coded {0,1}");
        if (y[i] == 1.0) ++ones;
    }
    if (ones == 0 || ones == n)
        throw NumericError("fit_logistic: response has a single class");
    check_full_rank(X, "fit_logistic");

    LogisticFit fit;
    fit.coef = Eigen::VectorXd::Zero(k);
    Eigen::VectorXd eta(n), p(n), w(n), z(n);
    for (fit.iterations = 1; fit.iterations <= max_iter; ++fit.iterations) {
        eta = X * fit.coef;
        for (int i = 0; i < n; ++i) {
            p[i] = 1.0 / (1.0 + std::exp(-eta[i]));
            w[i] = std::max(p[i] * (1.0 - p[i]), 1e-12);
            z[i] = eta[i] + (y[i] - p[i]) / w[i];
        }
        Eigen::MatrixXd Xw = w.cwiseSqrt().asDiagonal() * X;
        Eigen::VectorXd zw = w.cwiseSqrt().asDiagonal() * z;
        Eigen::VectorXd next = Xw.householderQr().solve(zw);
        double delta = (next - fit.coef).cwiseAbs().maxCoeff();
        fit.coef = next;
        if (fit.coef.cwiseAbs().maxCoeff() > 15.0) {
            fit.separation_flag = true;
        }
        if (delta < tol) {
            fit.converged = true;
            break;
        }
    }
    eta = X * fit.coef;
    fit.fitted_prob.resize(n);
    for (int i = 0; i < n; ++i) fit.fitted_prob[i] = 1.0 / (1.0 + std::exp(-eta[i]));
    return fit;
}

}  // namespace treemed
