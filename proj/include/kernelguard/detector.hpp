#pragma once

// Test statistic J = λ‖r_u‖² + r_0Kᵀ Σ_r⁻¹ r_0K against the χ²(m) quantile.

#include "kernelguard/stats.hpp"
#include "kernelguard/types.hpp"

namespace kernelguard {

struct ResidualFrame {
    TimeIndex k = 0;
    Vector r_u;
    Vector r_0K;
    double J = 0.0;
    double J_u = 0.0;  // λ‖r_u‖² part
    double J_0 = 0.0;  // Mahalanobis part
    double J_th = 0.0;
    bool alarm = false;
};

class ChiSquareEvaluator {
public:
    ChiSquareEvaluator() = default;

    ChiSquareEvaluator(const Matrix& sigma_r, double lambda, double alpha)
        : lambda_(lambda), j_th_(chi2_threshold(alpha, static_cast<int>(sigma_r.rows()))), llt_(sigma_r) {
        if (!(lambda > 0.0)) throw ValidationError("lambda must be positive", "lambda");
        if (sigma_r.rows() != sigma_r.cols() || llt_.info() != Eigen::Success)
            throw ValidationError("residual covariance must be symmetric positive definite", "Sigma_r");
    }

    ResidualFrame operator()(TimeIndex k, const Vector& r_u, const Vector& r_0K) const {
        require_dims(r_0K.size() == llt_.rows(), "evaluate: r_0K has wrong length");
        ResidualFrame f;
        f.k = k;
        f.r_u = r_u;
        f.r_0K = r_0K;
        f.J_u = lambda_ * r_u.squaredNorm();
        f.J_0 = r_0K.dot(llt_.solve(r_0K));
        f.J = f.J_u + f.J_0;
        f.J_th = j_th_;
        f.alarm = f.J > j_th_;
        return f;
    }

    double threshold() const { return j_th_; }
    double lambda() const { return lambda_; }

private:
    double lambda_ = 1e6;
    double j_th_ = 0.0;
    Eigen::LLT<Matrix> llt_;
};

inline ResidualFrame evaluate(const Vector& r_u, const Vector& r_0K, const Matrix& sigma_r, double lambda, double alpha,
                              TimeIndex k = 0) {
    return ChiSquareEvaluator(sigma_r, lambda, alpha)(k, r_u, r_0K);
}

}  // namespace kernelguard
