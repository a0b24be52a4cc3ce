#pragma once

#include <Eigen/Dense>

#include <cstddef>
#include <filesystem>
#include <optional>
#include <string>

namespace rbm {

using Matrix = Eigen::MatrixXd;
using Vector = Eigen::VectorXd;
using RowMatrix = Eigen::Matrix<double, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>;

/// Tolerance for symmetry / PSD decisions on covariance matrices.
inline constexpr double kPsdTolerance = 1e-10;

/// Lower-triangular C with C * C^T == sigma. The input is symmetrized first.
/// Zero pivots (within kPsdTolerance) are accepted as PSD and give a zero
/// column; a pivot below -kPsdTolerance raises a factorization error naming
/// the leading minor that failed.
Matrix cholesky_factor(const Matrix& sigma);

/// A (mu, Sigma, R) reflected Brownian motion on the nonnegative orthant.
///
/// Construction validates the structural invariants: symmetric PSD sigma,
/// R = I - Q^T with Q substochastic, and R^{-1} existing with nonnegative
/// entries (M-matrix). Stability (R^{-1} mu < 0) is a model property that is
/// reported by check_assumptions() and enforced by the estimator, so that an
/// unstable model can still be loaded and diagnosed.
class NetworkParams {
public:
    static NetworkParams make(Vector mu, const Matrix& sigma, Matrix refl);

    std::size_t dim() const noexcept { return static_cast<std::size_t>(mu_.size()); }
    const Vector& mu() const noexcept { return mu_; }
    const Matrix& sigma() const noexcept { return sigma_; }
    const Matrix& refl() const noexcept { return refl_; }
    const Matrix& refl_inv() const noexcept { return refl_inv_; }
    const Matrix& chol() const noexcept { return chol_; }
    const Matrix& q() const noexcept { return q_; }

    /// R^{-1} mu < 0 entrywise.
    bool is_stable() const;

private:
    NetworkParams() = default;

    Vector mu_;
    Matrix sigma_;
    Matrix refl_;
    Matrix refl_inv_;
    Matrix chol_;
    Matrix q_;
};

/// Symmetric family: unit variances, correlations -(1-beta)/(d-1),
/// reflection off-diagonals -(1-beta)/(d-1), drift -1 in every station
/// unless `drift` is given.
NetworkParams build_symmetric(std::size_t d, double beta, double drift = -1.0);

struct SteadyStateTruth {
    double value;      // beta / 2
    double long_form;  // (1 - (d-2) r + (d-1) r rho) / (2 (1 + r))
};

/// Closed-form stationary mean workload per station of the symmetric
/// family. Requires unit drift -1 (the normalization the formula assumes).
SteadyStateTruth steady_state_truth(const NetworkParams& params, double beta);

struct UniformityConstants {
    double beta0 = 0.5;
    double kappa0 = 1.0;
    double delta0 = 1.0;
    double b0 = 1.0;
    double lipschitz_f = 1.0;

    void validate() const;
    double b1() const { return kappa0 / beta0; }
};

/// Constants that hold exactly for build_symmetric(d, beta) with unit drift:
/// 1^T Q^n = (1-beta)^n 1^T, R^{-1} mu = -(1/beta) 1, sigma_i^2 = 1.
UniformityConstants symmetric_constants(double beta);

struct AssumptionReport {
    bool a1_ok = false;
    bool a2_ok = false;
    bool a3_ok = false;
    /// max over n of ||1^T Q^n||_inf / (kappa0 (1-beta0)^n)
    double a1_margin = 0.0;
    /// Q has constant column sums c <= (1 - beta0) and kappa0 >= 1, so the
    /// bound holds for every n, not only the checked ones.
    bool a1_certified_all_n = false;
    int a1_checked_powers = 0;
    /// max_i (R^{-1} mu)_i + delta0
    double a2_margin = 0.0;
    double a3_min = 0.0;
    double a3_max = 0.0;
    /// ||R^{-1} 1||_inf, to compare against b1 = kappa0 / beta0.
    double refl_inv_row_norm = 0.0;

    bool all_ok() const { return a1_ok && a2_ok && a3_ok; }
    std::string to_text(const UniformityConstants& constants) const;
};

inline constexpr int kDefaultPowerDepth = 64;

AssumptionReport check_assumptions(const NetworkParams& params,
                                   const UniformityConstants& constants,
                                   int n_max = kDefaultPowerDepth);

/// Model loaded from a key=value text file.
///
///     # symmetric family
///     d = 10
///     beta = 0.8
///     mu = -1            # optional scalar or d values
///
///     # explicit matrices (row-major, whitespace/comma/semicolon separated)
///     d = 2
///     mu = -1 -1
///     sigma = 1 0.5; 0.5 1
///     refl = 1 -0.2; -0.2 1
struct LoadedModel {
    std::optional<double> beta;  // set for the symmetric family
    NetworkParams params;
};

LoadedModel parse_model(const std::string& text);
LoadedModel load_model(const std::filesystem::path& path);

}  // namespace rbm
