#include "rbm/params.hpp"

#include "rbm/errors.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <map>
#include <sstream>
#include <vector>

namespace rbm {

namespace {

constexpr double kEntryTolerance = 1e-12;

std::string fmt(double v) {
    std::ostringstream os;
    os.precision(12);
    os << v;
    return os.str();
}

}  // namespace

Matrix cholesky_factor(const Matrix& sigma) {
    if (sigma.rows() != sigma.cols() || sigma.rows() == 0) {
        throw Error(ErrorKind::shape, "covariance must be a non-empty square matrix");
    }
    const Matrix sym = 0.5 * (sigma + sigma.transpose());
    const Eigen::Index n = sym.rows();
    Matrix c = Matrix::Zero(n, n);
    for (Eigen::Index j = 0; j < n; ++j) {
        double pivot = sym(j, j) - c.row(j).head(j).squaredNorm();
        if (pivot < -kPsdTolerance) {
            throw Error(ErrorKind::factorization,
                        "leading minor of order " + std::to_string(j + 1) +
                            " is negative (pivot " + fmt(pivot) + "); matrix is not PSD");
        }
        if (pivot <= kPsdTolerance) {
            // Semidefinite direction: column j stays zero, but the remaining
            // entries of row/column j must then be consistent with it.
            for (Eigen::Index i = j + 1; i < n; ++i) {
                const double resid = sym(i, j) - c.row(i).head(j).dot(c.row(j).head(j));
                if (std::abs(resid) > std::sqrt(kPsdTolerance)) {
                    throw Error(ErrorKind::factorization,
                                "leading minor of order " + std::to_string(j + 1) +
                                    " is singular but row " + std::to_string(i + 1) +
                                    " couples to it; matrix is not PSD");
                }
            }
            continue;
        }
        const double cjj = std::sqrt(pivot);
        c(j, j) = cjj;
        for (Eigen::Index i = j + 1; i < n; ++i) {
            c(i, j) = (sym(i, j) - c.row(i).head(j).dot(c.row(j).head(j))) / cjj;
        }
    }
    return c;
}

NetworkParams NetworkParams::make(Vector mu, const Matrix& sigma, Matrix refl) {
    const Eigen::Index d = mu.size();
    if (d < 1) throw Error(ErrorKind::dimension, "dimension must be at least 1");
    if (sigma.rows() != d || sigma.cols() != d) {
        throw Error(ErrorKind::shape, "sigma must be " + std::to_string(d) + "x" + std::to_string(d));
    }
    if (refl.rows() != d || refl.cols() != d) {
        throw Error(ErrorKind::shape, "reflection matrix must be " + std::to_string(d) + "x" +
                                          std::to_string(d));
    }
    if (!mu.allFinite() || !sigma.allFinite() || !refl.allFinite()) {
        throw Error(ErrorKind::parameter, "non-finite model entries");
    }
    if ((sigma - sigma.transpose()).cwiseAbs().maxCoeff() > kPsdTolerance) {
        throw Error(ErrorKind::parameter, "sigma is not symmetric");
    }

    NetworkParams p;
    p.mu_ = std::move(mu);
    p.sigma_ = 0.5 * (sigma + sigma.transpose());
    p.chol_ = cholesky_factor(p.sigma_);

    p.q_ = (Matrix::Identity(d, d) - refl).transpose();
    if (p.q_.minCoeff() < -kEntryTolerance) {
        throw Error(ErrorKind::m_matrix, "Q = (I - R)^T has a negative entry");
    }
    if (p.q_.rowwise().sum().maxCoeff() > 1.0 + kEntryTolerance) {
        throw Error(ErrorKind::m_matrix, "Q = (I - R)^T is not substochastic (row sum > 1)");
    }

    Eigen::FullPivLU<Matrix> lu(refl);
    if (!lu.isInvertible()) throw Error(ErrorKind::m_matrix, "reflection matrix is singular");
    p.refl_inv_ = lu.inverse();
    if (p.refl_inv_.minCoeff() < -kEntryTolerance) {
        throw Error(ErrorKind::m_matrix, "R^{-1} has a negative entry (min " +
                                             fmt(p.refl_inv_.minCoeff()) + ")");
    }
    if (p.refl_inv_.diagonal().minCoeff() < 1.0 - kEntryTolerance) {
        throw Error(ErrorKind::m_matrix, "R^{-1} has a diagonal entry below 1");
    }
    p.refl_ = std::move(refl);
    return p;
}

bool NetworkParams::is_stable() const {
    return (refl_inv_ * mu_).maxCoeff() < 0.0;
}

NetworkParams build_symmetric(std::size_t d, double beta, double drift) {
    if (d < 2) throw Error(ErrorKind::dimension, "symmetric family needs d >= 2");
    if (!(beta > 0.0 && beta < 1.0)) {
        throw Error(ErrorKind::parameter, "beta must lie in (0, 1), got " + fmt(beta));
    }
    const auto n = static_cast<Eigen::Index>(d);
    const double r = (1.0 - beta) / static_cast<double>(d - 1);
    const double rho = -r;

    Matrix sigma = Matrix::Constant(n, n, rho);
    sigma.diagonal().setOnes();
    Matrix refl = Matrix::Constant(n, n, -r);
    refl.diagonal().setOnes();
    return NetworkParams::make(Vector::Constant(n, drift), sigma, std::move(refl));
}

SteadyStateTruth steady_state_truth(const NetworkParams& params, double beta) {
    const std::size_t d = params.dim();
    if (d < 2 || !(beta > 0.0 && beta < 1.0)) {
        throw Error(ErrorKind::parameter, "steady-state truth needs d >= 2 and beta in (0, 1)");
    }
    const auto n = static_cast<Eigen::Index>(d);
    const double r_expected = (1.0 - beta) / static_cast<double>(d - 1);
    const double r = -params.refl()(0, 1);
    const double rho = params.sigma()(0, 1);

    Matrix sigma = Matrix::Constant(n, n, -r_expected);
    sigma.diagonal().setOnes();
    Matrix refl = Matrix::Constant(n, n, -r_expected);
    refl.diagonal().setOnes();
    const bool symmetric_family = (params.sigma() - sigma).cwiseAbs().maxCoeff() <= 1e-12 &&
                                  (params.refl() - refl).cwiseAbs().maxCoeff() <= 1e-12 &&
                                  (params.mu().array() + 1.0).abs().maxCoeff() <= 1e-12;
    if (!symmetric_family) {
        throw Error(ErrorKind::parameter,
                    "closed-form truth only applies to the symmetric family with drift -1");
    }

    const double dd = static_cast<double>(d);
    SteadyStateTruth truth;
    truth.value = beta / 2.0;
    truth.long_form = (1.0 - (dd - 2.0) * r + (dd - 1.0) * r * rho) / (2.0 * (1.0 + r));
    if (std::abs(truth.value - truth.long_form) > 1e-12) {
        throw Error(ErrorKind::parameter, "closed-form identity mismatch: " + fmt(truth.value) +
                                              " vs " + fmt(truth.long_form));
    }
    return truth;
}

void UniformityConstants::validate() const {
    if (!(beta0 > 0.0 && beta0 < 1.0)) throw Error(ErrorKind::parameter, "beta0 must lie in (0, 1)");
    auto positive = [](double v) { return std::isfinite(v) && v > 0.0; };
    if (!positive(kappa0) || !positive(delta0) || !positive(b0) || !positive(lipschitz_f)) {
        throw Error(ErrorKind::parameter, "kappa0, delta0, b0 and the payoff Lipschitz constant must be finite and > 0");
    }
    if (b0 < 1.0) throw Error(ErrorKind::parameter, "b0 must be >= 1");
}

UniformityConstants symmetric_constants(double beta) {
    UniformityConstants c;
    c.beta0 = beta;
    c.kappa0 = 1.0;
    c.delta0 = 1.0;
    c.b0 = 1.0;
    c.lipschitz_f = 1.0;
    return c;
}

AssumptionReport check_assumptions(const NetworkParams& params,
                                   const UniformityConstants& constants, int n_max) {
    if (n_max < 1) throw Error(ErrorKind::validation, "power depth must be >= 1");
    constants.validate();

    AssumptionReport rep;
    const Matrix& q = params.q();
    const Eigen::Index d = q.rows();

    // A1: ||1^T Q^n||_inf = max column sum of Q^n.
    Matrix power = Matrix::Identity(d, d);
    double worst = 0.0;
    for (int n = 1; n <= n_max; ++n) {
        power = power * q;
        const double lhs = power.colwise().sum().maxCoeff();
        const double rhs = constants.kappa0 * std::pow(1.0 - constants.beta0, n);
        worst = std::max(worst, lhs / rhs);
    }
    rep.a1_margin = worst;
    rep.a1_checked_powers = n_max;
    rep.a1_ok = worst <= 1.0 + 1e-12;

    const Eigen::RowVectorXd col_sums = q.colwise().sum();
    const double c = col_sums.maxCoeff();
    const bool constant_sums = (col_sums.array() - c).abs().maxCoeff() <= 1e-12;
    rep.a1_certified_all_n = rep.a1_ok && constant_sums && c <= 1.0 - constants.beta0 + 1e-12 &&
                             constants.kappa0 >= 1.0;

    // A2: R^{-1} mu < -delta0.
    const Vector drift = params.refl_inv() * params.mu();
    rep.a2_margin = drift.maxCoeff() + constants.delta0;
    rep.a2_ok = rep.a2_margin < 0.0;

    // A3: b0^{-1} <= sigma_i^2 <= b0.
    rep.a3_min = params.sigma().diagonal().minCoeff();
    rep.a3_max = params.sigma().diagonal().maxCoeff();
    rep.a3_ok = rep.a3_min >= 1.0 / constants.b0 - 1e-12 && rep.a3_max <= constants.b0 + 1e-12;

    rep.refl_inv_row_norm = (params.refl_inv() * Vector::Ones(d)).cwiseAbs().maxCoeff();
    return rep;
}

std::string AssumptionReport::to_text(const UniformityConstants& k) const {
    std::ostringstream os;
    os.precision(6);
    os << "constants: beta0=" << k.beta0 << " kappa0=" << k.kappa0 << " delta0=" << k.delta0
       << " b0=" << k.b0 << " b1=kappa0/beta0=" << k.b1() << "\n";
    os << "A1 uniform contraction: " << (a1_ok ? "ok" : "FAIL") << "  worst ratio " << a1_margin
       << " over n=1.." << a1_checked_powers
       << (a1_certified_all_n ? " (certified for all n: constant column sums)" : "") << "\n";
    os << "A2 uniform stability:   " << (a2_ok ? "ok" : "FAIL") << "  max(R^-1 mu)+delta0 = "
       << a2_margin << "\n";
    os << "A3 marginal variance:   " << (a3_ok ? "ok" : "FAIL") << "  sigma_i^2 in [" << a3_min
       << ", " << a3_max << "] vs [" << 1.0 / k.b0 << ", " << k.b0 << "]\n";
    os << "||R^-1 1||_inf = " << refl_inv_row_norm << "\n";
    return os.str();
}

namespace {

std::vector<double> parse_numbers(const std::string& key, std::string text) {
    std::replace(text.begin(), text.end(), ',', ' ');
    std::replace(text.begin(), text.end(), ';', ' ');
    std::istringstream is(text);
    std::vector<double> out;
    std::string tok;
    while (is >> tok) {
        std::size_t used = 0;
        double v = 0.0;
        try {
            v = std::stod(tok, &used);
        } catch (const std::exception&) {
            used = 0;
        }
        if (used != tok.size()) {
            throw Error(ErrorKind::validation, "key '" + key + "': not a number: '" + tok + "'");
        }
        out.push_back(v);
    }
    return out;
}

std::string trim(const std::string& s) {
    const auto b = s.find_first_not_of(" \t\r");
    if (b == std::string::npos) return {};
    const auto e = s.find_last_not_of(" \t\r");
    return s.substr(b, e - b + 1);
}

}  // namespace

LoadedModel parse_model(const std::string& text) {
    std::map<std::string, std::vector<double>> kv;
    std::istringstream is(text);
    std::string line;
    int lineno = 0;
    while (std::getline(is, line)) {
        ++lineno;
        if (auto hash = line.find('#'); hash != std::string::npos) line.erase(hash);
        line = trim(line);
        if (line.empty()) continue;
        const auto eq = line.find('=');
        if (eq == std::string::npos) {
            throw Error(ErrorKind::validation, "line " + std::to_string(lineno) + ": expected key = value");
        }
        const std::string key = trim(line.substr(0, eq));
        if (key != "d" && key != "beta" && key != "mu" && key != "sigma" && key != "refl") {
            throw Error(ErrorKind::validation, "line " + std::to_string(lineno) + ": unknown key '" + key + "'");
        }
        kv[key] = parse_numbers(key, line.substr(eq + 1));
    }

    auto scalar = [&](const std::string& key) -> std::optional<double> {
        auto it = kv.find(key);
        if (it == kv.end()) return std::nullopt;
        if (it->second.size() != 1) throw Error(ErrorKind::validation, "key '" + key + "' takes one value");
        return it->second.front();
    };

    const auto d_value = scalar("d");
    if (!d_value || *d_value < 1 || std::floor(*d_value) != *d_value) {
        throw Error(ErrorKind::validation, "model needs an integer d >= 1");
    }
    const auto d = static_cast<std::size_t>(*d_value);
    const auto n = static_cast<Eigen::Index>(d);

    auto vector_of = [&](const std::string& key) -> std::optional<Vector> {
        auto it = kv.find(key);
        if (it == kv.end()) return std::nullopt;
        const auto& v = it->second;
        if (v.size() == 1) return Vector::Constant(n, v.front());
        if (v.size() != d) throw Error(ErrorKind::validation, "key '" + key + "' needs 1 or d values");
        return Eigen::Map<const Vector>(v.data(), n);
    };
    auto matrix_of = [&](const std::string& key) -> Matrix {
        auto it = kv.find(key);
        if (it == kv.end()) throw Error(ErrorKind::validation, "explicit model needs '" + key + "'");
        if (it->second.size() != d * d) {
            throw Error(ErrorKind::validation, "key '" + key + "' needs d*d row-major values");
        }
        return Eigen::Map<const RowMatrix>(it->second.data(), n, n);
    };

    if (auto beta = scalar("beta")) {
        if (kv.count("sigma") || kv.count("refl")) {
            throw Error(ErrorKind::validation, "give either beta or explicit sigma/refl, not both");
        }
        auto mu = vector_of("mu");
        if (mu && (mu->array() != (*mu)(0)).any()) {
            throw Error(ErrorKind::validation, "symmetric family takes a single drift value");
        }
        return LoadedModel{beta, build_symmetric(d, *beta, mu ? (*mu)(0) : -1.0)};
    }

    auto mu = vector_of("mu");
    if (!mu) throw Error(ErrorKind::validation, "explicit model needs 'mu'");
    return LoadedModel{std::nullopt, NetworkParams::make(*mu, matrix_of("sigma"), matrix_of("refl"))};
}

LoadedModel load_model(const std::filesystem::path& path) {
    std::ifstream in(path);
    if (!in) throw Error(ErrorKind::io, "cannot open model file " + path.string());
    std::ostringstream ss;
    ss << in.rdbuf();
    return parse_model(ss.str());
}

}  // namespace rbm
