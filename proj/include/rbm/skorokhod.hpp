#pragma once

#include "rbm/params.hpp"
#include "rbm/paths.hpp"

#include <iosfwd>
#include <vector>

namespace rbm {

struct LcpOptions {
    /// Feasibility threshold: loop while some y_i < -epsilon, activate y_i < epsilon.
    double epsilon = 1e-8;
    /// Active-set sweep cap; 0 means 10 * d.
    int max_sweeps = 0;
    /// When set, one line per sweep: sweep index, active set, min(y).
    std::ostream* trace = nullptr;
};

struct LcpSolution {
    Vector y;     // x + R push, >= -epsilon
    Vector push;  // zero outside the final active set
    int iterations = 0;
};

/// Active-set solver for y = x + R L, y >= 0, L >= 0, y_i L_i = 0 with R an
/// M-matrix. Starting from y = x, each sweep activates B = {i : y_i < eps},
/// solves R_BB L_B = -x_B and recomputes y = x + R_{:,B} L_B, until no
/// coordinate is below -eps.
///
/// Holds scratch buffers so a path can be reflected without per-step
/// allocation churn; one instance per thread.
class LcpSolver {
public:
    explicit LcpSolver(Matrix refl, LcpOptions options = {});

    /// Writes the state into `y` and the pushes into `push`; returns the sweep count.
    int solve(const Vector& x, Vector& y, Vector& push);

    const Matrix& refl() const noexcept { return refl_; }
    std::size_t dim() const noexcept { return static_cast<std::size_t>(refl_.rows()); }
    double epsilon() const noexcept { return options_.epsilon; }

private:
    Matrix refl_;
    LcpOptions options_;
    int max_sweeps_;
    std::vector<Eigen::Index> active_;
    Matrix sub_;
    Vector rhs_;
    Vector solution_;
    Eigen::PartialPivLU<Matrix> lu_;
};

LcpSolution solve_lcp(const Matrix& refl, const Vector& x, const LcpOptions& options = {});

/// Reflected path on the grid of its input: states and cumulative pushes.
struct ReflectedPath {
    int level = 0;
    double step = 1.0;
    double horizon = 0.0;
    double origin_time = 0.0;
    RowMatrix y_values;
    RowMatrix cumulative_push;

    Eigen::Index num_steps() const noexcept { return y_values.rows() - 1; }
};

/// Discrete Skorokhod recursion y_{k+1} = LCP(R, y_k + dX_k), y_0 = y0.
/// LCP failures are rethrown annotated with the step index. y0 must be
/// >= -epsilon, so a state taken from an earlier run can seed a restart.
ReflectedPath reflect_path(const GridPath& x_path, const Matrix& refl, const Vector& y0,
                           const LcpOptions& options = {});

/// Terminal state of the same recursion without storing the path.
Vector reflect_terminal(const PathWindow& x_window, LcpSolver& solver, const Vector& y0);

struct LipschitzGap {
    double output_gap = 0.0;  // max_k ||Y_k - Y'_k||_inf
    double input_gap = 0.0;   // max_k ||X_k - X'_k||_inf
};

/// Sup-norm gaps between the reflections of two inputs on the same grid.
LipschitzGap lipschitz_gap(const GridPath& x_path, const GridPath& x_path_alt, const Matrix& refl,
                           const Vector& y0);

}  // namespace rbm
