#include "rbm/skorokhod.hpp"

#include "rbm/errors.hpp"

#include <ostream>
#include <sstream>

namespace rbm {

namespace {

// States produced by the solver may sit down to -epsilon, so restarts accept them.
void check_start(const Vector& y0, Eigen::Index d, double epsilon) {
    if (y0.size() != d) {
        throw Error(ErrorKind::shape, "initial state has dimension " + std::to_string(y0.size()) +
                                          ", expected " + std::to_string(d));
    }
    if (y0.size() > 0 && y0.minCoeff() < -epsilon) {
        throw Error(ErrorKind::parameter, "initial state must be nonnegative");
    }
}

}  // namespace

LcpSolver::LcpSolver(Matrix refl, LcpOptions options)
    : refl_(std::move(refl)), options_(options) {
    if (refl_.rows() != refl_.cols() || refl_.rows() == 0) {
        throw Error(ErrorKind::shape, "reflection matrix must be square and non-empty");
    }
    max_sweeps_ = options_.max_sweeps > 0 ? options_.max_sweeps : 10 * static_cast<int>(refl_.rows());
    active_.reserve(static_cast<std::size_t>(refl_.rows()));
}

int LcpSolver::solve(const Vector& x, Vector& y, Vector& push) {
    const Eigen::Index d = refl_.rows();
    if (x.size() != d) throw Error(ErrorKind::shape, "LCP input has the wrong dimension");
    const double eps = options_.epsilon;

    y = x;
    push.setZero(d);
    int sweeps = 0;
    while (y.minCoeff() < -eps) {
        if (++sweeps > max_sweeps_) {
            std::ostringstream msg;
            msg << "no feasible active set after " << max_sweeps_ << " sweeps (min y = "
                << y.minCoeff() << ")";
            throw Error(ErrorKind::convergence, msg.str());
        }
        active_.clear();
        for (Eigen::Index i = 0; i < d; ++i) {
            if (y(i) < eps) active_.push_back(i);
        }

        sub_ = refl_(active_, active_);
        rhs_ = -x(active_);
        lu_.compute(sub_);
        if (!(lu_.rcond() > 1e-14)) {
            throw Error(ErrorKind::submatrix, "R_BB is singular for an active set of size " +
                                                  std::to_string(active_.size()));
        }
        solution_ = lu_.solve(rhs_);

        push.setZero();
        push(active_) = solution_;
        y.noalias() = x + refl_(Eigen::all, active_) * solution_;

        if (options_.trace) {
            *options_.trace << "sweep " << sweeps << " active={";
            for (std::size_t k = 0; k < active_.size(); ++k) {
                *options_.trace << (k ? "," : "") << active_[k];
            }
            *options_.trace << "} min_y=" << y.minCoeff() << '\n';
        }
    }
    return sweeps;
}

LcpSolution solve_lcp(const Matrix& refl, const Vector& x, const LcpOptions& options) {
    LcpSolver solver(refl, options);
    LcpSolution sol;
    sol.iterations = solver.solve(x, sol.y, sol.push);
    return sol;
}

ReflectedPath reflect_path(const GridPath& x_path, const Matrix& refl, const Vector& y0,
                           const LcpOptions& options) {
    const Eigen::Index d = x_path.dim();
    if (refl.rows() != d) throw Error(ErrorKind::shape, "path and reflection matrix dimensions differ");
    check_start(y0, d, options.epsilon);

    LcpSolver solver(refl, options);
    ReflectedPath out;
    out.level = x_path.level;
    out.step = x_path.step;
    out.horizon = x_path.horizon;
    out.origin_time = x_path.origin_time;
    const Eigen::Index steps = x_path.num_steps();
    out.y_values.resize(steps + 1, d);
    out.cumulative_push.resize(steps + 1, d);
    out.y_values.row(0) = y0.transpose();
    out.cumulative_push.row(0).setZero();

    Vector x(d), y(d), push(d);
    for (Eigen::Index k = 0; k < steps; ++k) {
        x = out.y_values.row(k).transpose() +
            (x_path.values.row(k + 1) - x_path.values.row(k)).transpose();
        try {
            solver.solve(x, y, push);
        } catch (const Error& e) {
            throw e.annotated("step " + std::to_string(k));
        }
        out.y_values.row(k + 1) = y.transpose();
        out.cumulative_push.row(k + 1) = out.cumulative_push.row(k) + push.transpose();
    }
    return out;
}

Vector reflect_terminal(const PathWindow& x_window, LcpSolver& solver, const Vector& y0) {
    const Eigen::Index d = x_window.dim();
    if (static_cast<Eigen::Index>(solver.dim()) != d) {
        throw Error(ErrorKind::shape, "path and reflection matrix dimensions differ");
    }
    check_start(y0, d, solver.epsilon());
    Vector state = y0;
    Vector x(d), push(d);
    for (Eigen::Index k = 0; k < x_window.num_steps(); ++k) {
        x = state + x_window.increment(k).transpose();
        try {
            solver.solve(x, state, push);
        } catch (const Error& e) {
            throw e.annotated("step " + std::to_string(k));
        }
    }
    return state;
}

LipschitzGap lipschitz_gap(const GridPath& x_path, const GridPath& x_path_alt, const Matrix& refl,
                           const Vector& y0) {
    if (x_path.values.rows() != x_path_alt.values.rows() ||
        x_path.values.cols() != x_path_alt.values.cols() || x_path.step != x_path_alt.step) {
        throw Error(ErrorKind::alignment, "paths are not on the same grid");
    }
    const ReflectedPath a = reflect_path(x_path, refl, y0);
    const ReflectedPath b = reflect_path(x_path_alt, refl, y0);
    LipschitzGap gap;
    gap.output_gap = (a.y_values - b.y_values).cwiseAbs().maxCoeff();
    gap.input_gap = (x_path.values - x_path_alt.values).cwiseAbs().maxCoeff();
    return gap;
}

}  // namespace rbm
