#pragma once

#include "rbm/params.hpp"

#include <cstdint>
#include <iosfwd>
#include <random>

namespace rbm {

/// Step-size base gamma restricted to reciprocals of integers, so that the
/// level grids {0, gamma^m, 2 gamma^m, ...} are nested.
class StepBase {
public:
    /// Configuration error unless 1/gamma is an integer >= 2 (to 1e-9).
    static StepBase from_gamma(double gamma);
    static StepBase from_reciprocal(std::int64_t n);

    double gamma() const noexcept { return 1.0 / static_cast<double>(n_); }
    std::int64_t reciprocal() const noexcept { return n_; }

    /// gamma^level.
    double step(int level) const;
    /// (1/gamma)^levels as an integer; size error on overflow.
    std::int64_t refinement(int levels) const;

private:
    explicit StepBase(std::int64_t n) : n_(n) {}
    std::int64_t n_;
};

/// Number of standard-normal variates drawn: the complexity unit.
class SeedCounter {
public:
    void add(std::uint64_t n) noexcept { count_ += n; }
    std::uint64_t count() const noexcept { return count_; }

private:
    std::uint64_t count_ = 0;
};

/// Path values on the level grid, time-major. Row 0 is the window start and
/// always holds the zero vector.
struct GridPath {
    int level = 0;
    double step = 1.0;
    /// Requested horizon; the grid covers it with num_steps() * step >= horizon.
    double horizon = 0.0;
    double origin_time = 0.0;
    RowMatrix values;

    Eigen::Index num_steps() const noexcept { return values.rows() - 1; }
    Eigen::Index dim() const noexcept { return values.cols(); }
    double end_time() const noexcept { return static_cast<double>(num_steps()) * step; }

    /// Grid index of time t (relative to the window start); alignment error
    /// when t is off-grid or outside [0, end_time()].
    Eigen::Index index_of(double t) const;
};

/// Read-only slice [first, first + steps] of a path, re-based so that
/// value(0) == 0. No copy of the underlying rows.
class PathWindow {
public:
    PathWindow(const GridPath& path, Eigen::Index first, Eigen::Index steps);

    Eigen::Index num_steps() const noexcept { return steps_; }
    Eigen::Index dim() const noexcept { return path_->dim(); }
    double step() const noexcept { return path_->step; }

    auto increment(Eigen::Index k) const {
        return path_->values.row(first_ + k + 1) - path_->values.row(first_ + k);
    }
    auto value(Eigen::Index k) const {
        return path_->values.row(first_ + k) - path_->values.row(first_);
    }

private:
    const GridPath* path_;
    Eigen::Index first_;
    Eigen::Index steps_;
};

using Rng = std::mt19937_64;

/// Independent stream for one estimator sample, a pure function of
/// (master_seed, sample_index).
Rng sample_stream(std::uint64_t master_seed, std::uint64_t sample_index);

/// Smallest n with n * step >= horizon, treating ratios within 1e-9 of an
/// integer as exact.
std::int64_t steps_to_cover(double horizon, double step);

/// Standard Brownian values B at the level grid over `num_steps` steps.
/// Draws exactly d * num_steps normals.
GridPath sample_brownian_steps(std::size_t d, const StepBase& base, int level,
                               std::int64_t num_steps, Rng& rng, SeedCounter& counter);

/// B^{level} on [0, horizon], horizon snapped up to the level grid.
GridPath sample_fine_path(const NetworkParams& params, const StepBase& base, int level,
                          double horizon, Rng& rng, SeedCounter& counter);

/// Level-(m-1) path that agrees with `fine` at every coarse grid point;
/// the values are copied bit for bit.
GridPath restrict_to_coarse(const GridPath& fine, const StepBase& base);

/// X(t) = mu t + C B(t) at the grid points of `bm`.
GridPath apply_drift_diffusion(const GridPath& bm, const NetworkParams& params);

/// Increment path X_{s:t}: rows [s, t] of `path`, re-based to start at zero.
GridPath window(const GridPath& path, double from_time, double to_time);

/// Debug dump. Header (d, level, step, rows) then row-major values.
void write_path_text(const GridPath& path, std::ostream& out);
GridPath read_path_text(std::istream& in);
void write_path_binary(const GridPath& path, std::ostream& out);
GridPath read_path_binary(std::istream& in);

}  // namespace rbm
