#include "rbm/paths.hpp"

#include "rbm/errors.hpp"

#include <cmath>
#include <istream>
#include <limits>
#include <ostream>

namespace rbm {

namespace {

// 2^30 doubles = 8 GiB per path; anything larger is a configuration mistake.
constexpr std::int64_t kMaxPathEntries = std::int64_t{1} << 30;

bool near_integer(double s, double& rounded) {
    rounded = std::round(s);
    return std::abs(s - rounded) <= 1e-9 * std::max(1.0, std::abs(s));
}

}  // namespace

StepBase StepBase::from_gamma(double gamma) {
    if (!(gamma > 0.0 && gamma < 1.0)) {
        throw Error(ErrorKind::configuration, "gamma must lie in (0, 1)");
    }
    double n = 0.0;
    if (!near_integer(1.0 / gamma, n) || n < 2.0) {
        throw Error(ErrorKind::configuration, "1/gamma must be an integer (gamma = " +
                                                  std::to_string(gamma) + ")");
    }
    return StepBase(static_cast<std::int64_t>(n));
}

StepBase StepBase::from_reciprocal(std::int64_t n) {
    if (n < 2) throw Error(ErrorKind::configuration, "1/gamma must be an integer >= 2");
    return StepBase(n);
}

double StepBase::step(int level) const {
    if (level < 0) throw Error(ErrorKind::configuration, "negative level");
    return 1.0 / static_cast<double>(refinement(level));
}

std::int64_t StepBase::refinement(int levels) const {
    if (levels < 0) throw Error(ErrorKind::configuration, "negative level");
    std::int64_t r = 1;
    for (int i = 0; i < levels; ++i) {
        if (r > std::numeric_limits<std::int64_t>::max() / n_) {
            throw Error(ErrorKind::size, "grid refinement overflows the index type");
        }
        r *= n_;
    }
    return r;
}

Eigen::Index GridPath::index_of(double t) const {
    double k = 0.0;
    if (!near_integer(t / step, k)) {
        throw Error(ErrorKind::alignment, "time " + std::to_string(t) + " is not on the level-" +
                                              std::to_string(level) + " grid");
    }
    if (k < 0.0 || k > static_cast<double>(num_steps())) {
        throw Error(ErrorKind::alignment, "time " + std::to_string(t) + " outside the path");
    }
    return static_cast<Eigen::Index>(k);
}

PathWindow::PathWindow(const GridPath& path, Eigen::Index first, Eigen::Index steps)
    : path_(&path), first_(first), steps_(steps) {
    if (first < 0 || steps < 0 || first + steps > path.num_steps()) {
        throw Error(ErrorKind::alignment, "window outside the path");
    }
}

Rng sample_stream(std::uint64_t master_seed, std::uint64_t sample_index) {
    std::seed_seq seq{static_cast<std::uint32_t>(master_seed),
                      static_cast<std::uint32_t>(master_seed >> 32),
                      static_cast<std::uint32_t>(sample_index),
                      static_cast<std::uint32_t>(sample_index >> 32)};
    return Rng(seq);
}

std::int64_t steps_to_cover(double horizon, double step) {
    if (!(horizon > 0.0) || !(step > 0.0)) {
        throw Error(ErrorKind::configuration, "horizon and step must be positive");
    }
    const double s = horizon / step;
    if (!(s < 9.0e15)) throw Error(ErrorKind::size, "horizon/step overflows the index type");
    double n = 0.0;
    if (near_integer(s, n)) return static_cast<std::int64_t>(n);
    return static_cast<std::int64_t>(std::ceil(s));
}

GridPath sample_brownian_steps(std::size_t d, const StepBase& base, int level,
                               std::int64_t num_steps, Rng& rng, SeedCounter& counter) {
    if (num_steps < 1) throw Error(ErrorKind::configuration, "path needs at least one step");
    const auto cols = static_cast<std::int64_t>(d);
    if (num_steps + 1 > kMaxPathEntries / std::max<std::int64_t>(cols, 1)) {
        throw Error(ErrorKind::size, "path of " + std::to_string(num_steps) + " steps in dimension " +
                                         std::to_string(d) + " is too large");
    }

    GridPath path;
    path.level = level;
    path.step = base.step(level);
    path.horizon = static_cast<double>(num_steps) * path.step;
    path.values.resize(num_steps + 1, cols);
    path.values.row(0).setZero();

    std::normal_distribution<double> normal(0.0, 1.0);
    const double sd = std::sqrt(path.step);
    for (std::int64_t k = 0; k < num_steps; ++k) {
        for (std::int64_t j = 0; j < cols; ++j) {
            path.values(k + 1, j) = path.values(k, j) + sd * normal(rng);
        }
    }
    counter.add(static_cast<std::uint64_t>(num_steps) * d);
    return path;
}

GridPath sample_fine_path(const NetworkParams& params, const StepBase& base, int level,
                          double horizon, Rng& rng, SeedCounter& counter) {
    const double step = base.step(level);
    GridPath path = sample_brownian_steps(params.dim(), base, level, steps_to_cover(horizon, step),
                                          rng, counter);
    path.horizon = horizon;
    return path;
}

GridPath restrict_to_coarse(const GridPath& fine, const StepBase& base) {
    if (fine.level < 1) throw Error(ErrorKind::configuration, "cannot restrict a level-0 path");
    const std::int64_t ratio = base.reciprocal();
    if (fine.num_steps() % ratio != 0) {
        throw Error(ErrorKind::alignment, "fine path of " + std::to_string(fine.num_steps()) +
                                              " steps does not end on the coarse grid");
    }
    GridPath coarse;
    coarse.level = fine.level - 1;
    coarse.step = base.step(coarse.level);
    coarse.horizon = fine.horizon;
    coarse.origin_time = fine.origin_time;
    const Eigen::Index rows = fine.num_steps() / ratio + 1;
    coarse.values.resize(rows, fine.dim());
    for (Eigen::Index k = 0; k < rows; ++k) coarse.values.row(k) = fine.values.row(k * ratio);
    return coarse;
}

GridPath apply_drift_diffusion(const GridPath& bm, const NetworkParams& params) {
    if (bm.dim() != static_cast<Eigen::Index>(params.dim())) {
        throw Error(ErrorKind::shape, "path dimension " + std::to_string(bm.dim()) +
                                          " does not match model dimension " +
                                          std::to_string(params.dim()));
    }
    GridPath x;
    x.level = bm.level;
    x.step = bm.step;
    x.horizon = bm.horizon;
    x.origin_time = bm.origin_time;
    // Row-vector form of X = mu t + C B: X_row = B_row C^T + t mu^T.
    x.values.noalias() = bm.values * params.chol().transpose().triangularView<Eigen::Upper>();
    const Eigen::RowVectorXd mu = params.mu().transpose();
    for (Eigen::Index k = 0; k < x.values.rows(); ++k) {
        x.values.row(k) += (static_cast<double>(k) * bm.step) * mu;
    }
    return x;
}

GridPath window(const GridPath& path, double from_time, double to_time) {
    const Eigen::Index i0 = path.index_of(from_time);
    const Eigen::Index i1 = path.index_of(to_time);
    if (i0 >= i1) throw Error(ErrorKind::alignment, "window needs from_time < to_time");
    GridPath w;
    w.level = path.level;
    w.step = path.step;
    w.origin_time = path.origin_time + static_cast<double>(i0) * path.step;
    w.horizon = static_cast<double>(i1 - i0) * path.step;
    w.values = path.values.middleRows(i0, i1 - i0 + 1).rowwise() - path.values.row(i0);
    return w;
}

void write_path_text(const GridPath& path, std::ostream& out) {
    out.precision(17);
    out << path.dim() << ' ' << path.level << ' ' << path.step << ' ' << path.values.rows() << '\n';
    for (Eigen::Index k = 0; k < path.values.rows(); ++k) {
        for (Eigen::Index j = 0; j < path.dim(); ++j) {
            if (j) out << ' ';
            out << path.values(k, j);
        }
        out << '\n';
    }
    if (!out) throw Error(ErrorKind::io, "failed writing path dump");
}

GridPath read_path_text(std::istream& in) {
    Eigen::Index d = 0, rows = 0;
    GridPath path;
    if (!(in >> d >> path.level >> path.step >> rows) || d < 1 || rows < 1) {
        throw Error(ErrorKind::io, "bad path dump header");
    }
    path.values.resize(rows, d);
    for (Eigen::Index k = 0; k < rows; ++k) {
        for (Eigen::Index j = 0; j < d; ++j) {
            if (!(in >> path.values(k, j))) throw Error(ErrorKind::io, "truncated path dump");
        }
    }
    path.horizon = path.end_time();
    return path;
}

void write_path_binary(const GridPath& path, std::ostream& out) {
    const std::int64_t header[2] = {path.dim(), path.level};
    const std::int64_t rows = path.values.rows();
    out.write(reinterpret_cast<const char*>(header), sizeof header);
    out.write(reinterpret_cast<const char*>(&path.step), sizeof path.step);
    out.write(reinterpret_cast<const char*>(&rows), sizeof rows);
    out.write(reinterpret_cast<const char*>(path.values.data()),
              static_cast<std::streamsize>(path.values.size() * sizeof(double)));
    if (!out) throw Error(ErrorKind::io, "failed writing path dump");
}

GridPath read_path_binary(std::istream& in) {
    std::int64_t header[2] = {0, 0};
    std::int64_t rows = 0;
    GridPath path;
    in.read(reinterpret_cast<char*>(header), sizeof header);
    in.read(reinterpret_cast<char*>(&path.step), sizeof path.step);
    in.read(reinterpret_cast<char*>(&rows), sizeof rows);
    if (!in || header[0] < 1 || rows < 1) throw Error(ErrorKind::io, "bad path dump header");
    path.level = static_cast<int>(header[1]);
    path.values.resize(rows, header[0]);
    in.read(reinterpret_cast<char*>(path.values.data()),
            static_cast<std::streamsize>(path.values.size() * sizeof(double)));
    if (!in) throw Error(ErrorKind::io, "truncated path dump");
    path.horizon = path.end_time();
    return path;
}

}  // namespace rbm
