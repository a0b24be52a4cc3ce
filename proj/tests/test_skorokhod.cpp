#include "oracles.hpp"
#include "rbm/errors.hpp"
#include "rbm/skorokhod.hpp"

#include <doctest.h>

#include <random>
#include <sstream>
#include <string>

using rbm::ErrorKind;
using rbm::Matrix;
using rbm::Vector;

namespace {

ErrorKind kind_of(auto&& fn) {
    try {
        fn();
    } catch (const rbm::Error& e) {
        return e.kind();
    }
    FAIL("expected rbm::Error");
    return ErrorKind::validation;
}

rbm::GridPath path_from_increments(const std::vector<std::vector<double>>& incs, double step = 1.0) {
    rbm::GridPath p;
    p.level = 0;
    p.step = step;
    const auto rows = static_cast<Eigen::Index>(incs.size()) + 1;
    const auto d = static_cast<Eigen::Index>(incs.front().size());
    p.values = rbm::RowMatrix::Zero(rows, d);
    for (Eigen::Index k = 1; k < rows; ++k) {
        for (Eigen::Index j = 0; j < d; ++j) {
            p.values(k, j) = p.values(k - 1, j) + incs[static_cast<std::size_t>(k - 1)][static_cast<std::size_t>(j)];
        }
    }
    p.horizon = p.end_time();
    return p;
}

rbm::GridPath random_x_path(const rbm::NetworkParams& params, double horizon, std::uint64_t seed) {
    rbm::SeedCounter c;
    auto rng = rbm::sample_stream(seed, 0);
    return rbm::apply_drift_diffusion(
        rbm::sample_fine_path(params, rbm::StepBase::from_gamma(0.05), 1, horizon, rng, c), params);
}

void check_lcp_invariants(const Matrix& refl, const Vector& x, const rbm::LcpSolution& s) {
    CHECK((s.y - (x + refl * s.push)).cwiseAbs().maxCoeff() < 1e-8);
    CHECK(s.y.minCoeff() >= -1e-8);
    CHECK(s.push.minCoeff() >= -1e-8);
    CHECK(s.y.cwiseMin(s.push).maxCoeff() <= 1e-6);
}

}  // namespace

TEST_CASE("one-dimensional LCP examples") {
    const Matrix r = Matrix::Identity(1, 1);
    const auto free = rbm::solve_lcp(r, Vector::Constant(1, 2.0));
    CHECK(free.y(0) == 2.0);
    CHECK(free.push(0) == 0.0);
    CHECK(free.iterations == 0);

    const auto hit = rbm::solve_lcp(r, Vector::Constant(1, -1.5));
    CHECK(hit.y(0) == doctest::Approx(0.0));
    CHECK(hit.push(0) == doctest::Approx(1.5));
}

TEST_CASE("two-station LCP matches the enumeration oracle") {
    Matrix r(2, 2);
    r << 1, -0.5, -0.5, 1;
    const Vector x = Vector::Constant(2, -1.0);
    const auto s = rbm::solve_lcp(r, x);
    CHECK(s.y.cwiseAbs().maxCoeff() < 1e-12);
    CHECK(s.push(0) == doctest::Approx(2.0).epsilon(1e-12));
    CHECK(s.push(1) == doctest::Approx(2.0).epsilon(1e-12));
    const auto o = oracle::enumerate_lcp(r, x);
    REQUIRE(o);
    CHECK(o->subset == 3u);
    CHECK((o->push - s.push).cwiseAbs().maxCoeff() < 1e-12);
    CHECK((x + r * s.push).cwiseAbs().maxCoeff() < 1e-12);
}

TEST_CASE("random M-matrix LCPs agree with enumeration for d <= 6") {
    std::mt19937_64 rng(101);
    std::uniform_int_distribution<int> dim(1, 6);
    std::uniform_real_distribution<double> u(-2.0, 2.0);
    for (int trial = 0; trial < 500; ++trial) {
        const int d = dim(rng);
        const Matrix r = oracle::random_m_matrix(d, 0.95, rng);
        Vector x(d);
        for (int i = 0; i < d; ++i) x(i) = u(rng);
        const auto s = rbm::solve_lcp(r, x);
        check_lcp_invariants(r, x, s);
        const auto o = oracle::enumerate_lcp(r, x);
        REQUIRE(o);
        CHECK((o->y - s.y).cwiseAbs().maxCoeff() < 1e-6);
        CHECK((o->push - s.push).cwiseAbs().maxCoeff() < 1e-6);
    }
}

TEST_CASE("sweep cap and singular active blocks raise errors") {
    Matrix r(2, 2);
    r << 1, -0.5, -0.5, 1;
    Vector x(2);
    x << -1.0, 0.1;  // first sweep pushes station 0, which drives station 1 negative
    rbm::LcpOptions one;
    one.max_sweeps = 1;
    try {
        rbm::solve_lcp(r, x, one);
        FAIL("cap not enforced");
    } catch (const rbm::Error& e) {
        CHECK(e.kind() == ErrorKind::convergence);
        CHECK(std::string(e.what()).find("min") != std::string::npos);
    }
    CHECK(rbm::solve_lcp(r, x).iterations == 2);

    const Matrix zero = Matrix::Zero(1, 1);
    CHECK(kind_of([&] { rbm::solve_lcp(zero, Vector::Constant(1, -1.0)); }) == ErrorKind::submatrix);
    CHECK(kind_of([&] { rbm::solve_lcp(r, Vector::Zero(3)); }) == ErrorKind::shape);
}

TEST_CASE("trace output lists each sweep") {
    Matrix r(2, 2);
    r << 1, -0.5, -0.5, 1;
    Vector x(2);
    x << -1.0, 0.1;
    std::ostringstream log;
    rbm::LcpOptions opts;
    opts.trace = &log;
    rbm::solve_lcp(r, x, opts);
    const std::string text = log.str();
    CHECK(text.find("sweep 1 active={0}") != std::string::npos);
    CHECK(text.find("sweep 2 active={0,1}") != std::string::npos);
}

TEST_CASE("reflect_path hand examples") {
    SUBCASE("nonnegative increments never reflect") {
        const auto p = path_from_increments({{0.1, 0.0, 0.3}, {0.2, 0.5, 0.0}, {0.0, 0.1, 0.1}});
        const auto y = rbm::reflect_path(p, rbm::build_symmetric(3, 0.8).refl(), Vector::Zero(3));
        CHECK((y.y_values - p.values).cwiseAbs().maxCoeff() == 0.0);
        CHECK(y.cumulative_push.cwiseAbs().maxCoeff() == 0.0);
    }
    SUBCASE("one dimension, increments -1 then +1") {
        const auto p = path_from_increments({{-1.0}, {1.0}});
        const auto y = rbm::reflect_path(p, Matrix::Identity(1, 1), Vector::Zero(1));
        CHECK(y.y_values(0, 0) == 0.0);
        CHECK(y.y_values(1, 0) == 0.0);
        CHECK(y.y_values(2, 0) == 1.0);
        CHECK(y.cumulative_push(0, 0) == 0.0);
        CHECK(y.cumulative_push(1, 0) == 1.0);
        CHECK(y.cumulative_push(2, 0) == 1.0);
    }
    SUBCASE("bad initial states") {
        const auto p = path_from_increments({{-1.0}, {1.0}});
        CHECK(kind_of([&] { rbm::reflect_path(p, Matrix::Identity(1, 1), Vector::Constant(1, -0.1)); }) ==
              ErrorKind::parameter);
        CHECK(kind_of([&] { rbm::reflect_path(p, Matrix::Identity(1, 1), Vector::Zero(2)); }) == ErrorKind::shape);
    }
    SUBCASE("errors carry the step index") {
        const auto p = path_from_increments({{0.5}, {-1.0}});
        try {
            rbm::reflect_path(p, Matrix::Zero(1, 1), Vector::Zero(1));
            FAIL("singular reflection accepted");
        } catch (const rbm::Error& e) {
            CHECK(e.kind() == ErrorKind::submatrix);
            CHECK(std::string(e.what()).find("step 1") != std::string::npos);
        }
    }
}

TEST_CASE("d=3 symmetric window: per-step oracle re-check") {
    const auto params = rbm::build_symmetric(3, 0.8);
    const auto x = random_x_path(params, 5.0, 77);
    const auto y = rbm::reflect_path(x, params.refl(), Vector::Zero(3));
    REQUIRE(y.num_steps() == x.num_steps());
    for (Eigen::Index k = 0; k < x.num_steps(); ++k) {
        const Vector input = (y.y_values.row(k) + x.values.row(k + 1) - x.values.row(k)).transpose();
        const auto o = oracle::enumerate_lcp(params.refl(), input);
        REQUIRE(o);
        CHECK((o->y.transpose() - y.y_values.row(k + 1)).cwiseAbs().maxCoeff() < 1e-9);
        const Eigen::RowVectorXd step_push = y.cumulative_push.row(k + 1) - y.cumulative_push.row(k);
        CHECK((o->push.transpose() - step_push).cwiseAbs().maxCoeff() < 1e-9);
    }
    CHECK(y.y_values.allFinite());
}

TEST_CASE("cumulative push is non-decreasing and the flow property holds exactly") {
    const auto params = rbm::build_symmetric(6, 0.8);
    for (std::uint64_t seed = 0; seed < 5; ++seed) {
        const auto x = random_x_path(params, 4.0, 300 + seed);
        const Vector y0 = Vector::LinSpaced(6, 0.0, 1.0);
        const auto y = rbm::reflect_path(x, params.refl(), y0);
        CHECK(y.y_values.minCoeff() >= -1e-8);
        const rbm::RowMatrix dpush = y.cumulative_push.bottomRows(y.num_steps()) - y.cumulative_push.topRows(y.num_steps());
        CHECK(dpush.minCoeff() >= -1e-12);

        // restart at s = 1.5 from Y(s) using the re-based tail window
        const Eigen::Index s = x.index_of(1.5);
        rbm::LcpSolver solver(params.refl());
        const Vector ys = y.y_values.row(s).transpose();
        const Vector tail = rbm::reflect_terminal(rbm::PathWindow(x, s, x.num_steps() - s), solver, ys);
        CHECK((tail.transpose() - y.y_values.row(y.num_steps())).cwiseAbs().maxCoeff() == 0.0);

        const Vector whole = rbm::reflect_terminal(rbm::PathWindow(x, 0, x.num_steps()), solver, y0);
        CHECK((whole.transpose() - y.y_values.row(y.num_steps())).cwiseAbs().maxCoeff() == 0.0);
    }
}

TEST_CASE("Lipschitz gaps") {
    const auto params = rbm::build_symmetric(4, 0.8);
    const double bound = 2.0 * params.refl_inv().cwiseAbs().rowwise().sum().maxCoeff();
    const auto x = random_x_path(params, 2.0, 5);

    SUBCASE("identical inputs give exactly zero output gap") {
        const auto g = rbm::lipschitz_gap(x, x, params.refl(), Vector::Zero(4));
        CHECK(g.output_gap == 0.0);
        CHECK(g.input_gap == 0.0);
    }
    SUBCASE("a constant shift at step 1 stays within 2 ||R^-1|| |c|") {
        for (double c : {-0.7, -0.1, 0.05, 0.4}) {
            rbm::GridPath alt = x;
            alt.values.bottomRows(alt.num_steps()).array() += c;
            const auto g = rbm::lipschitz_gap(x, alt, params.refl(), Vector::Zero(4));
            CHECK(g.input_gap == doctest::Approx(std::abs(c)).epsilon(1e-12));
            CHECK(g.output_gap <= bound * std::abs(c) + 1e-12);
        }
    }
    SUBCASE("random pairs stay within the bound") {
        for (std::uint64_t t = 0; t < 100; ++t) {
            const auto alt = random_x_path(params, 2.0, 1000 + t);
            const auto g = rbm::lipschitz_gap(x, alt, params.refl(), Vector::Zero(4));
            CHECK(g.output_gap <= bound * g.input_gap + 1e-12);
        }
    }
    SUBCASE("paths on different grids are rejected") {
        const auto other = path_from_increments({{0.1, 0.1, 0.1, 0.1}}, 0.05);
        CHECK(kind_of([&] { rbm::lipschitz_gap(x, other, params.refl(), Vector::Zero(4)); }) ==
              ErrorKind::alignment);
    }
}
