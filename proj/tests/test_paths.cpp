#include "rbm/errors.hpp"
#include "rbm/paths.hpp"

#include <doctest.h>

#include <cmath>
#include <sstream>

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

rbm::NetworkParams plain(std::size_t d) {
    const auto n = static_cast<Eigen::Index>(d);
    return rbm::NetworkParams::make(Vector::Zero(n), Matrix::Identity(n, n), Matrix::Identity(n, n));
}

}  // namespace

TEST_CASE("step base needs an integral reciprocal") {
    CHECK(rbm::StepBase::from_gamma(0.05).reciprocal() == 20);
    CHECK(rbm::StepBase::from_gamma(0.5).reciprocal() == 2);
    CHECK(rbm::StepBase::from_gamma(0.1).step(2) == doctest::Approx(0.01).epsilon(1e-15));
    CHECK(kind_of([] { rbm::StepBase::from_gamma(0.03); }) == ErrorKind::configuration);
    CHECK(kind_of([] { rbm::StepBase::from_gamma(1.0); }) == ErrorKind::configuration);
    CHECK(kind_of([] { rbm::StepBase::from_gamma(0.0); }) == ErrorKind::configuration);
    CHECK(rbm::StepBase::from_gamma(0.05).refinement(3) == 8000);
    CHECK(kind_of([] { rbm::StepBase::from_reciprocal(1000).refinement(10); }) == ErrorKind::size);
}

TEST_CASE("steps_to_cover snaps near-integral ratios and rounds up otherwise") {
    CHECK(rbm::steps_to_cover(1.0, 0.05) == 20);
    CHECK(rbm::steps_to_cover(0.3, 0.1) == 3);
    CHECK(rbm::steps_to_cover(1.01, 0.05) == 21);
    CHECK(kind_of([] { rbm::steps_to_cover(0.0, 0.05); }) == ErrorKind::configuration);
}

TEST_CASE("seed counter arithmetic") {
    const auto base = rbm::StepBase::from_gamma(0.5);
    SUBCASE("d=1 gamma=0.5 level 1 over [0,1] draws two normals") {
        rbm::SeedCounter c;
        auto rng = rbm::sample_stream(1, 0);
        const auto path = rbm::sample_fine_path(plain(1), base, 1, 1.0, rng, c);
        CHECK(path.num_steps() == 2);
        CHECK(c.count() == 2);
    }
    SUBCASE("d=100 gamma=0.05 level 2 over [0,10] draws 400000 normals") {
        rbm::SeedCounter c;
        c.add(17);
        auto rng = rbm::sample_stream(1, 0);
        const auto path = rbm::sample_fine_path(plain(100), rbm::StepBase::from_gamma(0.05), 2, 10.0, rng, c);
        CHECK(path.num_steps() == 4000);
        CHECK(c.count() == 17 + 400000);
    }
    SUBCASE("a mixed sequence of calls adds d times steps for each") {
        rbm::SeedCounter c;
        auto rng = rbm::sample_stream(2, 5);
        std::uint64_t expected = 0;
        const auto b = rbm::StepBase::from_gamma(0.1);
        for (int call = 0; call < 12; ++call) {
            const std::size_t d = 1 + static_cast<std::size_t>(call % 4);
            const std::int64_t steps = 3 + 7 * call;
            rbm::sample_brownian_steps(d, b, call % 3, steps, rng, c);
            expected += d * static_cast<std::uint64_t>(steps);
        }
        CHECK(c.count() == expected);
    }
}

TEST_CASE("sample streams are reproducible and distinct") {
    auto a = rbm::sample_stream(42, 3);
    auto b = rbm::sample_stream(42, 3);
    auto c = rbm::sample_stream(42, 4);
    auto e = rbm::sample_stream(43, 3);
    const auto x = a();
    CHECK(x == b());
    CHECK(x != c());
    CHECK(x != e());
}

TEST_CASE("level-1 increments have mean 0 and variance gamma") {
    const auto base = rbm::StepBase::from_gamma(0.05);
    rbm::SeedCounter c;
    auto rng = rbm::sample_stream(9, 0);
    const std::int64_t n = 100000;
    const auto bm = rbm::sample_brownian_steps(1, base, 1, n, rng, c);
    double sum = 0.0, sumsq = 0.0;
    for (Eigen::Index k = 0; k < n; ++k) {
        const double inc = bm.values(k + 1, 0) - bm.values(k, 0);
        sum += inc;
        sumsq += inc * inc;
    }
    const double mean = sum / n;
    const double var = (sumsq - n * mean * mean) / (n - 1);
    CHECK(std::abs(mean) < 4.0 * std::sqrt(0.05 / n));
    CHECK(std::abs(var - 0.05) < 4.0 * 0.05 * std::sqrt(2.0 / n));
}

TEST_CASE("restriction picks every n-th fine point bit for bit") {
    SUBCASE("gamma=0.5: fine points 0, .25, .5, .75, 1") {
        const auto base = rbm::StepBase::from_gamma(0.5);
        rbm::SeedCounter c;
        auto rng = rbm::sample_stream(3, 1);
        const auto fine = rbm::sample_brownian_steps(2, base, 2, 4, rng, c);
        const auto coarse = rbm::restrict_to_coarse(fine, base);
        CHECK(coarse.level == 1);
        CHECK(coarse.step == 0.5);
        REQUIRE(coarse.num_steps() == 2);
        for (int k = 0; k <= 2; ++k) {
            for (int j = 0; j < 2; ++j) CHECK(coarse.values(k, j) == fine.values(2 * k, j));
        }
        CHECK(c.count() == 8);
    }
    SUBCASE("gamma=0.05 level 2 on [0,1]: coarse k equals fine 20k") {
        const auto base = rbm::StepBase::from_gamma(0.05);
        rbm::SeedCounter c;
        auto rng = rbm::sample_stream(3, 2);
        const auto fine = rbm::sample_brownian_steps(3, base, 2, 400, rng, c);
        const auto before = c.count();
        const auto coarse = rbm::restrict_to_coarse(fine, base);
        CHECK(c.count() == before);
        REQUIRE(coarse.num_steps() == 20);
        bool identical = true;
        for (int k = 0; k <= 20; ++k) {
            for (int j = 0; j < 3; ++j) identical = identical && coarse.values(k, j) == fine.values(20 * k, j);
        }
        CHECK(identical);
    }
    SUBCASE("misaligned and level-0 inputs are rejected") {
        const auto base = rbm::StepBase::from_gamma(0.05);
        rbm::SeedCounter c;
        auto rng = rbm::sample_stream(3, 3);
        const auto odd = rbm::sample_brownian_steps(1, base, 2, 401, rng, c);
        CHECK(kind_of([&] { rbm::restrict_to_coarse(odd, base); }) == ErrorKind::alignment);
        const auto level0 = rbm::sample_brownian_steps(1, base, 0, 4, rng, c);
        CHECK(kind_of([&] { rbm::restrict_to_coarse(level0, base); }) == ErrorKind::configuration);
    }
}

TEST_CASE("drift and diffusion map") {
    const auto base = rbm::StepBase::from_gamma(0.1);
    SUBCASE("zero Brownian path gives the pure drift line") {
        rbm::GridPath bm;
        bm.level = 1;
        bm.step = 0.1;
        bm.horizon = 1.0;
        bm.values = rbm::RowMatrix::Zero(11, 2);
        const auto p = rbm::build_symmetric(2, 0.8);
        const auto x = rbm::apply_drift_diffusion(bm, p);
        for (int k = 0; k <= 10; ++k) {
            CHECK(x.values(k, 0) == doctest::Approx(-0.1 * k).epsilon(1e-14));
            CHECK(x.values(k, 1) == doctest::Approx(-0.1 * k).epsilon(1e-14));
        }
    }
    SUBCASE("identity covariance and zero drift leave the path unchanged") {
        rbm::SeedCounter c;
        auto rng = rbm::sample_stream(4, 0);
        const auto bm = rbm::sample_brownian_steps(3, base, 1, 50, rng, c);
        const auto x = rbm::apply_drift_diffusion(bm, plain(3));
        CHECK((x.values - bm.values).cwiseAbs().maxCoeff() == 0.0);
    }
    SUBCASE("correlated increments match the target covariance") {
        Matrix sigma(2, 2);
        sigma << 1.0, 0.5, 0.5, 1.0;
        const auto p = rbm::NetworkParams::make(Vector::Zero(2), sigma, Matrix::Identity(2, 2));
        rbm::SeedCounter c;
        auto rng = rbm::sample_stream(4, 1);
        const std::int64_t n = 100000;
        const auto x = rbm::apply_drift_diffusion(rbm::sample_brownian_steps(2, base, 0, n, rng, c), p);
        Matrix cov = Matrix::Zero(2, 2);
        for (Eigen::Index k = 0; k < n; ++k) {
            const Eigen::RowVector2d inc = x.values.row(k + 1) - x.values.row(k);
            cov += inc.transpose() * inc;
        }
        cov /= static_cast<double>(n);
        CHECK((cov - sigma).cwiseAbs().maxCoeff() < 0.02);
    }
    SUBCASE("dimension mismatch is a shape error") {
        rbm::SeedCounter c;
        auto rng = rbm::sample_stream(4, 2);
        const auto bm = rbm::sample_brownian_steps(3, base, 1, 5, rng, c);
        CHECK(kind_of([&] { rbm::apply_drift_diffusion(bm, plain(2)); }) == ErrorKind::shape);
    }
}

TEST_CASE("windows re-base, compose and glue") {
    const auto base = rbm::StepBase::from_gamma(0.1);
    rbm::SeedCounter c;
    auto rng = rbm::sample_stream(5, 0);
    const auto p = rbm::sample_fine_path(rbm::build_symmetric(3, 0.8), base, 1, 2.0, rng, c);
    REQUIRE(p.num_steps() == 20);

    const auto whole = rbm::window(p, 0.0, 2.0);
    CHECK((whole.values - p.values).cwiseAbs().maxCoeff() == 0.0);

    const auto w = rbm::window(p, 0.5, 1.7);
    CHECK(w.num_steps() == 12);
    CHECK(w.values.row(0).cwiseAbs().maxCoeff() == 0.0);
    CHECK(w.origin_time == doctest::Approx(0.5));

    // window of a window is the direct window
    const auto nested = rbm::window(w, 0.3, 0.9);
    const auto direct = rbm::window(p, 0.8, 1.4);
    CHECK((nested.values - direct.values).cwiseAbs().maxCoeff() < 1e-13);

    // P(s) + window(s, t)(t - s) == P(t)
    const auto glue = rbm::window(p, 0.4, 2.0);
    for (Eigen::Index k = 0; k <= glue.num_steps(); ++k) {
        const Eigen::RowVectorXd lhs = p.values.row(4) + glue.values.row(k);
        CHECK((lhs - p.values.row(4 + k)).cwiseAbs().maxCoeff() < 1e-13);
    }

    // the view has the same increments as the materialised window
    const rbm::PathWindow view(p, 5, 12);
    for (Eigen::Index k = 0; k < 12; ++k) {
        CHECK((view.value(k + 1) - w.values.row(k + 1)).cwiseAbs().maxCoeff() < 1e-13);
    }

    CHECK(kind_of([&] { rbm::window(p, 0.55, 1.0); }) == ErrorKind::alignment);
    CHECK(kind_of([&] { rbm::window(p, 1.0, 2.5); }) == ErrorKind::alignment);
}

TEST_CASE("path dumps round-trip") {
    const auto base = rbm::StepBase::from_gamma(0.05);
    rbm::SeedCounter c;
    auto rng = rbm::sample_stream(6, 0);
    const auto p = rbm::sample_brownian_steps(4, base, 2, 37, rng, c);

    std::stringstream text;
    rbm::write_path_text(p, text);
    const auto t = rbm::read_path_text(text);
    CHECK(t.level == 2);
    CHECK(t.step == p.step);
    CHECK((t.values - p.values).cwiseAbs().maxCoeff() == 0.0);

    std::stringstream bin(std::ios::in | std::ios::out | std::ios::binary);
    rbm::write_path_binary(p, bin);
    const auto b = rbm::read_path_binary(bin);
    CHECK((b.values - p.values).cwiseAbs().maxCoeff() == 0.0);

    std::stringstream broken("3 1 0.1\n");
    CHECK_THROWS_AS(rbm::read_path_text(broken), rbm::Error);
}
