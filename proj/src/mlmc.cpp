#include "rbm/mlmc.hpp"

#include "rbm/errors.hpp"
#include "rbm/parallel.hpp"

#include <chrono>
#include <cmath>
#include <limits>

namespace rbm {

Payoff Payoff::parse(std::string_view text) {
    if (text == "first") return first();
    if (text == "mean" || text == "average") return average();
    if (text.substr(0, 6) == "coord:") {
        const std::string digits(text.substr(6));
        std::size_t used = 0;
        long long i = 0;
        try {
            i = std::stoll(digits, &used);
        } catch (const std::exception&) {
            used = 0;
        }
        if (used == digits.size() && !digits.empty() && i >= 1) {
            return coordinate(static_cast<std::size_t>(i - 1));
        }
    }
    throw Error(ErrorKind::validation, "unknown payoff '" + std::string(text) +
                                           "' (expected first, mean, or coord:<i>)");
}

double Payoff::operator()(const Vector& y) const {
    switch (kind_) {
    case Kind::first_coordinate: return y(0);
    case Kind::coordinate: return y(static_cast<Eigen::Index>(index_));
    case Kind::average: return y.mean();
    }
    return 0.0;
}

std::string Payoff::name() const {
    switch (kind_) {
    case Kind::first_coordinate: return "first";
    case Kind::coordinate: return "coord:" + std::to_string(index_ + 1);
    case Kind::average: return "mean";
    }
    return "first";
}

void Payoff::validate(std::size_t d) const {
    if (kind_ == Kind::coordinate && index_ >= d) {
        throw Error(ErrorKind::validation, "payoff coordinate " + std::to_string(index_ + 1) +
                                               " exceeds dimension " + std::to_string(d));
    }
}

Convention parse_convention(std::string_view text) {
    if (text == "experiment") return Convention::experiment;
    if (text == "theory") return Convention::theory;
    throw Error(ErrorKind::validation, "unknown convention '" + std::string(text) + "'");
}

std::string_view to_string(Convention c) {
    return c == Convention::theory ? "theory" : "experiment";
}

namespace {

std::int64_t rounds_exact(std::int64_t n, int L) {
    // N = L * (n + n^2 + ... + n^L)
    std::int64_t sum = 0;
    std::int64_t power = 1;
    constexpr auto kMax = std::numeric_limits<std::int64_t>::max();
    for (int j = 1; j <= L; ++j) {
        if (power > kMax / n) throw Error(ErrorKind::size, "simulation rounds overflow");
        power *= n;
        if (sum > kMax - power) throw Error(ErrorKind::size, "simulation rounds overflow");
        sum += power;
    }
    if (sum > kMax / L) throw Error(ErrorKind::size, "simulation rounds overflow");
    return sum * L;
}

}  // namespace

Hyperparams hyperparams(std::size_t d, double epsilon, double gamma, const HyperOptions& options) {
    if (d < 2) throw Error(ErrorKind::domain, "hyperparameters need d >= 2 (log log d)");
    if (!(epsilon > 0.0 && epsilon < 1.0)) throw Error(ErrorKind::domain, "epsilon must lie in (0, 1)");
    const StepBase base = StepBase::from_gamma(gamma);

    const double logd = std::log(static_cast<double>(d));
    const double log_inv_gamma = std::log(static_cast<double>(base.reciprocal()));

    Hyperparams hp;
    if (options.convention == Convention::experiment) {
        hp.T = logd * logd / 2.0;
    } else {
        if (!options.xi1 || !(*options.xi1 > 0.0)) {
            throw Error(ErrorKind::parameter, "theory convention needs xi1 > 0");
        }
        hp.T = std::ceil((3.0 * logd * logd + log_inv_gamma * logd) / *options.xi1);
    }
    const double levels =
        std::ceil((std::log(logd) + 2.0 * std::log(1.0 / epsilon) + options.k1) / log_inv_gamma);
    hp.L = levels < 1.0 ? 1 : static_cast<int>(levels);
    hp.N = rounds_exact(base.reciprocal(), hp.L);
    return hp;
}

std::int64_t simulation_rounds(double gamma, int L) {
    if (L < 1) throw Error(ErrorKind::configuration, "L must be >= 1");
    return rounds_exact(StepBase::from_gamma(gamma).reciprocal(), L);
}

double normalizing_constant(double gamma, int L) {
    if (!(gamma > 0.0 && gamma < 1.0) || L < 1) {
        throw Error(ErrorKind::configuration, "level distribution needs gamma in (0, 1) and L >= 1");
    }
    return (1.0 - gamma) / (1.0 - std::pow(gamma, L));
}

std::vector<double> level_distribution(double gamma, int L) {
    const double k = normalizing_constant(gamma, L);
    std::vector<double> p(static_cast<std::size_t>(L));
    double g = 1.0;
    for (auto& pm : p) {
        pm = k * g;
        g *= gamma;
    }
    return p;
}

double xi1_lower_bound(double beta0, double kappa0, double b0, double delta0) {
    if (!(beta0 > 0.0 && beta0 < 1.0) || !(kappa0 > 0.0) || !(b0 > 0.0) || !(delta0 > 0.0)) {
        throw Error(ErrorKind::parameter, "xi1 bound needs beta0 in (0, 1) and positive constants");
    }
    constexpr double kD1 = 1.0 / 557065.0;
    const double mixing = std::log(2.0) / std::log(1.0 / (1.0 - beta0)) + 1.0;
    const double spread = 2.0 + kappa0 * kappa0 * b0 / (beta0 * beta0 * delta0 * delta0);
    return kD1 / (mixing * spread);
}

double gamma_cost_factor(double gamma) {
    if (!(gamma > 0.0 && gamma < 1.0)) throw Error(ErrorKind::configuration, "gamma must lie in (0, 1)");
    const double l = std::log(1.0 / gamma);
    return 1.0 / (gamma * l * l * l);
}

void MLMCConfig::validate(std::size_t d) const {
    StepBase::from_gamma(gamma);
    if (!(T > 0.0) || !std::isfinite(T)) throw Error(ErrorKind::configuration, "T must be positive");
    if (L < 1) throw Error(ErrorKind::configuration, "L must be >= 1");
    if (N < 1) throw Error(ErrorKind::configuration, "N must be >= 1");
    if (y0.size() != 0) {
        if (y0.size() != static_cast<Eigen::Index>(d)) {
            throw Error(ErrorKind::shape, "y0 has the wrong dimension");
        }
        if (y0.minCoeff() < 0.0) throw Error(ErrorKind::configuration, "y0 must be nonnegative");
    }
    payoff.validate(d);
    // The finest path must be representable.
    const StepBase base = StepBase::from_gamma(gamma);
    const std::int64_t k = window_steps();
    const std::int64_t refine = base.refinement(L - 1);
    if (k > std::numeric_limits<std::int64_t>::max() / refine / L) {
        throw Error(ErrorKind::size, "finest path overflows the index type");
    }
}

Vector MLMCConfig::initial_state(std::size_t d) const {
    return y0.size() == 0 ? Vector::Zero(static_cast<Eigen::Index>(d)) : y0;
}

std::int64_t MLMCConfig::window_steps() const {
    return steps_to_cover(T, StepBase::from_gamma(gamma).step(1));
}

double MLMCConfig::effective_T() const {
    return static_cast<double>(window_steps()) * StepBase::from_gamma(gamma).step(1);
}

MLMCConfig make_config(std::size_t d, double epsilon, double gamma, const HyperOptions& options) {
    const Hyperparams hp = hyperparams(d, epsilon, gamma, options);
    MLMCConfig c;
    c.gamma = gamma;
    c.T = hp.T;
    c.L = hp.L;
    c.N = hp.N;
    c.epsilon = epsilon;
    return c;
}

namespace {

int draw_level(Rng& rng, const std::vector<double>& p) {
    std::uniform_real_distribution<double> uniform(0.0, 1.0);
    const double u = uniform(rng);
    double cumulative = 0.0;
    for (std::size_t m = 0; m + 1 < p.size(); ++m) {
        cumulative += p[m];
        if (u < cumulative) return static_cast<int>(m);
    }
    return static_cast<int>(p.size()) - 1;
}

LevelSample sample_impl(const NetworkParams& params, const MLMCConfig& config,
                        std::uint64_t sample_index, std::optional<int> forced_level) {
    const std::size_t d = params.dim();
    const StepBase base = StepBase::from_gamma(config.gamma);
    const std::vector<double> p = level_distribution(config.gamma, config.L);
    const Vector y0 = config.initial_state(d);

    Rng rng = sample_stream(config.master_seed, sample_index);
    const int drawn = draw_level(rng, p);
    const int m = forced_level.value_or(drawn);
    if (m < 0 || m >= config.L) throw Error(ErrorKind::configuration, "level outside [0, L)");

    // T = k gamma lies on every grid of level >= 1.
    const std::int64_t k = config.window_steps();
    const std::int64_t fine_steps = (m + 1) * k * base.refinement(m);

    SeedCounter counter;
    const GridPath fine_bm = sample_brownian_steps(d, base, m + 1, fine_steps, rng, counter);
    const GridPath fine_x = apply_drift_diffusion(fine_bm, params);

    LcpSolver solver(params.refl(), config.lcp);
    LevelSample s;
    s.m = m;
    s.fine_terminal = reflect_terminal(PathWindow(fine_x, 0, fine_x.num_steps()), solver, y0);

    if (m == 0) {
        // Coarse window [T, T] is empty.
        s.coarse_terminal = y0;
    } else {
        const GridPath coarse_x = apply_drift_diffusion(restrict_to_coarse(fine_bm, base), params);
        const std::int64_t t_index = k * base.refinement(m - 1);
        s.coarse_terminal =
            reflect_terminal(PathWindow(coarse_x, t_index, m * t_index), solver, y0);
    }

    s.z = (config.payoff(s.fine_terminal) - config.payoff(s.coarse_terminal)) /
          p[static_cast<std::size_t>(m)];
    s.seeds_used = counter.count();
    return s;
}

}  // namespace

LevelSample sample_once(const NetworkParams& params, const MLMCConfig& config,
                        std::uint64_t sample_index) {
    config.validate(params.dim());
    try {
        return sample_impl(params, config, sample_index, std::nullopt);
    } catch (const Error& e) {
        throw e.annotated("sample " + std::to_string(sample_index));
    }
}

LevelSample sample_at_level(const NetworkParams& params, const MLMCConfig& config,
                            std::uint64_t sample_index, int level) {
    config.validate(params.dim());
    try {
        return sample_impl(params, config, sample_index, level);
    } catch (const Error& e) {
        throw e.annotated("sample " + std::to_string(sample_index));
    }
}

int sample_level(const MLMCConfig& config, std::uint64_t sample_index) {
    Rng rng = sample_stream(config.master_seed, sample_index);
    return draw_level(rng, level_distribution(config.gamma, config.L));
}

EstimatorOutput estimate(const NetworkParams& params, const MLMCConfig& config) {
    const auto start = std::chrono::steady_clock::now();
    const std::size_t d = params.dim();
    config.validate(d);
    if (!params.is_stable()) {
        throw Error(ErrorKind::assumption, "R^{-1} mu is not entrywise negative; no stationary law");
    }

    struct Draw {
        int m;
        double z;
        std::uint64_t seeds;
    };
    const auto n = static_cast<std::uint64_t>(config.N);
    std::vector<Draw> draws(n);
    parallel_for(n, config.threads, [&](std::uint64_t i) {
        LevelSample s;
        try {
            s = sample_impl(params, config, i, std::nullopt);
        } catch (const Error& e) {
            throw e.annotated("sample " + std::to_string(i));
        }
        draws[i] = Draw{s.m, s.z, s.seeds_used};
    });

    EstimatorOutput out;
    out.per_level.resize(static_cast<std::size_t>(config.L));
    std::vector<double> m2(out.per_level.size(), 0.0);
    for (std::size_t m = 0; m < out.per_level.size(); ++m) out.per_level[m].m = static_cast<int>(m);

    double sum = 0.0;
    for (const Draw& dr : draws) {
        sum += dr.z;
        out.total_seeds += dr.seeds;
        auto& lv = out.per_level[static_cast<std::size_t>(dr.m)];
        lv.count += 1;
        const double delta = dr.z - lv.mean_z;
        lv.mean_z += delta / static_cast<double>(lv.count);
        m2[static_cast<std::size_t>(dr.m)] += delta * (dr.z - lv.mean_z);
    }
    for (std::size_t m = 0; m < out.per_level.size(); ++m) {
        auto& lv = out.per_level[m];
        lv.var_z = lv.count > 1 ? m2[m] / static_cast<double>(lv.count - 1) : 0.0;
    }

    out.estimate = config.payoff(config.initial_state(d)) + sum / static_cast<double>(n);
    out.T_effective = config.effective_T();
    out.L = config.L;
    out.N = config.N;
    out.wall_time_s =
        std::chrono::duration<double>(std::chrono::steady_clock::now() - start).count();
    return out;
}

double expected_seeds_per_sample(std::size_t d, const MLMCConfig& config) {
    config.validate(d);
    const StepBase base = StepBase::from_gamma(config.gamma);
    const std::vector<double> p = level_distribution(config.gamma, config.L);
    const double t_eff = config.effective_T();
    double total = 0.0;
    for (int m = 0; m < config.L; ++m) {
        const double steps = static_cast<double>(
            steps_to_cover(static_cast<double>(m + 1) * t_eff, base.step(m + 1)));
        total += p[static_cast<std::size_t>(m)] * steps * static_cast<double>(d);
    }
    return total;
}

}  // namespace rbm
