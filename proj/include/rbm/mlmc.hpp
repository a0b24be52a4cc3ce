#pragma once

#include "rbm/params.hpp"
#include "rbm/paths.hpp"
#include "rbm/skorokhod.hpp"

#include <cstdint>
#include <optional>
#include <string>
#include <string_view>
#include <vector>

namespace rbm {

inline constexpr std::uint64_t kDefaultSeed = 20190611;

/// Lipschitz-1 (sup norm) functionals of the terminal state.
class Payoff {
public:
    enum class Kind { first_coordinate, coordinate, average };

    Payoff() = default;
    static Payoff first() { return Payoff(Kind::first_coordinate, 0); }
    /// Zero-based coordinate.
    static Payoff coordinate(std::size_t index) { return Payoff(Kind::coordinate, index); }
    static Payoff average() { return Payoff(Kind::average, 0); }
    /// "first", "mean", or "coord:<i>" with a one-based i.
    static Payoff parse(std::string_view text);

    double operator()(const Vector& y) const;
    std::string name() const;
    void validate(std::size_t d) const;

    Kind kind() const noexcept { return kind_; }

private:
    Payoff(Kind kind, std::size_t index) : kind_(kind), index_(index) {}
    Kind kind_ = Kind::first_coordinate;
    std::size_t index_ = 0;
};

enum class Convention { experiment, theory };

Convention parse_convention(std::string_view text);
std::string_view to_string(Convention c);

struct HyperOptions {
    Convention convention = Convention::experiment;
    /// Additive constant in the level count; -2 is the experimental value.
    double k1 = -2.0;
    /// Mixing-rate constant, required by the theory convention.
    std::optional<double> xi1;
};

struct Hyperparams {
    double T = 0.0;
    int L = 1;
    std::int64_t N = 1;
};

/// Window length T, level count L (clamped to >= 1) and rounds
/// N = ceil(K(gamma)^{-1} gamma^{-L} L). With 1/gamma = n integral,
/// K^{-1} gamma^{-L} = n + n^2 + ... + n^L, so N is computed exactly.
Hyperparams hyperparams(std::size_t d, double epsilon, double gamma, const HyperOptions& options = {});

/// N = ceil(K(gamma)^{-1} gamma^{-L} L) for a given L.
std::int64_t simulation_rounds(double gamma, int L);

/// K(gamma) = (1 - gamma) / (1 - gamma^L).
double normalizing_constant(double gamma, int L);

/// p(m) = K(gamma) gamma^m for m = 0..L-1.
std::vector<double> level_distribution(double gamma, int L);

/// Worst-case lower bound on the mixing constant xi_1 (far from tight).
double xi1_lower_bound(double beta0, double kappa0, double b0, double delta0);

/// Leading gamma dependence of the expected cost, gamma^{-1} (log 1/gamma)^{-3}.
double gamma_cost_factor(double gamma);

struct MLMCConfig {
    double gamma = 0.05;
    double T = 1.0;
    int L = 1;
    std::int64_t N = 1;
    /// Empty means the origin.
    Vector y0;
    double epsilon = 0.05;
    std::uint64_t master_seed = kDefaultSeed;
    Payoff payoff;
    /// 0 = hardware concurrency. Results do not depend on it.
    unsigned threads = 1;
    LcpOptions lcp;

    void validate(std::size_t d) const;
    Vector initial_state(std::size_t d) const;
    /// T is snapped up to the level-1 grid: T_eff = gamma * window_steps().
    std::int64_t window_steps() const;
    double effective_T() const;
};

MLMCConfig make_config(std::size_t d, double epsilon, double gamma = 0.05,
                       const HyperOptions& options = {});

struct LevelSample {
    int m = 0;
    Vector fine_terminal;
    Vector coarse_terminal;
    double z = 0.0;
    std::uint64_t seeds_used = 0;
};

/// One draw of the coupled estimator: M ~ p, a level-(M+1) Brownian path on
/// [0, (M+1)T], its restriction to level M, fine term reflected over the
/// whole window, coarse term reflected over the shifted window [T, (M+1)T].
/// Deterministic in (master_seed, sample_index).
LevelSample sample_once(const NetworkParams& params, const MLMCConfig& config,
                        std::uint64_t sample_index);

/// Same construction with the level forced to `level`. The level variate is
/// still consumed, so sample_at_level(i, M_i) == sample_once(i).
LevelSample sample_at_level(const NetworkParams& params, const MLMCConfig& config,
                            std::uint64_t sample_index, int level);

/// The level M_i that sample_once(i) uses, without sampling the path.
int sample_level(const MLMCConfig& config, std::uint64_t sample_index);

struct LevelStats {
    int m = 0;
    std::int64_t count = 0;
    double mean_z = 0.0;
    double var_z = 0.0;  // unbiased sample variance; 0 when count < 2
};

struct EstimatorOutput {
    double estimate = 0.0;
    std::vector<LevelStats> per_level;
    std::uint64_t total_seeds = 0;
    double wall_time_s = 0.0;
    double T_effective = 0.0;
    int L = 0;
    std::int64_t N = 0;
};

/// f(y0) + mean of N independent z draws, reduced in sample order.
EstimatorOutput estimate(const NetworkParams& params, const MLMCConfig& config);

/// Expected normals per sample, sum_m p(m) d ceil((m+1) T / gamma^{m+1}),
/// with the snapped T that the sampler uses.
double expected_seeds_per_sample(std::size_t d, const MLMCConfig& config);

}  // namespace rbm
