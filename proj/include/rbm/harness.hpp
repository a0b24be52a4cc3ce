#pragma once

#include "rbm/mlmc.hpp"
#include "rbm/params.hpp"

#include <cstdint>
#include <filesystem>
#include <iosfwd>
#include <optional>
#include <string>
#include <vector>

namespace rbm {

struct ModelChoice {
    enum class Kind { symmetric, explicit_matrices };

    Kind kind = Kind::symmetric;
    double beta = 0.8;
    double drift = -1.0;
    // explicit_matrices only
    Vector mu;
    Matrix sigma;
    Matrix refl;

    NetworkParams build(std::size_t d) const;
    /// Closed-form E[f(Y(inf))] when known (symmetric family, drift -1,
    /// payoff on a single coordinate or the average).
    std::optional<double> truth(std::size_t d, const Payoff& payoff) const;
};

/// Sweep over dims x gammas x replications.
///
/// JSON schema (every key optional except "dims"):
///
///     {
///       "model": {"type": "symmetric", "beta": 0.8, "drift": -1.0}
///             | {"type": "explicit", "mu": [...], "sigma": [[...]], "refl": [[...]]},
///       "dims": [5, 10, 20],
///       "gammas": [0.05],
///       "epsilon": 0.05,
///       "replications": 1,
///       "convention": "experiment" | "theory",
///       "k1": -2.0, "xi1": null,
///       "T": null, "L": null, "N": null,          // overrides
///       "constants": {"beta0": .., "kappa0": .., "delta0": .., "b0": ..} | null,
///       "payoff": "first" | "mean" | "coord:<i>",
///       "master_seed": 20190611,
///       "threads": 1,
///       "output": "records.csv"
///     }
struct ExperimentPlan {
    ModelChoice model;
    std::vector<std::size_t> dims;
    std::vector<double> gammas{0.05};
    double epsilon = 0.05;
    int replications = 1;
    HyperOptions hyper;
    std::optional<double> T;
    std::optional<int> L;
    std::optional<std::int64_t> N;
    std::optional<UniformityConstants> constants;
    std::string payoff = "first";
    std::uint64_t master_seed = kDefaultSeed;
    unsigned threads = 1;
    std::filesystem::path output;

    void validate() const;
    /// Config for one (d, gamma, replication) cell.
    MLMCConfig config_for(std::size_t d, double gamma, int replication) const;
};

ExperimentPlan parse_plan(const std::string& json_text);
ExperimentPlan load_plan(const std::filesystem::path& path);
/// Resolved plan with every default written out, plus the (T, L, N) of each
/// (d, gamma) cell.
std::string plan_to_json(const ExperimentPlan& plan);

/// Seed of one cell; depends only on the key, never on execution order.
std::uint64_t cell_seed(std::uint64_t master_seed, std::size_t d, double gamma, int replication);

struct ExperimentRecord {
    std::size_t d = 0;
    double gamma = 0.0;
    double epsilon = 0.0;
    int replication = 0;
    double estimate = 0.0;
    std::optional<double> truth;
    std::optional<double> abs_error;
    std::uint64_t total_seeds = 0;
    double wall_time_s = 0.0;
    int L = 0;
    double T = 0.0;
    std::int64_t N = 0;
    std::vector<LevelStats> per_level;
};

/// Fixed column order of the records CSV.
std::string records_header();
std::string format_record(const ExperimentRecord& r);
std::vector<ExperimentRecord> parse_records(std::istream& in);
std::vector<ExperimentRecord> read_records(const std::filesystem::path& path);

/// Runs every (d, gamma, replication) cell in key order. With an output path,
/// rows are appended as they complete and cells already present in the file
/// are skipped (resume). `log` receives progress lines when non-null.
std::vector<ExperimentRecord> run_plan(const ExperimentPlan& plan, std::ostream* log = nullptr);

struct MseRow {
    std::size_t d = 0;
    double gamma = 0.0;
    double epsilon = 0.0;
    int replications = 0;
    std::optional<double> truth;
    std::optional<double> mse;
    std::optional<double> band_low;
    std::optional<double> band_high;
    double mean_estimate = 0.0;
    double var_estimate = 0.0;
};

struct MseSummary {
    std::vector<MseRow> rows;
    std::vector<std::string> notices;
};

/// Minimum replications for the normal-approximation band.
inline constexpr int kMinBandReplications = 30;

MseSummary summarize_mse(const std::vector<ExperimentRecord>& records);
MseSummary mse_study(const ExperimentPlan& plan, std::ostream* log = nullptr);
void write_mse_csv(const MseSummary& summary, const std::filesystem::path& path);

struct ComplexityFit {
    double slope = 0.0;
    double intercept = 0.0;
    double r_squared = 0.0;
    std::vector<std::pair<std::size_t, double>> mean_seeds;  // (d, mean total_seeds)
};

/// OLS of log(mean total_seeds) on log(d). Records must share one
/// (gamma, epsilon) and cover at least four distinct d.
ComplexityFit complexity_fit(const std::vector<ExperimentRecord>& records);

}  // namespace rbm
