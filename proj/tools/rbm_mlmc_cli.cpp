// rbm-mlmc: steady-state estimation for reflected Brownian motion.
//
//   rbm-mlmc run   [--plan plan.json] [flags]   -> records CSV (+ .plan.json sidecar)
//   rbm-mlmc mse   [--plan plan.json] [flags]   -> MSE summary CSV
//   rbm-mlmc fit   --in records.csv             -> log-log slope of seeds vs d
//   rbm-mlmc check [--model m.txt | --beta b --d n]
//
// Exit codes: 0 ok, 2 validation, 3 assumption failure, 4 I/O.

#include "rbm/errors.hpp"
#include "rbm/harness.hpp"
#include "rbm/mlmc.hpp"
#include "rbm/params.hpp"

#include <CLI11.hpp>

#include <iostream>
#include <optional>
#include <string>
#include <vector>

namespace {

struct PlanFlags {
    std::string plan_file;
    std::string model_file;
    std::optional<std::uint64_t> seed;
    std::string out;
    std::vector<double> gammas;
    std::optional<double> eps;
    std::vector<std::size_t> dims;
    std::optional<double> beta;
    std::string convention;
    std::optional<int> reps;
    std::optional<unsigned> threads;
    std::optional<double> k1;
    std::optional<double> xi1;
    std::string payoff;
    bool quiet = false;
};

void add_plan_flags(CLI::App* cmd, PlanFlags& f) {
    cmd->add_option("--plan", f.plan_file, "JSON plan file")->check(CLI::ExistingFile);
    cmd->add_option("--model", f.model_file, "key=value model file (overrides the plan model)")
        ->check(CLI::ExistingFile);
    cmd->add_option("--seed", f.seed, "master seed");
    cmd->add_option("--out", f.out, "output CSV path");
    cmd->add_option("--gamma", f.gammas, "step-size base(s), 1/gamma integral")->delimiter(',');
    cmd->add_option("--eps", f.eps, "target RMSE epsilon");
    cmd->add_option("--dims", f.dims, "dimensions, comma separated")->delimiter(',');
    cmd->add_option("--beta", f.beta, "symmetric-family load parameter");
    cmd->add_option("--convention", f.convention, "hyperparameter convention")
        ->check(CLI::IsMember({"experiment", "theory"}));
    cmd->add_option("--reps", f.reps, "replications per (d, gamma)");
    cmd->add_option("--threads", f.threads, "worker threads (0 = all cores)");
    cmd->add_option("--k1", f.k1, "level-count constant");
    cmd->add_option("--xi1", f.xi1, "mixing constant for the theory convention");
    cmd->add_option("--payoff", f.payoff, "first | mean | coord:<i>");
    cmd->add_flag("--quiet", f.quiet, "no progress lines");
}

rbm::ExperimentPlan resolve_plan(const PlanFlags& f) {
    rbm::ExperimentPlan plan;
    if (!f.plan_file.empty()) plan = rbm::load_plan(f.plan_file);
    if (!f.model_file.empty()) {
        const rbm::LoadedModel loaded = rbm::load_model(f.model_file);
        if (loaded.beta) {
            plan.model.kind = rbm::ModelChoice::Kind::symmetric;
            plan.model.beta = *loaded.beta;
            plan.model.drift = loaded.params.mu()(0);
            if (plan.dims.empty()) plan.dims = {loaded.params.dim()};
        } else {
            plan.model.kind = rbm::ModelChoice::Kind::explicit_matrices;
            plan.model.mu = loaded.params.mu();
            plan.model.sigma = loaded.params.sigma();
            plan.model.refl = loaded.params.refl();
            plan.dims = {loaded.params.dim()};
        }
    }
    if (f.beta) {
        plan.model.kind = rbm::ModelChoice::Kind::symmetric;
        plan.model.beta = *f.beta;
    }
    if (f.seed) plan.master_seed = *f.seed;
    if (!f.gammas.empty()) plan.gammas = f.gammas;
    if (f.eps) plan.epsilon = *f.eps;
    if (!f.dims.empty()) plan.dims = f.dims;
    if (!f.convention.empty()) plan.hyper.convention = rbm::parse_convention(f.convention);
    if (f.reps) plan.replications = *f.reps;
    if (f.threads) plan.threads = *f.threads;
    if (f.k1) plan.hyper.k1 = *f.k1;
    if (f.xi1) plan.hyper.xi1 = *f.xi1;
    if (!f.payoff.empty()) plan.payoff = f.payoff;
    return plan;
}

int cmd_run(const PlanFlags& f) {
    rbm::ExperimentPlan plan = resolve_plan(f);
    if (!f.out.empty()) plan.output = f.out;
    if (plan.output.empty()) plan.output = "records.csv";
    const auto records = rbm::run_plan(plan, f.quiet ? nullptr : &std::cerr);
    std::cout << "wrote " << records.size() << " records to " << plan.output.string() << "\n";
    return 0;
}

int cmd_mse(const PlanFlags& f, const std::string& records_path) {
    rbm::ExperimentPlan plan = resolve_plan(f);
    const std::string summary_path = f.out.empty() ? "mse_summary.csv" : f.out;
    if (!records_path.empty()) {
        plan.output = records_path;
    } else if (plan.output.empty()) {
        plan.output = std::filesystem::path(summary_path).replace_extension().string() + "_records.csv";
    }
    const rbm::MseSummary summary = rbm::mse_study(plan, f.quiet ? nullptr : &std::cerr);
    for (const auto& note : summary.notices) std::cerr << "notice: " << note << "\n";
    rbm::write_mse_csv(summary, summary_path);
    for (const auto& r : summary.rows) {
        std::cout << "d=" << r.d << " gamma=" << r.gamma << " reps=" << r.replications;
        if (r.mse) std::cout << " mse=" << *r.mse;
        if (r.band_low) std::cout << " band=[" << *r.band_low << ", " << *r.band_high << "]";
        std::cout << " eps^2=" << r.epsilon * r.epsilon << "\n";
    }
    std::cout << "wrote " << summary_path << "\n";
    return 0;
}

int cmd_fit(const std::string& in, std::optional<double> gamma) {
    auto records = rbm::read_records(in);
    if (gamma) {
        std::erase_if(records, [&](const rbm::ExperimentRecord& r) {
            return std::llround(1.0 / r.gamma) != std::llround(1.0 / *gamma);
        });
    }
    const rbm::ComplexityFit fit = rbm::complexity_fit(records);
    std::cout << "d,mean_total_seeds\n";
    for (const auto& [d, seeds] : fit.mean_seeds) std::cout << d << ',' << seeds << "\n";
    std::cout << "slope=" << fit.slope << " intercept=" << fit.intercept << " r2=" << fit.r_squared
              << "\n";
    return 0;
}

int cmd_check(const std::string& model_file, std::optional<double> beta, std::optional<std::size_t> d,
              const std::optional<double>& beta0, const std::optional<double>& kappa0,
              const std::optional<double>& delta0, const std::optional<double>& b0, int n_max) {
    std::optional<rbm::LoadedModel> model;
    if (!model_file.empty()) {
        model = rbm::load_model(model_file);
    } else if (beta && d) {
        model = rbm::LoadedModel{beta, rbm::build_symmetric(*d, *beta)};
    } else {
        throw rbm::Error(rbm::ErrorKind::validation, "check needs --model or both --beta and --d");
    }
    rbm::UniformityConstants k = model->beta ? rbm::symmetric_constants(*model->beta) : rbm::UniformityConstants{};
    if (beta0) k.beta0 = *beta0;
    if (kappa0) k.kappa0 = *kappa0;
    if (delta0) k.delta0 = *delta0;
    if (b0) k.b0 = *b0;
    const rbm::AssumptionReport rep = rbm::check_assumptions(model->params, k, n_max);
    std::cout << "d=" << model->params.dim() << "\n" << rep.to_text(k);
    if (model->beta && model->params.mu().isConstant(-1.0)) {
        std::cout << "steady-state mean per station = "
                  << rbm::steady_state_truth(model->params, *model->beta).value << "\n";
    }
    return rep.all_ok() ? 0 : 3;
}

}  // namespace

int main(int argc, char** argv) {
    CLI::App app{"Multilevel Monte Carlo for steady-state reflected Brownian motion"};
    app.require_subcommand(1);

    PlanFlags run_flags;
    auto* run = app.add_subcommand("run", "run a plan and write the records CSV");
    add_plan_flags(run, run_flags);

    PlanFlags mse_flags;
    std::string mse_records;
    auto* mse = app.add_subcommand("mse", "replication study: MSE and 95% band per (d, gamma)");
    add_plan_flags(mse, mse_flags);
    mse->add_option("--records", mse_records, "records CSV (default: <out>_records.csv)");

    std::string fit_in;
    std::optional<double> fit_gamma;
    auto* fit = app.add_subcommand("fit", "log-log slope of total seeds against d");
    fit->add_option("--in", fit_in, "records CSV")->required()->check(CLI::ExistingFile);
    fit->add_option("--gamma", fit_gamma, "keep only this gamma");

    std::string check_model;
    std::optional<double> check_beta, beta0, kappa0, delta0, b0;
    std::optional<std::size_t> check_d;
    int n_max = rbm::kDefaultPowerDepth;
    auto* check = app.add_subcommand("check", "report the uniformity assumptions for a model");
    check->add_option("--model", check_model, "key=value model file")->check(CLI::ExistingFile);
    check->add_option("--beta", check_beta, "symmetric-family load parameter");
    check->add_option("--d", check_d, "symmetric-family dimension");
    check->add_option("--beta0", beta0);
    check->add_option("--kappa0", kappa0);
    check->add_option("--delta0", delta0);
    check->add_option("--b0", b0);
    check->add_option("--n-max", n_max, "matrix powers checked for contraction");

    try {
        app.parse(argc, argv);
    } catch (const CLI::ParseError& e) {
        const int rc = app.exit(e);
        return rc == 0 ? 0 : 2;
    }

    try {
        if (*run) return cmd_run(run_flags);
        if (*mse) return cmd_mse(mse_flags, mse_records);
        if (*fit) return cmd_fit(fit_in, fit_gamma);
        if (*check) return cmd_check(check_model, check_beta, check_d, beta0, kappa0, delta0, b0, n_max);
    } catch (const rbm::Error& e) {
        std::cerr << "error: " << e.what() << "\n";
        return rbm::exit_code(e.kind());
    } catch (const std::exception& e) {
        std::cerr << "error: " << e.what() << "\n";
        return 2;
    }
    return 0;
}
