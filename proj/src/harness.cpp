#include "rbm/harness.hpp"

#include "rbm/errors.hpp"

#include <json.hpp>

#include <algorithm>
#include <charconv>
#include <cmath>
#include <fstream>
#include <map>
#include <set>
#include <sstream>
#include <tuple>

namespace rbm {

using nlohmann::json;

namespace {

std::string num(double v) {
    char buf[64];
    auto res = std::to_chars(buf, buf + sizeof buf, v);
    return std::string(buf, res.ptr);
}

std::string opt_num(const std::optional<double>& v) { return v ? num(*v) : std::string(); }

double parse_double(const std::string& field, const char* column) {
    double v = 0.0;
    auto res = std::from_chars(field.data(), field.data() + field.size(), v);
    if (res.ec != std::errc() || res.ptr != field.data() + field.size()) {
        throw Error(ErrorKind::validation,
                    std::string("column ") + column + ": not a number: '" + field + "'");
    }
    return v;
}

template <class Int>
Int parse_int(const std::string& field, const char* column) {
    Int v = 0;
    auto res = std::from_chars(field.data(), field.data() + field.size(), v);
    if (res.ec != std::errc() || res.ptr != field.data() + field.size()) {
        throw Error(ErrorKind::validation,
                    std::string("column ") + column + ": not an integer: '" + field + "'");
    }
    return v;
}

std::vector<std::string> split(const std::string& line, char sep) {
    std::vector<std::string> out;
    std::string cur;
    for (char c : line) {
        if (c == sep) {
            out.push_back(cur);
            cur.clear();
        } else if (c != '\r') {
            cur.push_back(c);
        }
    }
    out.push_back(cur);
    return out;
}

std::uint64_t splitmix(std::uint64_t x) {
    x += 0x9e3779b97f4a7c15ULL;
    x = (x ^ (x >> 30)) * 0xbf58476d1ce4e5b9ULL;
    x = (x ^ (x >> 27)) * 0x94d049bb133111ebULL;
    return x ^ (x >> 31);
}

using CellKey = std::tuple<std::size_t, std::int64_t, int>;  // (d, 1/gamma, replication)

CellKey key_of(std::size_t d, double gamma, int rep) {
    return {d, static_cast<std::int64_t>(std::llround(1.0 / gamma)), rep};
}

}  // namespace

NetworkParams ModelChoice::build(std::size_t d) const {
    if (kind == Kind::symmetric) return build_symmetric(d, beta, drift);
    if (static_cast<std::size_t>(mu.size()) != d) {
        throw Error(ErrorKind::validation, "explicit model has dimension " +
                                               std::to_string(mu.size()) + ", plan asks for " +
                                               std::to_string(d));
    }
    return NetworkParams::make(mu, sigma, refl);
}

std::optional<double> ModelChoice::truth(std::size_t d, const Payoff&) const {
    // Every station has the same stationary mean, so single coordinates and
    // the average share it.
    if (kind != Kind::symmetric || drift != -1.0) return std::nullopt;
    return steady_state_truth(build(d), beta).value;
}

void ExperimentPlan::validate() const {
    if (dims.empty()) throw Error(ErrorKind::validation, "plan needs at least one dimension");
    for (std::size_t d : dims) {
        if (d < 2) throw Error(ErrorKind::validation, "every dimension must be >= 2");
    }
    if (replications < 1) throw Error(ErrorKind::validation, "replications must be >= 1");
    if (gammas.empty()) throw Error(ErrorKind::validation, "plan needs at least one gamma");
    for (double g : gammas) {
        try {
            StepBase::from_gamma(g);
        } catch (const Error& e) {
            throw Error(ErrorKind::validation, e.what());
        }
    }
    if (!(epsilon > 0.0 && epsilon < 1.0)) throw Error(ErrorKind::validation, "epsilon must lie in (0, 1)");
    if (T && !(*T > 0.0)) throw Error(ErrorKind::validation, "T override must be positive");
    if (L && *L < 1) throw Error(ErrorKind::validation, "L override must be >= 1");
    if (N && *N < 1) throw Error(ErrorKind::validation, "N override must be >= 1");
    if (hyper.convention == Convention::theory && !T && (!hyper.xi1 || !(*hyper.xi1 > 0.0))) {
        throw Error(ErrorKind::validation, "theory convention needs xi1 > 0");
    }
    if (model.kind == ModelChoice::Kind::symmetric && !(model.beta > 0.0 && model.beta < 1.0)) {
        throw Error(ErrorKind::validation, "beta must lie in (0, 1)");
    }
    if (constants) constants->validate();
    Payoff::parse(payoff);
}

MLMCConfig ExperimentPlan::config_for(std::size_t d, double gamma, int replication) const {
    MLMCConfig c;
    Hyperparams hp;
    try {
        hp = hyperparams(d, epsilon, gamma, hyper);
    } catch (const Error&) {
        // Overrides may make the formula unnecessary (theory mode without xi1 but explicit T).
        if (!T) throw;
        HyperOptions fallback = hyper;
        fallback.convention = Convention::experiment;
        hp = hyperparams(d, epsilon, gamma, fallback);
    }
    c.gamma = gamma;
    c.T = T.value_or(hp.T);
    c.L = L.value_or(hp.L);
    if (N) {
        c.N = *N;
    } else {
        c.N = L ? simulation_rounds(gamma, *L) : hp.N;
    }
    c.epsilon = epsilon;
    c.master_seed = cell_seed(master_seed, d, gamma, replication);
    c.payoff = Payoff::parse(payoff);
    c.threads = threads;
    return c;
}

std::uint64_t cell_seed(std::uint64_t master_seed, std::size_t d, double gamma, int replication) {
    const auto [dd, inv_gamma, rep] = key_of(d, gamma, replication);
    std::uint64_t h = splitmix(master_seed);
    h = splitmix(h ^ static_cast<std::uint64_t>(dd));
    h = splitmix(h ^ static_cast<std::uint64_t>(inv_gamma));
    h = splitmix(h ^ static_cast<std::uint64_t>(rep));
    return h;
}

namespace {

Matrix matrix_from_json(const json& j, const char* name) {
    if (!j.is_array() || j.empty()) throw Error(ErrorKind::validation, std::string(name) + " must be a matrix");
    const auto rows = static_cast<Eigen::Index>(j.size());
    Matrix m(rows, rows);
    for (Eigen::Index i = 0; i < rows; ++i) {
        const json& row = j[static_cast<std::size_t>(i)];
        if (!row.is_array() || static_cast<Eigen::Index>(row.size()) != rows) {
            throw Error(ErrorKind::validation, std::string(name) + " must be square");
        }
        for (Eigen::Index k = 0; k < rows; ++k) m(i, k) = row[static_cast<std::size_t>(k)].get<double>();
    }
    return m;
}

json matrix_to_json(const Matrix& m) {
    json out = json::array();
    for (Eigen::Index i = 0; i < m.rows(); ++i) {
        json row = json::array();
        for (Eigen::Index k = 0; k < m.cols(); ++k) row.push_back(m(i, k));
        out.push_back(row);
    }
    return out;
}

}  // namespace

ExperimentPlan parse_plan(const std::string& json_text) {
    json j;
    try {
        j = json::parse(json_text);
    } catch (const json::exception& e) {
        throw Error(ErrorKind::validation, std::string("plan is not valid JSON: ") + e.what());
    }
    if (!j.is_object()) throw Error(ErrorKind::validation, "plan must be a JSON object");

    static const std::set<std::string> known = {
        "model", "dims", "gammas", "epsilon", "replications", "convention", "k1", "xi1", "T",
        "L", "N", "constants", "payoff", "master_seed", "threads", "output", "cells"};
    for (const auto& [key, _] : j.items()) {
        if (!known.count(key)) throw Error(ErrorKind::validation, "unknown plan key '" + key + "'");
    }

    ExperimentPlan plan;
    try {
        if (j.contains("model")) {
            const json& m = j["model"];
            const std::string type = m.value("type", "symmetric");
            if (type == "symmetric") {
                plan.model.kind = ModelChoice::Kind::symmetric;
                plan.model.beta = m.value("beta", 0.8);
                plan.model.drift = m.value("drift", -1.0);
            } else if (type == "explicit") {
                plan.model.kind = ModelChoice::Kind::explicit_matrices;
                const auto mu = m.at("mu").get<std::vector<double>>();
                plan.model.mu = Eigen::Map<const Vector>(mu.data(), static_cast<Eigen::Index>(mu.size()));
                plan.model.sigma = matrix_from_json(m.at("sigma"), "sigma");
                plan.model.refl = matrix_from_json(m.at("refl"), "refl");
            } else {
                throw Error(ErrorKind::validation, "unknown model type '" + type + "'");
            }
        }
        plan.dims = j.at("dims").get<std::vector<std::size_t>>();
        if (j.contains("gammas")) plan.gammas = j["gammas"].get<std::vector<double>>();
        plan.epsilon = j.value("epsilon", plan.epsilon);
        plan.replications = j.value("replications", plan.replications);
        if (j.contains("convention")) plan.hyper.convention = parse_convention(j["convention"].get<std::string>());
        plan.hyper.k1 = j.value("k1", plan.hyper.k1);
        if (j.contains("xi1") && !j["xi1"].is_null()) plan.hyper.xi1 = j["xi1"].get<double>();
        if (j.contains("T") && !j["T"].is_null()) plan.T = j["T"].get<double>();
        if (j.contains("L") && !j["L"].is_null()) plan.L = j["L"].get<int>();
        if (j.contains("N") && !j["N"].is_null()) plan.N = j["N"].get<std::int64_t>();
        if (j.contains("constants") && !j["constants"].is_null()) {
            const json& k = j["constants"];
            UniformityConstants c;
            c.beta0 = k.at("beta0").get<double>();
            c.kappa0 = k.at("kappa0").get<double>();
            c.delta0 = k.at("delta0").get<double>();
            c.b0 = k.at("b0").get<double>();
            c.lipschitz_f = k.value("lipschitz_f", 1.0);
            plan.constants = c;
        }
        plan.payoff = j.value("payoff", plan.payoff);
        plan.master_seed = j.value("master_seed", plan.master_seed);
        plan.threads = j.value("threads", plan.threads);
        if (j.contains("output") && !j["output"].is_null()) plan.output = j["output"].get<std::string>();
    } catch (const json::exception& e) {
        throw Error(ErrorKind::validation, std::string("bad plan field: ") + e.what());
    }
    return plan;
}

ExperimentPlan load_plan(const std::filesystem::path& path) {
    std::ifstream in(path);
    if (!in) throw Error(ErrorKind::io, "cannot open plan " + path.string());
    std::ostringstream ss;
    ss << in.rdbuf();
    return parse_plan(ss.str());
}

std::string plan_to_json(const ExperimentPlan& plan) {
    json j;
    if (plan.model.kind == ModelChoice::Kind::symmetric) {
        j["model"] = {{"type", "symmetric"}, {"beta", plan.model.beta}, {"drift", plan.model.drift}};
    } else {
        j["model"] = {{"type", "explicit"},
                      {"mu", std::vector<double>(plan.model.mu.data(), plan.model.mu.data() + plan.model.mu.size())},
                      {"sigma", matrix_to_json(plan.model.sigma)},
                      {"refl", matrix_to_json(plan.model.refl)}};
    }
    j["dims"] = plan.dims;
    j["gammas"] = plan.gammas;
    j["epsilon"] = plan.epsilon;
    j["replications"] = plan.replications;
    j["convention"] = std::string(to_string(plan.hyper.convention));
    j["k1"] = plan.hyper.k1;
    j["xi1"] = plan.hyper.xi1 ? json(*plan.hyper.xi1) : json(nullptr);
    j["T"] = plan.T ? json(*plan.T) : json(nullptr);
    j["L"] = plan.L ? json(*plan.L) : json(nullptr);
    j["N"] = plan.N ? json(*plan.N) : json(nullptr);
    if (plan.constants) {
        j["constants"] = {{"beta0", plan.constants->beta0},
                          {"kappa0", plan.constants->kappa0},
                          {"delta0", plan.constants->delta0},
                          {"b0", plan.constants->b0},
                          {"lipschitz_f", plan.constants->lipschitz_f}};
    } else {
        j["constants"] = nullptr;
    }
    j["payoff"] = plan.payoff;
    j["master_seed"] = plan.master_seed;
    j["threads"] = plan.threads;
    j["output"] = plan.output.string();

    json cells = json::array();
    for (std::size_t d : plan.dims) {
        for (double g : plan.gammas) {
            const MLMCConfig c = plan.config_for(d, g, 0);
            cells.push_back({{"d", d}, {"gamma", g}, {"T", c.T}, {"T_effective", c.effective_T()},
                             {"L", c.L}, {"N", c.N}});
        }
    }
    j["cells"] = cells;
    return j.dump(2) + "\n";
}

std::string records_header() {
    return "d,gamma,epsilon,replication,estimate,truth,abs_error,total_seeds,wall_time_s,L,T,N,per_level";
}

std::string format_record(const ExperimentRecord& r) {
    std::ostringstream os;
    os << r.d << ',' << num(r.gamma) << ',' << num(r.epsilon) << ',' << r.replication << ','
       << num(r.estimate) << ',' << opt_num(r.truth) << ',' << opt_num(r.abs_error) << ','
       << r.total_seeds << ',' << num(r.wall_time_s) << ',' << r.L << ',' << num(r.T) << ','
       << r.N << ',';
    for (std::size_t i = 0; i < r.per_level.size(); ++i) {
        const LevelStats& lv = r.per_level[i];
        if (i) os << ';';
        os << lv.m << ':' << lv.count << ':' << num(lv.mean_z) << ':' << num(lv.var_z);
    }
    return os.str();
}

std::vector<ExperimentRecord> parse_records(std::istream& in) {
    std::string line;
    if (!std::getline(in, line)) return {};
    if (!line.empty() && line.back() == '\r') line.pop_back();
    if (line != records_header()) {
        throw Error(ErrorKind::validation, "records header mismatch: '" + line + "'");
    }
    std::vector<ExperimentRecord> out;
    int lineno = 1;
    while (std::getline(in, line)) {
        ++lineno;
        if (line.empty() || line == "\r") continue;
        const auto f = split(line, ',');
        if (f.size() != 13) {
            throw Error(ErrorKind::validation, "records line " + std::to_string(lineno) +
                                                   ": expected 13 fields");
        }
        ExperimentRecord r;
        r.d = parse_int<std::size_t>(f[0], "d");
        r.gamma = parse_double(f[1], "gamma");
        r.epsilon = parse_double(f[2], "epsilon");
        r.replication = parse_int<int>(f[3], "replication");
        r.estimate = parse_double(f[4], "estimate");
        if (!f[5].empty()) r.truth = parse_double(f[5], "truth");
        if (!f[6].empty()) r.abs_error = parse_double(f[6], "abs_error");
        r.total_seeds = parse_int<std::uint64_t>(f[7], "total_seeds");
        r.wall_time_s = parse_double(f[8], "wall_time_s");
        r.L = parse_int<int>(f[9], "L");
        r.T = parse_double(f[10], "T");
        r.N = parse_int<std::int64_t>(f[11], "N");
        if (!f[12].empty()) {
            for (const auto& level : split(f[12], ';')) {
                const auto parts = split(level, ':');
                if (parts.size() != 4) throw Error(ErrorKind::validation, "bad per_level entry '" + level + "'");
                LevelStats lv;
                lv.m = parse_int<int>(parts[0], "per_level");
                lv.count = parse_int<std::int64_t>(parts[1], "per_level");
                lv.mean_z = parse_double(parts[2], "per_level");
                lv.var_z = parse_double(parts[3], "per_level");
                r.per_level.push_back(lv);
            }
        }
        out.push_back(std::move(r));
    }
    return out;
}

std::vector<ExperimentRecord> read_records(const std::filesystem::path& path) {
    std::ifstream in(path);
    if (!in) throw Error(ErrorKind::io, "cannot open records " + path.string());
    return parse_records(in);
}

std::vector<ExperimentRecord> run_plan(const ExperimentPlan& plan, std::ostream* log) {
    plan.validate();
    const Payoff payoff = Payoff::parse(plan.payoff);

    // Check every model before any simulation starts.
    for (std::size_t d : plan.dims) {
        const NetworkParams params = plan.model.build(d);
        payoff.validate(d);
        if (!params.is_stable()) {
            throw Error(ErrorKind::assumption, "d=" + std::to_string(d) +
                                                   ": R^{-1} mu is not entrywise negative");
        }
        if (plan.constants) {
            const AssumptionReport rep = check_assumptions(params, *plan.constants);
            if (!rep.all_ok()) {
                throw Error(ErrorKind::assumption,
                            "d=" + std::to_string(d) + "\n" + rep.to_text(*plan.constants));
            }
        }
    }

    std::map<CellKey, ExperimentRecord> done;
    const bool persist = !plan.output.empty();
    if (persist && std::filesystem::exists(plan.output) && std::filesystem::file_size(plan.output) > 0) {
        for (auto& r : read_records(plan.output)) {
            done.emplace(key_of(r.d, r.gamma, r.replication), std::move(r));
        }
    }

    std::ofstream out;
    if (persist) {
        if (plan.output.has_parent_path()) {
            std::error_code ec;
            std::filesystem::create_directories(plan.output.parent_path(), ec);
        }
        const bool fresh = !std::filesystem::exists(plan.output) || std::filesystem::file_size(plan.output) == 0;
        out.open(plan.output, std::ios::app);
        if (!out) throw Error(ErrorKind::io, "cannot write " + plan.output.string());
        if (fresh) out << records_header() << '\n' << std::flush;

        std::ofstream sidecar(plan.output.string() + ".plan.json");
        sidecar << plan_to_json(plan);
        if (!sidecar) throw Error(ErrorKind::io, "cannot write plan sidecar next to " + plan.output.string());
    }

    const std::size_t total = plan.dims.size() * plan.gammas.size() * static_cast<std::size_t>(plan.replications);
    std::vector<ExperimentRecord> records;
    records.reserve(total);
    std::size_t persisted = 0;
    for (std::size_t d : plan.dims) {
        const NetworkParams params = plan.model.build(d);
        const std::optional<double> truth = plan.model.truth(d, payoff);
        for (double gamma : plan.gammas) {
            for (int rep = 0; rep < plan.replications; ++rep) {
                const CellKey key = key_of(d, gamma, rep);
                if (auto it = done.find(key); it != done.end()) {
                    records.push_back(it->second);
                    ++persisted;
                    continue;
                }
                const MLMCConfig config = plan.config_for(d, gamma, rep);
                const EstimatorOutput est = estimate(params, config);

                ExperimentRecord r;
                r.d = d;
                r.gamma = gamma;
                r.epsilon = plan.epsilon;
                r.replication = rep;
                r.estimate = est.estimate;
                r.truth = truth;
                if (truth) r.abs_error = std::abs(est.estimate - *truth);
                r.total_seeds = est.total_seeds;
                r.wall_time_s = est.wall_time_s;
                r.L = est.L;
                r.T = est.T_effective;
                r.N = est.N;
                r.per_level = est.per_level;

                if (persist) {
                    out << format_record(r) << '\n' << std::flush;
                    if (!out) {
                        std::ostringstream msg;
                        msg << "failed writing " << plan.output.string() << "; persisted " << persisted
                            << " of " << total << " records. Resume token: d=" << d << " gamma=" << gamma
                            << " replication=" << rep << " (rerun the same plan to continue)";
                        throw Error(ErrorKind::io, msg.str());
                    }
                    ++persisted;
                }
                if (log) {
                    *log << "d=" << d << " gamma=" << gamma << " rep=" << rep << " estimate=" << r.estimate
                         << " seeds=" << r.total_seeds << " time=" << r.wall_time_s << "s\n";
                }
                records.push_back(std::move(r));
            }
        }
    }
    return records;
}

MseSummary summarize_mse(const std::vector<ExperimentRecord>& records) {
    std::map<std::pair<std::size_t, std::int64_t>, std::vector<const ExperimentRecord*>> groups;
    for (const auto& r : records) {
        groups[{r.d, static_cast<std::int64_t>(std::llround(1.0 / r.gamma))}].push_back(&r);
    }
    MseSummary summary;
    for (const auto& [key, group] : groups) {
        MseRow row;
        row.d = key.first;
        row.gamma = group.front()->gamma;
        row.epsilon = group.front()->epsilon;
        row.replications = static_cast<int>(group.size());
        const double n = static_cast<double>(group.size());

        double mean = 0.0;
        for (const auto* r : group) mean += r->estimate;
        mean /= n;
        double var = 0.0;
        for (const auto* r : group) var += (r->estimate - mean) * (r->estimate - mean);
        row.mean_estimate = mean;
        row.var_estimate = group.size() > 1 ? var / (n - 1.0) : 0.0;

        const bool have_truth =
            std::all_of(group.begin(), group.end(), [](const auto* r) { return r->truth.has_value(); });
        if (!have_truth) {
            summary.notices.push_back("d=" + std::to_string(row.d) + " gamma=" + num(row.gamma) +
                                      ": no closed-form truth, MSE skipped (variance only)");
            summary.rows.push_back(row);
            continue;
        }
        row.truth = *group.front()->truth;
        std::vector<double> sq;
        sq.reserve(group.size());
        for (const auto* r : group) sq.push_back((r->estimate - *r->truth) * (r->estimate - *r->truth));
        double mse = 0.0;
        for (double s : sq) mse += s;
        mse /= n;
        row.mse = mse;
        if (row.replications >= kMinBandReplications) {
            double ss = 0.0;
            for (double s : sq) ss += (s - mse) * (s - mse);
            const double half = 1.96 * std::sqrt(ss / (n - 1.0)) / std::sqrt(n);
            row.band_low = mse - half;
            row.band_high = mse + half;
        } else {
            summary.notices.push_back("d=" + std::to_string(row.d) + " gamma=" + num(row.gamma) +
                                      ": fewer than " + std::to_string(kMinBandReplications) +
                                      " replications, band suppressed");
        }
        summary.rows.push_back(row);
    }
    return summary;
}

MseSummary mse_study(const ExperimentPlan& plan, std::ostream* log) {
    return summarize_mse(run_plan(plan, log));
}

void write_mse_csv(const MseSummary& summary, const std::filesystem::path& path) {
    std::ofstream out(path);
    if (!out) throw Error(ErrorKind::io, "cannot write " + path.string());
    out << "d,gamma,epsilon,replications,truth,mse,band_low,band_high,mean_estimate,var_estimate\n";
    for (const auto& r : summary.rows) {
        out << r.d << ',' << num(r.gamma) << ',' << num(r.epsilon) << ',' << r.replications << ','
            << opt_num(r.truth) << ',' << opt_num(r.mse) << ',' << opt_num(r.band_low) << ','
            << opt_num(r.band_high) << ',' << num(r.mean_estimate) << ',' << num(r.var_estimate) << '\n';
    }
    if (!out) throw Error(ErrorKind::io, "failed writing " + path.string());
}

ComplexityFit complexity_fit(const std::vector<ExperimentRecord>& records) {
    if (records.empty()) throw Error(ErrorKind::insufficient_data, "no records");
    std::set<std::pair<std::int64_t, double>> settings;
    std::map<std::size_t, std::pair<double, int>> by_d;
    for (const auto& r : records) {
        settings.insert({std::llround(1.0 / r.gamma), r.epsilon});
        auto& [sum, count] = by_d[r.d];
        sum += static_cast<double>(r.total_seeds);
        ++count;
    }
    if (settings.size() != 1) {
        throw Error(ErrorKind::validation, "records mix several (gamma, epsilon) settings; filter first");
    }
    if (by_d.size() < 4) {
        throw Error(ErrorKind::insufficient_data, "need at least 4 distinct d, got " + std::to_string(by_d.size()));
    }

    ComplexityFit fit;
    std::vector<double> xs, ys;
    for (const auto& [d, acc] : by_d) {
        const double mean = acc.first / acc.second;
        if (!(mean > 0.0)) throw Error(ErrorKind::validation, "seed counts must be positive");
        fit.mean_seeds.emplace_back(d, mean);
        xs.push_back(std::log(static_cast<double>(d)));
        ys.push_back(std::log(mean));
    }
    const double n = static_cast<double>(xs.size());
    double mx = 0.0, my = 0.0;
    for (std::size_t i = 0; i < xs.size(); ++i) {
        mx += xs[i];
        my += ys[i];
    }
    mx /= n;
    my /= n;
    double sxx = 0.0, sxy = 0.0, syy = 0.0;
    for (std::size_t i = 0; i < xs.size(); ++i) {
        sxx += (xs[i] - mx) * (xs[i] - mx);
        sxy += (xs[i] - mx) * (ys[i] - my);
        syy += (ys[i] - my) * (ys[i] - my);
    }
    fit.slope = sxy / sxx;
    fit.intercept = my - fit.slope * mx;
    fit.r_squared = syy > 0.0 ? (sxy * sxy) / (sxx * syy) : 1.0;
    return fit;
}

}  // namespace rbm
