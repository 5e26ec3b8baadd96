#include "lqrl/harness.hpp"

#include <algorithm>
#include <charconv>
#include <cmath>
#include <filesystem>
#include <functional>
#include <iostream>
#include <map>
#include <sstream>

#include <Eigen/Core>

#include "lqrl/actor_critic.hpp"
#include "lqrl/error.hpp"
#include "lqrl/exact.hpp"
#include "lqrl/experiments.hpp"
#include "lqrl/parallel.hpp"
#include "lqrl/policy_gradient.hpp"
#include "lqrl/policy_iteration.hpp"
#include "lqrl/rng.hpp"
#include "lqrl/sim.hpp"
#include "lqrl/td.hpp"

namespace lqrl {

using nlohmann::json;
namespace fs = std::filesystem;

// ---------------------------------------------------------------- CSV

std::string format_number(double v) {
    if (std::isnan(v)) return "nan";
    if (std::isinf(v)) return v > 0 ? "inf" : "-inf";
    char buf[64];
    const auto res = std::to_chars(buf, buf + sizeof buf, v);
    return std::string(buf, res.ptr);
}

CsvWriter::CsvWriter(const std::string& path, const std::vector<std::string>& header)
    : out_(path), columns_(header.size()) {
    if (!out_) throw Error(ErrorCode::ConfigInvalid, "cannot write " + path);
    for (const auto& h : header) *this << h;
    end_row();
}

void CsvWriter::separator() {
    if (cell_++ > 0) out_ << ',';
}

CsvWriter& CsvWriter::operator<<(double v) {
    separator();
    out_ << format_number(v);
    return *this;
}

CsvWriter& CsvWriter::operator<<(long v) {
    separator();
    out_ << v;
    return *this;
}

CsvWriter& CsvWriter::operator<<(const std::string& v) {
    separator();
    if (v.find_first_of(",\"\n") == std::string::npos) {
        out_ << v;
    } else {
        out_ << '"';
        for (char c : v) out_ << (c == '"' ? std::string("\"\"") : std::string(1, c));
        out_ << '"';
    }
    return *this;
}

void CsvWriter::end_row() {
    if (cell_ != columns_) throw Error(ErrorCode::ConfigInvalid, "CSV row has the wrong number of cells");
    out_ << '\n';
    cell_ = 0;
}

int exit_code_for(const std::exception& e) {
    if (const auto* err = dynamic_cast<const Error*>(&e)) return err->is_guard_exit() ? 2 : 1;
    return 1;
}

// ---------------------------------------------------------------- config

namespace {

enum Kind : unsigned { kNum = 1, kStr = 2, kBool = 4, kArr = 8, kObj = 16 };

struct Field {
    const char* key;
    json def;
    unsigned kinds;
};

using Schema = std::vector<Field>;

unsigned kind_of(const json& j) {
    if (j.is_number()) return kNum;
    if (j.is_string()) return kStr;
    if (j.is_boolean()) return kBool;
    if (j.is_array()) return kArr;
    if (j.is_object()) return kObj;
    return 0;
}

json apply_schema(const json& in, const Schema& schema, const std::string& where) {
    if (!in.is_object()) throw Error(ErrorCode::ConfigInvalid, where + " must be an object");
    json out = json::object();
    for (const auto& f : schema) out[f.key] = f.def;
    for (const auto& [key, value] : in.items()) {
        const auto it = std::find_if(schema.begin(), schema.end(), [&](const Field& f) { return key == f.key; });
        if (it == schema.end()) throw Error(ErrorCode::ConfigInvalid, "unknown key " + where + "." + key);
        if (!(kind_of(value) & it->kinds))
            throw Error(ErrorCode::ConfigInvalid, where + "." + key + " has the wrong type");
        out[key] = value;
    }
    return out;
}

const std::map<std::string, Schema>& block_schemas() {
    static const std::map<std::string, Schema> schemas = {
        {"solve", {{"riccati", false, kBool}, {"riccati_tol", 1e-10, kNum}}},
        {"sim", {{"L", 100, kNum}, {"start", "zero", kStr}}},
        {"td",
         {{"mode", "stochastic", kStr},
          {"critic", "value", kStr},
          {"steps", 1000, kNum},
          {"step_size", "paper", kStr | kNum},
          {"sample", "iid", kStr},
          {"norm_source", "oracle", kStr},
          {"M_theta", 0.0, kNum},
          {"stop_on_guard", true, kBool},
          {"history_stride", 1, kNum}}},
        {"pi",
         {{"T", 20, kNum | kStr},
          {"q_source", "exact", kStr},
          {"eps0", 1e-3, kNum},
          {"rel_tol", 1e-4, kNum},
          {"td_steps", 1000000, kNum},
          {"td_alpha", 2.0, kNum | kStr},
          {"td_sample", "iid", kStr},
          {"stop_on_q_miss", true, kBool}}},
        {"pg",
         {{"T", 5000, kNum | kStr},
          {"L", 40, kNum | kStr},
          {"alpha", "auto", kNum | kStr},
          {"c_alpha", 1.0, kNum},
          {"c_T", 1.0, kNum},
          {"c_L", 1.0, kNum},
          {"eps", 0.05, kNum},
          {"delta", 0.1, kNum},
          {"batch", 1, kNum},
          {"pilot_reps", 200, kNum},
          {"M_G", 0.0, kNum},
          {"oracle_gradient", false, kBool},
          {"record_stride", 1, kNum},
          {"max_T", 100000000, kNum}}},
        {"ac",
         {{"T", 500, kNum | kStr},
          {"L", 40, kNum | kStr},
          {"alpha", "auto", kNum | kStr},
          {"c_alpha", 1.0, kNum},
          {"c_T", 1.0, kNum},
          {"c_L", 1.0, kNum},
          {"eps", 0.05, kNum},
          {"delta", 0.1, kNum},
          {"batch", 1, kNum},
          {"pilot_reps", 200, kNum},
          {"M_G_AC", 0.0, kNum},
          {"record_stride", 1, kNum},
          {"max_T", 100000000, kNum},
          {"critic", "td", kStr},
          {"critic_steps", 10000, kNum},
          {"critic_alpha", "paper", kNum | kStr},
          {"critic_update", "stochastic", kStr},
          {"critic_refresh", 1, kNum}}},
        {"compare", {{"L_grid", "10:80:10", kStr | kArr}, {"reps", 10000, kNum}}},
        {"check",
         {{"include_ref1", true, kBool},
          {"instances", 3, kNum},
          {"instance_seed", 0, kNum},
          {"riccati_tol", 1e-10, kNum}}},
        {"sweep",
         {{"target", "td", kStr},
          {"param", "N", kStr},
          {"values", json::array(), kArr},
          {"reps", 100000, kNum},
          {"L_ref", 300, kNum},
          {"rel_tol", 1e-4, kNum},
          {"T", 5, kNum},
          {"L", 40, kNum},
          {"alpha", 1e-3, kNum},
          {"eps", 0.05, kNum},
          {"td_steps", 1000000, kNum},
          {"td_alpha", 2.0, kNum}}},
    };
    return schemas;
}

const Schema& top_schema() {
    static const Schema s = {
        {"algorithm", nullptr, kStr},   {"model", nullptr, kStr | kObj}, {"policy", nullptr, kStr | kArr | kNum},
        {"seeds", json::array({0}), kArr}, {"output_dir", ".", kStr},   {"out", "", kStr},
    };
    return s;
}

void require_choice(const json& block, const char* key, std::initializer_list<const char*> choices,
                    const std::string& where) {
    const auto& v = block[key];
    if (!v.is_string()) return;
    for (const char* c : choices)
        if (v.get<std::string>() == c) return;
    throw Error(ErrorCode::ConfigInvalid, where + "." + key + " has an unsupported value " + v.dump());
}

long as_count(const json& v, const std::string& what, long min_value) {
    if (!v.is_number()) throw Error(ErrorCode::ConfigInvalid, what + " must be a number");
    const double d = v.get<double>();
    if (d != std::floor(d) || d < static_cast<double>(min_value) || d > 9e15)
        throw Error(ErrorCode::ConfigInvalid, what + " must be an integer >= " + std::to_string(min_value));
    return static_cast<long>(d);
}

double positive(const json& v, const std::string& what) {
    const double d = v.get<double>();
    if (!(d > 0.0) || !std::isfinite(d)) throw Error(ErrorCode::ConfigInvalid, what + " must be positive");
    return d;
}

std::vector<long> parse_grid(const json& g) {
    std::vector<long> out;
    if (g.is_array()) {
        for (const auto& v : g) out.push_back(as_count(v, "grid value", 0));
    } else {
        const std::string s = g.get<std::string>();
        long a = 0, b = 0, step = 0;
        char c1 = 0, c2 = 0;
        std::istringstream is(s);
        if (!(is >> a >> c1 >> b >> c2 >> step) || c1 != ':' || c2 != ':' || step <= 0 || b < a || !is.eof())
            throw Error(ErrorCode::ConfigInvalid, "grid must look like start:stop:step, got " + s);
        for (long v = a; v <= b; v += step) out.push_back(v);
    }
    if (out.empty()) throw Error(ErrorCode::ConfigInvalid, "grid is empty");
    return out;
}

}  // namespace

json load_config(const std::string& path) {
    if (!fs::exists(path)) throw Error(ErrorCode::ModelFileMissing, path);
    std::ifstream in(path);
    try {
        return json::parse(in);
    } catch (const json::parse_error& e) {
        throw Error(ErrorCode::ConfigInvalid, path + ": " + e.what());
    }
}

json normalize_config(const json& config) {
    if (!config.is_object()) throw Error(ErrorCode::ConfigInvalid, "config must be a JSON object");
    if (!config.contains("algorithm") || !config["algorithm"].is_string())
        throw Error(ErrorCode::ConfigInvalid, "config needs a string key algorithm");
    const std::string algo = config["algorithm"].get<std::string>();
    const auto& schemas = block_schemas();
    if (!schemas.count(algo)) throw Error(ErrorCode::ConfigInvalid, "unknown algorithm " + algo);

    json top_in = config;
    json block_in = json::object();
    if (top_in.contains(algo)) {
        block_in = top_in[algo];
        top_in.erase(algo);
    }
    json out = apply_schema(top_in, top_schema(), "config");
    out[algo] = apply_schema(block_in, schemas.at(algo), algo);
    json& b = out[algo];

    if (algo != "check" && out["model"].is_null())
        throw Error(ErrorCode::ConfigInvalid, "config needs a model");
    if (algo != "check" && out["policy"].is_null())
        throw Error(ErrorCode::ConfigInvalid, algo + " needs a policy");
    if (out["seeds"].empty()) throw Error(ErrorCode::ConfigInvalid, "seeds must not be empty");
    for (const auto& s : out["seeds"])
        if (!s.is_number_integer() || s.get<long long>() < 0) throw Error(ErrorCode::ConfigInvalid, "seeds must be non-negative integers");

    if (algo == "sim") {
        as_count(b["L"], "sim.L", 0);
        require_choice(b, "start", {"zero", "stationary"}, algo);
    } else if (algo == "td") {
        require_choice(b, "mode", {"semi", "stochastic"}, algo);
        require_choice(b, "critic", {"value", "q"}, algo);
        require_choice(b, "step_size", {"paper"}, algo);
        require_choice(b, "sample", {"iid", "trajectory"}, algo);
        require_choice(b, "norm_source", {"oracle", "sample"}, algo);
        as_count(b["steps"], "td.steps", 1);
        as_count(b["history_stride"], "td.history_stride", 1);
    } else if (algo == "pi") {
        require_choice(b, "T", {"auto"}, algo);
        if (b["T"].is_number()) as_count(b["T"], "pi.T", 0);
        require_choice(b, "q_source", {"exact", "td"}, algo);
        require_choice(b, "td_alpha", {"paper"}, algo);
        require_choice(b, "td_sample", {"iid", "trajectory"}, algo);
        as_count(b["td_steps"], "pi.td_steps", 1);
        positive(b["rel_tol"], "pi.rel_tol");
    } else if (algo == "pg" || algo == "ac") {
        require_choice(b, "T", {"auto"}, algo);
        require_choice(b, "alpha", {"auto", "moment"}, algo);
        if (algo == "pg") require_choice(b, "L", {"auto"}, algo);
        if (algo == "ac") {
            require_choice(b, "L", {"threshold", "table1"}, algo);
            require_choice(b, "critic", {"td", "oracle"}, algo);
            require_choice(b, "critic_alpha", {"paper"}, algo);
            require_choice(b, "critic_update", {"semi", "stochastic"}, algo);
            as_count(b["critic_steps"], "ac.critic_steps", 1);
            as_count(b["critic_refresh"], "ac.critic_refresh", 1);
        }
        if (b["T"].is_number()) as_count(b["T"], algo + ".T", 0);
        if (b["L"].is_number()) as_count(b["L"], algo + ".L", 0);
        as_count(b["batch"], algo + ".batch", 1);
        as_count(b["record_stride"], algo + ".record_stride", 1);
        positive(b["eps"], algo + ".eps");
    } else if (algo == "compare") {
        parse_grid(b["L_grid"]);
        as_count(b["reps"], "compare.reps", 2);
    } else if (algo == "check") {
        as_count(b["instances"], "check.instances", 0);
        positive(b["riccati_tol"], "check.riccati_tol");
    } else if (algo == "sweep") {
        require_choice(b, "target", {"td", "pg", "ac", "pi"}, algo);
        require_choice(b, "param", {"N", "L", "T", "eps0", "gamma"}, algo);
        if (b["values"].size() < 2) throw Error(ErrorCode::ConfigInvalid, "sweep needs at least two grid values");
        for (const auto& v : b["values"])
            if (!v.is_number()) throw Error(ErrorCode::ConfigInvalid, "sweep values must be numbers");
    }
    return out;
}

// ---------------------------------------------------------------- runners

namespace {

struct Context {
    json cfg;
    std::string algo;
    json block;
    LqrModel model;
    Mat K;
    std::vector<std::uint64_t> seeds;
    std::string out;  // primary output path
    Report report;
    bool guard = false;
    json results = json::object();
    json parameters = json::object();
    json monitored = json::array();
};

std::string with_suffix(const std::string& path, const std::string& suffix) {
    const fs::path p(path);
    return (p.parent_path() / (p.stem().string() + suffix + p.extension().string())).string();
}

std::string summary_path_for(const std::string& out) {
    const fs::path p(out);
    return (p.parent_path() / (p.stem().string() + ".summary.json")).string();
}

// One output file per seed when several seeds are configured.
std::string per_seed_path(const Context& c, std::size_t i) {
    return c.seeds.size() == 1 ? c.out : with_suffix(c.out, "_seed" + std::to_string(c.seeds[i]));
}

void monitor(Context& c, const std::string& name, bool passed, double value, double bound) {
    c.monitored.push_back({{"name", name}, {"passed", passed}, {"value", value}, {"bound", bound}});
}

double delta0_of(const LqrModel& m, const Mat& K, double* J_star) {
    const double js = cost(m, riccati(m).K_star);
    if (J_star) *J_star = js;
    return cost(m, K) - js;
}

TdConfig td_config_from(const json& b, std::uint64_t seed) {
    TdConfig cfg;
    cfg.steps = b["steps"].get<long>();
    cfg.update = b["mode"] == "semi" ? TdUpdate::Semi : TdUpdate::Stochastic;
    if (b["step_size"].is_number()) {
        cfg.step_size = StepSizeMode::Fixed;
        cfg.alpha = b["step_size"].get<double>();
    } else {
        cfg.step_size = cfg.update == TdUpdate::Semi ? StepSizeMode::PaperSemi : StepSizeMode::PaperStochastic;
    }
    cfg.sample = b["sample"] == "trajectory" ? SampleMode::SingleTrajectory : SampleMode::IidStationary;
    cfg.norm_source = b["norm_source"] == "sample" ? NormSource::SampleEstimate : NormSource::Oracle;
    cfg.M_theta = b["M_theta"].get<double>();
    cfg.stop_on_guard = b["stop_on_guard"].get<bool>();
    cfg.history_stride = b["history_stride"].get<long>();
    cfg.seed = seed;
    return cfg;
}

void run_solve(Context& c) {
    const auto q = closed_loop_quantities(c.model, c.K);
    json r{{"feasibility", to_string(q.feasibility)},
           {"P", matrix_to_json(q.P)},
           {"Sigma", matrix_to_json(q.Sigma)},
           {"J", q.J},
           {"grad", matrix_to_json(q.grad)}};
    if (q.D_K) r["D_K"] = matrix_to_json(*q.D_K);
    if (c.block["riccati"].get<bool>()) {
        const auto sol = riccati(c.model, c.block["riccati_tol"].get<double>());
        r["riccati"] = {{"P_gamma", matrix_to_json(sol.P_gamma)},
                        {"K_star", matrix_to_json(sol.K_star)},
                        {"iterations", sol.iterations},
                        {"residual", sol.residual},
                        {"J_star", cost(c.model, sol.K_star)}};
    }
    c.results = r;
}

void run_sim(Context& c) {
    const long L = c.block["L"].get<long>();
    const Start start = c.block["start"] == "stationary" ? Start::stationary() : Start::zero();
    const auto n = c.model.n(), d = c.model.d();
    std::vector<std::string> header{"t"};
    for (Eigen::Index i = 0; i < n; ++i) header.push_back("x" + std::to_string(i));
    for (Eigen::Index i = 0; i < d; ++i) header.push_back("u" + std::to_string(i));
    header.push_back("c");
    json runs = json::array();
    for (std::size_t s = 0; s < c.seeds.size(); ++s) {
        const auto traj = rollout(c.model, c.K, L, c.seeds[s], start);
        const std::string path = per_seed_path(c, s);
        CsvWriter w(path, header);
        double disc = 1.0, ret = 0.0;
        for (long t = 0; t <= L; ++t) {
            w << t;
            for (Eigen::Index i = 0; i < n; ++i) w << traj.X(i, t);
            for (Eigen::Index i = 0; i < d; ++i) w << traj.U(i, t);
            w << traj.c(t);
            w.end_row();
            ret += disc * traj.c(t);
            disc *= c.model.gamma;
        }
        c.report.csv_paths.push_back(path);
        runs.push_back({{"seed", c.seeds[s]}, {"discounted_return", ret}});
    }
    c.results["runs"] = runs;
}

void run_td(Context& c) {
    const bool q = c.block["critic"] == "q";
    json runs = json::array();
    for (std::size_t s = 0; s < c.seeds.size(); ++s) {
        const TdConfig cfg = td_config_from(c.block, c.seeds[s]);
        TdSummary sum = q ? q_td_learn(c.model, c.K, cfg).summary : td_learn(c.model, c.K, cfg).summary;
        const std::string path = per_seed_path(c, s);
        CsvWriter w(path, {"step", "theta0", "value_error", "grad_norm", "guard_flag"});
        double err_sum = 0.0;
        for (const auto& h : sum.history) {
            w << h.step << h.theta0 << h.value_error << h.grad_norm << static_cast<long>(h.guard_flag);
            w.end_row();
            err_sum += h.value_error;
        }
        c.report.csv_paths.push_back(path);
        json run{{"seed", c.seeds[s]},
                 {"final_value_error", sum.history.back().value_error},
                 {"guard_triggered", sum.guard_triggered},
                 {"alpha", sum.alpha},
                 {"M_theta", sum.M_theta},
                 {"averaged_error", sum.averaged_error},
                 {"extra_paper", sum.extra_paper}};
        if (cfg.history_stride == 1) run["mean_iterate_error"] = err_sum / static_cast<double>(sum.history.size());
        c.guard = c.guard || sum.guard_triggered;
        if (!q && cfg.update == TdUpdate::Semi) {
            const double Dn = stationary_covariance(c.model, c.K).norm();
            const double bound = 8.0 * (1.0 + (c.model.n() + 2) * Dn * Dn) * sum.M_theta * sum.M_theta /
                                 ((1.0 - c.model.gamma) * (1.0 - c.model.gamma) * static_cast<double>(cfg.steps));
            monitor(c, "semi-gradient value error bound (seed " + std::to_string(c.seeds[s]) + ")",
                    sum.averaged_error <= bound, sum.averaged_error, bound);
        }
        runs.push_back(run);
    }
    c.results["runs"] = runs;
}

PiConfig pi_config_from(const Context& c, std::uint64_t seed) {
    const json& b = c.block;
    PiConfig cfg;
    cfg.seed = seed;
    cfg.epsilon0 = b["eps0"].get<double>();
    cfg.stop_on_q_miss = b["stop_on_q_miss"].get<bool>();
    cfg.q_source = b["q_source"] == "td" ? QSource::QTdLearn : QSource::ExactOracle;
    if (b["T"].is_string()) {
        const double d0 = delta0_of(c.model, c.K, nullptr);
        cfg.T = pi_iteration_bound(c.model, c.K, b["rel_tol"].get<double>() * d0);
    } else {
        cfg.T = b["T"].get<int>();
    }
    cfg.td.steps = b["td_steps"].get<long>();
    if (b["td_alpha"].is_number()) {
        cfg.td.step_size = StepSizeMode::Fixed;
        cfg.td.alpha = b["td_alpha"].get<double>();
    }
    cfg.td.sample = b["td_sample"] == "trajectory" ? SampleMode::SingleTrajectory : SampleMode::IidStationary;
    cfg.td.history_stride = cfg.td.steps;
    return cfg;
}

void run_pi(Context& c) {
    json runs = json::array();
    for (std::size_t s = 0; s < c.seeds.size(); ++s) {
        const PiConfig cfg = pi_config_from(c, c.seeds[s]);
        const auto rep = run_policy_iteration(c.model, c.K, cfg);
        const std::string path = per_seed_path(c, s);
        CsvWriter w(path, {"t", "J", "gap", "ratio", "q_err", "feasible"});
        for (const auto& it : rep.iterates) {
            w << static_cast<long>(it.t) << it.J << it.gap << it.ratio << it.q_err
              << static_cast<long>(it.feasibility == Feasibility::Stable);
            w.end_row();
        }
        c.report.csv_paths.push_back(path);
        c.parameters["T"] = cfg.T;
        c.parameters["alpha_c"] = rep.alpha_c;
        c.parameters["J_star"] = rep.J_star;
        json run{{"seed", c.seeds[s]},
                 {"final_gap", rep.final_gap()},
                 {"iterations", static_cast<long>(rep.iterates.size()) - 1},
                 {"contraction_violations", rep.contraction_violations},
                 {"stop_reason", rep.stop_reason},
                 {"sublevel_exit", rep.sublevel_exit}};
        if (!rep.learned)
            monitor(c, "contraction ratio <= 1 - alpha_c (seed " + std::to_string(c.seeds[s]) + ")",
                    rep.contraction_violations == 0, rep.contraction_violations, 0.0);
        c.guard = c.guard || rep.left_domain || rep.q_miss;
        runs.push_back(run);
    }
    c.results["runs"] = runs;
}

// Shared by pg and ac: one CSV with a seed column, one run per seed.
void write_descent(Context& c, const std::vector<const PgReport*>& reps, double eps) {
    CsvWriter w(c.out, {"iter", "seed", "J", "gap", "grad_norm_est", "guard_flag"});
    json runs = json::array();
    long successes = 0;
    for (std::size_t s = 0; s < reps.size(); ++s) {
        const PgReport& r = *reps[s];
        for (const auto& h : r.history) {
            w << h.iter << static_cast<long>(c.seeds[s]) << h.J << h.gap << h.grad_norm_est
              << static_cast<long>(h.guard_flag);
            w.end_row();
        }
        const bool ok = r.final_gap <= eps;
        successes += ok ? 1 : 0;
        runs.push_back({{"seed", c.seeds[s]},
                        {"final_gap", r.final_gap},
                        {"final_J", r.history.back().J},
                        {"success", ok},
                        {"exit_reason", r.exit_reason},
                        {"first_hit_iter", r.first_hit_iter},
                        {"transitions", r.transitions},
                        {"first_hit_transitions", r.first_hit_transitions},
                        {"guard_events", r.guard_events}});
        c.guard = c.guard || r.left_domain || r.exit_reason != "Completed";
        if (r.left_domain) c.results["exit"] = "IterateLeftDomain";
        c.parameters["alpha"] = r.alpha;
        c.parameters["T"] = r.T;
        c.parameters["L"] = static_cast<long>(r.L);
        c.parameters["J_star"] = r.J_star;
        c.parameters["delta0"] = r.delta0;
        c.parameters["extra_paper"] = r.extra_paper;
    }
    c.report.csv_paths.push_back(c.out);
    c.results["runs"] = runs;
    c.results["successes"] = successes;
    c.parameters["epsilon"] = eps;
}

template <typename Cfg>
void fill_schedule(Cfg& cfg, const json& b, double eps) {
    cfg.epsilon = eps;
    cfg.delta = b["delta"].get<double>();
    cfg.c_alpha = b["c_alpha"].get<double>();
    cfg.c_T = b["c_T"].get<double>();
    cfg.c_L = b["c_L"].get<double>();
    cfg.batch = b["batch"].get<int>();
    cfg.pilot_reps = b["pilot_reps"].get<long>();
    cfg.record_stride = b["record_stride"].get<long>();
    cfg.max_T = b["max_T"].get<long>();
    if (b["alpha"].is_number()) {
        cfg.step_rule = StepRule::Fixed;
        cfg.alpha = b["alpha"].get<double>();
    } else {
        cfg.step_rule = b["alpha"] == "moment" ? StepRule::SecondMoment : StepRule::PaperSchedule;
    }
    if (b["T"].is_string()) cfg.paper_T = true;
    else cfg.T = b["T"].get<long>();
}

void run_pg(Context& c) {
    const double eps = c.block["eps"].get<double>() * delta0_of(c.model, c.K, nullptr);
    PgConfig base;
    fill_schedule(base, c.block, eps);
    if (c.block["L"].is_string()) base.paper_L = true;
    else base.L = c.block["L"].get<long>();
    base.M_G = c.block["M_G"].get<double>();
    base.oracle_gradient = c.block["oracle_gradient"].get<bool>();
    std::vector<PgReport> reps(c.seeds.size());
    parallel_for(reps.size(), [&](std::size_t i) {
        PgConfig cfg = base;
        cfg.seed = c.seeds[i];
        reps[i] = run_policy_gradient(c.model, c.K, cfg);
    });
    std::vector<const PgReport*> ptrs;
    for (const auto& r : reps) ptrs.push_back(&r);
    write_descent(c, ptrs, eps);
}

void run_ac(Context& c) {
    const json& b = c.block;
    const double eps = b["eps"].get<double>() * delta0_of(c.model, c.K, nullptr);
    AcConfig base;
    fill_schedule(base, b, eps);
    if (b["L"].is_string()) {
        base.length_preset = b["L"] == "table1" ? AcLengthPreset::Table1 : AcLengthPreset::Threshold;
    } else {
        base.L = b["L"].get<long>();
    }
    base.M_G_AC = b["M_G_AC"].get<double>();
    base.critic_mode = b["critic"] == "oracle" ? CriticMode::Oracle : CriticMode::Learned;
    base.critic_refresh = b["critic_refresh"].get<int>();
    base.critic.steps = b["critic_steps"].get<long>();
    base.critic.update = b["critic_update"] == "semi" ? TdUpdate::Semi : TdUpdate::Stochastic;
    if (b["critic_alpha"].is_number()) {
        base.critic.step_size = StepSizeMode::Fixed;
        base.critic.alpha = b["critic_alpha"].get<double>();
    } else {
        base.critic.step_size =
            base.critic.update == TdUpdate::Semi ? StepSizeMode::PaperSemi : StepSizeMode::PaperStochastic;
    }
    base.critic.history_stride = base.critic.steps;
    std::vector<AcReport> reps(c.seeds.size());
    parallel_for(reps.size(), [&](std::size_t i) {
        AcConfig cfg = base;
        cfg.seed = c.seeds[i];
        reps[i] = run_actor_critic(c.model, c.K, cfg);
    });
    std::vector<const PgReport*> ptrs;
    for (const auto& r : reps) ptrs.push_back(&r);
    write_descent(c, ptrs, eps);
    for (std::size_t i = 0; i < reps.size(); ++i) {
        const auto& errs = reps[i].critic_errors;
        c.results["runs"][i]["critic_transitions"] = reps[i].critic_transitions;
        c.results["runs"][i]["max_critic_error"] = errs.empty() ? 0.0 : *std::max_element(errs.begin(), errs.end());
    }
    c.parameters["length_preset"] = reps.front().length_preset;
}

void run_compare(Context& c) {
    std::vector<Eigen::Index> Ls;
    for (long L : parse_grid(c.block["L_grid"])) Ls.push_back(L);
    const auto rep = compare_over_lengths(c.model, c.K, Ls, c.block["reps"].get<long>(), c.seeds.front());
    CsvWriter w(c.out, {"L", "reps", "pg_var", "ac_var", "var_diff", "var_diff_se", "pg_second_moment",
                        "ac_second_moment", "pg_bias", "ac_bias", "ac_lower_95"});
    long lower = 0;
    for (const auto& r : rep.rows) {
        w << static_cast<long>(r.L) << r.reps << r.pg_var << r.ac_var << r.var_diff << r.var_diff_se
          << r.pg_second_moment << r.ac_second_moment << r.pg_bias << r.ac_bias << static_cast<long>(r.ac_lower_95);
        w.end_row();
        lower += r.ac_lower_95 ? 1 : 0;
        monitor(c, "Var(G_AC) < Var(G_PG) at 95% (L=" + std::to_string(r.L) + ")", r.ac_lower_95, r.var_diff,
                1.645 * r.var_diff_se);
    }
    c.report.csv_paths.push_back(c.out);
    c.results["rows_ac_lower"] = lower;
    if (rep.rows.size() >= 2) {
        c.results["pg_second_moment_loglog_slope"] = rep.pg_fit.slope;
        c.results["ac_second_moment_loglog_slope"] = rep.ac_fit.slope;
    }
}

void run_check(Context& c) {
    CheckOptions opts;
    opts.include_ref1 = c.block["include_ref1"].get<bool>();
    opts.random_instances = c.block["instances"].get<int>();
    opts.instance_seed = c.block["instance_seed"].get<std::uint64_t>();
    opts.riccati_tol = c.block["riccati_tol"].get<double>();
    if (!c.cfg["model"].is_null()) {
        opts.model = c.model;
        if (!c.cfg["policy"].is_null()) opts.K = c.K;
    }
    const auto rep = run_checks(opts);
    CsvWriter w(c.out, {"instance", "module", "invariant", "passed", "detail"});
    for (const auto& r : rep.results) {
        w << r.instance << r.module << r.name << static_cast<long>(r.passed) << r.detail;
        w.end_row();
    }
    c.report.csv_paths.push_back(c.out);
    for (const auto& warning : rep.warnings) std::cerr << "warning: " << warning << "\n";
    c.results["invariants"] = rep.results.size();
    c.results["failures"] = rep.failures();
    c.results["warnings"] = rep.warnings;
    c.results["vacuous"] = rep.results.empty();
    c.guard = !rep.ok();
}

void run_sweep(Context& c) {
    const json& b = c.block;
    const std::string target = b["target"], param = b["param"];
    std::vector<double> values;
    for (const auto& v : b["values"]) values.push_back(v.get<double>());
    auto counts = [&](const char* what) {
        std::vector<long> out;
        for (const auto& v : b["values"]) out.push_back(as_count(v, what, 0));
        return out;
    };

    if (target == "td" && param == "N") {
        TdConfig base;
        base.update = TdUpdate::Stochastic;
        base.step_size = StepSizeMode::PaperStochastic;
        const auto sw = td_rate_sweep(c.model, c.K, counts("N"), static_cast<int>(c.seeds.size()), c.seeds.front(), base);
        CsvWriter w(c.out, {"N", "mean_iterate_error", "averaged_error", "alpha"});
        for (const auto& p : sw.points) {
            w << p.N << p.mean_iterate_error << p.averaged_error << p.alpha;
            w.end_row();
        }
        c.results["iterate_slope"] = sw.iterate_fit.slope;
        c.results["averaged_slope"] = sw.averaged_fit.slope;
        monitor(c, "log-log slope of mean iterate error in -0.5 +- 0.2", std::abs(sw.iterate_fit.slope + 0.5) <= 0.2,
                sw.iterate_fit.slope, -0.5);
    } else if (target == "pg" && param == "L") {
        const auto curve = pg_bias_curve(c.model, c.K, counts("L"), b["L_ref"].get<long>(), b["reps"].get<long>(),
                                         c.seeds.front());
        CsvWriter w(c.out, {"L", "bias_norm", "bias_se", "second_moment"});
        std::vector<double> xs, ys;
        for (const auto& p : curve.points) {
            w << p.L << p.bias_norm << p.bias_se << p.second_moment;
            w.end_row();
        }
        const double lg = std::log(c.model.gamma);
        c.results["log_bias_slope"] = curve.log_bias_fit.slope;
        c.results["log_gamma"] = lg;
        monitor(c, "log bias slope within 15% of log gamma",
                std::abs(curve.log_bias_fit.slope - lg) <= 0.15 * std::abs(lg), curve.log_bias_fit.slope, lg);
    } else if (target == "pi" && param == "gamma") {
        struct Cell {
            int iters = 0;
            double trend = 0.0;
        };
        std::vector<Cell> cells(values.size());
        parallel_for(values.size(), [&](std::size_t i) {
            LqrModel m = c.model;
            m.gamma = values[i];
            validate(m);
            cells[i].iters = pi_steps_to_tolerance(m, c.K, b["rel_tol"].get<double>());
            cells[i].trend = optimal_sigma_norm(m) / sigma_min(m.D_omega_tilde());
        });
        CsvWriter w(c.out, {"gamma", "iterations", "sigma_star_over_sigma_min_D"});
        for (std::size_t i = 0; i < values.size(); ++i) {
            w << values[i] << static_cast<long>(cells[i].iters) << cells[i].trend;
            w.end_row();
        }
        std::vector<std::size_t> order(values.size());
        for (std::size_t i = 0; i < order.size(); ++i) order[i] = i;
        std::sort(order.begin(), order.end(), [&](auto a, auto z) { return cells[a].trend < cells[z].trend; });
        bool monotone = true;
        for (std::size_t k = 1; k < order.size(); ++k)
            monotone = monotone && cells[order[k]].iters >= cells[order[k - 1]].iters;
        monitor(c, "iteration count non-decreasing in ||Sigma*|| / sigma_min(D~)", monotone, monotone, 1.0);
    } else if (target == "pi" && param == "eps0") {
        std::vector<PiReport> reps(values.size());
        parallel_for(values.size(), [&](std::size_t i) {
            PiConfig cfg;
            cfg.T = b["T"].get<int>();
            cfg.q_source = QSource::QTdLearn;
            cfg.epsilon0 = values[i];
            cfg.stop_on_q_miss = false;
            cfg.seed = c.seeds.front();
            cfg.td.steps = b["td_steps"].get<long>();
            cfg.td.step_size = StepSizeMode::Fixed;
            cfg.td.alpha = b["td_alpha"].get<double>();
            cfg.td.history_stride = cfg.td.steps;
            reps[i] = run_policy_iteration(c.model, c.K, cfg);
        });
        CsvWriter w(c.out, {"eps0", "final_gap", "max_q_err", "q_miss", "left_domain"});
        for (std::size_t i = 0; i < values.size(); ++i) {
            double qmax = 0.0;
            for (const auto& it : reps[i].iterates) qmax = std::max(qmax, it.q_err);
            w << values[i] << reps[i].final_gap() << qmax << static_cast<long>(reps[i].q_miss)
              << static_cast<long>(reps[i].left_domain);
            w.end_row();
        }
    } else if ((target == "pg" || target == "ac") && param == "T") {
        const auto Ts = counts("T");
        const double eps = b["eps"].get<double>() * delta0_of(c.model, c.K, nullptr);
        const std::size_t cells = Ts.size() * c.seeds.size();
        std::vector<double> gaps(cells);
        parallel_for(cells, [&](std::size_t i) {
            const long T = Ts[i / c.seeds.size()];
            const std::uint64_t seed = c.seeds[i % c.seeds.size()];
            if (target == "pg") {
                PgConfig cfg;
                cfg.T = T;
                cfg.L = b["L"].get<long>();
                cfg.alpha = b["alpha"].get<double>();
                cfg.epsilon = eps;
                cfg.seed = seed;
                cfg.record_stride = std::max(1L, T);
                gaps[i] = run_policy_gradient(c.model, c.K, cfg).final_gap;
            } else {
                AcConfig cfg;
                cfg.T = T;
                cfg.L = b["L"].get<long>();
                cfg.alpha = b["alpha"].get<double>();
                cfg.epsilon = eps;
                cfg.critic_mode = CriticMode::Oracle;
                cfg.seed = seed;
                cfg.record_stride = std::max(1L, T);
                gaps[i] = run_actor_critic(c.model, c.K, cfg).final_gap;
            }
        });
        CsvWriter w(c.out, {"T", "seed", "final_gap"});
        for (std::size_t i = 0; i < cells; ++i) {
            w << Ts[i / c.seeds.size()] << static_cast<long>(c.seeds[i % c.seeds.size()]) << gaps[i];
            w.end_row();
        }
        c.parameters["epsilon"] = eps;
    } else {
        throw Error(ErrorCode::ConfigInvalid, "unsupported sweep " + target + " over " + param);
    }
    c.report.csv_paths.push_back(c.out);
    for (const auto& m : c.monitored) c.guard = c.guard || !m["passed"].get<bool>();
}

json versions() {
    return {{"lqrl", kVersion},
            {"eigen", std::to_string(EIGEN_WORLD_VERSION) + "." + std::to_string(EIGEN_MAJOR_VERSION) + "." +
                          std::to_string(EIGEN_MINOR_VERSION)},
            {"json", std::to_string(NLOHMANN_JSON_VERSION_MAJOR) + "." + std::to_string(NLOHMANN_JSON_VERSION_MINOR) +
                         "." + std::to_string(NLOHMANN_JSON_VERSION_PATCH)},
            {"compiler", __VERSION__}};
}

}  // namespace

Report run_experiment(const json& config) {
    Context c;
    c.cfg = normalize_config(config);
    c.algo = c.cfg["algorithm"].get<std::string>();
    c.block = c.cfg[c.algo];
    for (const auto& s : c.cfg["seeds"]) c.seeds.push_back(s.get<std::uint64_t>());

    if (!c.cfg["model"].is_null()) {
        c.model = c.cfg["model"].is_string() ? load_model(c.cfg["model"].get<std::string>())
                                             : model_from_json(c.cfg["model"]);
    }
    const std::string dir = c.cfg["output_dir"].get<std::string>();
    const std::string ext = c.algo == "solve" ? ".json" : ".csv";
    c.out = c.cfg["out"].get<std::string>().empty() ? (fs::path(dir) / (c.algo + ext)).string()
                                                     : c.cfg["out"].get<std::string>();
    c.report.summary_path = c.algo == "solve" ? c.out : summary_path_for(c.out);
    if (const auto parent = fs::path(c.out).parent_path(); !parent.empty()) fs::create_directories(parent);

    json& sum = c.report.summary;
    sum["config"] = c.cfg;
    sum["versions"] = versions();
    sum["seeds"] = c.seeds;
    try {
        if (!c.cfg["model"].is_null()) {
            validate(c.model);
            sum["model"] = model_to_json(c.model);
        }
        if (!c.cfg["policy"].is_null()) {
            c.K = c.cfg["policy"].is_string() ? load_gain(c.cfg["policy"].get<std::string>())
                                              : matrix_from_json(c.cfg["policy"], "policy");
            check_gain_shape(c.model, c.K);
        }
        static const std::map<std::string, std::function<void(Context&)>> dispatch = {
            {"solve", run_solve}, {"sim", run_sim},         {"td", run_td},       {"pi", run_pi},
            {"pg", run_pg},       {"ac", run_ac},           {"compare", run_compare},
            {"check", run_check}, {"sweep", run_sweep},
        };
        dispatch.at(c.algo)(c);
        c.report.exit_code = c.guard ? 2 : 0;
        sum["status"] = c.guard ? "guard" : "ok";
    } catch (const Error& e) {
        if (e.code() == ErrorCode::ConfigInvalid || e.code() == ErrorCode::ModelFileMissing) throw;
        c.report.exit_code = exit_code_for(e);
        sum["status"] = c.report.exit_code == 2 ? "guard" : "error";
        sum["error"] = {{"code", std::string(to_string(e.code()))}, {"message", e.what()}};
        if (e.code() == ErrorCode::IterateLeftDomain) c.results["exit"] = "IterateLeftDomain";
    }
    sum["exit_code"] = c.report.exit_code;
    sum["results"] = c.results;
    sum["parameters"] = c.parameters;
    sum["monitored"] = c.monitored;
    sum["csv"] = c.report.csv_paths;

    std::ofstream f(c.report.summary_path);
    if (!f) throw Error(ErrorCode::ConfigInvalid, "cannot write " + c.report.summary_path);
    f << sum.dump(2) << "\n";
    return c.report;
}

}  // namespace lqrl
