// lqrl: command-line front end. Flags are turned into an experiment config;
// a --config file is merged on top (file values win) and run through the harness.

#include <charconv>
#include <cmath>
#include <sstream>
#include <cstdlib>
#include <iostream>
#include <map>
#include <string>

#include "CLI11.hpp"
#include "json.hpp"
#include "lqrl/error.hpp"
#include "lqrl/harness.hpp"

using nlohmann::json;

namespace {

// "auto", "paper", ... stay strings; anything that parses as a number becomes one.
json number_or_string(const std::string& s) {
    double v = 0.0;
    const auto res = std::from_chars(s.data(), s.data() + s.size(), v);
    if (res.ec == std::errc() && res.ptr == s.data() + s.size()) return v;
    return s;
}

struct Flag {
    std::string key;  // block key, or "@name" for a top-level key
    std::string raw;
    bool is_bool = false;
    bool bool_value = false;
    bool numeric = false;  // parse strictly as number
    CLI::Option* opt = nullptr;
};

class Command {
public:
    Command(CLI::App& app, const std::string& name, const std::string& help)
        : name_(name), sub_(app.add_subcommand(name, help)) {}

    CLI::App* app() { return sub_; }
    const std::string& name() const { return name_; }

    void value(const std::string& flag, const std::string& key, const std::string& help, bool numeric = true) {
        auto& f = flags_[flag];
        f.key = key;
        f.numeric = numeric;
        f.opt = sub_->add_option(flag, f.raw, help);
    }
    void toggle(const std::string& flag, const std::string& key, bool value_when_set, const std::string& help) {
        auto& f = flags_[flag];
        f.key = key;
        f.is_bool = true;
        f.bool_value = value_when_set;
        f.opt = sub_->add_flag(flag, help);
    }

    // Only flags given on the command line enter the config; defaults live in the schema.
    json to_config() const {
        json cfg{{"algorithm", name_}};
        json block = json::object();
        for (const auto& [flag, f] : flags_) {
            if (f.opt->count() == 0) continue;
            json v;
            if (f.is_bool) v = f.bool_value;
            else if (f.numeric) v = parse_number(flag, f.raw);
            else v = number_or_string(f.raw);
            if (f.key.rfind('@', 0) == 0) cfg[f.key.substr(1)] = v;
            else block[f.key] = v;
        }
        if (!block.empty()) cfg[name_] = block;
        return cfg;
    }

private:
    static json parse_number(const std::string& flag, const std::string& s) {
        const json v = number_or_string(s);
        if (!v.is_number()) throw lqrl::Error(lqrl::ErrorCode::ConfigInvalid, flag + " expects a number, got " + s);
        if (v.get<double>() == std::floor(v.get<double>()) && std::abs(v.get<double>()) < 9e15)
            return static_cast<long long>(v.get<double>());
        return v;
    }

    std::string name_;
    CLI::App* sub_;
    std::map<std::string, Flag> flags_;
};

json merge(json base, const json& over) {
    for (const auto& [k, v] : over.items()) {
        if (v.is_object() && base.contains(k) && base[k].is_object()) base[k] = merge(base[k], v);
        else base[k] = v;
    }
    return base;
}

void add_common(Command& c, bool policy, const std::string& policy_flag = "--K") {
    c.value("--model", "@model", "model JSON file", false);
    if (policy) c.value(policy_flag, "@policy", "gain JSON file (bare matrix or {\"K\": ...})", false);
    c.value("--out", "@out", "output file", false);
    c.value("--output-dir", "@output_dir", "directory for default output names", false);
}

}  // namespace

int main(int argc, char** argv) {
    CLI::App app{"Reinforcement-learning algorithms on discounted LQR"};
    app.require_subcommand(0, 1);
    std::string config_path;
    app.add_option("--config", config_path, "experiment config JSON; its values override flags");
    long long seed = -1;
    long long seeds = -1;

    Command solve(app, "solve", "exact quantities of a gain");
    add_common(solve, true, "--policy");
    solve.toggle("--riccati", "riccati", true, "also solve the Riccati equation");
    solve.value("--riccati-tol", "riccati_tol", "relative residual tolerance");

    Command sim(app, "sim", "simulate one trajectory");
    add_common(sim, true);
    sim.value("--L", "L", "trajectory length");
    sim.value("--start", "start", "zero | stationary", false);

    Command td(app, "td", "TD evaluation of a gain");
    add_common(td, true);
    td.value("--mode", "mode", "semi | stochastic", false);
    td.value("--steps", "steps", "number of iterates N");
    td.value("--critic", "critic", "value | q", false);
    td.value("--step-size", "step_size", "paper | <alpha>", false);
    td.value("--sample", "sample", "iid | trajectory", false);
    td.value("--norm-source", "norm_source", "oracle | sample", false);
    td.value("--M-theta", "M_theta", "guard radius (0: 10 ||theta*||)");
    td.value("--history-stride", "history_stride", "record every k-th step");
    td.toggle("--no-stop-on-guard", "stop_on_guard", false, "keep running after the guard fires");

    Command pi(app, "pi", "policy iteration");
    add_common(pi, true, "--K0");
    pi.value("--T", "T", "iterations | auto", false);
    pi.value("--q-source", "q_source", "exact | td", false);
    pi.value("--eps0", "eps0", "Q accuracy target");
    pi.value("--rel-tol", "rel_tol", "relative gap target used by --T auto");
    pi.value("--td-steps", "td_steps", "Q-TD iterates per evaluation");
    pi.value("--td-alpha", "td_alpha", "Q-TD step size | paper", false);
    pi.value("--td-sample", "td_sample", "iid | trajectory", false);
    pi.toggle("--continue-on-q-miss", "stop_on_q_miss", false, "do not stop when Q misses eps0");

    auto descent_flags = [](Command& c) {
        add_common(c, true, "--K0");
        c.value("--T", "T", "iterations | auto", false);
        c.value("--alpha", "alpha", "step size | auto (paper schedule) | moment", false);
        c.value("--eps", "eps", "target gap as a fraction of J(K0) - J*");
        c.value("--delta", "delta", "failure probability");
        c.value("--c-alpha", "c_alpha", "schedule constant");
        c.value("--c-T", "c_T", "schedule constant");
        c.value("--c-L", "c_L", "schedule constant");
        c.value("--batch", "batch", "rollouts per step");
        c.value("--pilot-reps", "pilot_reps", "rollouts for the second-moment pilot");
        c.value("--record-stride", "record_stride", "record every k-th iteration");
        c.value("--max-T", "max_T", "largest schedule T accepted");
    };
    Command pg(app, "pg", "policy gradient");
    descent_flags(pg);
    pg.value("--L", "L", "trajectory length | auto", false);
    pg.value("--M-G", "M_G", "gradient norm guard (0 disables)");
    pg.toggle("--oracle-gradient", "oracle_gradient", true, "use exact gradients");

    Command ac(app, "ac", "actor-critic");
    descent_flags(ac);
    ac.value("--L", "L", "trajectory length | threshold | table1", false);
    ac.value("--M-G", "M_G_AC", "gradient norm guard (0 disables)");
    ac.value("--critic", "critic", "td | oracle", false);
    ac.value("--critic-steps", "critic_steps", "TD iterates per critic refresh");
    ac.value("--critic-alpha", "critic_alpha", "critic step size | paper", false);
    ac.value("--critic-update", "critic_update", "stochastic | semi", false);
    ac.value("--critic-refresh", "critic_refresh", "refresh the critic every k iterations");

    Command compare(app, "compare", "PG vs AC estimator variance over L");
    add_common(compare, true);
    compare.value("--L-grid", "L_grid", "start:stop:step", false);
    compare.value("--reps", "reps", "rollouts per L");

    Command check(app, "check", "invariant suite");
    add_common(check, true);
    check.value("--instances", "instances", "random instances (n<=4, d<=2)");
    check.value("--instance-seed", "instance_seed", "seed of the random instances");
    check.value("--riccati-tol", "riccati_tol", "Riccati tolerance used by the stationarity check");
    check.toggle("--no-ref1", "include_ref1", false, "leave out the reference instance");

    Command sweep(app, "sweep", "grid sweep with rate fits");
    add_common(sweep, true);
    sweep.value("--target", "target", "td | pg | ac | pi", false);
    sweep.value("--param", "param", "N | L | T | eps0 | gamma", false);
    std::string values;
    sweep.app()->add_option("--values", values, "comma-separated grid values");
    sweep.value("--reps", "reps", "replicates per cell");
    sweep.value("--L-ref", "L_ref", "reference length for the bias sweep");
    sweep.value("--rel-tol", "rel_tol", "relative gap for the gamma sweep");
    sweep.value("--T", "T", "iterations");
    sweep.value("--L", "L", "trajectory length");
    sweep.value("--alpha", "alpha", "step size");
    sweep.value("--eps", "eps", "relative gap target");

    Command* all[] = {&solve, &sim, &td, &pi, &pg, &ac, &compare, &check, &sweep};
    for (Command* c : all) {
        c->app()->add_option("--seed", seed, "master seed");
        c->app()->add_option("--seeds", seeds, "number of consecutive seeds starting at --seed");
    }

    try {
        app.parse(argc, argv);
    } catch (const CLI::CallForHelp& e) {
        return app.exit(e);
    } catch (const CLI::ParseError& e) {
        app.exit(e);
        return 1;
    }

    try {
        json cfg = json::object();
        Command* chosen = nullptr;
        for (Command* c : all)
            if (c->app()->parsed()) chosen = c;
        if (chosen) {
            cfg = chosen->to_config();
            if (seed >= 0 || seeds > 0) {
                const long long base = std::max(0LL, seed);
                json list = json::array();
                for (long long i = 0; i < std::max(1LL, seeds); ++i) list.push_back(base + i);
                cfg["seeds"] = list;
            }
            if (chosen == &sweep && !values.empty()) {
                json arr = json::array();
                std::stringstream ss(values);
                for (std::string item; std::getline(ss, item, ',');) arr.push_back(number_or_string(item));
                cfg["sweep"]["values"] = arr;
            }
        }
        if (!config_path.empty()) {
            const json file = lqrl::load_config(config_path);
            if (chosen && file.contains("algorithm") && file["algorithm"] != chosen->name())
                throw lqrl::Error(lqrl::ErrorCode::ConfigInvalid, "config algorithm does not match the subcommand");
            cfg = merge(cfg, file);
        }
        if (cfg.empty()) {
            std::cerr << app.help();
            return 1;
        }
        const auto report = lqrl::run_experiment(cfg);
        const auto& sum = report.summary;
        if (sum["config"]["algorithm"] == "solve" && sum["results"].is_object() && !sum["results"].empty())
            std::cout << sum["results"].dump(2) << "\n";
        if (sum.contains("error")) std::cerr << "error: " << sum["error"]["message"].get<std::string>() << "\n";
        std::cerr << "status: " << sum["status"].get<std::string>() << ", summary: " << report.summary_path << "\n";
        return report.exit_code;
    } catch (const std::exception& e) {
        std::cerr << "error: " << e.what() << "\n";
        return lqrl::exit_code_for(e);
    }
}
