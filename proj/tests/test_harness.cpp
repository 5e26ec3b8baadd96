#include <cmath>
#include <filesystem>
#include <fstream>
#include <sstream>
#include <string>
#include <vector>

#include "doctest.h"
#include "json.hpp"
#include "lqrl/error.hpp"
#include "lqrl/harness.hpp"
#include "lqrl/model.hpp"

using namespace lqrl;
using nlohmann::json;
namespace fs = std::filesystem;

namespace {

fs::path scratch(const std::string& name) {
    const auto p = fs::temp_directory_path() / ("lqrl_harness_" + name);
    fs::remove_all(p);
    fs::create_directories(p);
    return p;
}

json base(const std::string& algo, const fs::path& dir) {
    return {{"algorithm", algo},
            {"model", model_to_json(ref1())},
            {"policy", -0.5},
            {"output_dir", dir.string()}};
}

std::vector<std::vector<std::string>> read_csv(const std::string& path) {
    std::ifstream f(path);
    std::vector<std::vector<std::string>> rows;
    std::string line;
    while (std::getline(f, line)) {
        std::vector<std::string> cells;
        std::stringstream ss(line);
        std::string cell;
        while (std::getline(ss, cell, ',')) cells.push_back(cell);
        rows.push_back(cells);
    }
    return rows;
}

std::string slurp(const std::string& path) {
    std::ifstream f(path);
    return {std::istreambuf_iterator<char>(f), {}};
}

ErrorCode code_of(const json& cfg) {
    try {
        run_experiment(cfg);
    } catch (const Error& e) {
        return e.code();
    }
    FAIL("expected an lqrl::Error");
    return ErrorCode::DimensionMismatch;
}

}  // namespace

TEST_CASE("solve reports the REF1 cost") {
    const auto dir = scratch("solve");
    const auto rep = run_experiment(base("solve", dir));
    CHECK(rep.exit_code == 0);
    CHECK(std::abs(rep.summary["results"]["J"].get<double>() - 0.6625) <= 1e-12);
    const auto on_disk = json::parse(slurp(rep.summary_path));
    CHECK(on_disk["results"]["J"] == rep.summary["results"]["J"]);
    CHECK(on_disk["versions"].contains("eigen"));
}

TEST_CASE("malformed or unknown configuration") {
    const auto dir = scratch("bad");
    std::ofstream(dir / "bad.json") << "{\"algorithm\": \"solve\",";
    try {
        load_config((dir / "bad.json").string());
        FAIL("expected ConfigInvalid");
    } catch (const Error& e) {
        CHECK(e.code() == ErrorCode::ConfigInvalid);
        CHECK(exit_code_for(e) == 1);
    }

    auto cfg = base("solve", dir);
    cfg["bogus"] = 1;
    CHECK(code_of(cfg) == ErrorCode::ConfigInvalid);
    cfg = base("pg", dir);
    cfg["pg"] = {{"alhpa", 0.1}};
    CHECK(code_of(cfg) == ErrorCode::ConfigInvalid);
    cfg = base("nope", dir);
    CHECK(code_of(cfg) == ErrorCode::ConfigInvalid);
    cfg = base("solve", dir);
    cfg["model"] = (dir / "missing.json").string();
    CHECK(code_of(cfg) == ErrorCode::ModelFileMissing);
}

TEST_CASE("diverging policy gradient exits with the guard code") {
    const auto dir = scratch("pgbad");
    auto cfg = base("pg", dir);
    cfg["pg"] = {{"alpha", 0.5}, {"T", 200}};
    const auto rep = run_experiment(cfg);
    CHECK(rep.exit_code == 2);
    CHECK(rep.summary["results"]["exit"] == "IterateLeftDomain");
    CHECK(rep.summary["status"] == "guard");
}

TEST_CASE("runs are reproducible and summaries match the CSV") {
    const auto d1 = scratch("rep1"), d2 = scratch("rep2");
    auto cfg = base("pg", d1);
    cfg["pg"] = {{"alpha", 1e-3}, {"T", 300}};
    cfg["seeds"] = {0, 1, 2};
    const auto a = run_experiment(cfg);
    cfg["output_dir"] = d2.string();
    const auto b = run_experiment(cfg);
    REQUIRE(a.csv_paths.size() == 1);
    CHECK(slurp(a.csv_paths[0]) == slurp(b.csv_paths[0]));
    CHECK(a.summary["results"] == b.summary["results"]);

    const auto rows = read_csv(a.csv_paths[0]);
    REQUIRE(rows.size() > 1);
    CHECK(rows[0] == std::vector<std::string>{"iter", "seed", "J", "gap", "grad_norm_est", "guard_flag"});
    for (const auto& run : a.summary["results"]["runs"]) {
        const std::string seed = std::to_string(run["seed"].get<int>());
        double last_gap = NAN;
        for (std::size_t i = 1; i < rows.size(); ++i)
            if (rows[i][1] == seed) last_gap = std::stod(rows[i][3]);
        CHECK(std::abs(last_gap - run["final_gap"].get<double>()) <= 1e-12);
    }
}

TEST_CASE("TD run writes a monitored bound") {
    const auto dir = scratch("td");
    auto cfg = base("td", dir);
    cfg["td"] = {{"mode", "semi"}, {"steps", 1000}};
    const auto rep = run_experiment(cfg);
    CHECK(rep.exit_code == 0);
    REQUIRE(rep.summary["monitored"].size() == 1);
    CHECK(rep.summary["monitored"][0]["passed"] == true);
    const auto rows = read_csv(rep.csv_paths[0]);
    CHECK(rows.size() == 1001);
    CHECK(rows[0][0] == "step");
    // step 0 reports the initial iterate
    CHECK(std::stod(rows[1][1]) == 0.0);
}

TEST_CASE("invariant suite") {
    const auto dir = scratch("check");
    auto cfg = base("check", dir);
    cfg.erase("policy");
    cfg.erase("model");
    auto rep = run_experiment(cfg);
    CHECK(rep.exit_code == 0);
    CHECK(rep.summary["results"]["failures"] == 0);

    cfg["check"] = {{"instances", 0}, {"riccati_tol", 1e-1}};
    rep = run_experiment(cfg);
    CHECK(rep.exit_code == 2);
    CHECK(rep.summary["results"]["failures"].get<int>() >= 1);

    cfg["check"] = {{"instances", 0}, {"include_ref1", false}};
    rep = run_experiment(cfg);
    CHECK(rep.exit_code == 0);
    CHECK(rep.summary["results"]["vacuous"] == true);
    CHECK(rep.summary["results"]["warnings"].size() == 1);
}

TEST_CASE("sweeps record their fits") {
    const auto dir = scratch("sweep");
    auto cfg = base("sweep", dir);
    cfg["seeds"] = json::array();
    for (int s = 0; s < 20; ++s) cfg["seeds"].push_back(s);
    cfg["sweep"] = {{"target", "td"}, {"param", "N"}, {"values", {1000, 3000, 10000, 30000}}};
    auto rep = run_experiment(cfg);
    CHECK(rep.exit_code == 0);
    const double slope = rep.summary["results"]["iterate_slope"].get<double>();
    CHECK(std::abs(slope + 0.5) <= 0.2);

    cfg["seeds"] = {0};
    cfg["sweep"] = {{"target", "pg"}, {"param", "L"}, {"values", {5, 15, 25, 35}}, {"reps", 20000}};
    rep = run_experiment(cfg);
    CHECK(rep.exit_code == 0);
    const double lg = std::log(0.9);
    CHECK(std::abs(rep.summary["results"]["log_bias_slope"].get<double>() - lg) <= 0.15 * std::abs(lg));

    cfg["sweep"] = {{"target", "pi"}, {"param", "gamma"}, {"values", {0.5, 0.7, 0.9, 0.95}}};
    rep = run_experiment(cfg);
    CHECK(rep.exit_code == 0);
    CHECK(rep.summary["monitored"][0]["passed"] == true);
}

TEST_CASE("number formatting round-trips") {
    for (double v : {0.1, 1.0 / 3.0, -2.5e-17, 6.02e23, 0.6625}) CHECK(std::stod(format_number(v)) == v);
}
