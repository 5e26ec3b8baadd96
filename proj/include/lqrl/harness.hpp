#pragma once

#include <cstdint>
#include <fstream>
#include <optional>
#include <string>
#include <vector>

#include "json.hpp"
#include "lqrl/model.hpp"

namespace lqrl {

inline constexpr const char* kVersion = "0.1.0";

/// Outcome of one configured experiment.
struct Report {
    nlohmann::json summary;              ///< also written next to the CSV output
    std::vector<std::string> csv_paths;  ///< per-run CSVs
    std::string summary_path;
    int exit_code = 0;                   ///< 0 ok, 1 error, 2 guard or feasibility exit
};

/// Parses a config file; malformed JSON is ConfigInvalid, a missing file ModelFileMissing.
nlohmann::json load_config(const std::string& path);

/// Fills defaults and rejects unknown keys or bad values (ConfigInvalid).
/// The result is what gets echoed into the summary.
nlohmann::json normalize_config(const nlohmann::json& config);

/// Runs the configured algorithm. Library errors are folded into the report
/// (exit code 1, or 2 for guard exits) rather than thrown, except for configuration
/// and file errors raised before anything runs.
Report run_experiment(const nlohmann::json& config);

/// Exit code of a library error under the 0/1/2 contract.
int exit_code_for(const std::exception& e);

/// Shortest round-trip decimal for CSV cells.
std::string format_number(double v);

/// Minimal CSV writer with a fixed header.
class CsvWriter {
public:
    CsvWriter(const std::string& path, const std::vector<std::string>& header);
    CsvWriter& operator<<(double v);
    CsvWriter& operator<<(long v);
    CsvWriter& operator<<(const std::string& v);
    void end_row();

private:
    void separator();
    std::ofstream out_;
    std::size_t columns_ = 0;
    std::size_t cell_ = 0;
};

/// One invariant evaluated on one instance.
struct InvariantResult {
    std::string instance;
    std::string module;
    std::string name;
    bool passed = false;
    std::string detail;
};

struct CheckOptions {
    bool include_ref1 = true;
    int random_instances = 3;       ///< n <= 4, d <= 2
    std::uint64_t instance_seed = 0;
    double riccati_tol = 1e-10;
    std::optional<LqrModel> model;  ///< replaces the reference instance when set
    std::optional<Mat> K;           ///< gain for `model`; the Riccati gain if absent
};

struct CheckReport {
    std::vector<InvariantResult> results;
    std::vector<std::string> warnings;
    [[nodiscard]] bool ok() const;
    [[nodiscard]] std::size_t failures() const;
};

CheckReport run_checks(const CheckOptions& opts);

}  // namespace lqrl
