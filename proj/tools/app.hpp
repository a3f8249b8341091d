#pragma once

#include <bgnmf/classify.hpp>
#include <bgnmf/data.hpp>
#include <bgnmf/inference.hpp>
#include <bgnmf/model.hpp>

#include <nlohmann/json.hpp>

#include <exception>
#include <filesystem>
#include <optional>
#include <string>
#include <vector>

namespace groupfact {

namespace fs = std::filesystem;

struct SampleConfig {
    int subjects = 3;
    int features = 24;
    std::vector<int> frames{60}; ///< one value, or one per subject
    int run_length = 5;
    std::uint64_t seed = 0;
};

/**
 * Everything a command needs. Loaded from an INI file with sections model,
 * fit, data, layout, sample, predict, learning_curve and output; unknown
 * sections or keys are rejected. Relative paths resolve against the
 * directory of the config file.
 */
struct RunConfig {
    bgnmf::Hyperparams model;
    bgnmf::FitOptions fit;
    bool min_iters_set = false;

    std::vector<fs::path> subjects;
    std::optional<fs::path> labels;
    bgnmf::IngestSchema schema;

    bgnmf::FeatureLayout layout;
    bool layout_set = false;

    SampleConfig sample;

    std::optional<fs::path> posterior;
    bgnmf::DecisionRule rule = bgnmf::DecisionRule::kNearestBasis;

    std::vector<double> fractions{0.25, 0.5, 0.75, 1.0};
    double holdout = 0.3;

    fs::path out = "out";

    /// Throws ConfigError on any invalid nested value.
    void validate() const;
    nlohmann::json echo() const;
};

RunConfig load_config(const fs::path& path);
/// Same as load_config on the given INI text; paths resolve against base.
RunConfig parse_config(const std::string& text, const fs::path& base);

/// Command-line values; set fields win over the config file.
struct Overrides {
    std::optional<std::uint64_t> seed;
    std::optional<int> threads;
    std::optional<std::string> rule;
    std::optional<fs::path> out;
    std::optional<int> max_iters;
    std::optional<int> min_iters;
    std::optional<double> rel_tol;
    std::vector<fs::path> subjects;
    std::optional<fs::path> labels;
    std::optional<fs::path> posterior;
    std::vector<double> fractions;
};

void apply(RunConfig& cfg, const Overrides& o);

void cmd_sample(const RunConfig& cfg);
void cmd_fit(const RunConfig& cfg);
void cmd_predict(const RunConfig& cfg);
void cmd_eval(const RunConfig& cfg);
void cmd_learning_curve(const RunConfig& cfg);
void cmd_export_bases(const RunConfig& cfg);

/// Runs one subcommand by name.
void run(const std::string& command, const RunConfig& cfg);

/// 2 config, 3 data, 4 numerical, 1 anything else.
int exit_code(const std::exception& e);

/// Reads GROUPFACT_LOG (error, info or debug) and sets the log level.
void init_logging();

} // namespace groupfact
