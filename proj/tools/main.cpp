#include "app.hpp"

#include <CLI11.hpp>
#include <spdlog/spdlog.h>

int main(int argc, char** argv) {
    groupfact::init_logging();

    CLI::App app{"groupfact: group NMF for multi-subject EEG features"};
    app.require_subcommand(1, 1);
    // Global flags may follow the subcommand.
    app.fallthrough();

    std::string config_path;
    groupfact::Overrides o;
    std::uint64_t seed = 0;
    int threads = 1;
    int max_iters = 0;
    int min_iters = 0;
    double rel_tol = 0.0;
    std::string rule;
    std::string out;
    std::string labels;
    std::string posterior;
    std::vector<std::string> data;

    app.add_option("--config", config_path, "INI config file")->check(CLI::ExistingFile);
    auto* seed_opt = app.add_option("--seed", seed, "RNG seed for sampling and initialization");
    auto* threads_opt = app.add_option("--threads", threads, "worker threads")->check(CLI::PositiveNumber);
    auto* rule_opt = app.add_option("--rule", rule, "decision rule")
                         ->check(CLI::IsMember({"argmin", "argmax", "scaled"}));
    auto* out_opt = app.add_option("--out", out, "output directory");
    auto* max_opt = app.add_option("--max-iters", max_iters, "maximum sweeps");
    auto* min_opt = app.add_option("--min-iters", min_iters, "minimum sweeps");
    auto* tol_opt = app.add_option("--rel-tol", rel_tol, "relative bound change to stop");
    app.add_option("--data", data, "subject feature files, in order");
    auto* labels_opt = app.add_option("--labels", labels, "labels CSV (subject,frame,label)");
    auto* post_opt = app.add_option("--posterior", posterior, "posterior CSV from fit");
    app.add_option("--fractions", o.fractions, "learning-curve training fractions")->delimiter(',');

    const std::pair<const char*, const char*> commands[] = {
        {"sample", "draw synthetic subjects from the generative model"},
        {"fit", "fit the posterior to labeled subjects"},
        {"predict", "label frames with a fitted posterior"},
        {"eval", "predict and score against truth labels"},
        {"learning-curve", "held-out accuracy for growing training fractions"},
        {"export-bases", "write posterior-mean bases per channel and bin"},
    };
    for (const auto& [name, help] : commands) app.add_subcommand(name, help);

    try {
        app.parse(argc, argv);
    } catch (const CLI::ParseError& e) {
        app.exit(e);
        return e.get_exit_code() == 0 ? 0 : 2;
    }

    try {
        groupfact::RunConfig cfg =
            config_path.empty() ? groupfact::parse_config("", {}) : groupfact::load_config(config_path);
        if (*seed_opt) o.seed = seed;
        if (*threads_opt) o.threads = threads;
        if (*rule_opt) o.rule = rule;
        if (*out_opt) o.out = out;
        if (*max_opt) o.max_iters = max_iters;
        if (*min_opt) o.min_iters = min_iters;
        if (*tol_opt) o.rel_tol = rel_tol;
        if (*labels_opt) o.labels = labels;
        if (*post_opt) o.posterior = posterior;
        for (const auto& d : data) o.subjects.emplace_back(d);
        groupfact::apply(cfg, o);
        groupfact::run(app.get_subcommands().front()->get_name(), cfg);
    } catch (const std::exception& e) {
        spdlog::error("{}", e.what());
        return groupfact::exit_code(e);
    }
    return 0;
}
