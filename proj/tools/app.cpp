#include "app.hpp"

#include <bgnmf/errors.hpp>
#include <bgnmf/io.hpp>

#include <boost/property_tree/ini_parser.hpp>
#include <boost/property_tree/ptree.hpp>
#include <spdlog/sinks/stdout_sinks.h>
#include <spdlog/spdlog.h>

#include <chrono>
#include <cstdlib>
#include <fstream>
#include <map>
#include <set>
#include <sstream>

namespace groupfact {

using bgnmf::ConfigError;
namespace pt = boost::property_tree;

namespace {

const std::map<std::string, std::set<std::string>>& known_keys() {
    static const std::map<std::string, std::set<std::string>> keys{
        {"model", {"a", "b", "c", "K", "J"}},
        {"fit", {"max_iters", "min_iters", "rel_tol", "seed", "threads", "track_elbo_every", "init_jitter"}},
        {"data", {"subjects", "labels", "delimiter", "feature_count", "label_column", "label_map", "transpose"}},
        {"layout", {"channels", "bins_per_channel", "channel_names"}},
        {"sample", {"subjects", "features", "frames", "run_length", "seed"}},
        {"predict", {"posterior", "rule"}},
        {"learning_curve", {"fractions", "holdout"}},
        {"output", {"dir"}},
    };
    return keys;
}

std::string trim(std::string_view s) {
    while (!s.empty() && std::isspace(static_cast<unsigned char>(s.front()))) s.remove_prefix(1);
    while (!s.empty() && std::isspace(static_cast<unsigned char>(s.back()))) s.remove_suffix(1);
    return std::string(s);
}

std::vector<std::string> split_list(const std::string& text) {
    std::vector<std::string> out;
    for (auto item : bgnmf::split_csv(text)) {
        std::string t = trim(item);
        if (!t.empty()) out.push_back(std::move(t));
    }
    return out;
}

// Value parsers that report section.key on failure.
class Reader {
  public:
    Reader(std::string section, std::string key, std::string value)
        : name_(std::move(section) + "." + std::move(key)), value_(trim(value)) {}

    const std::string& text() const { return value_; }

    double real() const {
        try {
            return bgnmf::parse_double(value_);
        } catch (const bgnmf::DataError&) {
            throw ConfigError(name_ + ": '" + value_ + "' is not a number");
        }
    }

    long long integer() const {
        try {
            return bgnmf::parse_integer(value_);
        } catch (const bgnmf::DataError&) {
            throw ConfigError(name_ + ": '" + value_ + "' is not an integer");
        }
    }

    int small_int() const {
        const long long v = integer();
        if (v < -1'000'000'000LL || v > 1'000'000'000LL) throw ConfigError(name_ + ": out of range");
        return static_cast<int>(v);
    }

    bool boolean() const {
        if (value_ == "true" || value_ == "yes" || value_ == "on" || value_ == "1") return true;
        if (value_ == "false" || value_ == "no" || value_ == "off" || value_ == "0") return false;
        throw ConfigError(name_ + ": '" + value_ + "' is not a boolean");
    }

    std::vector<double> reals() const {
        std::vector<double> out;
        for (const auto& item : split_list(value_)) out.push_back(Reader(name_, "", item).real());
        return out;
    }

    std::vector<int> ints() const {
        std::vector<int> out;
        for (const auto& item : split_list(value_)) out.push_back(Reader(name_, "", item).small_int());
        return out;
    }

    template <class Fn>
    auto wrap(Fn fn) const {
        try {
            return fn(value_);
        } catch (const ConfigError& e) {
            throw ConfigError(name_ + ": " + e.what());
        }
    }

  private:
    std::string name_;
    std::string value_;
};

fs::path resolve(const fs::path& base, const std::string& p) {
    const fs::path path(p);
    return path.is_absolute() || base.empty() ? path : base / path;
}

std::string delimiter_name(bgnmf::Delimiter d) {
    return d == bgnmf::Delimiter::kComma ? "comma" : "whitespace";
}

std::string label_column_name(bgnmf::LabelColumn c) {
    switch (c) {
    case bgnmf::LabelColumn::kFirst:
        return "first";
    case bgnmf::LabelColumn::kLast:
        return "last";
    case bgnmf::LabelColumn::kNone:
        break;
    }
    return "none";
}

std::string join_paths(const std::vector<fs::path>& paths) {
    std::string out;
    for (const auto& p : paths) out += (out.empty() ? "" : ",") + p.string();
    return out;
}

} // namespace

RunConfig parse_config(const std::string& text, const fs::path& base) {
    pt::ptree tree;
    try {
        std::istringstream in(text);
        pt::read_ini(in, tree);
    } catch (const pt::ini_parser_error& e) {
        throw ConfigError(std::string("config: ") + e.what());
    }

    RunConfig cfg;
    cfg.schema.feature_count = 96;
    bool c_given = false;
    for (const auto& [section, body] : tree) {
        const auto known = known_keys().find(section);
        if (known == known_keys().end()) {
            if (!body.data().empty()) throw ConfigError("config: key '" + section + "' outside any section");
            throw ConfigError("config: unknown section [" + section + "]");
        }
        for (const auto& [key, node] : body) {
            if (!known->second.contains(key)) {
                throw ConfigError("config: unknown key '" + key + "' in [" + section + "]");
            }
            const Reader r(section, key, node.data());
            if (section == "model") {
                if (key == "a") cfg.model.a = r.real();
                if (key == "b") cfg.model.b = r.real();
                if (key == "c") {
                    cfg.model.c = r.reals();
                    c_given = true;
                }
                if (key == "K") cfg.model.K = r.small_int();
                if (key == "J") cfg.model.J = r.small_int();
            } else if (section == "fit") {
                if (key == "max_iters") cfg.fit.max_iters = r.small_int();
                if (key == "min_iters") {
                    cfg.fit.min_iters = r.small_int();
                    cfg.min_iters_set = true;
                }
                if (key == "rel_tol") cfg.fit.rel_tol = r.real();
                if (key == "seed") cfg.fit.seed = static_cast<std::uint64_t>(r.integer());
                if (key == "threads") cfg.fit.threads = r.small_int();
                if (key == "track_elbo_every") cfg.fit.track_elbo_every = r.small_int();
                if (key == "init_jitter") cfg.fit.init_jitter = r.boolean();
            } else if (section == "data") {
                if (key == "subjects") {
                    cfg.subjects.clear();
                    for (const auto& p : split_list(r.text())) cfg.subjects.push_back(resolve(base, p));
                }
                if (key == "labels") cfg.labels = resolve(base, r.text());
                if (key == "delimiter") cfg.schema.delimiter = r.wrap(bgnmf::parse_delimiter);
                if (key == "feature_count") {
                    if (r.text() == "auto") {
                        cfg.schema.feature_count.reset();
                    } else {
                        cfg.schema.feature_count = r.small_int();
                    }
                }
                if (key == "label_column") cfg.schema.label_column = r.wrap(bgnmf::parse_label_column);
                if (key == "label_map") cfg.schema.label_map = r.wrap(bgnmf::parse_label_map);
                if (key == "transpose") cfg.schema.transpose = r.boolean();
            } else if (section == "layout") {
                cfg.layout_set = true;
                if (key == "channels") cfg.layout.channels = r.small_int();
                if (key == "bins_per_channel") cfg.layout.bins_per_channel = r.small_int();
                if (key == "channel_names") cfg.layout.channel_names = split_list(r.text());
            } else if (section == "sample") {
                if (key == "subjects") cfg.sample.subjects = r.small_int();
                if (key == "features") cfg.sample.features = r.small_int();
                if (key == "frames") cfg.sample.frames = r.ints();
                if (key == "run_length") cfg.sample.run_length = r.small_int();
                if (key == "seed") cfg.sample.seed = static_cast<std::uint64_t>(r.integer());
            } else if (section == "predict") {
                if (key == "posterior") cfg.posterior = resolve(base, r.text());
                if (key == "rule") cfg.rule = r.wrap(bgnmf::parse_rule);
            } else if (section == "learning_curve") {
                if (key == "fractions") cfg.fractions = r.reals();
                if (key == "holdout") cfg.holdout = r.real();
            } else if (section == "output") {
                if (key == "dir") cfg.out = resolve(base, r.text());
            }
        }
    }
    // A single c value applies to every class.
    if (c_given && cfg.model.c.size() == 1 && cfg.model.K > 1) {
        cfg.model.c.assign(static_cast<std::size_t>(cfg.model.K), cfg.model.c.front());
    } else if (!c_given) {
        cfg.model.c.assign(static_cast<std::size_t>(std::max(cfg.model.K, 0)), 0.1);
    }
    if (!cfg.min_iters_set) cfg.fit.min_iters = std::min(cfg.fit.min_iters, cfg.fit.max_iters);
    cfg.validate();
    return cfg;
}

RunConfig load_config(const fs::path& path) {
    std::ifstream in(path, std::ios::binary);
    if (!in) throw ConfigError("cannot read config '" + path.string() + "'");
    std::ostringstream text;
    text << in.rdbuf();
    return parse_config(text.str(), path.parent_path());
}

void RunConfig::validate() const {
    model.validate();
    fit.validate();
    schema.validate();
    if (layout_set) layout.validate();
    if (sample.subjects < 1 || sample.features < 1) {
        throw ConfigError("sample: subjects and features must be >= 1");
    }
    if (sample.frames.empty()) throw ConfigError("sample.frames is empty");
    if (sample.frames.size() != 1 && static_cast<int>(sample.frames.size()) != sample.subjects) {
        throw ConfigError("sample.frames needs one value or one per subject");
    }
    for (int n : sample.frames) {
        if (n < 1) throw ConfigError("sample.frames must be >= 1");
    }
    if (sample.run_length < 1) throw ConfigError("sample.run_length must be >= 1");
    if (!(holdout > 0.0 && holdout < 1.0)) throw ConfigError("learning_curve.holdout must lie in (0, 1)");
    if (fractions.empty()) throw ConfigError("learning_curve.fractions is empty");
    for (std::size_t i = 0; i < fractions.size(); ++i) {
        if (!(fractions[i] > 0.0 && fractions[i] <= 1.0)) {
            throw ConfigError("learning_curve.fractions must lie in (0, 1]");
        }
        if (i > 0 && fractions[i] < fractions[i - 1]) {
            throw ConfigError("learning_curve.fractions must be ascending");
        }
    }
}

nlohmann::json RunConfig::echo() const {
    nlohmann::json j;
    j["model"] = {{"a", model.a}, {"b", model.b}, {"c", model.c}, {"K", model.K}, {"J", model.J}};
    j["fit"] = {{"max_iters", fit.max_iters},
                {"min_iters", fit.min_iters},
                {"rel_tol", fit.rel_tol},
                {"seed", fit.seed},
                {"threads", fit.threads},
                {"track_elbo_every", fit.track_elbo_every},
                {"init_jitter", fit.init_jitter}};
    nlohmann::json label_map = nlohmann::json::object();
    for (const auto& [raw, id] : schema.label_map) label_map[std::to_string(raw)] = id;
    j["data"] = {{"subjects", join_paths(subjects)},
                 {"labels", labels ? labels->string() : ""},
                 {"delimiter", delimiter_name(schema.delimiter)},
                 {"feature_count", schema.feature_count ? nlohmann::json(*schema.feature_count)
                                                        : nlohmann::json("auto")},
                 {"label_column", label_column_name(schema.label_column)},
                 {"label_map", label_map},
                 {"transpose", schema.transpose}};
    j["layout"] = {{"channels", layout.channels},
                   {"bins_per_channel", layout.bins_per_channel},
                   {"channel_names", layout.channel_names},
                   {"explicit", layout_set}};
    j["sample"] = {{"subjects", sample.subjects},
                   {"features", sample.features},
                   {"frames", sample.frames},
                   {"run_length", sample.run_length},
                   {"seed", sample.seed}};
    j["predict"] = {{"posterior", posterior ? posterior->string() : ""}, {"rule", bgnmf::rule_name(rule)}};
    j["learning_curve"] = {{"fractions", fractions}, {"holdout", holdout}};
    j["output"] = {{"dir", out.string()}};
    return j;
}

void apply(RunConfig& cfg, const Overrides& o) {
    if (o.seed) {
        cfg.fit.seed = *o.seed;
        cfg.sample.seed = *o.seed;
    }
    if (o.threads) cfg.fit.threads = *o.threads;
    if (o.rule) cfg.rule = bgnmf::parse_rule(*o.rule);
    if (o.out) cfg.out = *o.out;
    if (o.max_iters) cfg.fit.max_iters = *o.max_iters;
    if (o.min_iters) {
        cfg.fit.min_iters = *o.min_iters;
        cfg.min_iters_set = true;
    }
    if (!cfg.min_iters_set) cfg.fit.min_iters = std::min(10, cfg.fit.max_iters);
    if (o.rel_tol) cfg.fit.rel_tol = *o.rel_tol;
    if (!o.subjects.empty()) cfg.subjects = o.subjects;
    if (o.labels) cfg.labels = *o.labels;
    if (o.posterior) cfg.posterior = *o.posterior;
    if (!o.fractions.empty()) cfg.fractions = o.fractions;
    cfg.validate();
}

namespace {

using Clock = std::chrono::steady_clock;

double elapsed_ms(Clock::time_point start) {
    return std::chrono::duration<double, std::milli>(Clock::now() - start).count();
}

void ensure_out(const fs::path& dir) {
    std::error_code ec;
    fs::create_directories(dir, ec);
    if (ec || !fs::is_directory(dir)) {
        throw bgnmf::DataError("cannot create output directory '" + dir.string() + "'");
    }
}

bgnmf::GroupedDataset load_inputs(const RunConfig& cfg, bool attach) {
    if (cfg.subjects.empty()) throw ConfigError("no subject files: set data.subjects or pass --data");
    bgnmf::GroupedDataset data = bgnmf::load_group(cfg.subjects, cfg.schema);
    if (attach && cfg.labels) bgnmf::attach_labels(data, bgnmf::read_labels_csv(*cfg.labels));
    const auto sum = data.summary();
    spdlog::info("loaded {} subjects, {} features", sum.subjects, sum.features);
    for (std::size_t l = 0; l < data.subjects.size(); ++l) {
        spdlog::debug("subject {} '{}': {} frames", l + 1, data.subjects[l].name, sum.frames[l]);
    }
    return data;
}

bgnmf::GroupedDataset load_labeled(const RunConfig& cfg) {
    bgnmf::GroupedDataset data = load_inputs(cfg, true);
    if (!data.labeled()) {
        throw ConfigError("labels required: set data.labels, --labels or data.label_column");
    }
    data.validate(cfg.model.K);
    return data;
}

bgnmf::FeatureLayout layout_for(const RunConfig& cfg, int features) {
    if (cfg.layout_set || cfg.layout.feature_count() == features) return cfg.layout;
    spdlog::info("no layout configured for {} features; exporting as 1 channel x {} bins", features,
                 features);
    bgnmf::FeatureLayout flat;
    flat.channels = 1;
    flat.bins_per_channel = features;
    return flat;
}

bgnmf::Posterior load_posterior(const RunConfig& cfg) {
    if (!cfg.posterior) throw ConfigError("no posterior: set predict.posterior or pass --posterior");
    return bgnmf::read_posterior(*cfg.posterior);
}

void write_latent(const fs::path& path, const bgnmf::LatentState& latent) {
    std::ofstream out(path, std::ios::binary);
    if (!out) throw bgnmf::DataError("cannot open '" + path.string() + "' for writing");
    out << "factor,subject,row,col,value\n";
    auto emit = [&](const char* name, std::size_t subject, const bgnmf::Matrix& m) {
        for (Eigen::Index i = 0; i < m.rows(); ++i) {
            for (Eigen::Index j = 0; j < m.cols(); ++j) {
                out << name << ',' << subject << ',' << i + 1 << ',' << j + 1 << ','
                    << bgnmf::format_double(m(i, j)) << '\n';
            }
        }
    };
    emit("A_C", 0, latent.common);
    for (std::size_t l = 0; l < latent.individual.size(); ++l) emit("A_I", l + 1, latent.individual[l]);
    for (std::size_t l = 0; l < latent.activations.size(); ++l) emit("S_I", l + 1, latent.activations[l]);
    if (!out) throw bgnmf::DataError("failed writing '" + path.string() + "'");
}

nlohmann::json manifest(const std::string& command, const RunConfig& cfg, double wall_ms) {
    return {{"command", command}, {"version", "0.1.0"}, {"config", cfg.echo()}, {"wall_ms", wall_ms}};
}

} // namespace

void cmd_sample(const RunConfig& cfg) {
    const auto start = Clock::now();
    ensure_out(cfg.out);
    const auto& s = cfg.sample;
    bgnmf::Dims dims{s.subjects, s.features, {}};
    std::vector<bgnmf::LabelVector> labels;
    for (int l = 0; l < s.subjects; ++l) {
        const int n = s.frames.size() == 1 ? s.frames.front() : s.frames[static_cast<std::size_t>(l)];
        dims.frames.push_back(n);
        labels.push_back(bgnmf::cyclic_labels(n, cfg.model.K, s.run_length));
    }
    const bgnmf::SampledData sampled = bgnmf::sample_dataset(cfg.model, dims, labels, s.seed);

    std::vector<std::string> files;
    for (const auto& subj : sampled.data.subjects) {
        const std::string file = subj.name + ".txt";
        bgnmf::write_subject(cfg.out / file, subj, false);
        files.push_back(file);
    }
    bgnmf::write_labels_csv(cfg.out / "labels.csv", labels);
    write_latent(cfg.out / "latent.csv", sampled.latent);

    // Ready-made data section for fitting the sampled files.
    std::ofstream ini(cfg.out / "data.ini", std::ios::binary);
    ini << "[data]\nsubjects = ";
    for (std::size_t i = 0; i < files.size(); ++i) ini << (i ? ", " : "") << files[i];
    ini << "\nlabels = labels.csv\nfeature_count = " << s.features << "\n";
    if (!ini) throw bgnmf::DataError("failed writing data.ini");

    auto m = manifest("sample", cfg, elapsed_ms(start));
    m["outputs"] = files;
    m["outputs"].push_back("labels.csv");
    m["outputs"].push_back("latent.csv");
    m["outputs"].push_back("data.ini");
    bgnmf::write_json(cfg.out / "manifest.json", m);
    spdlog::info("sampled {} subjects into {}", s.subjects, cfg.out.string());
}

void cmd_fit(const RunConfig& cfg) {
    const auto start = Clock::now();
    const bgnmf::GroupedDataset data = load_labeled(cfg);
    ensure_out(cfg.out);
    const bgnmf::FitResult res = bgnmf::fit(data, cfg.model, cfg.fit);
    for (const auto& w : res.warnings) spdlog::warn("{}", w);
    for (const auto& t : res.trace) spdlog::debug("iter {} elbo {} ({} ms)", t.iter, t.elbo, t.wall_ms);
    spdlog::info("fit: {} iterations, {}, final bound {}", res.iterations,
                 res.converged ? "converged" : "not converged", res.trace.back().elbo);

    bgnmf::write_posterior(cfg.out / "posterior.csv", res.posterior);
    bgnmf::write_trace(cfg.out / "trace.csv", res.trace);
    bgnmf::export_bases(res.posterior, layout_for(cfg, data.features()), cfg.out / "bases.csv");

    auto m = manifest("fit", cfg, elapsed_ms(start));
    m["iterations"] = res.iterations;
    m["converged"] = res.converged;
    m["final_elbo"] = res.trace.back().elbo;
    m["warnings"] = res.warnings;
    m["outputs"] = {"posterior.csv", "trace.csv", "bases.csv"};
    bgnmf::write_json(cfg.out / "manifest.json", m);
}

void cmd_predict(const RunConfig& cfg) {
    const bgnmf::Posterior post = load_posterior(cfg);
    const bgnmf::GroupedDataset data = load_inputs(cfg, false);
    ensure_out(cfg.out);
    const bgnmf::Prediction pred = bgnmf::predict(data, post, cfg.rule);
    bgnmf::write_predictions(cfg.out / "predictions.csv", pred);
    spdlog::info("wrote predictions with rule {}", bgnmf::rule_name(cfg.rule));
}

void cmd_eval(const RunConfig& cfg) {
    const bgnmf::Posterior post = load_posterior(cfg);
    const bgnmf::GroupedDataset data = load_inputs(cfg, false);
    std::vector<bgnmf::LabelVector> truth;
    if (cfg.labels) {
        truth = bgnmf::read_labels_csv(*cfg.labels);
    } else if (data.labeled()) {
        truth = data.labels();
    } else {
        throw ConfigError("eval needs truth labels: set data.labels, --labels or data.label_column");
    }
    ensure_out(cfg.out);
    const bgnmf::Prediction pred = bgnmf::predict(data, post, cfg.rule);
    const bgnmf::EvalReport report = bgnmf::evaluate(pred, truth, post.classes());
    bgnmf::write_predictions(cfg.out / "predictions.csv", pred);
    auto doc = bgnmf::to_json(report);
    doc["rule"] = bgnmf::rule_name(cfg.rule);
    bgnmf::write_json(cfg.out / "eval.json", doc);
    spdlog::info("pooled accuracy {:.4f}", report.pooled_accuracy);
}

void cmd_learning_curve(const RunConfig& cfg) {
    const auto start = Clock::now();
    const bgnmf::GroupedDataset data = load_labeled(cfg);
    ensure_out(cfg.out);
    const auto curve =
        bgnmf::learning_curve(data, cfg.model, cfg.fit, cfg.fractions, cfg.holdout, cfg.rule);
    for (const auto& p : curve) {
        spdlog::info("fraction {}: pooled accuracy {:.4f}", p.fraction, p.report.pooled_accuracy);
    }
    bgnmf::write_learning_curve(cfg.out / "learning_curve.csv", curve);
    auto m = manifest("learning-curve", cfg, elapsed_ms(start));
    m["outputs"] = {"learning_curve.csv"};
    bgnmf::write_json(cfg.out / "manifest.json", m);
}

void cmd_export_bases(const RunConfig& cfg) {
    const bgnmf::Posterior post = load_posterior(cfg);
    ensure_out(cfg.out);
    bgnmf::export_bases(post, layout_for(cfg, post.features()), cfg.out / "bases.csv");
}

void run(const std::string& command, const RunConfig& cfg) {
    if (command == "sample") return cmd_sample(cfg);
    if (command == "fit") return cmd_fit(cfg);
    if (command == "predict") return cmd_predict(cfg);
    if (command == "eval") return cmd_eval(cfg);
    if (command == "learning-curve") return cmd_learning_curve(cfg);
    if (command == "export-bases") return cmd_export_bases(cfg);
    throw ConfigError("unknown command '" + command + "'");
}

int exit_code(const std::exception& e) {
    if (dynamic_cast<const bgnmf::ConfigError*>(&e)) return 2;
    if (dynamic_cast<const bgnmf::DataError*>(&e)) return 3;
    if (dynamic_cast<const bgnmf::NumericalError*>(&e)) return 4;
    if (dynamic_cast<const bgnmf::DomainError*>(&e)) return 4;
    return 1;
}

void init_logging() {
    auto logger = spdlog::stderr_logger_st("groupfact");
    logger->set_pattern("groupfact [%l] %v");
    spdlog::set_default_logger(logger);
    spdlog::set_level(spdlog::level::info);
    if (const char* env = std::getenv("GROUPFACT_LOG")) {
        const std::string level(env);
        if (level == "error") {
            spdlog::set_level(spdlog::level::err);
        } else if (level == "debug") {
            spdlog::set_level(spdlog::level::debug);
        } else if (level != "info" && !level.empty()) {
            spdlog::warn("ignoring GROUPFACT_LOG='{}' (expected error, info or debug)", level);
        }
    }
}

} // namespace groupfact
