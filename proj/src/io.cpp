#include "bgnmf/io.hpp"

#include "bgnmf/errors.hpp"

#include <array>
#include <charconv>
#include <fstream>
#include <map>
#include <tuple>

namespace bgnmf {
namespace {

std::ofstream open_out(const std::filesystem::path& path) {
    std::ofstream out(path, std::ios::binary);
    if (!out) throw DataError("cannot open '" + path.string() + "' for writing");
    return out;
}

std::ifstream open_in(const std::filesystem::path& path) {
    std::ifstream in(path, std::ios::binary);
    if (!in) throw DataError("cannot open '" + path.string() + "'");
    return in;
}

void expect_header(std::istream& in, const std::filesystem::path& path, std::string_view header) {
    std::string line;
    if (!std::getline(in, line) || line != header) {
        throw DataError("'" + path.string() + "': expected header '" + std::string(header) + "'");
    }
}

} // namespace

std::string format_double(double v) {
    std::array<char, 64> buf{};
    const auto res = std::to_chars(buf.data(), buf.data() + buf.size(), v);
    return {buf.data(), res.ptr};
}

double parse_double(std::string_view token) {
    // from_chars rejects a leading '+', which some exporters write.
    if (!token.empty() && token.front() == '+') token.remove_prefix(1);
    double v = 0.0;
    const auto res = std::from_chars(token.data(), token.data() + token.size(), v);
    if (res.ec != std::errc() || res.ptr != token.data() + token.size()) {
        throw DataError("cannot parse '" + std::string(token) + "' as a number");
    }
    return v;
}

long long parse_integer(std::string_view token) {
    if (!token.empty() && token.front() == '+') token.remove_prefix(1);
    long long v = 0;
    const auto res = std::from_chars(token.data(), token.data() + token.size(), v);
    if (res.ec != std::errc() || res.ptr != token.data() + token.size()) {
        throw DataError("cannot parse '" + std::string(token) + "' as an integer");
    }
    return v;
}

std::vector<std::string_view> split_csv(std::string_view line) {
    if (!line.empty() && line.back() == '\r') line.remove_suffix(1);
    std::vector<std::string_view> out;
    std::size_t start = 0;
    for (;;) {
        const auto pos = line.find(',', start);
        if (pos == std::string_view::npos) {
            out.push_back(line.substr(start));
            return out;
        }
        out.push_back(line.substr(start, pos - start));
        start = pos + 1;
    }
}

namespace {

constexpr std::string_view kPosteriorHeader = "factor,subject,row,col,gamma,rho,tau";

void write_factor(std::ostream& out, std::string_view name, int subject, const GigMatrix& q) {
    const auto& p = q.params();
    for (Eigen::Index i = 0; i < q.rows(); ++i) {
        for (Eigen::Index j = 0; j < q.cols(); ++j) {
            out << name << ',' << subject << ',' << i + 1 << ',' << j + 1 << ','
                << format_double(p.gamma(i, j)) << ',' << format_double(p.rho(i, j)) << ','
                << format_double(p.tau(i, j)) << '\n';
        }
    }
}

using Table = std::map<std::pair<long long, long long>, GigParams>;

GigParamMatrix to_matrix(const Table& table, const std::string& what) {
    long long rows = 0;
    long long cols = 0;
    for (const auto& [key, value] : table) {
        rows = std::max(rows, key.first);
        cols = std::max(cols, key.second);
    }
    if (static_cast<long long>(table.size()) != rows * cols) {
        throw DataError("posterior file: " + what + " is missing entries");
    }
    GigParamMatrix out{Matrix(rows, cols), Matrix(rows, cols), Matrix(rows, cols)};
    for (const auto& [key, value] : table) {
        const auto i = static_cast<Eigen::Index>(key.first - 1);
        const auto j = static_cast<Eigen::Index>(key.second - 1);
        out.gamma(i, j) = value.gamma;
        out.rho(i, j) = value.rho;
        out.tau(i, j) = value.tau;
    }
    return out;
}

} // namespace

void write_posterior(const std::filesystem::path& path, const Posterior& post) {
    auto out = open_out(path);
    out << kPosteriorHeader << '\n';
    write_factor(out, "A_C", 0, post.common);
    for (std::size_t l = 0; l < post.individual.size(); ++l) {
        write_factor(out, "A_I", static_cast<int>(l + 1), post.individual[l]);
    }
    for (std::size_t l = 0; l < post.activations.size(); ++l) {
        write_factor(out, "S_I", static_cast<int>(l + 1), post.activations[l]);
    }
    if (!out) throw DataError("failed writing '" + path.string() + "'");
}

Posterior read_posterior(const std::filesystem::path& path) {
    auto in = open_in(path);
    expect_header(in, path, kPosteriorHeader);
    Table common;
    std::map<long long, Table> individual;
    std::map<long long, Table> activations;
    std::string line;
    long long line_no = 1;
    while (std::getline(in, line)) {
        ++line_no;
        if (line.empty()) continue;
        const auto f = split_csv(line);
        if (f.size() != 7) {
            throw DataError("'" + path.string() + "' line " + std::to_string(line_no) +
                            ": expected 7 fields");
        }
        try {
            const long long subject = parse_integer(f[1]);
            const std::pair key{parse_integer(f[2]), parse_integer(f[3])};
            if (key.first < 1 || key.second < 1) throw DataError("indices must be >= 1");
            const GigParams p{parse_double(f[4]), parse_double(f[5]), parse_double(f[6])};
            if (f[0] == "A_C") {
                common[key] = p;
            } else if (f[0] == "A_I") {
                individual[subject][key] = p;
            } else if (f[0] == "S_I") {
                activations[subject][key] = p;
            } else {
                throw DataError("unknown factor '" + std::string(f[0]) + "'");
            }
        } catch (const DataError& e) {
            throw DataError("'" + path.string() + "' line " + std::to_string(line_no) + ": " + e.what());
        }
    }
    if (common.empty()) throw DataError("'" + path.string() + "' has no A_C entries");

    Posterior post;
    post.common.assign(to_matrix(common, "A_C"));
    long long expected = 1;
    for (const auto& [subject, table] : individual) {
        if (subject != expected++) throw DataError("posterior file: A_I subjects not contiguous");
        post.individual.emplace_back(to_matrix(table, "A_I"));
    }
    expected = 1;
    for (const auto& [subject, table] : activations) {
        if (subject != expected++) throw DataError("posterior file: S_I subjects not contiguous");
        post.activations.emplace_back(to_matrix(table, "S_I"));
    }
    if (post.individual.size() != post.activations.size()) {
        throw DataError("posterior file: A_I and S_I cover different subjects");
    }
    return post;
}

void write_trace(const std::filesystem::path& path, const std::vector<TracePoint>& trace) {
    auto out = open_out(path);
    out << "iter,elbo,wall_ms\n";
    for (const auto& t : trace) {
        out << t.iter << ',' << format_double(t.elbo) << ',' << format_double(t.wall_ms) << '\n';
    }
    if (!out) throw DataError("failed writing '" + path.string() + "'");
}

std::vector<TracePoint> read_trace(const std::filesystem::path& path) {
    auto in = open_in(path);
    expect_header(in, path, "iter,elbo,wall_ms");
    std::vector<TracePoint> trace;
    std::string line;
    while (std::getline(in, line)) {
        if (line.empty()) continue;
        const auto f = split_csv(line);
        if (f.size() != 3) throw DataError("'" + path.string() + "': malformed trace row");
        trace.push_back({static_cast<int>(parse_integer(f[0])), parse_double(f[1]), parse_double(f[2])});
    }
    return trace;
}

void write_predictions(const std::filesystem::path& path, const Prediction& pred) {
    auto out = open_out(path);
    const Eigen::Index k_max = pred.scores.empty() ? 0 : pred.scores.front().rows();
    out << "subject,frame,label";
    for (Eigen::Index k = 0; k < k_max; ++k) out << ",d_" << k + 1;
    out << '\n';
    for (std::size_t l = 0; l < pred.labels.size(); ++l) {
        for (std::size_t n = 0; n < pred.labels[l].size(); ++n) {
            out << l + 1 << ',' << n + 1 << ',' << pred.labels[l][n];
            for (Eigen::Index k = 0; k < k_max; ++k) {
                out << ',' << format_double(pred.scores[l](k, static_cast<Eigen::Index>(n)));
            }
            out << '\n';
        }
    }
    if (!out) throw DataError("failed writing '" + path.string() + "'");
}

nlohmann::json to_json(const EvalReport& report) {
    nlohmann::json doc;
    doc["pooled_accuracy"] = report.pooled_accuracy;
    doc["subject_accuracy"] = report.subject_accuracy;
    doc["subject_frames"] = report.subject_frames;
    nlohmann::json confusion = nlohmann::json::array();
    for (Eigen::Index i = 0; i < report.confusion.rows(); ++i) {
        std::vector<long> row(static_cast<std::size_t>(report.confusion.cols()));
        for (Eigen::Index j = 0; j < report.confusion.cols(); ++j) {
            row[static_cast<std::size_t>(j)] = report.confusion(i, j);
        }
        confusion.push_back(row);
    }
    doc["confusion"] = confusion;
    return doc;
}

void write_json(const std::filesystem::path& path, const nlohmann::json& doc) {
    auto out = open_out(path);
    out << doc.dump(2) << '\n';
    if (!out) throw DataError("failed writing '" + path.string() + "'");
}

void write_learning_curve(const std::filesystem::path& path,
                          const std::vector<LearningCurvePoint>& curve) {
    auto out = open_out(path);
    out << "fraction,subject,accuracy,pooled\n";
    for (const auto& point : curve) {
        const std::string fraction = format_double(point.fraction);
        const std::string pooled = format_double(point.report.pooled_accuracy);
        for (std::size_t l = 0; l < point.report.subject_accuracy.size(); ++l) {
            out << fraction << ',' << l + 1 << ',' << format_double(point.report.subject_accuracy[l])
                << ',' << pooled << '\n';
        }
        out << fraction << ",pooled," << pooled << ',' << pooled << '\n';
    }
    if (!out) throw DataError("failed writing '" + path.string() + "'");
}

} // namespace bgnmf
