#include "bgnmf/data.hpp"

#include "bgnmf/errors.hpp"
#include "bgnmf/io.hpp"

#include <cmath>
#include <fstream>
#include <set>
#include <sstream>
#include <string_view>

namespace bgnmf {

void IngestSchema::validate() const {
    if (feature_count && *feature_count < 1) throw ConfigError("feature_count must be >= 1");
    if (label_column == LabelColumn::kNone || label_map.empty()) return;
    std::set<int> targets;
    for (const auto& [raw, id] : label_map) {
        if (id < 1) throw ConfigError("label_map targets must be class ids >= 1");
        if (!targets.insert(id).second) {
            throw ConfigError("label_map is not injective: class " + std::to_string(id) + " used twice");
        }
    }
    if (*targets.rbegin() != static_cast<int>(targets.size())) {
        throw ConfigError("label_map must cover class ids 1..K without gaps");
    }
}

IngestSchema bci3v_schema() {
    IngestSchema s;
    s.delimiter = Delimiter::kWhitespace;
    s.feature_count = 96;
    s.label_column = LabelColumn::kLast;
    s.label_map = {{2, 1}, {3, 2}, {7, 3}};
    return s;
}

void FeatureLayout::validate() const {
    if (channels < 1 || bins_per_channel < 1) {
        throw ConfigError("layout needs channels >= 1 and bins_per_channel >= 1");
    }
    if (!channel_names.empty() && static_cast<int>(channel_names.size()) != channels) {
        throw ConfigError("layout has " + std::to_string(channel_names.size()) + " channel names for " +
                          std::to_string(channels) + " channels");
    }
}

Delimiter parse_delimiter(const std::string& name) {
    if (name == "whitespace" || name == "space") return Delimiter::kWhitespace;
    if (name == "comma" || name == ",") return Delimiter::kComma;
    throw ConfigError("unknown delimiter '" + name + "' (expected whitespace or comma)");
}

LabelColumn parse_label_column(const std::string& name) {
    if (name == "none") return LabelColumn::kNone;
    if (name == "first") return LabelColumn::kFirst;
    if (name == "last") return LabelColumn::kLast;
    throw ConfigError("unknown label column '" + name + "' (expected none, first or last)");
}

std::map<long long, int> parse_label_map(const std::string& text) {
    std::map<long long, int> out;
    if (text.empty()) return out;
    for (auto entry : split_csv(text)) {
        while (!entry.empty() && entry.front() == ' ') entry.remove_prefix(1);
        while (!entry.empty() && entry.back() == ' ') entry.remove_suffix(1);
        const auto colon = entry.find(':');
        if (colon == std::string_view::npos) {
            throw ConfigError("label_map entry '" + std::string(entry) + "' is not raw:class");
        }
        try {
            const long long raw = parse_integer(entry.substr(0, colon));
            const auto id = static_cast<int>(parse_integer(entry.substr(colon + 1)));
            if (!out.emplace(raw, id).second) {
                throw ConfigError("label_map lists raw label " + std::to_string(raw) + " twice");
            }
        } catch (const DataError& e) {
            throw ConfigError(std::string("label_map: ") + e.what());
        }
    }
    return out;
}

namespace {

std::vector<std::string_view> tokenize(std::string_view line, Delimiter delim) {
    std::vector<std::string_view> out;
    if (delim == Delimiter::kComma) {
        for (auto t : split_csv(line)) {
            while (!t.empty() && (t.front() == ' ' || t.front() == '\t')) t.remove_prefix(1);
            while (!t.empty() && (t.back() == ' ' || t.back() == '\t')) t.remove_suffix(1);
            out.push_back(t);
        }
        return out;
    }
    std::size_t i = 0;
    while (i < line.size()) {
        while (i < line.size() && std::isspace(static_cast<unsigned char>(line[i]))) ++i;
        const std::size_t start = i;
        while (i < line.size() && !std::isspace(static_cast<unsigned char>(line[i]))) ++i;
        if (i > start) out.push_back(line.substr(start, i - start));
    }
    return out;
}

bool skippable(std::string_view line) {
    for (char c : line) {
        if (c == '#') return true;
        if (!std::isspace(static_cast<unsigned char>(c))) return false;
    }
    return true;
}

struct Cell {
    std::string text;
    long row;
    long col;
};

} // namespace

Subject load_subject(const std::filesystem::path& path, const IngestSchema& schema) {
    schema.validate();
    std::ifstream in(path, std::ios::binary);
    if (!in) throw DataError("cannot open '" + path.string() + "'");
    const std::string where = "'" + path.string() + "'";

    // Token table in file layout, with file row/column kept for messages.
    std::vector<std::vector<Cell>> table;
    std::string line;
    long row = 0;
    while (std::getline(in, line)) {
        ++row;
        if (skippable(line)) continue;
        const auto tokens = tokenize(line, schema.delimiter);
        std::vector<Cell> cells;
        cells.reserve(tokens.size());
        for (std::size_t c = 0; c < tokens.size(); ++c) {
            cells.push_back({std::string(tokens[c]), row, static_cast<long>(c + 1)});
        }
        if (!table.empty() && cells.size() != table.front().size()) {
            throw DataError(where + " row " + std::to_string(row) + ": " + std::to_string(cells.size()) +
                            " columns, expected " + std::to_string(table.front().size()));
        }
        table.push_back(std::move(cells));
    }
    if (table.empty()) throw DataError(where + ": no frames");

    // Frames as lists of cells.
    std::vector<std::vector<Cell>> frames;
    if (schema.transpose) {
        frames.resize(table.front().size());
        for (auto& r : table) {
            for (std::size_t c = 0; c < r.size(); ++c) frames[c].push_back(std::move(r[c]));
        }
    } else {
        frames = std::move(table);
    }

    const bool has_label = schema.label_column != LabelColumn::kNone;
    const auto width = static_cast<long>(frames.front().size()) - (has_label ? 1 : 0);
    if (width < 1) throw DataError(where + ": no feature columns");
    if (schema.feature_count && width != *schema.feature_count) {
        throw DataError(where + ": " + std::to_string(width) + " features per frame, expected " +
                        std::to_string(*schema.feature_count));
    }
    const std::size_t first_feature = schema.label_column == LabelColumn::kFirst ? 1 : 0;

    Subject s;
    s.name = path.stem().string();
    s.x.resize(width, static_cast<Eigen::Index>(frames.size()));
    LabelVector labels;
    for (std::size_t n = 0; n < frames.size(); ++n) {
        const auto& f = frames[n];
        for (long m = 0; m < width; ++m) {
            const Cell& cell = f[first_feature + static_cast<std::size_t>(m)];
            const std::string at = where + " row " + std::to_string(cell.row) + ", column " +
                                   std::to_string(cell.col);
            double v = 0.0;
            try {
                v = parse_double(cell.text);
            } catch (const DataError&) {
                throw DataError(at + ": cannot parse '" + cell.text + "' as a number");
            }
            if (!std::isfinite(v)) throw DataError(at + ": non-finite feature '" + cell.text + "'");
            if (v < 0.0) throw DataError(at + ": negative feature " + cell.text);
            s.x(m, static_cast<Eigen::Index>(n)) = v;
        }
        if (has_label) {
            const Cell& cell = schema.label_column == LabelColumn::kFirst ? f.front() : f.back();
            const std::string at = where + " row " + std::to_string(cell.row) + ", column " +
                                   std::to_string(cell.col);
            long long raw = 0;
            try {
                // Some exports write integer labels as "7.0".
                const double d = parse_double(cell.text);
                if (d != std::floor(d) || std::abs(d) > 1e15) throw DataError("");
                raw = static_cast<long long>(d);
            } catch (const DataError&) {
                throw DataError(at + ": cannot parse label '" + cell.text + "'");
            }
            int id = static_cast<int>(raw);
            if (!schema.label_map.empty()) {
                const auto it = schema.label_map.find(raw);
                if (it == schema.label_map.end()) {
                    throw DataError(at + ": unknown raw label " + std::to_string(raw));
                }
                id = it->second;
            } else if (raw < 1) {
                throw DataError(at + ": label " + std::to_string(raw) + " is not a class id >= 1");
            }
            labels.push_back(id);
        }
    }
    if (has_label) s.labels = std::move(labels);
    return s;
}

GroupedDataset load_group(const std::vector<std::filesystem::path>& paths,
                          const IngestSchema& schema) {
    if (paths.empty()) throw DataError("no subject files given");
    GroupedDataset data;
    for (const auto& p : paths) {
        Subject s = load_subject(p, schema);
        if (!data.subjects.empty() && s.features() != data.subjects.front().features()) {
            const Subject& first = data.subjects.front();
            throw DataError("feature dimension mismatch: subject '" + first.name + "' has " +
                            std::to_string(first.features()) + " features, subject '" + s.name +
                            "' has " + std::to_string(s.features()));
        }
        data.subjects.push_back(std::move(s));
    }
    data.validate();
    return data;
}

void write_subject(const std::filesystem::path& path, const Subject& subject, bool with_labels) {
    if (with_labels && !subject.labels) {
        throw DataError("subject '" + subject.name + "' has no labels to write");
    }
    std::ofstream out(path, std::ios::binary);
    if (!out) throw DataError("cannot open '" + path.string() + "' for writing");
    for (Eigen::Index n = 0; n < subject.x.cols(); ++n) {
        for (Eigen::Index m = 0; m < subject.x.rows(); ++m) {
            if (m > 0) out << ' ';
            out << format_double(subject.x(m, n));
        }
        if (with_labels) out << ' ' << (*subject.labels)[static_cast<std::size_t>(n)];
        out << '\n';
    }
    if (!out) throw DataError("failed writing '" + path.string() + "'");
}

void write_labels_csv(const std::filesystem::path& path, const std::vector<LabelVector>& labels) {
    std::ofstream out(path, std::ios::binary);
    if (!out) throw DataError("cannot open '" + path.string() + "' for writing");
    out << "subject,frame,label\n";
    for (std::size_t l = 0; l < labels.size(); ++l) {
        for (std::size_t n = 0; n < labels[l].size(); ++n) {
            out << l + 1 << ',' << n + 1 << ',' << labels[l][n] << '\n';
        }
    }
    if (!out) throw DataError("failed writing '" + path.string() + "'");
}

std::vector<LabelVector> read_labels_csv(const std::filesystem::path& path) {
    std::ifstream in(path, std::ios::binary);
    if (!in) throw DataError("cannot open '" + path.string() + "'");
    std::string line;
    if (!std::getline(in, line) || split_csv(line) != std::vector<std::string_view>{"subject", "frame", "label"}) {
        throw DataError("'" + path.string() + "': expected header 'subject,frame,label'");
    }
    std::vector<LabelVector> out;
    long row = 1;
    while (std::getline(in, line)) {
        ++row;
        if (skippable(line)) continue;
        const std::string at = "'" + path.string() + "' row " + std::to_string(row);
        const auto f = split_csv(line);
        if (f.size() != 3) throw DataError(at + ": expected 3 fields");
        long long l = 0;
        long long n = 0;
        long long y = 0;
        try {
            l = parse_integer(f[0]);
            n = parse_integer(f[1]);
            y = parse_integer(f[2]);
        } catch (const DataError& e) {
            throw DataError(at + ": " + e.what());
        }
        if (l < 1 || l > static_cast<long long>(out.size()) + 1) {
            throw DataError(at + ": subjects must appear in order starting at 1");
        }
        if (l == static_cast<long long>(out.size()) + 1) out.emplace_back();
        auto& v = out[static_cast<std::size_t>(l - 1)];
        if (n != static_cast<long long>(v.size()) + 1) {
            throw DataError(at + ": frames must be consecutive starting at 1");
        }
        if (y < 1) throw DataError(at + ": label must be a class id >= 1");
        v.push_back(static_cast<int>(y));
    }
    return out;
}

void attach_labels(GroupedDataset& data, const std::vector<LabelVector>& labels) {
    if (labels.size() != data.subjects.size()) {
        throw DataError("labels cover " + std::to_string(labels.size()) + " subjects, data has " +
                        std::to_string(data.subjects.size()));
    }
    for (std::size_t l = 0; l < labels.size(); ++l) {
        Subject& s = data.subjects[l];
        if (static_cast<int>(labels[l].size()) != s.frames()) {
            throw DataError("subject '" + s.name + "' has " + std::to_string(s.frames()) + " frames but " +
                            std::to_string(labels[l].size()) + " labels");
        }
        s.labels = labels[l];
    }
}

void export_bases(const Posterior& post, const FeatureLayout& layout,
                  const std::filesystem::path& out_path) {
    layout.validate();
    if (layout.feature_count() != post.features()) {
        throw ConfigError("layout " + std::to_string(layout.channels) + "x" +
                          std::to_string(layout.bins_per_channel) + " does not match " +
                          std::to_string(post.features()) + " features");
    }
    std::ofstream out(out_path, std::ios::binary);
    if (!out) throw DataError("cannot open '" + out_path.string() + "' for writing");
    out << "basis,channel,bin,value\n";
    auto emit = [&](const std::string& name, const auto& column) {
        for (Eigen::Index m = 0; m < column.size(); ++m) {
            const int channel = static_cast<int>(m) / layout.bins_per_channel;
            const int bin = static_cast<int>(m) % layout.bins_per_channel;
            out << name << ',';
            if (layout.channel_names.empty()) {
                out << channel + 1;
            } else {
                out << layout.channel_names[static_cast<std::size_t>(channel)];
            }
            out << ',' << bin + 1 << ',' << format_double(column(m)) << '\n';
        }
    };
    const Matrix& common = post.common.mean();
    for (Eigen::Index k = 0; k < common.cols(); ++k) {
        emit("common_" + std::to_string(k + 1), common.col(k));
    }
    for (std::size_t l = 0; l < post.individual.size(); ++l) {
        const Matrix& ind = post.individual[l].mean();
        for (Eigen::Index j = 0; j < ind.cols(); ++j) {
            emit("individual_s" + std::to_string(l + 1) + "_j" + std::to_string(j + 1), ind.col(j));
        }
    }
    if (!out) throw DataError("failed writing '" + out_path.string() + "'");
}

} // namespace bgnmf
