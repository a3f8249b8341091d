#pragma once

#include "bgnmf/inference.hpp"
#include "bgnmf/model.hpp"

#include <filesystem>
#include <map>
#include <optional>
#include <string>
#include <vector>

namespace bgnmf {

enum class Delimiter { kWhitespace, kComma };
enum class LabelColumn { kNone, kFirst, kLast };

/**
 * Layout of a delimited-text feature file. Defaults follow the ASCII
 * precomputed-feature files of BCI Competition III dataset V: whitespace
 * separated, 96 features per row, raw label {2, 3, 7} in the last column.
 */
struct IngestSchema {
    Delimiter delimiter = Delimiter::kWhitespace;
    /// Expected features per frame; nullopt infers it from the first row.
    std::optional<int> feature_count = 96;
    LabelColumn label_column = LabelColumn::kNone;
    /// Raw label -> class id in 1..K. Empty means raw labels are class ids.
    std::map<long long, int> label_map;
    /// Rows are features and columns are frames.
    bool transpose = false;

    void validate() const;
};

/// Default schema for the public BCI III dataset V feature files.
IngestSchema bci3v_schema();

struct FeatureLayout {
    int channels = 8;
    int bins_per_channel = 12;
    std::vector<std::string> channel_names;

    int feature_count() const { return channels * bins_per_channel; }
    void validate() const;
};

Delimiter parse_delimiter(const std::string& name);
LabelColumn parse_label_column(const std::string& name);
/// "2:1,3:2,7:3" style mapping.
std::map<long long, int> parse_label_map(const std::string& text);

/// One subject from a delimited text file; frames in file order.
Subject load_subject(const std::filesystem::path& path, const IngestSchema& schema);

/// One subject per path, in the given order.
GroupedDataset load_group(const std::vector<std::filesystem::path>& paths,
                          const IngestSchema& schema);

/// Writes features (and, if requested, the class id as last column), one frame
/// per whitespace-separated row.
void write_subject(const std::filesystem::path& path, const Subject& subject, bool with_labels);

/// CSV "subject,frame,label" with 1-based subject and frame indices.
void write_labels_csv(const std::filesystem::path& path, const std::vector<LabelVector>& labels);
std::vector<LabelVector> read_labels_csv(const std::filesystem::path& path);

/// Replaces labels of every subject; counts must match frame counts.
void attach_labels(GroupedDataset& data, const std::vector<LabelVector>& labels);

/**
 * Posterior-mean bases as CSV "basis,channel,bin,value". Common bases are
 * named common_k, individual ones individual_s<l>_j<j>. Feature m maps to
 * channel m / bins_per_channel and bin m % bins_per_channel (1-based in the
 * file; channel names replace numbers when given).
 */
void export_bases(const Posterior& post, const FeatureLayout& layout,
                  const std::filesystem::path& out);

} // namespace bgnmf
