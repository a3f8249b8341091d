#pragma once

#include "bgnmf/classify.hpp"
#include "bgnmf/inference.hpp"

#include <nlohmann/json.hpp>

#include <filesystem>
#include <string>
#include <string_view>
#include <vector>

namespace bgnmf {

/// Shortest decimal form that parses back to the same double.
std::string format_double(double v);
/// Locale-independent parse of the whole token; throws DataError.
double parse_double(std::string_view token);
long long parse_integer(std::string_view token);

/// Splits one CSV line on commas (no quoting).
std::vector<std::string_view> split_csv(std::string_view line);

/**
 * Flat posterior table "factor,subject,row,col,gamma,rho,tau" with factor in
 * {A_C, A_I, S_I}; indices are 1-based and subject is 0 for A_C.
 */
void write_posterior(const std::filesystem::path& path, const Posterior& post);
Posterior read_posterior(const std::filesystem::path& path);

/// "iter,elbo,wall_ms".
void write_trace(const std::filesystem::path& path, const std::vector<TracePoint>& trace);
std::vector<TracePoint> read_trace(const std::filesystem::path& path);

/// "subject,frame,label,d_1..d_K".
void write_predictions(const std::filesystem::path& path, const Prediction& pred);

nlohmann::json to_json(const EvalReport& report);
void write_json(const std::filesystem::path& path, const nlohmann::json& doc);

/// "fraction,subject,accuracy,pooled"; one row per subject plus a pooled row
/// per fraction.
void write_learning_curve(const std::filesystem::path& path,
                          const std::vector<LearningCurvePoint>& curve);

} // namespace bgnmf
