#pragma once

// JSON/CSV serialization of configs, metrics and run reports, and the
// on-disk layout of stage artifacts.

#include <filesystem>
#include <set>
#include <string>

#include <json.hpp>

#include "mas3/pipeline.hpp"

namespace mas3 {

using Json = nlohmann::json;

inline constexpr int kReportSchema = 1;

// Flat config: every RunConfig field under one key. Unknown keys raise
// InvalidInput unless listed in `extra_keys`.
RunConfig run_config_from_json(const Json& flat, const std::set<std::string>& extra_keys = {});
Json run_config_to_json(const RunConfig& cfg);
// Keys accepted by run_config_from_json.
const std::set<std::string>& run_config_keys();

Json to_json(const SegMetrics& m);
Json to_json(const BoundTerms& b);
Json to_json(const BoundSummary& b);
Json to_json(const AdaptReport& r);
Json to_json(const RunReport& r);

std::string metrics_json(const SegMetrics& m);

// iteration,ce_term,swd_term,acceptance
void write_loss_curve_csv(const std::filesystem::path& file, const AdaptReport& r);
// run_report.json + loss_curve.csv
void write_run_artifacts(const std::filesystem::path& dir, const RunConfig& cfg,
                         const RunReport& r);

// GMM directory plus source_embeddings.tnsr.
void save_internal_dist(const std::filesystem::path& dir, const InternalDistStage& stage);
InternalDistStage load_internal_dist(const std::filesystem::path& dir);

// Writes text atomically enough for reruns to replace it byte for byte.
void write_text(const std::filesystem::path& file, const std::string& text);

}  // namespace mas3
