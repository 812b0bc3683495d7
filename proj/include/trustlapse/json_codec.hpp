#pragma once

#include "json.hpp"

#include "trustlapse/coreset.hpp"
#include "trustlapse/drift_sim.hpp"
#include "trustlapse/latent_score.hpp"
#include "trustlapse/metrics.hpp"
#include "trustlapse/record.hpp"
#include "trustlapse/sequential.hpp"

namespace trustlapse {

using Json = nlohmann::json;

Json to_json(const EmbeddingRecord& record);
// Throws MalformedJson on schema violations.
EmbeddingRecord record_from_json(const Json& j);

Json to_json(const LatentScore& score);
Json to_json(const SequentialScore& score);
Json to_json(const MetricReport& report);
Json to_json(const Explanation& explanation, std::size_t k);
Json to_json(const MonitorConfig& cfg);
MonitorConfig config_from_json(const Json& j, MonitorConfig base = {});

// Self-describing model container.
Json model_to_json(const CoresetModel& model);
CoresetModel model_from_json(const Json& j);

void save_model(const std::filesystem::path& path, const CoresetModel& model);
CoresetModel load_model(const std::filesystem::path& path);

}  // namespace trustlapse
