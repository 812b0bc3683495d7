#pragma once

#include "trustlapse/json_codec.hpp"
#include "trustlapse/service.hpp"

namespace trustlapse {

Json to_json(const HistoryEntry& entry, const std::string& stream_id);
Json to_json(const SessionInfo& info);
Json to_json(const ModelInfo& info);
Json to_json(const SummaryStats& stats);
Json to_json(const DistributionSummary& summary);

}  // namespace trustlapse
