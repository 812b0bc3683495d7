#include "trustlapse/service_json.hpp"

namespace trustlapse {

Json to_json(const HistoryEntry& e, const std::string& stream_id) {
  auto j = to_json(e.sequential);
  j["stream_id"] = stream_id;
  j["index"] = e.index;
  j["id"] = e.record_id;
  j["model_version"] = e.model_version;
  j["latent"] = to_json(e.latent);
  return j;
}

Json to_json(const SessionInfo& info) {
  Json j{{"stream_id", info.stream_id},
         {"model_version", info.model_version},
         {"history", info.history},
         {"custom_reference", info.custom_reference}};
  j["seq_cursor"] = info.seq_cursor ? Json(*info.seq_cursor) : Json(nullptr);
  return j;
}

Json to_json(const ModelInfo& info) {
  Json j{{"version", info.version},
         {"members", info.members},
         {"dim", info.dim},
         {"classes", info.classes}};
  j["parent"] = info.parent ? Json(*info.parent) : Json(nullptr);
  return j;
}

Json to_json(const SummaryStats& s) {
  return Json{{"count", s.count},   {"mean", s.mean},     {"stddev", s.stddev},
              {"min", s.min},       {"q05", s.q05},       {"q25", s.q25},
              {"median", s.median}, {"q75", s.q75},       {"q95", s.q95},
              {"max", s.max}};
}

Json to_json(const DistributionSummary& d) {
  return Json{{"offset", d.offset},
              {"count", d.count},
              {"s_lss", to_json(d.s_lss)},
              {"z", to_json(d.z)},
              {"s_lss_histogram", d.s_lss_histogram},
              {"flags", d.flags},
              {"warmup", d.warmup}};
}

}  // namespace trustlapse
