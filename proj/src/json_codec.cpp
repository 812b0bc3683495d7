#include "trustlapse/json_codec.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>

#include "trustlapse/error.hpp"
#include "trustlapse/kernels.hpp"

namespace trustlapse {

namespace {

constexpr const char* kModelFormat = "trustlapse-model";
constexpr int kModelFormatVersion = 1;

template <typename T>
T field(const Json& j, const char* key, ErrorCode code) {
  const auto it = j.find(key);
  if (it == j.end()) fail(code, std::string("missing field '") + key + "'");
  try {
    return it->get<T>();
  } catch (const Json::exception& e) {
    fail(code, std::string("field '") + key + "': " + e.what());
  }
}

}  // namespace

Json to_json(const EmbeddingRecord& record) {
  Json j;
  j["id"] = record.id;
  j["seq"] = record.seq;
  if (record.label) j["label"] = *record.label;
  if (record.domain_tag) j["domain"] = *record.domain_tag;
  j["vec"] = record.vec;
  return j;
}

EmbeddingRecord record_from_json(const Json& j) {
  if (!j.is_object()) fail(ErrorCode::MalformedJson, "record must be a JSON object");
  EmbeddingRecord r;
  r.id = field<std::string>(j, "id", ErrorCode::MalformedJson);
  if (j.contains("seq")) r.seq = field<std::uint64_t>(j, "seq", ErrorCode::MalformedJson);
  if (j.contains("label") && !j["label"].is_null()) {
    r.label = field<ClassId>(j, "label", ErrorCode::MalformedJson);
    if (*r.label < 0) fail(ErrorCode::MalformedJson, "label must be non-negative");
  }
  if (j.contains("domain") && !j["domain"].is_null()) {
    r.domain_tag = field<std::string>(j, "domain", ErrorCode::MalformedJson);
  }
  const auto vec = field<std::vector<double>>(j, "vec", ErrorCode::MalformedJson);
  r.vec.reserve(vec.size());
  for (double x : vec) r.vec.push_back(static_cast<float>(x));
  if (r.vec.empty()) fail(ErrorCode::DimensionMismatch, "vec must have at least one entry");
  return r;
}

Json to_json(const LatentScore& s) {
  return Json{{"s_dist_raw", s.s_dist_raw},   {"s_sim_raw", s.s_sim_raw},
              {"d_norm", s.d_norm},           {"sim_mistrust", s.sim_mistrust},
              {"s_lss", s.s_lss},             {"trust", s.trust},
              {"nearest_class", s.nearest_class}, {"nearest_member", s.nearest_member},
              {"zero_vector", s.zero_vector}};
}

Json to_json(const SequentialScore& s) {
  return Json{{"seq", s.seq},         {"s_lss", s.s_lss},     {"u_stat", s.u_stat},
              {"z", s.z},             {"p_value", s.p_value}, {"s_mis", s.s_mis},
              {"significant", s.significant}, {"action", std::string(to_string(s.action))}};
}

Json to_json(const MetricReport& r) {
  return Json{{"auroc", r.auroc}, {"aupr", r.aupr}, {"fpr80", r.fpr80}, {"n_pos", r.n_pos},
              {"n_neg", r.n_neg}};
}

Json to_json(const Explanation& ex, std::size_t k) {
  auto list = [](const std::vector<Neighbor>& ns) {
    Json arr = Json::array();
    for (const auto& n : ns) {
      arr.push_back(Json{{"id", n.id}, {"label", n.label}, {"similarity", n.similarity},
                         {"member_trust", n.member_trust}});
    }
    return arr;
  };
  return Json{{"k", k}, {"score", to_json(ex.score)}, {"nearest", list(ex.nearest)},
              {"farthest", list(ex.farthest)}};
}

Json to_json(const MonitorConfig& c) {
  return Json{{"w_a", c.w_a},         {"w_b", c.w_b},         {"alpha", c.alpha},
              {"coreset_frac", c.coreset_frac}, {"epsilon", c.epsilon}, {"seed", c.seed}};
}

MonitorConfig config_from_json(const Json& j, MonitorConfig c) {
  try {
    if (j.contains("w_a")) c.w_a = j.at("w_a").get<std::size_t>();
    if (j.contains("w_b")) c.w_b = j.at("w_b").get<std::size_t>();
    if (j.contains("alpha")) c.alpha = j.at("alpha").get<double>();
    if (j.contains("coreset_frac")) c.coreset_frac = j.at("coreset_frac").get<double>();
    if (j.contains("epsilon")) c.epsilon = j.at("epsilon").get<double>();
    if (j.contains("seed")) c.seed = j.at("seed").get<std::uint64_t>();
  } catch (const Json::exception& e) {
    fail(ErrorCode::InvalidConfig, std::string("config: ") + e.what());
  }
  return c;
}

Json model_to_json(const CoresetModel& m) {
  Json j;
  j["format"] = kModelFormat;
  j["format_version"] = kModelFormatVersion;
  j["version"] = m.version;
  j["dim"] = m.dim;
  j["config"] = to_json(m.config);
  Json gs = Json::array();
  for (const auto& g : m.gaussians) {
    std::vector<double> lower;
    lower.reserve(m.dim * (m.dim + 1) / 2);
    for (std::size_t i = 0; i < m.dim; ++i) {
      for (std::size_t k = 0; k <= i; ++k) lower.push_back(g.cov_factor(i, k));
    }
    gs.push_back(Json{{"class_id", g.class_id}, {"count", g.count}, {"ridge", g.ridge},
                      {"mean", g.mean}, {"cov_factor_lower", lower}});
  }
  j["gaussians"] = gs;
  Json members = Json::array();
  for (std::size_t i = 0; i < m.members.size(); ++i) {
    const auto& mem = m.members[i];
    const auto& s = m.member_scores[i];
    members.push_back(Json{{"id", mem.id},
                           {"label", mem.label},
                           {"vec", mem.vec},
                           {"loo", {s.s_dist_raw, s.s_sim_raw, s.d_norm, s.sim_mistrust, s.s_lss}}});
  }
  j["members"] = members;
  j["norm_stats"] = Json{{"dist_lo", m.norm_stats.dist_lo}, {"dist_hi", m.norm_stats.dist_hi},
                         {"sim_lo", m.norm_stats.sim_lo},   {"sim_hi", m.norm_stats.sim_hi}};
  j["reference_members"] = m.reference_members;
  j["reference_scores"] = m.reference_scores;
  return j;
}

CoresetModel model_from_json(const Json& j) {
  constexpr auto E = ErrorCode::MalformedModel;
  if (!j.is_object() || j.value("format", "") != kModelFormat) {
    fail(E, "not a trustlapse model document");
  }
  if (field<int>(j, "format_version", E) != kModelFormatVersion) {
    fail(E, "unsupported model format_version");
  }
  CoresetModel m;
  m.version = field<std::uint64_t>(j, "version", E);
  m.dim = field<std::size_t>(j, "dim", E);
  m.config = config_from_json(field<Json>(j, "config", E));
  if (m.dim == 0) fail(E, "dim must be >= 1");
  for (const auto& g : field<Json>(j, "gaussians", E)) {
    ClassGaussian cg;
    cg.class_id = field<ClassId>(g, "class_id", E);
    cg.count = field<std::size_t>(g, "count", E);
    cg.ridge = field<double>(g, "ridge", E);
    cg.mean = field<std::vector<double>>(g, "mean", E);
    const auto lower = field<std::vector<double>>(g, "cov_factor_lower", E);
    if (cg.mean.size() != m.dim || lower.size() != m.dim * (m.dim + 1) / 2) {
      fail(E, "gaussian parameter sizes do not match dim");
    }
    cg.cov_factor = SquareMatrix(m.dim);
    std::size_t at = 0;
    for (std::size_t i = 0; i < m.dim; ++i) {
      for (std::size_t k = 0; k <= i; ++k) cg.cov_factor(i, k) = lower[at++];
      if (!(cg.cov_factor(i, i) > 0.0)) fail(E, "cov_factor diagonal must be positive");
    }
    m.gaussians.push_back(std::move(cg));
  }
  for (const auto& mem : field<Json>(j, "members", E)) {
    CoresetMember cm;
    cm.id = field<std::string>(mem, "id", E);
    cm.label = field<ClassId>(mem, "label", E);
    cm.vec = field<std::vector<double>>(mem, "vec", E);
    if (cm.vec.size() != m.dim) fail(E, "member '" + cm.id + "' has wrong dimension");
    const auto loo = field<std::vector<double>>(mem, "loo", E);
    if (loo.size() != 5) fail(E, "member '" + cm.id + "' loo scores malformed");
    m.member_scores.push_back({loo[0], loo[1], loo[2], loo[3], loo[4]});
    m.members.push_back(std::move(cm));
  }
  if (m.members.empty() || m.gaussians.empty()) fail(E, "model has no members");
  std::size_t counted = 0;
  for (const auto& g : m.gaussians) {
    const auto n = std::count_if(m.members.begin(), m.members.end(),
                                 [&](const CoresetMember& cm) { return cm.label == g.class_id; });
    if (static_cast<std::size_t>(n) != g.count) fail(E, "class member counts do not match");
    counted += g.count;
  }
  if (counted != m.members.size()) fail(E, "members reference classes without a gaussian");
  const auto& ns = field<Json>(j, "norm_stats", E);
  m.norm_stats = {field<double>(ns, "dist_lo", E), field<double>(ns, "dist_hi", E),
                  field<double>(ns, "sim_lo", E), field<double>(ns, "sim_hi", E)};
  m.reference_members = field<std::vector<std::size_t>>(j, "reference_members", E);
  m.reference_scores = field<std::vector<double>>(j, "reference_scores", E);
  if (m.reference_members.size() != m.config.w_a || m.reference_scores.size() != m.config.w_a) {
    fail(E, "reference window length does not match w_a");
  }
  for (std::size_t idx : m.reference_members) {
    if (idx >= m.members.size()) fail(E, "reference member index out of range");
  }

  m.sim_rows.resize(m.members.size() * m.dim);
  m.sim_norms.resize(m.members.size());
  for (std::size_t i = 0; i < m.members.size(); ++i) {
    const auto& v = m.members[i].vec;
    std::copy(v.begin(), v.end(), m.sim_rows.begin() + static_cast<std::ptrdiff_t>(i * m.dim));
    m.sim_norms[i] = std::sqrt(kernels::dot(v, v));
  }
  return m;
}

void save_model(const std::filesystem::path& path, const CoresetModel& model) {
  std::ofstream out(path, std::ios::trunc);
  if (!out) fail(ErrorCode::IoError, "cannot write " + path.string());
  out << model_to_json(model).dump() << '\n';
  if (!out) fail(ErrorCode::IoError, "write failed for " + path.string());
}

CoresetModel load_model(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) fail(ErrorCode::IoError, "cannot open " + path.string());
  Json j;
  try {
    j = Json::parse(in);
  } catch (const Json::parse_error& e) {
    fail(ErrorCode::MalformedModel, path.string() + ": " + e.what());
  }
  return model_from_json(j);
}

}  // namespace trustlapse
