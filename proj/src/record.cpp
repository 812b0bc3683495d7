#include "trustlapse/record.hpp"

#include <cmath>

#include "trustlapse/config.hpp"
#include "trustlapse/error.hpp"

namespace trustlapse {

void validate_vector(const std::vector<double>& vec, std::size_t dim) {
  if (vec.size() != dim) {
    fail(ErrorCode::DimensionMismatch, "expected dimension " + std::to_string(dim) + ", got " +
                                           std::to_string(vec.size()));
  }
  for (double x : vec) {
    if (!std::isfinite(x)) fail(ErrorCode::NonFiniteInput, "embedding has a non-finite entry");
  }
}

void validate_records(const std::vector<EmbeddingRecord>& records) {
  if (records.empty()) return;
  const std::size_t dim = records.front().vec.size();
  for (const auto& r : records) validate_vector(r.vec, dim);
}

void validate(const MonitorConfig& cfg) {
  if (!(cfg.coreset_frac > 0.0 && cfg.coreset_frac <= 1.0)) {
    fail(ErrorCode::InvalidConfig, "coreset_frac must be in (0, 1]");
  }
  if (!(cfg.alpha > 0.0 && cfg.alpha < 1.0)) fail(ErrorCode::InvalidConfig, "alpha must be in (0, 1)");
  if (cfg.w_a < 2 || cfg.w_b < 2) fail(ErrorCode::InvalidConfig, "window sizes must be >= 2");
  if (!(cfg.epsilon > 0.0)) fail(ErrorCode::InvalidConfig, "epsilon must be > 0");
}

std::string_view to_string(ErrorCode code) noexcept {
  switch (code) {
    case ErrorCode::EmptyClass: return "EmptyClass";
    case ErrorCode::DimensionMismatch: return "DimensionMismatch";
    case ErrorCode::SingularCovariance: return "SingularCovariance";
    case ErrorCode::UnknownMemberId: return "UnknownMemberId";
    case ErrorCode::DuplicateMemberId: return "DuplicateMemberId";
    case ErrorCode::EmptyCoresetAfterMutation: return "EmptyCoresetAfterMutation";
    case ErrorCode::NonFiniteInput: return "NonFiniteInput";
    case ErrorCode::MissingLabel: return "MissingLabel";
    case ErrorCode::InvalidConfig: return "InvalidConfig";
    case ErrorCode::EmptyWindow: return "EmptyWindow";
    case ErrorCode::OutOfOrderSeq: return "OutOfOrderSeq";
    case ErrorCode::BadLength: return "BadLength";
    case ErrorCode::OneClassOnly: return "OneClassOnly";
    case ErrorCode::NoPositives: return "NoPositives";
    case ErrorCode::UnmappedGroup: return "UnmappedGroup";
    case ErrorCode::EmptyPool: return "EmptyPool";
    case ErrorCode::LengthMismatch: return "LengthMismatch";
    case ErrorCode::BadMagic: return "BadMagic";
    case ErrorCode::TruncatedRecord: return "TruncatedRecord";
    case ErrorCode::MalformedJson: return "MalformedJson";
    case ErrorCode::MalformedModel: return "MalformedModel";
    case ErrorCode::IoError: return "IoError";
    case ErrorCode::UnknownStream: return "UnknownStream";
    case ErrorCode::StreamExists: return "StreamExists";
    case ErrorCode::UnknownVersion: return "UnknownVersion";
    case ErrorCode::BadRequest: return "BadRequest";
  }
  return "Unknown";
}

}  // namespace trustlapse
