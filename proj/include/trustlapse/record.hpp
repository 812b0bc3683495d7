#pragma once

#include <cstdint>
#include <optional>
#include <string>
#include <vector>

namespace trustlapse {

using ClassId = std::int32_t;

/// One model input's latent vector. `seq` orders records within a stream;
/// `domain_tag` is ground truth used only by evaluation tooling.
struct EmbeddingRecord {
  std::string id;
  std::uint64_t seq = 0;
  std::vector<double> vec;
  std::optional<ClassId> label;
  std::optional<std::string> domain_tag;

  friend bool operator==(const EmbeddingRecord&, const EmbeddingRecord&) = default;
};

// Throws DimensionMismatch if dims differ, NonFiniteInput on NaN/inf.
void validate_records(const std::vector<EmbeddingRecord>& records);
void validate_vector(const std::vector<double>& vec, std::size_t dim);

}  // namespace trustlapse
