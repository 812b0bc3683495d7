#pragma once

#include <cstdint>
#include <filesystem>
#include <iosfwd>
#include <string>
#include <vector>

#include "trustlapse/record.hpp"

namespace trustlapse {

// Binary layout (all little-endian):
//   header: "TLAPSE01" | u32 dim | u64 count | u32 flags
//   record: u32 id_len | id bytes | u64 seq
//           [flags bit0] i32 label (-1 = absent)
//           [flags bit1] u32 tag_len | tag bytes (0 = absent)
//           dim x f32
inline constexpr char kEmbeddingMagic[8] = {'T', 'L', 'A', 'P', 'S', 'E', '0', '1'};
inline constexpr std::uint32_t kFlagLabels = 1U << 0;
inline constexpr std::uint32_t kFlagTags = 1U << 1;

struct EmbeddingFileHeader {
  std::uint32_t dim = 0;
  std::uint64_t count = 0;
  std::uint32_t flags = 0;
};

enum class EmbeddingFormat { Jsonl, Binary };

// Format auto-detected from the first byte: magic vs '{'. Vectors are
// rounded to 32-bit floats on read for both formats.
std::vector<EmbeddingRecord> read_embeddings(std::istream& in);
std::vector<EmbeddingRecord> read_embeddings(const std::filesystem::path& path);

// One JSONL line for a record.
EmbeddingRecord parse_record_json(const std::string& line, std::size_t line_no = 1);
std::string record_to_json_line(const EmbeddingRecord& record);

void write_embeddings(std::ostream& out, const std::vector<EmbeddingRecord>& records,
                      EmbeddingFormat format);
void write_embeddings(const std::filesystem::path& path,
                      const std::vector<EmbeddingRecord>& records, EmbeddingFormat format);

}  // namespace trustlapse
