#include "trustlapse/embedding_io.hpp"

#include <bit>
#include <cstring>
#include <fstream>
#include <istream>
#include <iterator>
#include <ostream>
#include <sstream>

#include "trustlapse/error.hpp"
#include "trustlapse/json_codec.hpp"

namespace trustlapse {

namespace {

template <typename T>
void put_le(std::ostream& out, T value) {
  using U = std::make_unsigned_t<T>;
  auto u = static_cast<U>(value);
  char bytes[sizeof(T)];
  for (std::size_t i = 0; i < sizeof(T); ++i) {
    bytes[i] = static_cast<char>(u & 0xFFU);
    u = static_cast<U>(u >> 8);
  }
  out.write(bytes, sizeof(T));
}

class Reader {
 public:
  explicit Reader(std::istream& in) : in_(in) {}

  template <typename T>
  T get_le(const char* what) {
    unsigned char bytes[sizeof(T)];
    read(reinterpret_cast<char*>(bytes), sizeof(T), what);
    std::make_unsigned_t<T> u = 0;
    for (std::size_t i = sizeof(T); i-- > 0;) u = static_cast<decltype(u)>((u << 8) | bytes[i]);
    return static_cast<T>(u);
  }

  std::string get_string(const char* what) {
    const auto len = get_le<std::uint32_t>(what);
    std::string s(len, '\0');
    read(s.data(), len, what);
    return s;
  }

  void read(char* dst, std::size_t n, const char* what) {
    in_.read(dst, static_cast<std::streamsize>(n));
    if (static_cast<std::size_t>(in_.gcount()) != n) {
      fail(ErrorCode::TruncatedRecord, std::string("truncated embedding file while reading ") + what);
    }
  }

 private:
  std::istream& in_;
};

std::vector<EmbeddingRecord> read_binary(std::istream& in) {
  Reader r(in);
  char magic[8];
  r.read(magic, sizeof magic, "magic");
  if (std::memcmp(magic, kEmbeddingMagic, sizeof magic) != 0) {
    fail(ErrorCode::BadMagic, "not a TLAPSE01 embedding file");
  }
  EmbeddingFileHeader h;
  h.dim = r.get_le<std::uint32_t>("header");
  h.count = r.get_le<std::uint64_t>("header");
  h.flags = r.get_le<std::uint32_t>("header");
  if (h.dim == 0) fail(ErrorCode::DimensionMismatch, "embedding dimension must be >= 1");

  std::vector<EmbeddingRecord> out;
  out.reserve(static_cast<std::size_t>(std::min<std::uint64_t>(h.count, 1U << 20)));
  for (std::uint64_t i = 0; i < h.count; ++i) {
    EmbeddingRecord rec;
    rec.id = r.get_string("id");
    rec.seq = r.get_le<std::uint64_t>("seq");
    if (h.flags & kFlagLabels) {
      const auto label = r.get_le<std::int32_t>("label");
      if (label >= 0) rec.label = label;
    }
    if (h.flags & kFlagTags) {
      auto tag = r.get_string("tag");
      if (!tag.empty()) rec.domain_tag = std::move(tag);
    }
    rec.vec.resize(h.dim);
    for (auto& x : rec.vec) x = std::bit_cast<float>(r.get_le<std::uint32_t>("vector"));
    out.push_back(std::move(rec));
  }
  return out;
}

std::vector<EmbeddingRecord> read_jsonl(std::istream& in) {
  std::vector<EmbeddingRecord> out;
  std::string line;
  std::size_t line_no = 0;
  while (std::getline(in, line)) {
    ++line_no;
    if (line.find_first_not_of(" \t\r") == std::string::npos) continue;
    auto rec = parse_record_json(line, line_no);
    if (!out.empty() && rec.vec.size() != out.front().vec.size()) {
      fail(ErrorCode::DimensionMismatch, "line " + std::to_string(line_no) + ": dimension " +
                                             std::to_string(rec.vec.size()) + " differs from " +
                                             std::to_string(out.front().vec.size()));
    }
    out.push_back(std::move(rec));
  }
  return out;
}

}  // namespace

EmbeddingRecord parse_record_json(const std::string& line, std::size_t line_no) {
  Json j;
  try {
    j = Json::parse(line);
  } catch (const Json::parse_error& e) {
    fail(ErrorCode::MalformedJson, "line " + std::to_string(line_no) + ": " + e.what());
  }
  try {
    return record_from_json(j);
  } catch (const Error& e) {
    fail(e.code(), "line " + std::to_string(line_no) + ": " + e.what());
  }
}

std::string record_to_json_line(const EmbeddingRecord& record) { return to_json(record).dump(); }

std::vector<EmbeddingRecord> read_embeddings(std::istream& in) {
  int c = in.peek();
  while (c == ' ' || c == '\n' || c == '\r' || c == '\t') {
    in.get();
    c = in.peek();
  }
  if (c == std::char_traits<char>::eof()) return {};
  if (c == '{') return read_jsonl(in);
  if (c == kEmbeddingMagic[0]) return read_binary(in);
  fail(ErrorCode::BadMagic, "unrecognised embedding file (expected TLAPSE01 magic or JSONL)");
}

std::vector<EmbeddingRecord> read_embeddings(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) fail(ErrorCode::IoError, "cannot open " + path.string());
  return read_embeddings(in);
}

void write_embeddings(std::ostream& out, const std::vector<EmbeddingRecord>& records,
                      EmbeddingFormat format) {
  validate_records(records);
  if (format == EmbeddingFormat::Jsonl) {
    for (const auto& r : records) out << record_to_json_line(r) << '\n';
    return;
  }
  std::uint32_t flags = 0;
  for (const auto& r : records) {
    if (r.label) flags |= kFlagLabels;
    if (r.domain_tag) flags |= kFlagTags;
  }
  const auto dim = static_cast<std::uint32_t>(records.empty() ? 1 : records.front().vec.size());
  out.write(kEmbeddingMagic, sizeof kEmbeddingMagic);
  put_le<std::uint32_t>(out, dim);
  put_le<std::uint64_t>(out, records.size());
  put_le<std::uint32_t>(out, flags);
  for (const auto& r : records) {
    put_le<std::uint32_t>(out, static_cast<std::uint32_t>(r.id.size()));
    out.write(r.id.data(), static_cast<std::streamsize>(r.id.size()));
    put_le<std::uint64_t>(out, r.seq);
    if (flags & kFlagLabels) put_le<std::int32_t>(out, r.label.value_or(-1));
    if (flags & kFlagTags) {
      const std::string tag = r.domain_tag.value_or("");
      put_le<std::uint32_t>(out, static_cast<std::uint32_t>(tag.size()));
      out.write(tag.data(), static_cast<std::streamsize>(tag.size()));
    }
    for (double x : r.vec) put_le<std::uint32_t>(out, std::bit_cast<std::uint32_t>(static_cast<float>(x)));
  }
}

void write_embeddings(const std::filesystem::path& path,
                      const std::vector<EmbeddingRecord>& records, EmbeddingFormat format) {
  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  if (!out) fail(ErrorCode::IoError, "cannot write " + path.string());
  write_embeddings(out, records, format);
  if (!out) fail(ErrorCode::IoError, "write failed for " + path.string());
}

}  // namespace trustlapse
