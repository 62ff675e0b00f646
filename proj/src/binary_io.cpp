#include "sppiv/binary_io.hpp"

#include <cmath>
#include <iterator>
#include <string>

namespace sppiv {

std::string_view to_string(ErrorCode code) {
  switch (code) {
    case ErrorCode::InvalidArgument: return "invalid_argument";
    case ErrorCode::DimensionMismatch: return "dimension_mismatch";
    case ErrorCode::GridMismatch: return "grid_mismatch";
    case ErrorCode::RankOutOfRange: return "rank_out_of_range";
    case ErrorCode::DegenerateData: return "degenerate_data";
    case ErrorCode::BadMagic: return "bad_magic";
    case ErrorCode::BadVersion: return "bad_version";
    case ErrorCode::CorruptContainer: return "corrupt_container";
    case ErrorCode::NonFinite: return "non_finite";
    case ErrorCode::Io: return "io";
    case ErrorCode::InvalidVector: return "invalid_vector";
    case ErrorCode::Config: return "config";
    case ErrorCode::InsufficientData: return "insufficient_data";
    case ErrorCode::SourceExhausted: return "source_exhausted";
  }
  return "unknown";
}

namespace io {

void Writer::magic(std::string_view m) { raw(m.data(), m.size()); }

void Writer::raw(const void* p, std::size_t n) {
  os_.write(static_cast<const char*>(p), static_cast<std::streamsize>(n));
  if (!os_) fail(ErrorCode::Io, "write failed");
}

Reader::Reader(std::istream& is)
    : buf_(std::istreambuf_iterator<char>(is), std::istreambuf_iterator<char>()) {}

void Reader::need(std::size_t n) const {
  if (remaining() < n) fail(ErrorCode::CorruptContainer, "corrupt container: unexpected end of data");
}

void Reader::expect_magic(std::string_view m) {
  need(m.size());
  if (std::string_view(buf_.data() + pos_, m.size()) != m) {
    fail(ErrorCode::BadMagic, "bad magic: expected " + std::string(m));
  }
  pos_ += m.size();
}

void Reader::expect_version(std::uint32_t version) {
  const auto v = u32();
  if (v != version) {
    fail(ErrorCode::BadVersion,
         "unsupported version " + std::to_string(v) + " (expected " + std::to_string(version) + ")");
  }
}

std::uint32_t Reader::u32() {
  need(4);
  std::uint32_t v;
  std::memcpy(&v, buf_.data() + pos_, 4);
  pos_ += 4;
  return v;
}

double Reader::f64() {
  need(8);
  double v;
  std::memcpy(&v, buf_.data() + pos_, 8);
  pos_ += 8;
  return v;
}

void Reader::f64s(std::span<double> out) {
  need(out.size_bytes());
  std::memcpy(out.data(), buf_.data() + pos_, out.size_bytes());
  pos_ += out.size_bytes();
}

std::vector<std::uint8_t> Reader::bytes(std::size_t n) {
  need(n);
  std::vector<std::uint8_t> out(n);
  std::memcpy(out.data(), buf_.data() + pos_, n);
  pos_ += n;
  return out;
}

std::ofstream open_out(const std::filesystem::path& path, bool binary) {
  std::ofstream os(path, binary ? std::ios::out | std::ios::binary | std::ios::trunc : std::ios::out | std::ios::trunc);
  if (!os) fail(ErrorCode::Io, "cannot open " + path.string() + " for writing");
  return os;
}

std::ifstream open_in(const std::filesystem::path& path, bool binary) {
  std::ifstream is(path, binary ? std::ios::in | std::ios::binary : std::ios::in);
  if (!is) fail(ErrorCode::Io, "cannot open " + path.string());
  return is;
}

void check_finite(std::span<const double> v, std::string_view what) {
  for (double x : v) {
    if (!std::isfinite(x)) fail(ErrorCode::NonFinite, "non-finite value in " + std::string(what));
  }
}

}  // namespace io
}  // namespace sppiv
