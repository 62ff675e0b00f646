#pragma once

#include <bit>
#include <cstdint>
#include <cstring>
#include <filesystem>
#include <fstream>
#include <istream>
#include <ostream>
#include <span>
#include <string_view>
#include <vector>

#include "sppiv/error.hpp"

namespace sppiv::io {

static_assert(std::endian::native == std::endian::little,
              "container formats are little-endian; big-endian hosts need byte swapping");

class Writer {
 public:
  explicit Writer(std::ostream& os) : os_(os) {}

  void magic(std::string_view m);
  void u32(std::uint32_t v) { raw(&v, sizeof v); }
  void f64(double v) { raw(&v, sizeof v); }
  void f64s(std::span<const double> v) { raw(v.data(), v.size_bytes()); }
  void bytes(std::span<const std::uint8_t> v) { raw(v.data(), v.size()); }

 private:
  void raw(const void* p, std::size_t n);
  std::ostream& os_;
};

/// Reads from an in-memory copy of the whole container so that truncation and
/// trailing garbage can be told apart from dimension errors.
class Reader {
 public:
  explicit Reader(std::istream& is);

  void expect_magic(std::string_view m);
  void expect_version(std::uint32_t version);
  std::uint32_t u32();
  double f64();
  void f64s(std::span<double> out);
  std::vector<std::uint8_t> bytes(std::size_t n);

  std::size_t remaining() const { return buf_.size() - pos_; }
  void need(std::size_t n) const;

 private:
  std::vector<char> buf_;
  std::size_t pos_ = 0;
};

std::ofstream open_out(const std::filesystem::path& path, bool binary = true);
std::ifstream open_in(const std::filesystem::path& path, bool binary = true);

void check_finite(std::span<const double> v, std::string_view what);

}  // namespace sppiv::io
