#include "sibf/magnitude_file.hpp"

#include <array>
#include <bit>
#include <cmath>
#include <cstdint>
#include <cstring>
#include <fstream>
#include <stdexcept>
#include <vector>

namespace sibf {
namespace {

static_assert(std::endian::native == std::endian::little,
              "magnitude files are read and written in native little-endian order");

void put_u32(std::ofstream& os, std::uint32_t v) {
  os.write(reinterpret_cast<const char*>(&v), sizeof v);
}

std::uint32_t get_u32(std::ifstream& is) {
  std::uint32_t v = 0;
  is.read(reinterpret_cast<char*>(&v), sizeof v);
  return v;
}

}  // namespace

void write_magnitude(const std::string& path, const RealMatrix& magnitude) {
  if (!magnitude.allFinite() || (magnitude.array() < 0.0).any())
    throw std::invalid_argument("magnitude must be finite and nonnegative");
  std::ofstream os(path, std::ios::binary);
  if (!os) throw std::runtime_error("cannot open '" + path + "' for writing");
  put_u32(os, static_cast<std::uint32_t>(magnitude.rows()));
  put_u32(os, static_cast<std::uint32_t>(magnitude.cols()));
  std::vector<float> row(magnitude.cols());
  for (Eigen::Index f = 0; f < magnitude.rows(); ++f) {
    for (Eigen::Index t = 0; t < magnitude.cols(); ++t) row[t] = static_cast<float>(magnitude(f, t));
    os.write(reinterpret_cast<const char*>(row.data()),
             static_cast<std::streamsize>(row.size() * sizeof(float)));
  }
  if (!os) throw std::runtime_error("failed writing '" + path + "'");
}

RealMatrix read_magnitude(const std::string& path) {
  std::ifstream is(path, std::ios::binary);
  if (!is) throw std::runtime_error("cannot open '" + path + "'");
  const std::uint32_t bins = get_u32(is);
  const std::uint32_t frames = get_u32(is);
  if (!is || bins == 0 || frames == 0) throw std::runtime_error("'" + path + "': bad header");
  RealMatrix out(bins, frames);
  std::vector<float> row(frames);
  for (std::uint32_t f = 0; f < bins; ++f) {
    is.read(reinterpret_cast<char*>(row.data()),
            static_cast<std::streamsize>(row.size() * sizeof(float)));
    if (!is) throw std::runtime_error("'" + path + "': truncated data");
    for (std::uint32_t t = 0; t < frames; ++t) {
      if (!std::isfinite(row[t]) || row[t] < 0.0f)
        throw std::runtime_error("'" + path + "': negative or non-finite magnitude");
      out(f, t) = row[t];
    }
  }
  return out;
}

}  // namespace sibf
