#pragma once

#include <string>

#include "sibf/types.hpp"

namespace sibf {

// Binary magnitude spectrogram: uint32 F, uint32 T (little-endian), then F*T
// little-endian float32 values in row-major (bin-major) order.
void write_magnitude(const std::string& path, const RealMatrix& magnitude);
RealMatrix read_magnitude(const std::string& path);

}  // namespace sibf
