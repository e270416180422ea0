#include "sibf/wav.hpp"

#include <algorithm>
#include <bit>
#include <cmath>
#include <cstdint>
#include <cstring>
#include <fstream>
#include <stdexcept>
#include <string>

namespace sibf {
namespace {

static_assert(std::endian::native == std::endian::little, "WAV I/O assumes little-endian host");

constexpr std::uint16_t kFormatPcm = 1;
constexpr std::uint16_t kFormatFloat = 3;
constexpr std::uint16_t kFormatExtensible = 0xFFFE;

template <typename T>
T read_le(const std::vector<char>& buf, std::size_t pos) {
  if (pos + sizeof(T) > buf.size()) throw std::runtime_error("wav: truncated header");
  T v;
  std::memcpy(&v, buf.data() + pos, sizeof(T));
  return v;
}

template <typename T>
void put_le(std::string& out, T v) {
  char bytes[sizeof(T)];
  std::memcpy(bytes, &v, sizeof(T));
  out.append(bytes, sizeof(T));
}

}  // namespace

std::vector<TimeSignal> read_wav(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw std::runtime_error("wav: cannot open " + path.string());
  std::vector<char> buf((std::istreambuf_iterator<char>(in)), std::istreambuf_iterator<char>());
  if (buf.size() < 12 || std::memcmp(buf.data(), "RIFF", 4) != 0 ||
      std::memcmp(buf.data() + 8, "WAVE", 4) != 0)
    throw std::runtime_error("wav: not a RIFF/WAVE file: " + path.string());

  std::uint16_t format = 0, channels = 0, bits = 0;
  std::uint32_t rate = 0;
  std::size_t data_pos = 0, data_len = 0;
  bool have_fmt = false;
  std::size_t pos = 12;
  while (pos + 8 <= buf.size()) {
    const std::string id(buf.data() + pos, 4);
    const auto len = read_le<std::uint32_t>(buf, pos + 4);
    const std::size_t body = pos + 8;
    if (id == "fmt ") {
      format = read_le<std::uint16_t>(buf, body);
      channels = read_le<std::uint16_t>(buf, body + 2);
      rate = read_le<std::uint32_t>(buf, body + 4);
      bits = read_le<std::uint16_t>(buf, body + 14);
      if (format == kFormatExtensible) {
        if (len < 40) throw std::runtime_error("wav: short extensible fmt chunk");
        format = read_le<std::uint16_t>(buf, body + 24);
      }
      have_fmt = true;
    } else if (id == "data") {
      data_pos = body;
      data_len = std::min<std::size_t>(len, buf.size() - body);
      break;
    }
    pos = body + len + (len & 1u);
  }
  if (!have_fmt || data_pos == 0) throw std::runtime_error("wav: missing fmt or data chunk");
  if (channels == 0 || rate == 0) throw std::runtime_error("wav: invalid channel count or rate");
  const bool pcm16 = format == kFormatPcm && bits == 16;
  const bool f32 = format == kFormatFloat && bits == 32;
  if (!pcm16 && !f32) throw std::runtime_error("wav: only PCM16 and float32 are supported");

  const std::size_t bytes_per = bits / 8;
  const std::size_t frames = data_len / (bytes_per * channels);
  std::vector<TimeSignal> out(channels);
  for (auto& ch : out) {
    ch.sample_rate = static_cast<int>(rate);
    ch.samples.resize(frames);
  }
  for (std::size_t i = 0; i < frames; ++i) {
    for (std::size_t k = 0; k < channels; ++k) {
      const std::size_t at = data_pos + (i * channels + k) * bytes_per;
      double v;
      if (pcm16) {
        v = read_le<std::int16_t>(buf, at) / 32768.0;
      } else {
        v = read_le<float>(buf, at);
      }
      out[k].samples[i] = v;
    }
  }
  return out;
}

void write_wav(const std::filesystem::path& path, const std::vector<TimeSignal>& channels,
               WavEncoding encoding) {
  if (channels.empty()) throw std::invalid_argument("write_wav: no channels");
  const std::size_t frames = channels.front().size();
  const int rate = channels.front().sample_rate;
  for (const auto& ch : channels) {
    if (ch.size() != frames || ch.sample_rate != rate)
      throw std::invalid_argument("write_wav: channels differ in length or rate");
  }
  const std::uint16_t n_ch = static_cast<std::uint16_t>(channels.size());
  const std::uint16_t bits = encoding == WavEncoding::Pcm16 ? 16 : 32;
  const std::uint16_t block = n_ch * bits / 8;
  const std::uint32_t data_len = static_cast<std::uint32_t>(frames * block);

  std::string out;
  out.reserve(44 + data_len);
  out += "RIFF";
  put_le<std::uint32_t>(out, 36 + data_len);
  out += "WAVEfmt ";
  put_le<std::uint32_t>(out, 16);
  put_le<std::uint16_t>(out, encoding == WavEncoding::Pcm16 ? kFormatPcm : kFormatFloat);
  put_le<std::uint16_t>(out, n_ch);
  put_le<std::uint32_t>(out, static_cast<std::uint32_t>(rate));
  put_le<std::uint32_t>(out, static_cast<std::uint32_t>(rate) * block);
  put_le<std::uint16_t>(out, block);
  put_le<std::uint16_t>(out, bits);
  out += "data";
  put_le<std::uint32_t>(out, data_len);
  for (std::size_t i = 0; i < frames; ++i) {
    for (const auto& ch : channels) {
      const double v = ch.samples[i];
      if (encoding == WavEncoding::Pcm16) {
        const double scaled = std::clamp(std::round(v * 32768.0), -32768.0, 32767.0);
        put_le<std::int16_t>(out, static_cast<std::int16_t>(scaled));
      } else {
        put_le<float>(out, static_cast<float>(v));
      }
    }
  }
  std::ofstream file(path, std::ios::binary | std::ios::trunc);
  if (!file) throw std::runtime_error("wav: cannot write " + path.string());
  file.write(out.data(), static_cast<std::streamsize>(out.size()));
}

std::vector<TimeSignal> read_observation(const std::vector<std::filesystem::path>& paths) {
  if (paths.empty()) throw std::invalid_argument("no observation files given");
  std::vector<TimeSignal> out;
  for (const auto& p : paths) {
    auto chans = read_wav(p);
    for (auto& c : chans) out.push_back(std::move(c));
  }
  for (const auto& ch : out) {
    if (ch.size() != out.front().size() || ch.sample_rate != out.front().sample_rate)
      throw std::invalid_argument("observation channels differ in length or sample rate");
  }
  return out;
}

}  // namespace sibf
