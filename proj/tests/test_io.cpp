#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <cstdint>
#include <cstring>
#include <filesystem>
#include <fstream>
#include <string>
#include <vector>

#include "sibf/magnitude_file.hpp"
#include "sibf/wav.hpp"
#include "support/generators.hpp"

using namespace sibf;
using sibf::testing::Gen;
namespace fs = std::filesystem;

namespace {

struct TempDir {
  fs::path path;
  TempDir() {
    path = fs::temp_directory_path() / ("sibf_io_" + std::to_string(std::random_device{}()));
    fs::create_directories(path);
  }
  ~TempDir() { fs::remove_all(path); }
};

std::vector<std::uint8_t> slurp(const fs::path& p) {
  std::ifstream in(p, std::ios::binary);
  return {std::istreambuf_iterator<char>(in), std::istreambuf_iterator<char>()};
}

void put_u16(std::vector<std::uint8_t>& b, std::uint16_t v) {
  b.push_back(v & 0xff);
  b.push_back(v >> 8);
}
void put_u32(std::vector<std::uint8_t>& b, std::uint32_t v) {
  for (int i = 0; i < 4; ++i) b.push_back((v >> (8 * i)) & 0xff);
}
void put_tag(std::vector<std::uint8_t>& b, const char* tag) { b.insert(b.end(), tag, tag + 4); }

TimeSignal bounded_signal(Gen& gen, std::size_t n, int rate = 16000) {
  TimeSignal s;
  s.sample_rate = rate;
  s.samples.resize(n);
  for (double& v : s.samples) v = gen.uniform(-0.9, 0.9);
  return s;
}

}  // namespace

TEST_CASE("float32 WAV round trip is exact at float precision") {
  TempDir dir;
  Gen gen(111);
  std::vector<TimeSignal> chans{bounded_signal(gen, 1000, 22050), bounded_signal(gen, 1000, 22050)};
  write_wav(dir.path / "a.wav", chans, WavEncoding::Float32);
  const auto back = read_wav(dir.path / "a.wav");
  REQUIRE(back.size() == 2u);
  for (int k = 0; k < 2; ++k) {
    CHECK(back[k].sample_rate == 22050);
    REQUIRE(back[k].size() == 1000u);
    for (std::size_t i = 0; i < 1000; ++i)
      CHECK(back[k].samples[i] == static_cast<double>(static_cast<float>(chans[k].samples[i])));
  }
  const auto bytes = slurp(dir.path / "a.wav");
  CHECK(std::memcmp(bytes.data(), "RIFF", 4) == 0);
  CHECK(std::memcmp(bytes.data() + 8, "WAVE", 4) == 0);
  CHECK(bytes.size() == 44u + 2u * 1000u * 4u);
}

TEST_CASE("PCM16 round trip quantizes to one LSB and clips") {
  TempDir dir;
  Gen gen(112);
  TimeSignal s = bounded_signal(gen, 500);
  s.samples[0] = 3.0;
  s.samples[1] = -3.0;
  write_wav(dir.path / "p.wav", {s}, WavEncoding::Pcm16);
  const auto back = read_wav(dir.path / "p.wav");
  REQUIRE(back.size() == 1u);
  CHECK(back[0].samples[0] == doctest::Approx(32767.0 / 32768.0));
  CHECK(back[0].samples[1] == -1.0);
  for (std::size_t i = 2; i < 500; ++i) CHECK(std::abs(back[0].samples[i] - s.samples[i]) <= 1.0 / 32768.0);
}

TEST_CASE("extensible-format float WAV with extra chunks is parsed") {
  TempDir dir;
  std::vector<std::uint8_t> b;
  const std::uint32_t frames = 3;
  const std::uint16_t channels = 2;
  put_tag(b, "RIFF");
  put_u32(b, 0);  // patched below
  put_tag(b, "WAVE");
  put_tag(b, "fmt ");
  put_u32(b, 40);
  put_u16(b, 0xFFFE);
  put_u16(b, channels);
  put_u32(b, 8000);
  put_u32(b, 8000 * channels * 4);
  put_u16(b, channels * 4);
  put_u16(b, 32);
  put_u16(b, 22);
  put_u16(b, 32);
  put_u32(b, 3);  // channel mask
  put_u16(b, 3);  // IEEE float sub-format GUID prefix
  const std::uint8_t guid_tail[14] = {0x00, 0x00, 0x00, 0x00, 0x10, 0x00, 0x80,
                                      0x00, 0x00, 0xAA, 0x00, 0x38, 0x9B, 0x71};
  b.insert(b.end(), guid_tail, guid_tail + 14);
  put_tag(b, "LIST");
  put_u32(b, 3);
  b.insert(b.end(), {'a', 'b', 'c', 0});  // odd size plus pad byte
  put_tag(b, "data");
  put_u32(b, frames * channels * 4);
  const float values[6] = {0.5f, -0.25f, 0.125f, 1.0f, -1.0f, 0.0f};
  for (float v : values) {
    std::uint32_t u;
    std::memcpy(&u, &v, 4);
    put_u32(b, u);
  }
  const std::uint32_t riff = static_cast<std::uint32_t>(b.size() - 8);
  std::memcpy(b.data() + 4, &riff, 4);
  {
    std::ofstream out(dir.path / "ext.wav", std::ios::binary);
    out.write(reinterpret_cast<const char*>(b.data()), static_cast<std::streamsize>(b.size()));
  }
  const auto back = read_wav(dir.path / "ext.wav");
  REQUIRE(back.size() == 2u);
  CHECK(back[0].sample_rate == 8000);
  CHECK(back[0].samples == std::vector<double>{0.5, 0.125, -1.0});
  CHECK(back[1].samples == std::vector<double>{-0.25, 1.0, 0.0});
}

TEST_CASE("malformed WAV files are rejected and truncated data is read to the last whole frame") {
  TempDir dir;
  {
    std::ofstream out(dir.path / "bad.wav", std::ios::binary);
    out << "RIFF\x04\x00\x00\x00WAVX";
  }
  CHECK_THROWS_AS(read_wav(dir.path / "bad.wav"), std::runtime_error);
  CHECK_THROWS_AS(read_wav(dir.path / "missing.wav"), std::runtime_error);

  Gen gen(113);
  write_wav(dir.path / "ok.wav", {bounded_signal(gen, 100)});
  auto bytes = slurp(dir.path / "ok.wav");
  bytes.resize(bytes.size() - 50);
  {
    std::ofstream out(dir.path / "trunc.wav", std::ios::binary);
    out.write(reinterpret_cast<const char*>(bytes.data()), static_cast<std::streamsize>(bytes.size()));
  }
  const auto partial = read_wav(dir.path / "trunc.wav");
  REQUIRE(partial.size() == 1u);
  const auto full = read_wav(dir.path / "ok.wav");
  CHECK(partial[0].size() == 100u - 13u);  // 50 bytes cut: 12 whole samples and a partial one
  for (std::size_t i = 0; i < partial[0].size(); ++i) CHECK(partial[0].samples[i] == full[0].samples[i]);
}

TEST_CASE("write_wav validates channel shapes") {
  TempDir dir;
  Gen gen(114);
  CHECK_THROWS(write_wav(dir.path / "x.wav", {bounded_signal(gen, 10), bounded_signal(gen, 11)}));
  CHECK_THROWS(write_wav(dir.path / "x.wav", {bounded_signal(gen, 10, 16000), bounded_signal(gen, 10, 8000)}));
  CHECK_THROWS(write_wav(dir.path / "x.wav", {}));
}

TEST_CASE("read_observation combines mono files or splits one multichannel file") {
  TempDir dir;
  Gen gen(115);
  const TimeSignal a = bounded_signal(gen, 200);
  const TimeSignal b = bounded_signal(gen, 200);
  write_wav(dir.path / "a.wav", {a});
  write_wav(dir.path / "b.wav", {b});
  write_wav(dir.path / "ab.wav", {a, b});
  const auto mono = read_observation({dir.path / "a.wav", dir.path / "b.wav"});
  const auto multi = read_observation({dir.path / "ab.wav"});
  REQUIRE(mono.size() == 2u);
  REQUIRE(multi.size() == 2u);
  CHECK(mono[0].samples == multi[0].samples);
  CHECK(mono[1].samples == multi[1].samples);

  write_wav(dir.path / "short.wav", {bounded_signal(gen, 150)});
  CHECK_THROWS(read_observation({dir.path / "a.wav", dir.path / "short.wav"}));
  CHECK_THROWS(read_observation({}));
}

TEST_CASE("magnitude file round trip") {
  TempDir dir;
  Gen gen(116);
  RealMatrix m(7, 13);
  for (Eigen::Index i = 0; i < m.size(); ++i) m.data()[i] = gen.log_uniform(1e-6, 1e3);
  const std::string p = (dir.path / "r.mag").string();
  write_magnitude(p, m);
  const RealMatrix back = read_magnitude(p);
  REQUIRE(back.rows() == 7);
  REQUIRE(back.cols() == 13);
  for (Eigen::Index f = 0; f < 7; ++f)
    for (Eigen::Index t = 0; t < 13; ++t)
      CHECK(back(f, t) == static_cast<double>(static_cast<float>(m(f, t))));

  // Layout: two uint32 dimensions then bin-major float32 values.
  const auto bytes = slurp(p);
  CHECK(bytes.size() == 8u + 7u * 13u * 4u);
  std::uint32_t rows;
  std::memcpy(&rows, bytes.data(), 4);
  CHECK(rows == 7u);
  float second;
  std::memcpy(&second, bytes.data() + 12, 4);
  CHECK(second == static_cast<float>(m(0, 1)));

  auto cut = bytes;
  cut.resize(cut.size() - 4);
  {
    std::ofstream out(dir.path / "cut.mag", std::ios::binary);
    out.write(reinterpret_cast<const char*>(cut.data()), static_cast<std::streamsize>(cut.size()));
  }
  CHECK_THROWS(read_magnitude((dir.path / "cut.mag").string()));
}
