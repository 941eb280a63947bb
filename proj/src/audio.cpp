#include "sce/audio.hpp"

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <cstring>
#include <fstream>
#include <iterator>

#include "sce/error.hpp"

namespace sce {

AudioBuffer::AudioBuffer(std::vector<double> samples, int sample_rate_hz)
    : samples_(std::move(samples)), sample_rate_hz_(sample_rate_hz) {
  if (sample_rate_hz_ <= 0) {
    throw ValidationError("sample rate must be positive");
  }
  for (double v : samples_) {
    if (!std::isfinite(v)) throw ValidationError("non-finite sample");
  }
}

AudioBuffer AudioBuffer::zeros(std::size_t n, int sample_rate_hz) {
  return AudioBuffer(std::vector<double>(n, 0.0), sample_rate_hz);
}

double rms(std::span<const double> x) {
  if (x.empty()) return 0.0;
  double acc = 0.0;
  for (double v : x) acc += v * v;
  return std::sqrt(acc / static_cast<double>(x.size()));
}

namespace {

std::uint32_t le32(const unsigned char* p) {
  return static_cast<std::uint32_t>(p[0]) |
         (static_cast<std::uint32_t>(p[1]) << 8) |
         (static_cast<std::uint32_t>(p[2]) << 16) |
         (static_cast<std::uint32_t>(p[3]) << 24);
}

std::uint16_t le16(const unsigned char* p) {
  return static_cast<std::uint16_t>(p[0] | (p[1] << 8));
}

void put32(std::vector<unsigned char>& out, std::uint32_t v) {
  for (int i = 0; i < 4; ++i) out.push_back(static_cast<unsigned char>(v >> (8 * i)));
}

void put16(std::vector<unsigned char>& out, std::uint16_t v) {
  out.push_back(static_cast<unsigned char>(v & 0xff));
  out.push_back(static_cast<unsigned char>(v >> 8));
}

}  // namespace

AudioBuffer decode_wav(std::span<const unsigned char> bytes, int expected_rate) {
  if (bytes.size() < 12 || std::memcmp(bytes.data(), "RIFF", 4) != 0 ||
      std::memcmp(bytes.data() + 8, "WAVE", 4) != 0) {
    throw IoError("unreadable header: not a RIFF/WAVE file");
  }
  std::size_t pos = 12;
  bool have_fmt = false;
  int channels = 0;
  int rate = 0;
  int bits = 0;
  while (pos + 8 <= bytes.size()) {
    const unsigned char* chunk = bytes.data() + pos;
    std::uint32_t size = le32(chunk + 4);
    std::size_t body = pos + 8;
    if (body + size > bytes.size()) {
      // Some writers leave a streaming placeholder size on the data chunk.
      if (std::memcmp(chunk, "data", 4) == 0) {
        size = static_cast<std::uint32_t>(bytes.size() - body);
      } else {
        throw IoError("unreadable header: truncated chunk");
      }
    }
    if (std::memcmp(chunk, "fmt ", 4) == 0) {
      if (size < 16) throw IoError("unreadable header: short fmt chunk");
      const unsigned char* f = bytes.data() + body;
      std::uint16_t format = le16(f);
      channels = le16(f + 2);
      rate = static_cast<int>(le32(f + 4));
      bits = le16(f + 14);
      // WAVE_FORMAT_EXTENSIBLE carries the real tag in the sub-format GUID.
      if (format == 0xFFFE && size >= 26) format = le16(f + 24);
      if (format != 1 || bits != 16) throw IoError("non-PCM16 input");
      if (channels != 1) throw IoError("non-mono input");
      have_fmt = true;
    } else if (std::memcmp(chunk, "data", 4) == 0) {
      if (!have_fmt) throw IoError("unreadable header: data before fmt");
      if (expected_rate > 0 && rate != expected_rate) {
        throw IoError("sample rate " + std::to_string(rate) +
                      " Hz does not match expected " +
                      std::to_string(expected_rate) + " Hz");
      }
      std::size_t n = size / 2;
      std::vector<double> samples(n);
      const unsigned char* d = bytes.data() + body;
      for (std::size_t i = 0; i < n; ++i) {
        auto v = static_cast<std::int16_t>(le16(d + 2 * i));
        samples[i] = static_cast<double>(v) / 32768.0;
      }
      return AudioBuffer(std::move(samples), rate);
    }
    pos = body + size + (size & 1u);
  }
  throw IoError("unreadable header: no data chunk");
}

std::vector<unsigned char> encode_wav(const AudioBuffer& buffer) {
  const auto n = static_cast<std::uint32_t>(buffer.size());
  std::vector<unsigned char> out;
  out.reserve(44 + 2 * static_cast<std::size_t>(n));
  out.insert(out.end(), {'R', 'I', 'F', 'F'});
  put32(out, 36 + 2 * n);
  out.insert(out.end(), {'W', 'A', 'V', 'E', 'f', 'm', 't', ' '});
  put32(out, 16);
  put16(out, 1);
  put16(out, 1);
  put32(out, static_cast<std::uint32_t>(buffer.sample_rate()));
  put32(out, static_cast<std::uint32_t>(buffer.sample_rate()) * 2);
  put16(out, 2);
  put16(out, 16);
  out.insert(out.end(), {'d', 'a', 't', 'a'});
  put32(out, 2 * n);
  for (double v : buffer.samples()) {
    double scaled = std::round(v * 32768.0);
    scaled = std::clamp(scaled, -32768.0, 32767.0);
    put16(out, static_cast<std::uint16_t>(static_cast<std::int16_t>(scaled)));
  }
  return out;
}

AudioBuffer read_wav(const std::filesystem::path& path, int expected_rate) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw IoError("cannot open " + path.string());
  std::vector<unsigned char> bytes((std::istreambuf_iterator<char>(in)),
                                   std::istreambuf_iterator<char>());
  try {
    return decode_wav(bytes, expected_rate);
  } catch (const IoError& e) {
    throw IoError(path.string() + ": " + e.what());
  }
}

void write_wav(const std::filesystem::path& path, const AudioBuffer& buffer) {
  auto bytes = encode_wav(buffer);
  std::ofstream out(path, std::ios::binary);
  if (!out) throw IoError("cannot write " + path.string());
  out.write(reinterpret_cast<const char*>(bytes.data()),
            static_cast<std::streamsize>(bytes.size()));
  if (!out) throw IoError("write failed for " + path.string());
}

}  // namespace sce
