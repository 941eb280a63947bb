#pragma once

#include <cstddef>
#include <filesystem>
#include <span>
#include <string>
#include <vector>

namespace sce {

inline constexpr int kDefaultSampleRate = 16000;

// Mono waveform. Samples are nominally in [-1, 1] and always finite.
class AudioBuffer {
 public:
  AudioBuffer() = default;
  AudioBuffer(std::vector<double> samples, int sample_rate_hz);
  static AudioBuffer zeros(std::size_t n, int sample_rate_hz);

  std::span<const double> samples() const { return samples_; }
  std::span<double> samples() { return samples_; }
  std::vector<double>& data() { return samples_; }
  const std::vector<double>& data() const { return samples_; }
  int sample_rate() const { return sample_rate_hz_; }
  std::size_t size() const { return samples_.size(); }
  bool empty() const { return samples_.empty(); }
  double duration_s() const {
    return static_cast<double>(samples_.size()) / sample_rate_hz_;
  }

  double operator[](std::size_t i) const { return samples_[i]; }
  double& operator[](std::size_t i) { return samples_[i]; }

  bool operator==(const AudioBuffer&) const = default;

 private:
  std::vector<double> samples_;
  int sample_rate_hz_ = kDefaultSampleRate;
};

double rms(std::span<const double> x);

// 16-bit PCM mono RIFF/WAVE. Samples are scaled by 1/32768 on read and
// clipped to the int16 range on write.
AudioBuffer read_wav(const std::filesystem::path& path,
                     int expected_rate = kDefaultSampleRate);
void write_wav(const std::filesystem::path& path, const AudioBuffer& buffer);

// In-memory variants used by the session service.
AudioBuffer decode_wav(std::span<const unsigned char> bytes,
                       int expected_rate = kDefaultSampleRate);
std::vector<unsigned char> encode_wav(const AudioBuffer& buffer);

}  // namespace sce
