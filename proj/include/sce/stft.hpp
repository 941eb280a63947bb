#pragma once

#include <cstddef>
#include <vector>

#include "sce/audio.hpp"
#include "sce/exec.hpp"

namespace sce {

enum class Window { kHamming };

struct StftConfig {
  std::size_t frame_len = 256;
  std::size_t hop = 128;
  std::size_t fft_size = 256;
  Window window = Window::kHamming;

  static StftConfig with_frame(std::size_t frame_len) {
    return {frame_len, frame_len / 2, frame_len, Window::kHamming};
  }
  std::size_t bins() const { return fft_size / 2 + 1; }
  // Throws ValidationError unless fft_size == frame_len and hop == frame_len/2.
  void validate() const;
  bool operator==(const StftConfig&) const = default;
};

// Periodic Hamming window of length n.
std::vector<double> hamming(std::size_t n);

// Number of analysis frames for n samples; 0 when n < frame_len.
std::size_t frame_count(std::size_t n_samples, const StftConfig& config);

// Center frequency of every one-sided bin.
std::vector<double> bin_frequencies(const StftConfig& config, int sample_rate);

struct FrameSpectrum {
  std::vector<double> mag;    // linear magnitude per bin, >= 0
  std::vector<double> phase;  // radians per bin

  std::size_t bins() const { return mag.size(); }
  bool operator==(const FrameSpectrum&) const = default;
};

struct SpectrumTrack {
  std::vector<FrameSpectrum> frames;
  StftConfig config;
  std::size_t n_source_samples = 0;
  int sample_rate = kDefaultSampleRate;

  std::size_t size() const { return frames.size(); }
  // Samples covered by the frames: (F - 1) * hop + frame_len.
  std::size_t synthesis_length() const;
  bool operator==(const SpectrumTrack&) const = default;
};

// Frame f covers samples [f*hop, f*hop + frame_len). Trailing samples that
// do not fill a frame are dropped.
SpectrumTrack stft(const AudioBuffer& buffer, const StftConfig& config = {},
                   Exec exec = Exec::kParallel);

// Weighted overlap-add with division by the summed analysis window, so an
// unmodified track reproduces its source over synthesis_length() samples.
AudioBuffer istft(const SpectrumTrack& track, Exec exec = Exec::kParallel);

}  // namespace sce
