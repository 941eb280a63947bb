#include "sce/stft.hpp"

#include <cmath>
#include <complex>
#include <numbers>

#include "fft.hpp"
#include "sce/error.hpp"

namespace sce {

void StftConfig::validate() const {
  if (frame_len < 4) throw ValidationError("frame_len must be >= 4");
  if (fft_size != frame_len) throw ValidationError("fft_size must equal frame_len");
  if (hop != frame_len / 2) throw ValidationError("hop must equal frame_len / 2");
}

std::vector<double> hamming(std::size_t n) {
  std::vector<double> w(n);
  for (std::size_t i = 0; i < n; ++i) {
    w[i] = 0.54 - 0.46 * std::cos(2.0 * std::numbers::pi * static_cast<double>(i) /
                                  static_cast<double>(n));
  }
  return w;
}

std::size_t frame_count(std::size_t n_samples, const StftConfig& config) {
  if (n_samples < config.frame_len) return 0;
  return 1 + (n_samples - config.frame_len) / config.hop;
}

std::vector<double> bin_frequencies(const StftConfig& config, int sample_rate) {
  std::vector<double> f(config.bins());
  for (std::size_t k = 0; k < f.size(); ++k) {
    f[k] = static_cast<double>(k) * sample_rate / static_cast<double>(config.fft_size);
  }
  return f;
}

std::size_t SpectrumTrack::synthesis_length() const {
  if (frames.empty()) return 0;
  return (frames.size() - 1) * config.hop + config.frame_len;
}

namespace {

FrameSpectrum analyze_frame(std::span<const double> src, std::size_t offset,
                            std::span<const double> window,
                            const detail::RealFft& fft) {
  const std::size_t n = window.size();
  std::vector<double> buf(n);
  for (std::size_t i = 0; i < n; ++i) buf[i] = src[offset + i] * window[i];
  std::vector<std::complex<double>> spec(n / 2 + 1);
  fft.forward(buf, spec);
  FrameSpectrum out;
  out.mag.resize(spec.size());
  out.phase.resize(spec.size());
  for (std::size_t k = 0; k < spec.size(); ++k) {
    out.mag[k] = std::abs(spec[k]);
    out.phase[k] = std::arg(spec[k]);
  }
  return out;
}

std::vector<double> synthesize_frame(const FrameSpectrum& frame,
                                     const detail::RealFft& fft) {
  const std::size_t n = fft.size();
  std::vector<std::complex<double>> spec(frame.bins());
  for (std::size_t k = 0; k < spec.size(); ++k) {
    spec[k] = std::polar(frame.mag[k], frame.phase[k]);
  }
  std::vector<double> out(n);
  fft.inverse(spec, out);
  const double scale = 1.0 / static_cast<double>(n);
  for (double& v : out) v *= scale;
  return out;
}

}  // namespace

SpectrumTrack stft(const AudioBuffer& buffer, const StftConfig& config, Exec exec) {
  config.validate();
  if (buffer.size() < config.frame_len) throw ValidationError("input too short");
  const std::size_t n_frames = frame_count(buffer.size(), config);
  const auto window = hamming(config.frame_len);
  const auto& fft = detail::real_fft(config.fft_size);

  SpectrumTrack track;
  track.config = config;
  track.n_source_samples = buffer.size();
  track.sample_rate = buffer.sample_rate();
  track.frames.resize(n_frames);
  const auto src = buffer.samples();
  const auto count = static_cast<std::ptrdiff_t>(n_frames);

  if (exec == Exec::kParallel) {
#pragma omp parallel for schedule(static)
    for (std::ptrdiff_t f = 0; f < count; ++f) {
      track.frames[f] = analyze_frame(src, static_cast<std::size_t>(f) * config.hop,
                                      window, fft);
    }
  } else {
    for (std::ptrdiff_t f = 0; f < count; ++f) {
      track.frames[f] = analyze_frame(src, static_cast<std::size_t>(f) * config.hop,
                                      window, fft);
    }
  }
  return track;
}

AudioBuffer istft(const SpectrumTrack& track, Exec exec) {
  track.config.validate();
  if (track.frames.empty()) throw ValidationError("malformed track: no frames");
  const std::size_t bins = track.config.bins();
  for (const auto& f : track.frames) {
    if (f.mag.size() != bins || f.phase.size() != bins) {
      throw ValidationError("malformed track: inconsistent bin counts");
    }
  }
  const auto& fft = detail::real_fft(track.config.fft_size);
  const auto window = hamming(track.config.frame_len);
  const auto count = static_cast<std::ptrdiff_t>(track.frames.size());

  std::vector<std::vector<double>> pieces(track.frames.size());
  if (exec == Exec::kParallel) {
#pragma omp parallel for schedule(static)
    for (std::ptrdiff_t f = 0; f < count; ++f) {
      pieces[f] = synthesize_frame(track.frames[f], fft);
    }
  } else {
    for (std::ptrdiff_t f = 0; f < count; ++f) {
      pieces[f] = synthesize_frame(track.frames[f], fft);
    }
  }

  // Accumulate in frame order so both paths sum identically.
  const std::size_t len = track.synthesis_length();
  std::vector<double> out(len, 0.0);
  std::vector<double> wsum(len, 0.0);
  for (std::size_t f = 0; f < pieces.size(); ++f) {
    const std::size_t off = f * track.config.hop;
    for (std::size_t i = 0; i < track.config.frame_len; ++i) {
      out[off + i] += pieces[f][i];
      wsum[off + i] += window[i];
    }
  }
  for (std::size_t i = 0; i < len; ++i) out[i] /= wsum[i];
  return AudioBuffer(std::move(out), track.sample_rate);
}

}  // namespace sce
