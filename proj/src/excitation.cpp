#include "sce/excitation.hpp"

#include <algorithm>
#include <cmath>

#include "sce/error.hpp"

namespace sce {

double erb_hz(double f_hz) {
  if (!(f_hz >= 0.0)) throw DomainError("erb_hz: frequency must be >= 0");
  return 24.7 * (4.37 * f_hz / 1000.0 + 1.0);
}

double erb_number(double f_hz) {
  if (!(f_hz >= 0.0)) throw DomainError("erb_number: frequency must be >= 0");
  return 21.4 * std::log10(4.37 * f_hz / 1000.0 + 1.0);
}

double freq_of_erb_number(double cams) {
  if (!(cams >= 0.0)) throw DomainError("freq_of_erb_number: cams must be >= 0");
  return (std::pow(10.0, cams / 21.4) - 1.0) * 1000.0 / 4.37;
}

double roex_weight(double f_hz, double center_hz) {
  const double p = 4.0 * center_hz / erb_hz(center_hz);
  const double g = std::abs(f_hz - center_hz) / center_hz;
  return (1.0 + p * g) * std::exp(-p * g);
}

ExcitationModel::ExcitationModel(std::vector<double> bin_freqs_hz)
    : freqs_(std::move(bin_freqs_hz)) {
  if (freqs_.empty()) throw ValidationError("excitation: empty bin grid");
  const std::size_t n = freqs_.size();
  weights_.assign(n, std::vector<double>(n, 0.0));
  for (std::size_t k = 0; k < n; ++k) {
    if (freqs_[k] <= 0.0) {
      weights_[k][k] = 1.0;
      continue;
    }
    double total = 0.0;
    for (std::size_t j = 0; j < n; ++j) {
      weights_[k][j] = roex_weight(freqs_[j], freqs_[k]);
      total += weights_[k][j];
    }
    for (double& w : weights_[k]) w /= total;
  }
}

ExcitationModel::ExcitationModel(const StftConfig& config, int sample_rate)
    : ExcitationModel(bin_frequencies(config, sample_rate)) {}

ExcitationPattern ExcitationModel::pattern(const FrameSpectrum& spec) const {
  if (spec.bins() != bins()) throw ValidationError("excitation: bin count mismatch");
  const std::size_t n = bins();
  std::vector<double> power(n);
  for (std::size_t j = 0; j < n; ++j) power[j] = spec.mag[j] * spec.mag[j];
  const double floor = std::pow(10.0, kSilenceFloorDb / 10.0);

  ExcitationPattern out;
  out.bin_freqs_hz = freqs_;
  out.level_db.resize(n);
  for (std::size_t k = 0; k < n; ++k) {
    const auto& w = weights_[k];
    double e = 0.0;
    for (std::size_t j = 0; j < n; ++j) e += w[j] * power[j];
    out.level_db[k] = 10.0 * std::log10(std::max(e, floor));
  }
  return out;
}

std::vector<ExcitationPattern> ExcitationModel::track(const SpectrumTrack& track,
                                                      Exec exec) const {
  for (const auto& f : track.frames) {
    if (f.bins() != bins()) throw ValidationError("excitation: bin count mismatch");
  }
  std::vector<ExcitationPattern> out(track.size());
  const auto count = static_cast<std::ptrdiff_t>(track.size());
  if (exec == Exec::kParallel) {
#pragma omp parallel for schedule(static)
    for (std::ptrdiff_t f = 0; f < count; ++f) out[f] = pattern(track.frames[f]);
  } else {
    for (std::ptrdiff_t f = 0; f < count; ++f) out[f] = pattern(track.frames[f]);
  }
  return out;
}

ExcitationPattern excitation_pattern(const FrameSpectrum& spec,
                                     std::span<const double> bin_freqs_hz) {
  if (spec.bins() == 0) throw ValidationError("excitation: empty spectrum");
  return ExcitationModel({bin_freqs_hz.begin(), bin_freqs_hz.end()}).pattern(spec);
}

void Audiogram::validate() const {
  if (points.size() < 2) {
    throw ValidationError("audiogram needs at least 2 points");
  }
  for (std::size_t i = 0; i < points.size(); ++i) {
    const auto [f, hl] = points[i];
    if (!(f > 0.0)) throw ValidationError("audiogram frequency must be positive");
    if (!(hl >= 0.0 && hl <= 120.0)) {
      throw ValidationError("audiogram HL must lie in [0, 120] dB");
    }
    if (i > 0 && !(f > points[i - 1].first)) {
      throw ValidationError("audiogram frequencies must be strictly increasing");
    }
  }
}

double Audiogram::hearing_level_at(double f_hz) const {
  if (f_hz <= points.front().first) return points.front().second;
  if (f_hz >= points.back().first) return points.back().second;
  auto hi = std::upper_bound(points.begin(), points.end(), f_hz,
                             [](double f, const auto& p) { return f < p.first; });
  auto lo = hi - 1;
  const double t = std::log(f_hz / lo->first) / std::log(hi->first / lo->first);
  return lo->second + t * (hi->second - lo->second);
}

std::vector<double> cambridge_gain(const Audiogram& audiogram,
                                   std::span<const double> bin_freqs_hz) {
  audiogram.validate();
  std::vector<double> gain(bin_freqs_hz.size());
  for (std::size_t k = 0; k < gain.size(); ++k) {
    gain[k] = 0.48 * audiogram.hearing_level_at(bin_freqs_hz[k]);
  }
  return gain;
}

AudioBuffer apply_linear_gain(const AudioBuffer& buffer,
                              std::span<const double> gain_db_per_bin,
                              const StftConfig& config) {
  if (gain_db_per_bin.size() != config.bins()) {
    throw ValidationError("gain curve length does not match analysis bins");
  }
  auto track = stft(buffer, config);
  std::vector<double> factor(gain_db_per_bin.size());
  for (std::size_t k = 0; k < factor.size(); ++k) {
    factor[k] = std::pow(10.0, gain_db_per_bin[k] / 20.0);
  }
  for (auto& frame : track.frames) {
    for (std::size_t k = 0; k < factor.size(); ++k) frame.mag[k] *= factor[k];
  }
  return istft(track);
}

}  // namespace sce
