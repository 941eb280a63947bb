#include "sce/enhance.hpp"

#include <algorithm>
#include <cmath>

#include "sce/error.hpp"

namespace sce {

void SceParams::validate() const {
  if (!(b > 0.0) || !std::isfinite(b)) throw ValidationError("b must be > 0");
  if (!(xi >= 0.0 && xi < 1.0)) throw ValidationError("xi must lie in [0, 1)");
  if (m < 1) throw ValidationError("m must be >= 1");
  if (!(s >= 0.0) || !std::isfinite(s)) throw ValidationError("s must be >= 0");
}

std::vector<double> spectral_change(const ExcitationPattern& prev,
                                    const ExcitationPattern& cur) {
  if (prev.bins() != cur.bins()) {
    throw ValidationError("malformed input: spectral change bin mismatch");
  }
  std::vector<double> change(cur.bins());
  for (std::size_t k = 0; k < change.size(); ++k) {
    change[k] = cur.level_db[k] - prev.level_db[k];
  }
  return change;
}

DogKernel::DogKernel(double width_b, std::span<const double> bin_freqs_hz)
    : width_b_(width_b) {
  if (!(width_b > 0.0)) throw DomainError("DoG width b must be > 0");
  const std::size_t n = bin_freqs_hz.size();
  if (n < 2) throw ValidationError("DoG kernel needs at least 2 bins");

  std::vector<double> cams(n);
  for (std::size_t j = 0; j < n; ++j) cams[j] = erb_number(bin_freqs_hz[j]);

  sigma_c_.resize(n);
  alpha_.resize(n);
  norm_.resize(n);
  rows_.assign(n, std::vector<double>(n));
  for (std::size_t k = 0; k < n; ++k) {
    const double lo = cams[k == 0 ? 0 : k - 1];
    const double hi = cams[k + 1 == n ? n - 1 : k + 1];
    const double spacing = (hi - lo) / static_cast<double>((k == 0 || k + 1 == n) ? 1 : 2);
    const double sc = std::max(width_b / 2.0, 0.5 * spacing);
    const double ss = kSurroundRatio * sc;

    std::vector<double> center(n), surround(n);
    double sum_c = 0.0, sum_s = 0.0;
    for (std::size_t j = 0; j < n; ++j) {
      const double d = cams[j] - cams[k];
      center[j] = std::exp(-d * d / (2.0 * sc * sc));
      surround[j] = std::exp(-d * d / (2.0 * ss * ss));
      sum_c += center[j];
      sum_s += surround[j];
    }
    const double alpha = sum_c / sum_s;
    const double peak = 1.0 - alpha;
    auto& row = rows_[k];
    double total = 0.0;
    for (std::size_t j = 0; j < n; ++j) {
      row[j] = (center[j] - alpha * surround[j]) / peak;
      total += row[j];
    }
    // Fold the rounding residue into the most negative tap so the row sum
    // is zero to machine precision.
    auto far = std::min_element(row.begin(), row.end());
    *far -= total;

    sigma_c_[k] = sc;
    alpha_[k] = alpha;
    norm_[k] = peak;
  }
}

std::vector<double> DogKernel::profile(std::size_t center, std::size_t half_width,
                                       double step_cams) const {
  const double sc = sigma_c_.at(center);
  const double ss = kSurroundRatio * sc;
  std::vector<double> taps(2 * half_width + 1);
  for (std::size_t i = 0; i < taps.size(); ++i) {
    const double d = (static_cast<double>(i) - static_cast<double>(half_width)) * step_cams;
    taps[i] = (std::exp(-d * d / (2.0 * sc * sc)) -
               alpha_[center] * std::exp(-d * d / (2.0 * ss * ss))) /
              norm_[center];
  }
  return taps;
}

DogKernel dog_kernel(double width_b, std::span<const double> bin_freqs_hz) {
  return DogKernel(width_b, bin_freqs_hz);
}

std::vector<double> enhancement_function(std::span<const double> change,
                                         const DogKernel& kernel) {
  if (change.size() != kernel.bins()) {
    throw ValidationError("malformed input: ENF bin mismatch");
  }
  std::vector<double> enf(change.size());
  for (std::size_t k = 0; k < enf.size(); ++k) {
    const auto& row = kernel.row(k);
    double acc = 0.0;
    for (std::size_t j = 0; j < row.size(); ++j) acc += row[j] * change[j];
    enf[k] = acc;
  }
  return enf;
}

EnhancementState::EnhancementState(SceParams params) : params_(params) {
  params_.validate();
}

std::vector<double> EnhancementState::accumulate(std::span<const double> enf_cur) {
  if (!history_.empty() && history_.front().size() != enf_cur.size()) {
    throw ValidationError("malformed input: ENF length changed mid-stream");
  }
  history_.emplace_front(enf_cur.begin(), enf_cur.end());
  const auto depth = static_cast<std::size_t>(params_.m);
  while (history_.size() > depth) history_.pop_back();

  double norm = 0.0;
  double w = 1.0;
  for (std::size_t i = 0; i < depth; ++i) {
    norm += w;
    w *= params_.xi;
  }
  std::vector<double> gain(enf_cur.size(), 0.0);
  w = 1.0;
  for (const auto& enf : history_) {
    for (std::size_t k = 0; k < gain.size(); ++k) gain[k] += w * enf[k];
    w *= params_.xi;
  }
  for (double& g : gain) g /= norm;
  return gain;
}

std::vector<double> accumulate_gain(EnhancementState& state,
                                    std::span<const double> enf_cur) {
  return state.accumulate(enf_cur);
}

FrameSpectrum apply_enhancement(const FrameSpectrum& spec_org,
                                std::span<const double> gain_db, double s_n) {
  if (!(s_n >= 0.0)) throw ValidationError("s_n must be >= 0");
  if (gain_db.size() != spec_org.bins()) {
    throw ValidationError("malformed input: gain length mismatch");
  }
  FrameSpectrum out = spec_org;
  if (s_n == 0.0) return out;
  for (std::size_t k = 1; k + 1 < out.bins(); ++k) {
    const double db = std::clamp(s_n * gain_db[k], -kGainClampDb, kGainClampDb);
    out.mag[k] *= std::pow(10.0, db / 20.0);
  }
  return out;
}

EnhancedTrack enhance_track_detailed(const SpectrumTrack& track,
                                     const SceParams& params,
                                     std::span<const double> s_schedule,
                                     Exec exec) {
  params.validate();
  if (s_schedule.size() != track.size()) {
    throw ValidationError("s_schedule length does not match frame count");
  }
  const std::size_t bins = track.config.bins();
  for (const auto& f : track.frames) {
    if (f.bins() != bins || f.phase.size() != bins) {
      throw ValidationError("malformed track: inconsistent bin counts");
    }
  }
  for (double s : s_schedule) {
    if (!(s >= 0.0)) throw ValidationError("s_schedule entries must be >= 0");
  }

  const auto freqs = bin_frequencies(track.config, track.sample_rate);
  const ExcitationModel excitation(freqs);
  const DogKernel kernel(params.b, freqs);
  const auto mag = excitation.track(track, exec);

  EnhancedTrack out;
  out.enf.resize(track.size());
  const auto count = static_cast<std::ptrdiff_t>(track.size());
  auto enf_at = [&](std::ptrdiff_t n) {
    if (n == 0) return std::vector<double>(bins, 0.0);
    return enhancement_function(spectral_change(mag[n - 1], mag[n]), kernel);
  };
  if (exec == Exec::kParallel) {
#pragma omp parallel for schedule(static)
    for (std::ptrdiff_t n = 0; n < count; ++n) out.enf[n] = enf_at(n);
  } else {
    for (std::ptrdiff_t n = 0; n < count; ++n) out.enf[n] = enf_at(n);
  }

  EnhancementState state(params);
  out.gain.reserve(track.size());
  for (const auto& enf : out.enf) out.gain.push_back(state.accumulate(enf));

  out.track.config = track.config;
  out.track.n_source_samples = track.n_source_samples;
  out.track.sample_rate = track.sample_rate;
  out.track.frames.resize(track.size());
  out.applied_scale.assign(s_schedule.begin(), s_schedule.end());
  if (exec == Exec::kParallel) {
#pragma omp parallel for schedule(static)
    for (std::ptrdiff_t n = 0; n < count; ++n) {
      out.track.frames[n] =
          apply_enhancement(track.frames[n], out.gain[n], s_schedule[n]);
    }
  } else {
    for (std::ptrdiff_t n = 0; n < count; ++n) {
      out.track.frames[n] =
          apply_enhancement(track.frames[n], out.gain[n], s_schedule[n]);
    }
  }
  return out;
}

SpectrumTrack enhance_track(const SpectrumTrack& track, const SceParams& params,
                            std::span<const double> s_schedule, Exec exec) {
  return enhance_track_detailed(track, params, s_schedule, exec).track;
}

}  // namespace sce
