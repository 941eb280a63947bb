#pragma once

#include <cstddef>
#include <deque>
#include <span>
#include <vector>

#include "sce/excitation.hpp"
#include "sce/exec.hpp"
#include "sce/stft.hpp"

namespace sce {

// The four enhancement parameters. Any value with b > 0, 0 <= xi < 1,
// m >= 1 and s >= 0 is accepted by the DSP; the GA restricts itself to a grid.
struct SceParams {
  double b = 1.0;   // DoG width, Cams
  double xi = 0.9;  // history weight
  int m = 5;        // history depth, frames
  double s = 1.0;   // enhancement scale

  void validate() const;
  bool operator==(const SceParams&) const = default;
};

// Limit on the per-bin boost or cut applied to a frame, dB.
inline constexpr double kGainClampDb = 20.0;

// Per-bin dB difference between adjacent excitation patterns.
std::vector<double> spectral_change(const ExcitationPattern& prev,
                                    const ExcitationPattern& cur);

// Difference-of-Gaussians on the ERB_N-number axis, sampled on an FFT-bin
// grid. Because the Cam spacing of bins changes with frequency, every
// output bin gets its own row of taps. Each row is a center Gaussian minus
// a 1.6x wider surround whose amplitude is rebalanced so the row sums to
// zero over the grid, then scaled so the center tap is 1. The center width
// is b/2 Cams, widened to half the local bin spacing where the grid is too
// coarse to resolve it.
class DogKernel {
 public:
  static constexpr double kSurroundRatio = 1.6;

  DogKernel(double width_b, std::span<const double> bin_freqs_hz);

  double width_b() const { return width_b_; }
  std::size_t bins() const { return rows_.size(); }
  const std::vector<double>& row(std::size_t center) const { return rows_[center]; }
  double center_sigma(std::size_t center) const { return sigma_c_[center]; }

  // Kernel profile for a given center bin sampled at 2*half_width+1 evenly
  // spaced ERB_N offsets; symmetric about the middle tap.
  std::vector<double> profile(std::size_t center, std::size_t half_width,
                              double step_cams) const;

 private:
  double width_b_;
  std::vector<double> sigma_c_;
  std::vector<double> alpha_;  // rebalanced surround amplitude per row
  std::vector<double> norm_;
  std::vector<std::vector<double>> rows_;
};

DogKernel dog_kernel(double width_b, std::span<const double> bin_freqs_hz);

// ENF[k] = sum_j row_k[j] * change[j]. Bins outside the grid contribute
// nothing.
std::vector<double> enhancement_function(std::span<const double> change,
                                         const DogKernel& kernel);

// Ring of the most recent ENF vectors.
class EnhancementState {
 public:
  explicit EnhancementState(SceParams params);

  const SceParams& params() const { return params_; }
  std::size_t history_size() const { return history_.size(); }
  void clear() { history_.clear(); }

  // Pushes enf_cur and returns
  //   Gain_n[k] = sum_{i<m} xi^i ENF_{n-i}[k] / sum_{i<m} xi^i,
  // with missing history counted as zero vectors.
  std::vector<double> accumulate(std::span<const double> enf_cur);

 private:
  SceParams params_;
  std::deque<std::vector<double>> history_;  // front = most recent
};

std::vector<double> accumulate_gain(EnhancementState& state,
                                    std::span<const double> enf_cur);

// Spec_mod = Spec_org scaled by 10^(clamp(s_n * gain, +-20 dB) / 20) per bin.
// DC and Nyquist bins and the phase are left untouched; s_n == 0 returns the
// input unchanged.
FrameSpectrum apply_enhancement(const FrameSpectrum& spec_org,
                                std::span<const double> gain_db, double s_n);

struct EnhancedTrack {
  SpectrumTrack track;
  std::vector<std::vector<double>> enf;    // per frame
  std::vector<std::vector<double>> gain;   // Gain_n per frame, before S scaling
  std::vector<double> applied_scale;       // s_schedule as used
};

// Runs excitation, spectral change, ENF, gain accumulation and gated
// application frame by frame. Frame 0 has zero spectral change. The ENF
// history advances on every frame; only the applied scale follows the
// schedule.
EnhancedTrack enhance_track_detailed(const SpectrumTrack& track,
                                     const SceParams& params,
                                     std::span<const double> s_schedule,
                                     Exec exec = Exec::kParallel);

SpectrumTrack enhance_track(const SpectrumTrack& track, const SceParams& params,
                            std::span<const double> s_schedule,
                            Exec exec = Exec::kParallel);

}  // namespace sce
