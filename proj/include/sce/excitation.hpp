#pragma once

#include <span>
#include <utility>
#include <vector>

#include "sce/audio.hpp"
#include "sce/exec.hpp"
#include "sce/stft.hpp"

namespace sce {

// Auditory-filter bandwidth in Hz, 24.7 * (4.37 f/1000 + 1).
double erb_hz(double f_hz);
// ERB_N-number (Cam) scale, 21.4 * log10(4.37 f/1000 + 1).
double erb_number(double f_hz);
// Inverse of erb_number.
double freq_of_erb_number(double cams);

struct ExcitationPattern {
  std::vector<double> level_db;
  std::vector<double> bin_freqs_hz;

  std::size_t bins() const { return level_db.size(); }
};

// Excitation powers are floored at this level (dB re unit magnitude).
inline constexpr double kSilenceFloorDb = -100.0;

// Rounded-exponential weighting W(g) = (1 + p|g|) exp(-p|g|).
double roex_weight(double f_hz, double center_hz);

// Excitation-pattern smoother for a fixed bin grid. Each output bin is the
// roex-weighted mean of the input bin powers, with weights normalized to
// unit sum so a flat spectrum maps to a flat pattern. The DC output bin has
// no defined roex filter and passes its own power through.
class ExcitationModel {
 public:
  explicit ExcitationModel(std::vector<double> bin_freqs_hz);
  ExcitationModel(const StftConfig& config, int sample_rate);

  std::size_t bins() const { return freqs_.size(); }
  const std::vector<double>& bin_freqs() const { return freqs_; }
  // weights()[k] are the normalized input weights for output bin k.
  const std::vector<std::vector<double>>& weights() const { return weights_; }

  ExcitationPattern pattern(const FrameSpectrum& spec) const;
  std::vector<ExcitationPattern> track(const SpectrumTrack& track,
                                       Exec exec = Exec::kParallel) const;

 private:
  std::vector<double> freqs_;
  std::vector<std::vector<double>> weights_;
};

ExcitationPattern excitation_pattern(const FrameSpectrum& spec,
                                     std::span<const double> bin_freqs_hz);

struct Audiogram {
  std::vector<std::pair<double, double>> points;  // (frequency Hz, HL dB)

  // Throws ValidationError if fewer than 2 points, frequencies not strictly
  // increasing and positive, or HL outside [0, 120].
  void validate() const;
  double hearing_level_at(double f_hz) const;
};

// Linear prescription 0.48 * HL(f), HL interpolated in log-frequency and
// clamped to the end points outside the audiogram range.
std::vector<double> cambridge_gain(const Audiogram& audiogram,
                                   std::span<const double> bin_freqs_hz);

// Per-bin magnitude scaling inside the analysis/resynthesis framework.
AudioBuffer apply_linear_gain(const AudioBuffer& buffer,
                              std::span<const double> gain_db_per_bin,
                              const StftConfig& config = {});

}  // namespace sce
