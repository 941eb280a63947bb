#pragma once

#include <cstdint>
#include <span>
#include <vector>

#include "sce/audio.hpp"

namespace sce {

struct MixSpec {
  double smr_db = 0.0;
  double masker_lead_ms = 500.0;
  bool allow_loop = true;
  double crossfade_ms = 10.0;

  void validate() const;
};

struct MixResult {
  AudioBuffer mixture;
  AudioBuffer target;  // delayed by the lead, zero-padded at the head
  AudioBuffer masker;  // scaled masker
  double masker_scale = 1.0;
  std::size_t lead_samples = 0;
};

// The target starts round(lead_ms * rate / 1000) samples after the masker
// and both end together. The masker is scaled so the target-to-masker RMS
// ratio over the overlap equals smr_db. Maskers shorter than required are
// looped with a raised-cosine crossfade.
MixResult mix_at_smr(const AudioBuffer& target, const AudioBuffer& masker,
                     const MixSpec& spec);

// Repeats `masker` with crossfades until it holds at least n samples, then
// trims to exactly n.
AudioBuffer loop_to_length(const AudioBuffer& masker, std::size_t n,
                           double crossfade_ms);

// Mean Hamming-windowed power spectrum over every frame of every buffer.
std::vector<double> long_term_spectrum(std::span<const AudioBuffer> corpus,
                                       std::size_t fft_size = 1024);

// Band power level (dB) per 1/3-octave band from a one-sided power spectrum.
std::vector<double> third_octave_levels(std::span<const double> power,
                                        int sample_rate, std::size_t fft_size,
                                        std::span<const double> centers_hz);

// Nominal 1/3-octave centers from 200 Hz to 5 kHz.
std::vector<double> third_octave_centers_200_to_5k();

struct SsnOptions {
  std::size_t fft_size = 1024;
  double rms = 0.05623413251903491;  // -25 dBFS
  std::uint64_t seed = 1;
  // Filter corrections against the measured noise spectrum.
  int refine_passes = 4;
};

// White noise filtered so its long-term spectrum follows the corpus's.
// Output RMS is options.rms.
AudioBuffer make_ssn(std::span<const AudioBuffer> corpus, double duration_s,
                     const SsnOptions& options = {});

// Presentation level calibration: ref_dbfs RMS corresponds to ref_spl.
struct LevelCalibration {
  double ref_dbfs = -25.0;
  double ref_spl = 65.0;
  double dbfs_for_spl(double spl) const { return ref_dbfs + (spl - ref_spl); }
};

AudioBuffer scale_to_dbfs(const AudioBuffer& buffer, double rms_dbfs);

}  // namespace sce
