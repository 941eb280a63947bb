#pragma once

#include <filesystem>
#include <memory>
#include <span>
#include <string>
#include <vector>

#include "sce/audio.hpp"
#include "sce/enhance.hpp"
#include "sce/exec.hpp"
#include "sce/stft.hpp"

namespace sce {

// Per-frame SNR aligned to STFT frames. Values may be +inf or -inf.
struct SnrTrack {
  std::vector<double> snr_db;
  StftConfig config;
  int sample_rate = kDefaultSampleRate;

  std::size_t size() const { return snr_db.size(); }
  double frame_time_s(std::size_t f) const {
    return static_cast<double>(f * config.hop) / sample_rate;
  }
};

struct GateConfig {
  double threshold_db = 0.0;
};

// s when snr_n >= T, else 0. Infinite SNRs and thresholds compare normally.
double gate_scale(double snr_n, double s, const GateConfig& gate = {});

std::vector<double> schedule_from_snr(const SnrTrack& snr, const SceParams& params,
                                      const GateConfig& gate = {});

// Ideal per-frame SNR from premixed stems, using the same Hamming-windowed
// spans as the STFT: 10 log10(sum (w t)^2 / sum (w m)^2).
SnrTrack isnr_track(const AudioBuffer& target, const AudioBuffer& masker,
                    const StftConfig& config = {}, Exec exec = Exec::kParallel);

struct EsnrConfig {
  int n_bands = 16;
  double low_hz = 100.0;      // lowest band edge
  double high_hz = 7500.0;    // highest band edge
  double fast_ms = 10.0;      // envelope smoothing
  double slow_ms = 500.0;     // noise-floor minimum search window
  double mod_low_hz = 2.0;
  double mod_high_hz = 10.0;
  double duration_ms = 200.0;
  // Sub-index weights of the product combiner.
  double w_intensity = 0.25;
  double w_modulation = 0.5;
  double w_duration = 0.25;
  // Sub-index reference points: modulation depth (dB RMS) and mean level
  // slope (dB/s) at which the index reaches 0.5, and the envelope/floor
  // ratio counted as sustained elevation.
  double mod_ref_db = 3.0;
  double change_ref_db_per_s = 60.0;
  double duration_ratio = 4.0;
  // Minimum-statistics bias correction: floor *= 1 + floor_bias/sqrt(bins).
  double floor_bias = 0.5;
  // Maximum discount applied to a band judged to hold no speech, dB.
  double discount_db = 3.0;
  // Band SNR range before discounting, dB.
  double min_band_snr_db = -3.0;
  double max_band_snr_db = 40.0;

  void validate(const StftConfig& stft) const;
};

// Per-band internals exposed for inspection and tests.
struct EsnrBands {
  std::vector<double> band_low_hz, band_high_hz;
  // [frame][band]
  std::vector<std::vector<double>> envelope, floor, index, band_snr_db;
};

// Estimated SNR from the mixture alone. Each ERB-spaced band gets a fast
// envelope and a minimum-statistics floor; intensity change, 2-10 Hz
// modulation depth and sustained duration above the floor form sub-indexes
// whose weighted product is a speech-presence index. The band SNR is the
// envelope-over-floor SNR discounted by (1 - index) * discount_db, and the
// frame value is the mean band SNR in dB.
SnrTrack esnr_track(const AudioBuffer& mixture, const StftConfig& config = {},
                    const EsnrConfig& ecfg = {}, EsnrBands* bands = nullptr);

// Pluggable frame-SNR source for the gated pipeline and the benchmark.
class SnrEstimator {
 public:
  virtual ~SnrEstimator() = default;
  virtual std::string name() const = 0;
  virtual SnrTrack estimate(const AudioBuffer& mixture,
                            const StftConfig& config) const = 0;
};

class EsnrEstimator final : public SnrEstimator {
 public:
  explicit EsnrEstimator(EsnrConfig cfg = {}) : cfg_(cfg) {}
  std::string name() const override { return "esnr"; }
  SnrTrack estimate(const AudioBuffer& mixture,
                    const StftConfig& config) const override;

 private:
  EsnrConfig cfg_;
};

// Ignores the mixture and returns the ideal SNR of the stems it holds.
class IsnrOracle final : public SnrEstimator {
 public:
  IsnrOracle(AudioBuffer target, AudioBuffer masker)
      : target_(std::move(target)), masker_(std::move(masker)) {}
  std::string name() const override { return "isnr"; }
  SnrTrack estimate(const AudioBuffer& mixture,
                    const StftConfig& config) const override;

 private:
  AudioBuffer target_, masker_;
};

// CSV with header frame_index,time_s,snr_db. Infinities print as inf/-inf.
std::string snr_csv(const SnrTrack& track);
void write_snr_csv(const std::filesystem::path& path, const SnrTrack& track);

}  // namespace sce
