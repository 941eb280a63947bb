#include "sce/snr.hpp"

#include <algorithm>
#include <cmath>
#include <deque>
#include <fstream>
#include <limits>
#include <numbers>
#include <sstream>

#include "sce/error.hpp"
#include "sce/excitation.hpp"

namespace sce {

double gate_scale(double snr_n, double s, const GateConfig& gate) {
  return snr_n >= gate.threshold_db ? s : 0.0;
}

std::vector<double> schedule_from_snr(const SnrTrack& snr, const SceParams& params,
                                      const GateConfig& gate) {
  std::vector<double> out(snr.size());
  for (std::size_t n = 0; n < out.size(); ++n) {
    out[n] = gate_scale(snr.snr_db[n], params.s, gate);
  }
  return out;
}

namespace {

double energy_ratio_db(double target_energy, double masker_energy) {
  constexpr double kInf = std::numeric_limits<double>::infinity();
  if (target_energy == 0.0) return -kInf;
  if (masker_energy == 0.0) return kInf;
  return 10.0 * std::log10(target_energy / masker_energy);
}

}  // namespace

SnrTrack isnr_track(const AudioBuffer& target, const AudioBuffer& masker,
                    const StftConfig& config, Exec exec) {
  config.validate();
  if (target.size() != masker.size()) {
    throw AlignmentError("target and masker lengths differ");
  }
  if (target.sample_rate() != masker.sample_rate()) {
    throw AlignmentError("target and masker sample rates differ");
  }
  if (target.size() < config.frame_len) throw ValidationError("input too short");

  const auto window = hamming(config.frame_len);
  SnrTrack out;
  out.config = config;
  out.sample_rate = target.sample_rate();
  out.snr_db.resize(frame_count(target.size(), config));
  const auto t = target.samples();
  const auto m = masker.samples();
  auto frame_snr = [&](std::size_t f) {
    const std::size_t off = f * config.hop;
    double et = 0.0, em = 0.0;
    for (std::size_t i = 0; i < config.frame_len; ++i) {
      const double wt = window[i] * t[off + i];
      const double wm = window[i] * m[off + i];
      et += wt * wt;
      em += wm * wm;
    }
    return energy_ratio_db(et, em);
  };
  const auto count = static_cast<std::ptrdiff_t>(out.snr_db.size());
  if (exec == Exec::kParallel) {
#pragma omp parallel for schedule(static)
    for (std::ptrdiff_t f = 0; f < count; ++f) out.snr_db[f] = frame_snr(f);
  } else {
    for (std::ptrdiff_t f = 0; f < count; ++f) out.snr_db[f] = frame_snr(f);
  }
  return out;
}

void EsnrConfig::validate(const StftConfig& stft) const {
  if (n_bands < 4) throw ValidationError("eSNR needs at least 4 bands");
  if (!(fast_ms > 0.0 && slow_ms > 0.0 && duration_ms > 0.0)) {
    throw ValidationError("eSNR time constants must be positive");
  }
  if (!(low_hz > 0.0 && high_hz > low_hz)) {
    throw ValidationError("eSNR band range invalid");
  }
  stft.validate();
  if (!(mod_low_hz > 0.0 && mod_high_hz > mod_low_hz)) {
    throw ValidationError("eSNR modulation band invalid");
  }
  if (!(w_intensity >= 0.0 && w_modulation >= 0.0 && w_duration >= 0.0)) {
    throw ValidationError("eSNR weights must be non-negative");
  }
}

namespace {

// One-pole smoothing coefficient for time constant tau at frame period dt.
double pole_for_tau(double tau_s, double dt_s) { return std::exp(-dt_s / tau_s); }

// One-pole lowpass coefficient with -3 dB cutoff fc at frame rate fs.
double pole_for_cutoff(double fc, double fs) {
  return std::exp(-2.0 * std::numbers::pi * fc / fs);
}

// Sliding-window minimum over the last `width` values.
class RunningMin {
 public:
  explicit RunningMin(std::size_t width) : width_(width) {}
  double push(std::size_t n, double v) {
    while (!q_.empty() && q_.back().second >= v) q_.pop_back();
    q_.emplace_back(n, v);
    while (q_.front().first + width_ <= n) q_.pop_front();
    return q_.front().second;
  }

 private:
  std::size_t width_;
  std::deque<std::pair<std::size_t, double>> q_;
};

// Mean of the last `width` values.
class RunningMean {
 public:
  explicit RunningMean(std::size_t width) : width_(width) {}
  double push(double v) {
    q_.push_back(v);
    sum_ += v;
    if (q_.size() > width_) {
      sum_ -= q_.front();
      q_.pop_front();
    }
    return sum_ / static_cast<double>(q_.size());
  }

 private:
  std::size_t width_;
  std::deque<double> q_;
  double sum_ = 0.0;
};

}  // namespace

SnrTrack esnr_track(const AudioBuffer& mixture, const StftConfig& config,
                    const EsnrConfig& ecfg, EsnrBands* bands_out) {
  ecfg.validate(config);
  const auto track = stft(mixture, config);
  const double rate = mixture.sample_rate();
  const double dt = static_cast<double>(config.hop) / rate;
  const double frame_rate = 1.0 / dt;
  if (!(ecfg.mod_high_hz < frame_rate / 2.0)) {
    throw ValidationError("eSNR modulation band exceeds envelope Nyquist");
  }
  const double high_hz = std::min(ecfg.high_hz, rate / 2.0);
  const auto freqs = bin_frequencies(config, mixture.sample_rate());

  // ERB-spaced band edges and bin membership.
  const int nb = ecfg.n_bands;
  const double e_lo = erb_number(ecfg.low_hz);
  const double e_hi = erb_number(high_hz);
  std::vector<double> edges(nb + 1);
  for (int b = 0; b <= nb; ++b) {
    edges[b] = freq_of_erb_number(e_lo + (e_hi - e_lo) * b / nb);
  }
  std::vector<std::vector<std::size_t>> members(nb);
  for (std::size_t k = 0; k < freqs.size(); ++k) {
    for (int b = 0; b < nb; ++b) {
      if (freqs[k] >= edges[b] && freqs[k] < edges[b + 1]) members[b].push_back(k);
    }
  }
  for (int b = 0; b < nb; ++b) {
    if (members[b].empty()) {
      const double mid = std::sqrt(edges[b] * edges[b + 1]);
      auto nearest = std::min_element(freqs.begin(), freqs.end(), [&](double x, double y) {
        return std::abs(x - mid) < std::abs(y - mid);
      });
      members[b].push_back(static_cast<std::size_t>(nearest - freqs.begin()));
    }
  }

  const std::size_t n_frames = track.size();
  const double a_fast = pole_for_tau(ecfg.fast_ms / 1000.0, dt);
  const double a_mod_hi = pole_for_cutoff(ecfg.mod_high_hz, frame_rate);
  const double a_mod_lo = pole_for_cutoff(ecfg.mod_low_hz, frame_rate);
  const auto slow_width =
      std::max<std::size_t>(1, static_cast<std::size_t>(std::lround(ecfg.slow_ms / 1000.0 / dt)));
  const auto dur_width = std::max<std::size_t>(
      1, static_cast<std::size_t>(std::lround(ecfg.duration_ms / 1000.0 / dt)));
  const double min_raw = std::pow(10.0, ecfg.min_band_snr_db / 10.0);
  const double w_sum = ecfg.w_intensity + ecfg.w_modulation + ecfg.w_duration;

  std::vector<std::vector<double>> env(n_frames, std::vector<double>(nb));
  std::vector<std::vector<double>> flo(n_frames, std::vector<double>(nb));
  std::vector<std::vector<double>> idx(n_frames, std::vector<double>(nb));
  std::vector<std::vector<double>> bsnr(n_frames, std::vector<double>(nb));

  for (int b = 0; b < nb; ++b) {
    // Minimum statistics underestimate the mean noise power; the shortfall
    // grows as the band holds fewer bins.
    const double bias = 1.0 + ecfg.floor_bias / std::sqrt(static_cast<double>(members[b].size()));
    RunningMin running_min(slow_width);
    RunningMean mean_change(dur_width), mean_mod(dur_width), mean_above(dur_width);
    double e = 0.0, lp_hi = 0.0, lp_lo = 0.0;
    for (std::size_t n = 0; n < n_frames; ++n) {
      double p = 0.0;
      for (std::size_t k : members[b]) p += track.frames[n].mag[k] * track.frames[n].mag[k];
      p = std::max(p, std::numeric_limits<double>::min());
      e = n == 0 ? p : a_fast * e + (1.0 - a_fast) * p;
      const double noise = bias * running_min.push(n, e);
      const double level = 10.0 * std::log10(e);

      // Envelope level band-passed to the modulation range.
      if (n == 0) lp_hi = lp_lo = level;
      const double prev_hi = lp_hi;
      lp_hi = a_mod_hi * lp_hi + (1.0 - a_mod_hi) * level;
      lp_lo = a_mod_lo * lp_lo + (1.0 - a_mod_lo) * level;
      const double mod = lp_hi - lp_lo;
      const double change = std::abs(lp_hi - prev_hi);

      const double depth = std::sqrt(mean_mod.push(mod * mod));
      const double slope = mean_change.push(change) * frame_rate;  // dB/s
      const double above = mean_above.push(e > ecfg.duration_ratio * noise ? 1.0 : 0.0);

      const double i_mod = depth * depth / (depth * depth + ecfg.mod_ref_db * ecfg.mod_ref_db);
      const double i_int = slope / (slope + ecfg.change_ref_db_per_s);
      const double i_dur = above;
      const double index =
          w_sum > 0.0
              ? std::pow(i_int, ecfg.w_intensity / w_sum) *
                    std::pow(i_mod, ecfg.w_modulation / w_sum) *
                    std::pow(i_dur, ecfg.w_duration / w_sum)
              : 1.0;

      const double raw = std::min(
          10.0 * std::log10(std::max(e / noise - 1.0, min_raw)), ecfg.max_band_snr_db);
      env[n][b] = e;
      flo[n][b] = noise;
      idx[n][b] = index;
      bsnr[n][b] = raw - ecfg.discount_db * (1.0 - index);
    }
  }

  SnrTrack out;
  out.config = config;
  out.sample_rate = mixture.sample_rate();
  out.snr_db.resize(n_frames);
  for (std::size_t n = 0; n < n_frames; ++n) {
    double acc = 0.0;
    for (int b = 0; b < nb; ++b) acc += bsnr[n][b];
    out.snr_db[n] = acc / nb;
  }
  if (bands_out != nullptr) {
    bands_out->band_low_hz.assign(edges.begin(), edges.end() - 1);
    bands_out->band_high_hz.assign(edges.begin() + 1, edges.end());
    bands_out->envelope = std::move(env);
    bands_out->floor = std::move(flo);
    bands_out->index = std::move(idx);
    bands_out->band_snr_db = std::move(bsnr);
  }
  return out;
}

SnrTrack EsnrEstimator::estimate(const AudioBuffer& mixture,
                                 const StftConfig& config) const {
  return esnr_track(mixture, config, cfg_);
}

SnrTrack IsnrOracle::estimate(const AudioBuffer& mixture,
                              const StftConfig& config) const {
  if (mixture.size() != target_.size()) {
    throw AlignmentError("mixture length differs from oracle stems");
  }
  return isnr_track(target_, masker_, config);
}

std::string snr_csv(const SnrTrack& track) {
  std::ostringstream os;
  os.precision(10);
  os << "frame_index,time_s,snr_db\n";
  for (std::size_t f = 0; f < track.size(); ++f) {
    os << f << ',' << track.frame_time_s(f) << ',';
    const double v = track.snr_db[f];
    if (std::isinf(v)) {
      os << (v > 0 ? "inf" : "-inf");
    } else {
      os << v;
    }
    os << '\n';
  }
  return os.str();
}

void write_snr_csv(const std::filesystem::path& path, const SnrTrack& track) {
  std::ofstream out(path);
  if (!out) throw IoError("cannot write " + path.string());
  out << snr_csv(track);
}

}  // namespace sce
