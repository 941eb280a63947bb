#include "sce/mixing.hpp"

#include <algorithm>
#include <cmath>
#include <complex>
#include <numbers>
#include <random>

#include "fft.hpp"
#include "sce/error.hpp"
#include "sce/stft.hpp"

namespace sce {

void MixSpec::validate() const {
  if (!std::isfinite(smr_db)) throw ValidationError("smr_db must be finite");
  if (!(masker_lead_ms >= 0.0)) throw ValidationError("masker lead must be >= 0");
  if (!(crossfade_ms >= 0.0)) throw ValidationError("crossfade must be >= 0");
}

AudioBuffer loop_to_length(const AudioBuffer& masker, std::size_t n,
                           double crossfade_ms) {
  if (masker.empty()) throw ValidationError("empty masker");
  const auto& src = masker.data();
  std::vector<double> out(src.begin(), src.end());
  const auto fade = static_cast<std::size_t>(
      std::lround(crossfade_ms * masker.sample_rate() / 1000.0));
  if (out.size() < n && fade >= src.size()) {
    throw ValidationError("masker shorter than its crossfade");
  }
  while (out.size() < n) {
    const std::size_t base = out.size() - fade;
    for (std::size_t i = 0; i < fade; ++i) {
      const double r = 0.5 - 0.5 * std::cos(std::numbers::pi * (i + 0.5) / fade);
      out[base + i] = out[base + i] * (1.0 - r) + src[i] * r;
    }
    out.insert(out.end(), src.begin() + static_cast<std::ptrdiff_t>(fade), src.end());
  }
  out.resize(n);
  return AudioBuffer(std::move(out), masker.sample_rate());
}

MixResult mix_at_smr(const AudioBuffer& target, const AudioBuffer& masker,
                     const MixSpec& spec) {
  spec.validate();
  if (target.sample_rate() != masker.sample_rate()) {
    throw AlignmentError("target and masker sample rates differ");
  }
  if (target.empty()) throw ValidationError("empty target");
  const int rate = target.sample_rate();
  const auto lead = static_cast<std::size_t>(std::lround(spec.masker_lead_ms * rate / 1000.0));
  const std::size_t total = lead + target.size();
  if (masker.size() < total && !spec.allow_loop) {
    throw ValidationError("masker too short for target plus lead and looping is disabled");
  }
  AudioBuffer looped = loop_to_length(masker, total, spec.crossfade_ms);

  const double target_rms = rms(target.samples());
  const double masker_rms = rms(looped.samples().subspan(lead));
  if (target_rms == 0.0) throw ValidationError("target is silent");
  if (masker_rms == 0.0) throw ValidationError("masker is silent over the overlap");
  const double scale = target_rms / (masker_rms * std::pow(10.0, spec.smr_db / 20.0));

  std::vector<double> t(total, 0.0), m(total), x(total);
  std::copy(target.data().begin(), target.data().end(), t.begin() + static_cast<std::ptrdiff_t>(lead));
  for (std::size_t i = 0; i < total; ++i) {
    m[i] = scale * looped[i];
    x[i] = t[i] + m[i];
  }
  MixResult out;
  out.mixture = AudioBuffer(std::move(x), rate);
  out.target = AudioBuffer(std::move(t), rate);
  out.masker = AudioBuffer(std::move(m), rate);
  out.masker_scale = scale;
  out.lead_samples = lead;
  return out;
}

std::vector<double> long_term_spectrum(std::span<const AudioBuffer> corpus,
                                       std::size_t fft_size) {
  if (corpus.empty()) throw ValidationError("empty corpus");
  const auto config = StftConfig::with_frame(fft_size);
  const int rate = corpus.front().sample_rate();
  std::vector<double> acc(config.bins(), 0.0);
  std::size_t frames = 0;
  for (const auto& buf : corpus) {
    if (buf.sample_rate() != rate) throw ValidationError("corpus sample rates differ");
    if (buf.size() < fft_size) continue;
    const auto track = stft(buf, config);
    for (const auto& f : track.frames) {
      for (std::size_t k = 0; k < acc.size(); ++k) acc[k] += f.mag[k] * f.mag[k];
    }
    frames += track.size();
  }
  if (frames == 0) throw ValidationError("corpus shorter than one analysis frame");
  for (double& v : acc) v /= static_cast<double>(frames);
  return acc;
}

std::vector<double> third_octave_centers_200_to_5k() {
  return {200, 250, 315, 400, 500, 630, 800, 1000,
          1250, 1600, 2000, 2500, 3150, 4000, 5000};
}

std::vector<double> third_octave_levels(std::span<const double> power,
                                        int sample_rate, std::size_t fft_size,
                                        std::span<const double> centers_hz) {
  const double df = static_cast<double>(sample_rate) / static_cast<double>(fft_size);
  const double half = std::pow(2.0, 1.0 / 6.0);
  std::vector<double> levels;
  levels.reserve(centers_hz.size());
  for (double fc : centers_hz) {
    const double lo = fc / half;
    const double hi = fc * half;
    double acc = 0.0;
    for (std::size_t k = 0; k < power.size(); ++k) {
      const double f = static_cast<double>(k) * df;
      if (f >= lo && f < hi) acc += power[k];
    }
    levels.push_back(10.0 * std::log10(std::max(acc, 1e-300)));
  }
  return levels;
}

AudioBuffer make_ssn(std::span<const AudioBuffer> corpus, double duration_s,
                     const SsnOptions& options) {
  if (corpus.empty()) throw ValidationError("empty corpus");
  if (!(duration_s > 0.0)) throw ValidationError("duration must be positive");
  const int rate = corpus.front().sample_rate();
  const auto ltas = long_term_spectrum(corpus, options.fft_size);

  const auto n = static_cast<std::size_t>(std::lround(duration_s * rate));
  if (n < 2) throw ValidationError("duration too short");
  std::mt19937_64 rng(options.seed);
  std::normal_distribution<double> gauss(0.0, 1.0);
  std::vector<double> noise(n);
  for (double& v : noise) v = gauss(rng);

  const auto& fft = detail::real_fft(n);
  std::vector<std::complex<double>> white(n / 2 + 1);
  fft.forward(noise, white);

  // Filter power per coarse bin. Measuring the shaped noise smooths the
  // spectrum a second time, which fills narrow valleys of the target, so the
  // filter is refined against the measured LTAS for a few passes.
  std::vector<double> filter(ltas);
  std::vector<double> shaped(n);
  std::vector<std::complex<double>> spec(white.size());
  const double ratio = static_cast<double>(options.fft_size) / static_cast<double>(n);
  for (int pass = 0; pass <= options.refine_passes; ++pass) {
    for (std::size_t k = 0; k < spec.size(); ++k) {
      const double pos = static_cast<double>(k) * ratio;
      const auto i0 = std::min(static_cast<std::size_t>(pos), filter.size() - 1);
      const auto i1 = std::min(i0 + 1, filter.size() - 1);
      const double t = pos - static_cast<double>(i0);
      spec[k] = white[k] * std::sqrt(filter[i0] * (1.0 - t) + filter[i1] * t);
    }
    fft.inverse(spec, shaped);
    if (pass == options.refine_passes) break;
    const AudioBuffer trial[] = {AudioBuffer(shaped, rate)};
    const auto got = long_term_spectrum(trial, options.fft_size);
    double sum_want = 0.0, sum_got = 0.0;
    for (std::size_t k = 0; k < got.size(); ++k) {
      sum_want += ltas[k];
      sum_got += got[k];
    }
    if (sum_got == 0.0) break;
    for (std::size_t k = 0; k < filter.size(); ++k) {
      if (ltas[k] <= 0.0 || got[k] <= 0.0) continue;
      const double correction = (ltas[k] / sum_want) / (got[k] / sum_got);
      filter[k] *= std::clamp(correction, 0.1, 10.0);
    }
  }
  const double r = rms(shaped);
  if (r == 0.0) throw ValidationError("corpus has no energy");
  for (double& v : shaped) v *= options.rms / r;
  return AudioBuffer(std::move(shaped), rate);
}

AudioBuffer scale_to_dbfs(const AudioBuffer& buffer, double rms_dbfs) {
  const double r = rms(buffer.samples());
  if (r == 0.0) throw ValidationError("cannot level a silent buffer");
  const double g = std::pow(10.0, rms_dbfs / 20.0) / r;
  std::vector<double> out(buffer.data());
  for (double& v : out) v *= g;
  return AudioBuffer(std::move(out), buffer.sample_rate());
}

}  // namespace sce
