#include <doctest.h>

#include <cmath>
#include <complex>
#include <filesystem>
#include <fstream>
#include <numbers>
#include <random>

#include "sce/audio.hpp"
#include "sce/error.hpp"
#include "sce/stft.hpp"
#include "support/stimuli.hpp"

using namespace sce;

namespace {

std::filesystem::path temp_path(const std::string& name) {
  return std::filesystem::temp_directory_path() / ("sce_test_" + name);
}

// Direct DFT magnitude of the Hamming-windowed span starting at `start`.
std::vector<double> dft_magnitude(const AudioBuffer& x, std::size_t start, std::size_t n) {
  const auto w = hamming(n);
  std::vector<double> mag(n / 2 + 1);
  for (std::size_t k = 0; k < mag.size(); ++k) {
    std::complex<double> acc = 0.0;
    for (std::size_t t = 0; t < n; ++t) {
      const double ang = -2.0 * std::numbers::pi * static_cast<double>(k * t) / n;
      acc += w[t] * x[start + t] * std::polar(1.0, ang);
    }
    mag[k] = std::abs(acc);
  }
  return mag;
}

double interior_snr_db(const AudioBuffer& ref, const AudioBuffer& out, std::size_t margin) {
  double sig = 0.0, err = 0.0;
  for (std::size_t i = margin; i + margin < out.size(); ++i) {
    sig += ref[i] * ref[i];
    err += (ref[i] - out[i]) * (ref[i] - out[i]);
  }
  return 10.0 * std::log10(sig / err);
}

}  // namespace

TEST_CASE("audio buffer rejects non-finite samples and bad rates") {
  CHECK_THROWS_AS(AudioBuffer({0.0, NAN}, 16000), ValidationError);
  CHECK_THROWS_AS(AudioBuffer({0.0}, 0), ValidationError);
  CHECK(AudioBuffer::zeros(5, 16000).size() == 5);
}

TEST_CASE("wav round trip of zeros") {
  const auto p = temp_path("zeros.wav");
  write_wav(p, AudioBuffer::zeros(16000, 16000));
  const auto back = read_wav(p);
  CHECK(back.size() == 16000);
  CHECK(back.sample_rate() == 16000);
  for (double v : back.samples()) CHECK(v == 0.0);
}

TEST_CASE("full-scale impulse survives quantization") {
  std::vector<double> x(100, 0.0);
  x[0] = 1.0;
  const auto bytes = encode_wav(AudioBuffer(x, 16000));
  const auto back = decode_wav(bytes);
  CHECK(std::abs(back[0] - 1.0) <= 1.0 / 32768.0);
}

TEST_CASE("wav write then read is identity up to quantization") {
  const auto x = sce::testing::white_noise(4000, 3, 0.2);
  const auto back = decode_wav(encode_wav(x));
  REQUIRE(back.size() == x.size());
  for (std::size_t i = 0; i < x.size(); ++i) {
    CHECK(std::abs(back[i] - x[i]) <= 1.0 / 32768.0);
  }
}

TEST_CASE("wav reader rejects stereo, non-PCM16 and mismatched rates") {
  auto bytes = encode_wav(AudioBuffer::zeros(64, 16000));
  auto stereo = bytes;
  stereo[22] = 2;  // channel count
  CHECK_THROWS_WITH_AS(decode_wav(stereo), doctest::Contains("non-mono input"), IoError);
  auto pcm8 = bytes;
  pcm8[34] = 8;  // bits per sample
  CHECK_THROWS_WITH_AS(decode_wav(pcm8), doctest::Contains("non-PCM16"), IoError);
  CHECK_THROWS_AS(decode_wav(bytes, 8000), IoError);
  std::vector<unsigned char> junk(10, 0);
  CHECK_THROWS_AS(decode_wav(junk), IoError);
  CHECK_THROWS_AS(read_wav(temp_path("does_not_exist.wav")), IoError);
}

TEST_CASE("frame count formula") {
  const StftConfig cfg;
  CHECK(frame_count(255, cfg) == 0);
  CHECK(frame_count(256, cfg) == 1);
  CHECK(frame_count(512, cfg) == 3);

  std::mt19937_64 rng(7);
  std::uniform_int_distribution<std::size_t> len(256, 20000);
  for (int i = 0; i < 200; ++i) {
    const std::size_t n = len(rng);
    CHECK(frame_count(n, cfg) == 1 + (n - 256) / 128);
  }
  const auto x = sce::testing::white_noise(1000, 1);
  CHECK(stft(x).size() == frame_count(1000, cfg));
}

TEST_CASE("stft rejects short input and bad configs") {
  CHECK_THROWS_WITH_AS(stft(AudioBuffer::zeros(200, 16000)),
                       doctest::Contains("input too short"), ValidationError);
  StftConfig bad;
  bad.hop = 100;
  CHECK_THROWS_AS(stft(AudioBuffer::zeros(1000, 16000), bad), ValidationError);
}

TEST_CASE("1 kHz sine peaks at bin 16 and matches a direct DFT") {
  const auto x = sce::testing::sine(1000.0, 2048);
  const auto track = stft(x);
  for (std::size_t f = 0; f < track.size(); ++f) {
    const auto& mag = track.frames[f].mag;
    CHECK(std::max_element(mag.begin(), mag.end()) - mag.begin() == 16);
    const auto oracle = dft_magnitude(x, f * 128, 256);
    for (std::size_t k = 0; k < mag.size(); ++k) {
      CHECK(mag[k] == doctest::Approx(oracle[k]).epsilon(1e-9).scale(1.0));
    }
  }
}

TEST_CASE("round trip reproduces the interior") {
  for (std::uint64_t seed = 1; seed <= 5; ++seed) {
    const auto x = sce::testing::white_noise(5000 + 37 * seed, seed);
    const auto track = stft(x);
    const auto y = istft(track);
    REQUIRE(y.size() == track.synthesis_length());
    double e = 0.0, s = 0.0;
    for (std::size_t i = 256; i + 256 < y.size(); ++i) {
      e += (y[i] - x[i]) * (y[i] - x[i]);
      s += x[i] * x[i];
    }
    CHECK(std::sqrt(e / s) < 1e-6);
  }
  const auto speech = sce::testing::synth_speech(2.0, 11);
  CHECK(interior_snr_db(speech, istft(stft(speech)), 256) > 50.0);
}

TEST_CASE("all-zero frame resynthesizes to silence") {
  SpectrumTrack t;
  t.frames.push_back({std::vector<double>(129, 0.0), std::vector<double>(129, 0.0)});
  t.n_source_samples = 256;
  const auto y = istft(t);
  CHECK(y.size() == 256);
  for (double v : y.samples()) CHECK(v == 0.0);
}

TEST_CASE("istft rejects inconsistent bin counts") {
  auto t = stft(sce::testing::white_noise(1024, 2));
  t.frames[1].mag.pop_back();
  CHECK_THROWS_WITH_AS(istft(t), doctest::Contains("malformed track"), ValidationError);
}

TEST_CASE("resynthesis is shift-equivariant by whole hops") {
  const auto x = sce::testing::white_noise(4096, 5);
  std::vector<double> shifted(128, 0.0);
  shifted.insert(shifted.end(), x.samples().begin(), x.samples().end());
  const AudioBuffer xs(shifted, 16000);

  auto flatten = [](SpectrumTrack t) {
    for (auto& f : t.frames) {
      std::fill(f.mag.begin(), f.mag.end(), 1.0);
      std::fill(f.phase.begin(), f.phase.end(), 0.0);
    }
    return istft(t);
  };
  // A constant frame resynthesizes to the same periodic pattern, so a
  // one-hop shift of the source shifts the output by one hop.
  const auto a = flatten(stft(x));
  const auto b = flatten(stft(xs));
  for (std::size_t i = 256; i + 256 < a.size(); ++i) {
    CHECK(b[i + 128] == doctest::Approx(a[i]).epsilon(1e-12));
  }
  const auto ra = istft(stft(x));
  const auto rb = istft(stft(xs));
  for (std::size_t i = 256; i + 256 < ra.size(); ++i) {
    CHECK(rb[i + 128] == doctest::Approx(ra[i]).epsilon(1e-9).scale(1.0));
  }
}

TEST_CASE("serial and parallel transforms are bit-identical") {
  const auto x = sce::testing::synth_speech(1.0, 4);
  const auto a = stft(x, {}, Exec::kSerial);
  const auto b = stft(x, {}, Exec::kParallel);
  CHECK(a == b);
  CHECK(istft(a, Exec::kSerial) == istft(a, Exec::kParallel));
}
