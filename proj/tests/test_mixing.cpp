#include <doctest.h>

#include <cmath>

#include "sce/error.hpp"
#include "sce/mixing.hpp"
#include "support/stimuli.hpp"

using namespace sce;

namespace {

AudioBuffer unit_rms(AudioBuffer x) {
  const double r = rms(x.samples());
  for (double& v : x.data()) v /= r;
  return x;
}

std::vector<double> band_levels(const AudioBuffer& x) {
  const AudioBuffer one[] = {x};
  return third_octave_levels(long_term_spectrum(one), 16000, 1024,
                             third_octave_centers_200_to_5k());
}

}  // namespace

TEST_CASE("mix at 0 dB of unit-RMS stems keeps the masker scale at 1") {
  const auto t = unit_rms(sce::testing::white_noise(16000, 1));
  const auto m = unit_rms(sce::testing::white_noise(24000, 2));
  const auto r = mix_at_smr(t, m, {0.0, 500.0, true, 10.0});
  CHECK(r.lead_samples == 8000);
  CHECK(rms(r.masker.samples().subspan(8000)) == doctest::Approx(1.0).epsilon(1e-12));
  // the masker's RMS over the overlap is 1 by construction
  CHECK(r.masker_scale == doctest::Approx(1.0 / rms(m.samples().subspan(8000))));
}

TEST_CASE("mix layout and exact additivity") {
  const auto t = sce::testing::synth_speech(1.0, 4);
  const auto m = sce::testing::white_noise(12000, 5, 0.3);  // shorter than needed
  for (double smr : {-10.0, -3.0, 0.0, 7.5}) {
    const auto r = mix_at_smr(t, m, {smr});
    REQUIRE(r.mixture.size() == t.size() + 8000);
    CHECK(r.target.size() == r.mixture.size());
    CHECK(r.masker.size() == r.mixture.size());
    for (std::size_t i = 0; i < 8000; ++i) REQUIRE(r.target[i] == 0.0);
    CHECK(r.target[8000] == t[0]);
    for (std::size_t i = 0; i < r.mixture.size(); ++i) {
      REQUIRE(r.mixture[i] == r.target[i] + r.masker[i]);
    }
    const double measured = 20.0 * std::log10(rms(t.samples()) /
                                              rms(r.masker.samples().subspan(8000)));
    CHECK(std::abs(measured - smr) < 0.01);
  }
}

TEST_CASE("mix errors") {
  const auto t = sce::testing::white_noise(16000, 1);
  const auto m = sce::testing::white_noise(1000, 2);
  MixSpec no_loop{0.0};
  no_loop.allow_loop = false;
  CHECK_THROWS_AS(mix_at_smr(t, m, no_loop), ValidationError);
  CHECK_THROWS_AS(mix_at_smr(t, m, {0.0, -1.0}), ValidationError);
  CHECK_THROWS_AS(mix_at_smr(t, AudioBuffer(m.data(), 8000), {0.0}), AlignmentError);
}

TEST_CASE("looping keeps level continuous") {
  const auto m = sce::testing::white_noise(3000, 6, 0.1);
  const auto l = loop_to_length(m, 20000, 10.0);
  CHECK(l.size() == 20000);
  for (std::size_t i = 0; i < 3000 - 160; ++i) REQUIRE(l[i] == m[i]);
  CHECK(rms(l.samples()) == doctest::Approx(0.1).epsilon(0.1));
}

TEST_CASE("shaped noise from a white corpus is flat") {
  const AudioBuffer corpus[] = {sce::testing::white_noise(16000 * 4, 10, 0.1)};
  const auto ssn = make_ssn(corpus, 8.0);
  CHECK(ssn.size() == 16000 * 8);
  CHECK(20.0 * std::log10(rms(ssn.samples())) == doctest::Approx(-25.0).epsilon(1e-6));
  const auto lv = band_levels(ssn);
  // Flat spectrum: band level grows with bandwidth, so compare density.
  const auto centers = third_octave_centers_200_to_5k();
  std::vector<double> density(lv.size());
  for (std::size_t i = 0; i < lv.size(); ++i) {
    density[i] = lv[i] - 10.0 * std::log10(centers[i] * (std::pow(2.0, 1.0 / 6) - std::pow(2.0, -1.0 / 6)));
  }
  for (double d : density) CHECK(std::abs(d - density[density.size() / 2]) < 2.0);
}

TEST_CASE("shaped noise from a tone concentrates at the tone") {
  const AudioBuffer corpus[] = {sce::testing::sine(1000.0, 16000 * 2, 0.5)};
  const auto lv = band_levels(make_ssn(corpus, 4.0));
  const auto centers = third_octave_centers_200_to_5k();
  const auto peak = std::max_element(lv.begin(), lv.end()) - lv.begin();
  CHECK(centers[peak] == 1000.0);
}

TEST_CASE("shaped noise follows a speech corpus") {
  std::vector<AudioBuffer> corpus;
  for (std::uint64_t s = 1; s <= 4; ++s) corpus.push_back(sce::testing::synth_speech(3.0, s));
  const auto ssn = make_ssn(corpus, 10.0);
  const auto centers = third_octave_centers_200_to_5k();
  const auto want = third_octave_levels(long_term_spectrum(corpus), 16000, 1024, centers);
  const auto got = band_levels(ssn);
  // Compare shapes: the absolute level is set by the RMS normalization.
  double total_want = 0.0, total_got = 0.0;
  for (std::size_t i = 0; i < want.size(); ++i) {
    total_want += std::pow(10.0, want[i] / 10.0);
    total_got += std::pow(10.0, got[i] / 10.0);
  }
  const double norm = 10.0 * std::log10(total_got / total_want);
  for (std::size_t i = 0; i < want.size(); ++i) {
    CHECK(std::abs(got[i] - want[i] - norm) < 2.0);
  }
  CHECK_THROWS_AS(make_ssn({}, 1.0), ValidationError);
}

TEST_CASE("level calibration") {
  const LevelCalibration cal;
  CHECK(cal.dbfs_for_spl(65.0) == -25.0);
  CHECK(cal.dbfs_for_spl(70.0) == -20.0);
  const auto x = scale_to_dbfs(sce::testing::white_noise(8000, 1), -30.0);
  CHECK(20.0 * std::log10(rms(x.samples())) == doctest::Approx(-30.0));
}
