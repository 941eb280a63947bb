// scetool: batch front end for enhancement, mixing, noise generation,
// staircase simulation, GA fitting, estimator benchmarks and the session
// service. Every batch run writes a manifest (config with defaults filled
// in, input digests, summary results) that `scetool rerun` can replay.

#include <CLI11.hpp>
#include <httplib.h>

#include <algorithm>
#include <cmath>
#include <csignal>
#include <cstdio>
#include <fstream>
#include <iostream>
#include <limits>

#include "sce/audio.hpp"
#include "sce/enhance.hpp"
#include "sce/error.hpp"
#include "sce/ga.hpp"
#include "sce/json_io.hpp"
#include "sce/mixing.hpp"
#include "sce/protocols.hpp"
#include "sce/service.hpp"
#include "sce/snr.hpp"
#include "sce/stft.hpp"

using namespace sce;
namespace fs = std::filesystem;

namespace {

// JSON has no infinities; thresholds may legitimately be +-inf.
json num(double v) {
  if (std::isfinite(v)) return v;
  return v > 0 ? "inf" : "-inf";
}

double get_num(const json& j, const char* key, double fallback) {
  if (!j.contains(key)) return fallback;
  const auto& v = j.at(key);
  if (v.is_string()) return std::stod(v.get<std::string>());
  return v.get<double>();
}

fs::path with_suffix(const fs::path& out, const std::string& suffix) {
  return out.parent_path() / (out.stem().string() + suffix);
}

void ensure_parent(const fs::path& p) {
  if (p.has_parent_path()) fs::create_directories(p.parent_path());
}

void add_input(json& inputs, const std::string& name, const fs::path& path) {
  inputs[name] = {{"path", path.string()}, {"sha256", sha256_file(path)}};
}

void write_text(const fs::path& path, const std::string& text) {
  ensure_parent(path);
  std::ofstream out(path, std::ios::binary);
  if (!out || !(out << text)) throw IoError("cannot write " + path.string());
}

std::string csv_num(double v) {
  if (std::isnan(v)) return "nan";
  if (std::isinf(v)) return v > 0 ? "inf" : "-inf";
  char buf[32];
  std::snprintf(buf, sizeof buf, "%.6g", v);
  return buf;
}

// Frames whose target energy is within `range_db` of the loudest frame.
std::vector<bool> active_frames(const AudioBuffer& x, double range_db) {
  const auto t = stft(x);
  std::vector<double> e(t.size());
  double peak = -std::numeric_limits<double>::infinity();
  for (std::size_t f = 0; f < t.size(); ++f) {
    double a = 0.0;
    for (double v : t.frames[f].mag) a += v * v;
    e[f] = 10.0 * std::log10(a + 1e-30);
    peak = std::max(peak, e[f]);
  }
  std::vector<bool> out(t.size());
  for (std::size_t f = 0; f < t.size(); ++f) out[f] = e[f] >= peak - range_db;
  return out;
}

MixSpec mix_spec(const json& c) {
  MixSpec spec;
  spec.smr_db = c.value("smr_db", 0.0);
  spec.masker_lead_ms = c.value("lead_ms", 500.0);
  return spec;
}

// Each command takes a complete config and returns {inputs, results}.
struct RunOutput {
  json inputs = json::object();
  json results = json::object();
};

RunOutput run_enhance(const json& c) {
  RunOutput r;
  const bool stems = !c.value("clean", "").empty() || !c.value("masker", "").empty();
  const bool mixed = !c.value("mixture", "").empty();
  if (stems == mixed) {
    throw ValidationError("give either --clean and --masker, or --mixture");
  }
  if (stems && (c.value("clean", "").empty() || c.value("masker", "").empty())) {
    throw ValidationError("--clean and --masker go together");
  }
  if (c.value("params", "").empty()) throw ValidationError("--params is required");
  const fs::path out = c.at("out").get<std::string>();

  const auto params = read_params_file(c.at("params").get<std::string>());
  add_input(r.inputs, "params", c.at("params").get<std::string>());
  GateConfig gate{get_num(c, "gate_threshold_db", 0.0)};

  AudioBuffer mixture;
  SnrTrack snr;
  std::vector<bool> active;
  if (stems) {
    const fs::path cp = c.at("clean").get<std::string>(), mp = c.at("masker").get<std::string>();
    add_input(r.inputs, "clean", cp);
    add_input(r.inputs, "masker", mp);
    const auto mix = mix_at_smr(read_wav(cp), read_wav(mp), mix_spec(c));
    mixture = mix.mixture;
    snr = isnr_track(mix.target, mix.masker);
    active = active_frames(mix.target, 35.0);
    r.results["estimator"] = "isnr";
    r.results["masker_scale"] = mix.masker_scale;
  } else {
    const fs::path xp = c.at("mixture").get<std::string>();
    add_input(r.inputs, "mixture", xp);
    mixture = read_wav(xp);
    snr = esnr_track(mixture);
    active = active_frames(mixture, 35.0);
    r.results["estimator"] = "esnr";
  }

  const auto track = stft(mixture);
  const auto schedule = c.value("ungated", false)
                            ? std::vector<double>(track.size(), params.s)
                            : schedule_from_snr(snr, params, gate);
  const auto detailed = enhance_track_detailed(track, params, schedule);
  const auto y = istft(detailed.track);
  ensure_parent(out);
  write_wav(out, y);
  write_snr_csv(with_suffix(out, ".snr.csv"), snr);

  std::size_t on = 0, on_active = 0, n_active = 0;
  double gsum = 0.0, gabs = 0.0, gmin = 0.0, gmax = 0.0;
  std::size_t gn = 0;
  for (std::size_t f = 0; f < schedule.size(); ++f) {
    const bool gated_on = schedule[f] != 0.0;
    on += gated_on;
    if (active[f]) {
      ++n_active;
      on_active += gated_on;
    }
    if (!gated_on) continue;
    const auto& g = detailed.gain[f];
    for (std::size_t k = 1; k + 1 < g.size(); ++k) {
      const double v = std::clamp(schedule[f] * g[k], -20.0, 20.0);
      gsum += v;
      gabs += std::abs(v);
      gmin = gn ? std::min(gmin, v) : v;
      gmax = gn ? std::max(gmax, v) : v;
      ++gn;
    }
  }
  const double frames = static_cast<double>(schedule.size());
  json metrics{{"frames", schedule.size()},
               {"gated_frame_fraction", frames ? on / frames : 0.0},
               {"speech_active_frames", n_active},
               {"gated_frame_fraction_active", n_active ? double(on_active) / n_active : 0.0},
               {"applied_gain_db",
                {{"mean", gn ? gsum / gn : 0.0},
                 {"mean_abs", gn ? gabs / gn : 0.0},
                 {"min", gmin},
                 {"max", gmax}}}};
  write_json_file(with_suffix(out, ".metrics.json"), metrics);
  r.results["metrics"] = metrics;
  return r;
}

RunOutput run_mix(const json& c) {
  RunOutput r;
  const fs::path tp = c.at("target").get<std::string>(), mp = c.at("masker").get<std::string>();
  const fs::path out = c.at("out").get<std::string>();
  add_input(r.inputs, "target", tp);
  add_input(r.inputs, "masker", mp);
  auto spec = mix_spec(c);
  spec.allow_loop = c.value("loop", true);
  spec.crossfade_ms = c.value("crossfade_ms", 10.0);
  const auto mix = mix_at_smr(read_wav(tp), read_wav(mp), spec);
  ensure_parent(out);
  write_wav(out, mix.mixture);
  if (c.value("stems", false)) {
    write_wav(with_suffix(out, ".target.wav"), mix.target);
    write_wav(with_suffix(out, ".masker.wav"), mix.masker);
  }
  r.results = {{"masker_scale", mix.masker_scale},
               {"lead_samples", mix.lead_samples},
               {"lead_ms", spec.masker_lead_ms},
               {"smr_db", spec.smr_db},
               {"samples", mix.mixture.size()}};
  return r;
}

std::vector<fs::path> expand_wavs(const std::vector<std::string>& items) {
  std::vector<fs::path> out;
  for (const auto& item : items) {
    if (fs::is_directory(item)) {
      std::vector<fs::path> found;
      for (const auto& e : fs::directory_iterator(item)) {
        if (e.is_regular_file() && e.path().extension() == ".wav") found.push_back(e.path());
      }
      std::sort(found.begin(), found.end());
      out.insert(out.end(), found.begin(), found.end());
    } else {
      out.emplace_back(item);
    }
  }
  if (out.empty()) throw ValidationError("no corpus WAV files given");
  return out;
}

RunOutput run_ssn(const json& c) {
  RunOutput r;
  const fs::path out = c.at("out").get<std::string>();
  std::vector<AudioBuffer> corpus;
  json files = json::array();
  for (const auto& p : expand_wavs(c.at("corpus").get<std::vector<std::string>>())) {
    corpus.push_back(read_wav(p));
    files.push_back({{"path", p.string()}, {"sha256", sha256_file(p)}});
  }
  r.inputs["corpus"] = files;

  SsnOptions opt;
  opt.fft_size = c.value("fft_size", std::size_t{1024});
  opt.seed = c.value("seed", std::uint64_t{1});
  opt.rms = std::pow(10.0, c.value("rms_dbfs", -25.0) / 20.0);
  opt.refine_passes = c.value("refine_passes", 4);
  const auto noise = make_ssn(corpus, c.value("duration_s", 20.0), opt);
  ensure_parent(out);
  write_wav(out, noise);

  // Band-level match after removing the overall level difference.
  const int rate = corpus.front().sample_rate();
  const auto centers = third_octave_centers_200_to_5k();
  const auto want = third_octave_levels(long_term_spectrum(corpus, opt.fft_size), rate,
                                        opt.fft_size, centers);
  const std::vector<AudioBuffer> produced{noise};
  const auto got = third_octave_levels(long_term_spectrum(produced, opt.fft_size), rate,
                                       opt.fft_size, centers);
  double offset = 0.0;
  for (std::size_t i = 0; i < centers.size(); ++i) offset += got[i] - want[i];
  offset /= centers.size();
  std::string csv = "center_hz,corpus_db,noise_db,deviation_db\n";
  double worst = 0.0;
  for (std::size_t i = 0; i < centers.size(); ++i) {
    const double dev = got[i] - want[i] - offset;
    worst = std::max(worst, std::abs(dev));
    csv += csv_num(centers[i]) + "," + csv_num(want[i]) + "," + csv_num(got[i]) + "," +
           csv_num(dev) + "\n";
  }
  write_text(with_suffix(out, ".ltas.csv"), csv);
  r.results = {{"bands", centers.size()},
               {"max_abs_deviation_db", worst},
               {"within_2db", worst <= 2.0},
               {"rms_dbfs", 20.0 * std::log10(rms(noise.samples()))}};
  return r;
}

RunOutput run_srt_sim(const json& c) {
  RunOutput r;
  const fs::path out = c.at("out").get<std::string>();
  const double srt_true = c.at("srt_true_db").get<double>();
  const double slope = c.at("slope").get<double>();
  const int runs = c.value("runs", 100);
  const auto seed = c.value("seed", std::uint64_t{1});
  if (runs < 1) throw ValidationError("--runs must be at least 1");
  protocols::StaircaseConfig cfg;
  cfg.start_smr_db = c.value("start_smr_db", cfg.start_smr_db);
  cfg.turn_point_quota = c.value("turn_point_quota", 0);

  std::string runs_csv = "run,seed,srt_db,finished,exhausted,sentences,turn_points\n";
  std::string trace = "run,sentence,smr_db,correct,majority,turn_point\n";
  double sum = 0.0, sq = 0.0;
  int finished = 0;
  for (int i = 0; i < runs; ++i) {
    protocols::SimListener listener(srt_true, slope, seed + i);
    const auto run = protocols::run_staircase(listener, cfg);
    const auto& st = run.final_state;
    runs_csv += std::to_string(i) + "," + std::to_string(seed + i) + "," + csv_num(run.srt_db) +
                "," + std::to_string(st.finished) + "," + std::to_string(st.exhausted) + "," +
                std::to_string(run.trials.size()) + "," + std::to_string(st.reversal_smrs.size()) +
                "\n";
    for (const auto& t : run.trials) {
      trace += std::to_string(i) + "," + std::to_string(t.sentence) + "," + csv_num(t.smr_db) +
               "," + std::to_string(t.correct) + "," + std::to_string(t.majority) + "," +
               std::to_string(t.turn_point) + "\n";
    }
    if (!std::isnan(run.srt_db)) {
      ++finished;
      sum += run.srt_db - srt_true;
      sq += (run.srt_db - srt_true) * (run.srt_db - srt_true);
    }
  }
  write_text(out, runs_csv);
  write_text(with_suffix(out, ".trace.csv"), trace);
  const double bias = finished ? sum / finished : std::nan("");
  const double sd = finished > 1 ? std::sqrt((sq - finished * bias * bias) / (finished - 1)) : 0.0;
  r.results = {{"runs", runs},
               {"finished", finished},
               {"exhausted", runs - finished},
               {"bias_db", finished ? json(bias) : json()},
               {"sd_db", sd}};
  return r;
}

RunOutput run_ga_cmd(const json& c) {
  RunOutput r;
  const fs::path tp = c.at("target").get<std::string>(), mp = c.at("masker").get<std::string>();
  const fs::path out = c.at("out").get<std::string>();
  add_input(r.inputs, "target", tp);
  add_input(r.inputs, "masker", mp);
  const auto mix = mix_at_smr(read_wav(tp), read_wav(mp), mix_spec(c));
  ga::ObjectiveStimulus stim{mix.target, mix.masker, mix.mixture, !c.value("ungated", false),
                             GateConfig{get_num(c, "gate_threshold_db", 0.0)}, {}};
  const auto grid =
      c.value("fixed_history", false) ? ga::ParamGrid::fixed_history() : ga::ParamGrid::full();
  const auto cfg = ga_config_from_json(c.at("ga"));
  const auto result =
      ga::run_ga([&](const ga::Genome& g) { return ga::objective_fitness(stim, grid.params(g)); },
                 cfg, grid);

  json doc{{"best", to_json(result.best, grid)},
           {"converged", result.converged},
           {"generations", result.history.size()},
           {"history", history_json(result, grid)}};
  ensure_parent(out);
  write_json_file(out, doc);
  std::string csv = "generation,elite_score,mean_score,max_score\n";
  for (const auto& rec : result.history) {
    double mean = 0.0, best = -std::numeric_limits<double>::infinity();
    for (double s : rec.scores) {
      mean += s;
      best = std::max(best, s);
    }
    mean /= rec.scores.size();
    csv += std::to_string(rec.generation) + "," + csv_num(rec.elite_score) + "," +
           csv_num(mean) + "," + csv_num(best) + "\n";
  }
  write_text(with_suffix(out, ".convergence.csv"), csv);
  r.results = {{"best", to_json(result.best, grid)},
               {"best_score", result.history.empty() ? json() : json(result.history.back().elite_score)},
               {"converged", result.converged},
               {"generations", result.history.size()}};
  return r;
}

RunOutput run_snr_bench(const json& c) {
  RunOutput r;
  const fs::path mpath = c.at("manifest").get<std::string>();
  const fs::path out = c.at("out").get<std::string>();
  const auto estimator = c.value("estimator", std::string("esnr"));
  if (estimator != "esnr" && estimator != "isnr") {
    throw ValidationError("--estimator must be esnr or isnr");
  }
  const double threshold = get_num(c, "threshold_db", 0.0);
  const double lo = c.value("isnr_min_db", -10.0), hi = c.value("isnr_max_db", 10.0);
  const double activity = c.value("activity_db", 35.0);
  add_input(r.inputs, "manifest", mpath);

  std::string csv = "item,frame,time_s,isnr_db,estimate_db,included\n";
  std::vector<double> xs, ys;
  json items = json::array();
  const auto entries = read_stimulus_manifest(mpath);
  for (std::size_t i = 0; i < entries.size(); ++i) {
    const auto& e = entries[i];
    items.push_back({{"target", e.target_path},
                     {"target_sha256", sha256_file(e.target_path)},
                     {"masker", e.masker_path},
                     {"masker_sha256", sha256_file(e.masker_path)}});
    MixSpec spec;
    spec.smr_db = e.smr_db;
    spec.masker_lead_ms = e.lead_ms;
    const auto mix = mix_at_smr(read_wav(e.target_path), read_wav(e.masker_path), spec);
    const auto ideal = isnr_track(mix.target, mix.masker);
    const auto est = estimator == "isnr" ? ideal : esnr_track(mix.mixture);
    const auto active = active_frames(mix.target, activity);
    for (std::size_t f = 0; f < ideal.size(); ++f) {
      const double x = ideal.snr_db[f], y = est.snr_db[f];
      const bool used = active[f] && x >= lo && x <= hi;
      if (used) {
        xs.push_back(x);
        ys.push_back(y);
      }
      csv += std::to_string(i) + "," + std::to_string(f) + "," + csv_num(ideal.frame_time_s(f)) +
             "," + csv_num(x) + "," + csv_num(y) + "," + (used ? "1" : "0") + "\n";
    }
  }
  r.inputs["stimuli"] = items;
  write_text(out, csv);

  const std::size_t n = xs.size();
  if (n < 2) throw InsufficientDataError("fewer than two frames in the iSNR range");
  double mx = 0.0, my = 0.0;
  for (std::size_t i = 0; i < n; ++i) {
    mx += xs[i];
    my += ys[i];
  }
  mx /= n;
  my /= n;
  double sxy = 0.0, sxx = 0.0, syy = 0.0, mae = 0.0;
  std::size_t same = 0;
  for (std::size_t i = 0; i < n; ++i) {
    sxy += (xs[i] - mx) * (ys[i] - my);
    sxx += (xs[i] - mx) * (xs[i] - mx);
    syy += (ys[i] - my) * (ys[i] - my);
    mae += std::abs(xs[i] - ys[i]);
    same += (xs[i] >= threshold) == (ys[i] >= threshold);
  }
  r.results = {{"frames", n},
               {"correlation", sxx > 0 && syy > 0 ? json(sxy / std::sqrt(sxx * syy)) : json()},
               {"mean_abs_error_db", mae / n},
               {"gate_agreement", double(same) / n}};
  return r;
}

RunOutput dispatch(const std::string& command, const json& config) {
  if (command == "enhance") return run_enhance(config);
  if (command == "mix") return run_mix(config);
  if (command == "ssn") return run_ssn(config);
  if (command == "srt-sim") return run_srt_sim(config);
  if (command == "ga") return run_ga_cmd(config);
  if (command == "snr-bench") return run_snr_bench(config);
  throw ValidationError("unknown command in manifest: " + command);
}

void run_and_record(const std::string& command, const json& config, fs::path manifest) {
  const auto out = dispatch(command, config);
  if (manifest.empty()) manifest = with_suffix(config.at("out").get<std::string>(), ".manifest.json");
  json doc{{"tool", "scetool"},
           {"version", service::version()},
           {"command", command},
           {"config", config},
           {"inputs", out.inputs},
           {"results", out.results}};
  write_json_file(manifest, doc);
  std::cout << doc.dump(2) << '\n';
}

httplib::Server* g_server = nullptr;

void on_signal(int) {
  if (g_server) g_server->stop();
}

int serve(const std::string& host, int port, const std::string& stimulus_dir,
          const std::string& log_dir, int expiry_s) {
  if (!fs::is_directory(stimulus_dir)) throw IoError("no such directory: " + stimulus_dir);
  service::ServiceConfig cfg;
  cfg.stimulus_dir = stimulus_dir;
  cfg.log_dir = log_dir;
  cfg.expiry = std::chrono::seconds(expiry_s);
  service::SessionService svc(cfg);
  httplib::Server server;
  // No SO_REUSEPORT: a second server on the same port must fail to bind.
  server.set_socket_options([](socket_t sock) {
    int yes = 1;
    setsockopt(sock, SOL_SOCKET, SO_REUSEADDR, &yes, sizeof yes);
  });
  service::mount(server, svc);
  if (!server.bind_to_port(host, port)) {
    throw IoError("cannot bind " + host + ":" + std::to_string(port));
  }
  g_server = &server;
  std::signal(SIGINT, on_signal);
  std::signal(SIGTERM, on_signal);
  std::cerr << "serving on " << host << ":" << port << " (version " << service::version() << ")\n";
  server.listen_after_bind();
  return 0;
}

int exit_code(const Error& e) { return e.kind() == ErrorKind::kIo ? 2 : 1; }

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Spectral-change enhancement toolkit"};
  app.set_version_flag("--version", service::version());
  app.require_subcommand(1);

  std::string command;
  json config;
  std::string manifest;

  // enhance
  auto* enh = app.add_subcommand("enhance", "Enhance a mixture (SNR-gated spectral change)");
  struct {
    std::string clean, masker, mixture, params, out = "enhanced.wav", gate = "0";
    double smr = 0.0, lead = 500.0;
    bool ungated = false;
  } e;
  enh->add_option("--clean", e.clean, "Clean target WAV (ideal-SNR gating)");
  enh->add_option("--masker", e.masker, "Masker WAV (ideal-SNR gating)");
  enh->add_option("--mixture", e.mixture, "Premixed WAV (estimated-SNR gating)");
  enh->add_option("--smr", e.smr, "Speech-to-masker ratio for --clean/--masker, dB")->capture_default_str();
  enh->add_option("--lead-ms", e.lead, "Masker lead before the target, ms")->capture_default_str();
  enh->add_option("--params", e.params, "Parameter JSON {b, xi, m, s}");
  enh->add_option("--gate-threshold", e.gate, "Gate threshold T, dB (accepts inf)")->capture_default_str();
  enh->add_flag("--ungated", e.ungated, "Apply enhancement on every frame");
  enh->add_option("-o,--out", e.out, "Output WAV")->capture_default_str();
  enh->add_option("--manifest", manifest, "Manifest path (default <out>.manifest.json)");
  enh->callback([&] {
    command = "enhance";
    config = {{"clean", e.clean},       {"masker", e.masker},
              {"mixture", e.mixture},   {"params", e.params},
              {"smr_db", e.smr},        {"lead_ms", e.lead},
              {"gate_threshold_db", num(std::stod(e.gate))},
              {"ungated", e.ungated},   {"out", e.out}};
  });

  // mix
  auto* mix = app.add_subcommand("mix", "Mix a target and masker at a given SMR");
  struct {
    std::string target, masker, out = "mixture.wav";
    double smr = 0.0, lead = 500.0, crossfade = 10.0;
    bool no_loop = false, stems = false;
  } m;
  mix->add_option("--target", m.target, "Target WAV")->required();
  mix->add_option("--masker", m.masker, "Masker WAV")->required();
  mix->add_option("--smr", m.smr, "Speech-to-masker ratio, dB")->capture_default_str();
  mix->add_option("--lead-ms", m.lead, "Masker lead, ms")->capture_default_str();
  mix->add_option("--crossfade-ms", m.crossfade, "Loop crossfade, ms")->capture_default_str();
  mix->add_flag("--no-loop", m.no_loop, "Fail instead of looping a short masker");
  mix->add_flag("--stems", m.stems, "Also write the aligned target and scaled masker");
  mix->add_option("-o,--out", m.out, "Output WAV")->capture_default_str();
  mix->add_option("--manifest", manifest, "Manifest path");
  mix->callback([&] {
    command = "mix";
    config = {{"target", m.target},      {"masker", m.masker},     {"smr_db", m.smr},
              {"lead_ms", m.lead},       {"crossfade_ms", m.crossfade},
              {"loop", !m.no_loop},      {"stems", m.stems},       {"out", m.out}};
  });

  // ssn
  auto* ssn = app.add_subcommand("ssn", "Speech-shaped noise from a corpus");
  struct {
    std::vector<std::string> corpus;
    std::string out = "ssn.wav";
    double duration = 20.0, rms_dbfs = -25.0;
    std::uint64_t seed = 1;
    std::size_t fft = 1024;
    int passes = 4;
  } s;
  ssn->add_option("corpus", s.corpus, "WAV files or directories")->required();
  ssn->add_option("--duration", s.duration, "Seconds")->capture_default_str();
  ssn->add_option("--rms-dbfs", s.rms_dbfs, "Output RMS, dBFS")->capture_default_str();
  ssn->add_option("--seed", s.seed)->capture_default_str();
  ssn->add_option("--fft-size", s.fft)->capture_default_str();
  ssn->add_option("--refine-passes", s.passes)->capture_default_str();
  ssn->add_option("-o,--out", s.out, "Output WAV")->capture_default_str();
  ssn->add_option("--manifest", manifest, "Manifest path");
  ssn->callback([&] {
    command = "ssn";
    config = {{"corpus", s.corpus},   {"duration_s", s.duration}, {"rms_dbfs", s.rms_dbfs},
              {"seed", s.seed},       {"fft_size", s.fft},        {"refine_passes", s.passes},
              {"out", s.out}};
  });

  // srt-sim
  auto* srt = app.add_subcommand("srt-sim", "Simulate adaptive SRT staircases");
  struct {
    double srt_true = 0.0, slope = 1.0, start = 10.0;
    int runs = 100, quota = 0;
    std::uint64_t seed = 1;
    std::string out = "srt_runs.csv";
  } t;
  srt->add_option("--srt-true", t.srt_true, "Listener SRT, dB")->required();
  srt->add_option("--slope", t.slope, "Psychometric slope, 1/dB")->required();
  srt->add_option("--runs", t.runs)->capture_default_str();
  srt->add_option("--seed", t.seed, "Seed of run 0; run i uses seed + i")->capture_default_str();
  srt->add_option("--start-smr", t.start, "Starting SMR, dB")->capture_default_str();
  srt->add_option("--turn-point-quota", t.quota, "Stop early after this many final-step turn points (0 = off)")
      ->capture_default_str();
  srt->add_option("-o,--out", t.out, "Per-run CSV")->capture_default_str();
  srt->add_option("--manifest", manifest, "Manifest path");
  srt->callback([&] {
    command = "srt-sim";
    config = {{"srt_true_db", t.srt_true}, {"slope", t.slope},        {"runs", t.runs},
              {"seed", t.seed},           {"start_smr_db", t.start},  {"turn_point_quota", t.quota},
              {"out", t.out}};
  });

  // ga
  auto* gac = app.add_subcommand("ga", "Objective GA fit of the enhancement parameters");
  struct {
    std::string target, masker, out = "ga.json", gate = "0";
    double smr = 0.0, lead = 500.0;
    bool fixed_history = false, ungated = false;
    ga::GaConfig cfg;
  } g;
  gac->add_option("--target", g.target, "Clean target WAV")->required();
  gac->add_option("--masker", g.masker, "Masker WAV")->required();
  gac->add_option("--smr", g.smr)->capture_default_str();
  gac->add_option("--lead-ms", g.lead)->capture_default_str();
  gac->add_option("--gate-threshold", g.gate)->capture_default_str();
  gac->add_flag("--ungated", g.ungated);
  gac->add_flag("--fixed-history", g.fixed_history, "Fix xi = 0.9 and m = 5");
  gac->add_option("--population", g.cfg.population_size)->capture_default_str();
  gac->add_option("--elite", g.cfg.elite_count)->capture_default_str();
  gac->add_option("--mutation", g.cfg.mutation_rate)->capture_default_str();
  gac->add_option("--max-generations", g.cfg.max_generations)->capture_default_str();
  gac->add_option("--patience", g.cfg.convergence_patience)->capture_default_str();
  gac->add_option("--seed", g.cfg.seed)->capture_default_str();
  gac->add_option("-o,--out", g.out, "Result JSON")->capture_default_str();
  gac->add_option("--manifest", manifest, "Manifest path");
  gac->callback([&] {
    command = "ga";
    config = {{"target", g.target},
              {"masker", g.masker},
              {"smr_db", g.smr},
              {"lead_ms", g.lead},
              {"gate_threshold_db", num(std::stod(g.gate))},
              {"ungated", g.ungated},
              {"fixed_history", g.fixed_history},
              {"ga", to_json(g.cfg)},
              {"out", g.out}};
  });

  // snr-bench
  auto* bench = app.add_subcommand("snr-bench", "Compare an SNR estimator with the ideal SNR");
  struct {
    std::string manifest_in, estimator = "esnr", out = "snr_bench.csv", threshold = "0";
    double lo = -10.0, hi = 10.0, activity = 35.0;
  } b;
  bench->add_option("stimuli", b.manifest_in, "Stimulus manifest JSON")->required();
  bench->add_option("--estimator", b.estimator, "esnr or isnr")->capture_default_str();
  bench->add_option("--threshold", b.threshold, "Gate threshold for agreement, dB")->capture_default_str();
  bench->add_option("--isnr-min", b.lo)->capture_default_str();
  bench->add_option("--isnr-max", b.hi)->capture_default_str();
  bench->add_option("--activity-db", b.activity, "Frames within this range of the loudest count")
      ->capture_default_str();
  bench->add_option("-o,--out", b.out, "Per-frame CSV")->capture_default_str();
  bench->add_option("--manifest", manifest, "Manifest path");
  bench->callback([&] {
    command = "snr-bench";
    config = {{"manifest", b.manifest_in}, {"estimator", b.estimator},
              {"threshold_db", num(std::stod(b.threshold))},
              {"isnr_min_db", b.lo},      {"isnr_max_db", b.hi},
              {"activity_db", b.activity}, {"out", b.out}};
  });

  // rerun
  auto* rerun = app.add_subcommand("rerun", "Replay a run from its manifest");
  std::string rerun_path, rerun_out;
  rerun->add_option("source", rerun_path, "Manifest JSON of the run to replay")->required();
  rerun->add_option("-o,--out", rerun_out, "Override the main output path");
  rerun->add_option("--manifest", manifest, "Manifest path for the replay");
  rerun->callback([&] { command = "rerun"; });

  // serve
  auto* srv = app.add_subcommand("serve", "Run the listening-session HTTP service");
  struct {
    std::string host = "127.0.0.1", stimulus_dir, log_dir = "session_logs";
    int port = 8080, expiry = 7200;
  } v;
  srv->add_option("--port", v.port)->capture_default_str();
  srv->add_option("--host", v.host)->capture_default_str();
  srv->add_option("--stimulus-dir", v.stimulus_dir, "WAV files referenced by sessions")->required();
  srv->add_option("--log-dir", v.log_dir, "Per-session JSON-lines logs")->capture_default_str();
  srv->add_option("--expiry-s", v.expiry, "Idle session expiry, seconds")->capture_default_str();
  srv->callback([&] { command = "serve"; });

  try {
    app.parse(argc, argv);
  } catch (const CLI::Success& ex) {
    return app.exit(ex);
  } catch (const CLI::ParseError& ex) {
    app.exit(ex);
    return 1;
  } catch (const std::invalid_argument&) {
    std::cerr << "error: threshold must be a number or inf\n";
    return 1;
  }

  try {
    if (command == "serve") return serve(v.host, v.port, v.stimulus_dir, v.log_dir, v.expiry);
    if (command == "rerun") {
      const auto doc = read_json_file(rerun_path);
      if (!doc.contains("command") || !doc.contains("config")) {
        throw ValidationError("not a scetool manifest: " + rerun_path);
      }
      auto cfg = doc.at("config");
      if (!rerun_out.empty()) cfg["out"] = rerun_out;
      run_and_record(doc.at("command").get<std::string>(), cfg, manifest);
      return 0;
    }
    run_and_record(command, config, manifest);
  } catch (const Error& ex) {
    std::cerr << "error: " << ex.what() << '\n';
    return exit_code(ex);
  } catch (const json::exception& ex) {
    std::cerr << "error: bad configuration: " << ex.what() << '\n';
    return 1;
  } catch (const fs::filesystem_error& ex) {
    std::cerr << "error: " << ex.what() << '\n';
    return 2;
  }
  return 0;
}
