#include "sce/service.hpp"

#include <httplib.h>

#include <algorithm>
#include <ctime>
#include <fstream>
#include <optional>

#include "sce/error.hpp"
#include "sce/ga.hpp"
#include "sce/json_io.hpp"
#include "sce/mixing.hpp"
#include "sce/protocols.hpp"
#include "sce/snr.hpp"

#ifndef SCE_VERSION
#define SCE_VERSION "0.0.0"
#endif

namespace sce::service {

std::string version() { return SCE_VERSION; }

namespace {

const char* const kClarityPrompt = "Which sentence of the intervals is the best of clarity?";
const char* const kGaPrompt = "Which sentence is easier to understand?";
const char* const kMushraPrompt = "Rate each sentence against the reference (0-100).";

Reply error(int status, const std::string& message) {
  return {status, json{{"error", message}}};
}

std::string iso_time(Clock::time_point t) {
  const std::time_t tt = Clock::to_time_t(t);
  std::tm tm{};
  gmtime_r(&tt, &tm);
  char buf[32];
  std::strftime(buf, sizeof buf, "%Y-%m-%dT%H:%M:%SZ", &tm);
  return buf;
}

// File names in session configs are relative to the stimulus directory and
// may not escape it.
std::filesystem::path stimulus_file(const ServiceConfig& cfg, const std::string& name) {
  const std::filesystem::path p(name);
  if (name.empty() || p.is_absolute()) throw ValidationError("bad stimulus name: " + name);
  for (const auto& part : p) {
    if (part == "..") throw ValidationError("bad stimulus name: " + name);
  }
  const auto full = cfg.stimulus_dir / p;
  if (!std::filesystem::is_regular_file(full)) {
    throw ValidationError("unknown stimulus file: " + name);
  }
  return full;
}

enum class State { kCreated, kAwaiting, kProcessing, kFinished };

const char* state_name(State s) {
  switch (s) {
    case State::kCreated: return "created";
    case State::kAwaiting: return "awaiting_response";
    case State::kProcessing: return "processing";
    case State::kFinished: return "finished";
  }
  return "unknown";
}

bool valid_choice(const json& answer, int n) {
  return answer.is_object() && answer.contains("choice") &&
         answer.at("choice").is_number_integer() && answer.at("choice").get<int>() >= 0 &&
         answer.at("choice").get<int>() < n;
}

// Processing applied to one interval of a multi-interval trial.
AudioBuffer render_processing(const std::string& type, const MixResult& mix,
                              const SceParams& params) {
  const auto track = stft(mix.mixture);
  std::vector<double> schedule;
  if (type == "unprocessed") {
    return istft(track);
  } else if (type == "sce") {
    schedule.assign(track.size(), params.s);
  } else if (type == "sce_isnr") {
    schedule = schedule_from_snr(isnr_track(mix.target, mix.masker), params);
  } else if (type == "sce_esnr") {
    schedule = schedule_from_snr(esnr_track(mix.mixture), params);
  } else if (type == protocols::kHiddenReference) {
    return mix.target;
  } else if (type == protocols::kAnchor) {
    // Mixture low-passed at 3.5 kHz.
    const auto freqs = bin_frequencies({}, mix.mixture.sample_rate());
    std::vector<double> gain(freqs.size());
    for (std::size_t k = 0; k < gain.size(); ++k) gain[k] = freqs[k] > 3500.0 ? -80.0 : 0.0;
    return apply_linear_gain(mix.mixture, gain);
  } else {
    throw ValidationError("unknown processing type: " + type);
  }
  return istft(enhance_track(track, params, schedule));
}

}  // namespace

// One interactive session. Subclasses supply the trial content; the base
// class owns sequencing, idempotency and the response log.
class Session {
 public:
  Session(std::string id, std::string kind, SessionService& owner)
      : id_(std::move(id)), kind_(std::move(kind)), owner_(owner) {}
  virtual ~Session() = default;

  std::mutex mutex;

  const std::string& id() const { return id_; }
  const std::string& kind() const { return kind_; }
  State state() const { return state_; }

  void touch(Clock::time_point t) { last_active_ = t; }
  bool expire_if_idle(Clock::time_point t, std::chrono::seconds limit) {
    if (state_ == State::kFinished || t - last_active_ <= limit) return false;
    abandon();
    abandoned_ = true;
    outstanding_.reset();
    state_ = State::kFinished;
    return true;
  }
  bool abandoned() const { return abandoned_; }

  Reply trial() {
    if (state_ == State::kFinished) return {200, json{{"state", "finished"}}};
    if (!outstanding_) issue();
    if (!outstanding_) return {200, json{{"state", "finished"}}};
    return {200, *outstanding_};
  }

  Reply respond(const json& request, Clock::time_point now) {
    if (!request.is_object() || !request.contains("trial_id") ||
        !request.at("trial_id").is_string() || !request.contains("answer")) {
      return error(422, "response needs trial_id and answer");
    }
    const auto trial_id = request.at("trial_id").get<std::string>();
    const auto& answer = request.at("answer");
    if (auto it = answered_.find(trial_id); it != answered_.end()) {
      if (it->second.first == answer) return {200, it->second.second};
      return error(409, "trial " + trial_id + " was already answered differently");
    }
    if (abandoned_) return error(409, "session timeout");
    if (!outstanding_ || outstanding_->at("trial_id") != trial_id) {
      return error(409, "stale trial_id " + trial_id);
    }
    if (auto problem = check_answer(answer)) return error(422, *problem);

    state_ = State::kProcessing;
    const json trial = *outstanding_;
    outstanding_.reset();
    apply(answer);
    log(trial, answer, now);
    ++answered_count_;
    if (has_next()) issue();
    if (!outstanding_) state_ = State::kFinished;

    json ack{{"accepted", true},
             {"trial_id", trial_id},
             {"answered", answered_count_},
             {"state", state_name(state_)}};
    if (outstanding_) ack["next_trial_id"] = outstanding_->at("trial_id");
    answered_.emplace(trial_id, std::make_pair(answer, ack));
    return {200, ack};
  }

  Reply results() {
    json body = summary();
    body["id"] = id_;
    body["kind"] = kind_;
    body["state"] = state_name(state_);
    body["answered"] = answered_count_;
    body["abandoned"] = abandoned_;
    return {200, body};
  }

  json describe() const {
    return json{{"id", id_}, {"kind", kind_}, {"state", state_name(state_)}};
  }

 protected:
  virtual bool has_next() const = 0;
  // Trial content without trial_id / state fields.
  virtual json next_trial() = 0;
  virtual std::optional<std::string> check_answer(const json& answer) const = 0;
  virtual void apply(const json& answer) = 0;
  virtual json summary() const = 0;
  virtual void abandon() {}

  std::string stimulus_url(const AudioBuffer& audio) {
    return "/stimuli/" + owner_.store_stimulus(encode_wav(audio));
  }

 private:
  void issue() {
    if (!has_next()) return;
    state_ = State::kProcessing;
    json t = next_trial();
    t["trial_id"] = "t" + std::to_string(++issued_);
    t["session_id"] = id_;
    t["state"] = state_name(State::kAwaiting);
    outstanding_ = std::move(t);
    state_ = State::kAwaiting;
  }

  void log(const json& trial, const json& answer, Clock::time_point now) {
    const auto& dir = owner_.config().log_dir;
    if (dir.empty()) return;
    json rec{{"timestamp", iso_time(now)},
             {"session_id", id_},
             {"trial_id", trial.at("trial_id")},
             {"condition", trial.value("condition", json())},
             {"stimuli", trial.at("stimuli")},
             {"response", answer}};
    std::ofstream out(dir / (id_ + ".jsonl"), std::ios::app);
    if (!out) throw IoError("cannot append to session log");
    out << rec.dump() << '\n';
  }

  std::string id_;
  std::string kind_;
  SessionService& owner_;
  State state_ = State::kCreated;
  std::optional<json> outstanding_;
  std::map<std::string, std::pair<json, json>> answered_;  // trial_id -> (answer, ack)
  int issued_ = 0;
  int answered_count_ = 0;
  bool abandoned_ = false;
  Clock::time_point last_active_{};
};

namespace {

MixResult load_and_mix(const ServiceConfig& cfg, const std::string& target,
                       const std::string& masker, double smr_db, double lead_ms) {
  const auto t = read_wav(stimulus_file(cfg, target));
  const auto m = read_wav(stimulus_file(cfg, masker));
  MixSpec spec;
  spec.smr_db = smr_db;
  spec.masker_lead_ms = lead_ms;
  return mix_at_smr(t, m, spec);
}

class GaSession final : public Session {
 public:
  GaSession(std::string id, SessionService& owner, const json& c)
      : Session(std::move(id), "ga_fit", owner),
        grid_(c.value("fixed_history", false) ? ga::ParamGrid::fixed_history()
                                              : ga::ParamGrid::full()),
        driver_(ga_config_from_json(c.value("ga", json::object())), grid_,
                ga::FitnessMode::kPaired),
        reveal_(c.value("reveal_params", false)) {
    if (!c.contains("target") || !c.contains("masker")) {
      throw ValidationError("ga_fit needs target and masker");
    }
    const auto mix = load_and_mix(owner.config(), c.at("target").get<std::string>(),
                                  c.at("masker").get<std::string>(), c.value("smr_db", 0.0),
                                  c.value("lead_ms", 500.0));
    stim_.clean = mix.target;
    stim_.masker = mix.masker;
    stim_.mixture = mix.mixture;
    stim_.gated = c.value("gated", true);
    stim_.gate.threshold_db = c.value("threshold_db", 0.0);
  }

 protected:
  bool has_next() const override { return driver_.next_pair().has_value(); }

  json next_trial() override {
    const auto pair = *driver_.next_pair();
    const auto& pop = driver_.population();
    const ga::Genome g[2] = {pop[pair.first], pop[pair.second]};
    json t{{"schema", "pick_one_of_2"},
           {"prompt", kGaPrompt},
           {"isi_ms", 500.0},
           {"generation", pair.generation},
           {"pair_index", pair.pair_index},
           {"pairs_in_generation", driver_.pairs_in_generation()},
           {"stimuli", json::array({url_for(g[0]), url_for(g[1])})}};
    if (reveal_) t["params"] = json::array({to_json(g[0], grid_), to_json(g[1], grid_)});
    return t;
  }

  std::optional<std::string> check_answer(const json& answer) const override {
    if (!valid_choice(answer, 2)) return "answer must be {\"choice\": 0 or 1}";
    return std::nullopt;
  }

  void apply(const json& answer) override { driver_.submit_pair(answer.at("choice").get<int>()); }

  void abandon() override { driver_.abandon(); }

  json summary() const override {
    const auto r = driver_.result();
    json body{{"generation", driver_.generation()},
              {"converged", r.converged},
              {"history", history_json(r, grid_)}};
    if (!r.history.empty()) body["best"] = to_json(r.best, grid_);
    return body;
  }

 private:
  std::string url_for(const ga::Genome& g) {
    if (auto it = rendered_.find(g); it != rendered_.end()) return it->second;
    const auto url = stimulus_url(ga::process_condition(stim_, grid_.params(g)));
    rendered_.emplace(g, url);
    return url;
  }

  ga::ParamGrid grid_;
  ga::GaDriver driver_;
  ga::ObjectiveStimulus stim_;
  bool reveal_;
  std::map<ga::Genome, std::string> rendered_;
};

// Clarity preference and MUSHRA share the scheduled multi-interval layout.
class PlanSession final : public Session {
 public:
  PlanSession(std::string id, SessionService& owner, const json& c, protocols::TaskKind task)
      : Session(std::move(id), task == protocols::TaskKind::kMushra ? "mushra" : "clarity",
                owner),
        cfg_(owner.config()) {
    plan_.task = task;
    if (c.contains("params")) params_ = params_from_json(c.at("params"));
    lead_ms_ = c.value("lead_ms", 500.0);
    plan_.processing_types =
        c.value("processing_types", std::vector<std::string>{"unprocessed", "sce", "sce_isnr"});
    if (task == protocols::TaskKind::kClarityPreference && plan_.processing_types.size() != 3) {
      throw ValidationError("clarity sessions compare exactly 3 processing types");
    }
    if (!c.contains("conditions") || !c.at("conditions").is_array()) {
      throw ValidationError("session needs a conditions list");
    }
    for (const auto& cond : c.at("conditions")) {
      protocols::Condition k;
      k.label = cond.at("label").get<std::string>();
      k.masker = cond.at("masker").get<std::string>();
      k.smr_db = cond.value("smr_db", 0.0);
      stimulus_file(cfg_, k.masker);
      plan_.conditions.push_back(k);
    }
    plan_.sentences = c.at("sentences").get<std::vector<std::vector<std::string>>>();
    // Fail at creation rather than mid-session on unusable sentence files.
    for (const auto& list : plan_.sentences) {
      for (const auto& s : list) {
        const auto audio = read_wav(stimulus_file(cfg_, s));
        const auto x = audio.samples();
        if (std::all_of(x.begin(), x.end(), [](double v) { return v == 0.0; })) {
          throw ValidationError("silent sentence file: " + s);
        }
      }
    }
    plan_.sentences_per_condition = c.value("sentences_per_condition", 18);
    plan_.subject = c.value("subject", 0);
    plan_.ordering = c.value("ordering", std::string("latin_square")) == "random"
                         ? protocols::Ordering::kRandom
                         : protocols::Ordering::kLatinSquare;
    // Render a probe so unknown processing names fail at creation.
    for (const auto& type : plan_.processing_types) {
      if (type != "unprocessed" && type != "sce" && type != "sce_isnr" && type != "sce_esnr") {
        throw ValidationError("unknown processing type: " + type);
      }
    }
    trials_ = protocols::schedule_trials(plan_, c.value("seed", std::uint64_t{1}));
  }

 protected:
  bool has_next() const override { return next_ < trials_.size(); }

  json next_trial() override {
    const auto& t = trials_[next_];
    const auto& cond = plan_.conditions[t.condition];
    const auto mix = load_and_mix(cfg_, t.sentence, cond.masker, cond.smr_db, lead_ms_);
    json urls = json::array();
    for (const auto& type : t.intervals) {
      urls.push_back(stimulus_url(render_processing(type, mix, params_)));
    }
    const bool mushra = plan_.task == protocols::TaskKind::kMushra;
    json out{{"schema", mushra ? "ratings_0_100" : "pick_one_of_3"},
             {"prompt", mushra ? kMushraPrompt : kClarityPrompt},
             {"isi_ms", t.isi_ms},
             {"index", t.index},
             {"total", trials_.size()},
             {"condition", cond.label},
             {"stimuli", urls}};
    if (mushra) out["reference"] = stimulus_url(mix.target);
    return out;
  }

  std::optional<std::string> check_answer(const json& answer) const override {
    const auto n = static_cast<int>(trials_[next_].intervals.size());
    if (plan_.task != protocols::TaskKind::kMushra) {
      if (!valid_choice(answer, n)) return "answer must be {\"choice\": 0.." + std::to_string(n - 1) + "}";
      return std::nullopt;
    }
    if (!answer.is_object() || !answer.contains("ratings") || !answer.at("ratings").is_array() ||
        static_cast<int>(answer.at("ratings").size()) != n) {
      return "answer must be {\"ratings\": [" + std::to_string(n) + " numbers]}";
    }
    for (const auto& r : answer.at("ratings")) {
      if (!r.is_number() || r.get<double>() < 0.0 || r.get<double>() > 100.0) {
        return "ratings must lie in [0, 100]";
      }
    }
    return std::nullopt;
  }

  void apply(const json& answer) override {
    const auto& t = trials_[next_];
    if (plan_.task == protocols::TaskKind::kMushra) {
      const auto ratings = answer.at("ratings").get<std::vector<double>>();
      for (std::size_t i = 0; i < ratings.size(); ++i) {
        mushra_.push_back({t.index, t.condition_label, t.intervals[i], ratings[i]});
      }
    } else {
      preferences_.push_back({t.condition_label, t.intervals[answer.at("choice").get<int>()]});
    }
    ++next_;
  }

  json summary() const override {
    json body{{"total", trials_.size()}};
    if (plan_.task == protocols::TaskKind::kMushra) {
      const auto r = protocols::score_mushra(mushra_);
      auto cells = [](const std::vector<protocols::MushraCell>& v) {
        json a = json::array();
        for (const auto& c : v) {
          a.push_back({{"condition", c.condition},
                       {"stimulus", c.stimulus},
                       {"mean", c.mean},
                       {"standard_error", c.standard_error},
                       {"n", c.n},
                       {"single_rating", c.single_rating}});
        }
        return a;
      };
      body["cells"] = cells(r.cells);
      body["hidden_reference"] = cells(r.hidden_reference);
      body["anchor"] = cells(r.anchor);
      body["reference_below_90_fraction"] = r.reference_below_90_fraction;
      body["listener_flagged"] = r.listener_flagged;
    } else {
      body["percentages"] = protocols::score_preference(preferences_, plan_.processing_types);
    }
    return body;
  }

 private:
  const ServiceConfig& cfg_;
  protocols::TrialPlan plan_;
  SceParams params_;
  double lead_ms_ = 500.0;
  std::vector<protocols::Trial> trials_;
  std::size_t next_ = 0;
  std::vector<protocols::PreferenceResponse> preferences_;
  std::vector<protocols::MushraRating> mushra_;
};

}  // namespace

SessionService::SessionService(ServiceConfig cfg) : cfg_(std::move(cfg)) {
  if (!cfg_.log_dir.empty()) std::filesystem::create_directories(cfg_.log_dir);
}

SessionService::~SessionService() = default;

Reply SessionService::health() const {
  return {200, json{{"status", "ok"}, {"version", version()}}};
}

std::string SessionService::store_stimulus(std::vector<unsigned char> wav) {
  auto token = sha256_hex(wav);
  std::lock_guard lock(mutex_);
  stimuli_.try_emplace(token, std::make_shared<const std::vector<unsigned char>>(std::move(wav)));
  return token;
}

std::shared_ptr<const std::vector<unsigned char>> SessionService::stimulus(
    const std::string& token) const {
  std::lock_guard lock(mutex_);
  const auto it = stimuli_.find(token);
  return it == stimuli_.end() ? nullptr : it->second;
}

std::shared_ptr<Session> SessionService::find(const std::string& id) {
  std::lock_guard lock(mutex_);
  const auto it = sessions_.find(id);
  return it == sessions_.end() ? nullptr : it->second;
}

Reply SessionService::create(const json& request) {
  if (!request.is_object() || !request.contains("kind") || !request.at("kind").is_string()) {
    return error(422, "request needs a kind");
  }
  const auto kind = request.at("kind").get<std::string>();
  const json config = request.value("config", json::object());
  std::string id;
  {
    std::lock_guard lock(mutex_);
    char buf[16];
    std::snprintf(buf, sizeof buf, "s%04d", next_id_++);
    id = buf;
  }
  std::shared_ptr<Session> s;
  try {
    if (kind == "ga_fit") {
      s = std::make_shared<GaSession>(id, *this, config);
    } else if (kind == "clarity") {
      s = std::make_shared<PlanSession>(id, *this, config, protocols::TaskKind::kClarityPreference);
    } else if (kind == "mushra") {
      s = std::make_shared<PlanSession>(id, *this, config, protocols::TaskKind::kMushra);
    } else {
      return error(422, "unknown session kind: " + kind);
    }
  } catch (const Error& e) {
    return error(422, e.what());
  } catch (const json::exception& e) {
    return error(422, std::string("malformed config: ") + e.what());
  }
  s->touch(cfg_.now());
  {
    std::lock_guard lock(mutex_);
    sessions_.emplace(id, s);
  }
  return {201, s->describe()};
}

Reply SessionService::trial(const std::string& id) {
  auto s = find(id);
  if (!s) return error(404, "unknown session " + id);
  std::lock_guard lock(s->mutex);
  const auto now = cfg_.now();
  if (s->expire_if_idle(now, cfg_.expiry)) return error(409, "session timeout");
  s->touch(now);
  return s->trial();
}

Reply SessionService::respond(const std::string& id, const json& request) {
  auto s = find(id);
  if (!s) return error(404, "unknown session " + id);
  std::lock_guard lock(s->mutex);
  const auto now = cfg_.now();
  s->expire_if_idle(now, cfg_.expiry);
  s->touch(now);
  return s->respond(request, now);
}

Reply SessionService::results(const std::string& id) {
  auto s = find(id);
  if (!s) return error(404, "unknown session " + id);
  std::lock_guard lock(s->mutex);
  s->expire_if_idle(cfg_.now(), cfg_.expiry);
  return s->results();
}

void mount(httplib::Server& server, SessionService& service) {
  auto send = [](httplib::Response& res, const Reply& r) {
    res.status = r.status;
    res.set_content(r.body.dump(), "application/json");
  };
  auto parse = [](const httplib::Request& req) -> std::optional<json> {
    try {
      return json::parse(req.body);
    } catch (const json::parse_error&) {
      return std::nullopt;
    }
  };
  auto guarded = [send](auto fn) {
    return [send, fn](const httplib::Request& req, httplib::Response& res) {
      try {
        fn(req, res);
      } catch (const std::exception& e) {
        send(res, error(500, e.what()));
      }
    };
  };

  server.Get("/health", guarded([&service, send](const httplib::Request&, httplib::Response& res) {
               send(res, service.health());
             }));
  server.Post("/sessions", guarded([&service, send, parse](const httplib::Request& req,
                                                           httplib::Response& res) {
                const auto body = parse(req);
                send(res, body ? service.create(*body) : error(422, "malformed JSON"));
              }));
  server.Get(R"(/sessions/([^/]+)/trial)",
             guarded([&service, send](const httplib::Request& req, httplib::Response& res) {
               send(res, service.trial(req.matches[1]));
             }));
  server.Post(R"(/sessions/([^/]+)/response)",
              guarded([&service, send, parse](const httplib::Request& req,
                                              httplib::Response& res) {
                const auto body = parse(req);
                send(res, body ? service.respond(req.matches[1], *body)
                               : error(422, "malformed JSON"));
              }));
  server.Get(R"(/sessions/([^/]+)/results)",
             guarded([&service, send](const httplib::Request& req, httplib::Response& res) {
               send(res, service.results(req.matches[1]));
             }));
  server.Get(R"(/stimuli/([0-9a-f]+))",
             guarded([&service, send](const httplib::Request& req, httplib::Response& res) {
               const auto wav = service.stimulus(req.matches[1]);
               if (!wav) {
                 send(res, error(404, "unknown stimulus"));
                 return;
               }
               res.set_content(reinterpret_cast<const char*>(wav->data()), wav->size(),
                               "audio/wav");
             }));
  server.set_error_handler([](const httplib::Request&, httplib::Response& res) {
    if (res.body.empty()) {
      res.set_content(json{{"error", "not found"}}.dump(), "application/json");
    }
  });
}

}  // namespace sce::service
