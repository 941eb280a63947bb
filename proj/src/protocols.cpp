#include "sce/protocols.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <numeric>
#include <set>

#include "sce/error.hpp"

namespace sce::protocols {

StaircaseState start_staircase(const StaircaseConfig& config) {
  if (config.max_sentences < 1 || config.keywords_per_sentence < 1) {
    throw ValidationError("staircase needs sentences and keywords");
  }
  if (!(config.initial_step_db > 0.0 && config.final_step_db > 0.0)) {
    throw ValidationError("staircase steps must be positive");
  }
  StaircaseState s;
  s.config = config;
  s.current_smr_db = config.start_smr_db;
  s.step_db = config.sentences_at_initial_step > 0 ? config.initial_step_db
                                                   : config.final_step_db;
  return s;
}

bool majority_correct(int correct, int keywords) { return 2 * correct > keywords; }

StaircaseState staircase_step(const StaircaseState& state, bool majority) {
  if (state.done()) throw StateError("staircase already finished");
  StaircaseState next = state;
  const auto& cfg = state.config;
  const Direction dir = majority ? Direction::kDown : Direction::kUp;
  const bool at_final_step = state.sentences_presented >= cfg.sentences_at_initial_step;
  if (state.direction != Direction::kNone && dir != state.direction) {
    next.reversal_smrs.push_back(state.current_smr_db);
    if (at_final_step) ++next.reversals_at_final_step;
  }
  const double step = at_final_step ? cfg.final_step_db : cfg.initial_step_db;
  next.current_smr_db += dir == Direction::kDown ? -step : step;
  next.direction = dir;
  ++next.sentences_presented;
  next.step_db = next.sentences_presented >= cfg.sentences_at_initial_step
                     ? cfg.final_step_db
                     : cfg.initial_step_db;

  const bool enough =
      static_cast<int>(next.reversal_smrs.size()) >= cfg.required_turn_points;
  const bool quota_met =
      cfg.turn_point_quota > 0 && next.reversals_at_final_step >= cfg.turn_point_quota;
  if (enough && quota_met) {
    next.finished = true;
  } else if (next.sentences_presented >= cfg.max_sentences) {
    next.finished = enough;
    next.exhausted = !enough;
  }
  return next;
}

double srt_estimate(const StaircaseState& state) {
  const auto& r = state.reversal_smrs;
  if (r.size() < 4) {
    throw InsufficientDataError("SRT needs at least four turn points, have " +
                                std::to_string(r.size()));
  }
  return std::accumulate(r.end() - 4, r.end(), 0.0) / 4.0;
}

SimListener::SimListener(double srt_true_db, double slope_per_db, std::uint64_t seed)
    : srt_true_(srt_true_db), slope_(slope_per_db), rng_(seed) {
  if (!(slope_per_db > 0.0)) throw ValidationError("listener slope must be > 0");
  if (!std::isfinite(srt_true_db)) throw ValidationError("listener SRT must be finite");
}

double SimListener::p_correct(double smr_db) const {
  return 1.0 / (1.0 + std::exp(-slope_ * (smr_db - srt_true_)));
}

int SimListener::respond(double smr_db, int keywords) {
  std::binomial_distribution<int> draw(keywords, p_correct(smr_db));
  return draw(rng_);
}

int simulate_response(SimListener& listener, double smr_db, int keywords) {
  return listener.respond(smr_db, keywords);
}

StaircaseRun run_staircase(SimListener& listener, const StaircaseConfig& config) {
  StaircaseRun run;
  auto state = start_staircase(config);
  while (!state.done()) {
    StaircaseTrial t;
    t.sentence = state.sentences_presented + 1;
    t.smr_db = state.current_smr_db;
    t.correct = listener.respond(state.current_smr_db, config.keywords_per_sentence);
    t.majority = majority_correct(t.correct, config.keywords_per_sentence);
    const auto before = state.reversal_smrs.size();
    state = staircase_step(state, t.majority);
    t.turn_point = state.reversal_smrs.size() > before;
    run.trials.push_back(t);
  }
  run.final_state = state;
  run.srt_db = state.finished ? srt_estimate(state)
                              : std::numeric_limits<double>::quiet_NaN();
  return run;
}

TestSmrs derive_test_smrs(double srt_db) {
  if (!std::isfinite(srt_db)) throw ValidationError("SRT must be finite");
  return {srt_db + 1.0, srt_db - 2.0};
}

double score_si(std::span<const int> correct_counts, int keywords) {
  if (correct_counts.empty()) throw ValidationError("no sentences scored");
  long total = 0;
  for (int c : correct_counts) {
    if (c < 0 || c > keywords) throw ValidationError("keyword count out of range");
    total += c;
  }
  return 100.0 * static_cast<double>(total) /
         (static_cast<double>(keywords) * static_cast<double>(correct_counts.size()));
}

std::vector<std::vector<int>> latin_square(int n) {
  if (n < 1) throw ValidationError("Latin square order must be >= 1");
  std::vector<int> first(n);
  if (n % 2 == 0) {
    // 0, 1, n-1, 2, n-2, ...
    int lo = 1, hi = n - 1;
    first[0] = 0;
    for (int c = 1; c < n; ++c) first[c] = (c % 2 == 1) ? lo++ : hi--;
  } else {
    std::iota(first.begin(), first.end(), 0);
  }
  std::vector<std::vector<int>> square(n, std::vector<int>(n));
  for (int r = 0; r < n; ++r) {
    for (int c = 0; c < n; ++c) square[r][c] = (first[c] + r) % n;
  }
  return square;
}

std::vector<Trial> schedule_trials(const TrialPlan& plan, std::uint64_t seed) {
  const int n_cond = static_cast<int>(plan.conditions.size());
  if (n_cond == 0) throw ValidationError("trial plan has no conditions");
  if (plan.sentences.size() != plan.conditions.size()) {
    throw ValidationError("need one sentence list per condition");
  }
  if (plan.sentences_per_condition < 1) {
    throw ValidationError("sentences_per_condition must be >= 1");
  }
  for (const auto& list : plan.sentences) {
    if (static_cast<int>(list.size()) < plan.sentences_per_condition) {
      throw ValidationError("insufficient sentences for a condition");
    }
  }
  const bool multi = plan.task != TaskKind::kSpeechIntelligibility;
  if (multi && plan.processing_types.empty()) {
    throw ValidationError("multi-interval task needs processing types");
  }

  std::mt19937_64 rng(seed);
  std::vector<int> order(n_cond);
  if (plan.ordering == Ordering::kLatinSquare) {
    order = latin_square(n_cond)[static_cast<std::size_t>(plan.subject % n_cond)];
  } else {
    std::iota(order.begin(), order.end(), 0);
    std::shuffle(order.begin(), order.end(), rng);
  }

  std::vector<Trial> trials;
  for (int c : order) {
    const auto& cond = plan.conditions[c];
    for (int i = 0; i < plan.sentences_per_condition; ++i) {
      Trial t;
      t.index = static_cast<int>(trials.size());
      t.condition = c;
      t.condition_label = cond.label;
      t.sentence = plan.sentences[c][i];
      t.isi_ms = plan.isi_ms;
      if (plan.task == TaskKind::kSpeechIntelligibility) {
        t.intervals = {cond.processing};
      } else {
        t.intervals = plan.processing_types;
        if (plan.task == TaskKind::kMushra) {
          t.intervals.push_back(kHiddenReference);
          t.intervals.push_back(kAnchor);
        }
        std::shuffle(t.intervals.begin(), t.intervals.end(), rng);
      }
      trials.push_back(std::move(t));
    }
  }
  return trials;
}

std::map<std::string, std::map<std::string, double>> score_preference(
    std::span<const PreferenceResponse> responses,
    std::span<const std::string> processing_types) {
  std::map<std::string, std::map<std::string, int>> counts;
  std::map<std::string, int> totals;
  for (const auto& r : responses) {
    if (std::find(processing_types.begin(), processing_types.end(), r.chosen) ==
        processing_types.end()) {
      throw ValidationError("response names an unknown processing type: " + r.chosen);
    }
    ++counts[r.condition][r.chosen];
    ++totals[r.condition];
  }
  std::map<std::string, std::map<std::string, double>> out;
  for (const auto& [cond, total] : totals) {
    auto& row = out[cond];
    for (const auto& type : processing_types) {
      const auto it = counts[cond].find(type);
      const int n = it == counts[cond].end() ? 0 : it->second;
      row[type] = 100.0 * n / total;
    }
  }
  return out;
}

namespace {

MushraCell summarize(const std::string& cond, const std::string& stim,
                     const std::vector<double>& values) {
  MushraCell cell;
  cell.condition = cond;
  cell.stimulus = stim;
  cell.n = static_cast<int>(values.size());
  cell.mean = std::accumulate(values.begin(), values.end(), 0.0) / cell.n;
  if (cell.n == 1) {
    cell.single_rating = true;
    cell.standard_error = 0.0;
  } else {
    double ss = 0.0;
    for (double v : values) ss += (v - cell.mean) * (v - cell.mean);
    const double sd = std::sqrt(ss / (cell.n - 1));
    cell.standard_error = sd / std::sqrt(static_cast<double>(cell.n));
  }
  return cell;
}

}  // namespace

MushraResult score_mushra(std::span<const MushraRating> ratings) {
  std::map<std::pair<std::string, std::string>, std::vector<double>> groups;
  std::map<int, bool> ref_low;  // per trial
  for (const auto& r : ratings) {
    if (!(r.rating >= 0.0 && r.rating <= 100.0)) {
      throw ValidationError("MUSHRA rating outside [0, 100]");
    }
    groups[{r.condition, r.stimulus}].push_back(r.rating);
    if (r.stimulus == kHiddenReference) {
      ref_low[r.trial] = ref_low[r.trial] || r.rating < 90.0;
    }
  }
  MushraResult out;
  for (const auto& [key, values] : groups) {
    auto cell = summarize(key.first, key.second, values);
    if (key.second == kHiddenReference) {
      out.hidden_reference.push_back(cell);
    } else if (key.second == kAnchor) {
      out.anchor.push_back(cell);
    } else {
      out.cells.push_back(cell);
    }
  }
  if (!ref_low.empty()) {
    const auto low = std::count_if(ref_low.begin(), ref_low.end(),
                                   [](const auto& kv) { return kv.second; });
    out.reference_below_90_fraction =
        static_cast<double>(low) / static_cast<double>(ref_low.size());
  }
  out.listener_flagged = out.reference_below_90_fraction > 0.15;
  return out;
}

}  // namespace sce::protocols
