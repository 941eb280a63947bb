#pragma once

#include <cstdint>
#include <map>
#include <random>
#include <span>
#include <string>
#include <vector>

namespace sce::protocols {

enum class Direction { kNone, kDown, kUp };

struct StaircaseConfig {
  double start_smr_db = 10.0;
  double initial_step_db = 4.0;
  double final_step_db = 2.0;
  int sentences_at_initial_step = 4;
  int max_sentences = 20;
  int keywords_per_sentence = 10;
  int required_turn_points = 4;
  // Optional early stop once this many turn points were collected at the
  // final step size; 0 runs every sentence.
  int turn_point_quota = 0;
};

struct StaircaseState {
  StaircaseConfig config;
  double current_smr_db = 0.0;
  int sentences_presented = 0;
  double step_db = 4.0;  // step for the next move
  std::vector<double> reversal_smrs;
  int reversals_at_final_step = 0;
  Direction direction = Direction::kNone;
  bool finished = false;   // enough turn points collected
  bool exhausted = false;  // sentences ran out before enough turn points

  bool done() const { return finished || exhausted; }
};

StaircaseState start_staircase(const StaircaseConfig& config = {});

// "More than half" of the keywords.
bool majority_correct(int correct, int keywords = 10);

// Moves down on a correct majority and up otherwise. A direction change
// records the SMR before the move as a turn point.
StaircaseState staircase_step(const StaircaseState& state, bool majority);

// Mean of the last four turn points.
double srt_estimate(const StaircaseState& state);

class SimListener {
 public:
  SimListener(double srt_true_db, double slope_per_db, std::uint64_t seed);

  double srt_true() const { return srt_true_; }
  double slope() const { return slope_; }
  // Per-keyword probability 1 / (1 + exp(-slope (smr - srt))).
  double p_correct(double smr_db) const;
  int respond(double smr_db, int keywords = 10);

 private:
  double srt_true_;
  double slope_;
  std::mt19937_64 rng_;
};

int simulate_response(SimListener& listener, double smr_db, int keywords = 10);

struct StaircaseTrial {
  int sentence = 0;
  double smr_db = 0.0;
  int correct = 0;
  bool majority = false;
  bool turn_point = false;
};

struct StaircaseRun {
  std::vector<StaircaseTrial> trials;
  StaircaseState final_state;
  double srt_db = 0.0;  // NaN when the run was exhausted
};

StaircaseRun run_staircase(SimListener& listener, const StaircaseConfig& config = {});

struct TestSmrs {
  double high_db;  // 1 dB above the SRT
  double low_db;   // 2 dB below the SRT
};
TestSmrs derive_test_smrs(double srt_db);

// 100 * sum(correct) / (keywords * sentences).
double score_si(std::span<const int> correct_counts, int keywords = 10);

enum class TaskKind { kSpeechIntelligibility, kClarityPreference, kMushra };
enum class Ordering { kLatinSquare, kRandom };

inline const std::string kHiddenReference = "hidden_reference";
inline const std::string kAnchor = "anchor";

struct Condition {
  std::string label;
  std::string masker;
  double smr_db = 0.0;
  std::string processing;  // single-interval tasks only
};

struct TrialPlan {
  TaskKind task = TaskKind::kClarityPreference;
  std::vector<Condition> conditions;
  std::vector<std::string> processing_types;
  std::vector<std::vector<std::string>> sentences;  // one list per condition
  int sentences_per_condition = 18;
  Ordering ordering = Ordering::kLatinSquare;
  int subject = 0;  // selects the Latin-square row
  double isi_ms = 500.0;
};

struct Trial {
  int index = 0;
  int condition = 0;
  std::string condition_label;
  std::string sentence;
  std::vector<std::string> intervals;  // stimulus labels in presentation order
  double isi_ms = 500.0;
};

// Balanced (Williams) Latin square for even n, cyclic for odd n. Row r is
// the condition order for subject r.
std::vector<std::vector<int>> latin_square(int n);

std::vector<Trial> schedule_trials(const TrialPlan& plan, std::uint64_t seed);

struct PreferenceResponse {
  std::string condition;
  std::string chosen;  // processing type picked
};

// condition -> processing type -> percent of selections.
std::map<std::string, std::map<std::string, double>> score_preference(
    std::span<const PreferenceResponse> responses,
    std::span<const std::string> processing_types);

struct MushraRating {
  int trial = 0;
  std::string condition;
  std::string stimulus;  // processing type, kHiddenReference or kAnchor
  double rating = 0.0;
};

struct MushraCell {
  std::string condition;
  std::string stimulus;
  double mean = 0.0;
  double standard_error = 0.0;
  int n = 0;
  bool single_rating = false;  // SE reported as 0
};

struct MushraResult {
  std::vector<MushraCell> cells;  // processing types
  std::vector<MushraCell> hidden_reference;
  std::vector<MushraCell> anchor;
  double reference_below_90_fraction = 0.0;
  bool listener_flagged = false;  // hidden reference < 90 in > 15% of trials
};

MushraResult score_mushra(std::span<const MushraRating> ratings);

}  // namespace sce::protocols
