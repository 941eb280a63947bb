#pragma once

#include <array>
#include <compare>
#include <cstdint>
#include <functional>
#include <map>
#include <optional>
#include <random>
#include <set>
#include <span>
#include <string>
#include <vector>

#include "sce/audio.hpp"
#include "sce/enhance.hpp"
#include "sce/snr.hpp"
#include "sce/stft.hpp"

namespace sce::ga {

using Rng = std::mt19937_64;

enum Gene : std::size_t { kB = 0, kXi = 1, kM = 2, kS = 3 };
inline constexpr std::size_t kGenes = 4;

// Indices into the four parameter grids.
struct Genome {
  std::array<int, kGenes> idx{};
  auto operator<=>(const Genome&) const = default;
};

class ParamGrid {
 public:
  // b 0.5..3 step 0.5, xi {0.8, 0.9}, m {5, 6}, s 1..5 step 0.5.
  static ParamGrid full();
  // As full() with xi fixed at 0.9 and m at 5.
  static ParamGrid fixed_history();

  explicit ParamGrid(std::array<std::vector<double>, kGenes> values);

  const std::vector<double>& values(std::size_t gene) const { return values_[gene]; }
  int extent(std::size_t gene) const { return static_cast<int>(values_[gene].size()); }
  std::size_t size() const;
  bool contains(const Genome& g) const;
  SceParams params(const Genome& g) const;
  // Nearest grid point to arbitrary parameters.
  Genome nearest(const SceParams& p) const;

 private:
  std::array<std::vector<double>, kGenes> values_;
};

struct GaConfig {
  int population_size = 8;
  int elite_count = 1;
  double mutation_rate = 0.1;  // per gene
  int max_generations = 15;    // including the initial population
  int convergence_patience = 3;
  std::uint64_t seed = 1;
  bool dedup = true;

  void validate() const;
};

using Population = std::vector<Genome>;

// Uniform draw over the grid; duplicates are rejected when cfg.dedup is set.
Population init_population(const GaConfig& cfg, const ParamGrid& grid, Rng& rng);

// Elitism, tournament-of-2 selection, single-point crossover and per-gene
// mutation to a uniformly drawn grid neighbor. The elites lead the returned
// population in rank order. With cfg.dedup, a child that repeats a member of
// the new population or of `evaluated` is nudged to a neighbor (bounded
// retries) so each generation spends its evaluations on unseen genomes.
Population evolve_generation(const Population& population,
                             std::span<const double> scores, const GaConfig& cfg,
                             const ParamGrid& grid, Rng& rng,
                             const std::set<Genome>* evaluated = nullptr);

// Index of the best score; earlier members win ties.
std::size_t best_index(std::span<const double> scores);

// LSD(mixture, clean) - LSD(processed, clean), where LSD is the mean over
// speech-active frames of the RMS dB-spectrum difference. Frames are active
// when the clean frame energy is within 35 dB of its loudest frame.
double lsd_fitness(const AudioBuffer& processed, const AudioBuffer& clean,
                   const AudioBuffer& mixture, const StftConfig& config = {});
double log_spectral_distance(const AudioBuffer& x, const AudioBuffer& reference,
                             const StftConfig& config = {});

struct GenerationRecord {
  int generation = 0;
  Population genomes;
  std::vector<double> scores;
  Genome elite;
  double elite_score = 0.0;
};

struct GaResult {
  Genome best;
  SceParams best_params;
  std::vector<GenerationRecord> history;
  bool converged = false;  // stopped on patience rather than generation cap
  bool abandoned = false;
};

struct PairTrial {
  int generation = 0;
  std::size_t pair_index = 0;  // within the generation
  std::size_t first = 0;       // population indices, in presentation order
  std::size_t second = 0;
};

// Generation-by-generation GA with externally supplied fitness. Scores come
// either all at once (submit_scores) or from a round-robin of paired
// judgments (next_pair / submit_pair), where each win scores one point.
enum class FitnessMode { kScores, kPaired };

class GaDriver {
 public:
  GaDriver(GaConfig cfg, ParamGrid grid, FitnessMode mode = FitnessMode::kScores);

  FitnessMode mode() const { return mode_; }
  const GaConfig& config() const { return cfg_; }
  const ParamGrid& grid() const { return grid_; }
  const Population& population() const { return population_; }
  int generation() const { return generation_; }
  bool finished() const { return finished_; }

  void submit_scores(std::span<const double> scores);

  // The outstanding comparison of the current generation, if any remain.
  std::optional<PairTrial> next_pair() const;
  // winner: 0 for the first-presented genome, 1 for the second.
  void submit_pair(int winner);
  std::size_t pairs_in_generation() const { return pairs_.size(); }
  std::size_t pairs_answered() const { return pair_cursor_; }

  // Marks an external session as abandoned; history is kept.
  void abandon();
  GaResult result() const;

 private:
  void start_generation();
  void plan_pairs();

  GaConfig cfg_;
  ParamGrid grid_;
  FitnessMode mode_;
  Rng rng_;
  Rng pair_rng_;
  Population population_;
  int generation_ = 0;
  bool finished_ = false;
  bool converged_ = false;
  bool abandoned_ = false;
  int stale_ = 0;
  std::optional<Genome> last_elite_;
  std::set<Genome> evaluated_;
  std::vector<GenerationRecord> history_;
  std::vector<std::pair<std::size_t, std::size_t>> pairs_;
  std::size_t pair_cursor_ = 0;
  std::vector<double> wins_;
};

using FitnessFn = std::function<double(const Genome&)>;

// Objective-mode run. Unique genomes of a generation are evaluated in
// parallel and memoized, so fitness must be a pure function of the genome.
GaResult run_ga(const FitnessFn& fitness, const GaConfig& cfg, const ParamGrid& grid);

// Paired-judgment source: returns 0 if `first` is preferred, 1 otherwise.
// May throw SessionTimeout to abandon the run.
using JudgeFn = std::function<int(const Genome& first, const Genome& second)>;

class SessionTimeout : public std::runtime_error {
 public:
  SessionTimeout() : std::runtime_error("session timeout") {}
};

// External-mode run. On SessionTimeout, returns the partial history with
// abandoned set.
GaResult run_ga_paired(const JudgeFn& judge, const GaConfig& cfg, const ParamGrid& grid);

// Clean-reference objective for one condition: the mixture is enhanced with
// the genome's parameters (gated on the stems' ideal SNR when `gated`) and
// scored with lsd_fitness.
struct ObjectiveStimulus {
  AudioBuffer clean;    // aligned target
  AudioBuffer masker;   // aligned masker
  AudioBuffer mixture;  // clean + masker
  bool gated = true;
  GateConfig gate;
  StftConfig stft;
};

AudioBuffer process_condition(const ObjectiveStimulus& stim, const SceParams& params);
double objective_fitness(const ObjectiveStimulus& stim, const SceParams& params);

}  // namespace sce::ga
