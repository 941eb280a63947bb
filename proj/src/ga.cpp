#include "sce/ga.hpp"

#include <algorithm>
#include <cmath>
#include <exception>
#include <numeric>

#include "sce/error.hpp"

namespace sce::ga {

namespace {

std::vector<double> range(double lo, double hi, double step) {
  std::vector<double> v;
  const int n = static_cast<int>(std::lround((hi - lo) / step));
  for (int i = 0; i <= n; ++i) v.push_back(lo + step * i);
  return v;
}

}  // namespace

ParamGrid ParamGrid::full() {
  return ParamGrid({range(0.5, 3.0, 0.5), {0.8, 0.9}, {5.0, 6.0}, range(1.0, 5.0, 0.5)});
}

ParamGrid ParamGrid::fixed_history() {
  return ParamGrid({range(0.5, 3.0, 0.5), {0.9}, {5.0}, range(1.0, 5.0, 0.5)});
}

ParamGrid::ParamGrid(std::array<std::vector<double>, kGenes> values)
    : values_(std::move(values)) {
  for (const auto& v : values_) {
    if (v.empty()) throw ValidationError("parameter grid has an empty axis");
  }
}

std::size_t ParamGrid::size() const {
  std::size_t n = 1;
  for (const auto& v : values_) n *= v.size();
  return n;
}

bool ParamGrid::contains(const Genome& g) const {
  for (std::size_t i = 0; i < kGenes; ++i) {
    if (g.idx[i] < 0 || g.idx[i] >= extent(i)) return false;
  }
  return true;
}

SceParams ParamGrid::params(const Genome& g) const {
  if (!contains(g)) throw ValidationError("genome outside the parameter grid");
  SceParams p;
  p.b = values_[kB][g.idx[kB]];
  p.xi = values_[kXi][g.idx[kXi]];
  p.m = static_cast<int>(std::lround(values_[kM][g.idx[kM]]));
  p.s = values_[kS][g.idx[kS]];
  return p;
}

Genome ParamGrid::nearest(const SceParams& p) const {
  const std::array<double, kGenes> want{p.b, p.xi, static_cast<double>(p.m), p.s};
  Genome g;
  for (std::size_t i = 0; i < kGenes; ++i) {
    const auto& v = values_[i];
    auto it = std::min_element(v.begin(), v.end(), [&](double a, double b) {
      return std::abs(a - want[i]) < std::abs(b - want[i]);
    });
    g.idx[i] = static_cast<int>(it - v.begin());
  }
  return g;
}

void GaConfig::validate() const {
  if (population_size < 4) throw ValidationError("population_size must be >= 4");
  if (elite_count < 0 || elite_count >= population_size) {
    throw ValidationError("elite_count must lie in [0, population_size)");
  }
  if (!(mutation_rate >= 0.0 && mutation_rate <= 1.0)) {
    throw ValidationError("mutation_rate must lie in [0, 1]");
  }
  if (max_generations < 1) throw ValidationError("max_generations must be >= 1");
  if (convergence_patience < 1) throw ValidationError("convergence_patience must be >= 1");
}

namespace {

Genome random_genome(const ParamGrid& grid, Rng& rng) {
  Genome g;
  for (std::size_t i = 0; i < kGenes; ++i) {
    std::uniform_int_distribution<int> pick(0, grid.extent(i) - 1);
    g.idx[i] = pick(rng);
  }
  return g;
}

void mutate_gene(Genome& g, std::size_t gene, const ParamGrid& grid, Rng& rng) {
  const int n = grid.extent(gene);
  if (n < 2) return;
  const int cur = g.idx[gene];
  if (cur == 0) {
    g.idx[gene] = 1;
  } else if (cur == n - 1) {
    g.idx[gene] = n - 2;
  } else {
    std::bernoulli_distribution up(0.5);
    g.idx[gene] = up(rng) ? cur + 1 : cur - 1;
  }
}

bool contains(const Population& pop, const Genome& g) {
  return std::find(pop.begin(), pop.end(), g) != pop.end();
}

}  // namespace

Population init_population(const GaConfig& cfg, const ParamGrid& grid, Rng& rng) {
  cfg.validate();
  const auto n = static_cast<std::size_t>(cfg.population_size);
  if (cfg.dedup && grid.size() < n) {
    throw ValidationError("grid smaller than population with dedup enabled");
  }
  Population pop;
  pop.reserve(n);
  while (pop.size() < n) {
    Genome g = random_genome(grid, rng);
    if (cfg.dedup && contains(pop, g)) continue;
    pop.push_back(g);
  }
  return pop;
}

std::size_t best_index(std::span<const double> scores) {
  if (scores.empty()) throw ValidationError("no scores");
  std::size_t best = 0;
  for (std::size_t i = 1; i < scores.size(); ++i) {
    if (scores[i] > scores[best]) best = i;
  }
  return best;
}

Population evolve_generation(const Population& population,
                             std::span<const double> scores, const GaConfig& cfg,
                             const ParamGrid& grid, Rng& rng,
                             const std::set<Genome>* evaluated) {
  cfg.validate();
  if (scores.size() != population.size() || population.empty()) {
    throw ValidationError("need one score per population member");
  }
  std::vector<std::size_t> rank(population.size());
  std::iota(rank.begin(), rank.end(), 0);
  std::stable_sort(rank.begin(), rank.end(),
                   [&](std::size_t a, std::size_t b) { return scores[a] > scores[b]; });

  const auto n = static_cast<std::size_t>(cfg.population_size);
  Population next;
  next.reserve(n);
  for (int e = 0; e < cfg.elite_count; ++e) next.push_back(population[rank[e]]);

  std::uniform_int_distribution<std::size_t> pick(0, population.size() - 1);
  std::uniform_int_distribution<std::size_t> cut(1, kGenes - 1);
  std::uniform_int_distribution<std::size_t> any_gene(0, kGenes - 1);
  std::bernoulli_distribution mutate(cfg.mutation_rate);
  auto tournament = [&]() -> std::size_t {
    const std::size_t a = pick(rng);
    const std::size_t b = pick(rng);
    return scores[b] > scores[a] ? b : a;
  };
  const bool dedup = cfg.dedup && grid.size() >= n;

  while (next.size() < n) {
    const std::size_t i1 = tournament();
    const std::size_t i2 = tournament();
    const Genome& p1 = population[i1];
    const Genome& p2 = population[i2];
    const std::size_t c = cut(rng);
    Genome child;
    for (std::size_t i = 0; i < kGenes; ++i) child.idx[i] = i < c ? p1.idx[i] : p2.idx[i];
    for (std::size_t i = 0; i < kGenes; ++i) {
      if (mutate(rng)) mutate_gene(child, i, grid, rng);
    }
    auto repeated = [&](const Genome& g) {
      return contains(next, g) || (evaluated != nullptr && evaluated->contains(g));
    };
    if (dedup && repeated(child)) {
      // Move to an unseen one-step neighbor of the fitter parent, falling back
      // to a short random walk when all of them were already tried.
      const Genome& anchor = scores[i2] > scores[i1] ? p2 : p1;
      std::vector<Genome> around;
      for (std::size_t i = 0; i < kGenes; ++i) {
        for (int delta : {-1, 1}) {
          Genome g = anchor;
          g.idx[i] += delta;
          if (grid.contains(g) && !repeated(g)) around.push_back(g);
        }
      }
      if (!around.empty()) {
        std::uniform_int_distribution<std::size_t> choose(0, around.size() - 1);
        child = around[choose(rng)];
      } else {
        for (int tries = 0; repeated(child) && tries < 16; ++tries) {
          mutate_gene(child, any_gene(rng), grid, rng);
        }
      }
    }
    next.push_back(child);
  }
  return next;
}

double log_spectral_distance(const AudioBuffer& x, const AudioBuffer& reference,
                             const StftConfig& config) {
  if (x.size() != reference.size() || x.sample_rate() != reference.sample_rate()) {
    throw AlignmentError("LSD inputs are not aligned");
  }
  const auto tx = stft(x, config);
  const auto tr = stft(reference, config);
  std::vector<double> energy(tr.size());
  for (std::size_t f = 0; f < tr.size(); ++f) {
    double e = 0.0;
    for (double v : tr.frames[f].mag) e += v * v;
    energy[f] = 10.0 * std::log10(std::max(e, 1e-30));
  }
  const double peak = *std::max_element(energy.begin(), energy.end());
  constexpr double kFloor = 1e-10;
  double total = 0.0;
  std::size_t active = 0;
  for (std::size_t f = 0; f < tr.size(); ++f) {
    if (energy[f] < peak - 35.0) continue;
    double acc = 0.0;
    const auto& a = tx.frames[f].mag;
    const auto& b = tr.frames[f].mag;
    for (std::size_t k = 0; k < a.size(); ++k) {
      const double d = 10.0 * std::log10(std::max(a[k] * a[k], kFloor)) -
                       10.0 * std::log10(std::max(b[k] * b[k], kFloor));
      acc += d * d;
    }
    total += std::sqrt(acc / static_cast<double>(a.size()));
    ++active;
  }
  if (active == 0 || peak <= -300.0) throw ValidationError("reference has no active frames");
  return total / static_cast<double>(active);
}

double lsd_fitness(const AudioBuffer& processed, const AudioBuffer& clean,
                   const AudioBuffer& mixture, const StftConfig& config) {
  if (processed.size() != clean.size() || mixture.size() != clean.size()) {
    throw AlignmentError("fitness signals differ in length");
  }
  return log_spectral_distance(mixture, clean, config) -
         log_spectral_distance(processed, clean, config);
}

GaDriver::GaDriver(GaConfig cfg, ParamGrid grid, FitnessMode mode)
    : cfg_(cfg), grid_(std::move(grid)), mode_(mode), rng_(cfg.seed),
      pair_rng_(cfg.seed ^ 0x9e3779b97f4a7c15ULL) {
  cfg_.validate();
  population_ = init_population(cfg_, grid_, rng_);
  start_generation();
}

void GaDriver::start_generation() {
  pairs_.clear();
  pair_cursor_ = 0;
  wins_.assign(population_.size(), 0.0);
  if (mode_ == FitnessMode::kPaired) plan_pairs();
}

void GaDriver::plan_pairs() {
  for (std::size_t i = 0; i < population_.size(); ++i) {
    for (std::size_t j = i + 1; j < population_.size(); ++j) {
      if (population_[i] == population_[j]) {
        wins_[i] += 0.5;
        wins_[j] += 0.5;
      } else {
        pairs_.emplace_back(i, j);
      }
    }
  }
  std::shuffle(pairs_.begin(), pairs_.end(), pair_rng_);
  std::bernoulli_distribution swap(0.5);
  for (auto& p : pairs_) {
    if (swap(pair_rng_)) std::swap(p.first, p.second);
  }
  if (pairs_.empty()) submit_scores(wins_);
}

void GaDriver::submit_scores(std::span<const double> scores) {
  if (finished_) throw StateError("GA run already finished");
  if (scores.size() != population_.size()) {
    throw ValidationError("need one score per population member");
  }
  GenerationRecord rec;
  rec.generation = generation_;
  rec.genomes = population_;
  rec.scores.assign(scores.begin(), scores.end());
  const std::size_t best = best_index(scores);
  rec.elite = population_[best];
  rec.elite_score = scores[best];
  history_.push_back(rec);
  evaluated_.insert(population_.begin(), population_.end());

  if (last_elite_ && *last_elite_ == rec.elite) {
    ++stale_;
  } else {
    stale_ = 0;
  }
  last_elite_ = rec.elite;

  if (stale_ >= cfg_.convergence_patience) {
    finished_ = true;
    converged_ = true;
    return;
  }
  if (generation_ + 1 >= cfg_.max_generations) {
    finished_ = true;
    return;
  }
  population_ = evolve_generation(population_, scores, cfg_, grid_, rng_, &evaluated_);
  ++generation_;
  start_generation();
}

std::optional<PairTrial> GaDriver::next_pair() const {
  if (finished_ || mode_ != FitnessMode::kPaired || pair_cursor_ >= pairs_.size()) {
    return std::nullopt;
  }
  const auto [a, b] = pairs_[pair_cursor_];
  return PairTrial{generation_, pair_cursor_, a, b};
}

void GaDriver::submit_pair(int winner) {
  if (finished_) throw StateError("GA run already finished");
  if (mode_ != FitnessMode::kPaired || pair_cursor_ >= pairs_.size()) {
    throw StateError("no outstanding paired comparison");
  }
  if (winner != 0 && winner != 1) throw ValidationError("winner must be 0 or 1");
  const auto [a, b] = pairs_[pair_cursor_];
  wins_[winner == 0 ? a : b] += 1.0;
  ++pair_cursor_;
  if (pair_cursor_ == pairs_.size()) submit_scores(wins_);
}

void GaDriver::abandon() {
  abandoned_ = true;
  finished_ = true;
}

GaResult GaDriver::result() const {
  GaResult r;
  r.history = history_;
  r.converged = converged_;
  r.abandoned = abandoned_;
  if (!history_.empty()) {
    // Win counts are only comparable within a generation, so paired runs
    // report the latest elite.
    const GenerationRecord* best = &history_.back();
    if (mode_ == FitnessMode::kScores) {
      for (const auto& rec : history_) {
        if (rec.elite_score > best->elite_score) best = &rec;
      }
    }
    r.best = best->elite;
    r.best_params = grid_.params(r.best);
  }
  return r;
}

GaResult run_ga(const FitnessFn& fitness, const GaConfig& cfg, const ParamGrid& grid) {
  GaDriver driver(cfg, grid, FitnessMode::kScores);
  std::map<Genome, double> cache;
  while (!driver.finished()) {
    const auto& pop = driver.population();
    std::vector<Genome> todo;
    for (const auto& g : pop) {
      if (!cache.contains(g) && std::find(todo.begin(), todo.end(), g) == todo.end()) {
        todo.push_back(g);
      }
    }
    std::vector<double> values(todo.size());
    std::exception_ptr failure;
    const auto count = static_cast<std::ptrdiff_t>(todo.size());
#pragma omp parallel for schedule(dynamic)
    for (std::ptrdiff_t i = 0; i < count; ++i) {
      try {
        values[i] = fitness(todo[i]);
      } catch (...) {
#pragma omp critical(sce_ga_failure)
        if (!failure) failure = std::current_exception();
      }
    }
    if (failure) std::rethrow_exception(failure);
    for (std::size_t i = 0; i < todo.size(); ++i) cache[todo[i]] = values[i];

    std::vector<double> scores;
    scores.reserve(pop.size());
    for (const auto& g : pop) scores.push_back(cache.at(g));
    driver.submit_scores(scores);
  }
  return driver.result();
}

GaResult run_ga_paired(const JudgeFn& judge, const GaConfig& cfg, const ParamGrid& grid) {
  GaDriver driver(cfg, grid, FitnessMode::kPaired);
  try {
    while (auto trial = driver.next_pair()) {
      const auto& pop = driver.population();
      driver.submit_pair(judge(pop[trial->first], pop[trial->second]));
    }
  } catch (const SessionTimeout&) {
    driver.abandon();
  }
  return driver.result();
}

AudioBuffer process_condition(const ObjectiveStimulus& stim, const SceParams& params) {
  const auto track = stft(stim.mixture, stim.stft, Exec::kSerial);
  std::vector<double> schedule;
  if (stim.gated) {
    const auto snr = isnr_track(stim.clean, stim.masker, stim.stft, Exec::kSerial);
    schedule = schedule_from_snr(snr, params, stim.gate);
  } else {
    schedule.assign(track.size(), params.s);
  }
  return istft(enhance_track(track, params, schedule, Exec::kSerial), Exec::kSerial);
}

double objective_fitness(const ObjectiveStimulus& stim, const SceParams& params) {
  const auto processed = process_condition(stim, params);
  const std::size_t n = processed.size();
  auto head = [n](const AudioBuffer& b) {
    return AudioBuffer(std::vector<double>(b.data().begin(),
                                           b.data().begin() + static_cast<std::ptrdiff_t>(n)),
                       b.sample_rate());
  };
  return lsd_fitness(processed, head(stim.clean), head(stim.mixture), stim.stft);
}

}  // namespace sce::ga
