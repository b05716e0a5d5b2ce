#pragma once

// MOEA/D with Tchebycheff decomposition, DE crossover and polynomial mutation
// (the MOEA/D-DE flavour), plus a bounded nondominated archive.
//
// Each generation builds one offspring per subproblem from the population as
// it stood at the start of the generation, evaluates the batch (possibly on
// several threads), then applies reference-point, population and archive
// updates sequentially in a seeded order. Results therefore never depend on
// the thread count.

#include <algorithm>
#include <atomic>
#include <cmath>
#include <cstdint>
#include <exception>
#include <filesystem>
#include <fstream>
#include <functional>
#include <limits>
#include <mutex>
#include <numeric>
#include <optional>
#include <random>
#include <span>
#include <sstream>
#include <string>
#include <thread>
#include <utility>
#include <vector>

#include <nlohmann/json.hpp>

#include "adjfree/error.hpp"
#include "adjfree/objectives.hpp"

namespace adjfree {

using Rng = std::mt19937_64;

inline constexpr double kZeroWeightEpsilon = 1e-6;

/// Non-negative weights summing to one.
struct WeightVector {
  std::vector<double> lambda;

  WeightVector() = default;
  explicit WeightVector(std::vector<double> l) : lambda(std::move(l)) {
    double sum = 0.0;
    for (double v : lambda) {
      if (!(v >= 0.0)) throw InvalidArgument("weight components must be non-negative");
      sum += v;
    }
    if (std::abs(sum - 1.0) > 1e-9) throw InvalidArgument("weights must sum to 1");
  }

  std::size_t size() const noexcept { return lambda.size(); }
  double operator[](std::size_t i) const { return lambda[i]; }
};

/// All vectors (i_1/h, ..., i_n/h) with non-negative integer i summing to h.
inline std::vector<WeightVector> simplex_lattice(std::size_t n_f, std::size_t h) {
  if (n_f < 1) throw InvalidArgument("simplex_lattice: need at least one objective");
  if (h < 1) throw InvalidArgument("simplex_lattice: h must be >= 1");
  std::vector<WeightVector> out;
  std::vector<std::size_t> counts(n_f, 0);
  std::function<void(std::size_t, std::size_t)> rec = [&](std::size_t dim, std::size_t left) {
    if (dim + 1 == n_f) {
      counts[dim] = left;
      std::vector<double> l(n_f);
      for (std::size_t i = 0; i < n_f; ++i) l[i] = static_cast<double>(counts[i]) / static_cast<double>(h);
      // Exact-rational lattice; renormalize away the last-bit rounding.
      const double s = std::accumulate(l.begin(), l.end(), 0.0);
      for (double& v : l) v /= s;
      out.emplace_back(std::move(l));
      return;
    }
    for (std::size_t i = 0; i <= left; ++i) {
      counts[dim] = left - i;
      rec(dim + 1, i);
    }
  };
  rec(0, h);
  return out;
}

inline std::size_t lattice_size(std::size_t n_f, std::size_t h) {
  // C(h + n_f - 1, n_f - 1)
  double c = 1.0;
  for (std::size_t i = 1; i < n_f; ++i) c = c * static_cast<double>(h + i) / static_cast<double>(i);
  return static_cast<std::size_t>(std::llround(c));
}

struct WeightSet {
  std::vector<WeightVector> weights;
  std::size_t lattice_divisions = 0;
  std::size_t random_fill = 0;
  std::string note;  // non-empty when the lattice could not match n_pop exactly
};

/// Largest simplex lattice with at most n_pop points, topped up with uniform
/// random simplex samples so that exactly n_pop weights are returned.
inline WeightSet make_weights(std::size_t n_f, std::size_t n_pop, Rng& rng) {
  if (n_pop < n_f) throw InvalidArgument("population smaller than the number of objectives");
  std::size_t h = 1;
  while (lattice_size(n_f, h + 1) <= n_pop) ++h;
  WeightSet ws;
  ws.weights = simplex_lattice(n_f, h);
  ws.lattice_divisions = h;
  ws.random_fill = n_pop - ws.weights.size();
  if (ws.random_fill > 0) {
    std::ostringstream msg;
    msg << "population " << n_pop << " is not a simplex-lattice size; using lattice h=" << h << " ("
        << ws.weights.size() << " vectors) plus " << ws.random_fill << " random weight vectors";
    ws.note = msg.str();
    std::uniform_real_distribution<double> u(0.0, 1.0);
    for (std::size_t k = 0; k < ws.random_fill; ++k) {
      std::vector<double> l(n_f);
      double s = 0.0;
      for (double& v : l) {
        v = -std::log(1.0 - u(rng));
        s += v;
      }
      for (double& v : l) v /= s;
      ws.weights.emplace_back(std::move(l));
    }
  }
  return ws;
}

/// Best value seen so far for each active objective.
struct ReferencePoint {
  std::vector<double> z;

  static ReferencePoint unset(std::size_t n) {
    return {std::vector<double>(n, std::numeric_limits<double>::infinity())};
  }
};

/// Objective values restricted to the optimizer's active set.
inline std::vector<double> project(const ObjectiveVector& o, const std::vector<std::size_t>& active) {
  std::vector<double> out(active.size());
  for (std::size_t i = 0; i < active.size(); ++i) out[i] = o[active[i]];
  return out;
}

/// max_i lambda_i * |f_i - z_i|, zero weights replaced by 1e-6.
inline double tchebycheff(std::span<const double> f, const WeightVector& w, const ReferencePoint& z) {
  if (f.size() != w.size() || f.size() != z.z.size()) throw InvalidArgument("tchebycheff: dimension mismatch");
  double worst = -std::numeric_limits<double>::infinity();
  for (std::size_t i = 0; i < f.size(); ++i) {
    const double l = w[i] == 0.0 ? kZeroWeightEpsilon : w[i];
    worst = std::max(worst, l * std::abs(f[i] - z.z[i]));
  }
  return worst;
}

inline double tchebycheff(const ObjectiveVector& f, const WeightVector& w, const ReferencePoint& z) {
  const std::vector<double> all{f.f1, f.f2, f.f3};
  return tchebycheff(std::span<const double>(all), w, z);
}

inline ReferencePoint update_reference(ReferencePoint z, std::span<const double> f) {
  if (z.z.size() != f.size()) throw InvalidArgument("update_reference: dimension mismatch");
  for (std::size_t i = 0; i < f.size(); ++i) z.z[i] = std::min(z.z[i], f[i]);
  return z;
}

inline ReferencePoint update_reference(ReferencePoint z, const ObjectiveVector& f) {
  const std::vector<double> all{f.f1, f.f2, f.f3};
  return update_reference(std::move(z), std::span<const double>(all));
}

/// DE/rand/1/bin: trial = a + F (b - c) on crossed dimensions, x elsewhere;
/// one random dimension is always crossed. Clamped to x's box.
inline Genome de_crossover(const Genome& x, const Genome& a, const Genome& b, const Genome& c, double f_scale,
                           double cr, Rng& rng) {
  const std::size_t n = x.size();
  if (a.size() != n || b.size() != n || c.size() != n) throw InvalidArgument("de_crossover: length mismatch");
  if (n == 0) return x;
  std::uniform_real_distribution<double> u(0.0, 1.0);
  std::uniform_int_distribution<std::size_t> pick(0, n - 1);
  const std::size_t forced = pick(rng);
  Genome out = x;
  for (std::size_t d = 0; d < n; ++d) {
    if (u(rng) < cr || d == forced) out.rho[d] = a.rho[d] + f_scale * (b.rho[d] - c.rho[d]);
    out.rho[d] = std::clamp(out.rho[d], -x.bound, x.bound);
  }
  return out;
}

/// Deb's bounded polynomial mutation with distribution index eta.
inline Genome polynomial_mutation(Genome g, double p_m, double eta, Rng& rng) {
  if (!(p_m >= 0.0 && p_m <= 1.0)) throw InvalidArgument("mutation probability outside [0, 1]");
  if (!(eta > 0.0)) throw InvalidArgument("mutation eta must be positive");
  const double lo = -g.bound, hi = g.bound, span = hi - lo;
  if (!(span > 0.0)) return g;
  std::uniform_real_distribution<double> u(0.0, 1.0);
  const double pow_exp = 1.0 / (eta + 1.0);
  for (double& y : g.rho) {
    if (!(u(rng) < p_m)) continue;
    const double d1 = (y - lo) / span;
    const double d2 = (hi - y) / span;
    const double r = u(rng);
    double dq = 0.0;
    if (r <= 0.5) {
      const double val = 2.0 * r + (1.0 - 2.0 * r) * std::pow(1.0 - d1, eta + 1.0);
      dq = std::pow(val, pow_exp) - 1.0;
    } else {
      const double val = 2.0 * (1.0 - r) + 2.0 * (r - 0.5) * std::pow(1.0 - d2, eta + 1.0);
      dq = 1.0 - std::pow(val, pow_exp);
    }
    y = std::clamp(y + dq * span, lo, hi);
  }
  return g;
}

/// Minimization Pareto dominance over the given objective indices.
inline bool dominates(const ObjectiveVector& a, const ObjectiveVector& b, const std::vector<std::size_t>& active) {
  bool strictly = false;
  for (std::size_t i : active) {
    if (a[i] > b[i]) return false;
    if (a[i] < b[i]) strictly = true;
  }
  return strictly;
}

inline bool same_point(const ObjectiveVector& a, const ObjectiveVector& b, const std::vector<std::size_t>& active) {
  for (std::size_t i : active) {
    if (a[i] != b[i]) return false;
  }
  return true;
}

struct ArchiveEntry {
  Genome genome;
  ObjectiveVector objectives;
};

/// Nondominated set with crowding-distance truncation. Points equal in every
/// active objective to a member are treated as already present.
class ParetoArchive {
 public:
  explicit ParetoArchive(std::size_t capacity = 100, std::vector<std::size_t> active = {0, 1, 2})
      : capacity_(capacity), active_(std::move(active)) {
    if (capacity_ == 0) throw InvalidArgument("archive capacity must be positive");
  }

  /// Returns true if the entry was added.
  bool insert(ArchiveEntry e) {
    for (const auto& m : entries_) {
      if (dominates(m.objectives, e.objectives, active_) || same_point(m.objectives, e.objectives, active_)) {
        return false;
      }
    }
    std::erase_if(entries_, [&](const ArchiveEntry& m) { return dominates(e.objectives, m.objectives, active_); });
    entries_.push_back(std::move(e));
    while (entries_.size() > capacity_) {
      const auto cd = crowding_distances();
      const auto victim = std::min_element(cd.begin(), cd.end()) - cd.begin();
      entries_.erase(entries_.begin() + victim);
    }
    return true;
  }

  /// NSGA-II crowding distance of each member on the active objectives.
  std::vector<double> crowding_distances() const {
    const std::size_t n = entries_.size();
    std::vector<double> cd(n, 0.0);
    if (n <= 2) {
      std::fill(cd.begin(), cd.end(), std::numeric_limits<double>::infinity());
      return cd;
    }
    std::vector<std::size_t> idx(n);
    for (std::size_t obj : active_) {
      std::iota(idx.begin(), idx.end(), 0);
      std::stable_sort(idx.begin(), idx.end(), [&](std::size_t a, std::size_t b) {
        return entries_[a].objectives[obj] < entries_[b].objectives[obj];
      });
      const double lo = entries_[idx.front()].objectives[obj];
      const double hi = entries_[idx.back()].objectives[obj];
      cd[idx.front()] = cd[idx.back()] = std::numeric_limits<double>::infinity();
      if (!(hi > lo)) continue;
      for (std::size_t k = 1; k + 1 < n; ++k) {
        cd[idx[k]] += (entries_[idx[k + 1]].objectives[obj] - entries_[idx[k - 1]].objectives[obj]) / (hi - lo);
      }
    }
    return cd;
  }

  /// True if no member dominates another (quadratic scan).
  bool dominance_free() const {
    for (std::size_t i = 0; i < entries_.size(); ++i) {
      for (std::size_t j = 0; j < entries_.size(); ++j) {
        if (i != j && dominates(entries_[i].objectives, entries_[j].objectives, active_)) return false;
      }
    }
    return true;
  }

  const std::vector<ArchiveEntry>& entries() const noexcept { return entries_; }
  std::size_t size() const noexcept { return entries_.size(); }
  bool empty() const noexcept { return entries_.empty(); }
  std::size_t capacity() const noexcept { return capacity_; }
  const std::vector<std::size_t>& active() const noexcept { return active_; }

 private:
  std::size_t capacity_;
  std::vector<std::size_t> active_;
  std::vector<ArchiveEntry> entries_;
};

inline bool archive_insert(ParetoArchive& archive, ArchiveEntry e) { return archive.insert(std::move(e)); }

struct Subproblem {
  WeightVector weight;
  std::vector<std::size_t> neighbors;  // nearest first, includes self
  Genome current;
  ObjectiveVector current_objs;
};

/// Indices of the `t` weight vectors nearest to each weight (self first).
inline std::vector<std::vector<std::size_t>> weight_neighborhoods(const std::vector<WeightVector>& weights,
                                                                  std::size_t t) {
  const std::size_t n = weights.size();
  t = std::min(t, n);
  std::vector<std::vector<std::size_t>> out(n);
  std::vector<double> dist(n);
  for (std::size_t i = 0; i < n; ++i) {
    for (std::size_t j = 0; j < n; ++j) {
      double s = 0.0;
      for (std::size_t k = 0; k < weights[i].size(); ++k) {
        const double d = weights[i][k] - weights[j][k];
        s += d * d;
      }
      dist[j] = s;
    }
    std::vector<std::size_t> idx(n);
    std::iota(idx.begin(), idx.end(), 0);
    std::stable_sort(idx.begin(), idx.end(), [&](std::size_t a, std::size_t b) {
      if (a == i) return b != i;
      if (b == i) return false;
      return dist[a] < dist[b];
    });
    idx.resize(t);
    out[i] = std::move(idx);
  }
  return out;
}

/// Offers an evaluated child to every subproblem in `range` (visited in random
/// order) and replaces incumbents whose Tchebycheff value it strictly improves,
/// stopping after `n_r` replacements. Returns the number of replacements.
inline std::size_t update_population(std::vector<Subproblem>& subs, const Genome& child,
                                     const ObjectiveVector& child_objs, std::vector<std::size_t> range,
                                     const ReferencePoint& z, std::size_t n_r, Rng& rng,
                                     const std::vector<std::size_t>& active) {
  std::shuffle(range.begin(), range.end(), rng);
  const auto fc = project(child_objs, active);
  std::size_t replaced = 0;
  for (std::size_t j : range) {
    if (replaced >= n_r) break;
    Subproblem& s = subs[j];
    const auto fs = project(s.current_objs, active);
    if (tchebycheff(fc, s.weight, z) < tchebycheff(fs, s.weight, z)) {
      s.current = child;
      s.current_objs = child_objs;
      ++replaced;
    }
  }
  return replaced;
}

struct RunConfig {
  std::size_t n_pop = 91;
  std::size_t n_gen = 2000;
  std::size_t neighborhood = 20;
  double de_scale = 0.5;
  double crossover_rate = 0.9;
  double mutation_prob = -1.0;  // negative: 1 / dimension
  double mutation_eta = 20.0;
  double neighbor_mating_prob = 0.9;
  std::size_t replacement_limit = 2;
  std::uint64_t seed = 1;
  ObjectiveSet objectives = ObjectiveSet::kF1F2F3;
  double bound = kDefaultBound;
  std::size_t archive_capacity = 100;
  std::uint64_t max_queries = 0;  // 0: unlimited
  std::size_t threads = 1;

  void validate() const {
    const std::size_t n_f = active_objectives(objectives).size();
    if (n_pop < n_f) throw InvalidArgument("population smaller than number of objectives");
    if (!(de_scale > 0.0 && de_scale <= 1.0)) throw InvalidArgument("DE scale F must lie in (0, 1]");
    if (!(crossover_rate >= 0.0 && crossover_rate <= 1.0)) throw InvalidArgument("CR must lie in [0, 1]");
    if (neighborhood < 2) throw InvalidArgument("neighborhood size must be >= 2");
    if (!(neighbor_mating_prob >= 0.0 && neighbor_mating_prob <= 1.0)) {
      throw InvalidArgument("neighbor mating probability must lie in [0, 1]");
    }
    if (replacement_limit == 0) throw InvalidArgument("replacement limit must be >= 1");
    if (!(bound > 0.0 && bound <= 1.0)) throw InvalidArgument("bound must lie in (0, 1]");
    if (mutation_prob > 1.0) throw InvalidArgument("mutation probability must be <= 1");
    if (!(mutation_eta > 0.0)) throw InvalidArgument("mutation eta must be positive");
    if (archive_capacity == 0) throw InvalidArgument("archive capacity must be positive");
  }
};

/// Per-generation population statistics.
struct GenerationStats {
  std::size_t generation = 0;
  std::uint64_t queries = 0;
  ObjectiveVector best;  // componentwise minimum over the population
  ObjectiveVector mean;
  std::array<std::size_t, 3> best_index{};  // subproblem holding each minimum
  std::size_t archive_size = 0;
};

inline void to_json(nlohmann::json& j, const ObjectiveVector& o) { j = {{"f1", o.f1}, {"f2", o.f2}, {"f3", o.f3}}; }
inline void from_json(const nlohmann::json& j, ObjectiveVector& o) {
  o.f1 = j.at("f1").get<double>();
  o.f2 = j.at("f2").get<double>();
  o.f3 = j.at("f3").get<double>();
}

inline nlohmann::json config_to_json(const RunConfig& c) {
  return {{"n_pop", c.n_pop},
          {"n_gen", c.n_gen},
          {"neighborhood", c.neighborhood},
          {"de_scale", c.de_scale},
          {"crossover_rate", c.crossover_rate},
          {"mutation_prob", c.mutation_prob},
          {"mutation_eta", c.mutation_eta},
          {"neighbor_mating_prob", c.neighbor_mating_prob},
          {"replacement_limit", c.replacement_limit},
          {"seed", c.seed},
          {"objectives", to_string(c.objectives)},
          {"bound", c.bound},
          {"archive_capacity", c.archive_capacity},
          {"max_queries", c.max_queries}};
}

inline RunConfig config_from_json(const nlohmann::json& j) {
  RunConfig c;
  c.n_pop = j.at("n_pop").get<std::size_t>();
  c.n_gen = j.at("n_gen").get<std::size_t>();
  c.neighborhood = j.at("neighborhood").get<std::size_t>();
  c.de_scale = j.at("de_scale").get<double>();
  c.crossover_rate = j.at("crossover_rate").get<double>();
  c.mutation_prob = j.at("mutation_prob").get<double>();
  c.mutation_eta = j.at("mutation_eta").get<double>();
  c.neighbor_mating_prob = j.at("neighbor_mating_prob").get<double>();
  c.replacement_limit = j.at("replacement_limit").get<std::size_t>();
  c.seed = j.at("seed").get<std::uint64_t>();
  c.objectives = parse_objective_set(j.at("objectives").get<std::string>());
  c.bound = j.at("bound").get<double>();
  c.archive_capacity = j.at("archive_capacity").get<std::size_t>();
  c.max_queries = j.at("max_queries").get<std::uint64_t>();
  return c;
}

/// Generation-level state machine; see the file comment for the update order.
class Moead {
 public:
  Moead(EvalContext& ctx, RunConfig cfg)
      : ctx_(&ctx),
        cfg_(std::move(cfg)),
        active_(active_objectives(cfg_.objectives)),
        rng_(cfg_.seed),
        archive_(cfg_.archive_capacity, active_) {
    cfg_.validate();
    WeightSet ws = make_weights(active_.size(), cfg_.n_pop, rng_);
    note_ = ws.note;
    const auto nbrs = weight_neighborhoods(ws.weights, cfg_.neighborhood);
    subs_.resize(cfg_.n_pop);
    for (std::size_t i = 0; i < cfg_.n_pop; ++i) {
      subs_[i].weight = ws.weights[i];
      subs_[i].neighbors = nbrs[i];
    }
    z_ = ReferencePoint::unset(active_.size());
  }

  /// Uniform random genomes in the box, evaluated; generation 0.
  void initialize() {
    const std::size_t dim = ctx_->dimension();
    std::uniform_real_distribution<double> u(-cfg_.bound, cfg_.bound);
    std::vector<Genome> genomes(subs_.size());
    std::vector<std::uint64_t> seeds(subs_.size());
    for (std::size_t i = 0; i < subs_.size(); ++i) {
      genomes[i] = Genome::zeros(dim, cfg_.bound);
      for (double& v : genomes[i].rho) v = u(rng_);
      seeds[i] = rng_();
    }
    const auto objs = evaluate_batch(genomes, seeds);
    for (std::size_t i = 0; i < subs_.size(); ++i) {
      subs_[i].current = std::move(genomes[i]);
      subs_[i].current_objs = objs[i];
      z_ = update_reference(std::move(z_), project(objs[i], active_));
      archive_.insert({subs_[i].current, objs[i]});
    }
    generation_ = 0;
    initialized_ = true;
    record_stats();
  }

  bool initialized() const noexcept { return initialized_; }
  bool finished() const {
    return generation_ >= cfg_.n_gen || !budget_allows_generation();
  }

  /// Runs one generation. Classifier failures leave the state exactly as it
  /// was before the call (and rethrow).
  void step() {
    if (!initialized_) throw InvalidArgument("Moead::step before initialize");
    const Rng rng_before = rng_;
    const std::uint64_t queries_before = ctx_->queries();

    const std::size_t n = subs_.size();
    const std::size_t dim = ctx_->dimension();
    const double p_m = cfg_.mutation_prob < 0.0 ? 1.0 / static_cast<double>(std::max<std::size_t>(dim, 1))
                                                : cfg_.mutation_prob;
    std::vector<std::size_t> order(n);
    std::iota(order.begin(), order.end(), 0);
    std::shuffle(order.begin(), order.end(), rng_);

    std::uniform_real_distribution<double> u(0.0, 1.0);
    std::vector<Genome> children(n);
    std::vector<std::uint64_t> seeds(n);
    std::vector<bool> local(n);
    std::vector<std::size_t> all(n);
    std::iota(all.begin(), all.end(), 0);
    for (std::size_t k = 0; k < n; ++k) {
      const std::size_t i = order[k];
      local[k] = u(rng_) < cfg_.neighbor_mating_prob;
      const auto& range = local[k] ? subs_[i].neighbors : all;
      const auto [b, c] = pick_two(range, i);
      Genome child = de_crossover(subs_[i].current, subs_[i].current, subs_[b].current, subs_[c].current,
                                  cfg_.de_scale, cfg_.crossover_rate, rng_);
      children[k] = polynomial_mutation(std::move(child), p_m, cfg_.mutation_eta, rng_);
      seeds[k] = rng_();
    }

    std::vector<ObjectiveVector> objs;
    try {
      objs = evaluate_batch(children, seeds);
    } catch (...) {
      rng_ = rng_before;
      ctx_->set_queries(queries_before);
      throw;
    }

    for (std::size_t k = 0; k < n; ++k) {
      const std::size_t i = order[k];
      z_ = update_reference(std::move(z_), project(objs[k], active_));
      update_population(subs_, children[k], objs[k], local[k] ? subs_[i].neighbors : all, z_,
                        cfg_.replacement_limit, rng_, active_);
      archive_.insert({std::move(children[k]), objs[k]});
    }
    ++generation_;
    record_stats();
  }

  /// Steps until n_gen or the query budget is reached. `on_generation` is
  /// called after initialization and after every generation.
  void run(const std::function<void(const Moead&)>& on_generation = {}) {
    if (!initialized_) {
      initialize();
      if (on_generation) on_generation(*this);
    }
    while (!finished()) {
      step();
      if (on_generation) on_generation(*this);
    }
  }

  const RunConfig& config() const noexcept { return cfg_; }
  const std::vector<Subproblem>& subproblems() const noexcept { return subs_; }
  const ReferencePoint& reference() const noexcept { return z_; }
  const ParetoArchive& archive() const noexcept { return archive_; }
  const std::vector<GenerationStats>& history() const noexcept { return history_; }
  const std::vector<std::size_t>& active() const noexcept { return active_; }
  std::size_t generation() const noexcept { return generation_; }
  const std::string& note() const noexcept { return note_; }
  const EvalContext& context() const noexcept { return *ctx_; }

  /// Closed-form query count after `generations` completed generations.
  std::uint64_t expected_queries(std::size_t generations) const {
    return static_cast<std::uint64_t>(ctx_->schedule().size()) * (cfg_.n_pop + generations * cfg_.n_pop);
  }

  nlohmann::json checkpoint() const {
    using nlohmann::json;
    std::ostringstream rng_state;
    rng_state << rng_;
    json pop = json::array();
    for (const auto& s : subs_) {
      pop.push_back({{"weight", s.weight.lambda}, {"genome", s.current.rho}, {"objectives", s.current_objs}});
    }
    json arch = json::array();
    for (const auto& e : archive_.entries()) arch.push_back({{"genome", e.genome.rho}, {"objectives", e.objectives}});
    json hist = json::array();
    for (const auto& h : history_) hist.push_back(stats_to_json(h));
    return {{"generation", generation_}, {"initialized", initialized_}, {"rng", rng_state.str()},
            {"queries", ctx_->queries()}, {"config", config_to_json(cfg_)}, {"reference", z_.z},
            {"population", pop}, {"archive", arch}, {"history", hist}};
  }

  /// Restores state saved by checkpoint(). The engine must have been built
  /// with the same configuration and an equivalent context.
  void restore(const nlohmann::json& j) {
    if (!j.at("initialized").get<bool>()) return;
    const RunConfig saved = config_from_json(j.at("config"));
    if (saved.n_pop != cfg_.n_pop || saved.objectives != cfg_.objectives || saved.seed != cfg_.seed) {
      throw InvalidArgument("checkpoint was written with a different configuration");
    }
    std::istringstream rng_state(j.at("rng").get<std::string>());
    rng_state >> rng_;
    if (!rng_state) throw InvalidArgument("checkpoint: bad rng state");
    generation_ = j.at("generation").get<std::size_t>();
    ctx_->set_queries(j.at("queries").get<std::uint64_t>());
    z_.z = j.at("reference").get<std::vector<double>>();
    const auto& pop = j.at("population");
    if (pop.size() != subs_.size()) throw InvalidArgument("checkpoint: population size mismatch");
    for (std::size_t i = 0; i < subs_.size(); ++i) {
      subs_[i].weight = WeightVector(pop[i].at("weight").get<std::vector<double>>());
      subs_[i].current = Genome{pop[i].at("genome").get<std::vector<double>>(), cfg_.bound};
      subs_[i].current_objs = pop[i].at("objectives").get<ObjectiveVector>();
      if (subs_[i].current.size() != ctx_->dimension()) throw InvalidArgument("checkpoint: genome length mismatch");
    }
    std::vector<WeightVector> weights;
    for (const auto& s : subs_) weights.push_back(s.weight);
    const auto nbrs = weight_neighborhoods(weights, cfg_.neighborhood);
    for (std::size_t i = 0; i < subs_.size(); ++i) subs_[i].neighbors = nbrs[i];
    archive_ = ParetoArchive(cfg_.archive_capacity, active_);
    for (const auto& e : j.at("archive")) {
      archive_.insert({Genome{e.at("genome").get<std::vector<double>>(), cfg_.bound},
                       e.at("objectives").get<ObjectiveVector>()});
    }
    history_.clear();
    for (const auto& h : j.at("history")) history_.push_back(stats_from_json(h));
    initialized_ = true;
  }

  static nlohmann::json stats_to_json(const GenerationStats& h) {
    return {{"generation", h.generation}, {"queries", h.queries},   {"best", h.best},
            {"mean", h.mean},             {"best_index", h.best_index}, {"archive_size", h.archive_size}};
  }

  static GenerationStats stats_from_json(const nlohmann::json& j) {
    GenerationStats h;
    h.generation = j.at("generation").get<std::size_t>();
    h.queries = j.at("queries").get<std::uint64_t>();
    h.best = j.at("best").get<ObjectiveVector>();
    h.mean = j.at("mean").get<ObjectiveVector>();
    h.best_index = j.at("best_index").get<std::array<std::size_t, 3>>();
    h.archive_size = j.at("archive_size").get<std::size_t>();
    return h;
  }

 private:
  bool budget_allows_generation() const {
    if (cfg_.max_queries == 0) return true;
    const std::uint64_t per_gen = static_cast<std::uint64_t>(ctx_->schedule().size()) * subs_.size();
    return ctx_->queries() + per_gen <= cfg_.max_queries;
  }

  std::pair<std::size_t, std::size_t> pick_two(const std::vector<std::size_t>& range, std::size_t self) {
    std::vector<std::size_t> pool;
    pool.reserve(range.size());
    for (std::size_t r : range) {
      if (r != self) pool.push_back(r);
    }
    if (pool.empty()) return {self, self};
    if (pool.size() == 1) return {pool[0], self};
    std::uniform_int_distribution<std::size_t> pick(0, pool.size() - 1);
    const std::size_t b = pick(rng_);
    std::size_t c = pick(rng_);
    while (c == b) c = pick(rng_);
    return {pool[b], pool[c]};
  }

  std::vector<ObjectiveVector> evaluate_batch(const std::vector<Genome>& genomes,
                                              const std::vector<std::uint64_t>& seeds) const {
    std::vector<ObjectiveVector> out(genomes.size());
    const std::size_t workers =
        ctx_->model().concurrent() ? std::min<std::size_t>(std::max<std::size_t>(cfg_.threads, 1), genomes.size()) : 1;
    if (workers <= 1) {
      for (std::size_t i = 0; i < genomes.size(); ++i) out[i] = ctx_->evaluate(genomes[i], seeds[i]);
      return out;
    }
    std::atomic<std::size_t> next{0};
    std::exception_ptr failure;
    std::mutex failure_mutex;
    std::vector<std::thread> pool;
    for (std::size_t w = 0; w < workers; ++w) {
      pool.emplace_back([&] {
        for (std::size_t i = next++; i < genomes.size(); i = next++) {
          try {
            out[i] = ctx_->evaluate(genomes[i], seeds[i]);
          } catch (...) {
            std::lock_guard lock(failure_mutex);
            if (!failure) failure = std::current_exception();
            next = genomes.size();
          }
        }
      });
    }
    for (auto& t : pool) t.join();
    if (failure) std::rethrow_exception(failure);
    return out;
  }

  void record_stats() {
    GenerationStats h;
    h.generation = generation_;
    h.queries = ctx_->queries();
    h.archive_size = archive_.size();
    for (std::size_t obj = 0; obj < 3; ++obj) {
      h.best[obj] = std::numeric_limits<double>::infinity();
      double sum = 0.0;
      for (std::size_t i = 0; i < subs_.size(); ++i) {
        const double v = subs_[i].current_objs[obj];
        sum += v;
        if (v < h.best[obj]) {
          h.best[obj] = v;
          h.best_index[obj] = i;
        }
      }
      h.mean[obj] = sum / static_cast<double>(subs_.size());
    }
    history_.push_back(h);
  }

  EvalContext* ctx_;
  RunConfig cfg_;
  std::vector<std::size_t> active_;
  Rng rng_;
  std::vector<Subproblem> subs_;
  ReferencePoint z_;
  ParetoArchive archive_;
  std::vector<GenerationStats> history_;
  std::size_t generation_ = 0;
  bool initialized_ = false;
  std::string note_;
};

struct RunResult {
  ParetoArchive archive;
  std::vector<GenerationStats> history;
  std::uint64_t queries = 0;
  std::string correct_label;
  double clean_confidence = 0.0;
};

/// Attack settings that shape the evaluation context rather than the search.
struct AttackSetup {
  double t_max = kDefaultTmax;
  std::size_t n_lags = kDefaultLagCount;
  MfccConfig mfcc{};
  EvalOptions eval{};
};

/// One-call attack: builds the evaluation context and runs MOEA/D to completion.
inline RunResult run(const Waveform& target, Classifier& model, const RunConfig& cfg, const AttackSetup& setup = {},
                     const std::function<void(const Moead&)>& on_generation = {}) {
  EvalContext ctx(target, model, default_lag_schedule(setup.t_max, setup.n_lags), setup.mfcc, setup.eval);
  Moead engine(ctx, cfg);
  engine.run(on_generation);
  return {engine.archive(), engine.history(), ctx.queries(), ctx.correct_label(), ctx.clean_confidence()};
}

}  // namespace adjfree
