#pragma once

// Run artifacts (front.json, history.csv, curve.csv) and post-run analysis.

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <filesystem>
#include <fstream>
#include <iomanip>
#include <limits>
#include <map>
#include <numeric>
#include <optional>
#include <sstream>
#include <string>
#include <utility>
#include <vector>

#include <nlohmann/json.hpp>

#include "adjfree/error.hpp"
#include "adjfree/moead.hpp"
#include "adjfree/objectives.hpp"

namespace adjfree {

struct FrontEntry {
  ObjectiveVector objectives;
  std::optional<std::string> wav;  // relative to the run directory
  std::optional<double> dense_max_confidence;
};

struct Front {
  std::vector<FrontEntry> entries;
  nlohmann::json config = nlohmann::json::object();
  std::uint64_t queries = 0;
};

inline nlohmann::json front_to_json(const Front& f) {
  nlohmann::json entries = nlohmann::json::array();
  for (const auto& e : f.entries) {
    nlohmann::json j{{"objectives", e.objectives}, {"wav", nullptr}};
    if (e.wav) j["wav"] = *e.wav;
    if (e.dense_max_confidence) j["dense_max_confidence"] = *e.dense_max_confidence;
    entries.push_back(std::move(j));
  }
  return {{"entries", entries}, {"config", f.config}, {"queries", f.queries}};
}

inline Front front_from_json(const nlohmann::json& j) {
  Front f;
  try {
    for (const auto& e : j.at("entries")) {
      FrontEntry fe;
      fe.objectives = e.at("objectives").get<ObjectiveVector>();
      if (e.contains("wav") && !e["wav"].is_null()) fe.wav = e["wav"].get<std::string>();
      if (e.contains("dense_max_confidence")) fe.dense_max_confidence = e["dense_max_confidence"].get<double>();
      f.entries.push_back(std::move(fe));
    }
    f.config = j.value("config", nlohmann::json::object());
    f.queries = j.at("queries").get<std::uint64_t>();
  } catch (const nlohmann::json::exception& e) {
    throw InvalidArgument(std::string("front.json does not match schema: ") + e.what());
  }
  return f;
}

inline nlohmann::json read_json(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw IoError("cannot open " + path.string());
  try {
    return nlohmann::json::parse(in);
  } catch (const nlohmann::json::exception& e) {
    throw InvalidArgument(path.string() + ": " + e.what());
  }
}

inline void write_text(const std::filesystem::path& path, const std::string& text) {
  std::ofstream out(path, std::ios::trunc);
  if (!out) throw IoError("cannot open " + path.string() + " for writing");
  out << text;
  if (!out) throw IoError("write failed for " + path.string());
}

inline void write_json(const std::filesystem::path& path, const nlohmann::json& j) { write_text(path, j.dump(2) + "\n"); }

inline Front load_front(const std::filesystem::path& path) { return front_from_json(read_json(path)); }

inline std::string format_double(double v) {
  std::ostringstream s;
  s << std::setprecision(17) << v;
  return s.str();
}

inline std::string history_csv(const std::vector<GenerationStats>& history) {
  std::ostringstream s;
  s << "generation,queries,best_f1,mean_f1,best_f2,mean_f2,best_f3,mean_f3,archive_size\n";
  for (const auto& h : history) {
    s << h.generation << ',' << h.queries;
    for (std::size_t i = 0; i < 3; ++i) s << ',' << format_double(h.best[i]) << ',' << format_double(h.mean[i]);
    s << ',' << h.archive_size << '\n';
  }
  return s.str();
}

inline std::string curve_csv(const std::vector<LagPoint>& curve) {
  std::ostringstream s;
  s << "lag_seconds,correct_class_confidence\n";
  for (const auto& p : curve) s << format_double(p.lag) << ',' << format_double(p.confidence) << '\n';
  return s.str();
}

enum class SelectStrategy { kMinF1, kMinF1PlusF2, kKnee };

inline SelectStrategy parse_strategy(const std::string& s) {
  if (s == "min-f1") return SelectStrategy::kMinF1;
  if (s == "min-f1f2" || s == "min-sum") return SelectStrategy::kMinF1PlusF2;
  if (s == "knee") return SelectStrategy::kKnee;
  throw InvalidArgument("unknown selection strategy '" + s + "' (min-f1, min-f1f2, knee)");
}

/// Distance of each point in the f1-f2 plane from the chord joining the
/// min-f1 and min-f2 extremes.
inline std::vector<double> chord_distances(const std::vector<ObjectiveVector>& pts, std::size_t& lo_f1,
                                           std::size_t& lo_f2) {
  lo_f1 = lo_f2 = 0;
  for (std::size_t i = 1; i < pts.size(); ++i) {
    if (pts[i].f1 < pts[lo_f1].f1 || (pts[i].f1 == pts[lo_f1].f1 && pts[i].f2 < pts[lo_f1].f2)) lo_f1 = i;
    if (pts[i].f2 < pts[lo_f2].f2 || (pts[i].f2 == pts[lo_f2].f2 && pts[i].f1 < pts[lo_f2].f1)) lo_f2 = i;
  }
  const double ax = pts[lo_f1].f1, ay = pts[lo_f1].f2;
  const double dx = pts[lo_f2].f1 - ax, dy = pts[lo_f2].f2 - ay;
  const double len = std::hypot(dx, dy);
  std::vector<double> d(pts.size(), 0.0);
  if (len == 0.0) return d;
  for (std::size_t i = 0; i < pts.size(); ++i) {
    d[i] = std::abs(dx * (pts[i].f2 - ay) - dy * (pts[i].f1 - ax)) / len;
  }
  return d;
}

/// Index of the chosen entry. Knee: farthest from the extreme-point chord;
/// among ties, interior points beat the two extremes, then lower f1 wins.
inline std::size_t select_entry(const std::vector<ObjectiveVector>& pts, SelectStrategy strategy) {
  if (pts.empty()) throw InvalidArgument("cannot select from an empty front");
  auto better = [&](auto key) {
    std::size_t best = 0;
    for (std::size_t i = 1; i < pts.size(); ++i) {
      if (key(pts[i]) < key(pts[best])) best = i;
    }
    return best;
  };
  switch (strategy) {
    case SelectStrategy::kMinF1:
      return better([](const ObjectiveVector& o) { return o.f1; });
    case SelectStrategy::kMinF1PlusF2:
      return better([](const ObjectiveVector& o) { return o.f1 + o.f2; });
    case SelectStrategy::kKnee: {
      std::size_t lo_f1 = 0, lo_f2 = 0;
      const auto d = chord_distances(pts, lo_f1, lo_f2);
      constexpr double kTie = 1e-12;
      std::size_t best = lo_f1;
      for (std::size_t i = 0; i < pts.size(); ++i) {
        const bool endpoint = i == lo_f1 || i == lo_f2;
        const bool best_endpoint = best == lo_f1 || best == lo_f2;
        if (d[i] > d[best] + kTie) {
          best = i;
        } else if (std::abs(d[i] - d[best]) <= kTie) {
          if ((best_endpoint && !endpoint) || (best_endpoint == endpoint && pts[i].f1 < pts[best].f1)) best = i;
        }
      }
      return best;
    }
  }
  return 0;
}

/// Up to `k` entries closest (in f1-f2) to the knee, the knee first.
inline std::vector<std::size_t> knee_neighbors(const std::vector<ObjectiveVector>& pts, std::size_t k) {
  if (pts.empty()) return {};
  const std::size_t knee = select_entry(pts, SelectStrategy::kKnee);
  std::vector<std::size_t> idx(pts.size());
  std::iota(idx.begin(), idx.end(), 0);
  std::stable_sort(idx.begin(), idx.end(), [&](std::size_t a, std::size_t b) {
    const double da = std::hypot(pts[a].f1 - pts[knee].f1, pts[a].f2 - pts[knee].f2);
    const double db = std::hypot(pts[b].f1 - pts[knee].f1, pts[b].f2 - pts[knee].f2);
    return da < db || (da == db && a == knee);
  });
  idx.resize(std::min(k, idx.size()));
  return idx;
}

inline std::size_t objective_index(const std::string& name) {
  if (name == "f1") return 0;
  if (name == "f2") return 1;
  if (name == "f3") return 2;
  throw InvalidArgument("unknown objective axis '" + name + "'");
}

/// 2-D scatter data for the given pair of objective names, in entry order.
inline std::vector<std::pair<double, double>> project_front(const std::vector<ObjectiveVector>& pts,
                                                            const std::string& x_axis, const std::string& y_axis) {
  const std::size_t xi = objective_index(x_axis), yi = objective_index(y_axis);
  std::vector<std::pair<double, double>> out;
  out.reserve(pts.size());
  for (const auto& p : pts) out.emplace_back(p[xi], p[yi]);
  return out;
}

inline std::vector<ObjectiveVector> objectives_of(const std::vector<FrontEntry>& entries) {
  std::vector<ObjectiveVector> out;
  for (const auto& e : entries) out.push_back(e.objectives);
  return out;
}

/// What analysis needs from one finished attack.
struct RunSummary {
  std::string id;
  std::string target;
  std::vector<FrontEntry> entries;
  std::vector<GenerationStats> history;
  std::uint64_t queries = 0;
};

/// Reads front.json and run_meta.json from an attack output directory.
inline RunSummary load_run(const std::filesystem::path& dir) {
  RunSummary r;
  const Front f = load_front(dir / "front.json");
  const auto meta = read_json(dir / "run_meta.json");
  r.id = dir.filename().string();
  if (r.id.empty()) r.id = dir.parent_path().filename().string();
  r.target = meta.value("target", std::string{});
  r.entries = f.entries;
  r.queries = f.queries;
  for (const auto& e : r.entries) {
    if (e.wav && !std::filesystem::exists(dir / *e.wav)) {
      throw IoError("run " + r.id + " references missing file " + *e.wav);
    }
  }
  return r;
}

inline bool entry_passes(const FrontEntry& e, double threshold) {
  return e.dense_max_confidence.has_value() && *e.dense_max_confidence < threshold;
}

struct AblationRow {
  long bin = 0;
  FrontEntry with_std;     // from the f1-f2-f3 run
  FrontEntry without_std;  // from the f1-f3 run
  bool with_std_passes = false;
  bool without_std_passes = false;
  /// Lower-f2 member passes the dense-lag check while the higher-f2 one fails.
  bool finding = false;
};

struct AblationTable {
  std::vector<AblationRow> rows;
  bool budget_mismatch = false;
  double bin_width = 0.05;
};

inline long f1_bin(double f1, double width) { return static_cast<long>(std::floor(f1 / width + 1e-9)); }

/// Pairs the two runs' entries by f1 bin; each run contributes its lowest-f2
/// entry per bin.
inline AblationTable compare_ablation(const RunSummary& run_3obj, const RunSummary& run_2obj, double threshold,
                                      double bin_width = 0.05) {
  if (!(bin_width > 0.0)) throw InvalidArgument("bin width must be positive");
  AblationTable table;
  table.bin_width = bin_width;
  table.budget_mismatch = run_3obj.queries != run_2obj.queries;
  auto by_bin = [&](const RunSummary& r) {
    std::map<long, FrontEntry> m;
    for (const auto& e : r.entries) {
      const long b = f1_bin(e.objectives.f1, bin_width);
      auto it = m.find(b);
      if (it == m.end() || e.objectives.f2 < it->second.objectives.f2) m[b] = e;
    }
    return m;
  };
  const auto a = by_bin(run_3obj);
  const auto b = by_bin(run_2obj);
  for (const auto& [bin, ea] : a) {
    auto it = b.find(bin);
    if (it == b.end()) continue;
    AblationRow row{bin, ea, it->second, entry_passes(ea, threshold), entry_passes(it->second, threshold), false};
    const FrontEntry& low = ea.objectives.f2 <= it->second.objectives.f2 ? ea : it->second;
    const FrontEntry& high = &low == &ea ? it->second : ea;
    row.finding = low.objectives.f2 < high.objectives.f2 && entry_passes(low, threshold) &&
                  !entry_passes(high, threshold);
    table.rows.push_back(std::move(row));
  }
  return table;
}

inline std::string comparison_csv(const AblationTable& t) {
  std::ostringstream s;
  s << "f1_bin_lo,f1_3obj,f2_3obj,f3_3obj,dense_max_3obj,adjust_free_3obj,f1_2obj,f2_2obj,f3_2obj,dense_max_2obj,"
       "adjust_free_2obj,finding,budget_mismatch\n";
  auto dm = [](const FrontEntry& e) { return e.dense_max_confidence ? format_double(*e.dense_max_confidence) : ""; };
  for (const auto& r : t.rows) {
    s << format_double(static_cast<double>(r.bin) * t.bin_width) << ',' << format_double(r.with_std.objectives.f1)
      << ',' << format_double(r.with_std.objectives.f2) << ',' << format_double(r.with_std.objectives.f3) << ','
      << dm(r.with_std) << ',' << r.with_std_passes << ',' << format_double(r.without_std.objectives.f1) << ','
      << format_double(r.without_std.objectives.f2) << ',' << format_double(r.without_std.objectives.f3) << ','
      << dm(r.without_std) << ',' << r.without_std_passes << ',' << r.finding << ',' << t.budget_mismatch << '\n';
  }
  return s.str();
}

struct Tally {
  std::size_t passes = 0;
  std::size_t targets = 0;
  double fraction = 0.0;
  std::map<std::string, bool> verdicts;  // per target
};

/// Fraction of distinct targets for which some run holds an adjust-free entry.
inline Tally tally_adjust_free(const std::vector<RunSummary>& runs, double threshold) {
  if (runs.empty()) throw InvalidArgument("tally needs at least one run");
  Tally t;
  for (const auto& r : runs) {
    const std::string key = r.target.empty() ? r.id : r.target;
    bool pass = std::any_of(r.entries.begin(), r.entries.end(),
                            [&](const FrontEntry& e) { return entry_passes(e, threshold); });
    t.verdicts[key] = t.verdicts[key] || pass;
  }
  t.targets = t.verdicts.size();
  for (const auto& [k, v] : t.verdicts) t.passes += v ? 1 : 0;
  t.fraction = static_cast<double>(t.passes) / static_cast<double>(t.targets);
  return t;
}

inline nlohmann::json tally_to_json(const Tally& t, double threshold) {
  return {{"threshold", threshold}, {"passes", t.passes}, {"targets", t.targets}, {"fraction", t.fraction},
          {"verdicts", t.verdicts}};
}

}  // namespace adjfree
