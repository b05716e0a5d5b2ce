// adjfree: command-line front end for lag-robust audio perturbation search.

#include <chrono>
#include <cstdio>
#include <filesystem>
#include <iostream>
#include <memory>
#include <string>
#include <vector>

#include <CLI11.hpp>
#include <nlohmann/json.hpp>

#include "adjfree/adjfree.hpp"

namespace fs = std::filesystem;
using namespace adjfree;

namespace {

constexpr int kExitError = 1;
constexpr int kExitUsage = 2;
constexpr int kExitClassifier = 3;

struct ClassifierOptions {
  std::string spec = "builtin";
  std::uint64_t corpus_seed = 0;
  double temperature = 1.0;
  int timeout_ms = 10000;
  std::size_t pool = 1;
};

void add_classifier_options(CLI::App* app, ClassifierOptions& o) {
  app->add_option("--classifier", o.spec, "builtin | cmd:<command>")->capture_default_str();
  app->add_option("--corpus-seed", o.corpus_seed, "seed of the builtin surrogate's templates")->capture_default_str();
  app->add_option("--temperature", o.temperature, "builtin surrogate softmax temperature")->capture_default_str();
  app->add_option("--timeout-ms", o.timeout_ms, "per-request timeout for cmd: classifiers")->capture_default_str();
  app->add_option("--pool", o.pool, "number of cmd: classifier processes")->capture_default_str();
}

/// The builtin surrogate is rebuilt to match the target's rate and length.
std::unique_ptr<Classifier> make_classifier(const ClassifierOptions& o, const Waveform& target) {
  if (o.spec == "builtin") {
    const auto corpus = make_synthetic_corpus(default_labels(), target.duration(), target.sample_rate, o.corpus_seed);
    return std::make_unique<TemplateClassifier>(
        TemplateClassifier::from_corpus(corpus, MfccConfig{}, o.temperature, FeatureNorm::kRmse));
  }
  if (o.spec.rfind("cmd:", 0) == 0 && o.spec.size() > 4) {
    SubprocessOptions so;
    so.timeout = std::chrono::milliseconds(o.timeout_ms);
    so.pool_size = o.pool;
    return std::make_unique<SubprocessClassifier>(o.spec.substr(4), so);
  }
  throw InvalidArgument("--classifier must be 'builtin' or 'cmd:<command>'");
}

struct AttackOptions {
  std::string target;
  std::string out = "adjfree_out";
  std::string resume;
  RunConfig run;
  double t_max = kDefaultTmax;
  std::size_t lags = kDefaultLagCount;
  std::string objectives = "f1f2f3";
  std::string lag_mode = "grid";
  std::string f3_norm = "l2";
  std::size_t dense_lags = 41;
  double threshold = kAdjustFreeThreshold;
  std::size_t export_count = 5;
  std::size_t checkpoint_every = 50;
  ClassifierOptions classifier;
};

nlohmann::json setup_json(const AttackOptions& o) {
  return {{"t_max", o.t_max},          {"lags", o.lags},       {"lag_mode", o.lag_mode},
          {"f3_norm", o.f3_norm},      {"classifier", o.classifier.spec},
          {"corpus_seed", o.classifier.corpus_seed}, {"temperature", o.classifier.temperature}};
}

int cmd_attack(AttackOptions o) {
  const auto started = std::chrono::steady_clock::now();
  o.run.objectives = parse_objective_set(o.objectives);
  const Waveform target = read_wav(o.target);
  auto model = make_classifier(o.classifier, target);

  EvalOptions eval;
  if (o.lag_mode == "random") {
    eval.lag_mode = LagMode::kRandom;
  } else if (o.lag_mode != "grid") {
    throw InvalidArgument("--lag-mode must be grid or random");
  }
  if (o.f3_norm == "rmse") {
    eval.f3_norm = FeatureNorm::kRmse;
  } else if (o.f3_norm != "l2") {
    throw InvalidArgument("--f3-norm must be l2 or rmse");
  }

  fs::create_directories(o.out);
  const fs::path out(o.out);
  EvalContext ctx(target, *model, default_lag_schedule(o.t_max, o.lags), MfccConfig{}, eval);
  Moead engine(ctx, o.run);
  if (!engine.note().empty()) std::cerr << "note: " << engine.note() << "\n";
  if (!o.resume.empty()) {
    engine.restore(read_json(o.resume));
    std::cerr << "resumed at generation " << engine.generation() << "\n";
  }

  const fs::path checkpoint_path = out / "checkpoint.json";
  try {
    engine.run([&](const Moead& m) {
      if (o.checkpoint_every > 0 && m.generation() > 0 && m.generation() % o.checkpoint_every == 0) {
        write_json(checkpoint_path, m.checkpoint());
      }
    });
  } catch (const ClassifierError& e) {
    if (engine.initialized()) {
      write_json(checkpoint_path, engine.checkpoint());
      std::cerr << "error: " << e.what() << "\ncheckpoint written to " << checkpoint_path.string()
                << " (resume with --resume)\n";
    } else {
      std::cerr << "error: " << e.what() << "\n";
    }
    return kExitClassifier;
  }
  write_json(checkpoint_path, engine.checkpoint());

  const auto& entries = engine.archive().entries();
  std::vector<ObjectiveVector> objs;
  for (const auto& e : entries) objs.push_back(e.objectives);

  Front front;
  front.queries = ctx.queries();
  front.config = config_to_json(engine.config());
  front.config["setup"] = setup_json(o);
  for (std::size_t i = 0; i < entries.size(); ++i) {
    FrontEntry fe;
    fe.objectives = entries[i].objectives;
    if (o.dense_lags > 0) fe.dense_max_confidence = ctx.verify(entries[i].genome, o.dense_lags, o.threshold).max_confidence;
    front.entries.push_back(std::move(fe));
  }
  for (std::size_t idx : knee_neighbors(objs, o.export_count)) {
    char name[64];
    std::snprintf(name, sizeof name, "perturbation_%03zu.wav", idx);
    write_wav(entries[idx].genome.as_waveform(target.sample_rate), out / name);
    front.entries[idx].wav = name;
  }
  write_json(out / "front.json", front_to_json(front));
  write_text(out / "history.csv", history_csv(engine.history()));

  const double wall = std::chrono::duration<double>(std::chrono::steady_clock::now() - started).count();
  nlohmann::json meta{{"config", front.config},
                      {"seed", o.run.seed},
                      {"target", o.target},
                      {"correct_label", ctx.correct_label()},
                      {"clean_confidence", ctx.clean_confidence()},
                      {"queries", ctx.queries()},
                      {"verification_queries", ctx.verification_queries()},
                      {"generations", engine.generation()},
                      {"archive_size", entries.size()},
                      {"dense_lags", o.dense_lags},
                      {"threshold", o.threshold},
                      {"wall_time_seconds", wall}};
  if (!engine.note().empty()) meta["note"] = engine.note();
  write_json(out / "run_meta.json", meta);

  std::size_t passing = 0;
  for (const auto& e : front.entries) passing += entry_passes(e, o.threshold) ? 1 : 0;
  std::cout << "correct label: " << ctx.correct_label() << " (clean confidence " << ctx.clean_confidence() << ")\n"
            << "archive entries: " << entries.size() << ", adjust-free at threshold " << o.threshold << ": "
            << passing << "\n"
            << "queries: " << ctx.queries() << "\n";
  return 0;
}

struct SweepOptions {
  std::string perturbation;
  std::string target;
  std::string out = "curve.csv";
  std::size_t dense_lags = 41;
  double t_max = kDefaultTmax;
  double threshold = kAdjustFreeThreshold;
  ClassifierOptions classifier;
};

int cmd_sweep_lag(const SweepOptions& o) {
  const Waveform target = read_wav(o.target);
  const Waveform pert = read_wav(o.perturbation);
  if (pert.size() != target.size() || pert.sample_rate != target.sample_rate) {
    throw InvalidArgument("perturbation and target differ in length or sample rate");
  }
  double peak = 0.0;
  for (double v : pert.samples) peak = std::max(peak, std::abs(v));
  auto model = make_classifier(o.classifier, target);
  EvalContext ctx(target, *model, default_lag_schedule(o.t_max, 3));
  const Genome g{pert.samples, peak > 0.0 ? peak : 1.0};
  const auto report = ctx.verify(g, o.dense_lags, o.threshold);
  write_text(o.out, curve_csv(report.curve));
  std::cout << "correct label: " << ctx.correct_label() << "\n"
            << "max correct-class confidence: " << report.max_confidence << "\n"
            << "adjust-free (threshold " << o.threshold << "): " << (report.adjust_free ? "yes" : "no") << "\n";
  return 0;
}

int cmd_select(const std::string& front_path, const std::string& strategy) {
  const Front front = load_front(front_path);
  const auto idx = select_entry(objectives_of(front.entries), parse_strategy(strategy));
  const auto& e = front.entries[idx];
  nlohmann::json j{{"index", idx}, {"objectives", e.objectives}, {"wav", nullptr}};
  if (e.wav) j["wav"] = *e.wav;
  if (e.dense_max_confidence) j["dense_max_confidence"] = *e.dense_max_confidence;
  std::cout << j.dump() << "\n";
  return 0;
}

int cmd_corpus(const std::string& out, int rate, double duration, std::uint64_t seed) {
  fs::create_directories(out);
  for (const auto& [label, w] : make_synthetic_corpus(default_labels(), duration, rate, seed)) {
    write_wav(w, fs::path(out) / (label + ".wav"));
  }
  return 0;
}

int cmd_project(const std::string& front_path, const std::string& x, const std::string& y) {
  const Front front = load_front(front_path);
  std::cout << x << ',' << y << '\n';
  for (const auto& [a, b] : project_front(objectives_of(front.entries), x, y)) {
    std::cout << format_double(a) << ',' << format_double(b) << '\n';
  }
  return 0;
}

int cmd_compare(const std::string& run3, const std::string& run2, double threshold, double bin_width,
                const std::string& out) {
  const auto table = compare_ablation(load_run(run3), load_run(run2), threshold, bin_width);
  write_text(out, comparison_csv(table));
  std::size_t findings = 0;
  for (const auto& r : table.rows) findings += r.finding ? 1 : 0;
  if (table.budget_mismatch) std::cerr << "warning: runs used different query budgets\n";
  std::cout << "paired bins: " << table.rows.size() << ", std-deviation findings: " << findings << "\n";
  return 0;
}

int cmd_tally(const std::vector<std::string>& dirs, double threshold, const std::string& out) {
  std::vector<RunSummary> runs;
  for (const auto& d : dirs) runs.push_back(load_run(d));
  const Tally t = tally_adjust_free(runs, threshold);
  write_json(out, tally_to_json(t, threshold));
  std::cout << t.passes << " / " << t.targets << " targets adjust-free (" << t.fraction << ")\n";
  return 0;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Search and verify lag-robust (adjust-free) adversarial audio perturbations"};
  app.require_subcommand(1);

  AttackOptions attack;
  auto* a = app.add_subcommand("attack", "run MOEA/D against a target utterance");
  a->add_option("--target", attack.target, "target speech WAV (16-bit mono)")->required();
  a->add_option("--out", attack.out, "output directory")->capture_default_str();
  a->add_option("--pop", attack.run.n_pop, "population size")->capture_default_str();
  a->add_option("--gens", attack.run.n_gen, "generation limit")->capture_default_str();
  a->add_option("--tmax", attack.t_max, "maximum lag in seconds")->capture_default_str();
  a->add_option("--lags", attack.lags, "lags evaluated per candidate (odd)")->capture_default_str();
  a->add_option("--bound", attack.run.bound, "perturbation box bound")->capture_default_str();
  a->add_option("--seed", attack.run.seed, "random seed")->capture_default_str();
  a->add_option("--objectives", attack.objectives, "f1f3 | f1f2f3")->capture_default_str();
  a->add_option("--dense-lags", attack.dense_lags, "verification grid size (0 disables)")->capture_default_str();
  a->add_option("--threshold", attack.threshold, "adjust-free confidence threshold")->capture_default_str();
  a->add_option("--resume", attack.resume, "checkpoint.json to continue from");
  a->add_option("--neighborhood", attack.run.neighborhood)->capture_default_str();
  a->add_option("--de-scale", attack.run.de_scale)->capture_default_str();
  a->add_option("--cr", attack.run.crossover_rate)->capture_default_str();
  a->add_option("--eta", attack.run.mutation_eta)->capture_default_str();
  a->add_option("--delta", attack.run.neighbor_mating_prob)->capture_default_str();
  a->add_option("--nr", attack.run.replacement_limit)->capture_default_str();
  a->add_option("--archive-capacity", attack.run.archive_capacity)->capture_default_str();
  a->add_option("--max-queries", attack.run.max_queries, "query budget (0: unlimited)")->capture_default_str();
  a->add_option("--threads", attack.run.threads)->capture_default_str();
  a->add_option("--lag-mode", attack.lag_mode, "grid | random")->capture_default_str();
  a->add_option("--f3-norm", attack.f3_norm, "l2 | rmse")->capture_default_str();
  a->add_option("--export", attack.export_count, "perturbation WAVs written around the knee")->capture_default_str();
  a->add_option("--checkpoint-every", attack.checkpoint_every)->capture_default_str();
  add_classifier_options(a, attack.classifier);

  SweepOptions sweep;
  auto* s = app.add_subcommand("sweep-lag", "correct-class confidence versus playback lag");
  s->add_option("--perturbation", sweep.perturbation)->required();
  s->add_option("--target", sweep.target)->required();
  s->add_option("--out", sweep.out, "curve CSV path")->capture_default_str();
  s->add_option("--dense-lags", sweep.dense_lags)->capture_default_str();
  s->add_option("--tmax", sweep.t_max)->capture_default_str();
  s->add_option("--threshold", sweep.threshold)->capture_default_str();
  add_classifier_options(s, sweep.classifier);

  std::string front_path, strategy = "knee";
  auto* sel = app.add_subcommand("select", "pick a representative front entry");
  sel->add_option("--front", front_path)->required();
  sel->add_option("--strategy", strategy, "min-f1 | min-f1f2 | knee")->capture_default_str();

  std::string corpus_out = "corpus";
  int corpus_rate = 16000;
  double corpus_duration = 1.0;
  std::uint64_t corpus_seed = 0;
  auto* c = app.add_subcommand("corpus", "write the builtin surrogate's synthetic utterances");
  c->add_option("--out", corpus_out)->capture_default_str();
  c->add_option("--rate", corpus_rate)->capture_default_str();
  c->add_option("--duration", corpus_duration)->capture_default_str();
  c->add_option("--seed", corpus_seed)->capture_default_str();

  std::string proj_front, proj_x = "f1", proj_y = "f2";
  auto* p = app.add_subcommand("project", "print a 2-D projection of a front as CSV");
  p->add_option("--front", proj_front)->required();
  p->add_option("--x", proj_x)->capture_default_str();
  p->add_option("--y", proj_y)->capture_default_str();

  std::string run3, run2, cmp_out = "comparison.csv";
  double cmp_threshold = kAdjustFreeThreshold, bin_width = 0.05;
  auto* cmp = app.add_subcommand("compare", "pair a 3-objective run with an f1f3 run by f1");
  cmp->add_option("--with-std", run3, "run directory optimized with f2")->required();
  cmp->add_option("--without-std", run2, "run directory optimized without f2")->required();
  cmp->add_option("--threshold", cmp_threshold)->capture_default_str();
  cmp->add_option("--bin-width", bin_width)->capture_default_str();
  cmp->add_option("--out", cmp_out)->capture_default_str();

  std::vector<std::string> tally_runs;
  std::string tally_out = "tally.json";
  double tally_threshold = kAdjustFreeThreshold;
  auto* t = app.add_subcommand("tally", "fraction of targets with an adjust-free entry");
  t->add_option("runs", tally_runs, "run directories")->required();
  t->add_option("--threshold", tally_threshold)->capture_default_str();
  t->add_option("--out", tally_out)->capture_default_str();

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    const int rc = app.exit(e);
    return rc == 0 ? 0 : kExitUsage;
  }

  try {
    if (*a) return cmd_attack(attack);
    if (*s) return cmd_sweep_lag(sweep);
    if (*sel) return cmd_select(front_path, strategy);
    if (*c) return cmd_corpus(corpus_out, corpus_rate, corpus_duration, corpus_seed);
    if (*p) return cmd_project(proj_front, proj_x, proj_y);
    if (*cmp) return cmd_compare(run3, run2, cmp_threshold, bin_width, cmp_out);
    if (*t) return cmd_tally(tally_runs, tally_threshold, tally_out);
  } catch (const ClassifierError& e) {
    std::cerr << "classifier error: " << e.what() << "\n";
    return kExitClassifier;
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << "\n";
    return kExitError;
  }
  return kExitError;
}
