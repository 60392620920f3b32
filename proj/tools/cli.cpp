#include "cli.hpp"

#include <algorithm>
#include <chrono>
#include <cstdio>
#include <ctime>
#include <filesystem>
#include <fstream>
#include <map>
#include <sstream>
#include <thread>

#include <unistd.h>

#include <CLI11.hpp>
#include <json.hpp>

#include "cogload/dataset.hpp"
#include "cogload/embrpc.hpp"
#include "cogload/error.hpp"
#include "cogload/features.hpp"
#include "cogload/harness.hpp"
#include "cogload/pipeline.hpp"
#include "cogload/preprocess.hpp"
#include "cogload/rng.hpp"
#include "cogload/stream.hpp"
#include "cogload/synth.hpp"

namespace cogload::cli {

namespace {

namespace fs = std::filesystem;
using json = nlohmann::json;
using ojson = nlohmann::ordered_json;
using Clock = std::chrono::steady_clock;

struct Ctx {
  std::ostream& out;
  std::ostream& err;
  bool verbose{true};

  void log(const std::string& line) const {
    if (verbose) err << line << '\n';
  }
};

// --manifest --config --out --seed --parallelism --force
struct Common {
  std::string manifest;
  std::string config;
  std::string out;
  std::string log_level{"info"};
  std::uint64_t seed{0};
  std::size_t parallelism{1};
  bool force{false};
};

void add_common(CLI::App* sc, Common& c) {
  sc->add_option("--manifest", c.manifest, "dataset manifest.json");
  sc->add_option("--config", c.config, "JSON config file; flags override its keys");
  sc->add_option("--out", c.out, "output directory");
  sc->add_option("--seed", c.seed, "random seed");
  sc->add_option("--parallelism", c.parallelism, "worker threads");
  sc->add_flag("--force", c.force, "overwrite existing outputs");
  sc->add_option("--log-level", c.log_level, "info | quiet")->check(CLI::IsMember({"info", "quiet"}));
}

struct PipelineFlags {
  std::string provider;
  std::string spatial;
  std::string temporal;
  std::string estimator;
  std::vector<double> grid;
  std::string eval_cohort;
  bool allow_grid_override{false};
  bool raw_target{false};
  int dnn_epochs{0};
  int dnn_batch{0};
  long dnn_hidden{0};
  double svr_c{0.0};
  double svr_epsilon{0.0};
};

void add_pipeline(CLI::App* sc, PipelineFlags& f) {
  sc->add_option("--provider", f.provider, "toy[:seed] | precomputed:<emb1> | external:<endpoint>");
  sc->add_option("--spatial", f.spatial, "groupavg | intersection");
  sc->add_option("--temporal", f.temporal, "global | mean | meanstd");
  sc->add_option("--estimator", f.estimator, "linear | dnn | svm");
  sc->add_option("--grid", f.grid, "hyperparameter grid")->delimiter(',');
  sc->add_flag("--allow-grid-override", f.allow_grid_override, "accept grid values outside the defaults");
  sc->add_option("--eval-cohort", f.eval_cohort, "cohort letter of the evaluation participants");
  sc->add_flag("--raw-target", f.raw_target, "fit on unscaled labels");
  sc->add_option("--dnn-epochs", f.dnn_epochs);
  sc->add_option("--dnn-batch", f.dnn_batch);
  sc->add_option("--dnn-hidden", f.dnn_hidden);
  sc->add_option("--svr-c", f.svr_c);
  sc->add_option("--svr-epsilon", f.svr_epsilon);
}

struct Resolved {
  std::string manifest;
  std::string out;
  bool verbose{true};
  PipelineConfig cfg;
};

json read_config_file(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw Error(Errc::Io, "cannot open config " + path);
  try {
    json doc = json::parse(in);
    if (!doc.is_object()) throw Error(Errc::InvalidConfig, path + ": config must be a JSON object");
    return doc;
  } catch (const json::exception& e) {
    throw Error(Errc::InvalidConfig, path + ": " + e.what());
  }
}

// defaults <- config file <- flags
Resolved resolve(const CLI::App& sc, const Common& c, const PipelineFlags* pf) {
  json file = json::object();
  fs::path base;
  if (!c.config.empty()) {
    file = read_config_file(c.config);
    base = fs::path(c.config).parent_path();
  }
  auto file_path = [&](const char* key) -> std::string {
    if (!file.contains(key)) return {};
    if (!file[key].is_string()) throw Error(Errc::InvalidConfig, std::string("config key ") + key + " must be a string");
    const fs::path p(file[key].get<std::string>());
    return (p.is_relative() ? base / p : p).string();
  };

  Resolved r;
  r.cfg = pipeline_config_from_json(file);
  r.manifest = sc.count("--manifest") ? c.manifest : file_path("manifest");
  r.out = sc.count("--out") ? c.out : file_path("out");
  std::string level = file.value("log_level", std::string("info"));
  if (sc.count("--log-level")) level = c.log_level;
  if (level != "info" && level != "quiet") throw Error(Errc::InvalidConfig, "log_level must be info or quiet");
  r.verbose = level == "info";

  PipelineConfig& cfg = r.cfg;
  if (sc.count("--seed")) cfg.seed = c.seed;
  if (sc.count("--parallelism")) cfg.parallelism = c.parallelism;
  if (cfg.parallelism < 1) throw Error(Errc::InvalidConfig, "--parallelism must be >= 1");

  std::string provider = file.value("provider", std::string("toy"));
  if (pf != nullptr) {
    if (sc.count("--provider")) provider = pf->provider;
    if (sc.count("--spatial")) cfg.spatial = parse_spatial(pf->spatial);
    if (sc.count("--temporal")) cfg.temporal = parse_temporal(pf->temporal);
    if (sc.count("--estimator")) {
      const auto k = parse_estimator(pf->estimator);
      if (k != cfg.estimator && !sc.count("--grid")) cfg.grid.clear();  // the file's grid belonged to another estimator
      cfg.estimator = k;
    }
    if (sc.count("--grid")) cfg.grid = pf->grid;
    if (pf->allow_grid_override) cfg.allow_grid_override = true;
    if (sc.count("--eval-cohort")) {
      if (pf->eval_cohort.size() != 1) throw Error(Errc::InvalidConfig, "--eval-cohort must be a single letter");
      cfg.eval_cohort = pf->eval_cohort[0];
    }
    if (pf->raw_target) cfg.standardize_target = false;
    if (sc.count("--dnn-epochs")) cfg.dnn.epochs = pf->dnn_epochs;
    if (sc.count("--dnn-batch")) cfg.dnn.batch_size = pf->dnn_batch;
    if (sc.count("--dnn-hidden")) cfg.dnn.hidden = pf->dnn_hidden;
    if (sc.count("--svr-c")) cfg.svr.C = pf->svr_c;
    if (sc.count("--svr-epsilon")) cfg.svr.epsilon = pf->svr_epsilon;
  }
  cfg.provider = ProviderSpec::parse(provider, cfg.seed);
  cfg.finalize();
  return r;
}

std::string require(const std::string& value, const char* flag) {
  if (value.empty()) throw Error(Errc::InvalidConfig, std::string(flag) + " is required");
  return value;
}

// No clobbering without --force.
void ensure_writable(const std::vector<fs::path>& files, bool force) {
  for (const auto& f : files) {
    if (!force && fs::exists(f)) throw Error(Errc::Io, f.string() + " exists; pass --force to overwrite");
  }
}

void make_dir(const fs::path& dir) {
  std::error_code ec;
  fs::create_directories(dir, ec);
  if (ec) throw Error(Errc::Io, "cannot create " + dir.string() + ": " + ec.message());
}

void write_text(const fs::path& path, const std::string& text) {
  std::ofstream f(path, std::ios::binary | std::ios::trunc);
  if (!f) throw Error(Errc::Io, "cannot write " + path.string());
  f << text;
  if (!f) throw Error(Errc::Io, "write failed for " + path.string());
}

std::string utc_now() {
  const std::time_t t = std::time(nullptr);
  std::tm tm{};
  gmtime_r(&t, &tm);
  char buf[32];
  std::strftime(buf, sizeof(buf), "%Y-%m-%dT%H:%M:%SZ", &tm);
  return buf;
}

// Wall-clock facts stay out of the result files so those remain byte-identical.
void write_meta(const fs::path& dir, const std::string& command, const PipelineConfig& cfg,
                const std::map<std::string, double>& timings) {
  ojson meta;
  meta["command"] = command;
  meta["finished_utc"] = utc_now();
  meta["parallelism"] = cfg.parallelism;
  meta["hardware_threads"] = std::thread::hardware_concurrency();
  char host[256] = {};
  ::gethostname(host, sizeof(host) - 1);
  meta["host"] = host;
  meta["timings_s"] = timings;
  write_text(dir / "run_meta.json", meta.dump(2) + "\n");
}

std::string num(double v) { return std::isfinite(v) ? format_double(v) : "nan"; }

std::vector<std::string> split_list(const std::string& s) {
  std::vector<std::string> parts;
  std::stringstream ss(s);
  std::string item;
  while (std::getline(ss, item, ',')) {
    if (!item.empty()) parts.push_back(item);
  }
  return parts;
}

void shuffle_labels(TrialSet& data, std::uint64_t seed) {
  std::vector<double> scores;
  for (const auto& l : data.labels) scores.push_back(l.score);
  Rng rng(seed);
  rng.shuffle(std::span<double>(scores));
  for (std::size_t i = 0; i < scores.size(); ++i) data.labels[i].score = scores[i];
}

// ---------------------------------------------------------------- gen-synth

int cmd_gen_synth(const Ctx& ctx, const CLI::App& sc, const Common& c, SynthConfig sc_cfg, const std::string& region) {
  const std::string out = require(c.out, "--out");
  if (sc.count("--seed")) sc_cfg.seed = c.seed;
  if (!region.empty()) sc_cfg.planted_region = region_from_name(region);
  try {
    sc_cfg.validate();
  } catch (const Error& e) {
    // name the flag, not the struct field
    std::string msg = e.what();
    msg = msg.substr(msg.find(": ") + 2);  // drop the code prefix
    static const std::pair<const char*, const char*> kFlags[] = {
        {"n_participants", "--n-participants"}, {"n_days", "--n-days"}, {"trials_per_day", "--trials-per-day"},
        {"n_channels", "--n-channels"}, {"duration_s", "--duration"}, {"fs", "--fs"},
        {"planted band", "--planted-lo/--planted-hi"}, {"noise_sigma", "--noise-sigma"}};
    for (const auto& [field, flag] : kFlags) {
      if (msg.find(field) != std::string::npos) throw Error(Errc::InvalidConfig, std::string(flag) + ": " + msg);
    }
    throw;
  }
  ensure_writable({fs::path(out) / "manifest.json"}, c.force);
  make_dir(out);
  const auto res = generate_synthetic(sc_cfg, out);
  ctx.log("wrote " + std::to_string(res.trials.trials.size()) + " trials");
  ctx.out << res.manifest_path << '\n';
  return 0;
}

// ---------------------------------------------------------------- preprocess

int cmd_preprocess(const Ctx& ctx, const Resolved& r, bool force) {
  const TrialSet data = load_trialset(require(r.manifest, "--manifest"));
  const std::string out = require(r.out, "--out");
  ensure_writable({fs::path(out) / "manifest.json"}, force);
  TrialSet segs;
  segs.montage = data.montage;
  segs.labels = data.labels;
  segs.behavioral = data.behavioral;
  segs.trials.resize(data.trials.size());
  parallel_for(data.trials.size(), r.cfg.parallelism, [&](std::size_t i) {
    const Trial& t = data.trials[i];
    const Trial at200 = resample_trial(filter_trial(t, design_filters(t.fs)));
    Trial s = segment_as_trial(center_fix(at200));
    s.key = t.key;
    s.cohort = t.cohort;
    segs.trials[i] = std::move(s);
  });
  make_dir(out);
  const std::string manifest = write_trialset(segs, out);
  ctx.log("preprocessed " + std::to_string(segs.trials.size()) + " trials to 90 s at 200 Hz");
  ctx.out << manifest << '\n';
  return 0;
}

// ---------------------------------------------------------------- eval

struct EvalFlags {
  std::string save_model;
  bool shuffle{false};
  std::uint64_t shuffle_seed{0};
};

int cmd_eval(const Ctx& ctx, const Resolved& r, bool force, const EvalFlags& ef) {
  const auto t0 = Clock::now();
  TrialSet data = load_trialset(require(r.manifest, "--manifest"));
  const fs::path out(require(r.out, "--out"));
  std::vector<fs::path> outputs{out / "cv_report.json", out / "cv_report.csv", out / "run_meta.json"};
  if (!ef.save_model.empty()) {
    outputs.emplace_back(ef.save_model);
    outputs.emplace_back(ef.save_model + ".json");
  }
  ensure_writable(outputs, force);
  if (ef.shuffle) {
    shuffle_labels(data, ef.shuffle_seed);
    ctx.log("labels shuffled with seed " + std::to_string(ef.shuffle_seed));
  }

  const PipelineConfig& cfg = r.cfg;
  const auto roles = participant_roles(data, cfg.eval_cohort);
  const FeatureExtractor extractor(make_provider(cfg.provider), data.montage, cfg.spatial, cfg.temporal);
  ctx.log("extracting features for " + std::to_string(data.trials.size()) + " trials");
  const auto tf = Clock::now();
  const FeatureTable table = build_feature_table(data, extractor, cfg.parallelism);
  const double feat_s = std::chrono::duration<double>(Clock::now() - tf).count();
  CvReport rep = run_nested_cv(table, cfg, roles.train, roles.eval);
  rep.timings_s["features"] = feat_s;
  for (const auto& f : rep.folds) {
    ctx.log("fold " + std::to_string(f.index) + " test=" + f.test + " val=" + f.validation +
            (f.failed ? " failed: " + f.reason : " chosen=" + num(f.chosen) + " r=" + num(f.test_pearson)));
  }

  make_dir(out);
  write_text(out / "cv_report.json", to_json(rep).dump(2) + "\n");
  write_text(out / "cv_report.csv", cv_report_csv(rep));

  if (!ef.save_model.empty()) {
    const double hyper = consensus_hyperparameter(rep);
    const auto rows = table.rows_of(roles.train);
    const TrainedPipeline p = train_pipeline(cfg, data.montage, hyper, table.rows(rows), table.targets(rows));
    if (auto parent = fs::path(ef.save_model).parent_path(); !parent.empty()) make_dir(parent);
    save_pipeline(p, ef.save_model);
    ctx.log("saved model (" + std::string(to_string(cfg.estimator)) + ", hyperparameter " + num(hyper) + ") to " +
            ef.save_model);
  }
  rep.timings_s["wall"] = std::chrono::duration<double>(Clock::now() - t0).count();
  write_meta(out, "eval", cfg, rep.timings_s);

  if (rep.n_failed == rep.folds.size()) {
    ctx.out << "mean_pearson=nan\n";
    throw Error(Errc::ConstantInput, "every fold failed");
  }
  ctx.out << "folds=" << rep.folds.size() << " failed=" << rep.n_failed << " std_pearson=" << num(rep.std_test_pearson)
          << '\n';
  ctx.out << "mean_pearson=" << num(rep.mean_test_pearson) << '\n';
  return 0;
}

// ---------------------------------------------------------------- sweep

int cmd_sweep(const Ctx& ctx, const Resolved& r, bool force, std::size_t group_size, std::size_t max_steps) {
  const auto t0 = Clock::now();
  const TrialSet data = load_trialset(require(r.manifest, "--manifest"));
  const fs::path out(require(r.out, "--out"));
  ensure_writable({out / "sweep.json", out / "sweep.csv", out / "run_meta.json"}, force);
  if (group_size < 1) throw Error(Errc::InvalidConfig, "--group-size must be >= 1");

  const PipelineConfig& cfg = r.cfg;
  std::vector<std::vector<std::string>> increments;
  for (const auto& one : default_increments(data, cfg.eval_cohort)) {
    if (increments.empty() || increments.back().size() == group_size) increments.emplace_back();
    increments.back().insert(increments.back().end(), one.begin(), one.end());
  }
  if (max_steps > 0 && increments.size() > max_steps) increments.resize(max_steps);

  const auto roles = participant_roles(data, cfg.eval_cohort);
  const FeatureExtractor extractor(make_provider(cfg.provider), data.montage, cfg.spatial, cfg.temporal);
  const FeatureTable table = build_feature_table(data, extractor, cfg.parallelism);
  const SweepReport rep = run_sweep(table, cfg, increments, roles.eval);

  make_dir(out);
  write_text(out / "sweep.json", to_json(rep).dump(2) + "\n");
  write_text(out / "sweep.csv", sweep_report_csv(rep));
  write_meta(out, "sweep", cfg, {{"wall", std::chrono::duration<double>(Clock::now() - t0).count()}});
  for (const auto& p : rep.points) {
    ctx.out << "step=" << p.step << " participants=" << p.n_participants << " trials=" << p.n_trials
            << " fraction_pct=" << num(p.train_fraction_pct) << " mean_pearson=" << num(p.mean) << " ci95=["
            << num(p.ci_lo) << "," << num(p.ci_hi) << "]" << (p.cohort_boundary ? " cohort_end" : "") << '\n';
  }
  return 0;
}

// ---------------------------------------------------------------- explain

struct ExplainFlags {
  std::string model;
  std::string baseline{"zero"};
  std::string participants;
  bool all{false};
  bool sampled{false};
  std::size_t n_perm{200};
};

int cmd_explain(const Ctx& ctx, const CLI::App& sc, const Common& c, const ExplainFlags& xf) {
  const auto t0 = Clock::now();
  Resolved r = resolve(sc, c, nullptr);
  TrainedPipeline p = load_pipeline(require(xf.model, "--model"));
  p.config.parallelism = r.cfg.parallelism;
  const TrialSet data = load_trialset(require(r.manifest, "--manifest"));
  if (!(data.montage == p.montage)) {
    throw Error(Errc::Consistency, "dataset montage '" + data.montage.name() + "' differs from the model's '" +
                                       p.montage.name() + "'");
  }
  const fs::path out(require(r.out, "--out"));
  ensure_writable({out / "relevance_global.json", out / "daily.json", out / "attributions.json"}, c.force);

  std::vector<std::string> who;
  if (!xf.participants.empty()) {
    who = split_list(xf.participants);
  } else if (!xf.all) {
    who = participant_roles(data, p.config.eval_cohort).eval;
  }
  ExplainConfig ec;
  ec.baseline = parse_baseline(xf.baseline);
  ec.exact = !xf.sampled;
  ec.n_perm = xf.n_perm;
  ec.seed = r.cfg.seed;
  ctx.log(std::string(ec.exact ? "exact" : "sampled") + " attribution for " +
          (who.empty() ? std::string("all participants") : std::to_string(who.size()) + " participants"));
  const DailyReport rep = longitudinal_report(data, p, ec, who);
  make_dir(out);
  write_daily_report(rep, p.montage, out.string());
  write_meta(out, "explain", p.config, {{"wall", std::chrono::duration<double>(Clock::now() - t0).count()}});
  ctx.out << (out / "relevance_global.json").string() << '\n';
  return 0;
}

// ---------------------------------------------------------------- topomap

int cmd_topomap(const Ctx& ctx, const Common& c, const std::string& relevance, const std::string& montage_path,
                const std::string& title) {
  const fs::path out(require(c.out, "--out"));
  std::vector<TopoPoint> points;
  const RelevanceMap map = read_relevance_json(require(relevance, "--relevance"), &points);
  if (!montage_path.empty()) points = topo_points(map, load_montage(montage_path));
  const fs::path svg = out / (fs::path(relevance).stem().string() + ".svg");
  ensure_writable({svg}, c.force);
  make_dir(out);
  write_text(svg, topomap_svg(points, title.empty() ? map.group : title));
  ctx.out << svg.string() << '\n';
  return 0;
}

// ---------------------------------------------------------------- stream

int cmd_stream(const Ctx& ctx, const std::string& model, int port, std::size_t queue) {
  const TrainedPipeline p = load_pipeline(require(model, "--model"));
  StreamOptions opts;
  opts.queue_capacity = queue;
  if (port >= 0) {
    embrpc::Listener listener(static_cast<std::uint16_t>(port));
    ctx.log("listening on 127.0.0.1:" + std::to_string(listener.port()));
    embrpc::Channel ch = listener.accept_one();
    return stream_serve(ch, ctx.out, p, opts);
  }
  embrpc::Channel ch(STDIN_FILENO, -1, false);
  return stream_serve(ch, ctx.out, p, opts);
}

// ---------------------------------------------------------------- extras

// Stores provider embeddings of every trial for the precomputed provider.
int cmd_embed(const Ctx& ctx, const Resolved& r, bool force) {
  const TrialSet data = load_trialset(require(r.manifest, "--manifest"));
  const fs::path out(require(r.out, "--out"));
  const fs::path file = out / "embeddings.emb1";
  ensure_writable({file}, force);
  const auto provider = make_provider(r.cfg.provider);
  std::vector<FeatureTensor> tensors(data.trials.size());
  parallel_for(data.trials.size(), r.cfg.parallelism,
               [&](std::size_t i) { tensors[i] = provider->embed_trial(preprocess_trial(data.trials[i])); });
  EmbeddingTable table;
  for (std::size_t i = 0; i < tensors.size(); ++i) table.emplace(data.trials[i].key, std::move(tensors[i]));
  make_dir(out);
  write_emb1(table, file.string());
  ctx.log("embedded " + std::to_string(table.size()) + " trials with " + provider->id());
  ctx.out << file.string() << '\n';
  return 0;
}

// Sends one recorded trial in the stream protocol to stdout or a TCP scorer.
int cmd_replay(const Ctx& ctx, const std::string& manifest, const std::string& trial_key, const std::string& connect,
               std::size_t chunk, double speed) {
  const TrialSet data = load_trialset(require(manifest, "--manifest"));
  const Trial* trial = nullptr;
  for (const auto& t : data.trials) {
    if (trial_key.empty() || t.key.str() == trial_key) {
      trial = &t;
      break;
    }
  }
  if (trial == nullptr) throw Error(Errc::InvalidArgument, "no trial " + trial_key + " in " + manifest);
  ctx.log("replaying " + trial->key.str());
  if (!connect.empty()) {
    embrpc::Channel ch = embrpc::connect_tcp(connect, 30.0);
    stream_replay(ch, *trial, chunk, speed);
  } else {
    embrpc::Channel ch(-1, STDOUT_FILENO, false);
    stream_replay(ch, *trial, chunk, speed);
  }
  return 0;
}

// Serves the toy encoder over EMBRPC (stdio or TCP, one client at a time).
int cmd_embed_serve(const Ctx& ctx, std::uint64_t seed, int port) {
  const auto provider = toy_spectral_provider(seed);
  if (port < 0) {
    embrpc::Channel ch(STDIN_FILENO, STDOUT_FILENO, false);
    embrpc::serve(ch, *provider);
    return 0;
  }
  embrpc::Listener listener(static_cast<std::uint16_t>(port));
  ctx.log("embrpc listening on 127.0.0.1:" + std::to_string(listener.port()));
  for (;;) {
    embrpc::Channel ch = listener.accept_one();
    try {
      embrpc::serve(ch, *provider);
    } catch (const Error& e) {
      ctx.log(std::string("client dropped: ") + e.what());
    }
  }
}

}  // namespace

int run_cli(int argc, const char* const* argv, std::ostream& out, std::ostream& err) {
  CLI::App app{"cognitive load estimation from EEG embeddings", "cogload"};
  app.require_subcommand(1);

  Common gen_c, pre_c, eval_c, sweep_c, explain_c, topo_c, embed_c;
  PipelineFlags eval_pf, sweep_pf, embed_pf;

  auto* gen = app.add_subcommand("gen-synth", "generate the planted synthetic dataset");
  add_common(gen, gen_c);
  SynthConfig synth;
  std::string region;
  gen->add_option("--n-participants", synth.n_participants);
  gen->add_option("--n-days", synth.n_days);
  gen->add_option("--trials-per-day", synth.trials_per_day);
  gen->add_option("--n-channels", synth.n_channels);
  gen->add_option("--fs", synth.fs);
  gen->add_option("--duration", synth.duration_s, "trial length in seconds");
  gen->add_option("--planted-region", region);
  gen->add_option("--planted-lo", synth.planted_lo);
  gen->add_option("--planted-hi", synth.planted_hi);
  gen->add_option("--noise-sigma", synth.noise_sigma);

  auto* pre = app.add_subcommand("preprocess", "filter, resample and centre-crop every trial");
  add_common(pre, pre_c);

  auto* eval = app.add_subcommand("eval", "nested cross-validation");
  add_common(eval, eval_c);
  add_pipeline(eval, eval_pf);
  EvalFlags ef;
  eval->add_option("--save-model", ef.save_model, "train on all training participants and save here");
  eval->add_option("--shuffle-labels", ef.shuffle_seed, "permute labels first (null model)");

  auto* sweep = app.add_subcommand("sweep", "training-set size sweep");
  add_common(sweep, sweep_c);
  add_pipeline(sweep, sweep_pf);
  std::size_t group_size = 1, max_steps = 0;
  sweep->add_option("--group-size", group_size, "participants added per step");
  sweep->add_option("--max-steps", max_steps, "stop after this many steps (0: all)");

  auto* explain = app.add_subcommand("explain", "channel attributions and relevance maps");
  add_common(explain, explain_c);
  ExplainFlags xf;
  explain->add_option("--model", xf.model, "model saved by eval --save-model");
  explain->add_option("--baseline", xf.baseline, "zero | channel-mean");
  explain->add_option("--participants", xf.participants, "comma-separated ids (default: eval cohort)");
  explain->add_flag("--all-participants", xf.all);
  explain->add_flag("--sampled", xf.sampled, "permutation estimate instead of exact values");
  explain->add_option("--n-perm", xf.n_perm);

  auto* topo = app.add_subcommand("topomap", "render a relevance JSON as SVG");
  add_common(topo, topo_c);
  std::string relevance, montage_path, title;
  topo->add_option("--relevance", relevance);
  topo->add_option("--montage", montage_path, "take positions from this montage");
  topo->add_option("--title", title);

  auto* stream = app.add_subcommand("stream", "real-time scorer (clstream/1 on stdin or TCP)");
  std::string stream_model;
  int stream_port = -1;
  std::size_t queue = 4;
  stream->add_option("--model", stream_model);
  stream->add_option("--port", stream_port, "listen on 127.0.0.1:<port> (0: any) instead of stdin");
  stream->add_option("--queue", queue, "windows buffered between reader and scorer");

  auto* embed = app.add_subcommand("embed", "store provider embeddings as EMB1");
  add_common(embed, embed_c);
  add_pipeline(embed, embed_pf);

  auto* replay = app.add_subcommand("replay", "send a recorded trial in the stream protocol");
  std::string replay_manifest, replay_trial, replay_connect;
  std::size_t replay_chunk = 200;
  double replay_speed = 1.0;
  replay->add_option("--manifest", replay_manifest);
  replay->add_option("--trial", replay_trial, "participant/day/trial_index (default: first)");
  replay->add_option("--connect", replay_connect, "host:port of a stream scorer (default: stdout)");
  replay->add_option("--chunk", replay_chunk, "samples per channel per frame");
  replay->add_option("--speed", replay_speed, "1 = real time, 0 = unpaced");

  auto* serve = app.add_subcommand("embed-serve", "serve the toy encoder over EMBRPC");
  std::uint64_t serve_seed = 0;
  int serve_port = -1;
  serve->add_option("--seed", serve_seed);
  serve->add_option("--port", serve_port, "TCP port (default: stdin/stdout)");

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    const int rc = app.exit(e, out, err);
    return rc == 0 ? 0 : 2;
  }

  bool is_stream = false;
  try {
    if (gen->parsed()) {
      Ctx ctx{out, err, gen_c.log_level == "info"};
      return cmd_gen_synth(ctx, *gen, gen_c, synth, region);
    }
    if (pre->parsed()) {
      const Resolved r = resolve(*pre, pre_c, nullptr);
      return cmd_preprocess(Ctx{out, err, r.verbose}, r, pre_c.force);
    }
    if (eval->parsed()) {
      ef.shuffle = eval->count("--shuffle-labels") > 0;
      const Resolved r = resolve(*eval, eval_c, &eval_pf);
      return cmd_eval(Ctx{out, err, r.verbose}, r, eval_c.force, ef);
    }
    if (sweep->parsed()) {
      const Resolved r = resolve(*sweep, sweep_c, &sweep_pf);
      return cmd_sweep(Ctx{out, err, r.verbose}, r, sweep_c.force, group_size, max_steps);
    }
    if (explain->parsed()) {
      return cmd_explain(Ctx{out, err, explain_c.log_level == "info"}, *explain, explain_c, xf);
    }
    if (topo->parsed()) return cmd_topomap(Ctx{out, err, topo_c.log_level == "info"}, topo_c, relevance, montage_path, title);
    if (stream->parsed()) {
      is_stream = true;
      return cmd_stream(Ctx{out, err, true}, stream_model, stream_port, queue);
    }
    if (embed->parsed()) {
      const Resolved r = resolve(*embed, embed_c, &embed_pf);
      return cmd_embed(Ctx{out, err, r.verbose}, r, embed_c.force);
    }
    if (replay->parsed()) {
      return cmd_replay(Ctx{out, err, true}, replay_manifest, replay_trial, replay_connect, replay_chunk, replay_speed);
    }
    if (serve->parsed()) return cmd_embed_serve(Ctx{out, err, true}, serve_seed, serve_port);
  } catch (const Error& e) {
    err << "error: " << e.what() << '\n';
    const int rc = exit_code_for(e.code());
    return rc == 5 && !is_stream ? 3 : rc;
  } catch (const std::exception& e) {
    err << "error: " << e.what() << '\n';
    return 3;
  }
  return 2;
}

}  // namespace cogload::cli
