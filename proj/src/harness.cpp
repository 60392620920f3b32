#include "cogload/harness.hpp"

#include <algorithm>
#include <atomic>
#include <chrono>
#include <cmath>
#include <exception>
#include <filesystem>
#include <fstream>
#include <limits>
#include <mutex>
#include <set>
#include <sstream>
#include <thread>

#include <boost/math/distributions/students_t.hpp>

#include "cogload/error.hpp"
#include "cogload/preprocess.hpp"

namespace cogload {

namespace {

using ojson = nlohmann::ordered_json;
using Clock = std::chrono::steady_clock;

double seconds_since(Clock::time_point t0) {
  return std::chrono::duration<double>(Clock::now() - t0).count();
}

// NaN becomes null
ojson number_or_null(double v) { return std::isfinite(v) ? ojson(v) : ojson(nullptr); }

void write_text(const std::string& path, const std::string& text) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw Error(Errc::Io, "cannot write " + path);
  out << text;
  if (!out) throw Error(Errc::Io, "write failed for " + path);
}

std::string csv_number(double v) { return std::isfinite(v) ? format_double(v) : ""; }

bool try_pearson(const Vector& a, const Vector& b, double& out) {
  try {
    out = pearson(as_span(a), as_span(b));
    return std::isfinite(out);
  } catch (const Error& e) {
    if (e.code() != Errc::ConstantInput) throw;
    return false;
  }
}

void check_isolation(const FoldSpec& f) {
  const std::set<std::string> train(f.train.begin(), f.train.end());
  if (f.test == f.validation || train.contains(f.test) || train.contains(f.validation)) {
    throw Error(Errc::Consistency, "fold " + std::to_string(f.index) + " shares participants between roles");
  }
}

struct TrainFits {
  TargetScaler target;
  std::vector<Model> models;  // one per grid point
};

TrainFits fit_grid(const FeatureTable& table, const PipelineConfig& cfg, const std::vector<std::string>& train) {
  const auto idx = table.rows_of(train);
  if (idx.size() < 2) throw Error(Errc::TooFewParticipants, "fewer than two training trials");
  const Matrix X = table.rows(idx);
  const Vector y = table.targets(idx);
  TrainFits fits;
  fits.target = TargetScaler::fit(y, cfg.standardize_target);
  const Vector ys = fits.target.apply(y);
  fits.models.resize(cfg.grid.size());
  parallel_for(cfg.grid.size(), cfg.parallelism,
               [&](std::size_t g) { fits.models[g] = fit_model(cfg, cfg.grid[g], X, ys); });
  return fits;
}

FoldResult evaluate_fold(const FeatureTable& table, const FoldSpec& fold, const PipelineConfig& cfg,
                         const TrainFits& fits) {
  check_isolation(fold);
  FoldResult r;
  r.index = fold.index;
  r.test = fold.test;
  r.validation = fold.validation;
  const auto vi = table.rows_of({fold.validation});
  const auto ti = table.rows_of({fold.test});
  if (vi.size() < 2 || ti.size() < 2) {
    r.failed = true;
    r.reason = "validation or test participant has fewer than two trials";
    r.validation_pearson = r.test_pearson = r.test_mse = std::numeric_limits<double>::quiet_NaN();
    return r;
  }
  const Matrix Xv = table.rows(vi), Xt = table.rows(ti);
  const Vector yv = table.targets(vi), yt = table.targets(ti);

  bool found = false;
  double best = -std::numeric_limits<double>::infinity();
  for (std::size_t g = 0; g < cfg.grid.size(); ++g) {
    const Vector pv = fits.target.invert(predict(fits.models[g], Xv));
    double pr = 0.0;
    if (!try_pearson(pv, yv, pr)) continue;
    if (!found || pr > best) {
      found = true;
      best = pr;
      r.chosen_index = g;
    }
  }
  if (!found) {
    r.failed = true;
    r.reason = "validation Pearson undefined for every grid point (constant predictions)";
    r.validation_pearson = r.test_pearson = r.test_mse = std::numeric_limits<double>::quiet_NaN();
    return r;
  }
  r.chosen = cfg.grid[r.chosen_index];
  r.validation_pearson = best;
  const Vector pt = fits.target.invert(predict(fits.models[r.chosen_index], Xt));
  r.test_mse = mse(as_span(pt), as_span(yt));
  if (!try_pearson(pt, yt, r.test_pearson)) {
    r.failed = true;
    r.reason = "test predictions are constant";
    r.test_pearson = std::numeric_limits<double>::quiet_NaN();
  }
  return r;
}

void summarize(CvReport& rep) {
  const auto vals = rep.test_pearsons();
  rep.n_failed = rep.folds.size() - vals.size();
  if (vals.empty()) {
    rep.mean_test_pearson = rep.std_test_pearson = std::numeric_limits<double>::quiet_NaN();
    return;
  }
  double s = 0.0;
  for (double v : vals) s += v;
  rep.mean_test_pearson = s / static_cast<double>(vals.size());
  double ss = 0.0;
  for (double v : vals) ss += (v - rep.mean_test_pearson) * (v - rep.mean_test_pearson);
  rep.std_test_pearson = vals.size() > 1 ? std::sqrt(ss / static_cast<double>(vals.size() - 1)) : 0.0;
}

std::map<std::string, char> cohort_of(const FeatureTable& t) {
  std::map<std::string, char> m;
  for (std::size_t i = 0; i < t.keys.size(); ++i) m.emplace(t.keys[i].participant, t.cohorts[i]);
  return m;
}

}  // namespace

std::vector<FoldSpec> make_folds(std::vector<std::string> eval, std::vector<std::string> train) {
  std::sort(eval.begin(), eval.end());
  eval.erase(std::unique(eval.begin(), eval.end()), eval.end());
  if (eval.size() < 2) {
    throw Error(Errc::TooFewParticipants, "need at least 2 distinct eval participants, got " + std::to_string(eval.size()));
  }
  for (const auto& p : train) {
    if (std::binary_search(eval.begin(), eval.end(), p)) {
      throw Error(Errc::Consistency, "participant " + p + " is both a training and an eval participant");
    }
  }
  std::vector<FoldSpec> folds;
  for (const auto& test : eval) {
    for (const auto& val : eval) {
      if (val == test) continue;
      folds.push_back({folds.size(), train, val, test});
      check_isolation(folds.back());
    }
  }
  return folds;
}

ParticipantRoles participant_roles(const TrialSet& data, char eval_cohort) {
  ParticipantRoles roles;
  std::vector<std::pair<char, std::string>> train;
  for (const auto& [p, c] : data.participants()) {
    if (c == eval_cohort) roles.eval.push_back(p);
    else train.emplace_back(c, p);
  }
  std::sort(train.begin(), train.end());
  for (auto& [c, p] : train) roles.train.push_back(p);
  return roles;
}

void parallel_for(std::size_t n, std::size_t parallelism, const std::function<void(std::size_t)>& fn) {
  const std::size_t workers = std::min(std::max<std::size_t>(parallelism, 1), n);
  if (workers <= 1) {
    for (std::size_t i = 0; i < n; ++i) fn(i);
    return;
  }
  std::atomic<std::size_t> next{0};
  std::exception_ptr first;
  std::mutex mu;
  std::vector<std::thread> pool;
  for (std::size_t w = 0; w < workers; ++w) {
    pool.emplace_back([&] {
      for (std::size_t i = next++; i < n; i = next++) {
        try {
          fn(i);
        } catch (...) {
          std::lock_guard lock(mu);
          if (!first) first = std::current_exception();
          next = n;
        }
      }
    });
  }
  for (auto& t : pool) t.join();
  if (first) std::rethrow_exception(first);
}

std::vector<Eigen::Index> FeatureTable::rows_of(const std::vector<std::string>& participants) const {
  const std::set<std::string> want(participants.begin(), participants.end());
  std::vector<Eigen::Index> idx;
  for (std::size_t i = 0; i < keys.size(); ++i)
    if (want.contains(keys[i].participant)) idx.push_back(static_cast<Eigen::Index>(i));
  return idx;
}

Matrix FeatureTable::rows(const std::vector<Eigen::Index>& idx) const {
  Matrix out(static_cast<Eigen::Index>(idx.size()), X.cols());
  for (std::size_t i = 0; i < idx.size(); ++i) out.row(static_cast<Eigen::Index>(i)) = X.row(idx[i]);
  return out;
}

Vector FeatureTable::targets(const std::vector<Eigen::Index>& idx) const {
  Vector out(static_cast<Eigen::Index>(idx.size()));
  for (std::size_t i = 0; i < idx.size(); ++i) out(static_cast<Eigen::Index>(i)) = y(idx[i]);
  return out;
}

FeatureTable build_feature_table(const TrialSet& data, const FeatureExtractor& extractor, std::size_t parallelism,
                                 const std::vector<std::string>* participants) {
  std::vector<const Trial*> trials;
  std::set<std::string> want;
  if (participants != nullptr) want.insert(participants->begin(), participants->end());
  for (const auto& t : data.trials)
    if (participants == nullptr || want.contains(t.key.participant)) trials.push_back(&t);
  std::sort(trials.begin(), trials.end(), [](const Trial* a, const Trial* b) { return a->key < b->key; });

  FeatureTable table;
  const std::size_t len = feature_length(extractor.temporal());
  table.X.resize(static_cast<Eigen::Index>(trials.size()), static_cast<Eigen::Index>(len));
  table.y.resize(static_cast<Eigen::Index>(trials.size()));
  for (const Trial* t : trials) {
    table.keys.push_back(t->key);
    table.cohorts.push_back(t->cohort);
  }
  parallel_for(trials.size(), parallelism, [&](std::size_t i) {
    const auto row = extractor(preprocess_trial(*trials[i]));
    for (std::size_t j = 0; j < len; ++j) table.X(static_cast<Eigen::Index>(i), static_cast<Eigen::Index>(j)) = row[j];
    table.y(static_cast<Eigen::Index>(i)) = data.score(trials[i]->key);
  });
  return table;
}

std::vector<double> CvReport::test_pearsons() const {
  std::vector<double> v;
  for (const auto& f : folds)
    if (!f.failed) v.push_back(f.test_pearson);
  return v;
}

CvReport run_nested_cv(const FeatureTable& table, const PipelineConfig& cfg_in, const std::vector<std::string>& train,
                       const std::vector<std::string>& eval, const CvOptions& opts) {
  PipelineConfig cfg = cfg_in;
  cfg.finalize();
  CvReport rep;
  rep.config = cfg;
  const auto folds = make_folds(eval, train);
  rep.train_participants = train;
  const std::set<std::string> eval_set(eval.begin(), eval.end());
  rep.eval_participants.assign(eval_set.begin(), eval_set.end());
  rep.n_train_trials = table.rows_of(train).size();

  auto t0 = Clock::now();
  TrainFits shared;
  if (opts.reuse_fits) shared = fit_grid(table, cfg, train);
  rep.timings_s["fit"] = seconds_since(t0);

  t0 = Clock::now();
  rep.folds.resize(folds.size());
  for (std::size_t f = 0; f < folds.size(); ++f) {
    if (opts.reuse_fits) {
      rep.folds[f] = evaluate_fold(table, folds[f], cfg, shared);
    } else {
      rep.folds[f] = evaluate_fold(table, folds[f], cfg, fit_grid(table, cfg, folds[f].train));
    }
  }
  rep.timings_s["evaluate"] = seconds_since(t0);
  summarize(rep);
  return rep;
}

CvReport run_nested_cv(const TrialSet& data, const PipelineConfig& cfg_in, const CvOptions& opts) {
  PipelineConfig cfg = cfg_in;
  cfg.finalize();
  const auto roles = participant_roles(data, cfg.eval_cohort);
  const FeatureExtractor extractor(make_provider(cfg.provider), data.montage, cfg.spatial, cfg.temporal);
  if (opts.cache_features) {
    const auto t0 = Clock::now();
    const auto table = build_feature_table(data, extractor, cfg.parallelism);
    const double feat = seconds_since(t0);
    CvReport rep = run_nested_cv(table, cfg, roles.train, roles.eval, opts);
    rep.timings_s["features"] = feat;
    return rep;
  }
  // every fold extracts features for its own participants from scratch
  const auto folds = make_folds(roles.eval, roles.train);
  CvReport rep;
  rep.config = cfg;
  rep.train_participants = roles.train;
  rep.eval_participants = roles.eval;
  const auto t0 = Clock::now();
  for (const auto& fold : folds) {
    std::vector<std::string> members = fold.train;
    members.push_back(fold.validation);
    members.push_back(fold.test);
    const auto table = build_feature_table(data, extractor, cfg.parallelism, &members);
    rep.n_train_trials = table.rows_of(fold.train).size();
    const TrainFits fits = fit_grid(table, cfg, fold.train);
    rep.folds.push_back(evaluate_fold(table, fold, cfg, fits));
  }
  rep.timings_s["total"] = seconds_since(t0);
  summarize(rep);
  return rep;
}

double consensus_hyperparameter(const CvReport& report) {
  std::vector<std::size_t> votes(report.config.grid.size(), 0);
  for (const auto& f : report.folds)
    if (!f.failed) ++votes[f.chosen_index];
  if (votes.empty()) throw Error(Errc::InvalidConfig, "empty grid");
  const auto best = std::max_element(votes.begin(), votes.end());  // first maximum = grid order
  return report.config.grid[static_cast<std::size_t>(best - votes.begin())];
}

ojson to_json(const CvReport& r) {
  ojson doc;
  doc["config"] = to_json(r.config);
  doc["train_participants"] = r.train_participants;
  doc["eval_participants"] = r.eval_participants;
  doc["n_train_trials"] = r.n_train_trials;
  doc["n_folds"] = r.folds.size();
  doc["n_failed"] = r.n_failed;
  doc["mean_test_pearson"] = number_or_null(r.mean_test_pearson);
  doc["std_test_pearson"] = number_or_null(r.std_test_pearson);
  ojson folds = ojson::array();
  for (const auto& f : r.folds) {
    ojson j;
    j["fold"] = f.index;
    j["test"] = f.test;
    j["validation"] = f.validation;
    j["status"] = f.failed ? "failed" : "ok";
    if (f.failed) j["reason"] = f.reason;
    j["chosen"] = f.failed && !std::isfinite(f.validation_pearson) ? ojson(nullptr) : ojson(f.chosen);
    j["validation_pearson"] = number_or_null(f.validation_pearson);
    j["test_pearson"] = number_or_null(f.test_pearson);
    j["test_mse"] = number_or_null(f.test_mse);
    folds.push_back(std::move(j));
  }
  doc["folds"] = std::move(folds);
  return doc;
}

std::string cv_report_csv(const CvReport& r) {
  std::ostringstream s;
  s << "fold,test,validation,status,chosen,validation_pearson,test_pearson,test_mse\n";
  for (const auto& f : r.folds) {
    s << f.index << ',' << f.test << ',' << f.validation << ',' << (f.failed ? "failed" : "ok") << ','
      << (std::isfinite(f.validation_pearson) ? format_double(f.chosen) : "") << ','
      << csv_number(f.validation_pearson) << ',' << csv_number(f.test_pearson) << ',' << csv_number(f.test_mse)
      << '\n';
  }
  return s.str();
}

std::pair<double, double> t_confidence_interval(const std::vector<double>& values, double level) {
  const std::size_t n = values.size();
  if (n == 0) return {std::numeric_limits<double>::quiet_NaN(), std::numeric_limits<double>::quiet_NaN()};
  double mean = 0.0;
  for (double v : values) mean += v;
  mean /= static_cast<double>(n);
  if (n < 2) return {mean, mean};
  double ss = 0.0;
  for (double v : values) ss += (v - mean) * (v - mean);
  const double sd = std::sqrt(ss / static_cast<double>(n - 1));
  const boost::math::students_t dist(static_cast<double>(n - 1));
  const double t = boost::math::quantile(dist, 0.5 + level / 2.0);
  const double half = t * sd / std::sqrt(static_cast<double>(n));
  return {mean - half, mean + half};
}

std::vector<std::vector<std::string>> default_increments(const TrialSet& data, char eval_cohort) {
  std::vector<std::vector<std::string>> inc;
  for (const auto& p : participant_roles(data, eval_cohort).train) inc.push_back({p});
  return inc;
}

SweepReport run_sweep(const FeatureTable& table, const PipelineConfig& cfg_in,
                      const std::vector<std::vector<std::string>>& increments, const std::vector<std::string>& eval) {
  PipelineConfig cfg = cfg_in;
  cfg.finalize();
  if (increments.empty()) throw Error(Errc::InvalidConfig, "sweep needs at least one increment");
  const auto cohorts = cohort_of(table);
  std::vector<std::string> all;
  for (const auto& inc : increments) {
    if (inc.empty()) throw Error(Errc::InvalidConfig, "empty sweep increment");
    for (const auto& p : inc) {
      if (!cohorts.contains(p)) throw Error(Errc::Consistency, "sweep participant " + p + " has no trials");
      if (std::find(all.begin(), all.end(), p) != all.end()) {
        throw Error(Errc::InvalidConfig, "participant " + p + " appears in two increments");
      }
      all.push_back(p);
    }
  }
  const double total = static_cast<double>(table.rows_of(all).size());

  SweepReport rep;
  rep.config = cfg;
  std::vector<std::string> prefix;
  for (std::size_t s = 0; s < increments.size(); ++s) {
    prefix.insert(prefix.end(), increments[s].begin(), increments[s].end());
    const CvReport cv = run_nested_cv(table, cfg, prefix, eval);
    if (rep.eval_participants.empty()) rep.eval_participants = cv.eval_participants;
    SweepPoint pt;
    pt.step = s;
    pt.added = increments[s];
    pt.n_participants = prefix.size();
    pt.n_trials = cv.n_train_trials;
    pt.train_fraction_pct = static_cast<double>(pt.n_trials) / total * 100.0;
    pt.fold_pearson = cv.test_pearsons();
    pt.n_failed = cv.n_failed;
    pt.mean = cv.mean_test_pearson;
    std::tie(pt.ci_lo, pt.ci_hi) = t_confidence_interval(pt.fold_pearson);
    pt.last_cohort = cohorts.at(prefix.back());
    pt.cohort_boundary = s + 1 == increments.size() || cohorts.at(increments[s + 1].front()) != pt.last_cohort;
    rep.points.push_back(std::move(pt));
  }
  return rep;
}

SweepReport run_sweep(const TrialSet& data, const PipelineConfig& cfg_in,
                      const std::vector<std::vector<std::string>>& increments) {
  PipelineConfig cfg = cfg_in;
  cfg.finalize();
  const auto roles = participant_roles(data, cfg.eval_cohort);
  const FeatureExtractor extractor(make_provider(cfg.provider), data.montage, cfg.spatial, cfg.temporal);
  const auto table = build_feature_table(data, extractor, cfg.parallelism);
  return run_sweep(table, cfg, increments, roles.eval);
}

ojson to_json(const SweepReport& r) {
  ojson doc;
  doc["config"] = to_json(r.config);
  doc["eval_participants"] = r.eval_participants;
  ojson pts = ojson::array();
  for (const auto& p : r.points) {
    ojson j;
    j["step"] = p.step;
    j["added"] = p.added;
    j["n_participants"] = p.n_participants;
    j["n_trials"] = p.n_trials;
    j["train_fraction_pct"] = p.train_fraction_pct;
    j["fold_pearson"] = p.fold_pearson;
    j["n_failed"] = p.n_failed;
    j["mean"] = number_or_null(p.mean);
    j["ci95"] = {number_or_null(p.ci_lo), number_or_null(p.ci_hi)};
    j["cohort"] = std::string(1, p.last_cohort);
    j["cohort_boundary"] = p.cohort_boundary;
    pts.push_back(std::move(j));
  }
  doc["points"] = std::move(pts);
  return doc;
}

std::string sweep_report_csv(const SweepReport& r) {
  std::ostringstream s;
  s << "step,n_participants,n_trials,train_fraction_pct,mean,ci95_lo,ci95_hi,n_failed,cohort,cohort_boundary\n";
  for (const auto& p : r.points) {
    s << p.step << ',' << p.n_participants << ',' << p.n_trials << ',' << format_double(p.train_fraction_pct) << ','
      << csv_number(p.mean) << ',' << csv_number(p.ci_lo) << ',' << csv_number(p.ci_hi) << ',' << p.n_failed << ','
      << p.last_cohort << ',' << (p.cohort_boundary ? 1 : 0) << '\n';
  }
  return s.str();
}

DailyReport longitudinal_report(const TrialSet& data, const TrainedPipeline& pipeline, const ExplainConfig& cfg,
                                const std::vector<std::string>& participants) {
  if (data.montage.size() != pipeline.montage.size()) {
    throw Error(Errc::Consistency, "dataset montage has " + std::to_string(data.montage.size()) +
                                       " channels, model expects " + std::to_string(pipeline.montage.size()));
  }
  std::set<std::string> want(participants.begin(), participants.end());
  std::vector<const Trial*> trials;
  for (const auto& t : data.trials)
    if (want.empty() || want.contains(t.key.participant)) trials.push_back(&t);
  std::sort(trials.begin(), trials.end(), [](const Trial* a, const Trial* b) { return a->key < b->key; });
  if (trials.empty()) throw Error(Errc::EmptyGroup, "no trials for the requested participants");

  DailyReport rep;
  std::set<std::string> seen;
  for (const Trial* t : trials) seen.insert(t->key.participant);
  rep.participants.assign(seen.begin(), seen.end());

  std::vector<double> predicted(trials.size());
  rep.attributions.resize(trials.size());
  parallel_for(trials.size(), pipeline.config.parallelism, [&](std::size_t i) {
    const WindowTensor w = preprocess_trial(*trials[i]);
    predicted[i] = pipeline.predict(w);
    rep.attributions[i] = {trials[i]->key, explain_window_tensor(pipeline, w, cfg)};
  });

  std::vector<std::string> names;
  for (const auto& e : pipeline.montage.electrodes()) names.push_back(e.name);
  rep.global = aggregate_relevance(rep.attributions, names, GroupBy::Global).front();
  rep.per_participant = aggregate_relevance(rep.attributions, names, GroupBy::Participant);
  const auto day_maps = aggregate_relevance(rep.attributions, names, GroupBy::Day);

  std::map<int, DayEntry> days;
  for (std::size_t i = 0; i < trials.size(); ++i) {
    auto& d = days[trials[i]->key.day];
    d.day = trials[i]->key.day;
    ++d.n_trials;
    d.mean_predicted += predicted[i];
    d.mean_truth += data.score(trials[i]->key);
  }
  for (auto& [day, d] : days) {
    d.mean_predicted /= static_cast<double>(d.n_trials);
    d.mean_truth /= static_cast<double>(d.n_trials);
    for (const auto& m : day_maps)
      if (m.group == "day" + std::to_string(day)) d.relevance = m;
    std::map<std::string, std::pair<double, std::size_t>> acc;
    for (const auto& p : rep.participants) {
      auto it = data.behavioral.find({p, day});
      if (it == data.behavioral.end()) continue;
      for (const auto& [metric, value] : it->second) {
        acc[metric].first += value;
        ++acc[metric].second;
      }
    }
    for (const auto& [metric, sc] : acc) d.behavioral[metric] = sc.first / static_cast<double>(sc.second);
    if (!d.behavioral.empty()) rep.has_behavioral = true;
    rep.days.push_back(std::move(d));
  }
  return rep;
}

ojson to_json(const DailyReport& r) {
  ojson doc;
  doc["participants"] = r.participants;
  ojson days = ojson::array();
  for (const auto& d : r.days) {
    ojson j;
    j["day"] = d.day;
    j["n_trials"] = d.n_trials;
    j["mean_predicted"] = d.mean_predicted;
    j["mean_truth"] = d.mean_truth;
    if (r.has_behavioral) {
      ojson b = ojson::object();
      for (const auto& [k, v] : d.behavioral) b[k] = v;
      j["behavioral"] = std::move(b);
    }
    ojson rel = ojson::object();
    for (std::size_t e = 0; e < d.relevance.electrodes.size(); ++e) rel[d.relevance.electrodes[e]] = d.relevance.relevance[e];
    j["relevance"] = std::move(rel);
    j["topomap"] = "relevance_day" + std::to_string(d.day) + ".svg";
    days.push_back(std::move(j));
  }
  doc["days"] = std::move(days);
  return doc;
}

void write_daily_report(const DailyReport& r, const Montage& montage, const std::string& out_dir) {
  namespace fs = std::filesystem;
  std::error_code ec;
  fs::create_directories(out_dir, ec);
  if (ec) throw Error(Errc::Io, "cannot create " + out_dir + ": " + ec.message());
  const fs::path dir(out_dir);

  write_text((dir / "daily.json").string(), to_json(r).dump(2) + "\n");
  std::set<std::string> metrics;
  for (const auto& d : r.days)
    for (const auto& [k, v] : d.behavioral) metrics.insert(k);
  std::ostringstream csv;
  csv << "day,n_trials,mean_predicted,mean_truth";
  for (const auto& m : metrics) csv << ',' << m;
  csv << '\n';
  for (const auto& d : r.days) {
    csv << d.day << ',' << d.n_trials << ',' << format_double(d.mean_predicted) << ',' << format_double(d.mean_truth);
    for (const auto& m : metrics) {
      auto it = d.behavioral.find(m);
      csv << ',' << (it == d.behavioral.end() ? "" : format_double(it->second));
    }
    csv << '\n';
  }
  write_text((dir / "daily.csv").string(), csv.str());

  std::vector<RelevanceMap> maps{r.global};
  maps.insert(maps.end(), r.per_participant.begin(), r.per_participant.end());
  for (const auto& d : r.days) maps.push_back(d.relevance);
  write_relevance_csv(maps, (dir / "relevance.csv").string());
  for (const auto& m : maps) render_topomap(m, montage, (dir / ("relevance_" + m.group)).string());

  ojson att = ojson::array();
  for (const auto& [key, res] : r.attributions) {
    att.push_back({{"trial", key.str()},
                   {"base_value", res.base_value},
                   {"full_value", res.full_value},
                   {"mode", res.mode == AttributionMode::Exact ? "exact" : "sampled"},
                   {"evaluations", res.evaluations},
                   {"phi", res.phi},
                   {"std_error", res.std_error}});
  }
  write_text((dir / "attributions.json").string(), att.dump(2) + "\n");
}

}  // namespace cogload
