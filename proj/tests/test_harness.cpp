#include <doctest.h>

#include <algorithm>
#include <cmath>
#include <filesystem>
#include <map>
#include <random>
#include <set>

#include "cogload/error.hpp"
#include "cogload/harness.hpp"
#include "cogload/synth.hpp"
#include "testutil.hpp"

using namespace cogload;

namespace {

// Small planted dataset: 10 participants (5 eval), 9 channels.
const TrialSet& small_synth() {
  static const TrialSet ts = [] {
    SynthConfig c;
    c.n_participants = 10;
    c.n_days = 2;
    c.trials_per_day = 2;
    c.n_channels = 9;
    c.seed = 4;
    return generate_synthetic_in_memory(c).trials;
  }();
  return ts;
}

const TrialSet& five_day_synth() {
  static const TrialSet ts = [] {
    SynthConfig c;
    c.n_participants = 4;
    c.n_days = 5;
    c.trials_per_day = 1;
    c.n_channels = 9;
    c.seed = 6;
    return generate_synthetic_in_memory(c).trials;
  }();
  return ts;
}

double mean(const std::vector<double>& v) {
  double s = 0.0;
  for (double x : v) s += x;
  return s / static_cast<double>(v.size());
}

void check_isolation(const std::vector<FoldSpec>& folds) {
  for (const auto& f : folds) {
    CHECK(f.test != f.validation);
    CHECK(std::find(f.train.begin(), f.train.end(), f.test) == f.train.end());
    CHECK(std::find(f.train.begin(), f.train.end(), f.validation) == f.train.end());
  }
}

}  // namespace

TEST_CASE("make_folds") {
  const std::vector<std::string> train{"A1", "A2", "B1"};
  const auto folds = make_folds({"E5", "E3", "E1", "E2", "E4"}, train);
  REQUIRE(folds.size() == 20);
  check_isolation(folds);
  std::set<std::pair<std::string, std::string>> pairs;
  for (std::size_t i = 0; i < folds.size(); ++i) {
    CHECK(folds[i].index == i);
    CHECK(folds[i].train == train);
    pairs.insert({folds[i].test, folds[i].validation});
  }
  CHECK(pairs.size() == 20);
  // test-major, both ascending
  CHECK(folds[0].test == "E1");
  CHECK(folds[0].validation == "E2");
  CHECK(folds[3].validation == "E5");
  CHECK(folds[4].test == "E2");
  CHECK(folds[4].validation == "E1");
  CHECK(folds[19].test == "E5");
  CHECK(folds[19].validation == "E4");

  CHECK(make_folds({"X", "Y"}, train).size() == 2);
  CHECK(make_folds({"X", "Y", "Z"}, {}).size() == 6);
  CHECK(testutil::error_code_of([&] { make_folds({"X", "X"}, train); }) == Errc::TooFewParticipants);
  CHECK(testutil::error_code_of([&] { make_folds({"X"}, train); }) == Errc::TooFewParticipants);
  CHECK(testutil::error_code_of([&] { make_folds({"X", "A1"}, train); }) == Errc::Consistency);
}

TEST_CASE("t confidence interval") {
  // tabulated two-sided 95% Student-t quantiles
  const std::map<std::size_t, double> t975{{2, 12.706204736}, {5, 2.776445105}, {20, 2.093024054}};
  std::mt19937_64 rng(3);
  std::normal_distribution<double> nd(0.4, 0.1);
  for (const auto& [n, t] : t975) {
    std::vector<double> v(n);
    for (auto& x : v) x = nd(rng);
    const double m = mean(v);
    double ss = 0.0;
    for (double x : v) ss += (x - m) * (x - m);
    const double half = t * std::sqrt(ss / static_cast<double>(n - 1)) / std::sqrt(static_cast<double>(n));
    const auto [lo, hi] = t_confidence_interval(v);
    CHECK(lo == doctest::Approx(m - half).epsilon(1e-8));
    CHECK(hi == doctest::Approx(m + half).epsilon(1e-8));
  }
  const auto [lo, hi] = t_confidence_interval({0.3});
  CHECK(lo == 0.3);
  CHECK(hi == 0.3);
}

TEST_CASE("nested CV on a small planted set") {
  const auto& data = small_synth();
  PipelineConfig cfg;
  cfg.provider.seed = 1;

  const auto rep = run_nested_cv(data, cfg);
  REQUIRE(rep.folds.size() == 20);
  CHECK(rep.eval_participants.size() == 5);
  CHECK(rep.train_participants.size() == 5);
  for (const auto& f : rep.folds) {
    CHECK(f.test != f.validation);
    for (const auto& p : rep.train_participants) {
      CHECK(p != f.test);
      CHECK(p != f.validation);
    }
    CHECK(std::find(cfg.default_grid(EstimatorKind::Linear).begin(), cfg.default_grid(EstimatorKind::Linear).end(),
                    f.chosen) != cfg.default_grid(EstimatorKind::Linear).end());
  }
  const auto ps = rep.test_pearsons();
  CHECK(ps.size() + rep.n_failed == 20);
  CHECK(rep.mean_test_pearson == doctest::Approx(mean(ps)).epsilon(1e-12));
  double ss = 0.0;
  for (double p : ps) ss += (p - rep.mean_test_pearson) * (p - rep.mean_test_pearson);
  CHECK(rep.std_test_pearson == doctest::Approx(std::sqrt(ss / static_cast<double>(ps.size() - 1))).epsilon(1e-9));

  SUBCASE("reproducible") {
    const auto again = run_nested_cv(data, cfg);
    CHECK(to_json(again).dump(2) == to_json(rep).dump(2));
    CHECK(cv_report_csv(again) == cv_report_csv(rep));
  }
  SUBCASE("feature cache and fit reuse are transparent") {
    const auto a = run_nested_cv(data, cfg, {false, true});
    const auto b = run_nested_cv(data, cfg, {true, false});
    CHECK(to_json(a).dump() == to_json(rep).dump());
    CHECK(to_json(b).dump() == to_json(rep).dump());
  }
  SUBCASE("parallel folds match serial") {
    PipelineConfig par = cfg;
    par.parallelism = 3;
    auto j = to_json(run_nested_cv(data, par));
    auto k = to_json(rep);
    j["config"].erase("parallelism");
    k["config"].erase("parallelism");
    CHECK(j.dump() == k.dump());
  }
  SUBCASE("single grid point is chosen everywhere") {
    PipelineConfig one = cfg;
    one.grid = {0.5};
    const auto r = run_nested_cv(data, one);
    for (const auto& f : r.folds) CHECK(f.chosen == 0.5);
    CHECK(consensus_hyperparameter(r) == 0.5);
  }
  SUBCASE("sweep with one full increment equals the CV run") {
    const auto roles = participant_roles(data, 'E');
    const auto sw = run_sweep(data, cfg, {roles.train});
    REQUIRE(sw.points.size() == 1);
    const auto& pt = sw.points[0];
    CHECK(pt.mean == rep.mean_test_pearson);
    CHECK(pt.fold_pearson == ps);
    CHECK(pt.train_fraction_pct == doctest::Approx(100.0));
    CHECK(pt.n_participants == 5);
    CHECK(pt.cohort_boundary);
    const auto [lo, hi] = t_confidence_interval(ps);
    CHECK(pt.ci_lo == lo);
    CHECK(pt.ci_hi == hi);
  }
  SUBCASE("default sweep: fractions increase and folds match restricted CV") {
    const auto inc = default_increments(data, 'E');
    REQUIRE(inc.size() == 5);
    const auto sw = run_sweep(data, cfg, inc);
    REQUIRE(sw.points.size() == 5);
    // every training participant has the same trial count here
    for (std::size_t s = 0; s < 5; ++s) {
      CHECK(sw.points[s].train_fraction_pct == doctest::Approx(20.0 * static_cast<double>(s + 1)));
      if (s > 0) CHECK(sw.points[s].train_fraction_pct > sw.points[s - 1].train_fraction_pct);
    }
    const FeatureExtractor fx(make_provider(cfg.provider), data.montage, cfg.spatial, cfg.temporal);
    const auto table = build_feature_table(data, fx, 1);
    const auto roles = participant_roles(data, 'E');
    const std::vector<std::string> prefix(roles.train.begin(), roles.train.begin() + 2);
    const auto cv2 = run_nested_cv(table, cfg, prefix, roles.eval);
    CHECK(sw.points[1].fold_pearson == cv2.test_pearsons());
    CHECK(sw.points.back().cohort_boundary);
  }
}

TEST_CASE("sweep where more data strictly helps") {
  // Participant T<k> has label noise that shrinks with k; eval labels are clean.
  const Eigen::Index dim = 6, per = 30;
  std::mt19937_64 rng(17);
  std::normal_distribution<double> nd;
  Vector w(dim);
  for (auto& x : w) x = nd(rng);
  FeatureTable table;
  std::vector<std::string> names{"T1", "T2", "T3", "T4", "E1", "E2", "E3", "E4", "E5"};
  const std::vector<double> noise{4.0, 1.0, 0.3, 0.1, 0.0, 0.0, 0.0, 0.0, 0.0};
  table.X.resize(per * static_cast<Eigen::Index>(names.size()), dim);
  table.y.resize(table.X.rows());
  Eigen::Index r = 0;
  for (std::size_t p = 0; p < names.size(); ++p) {
    for (Eigen::Index i = 0; i < per; ++i, ++r) {
      for (Eigen::Index j = 0; j < dim; ++j) table.X(r, j) = nd(rng);
      table.y(r) = table.X.row(r).dot(w) + noise[p] * 3.0 * nd(rng) + 0.3 * nd(rng);
      table.keys.push_back({names[p], 1, static_cast<int>(i)});
      table.cohorts.push_back(p < 4 ? static_cast<char>('A' + p) : 'E');
    }
  }
  PipelineConfig cfg;
  const auto sw = run_sweep(table, cfg, {{"T1"}, {"T2"}, {"T3"}, {"T4"}}, {"E1", "E2", "E3", "E4", "E5"});
  REQUIRE(sw.points.size() == 4);
  CHECK(sw.points.back().mean >= sw.points.front().mean);
  for (const auto& pt : sw.points) {
    CHECK(pt.fold_pearson.size() == 20);
    CHECK(pt.cohort_boundary);
  }
}

TEST_CASE("longitudinal report") {
  const auto& base = five_day_synth();
  PipelineConfig cfg;
  cfg.provider.seed = 2;
  cfg.finalize();
  const FeatureExtractor fx(make_provider(cfg.provider), base.montage, cfg.spatial, cfg.temporal);
  const auto table = build_feature_table(base, fx, 1);
  const auto pipe = train_pipeline(cfg, base.montage, 0.0, table.X, table.y);
  ExplainConfig ec;

  SUBCASE("day means follow the labels") {
    // labels that fall by construction, with a small per-participant spread
    TrialSet data = base;
    for (auto& l : data.labels) l.score = 1.0 - 0.1 * l.key.day + 0.01 * (l.key.participant.back() - '0');
    const auto rep = longitudinal_report(data, pipe, ec);
    REQUIRE(rep.days.size() == 5);
    std::map<int, std::vector<double>> by_day;
    for (const auto& l : data.labels) by_day[l.key.day].push_back(l.score);
    for (std::size_t d = 0; d < 5; ++d) {
      CHECK(rep.days[d].day == static_cast<int>(d + 1));
      CHECK(rep.days[d].n_trials == 4);
      CHECK(rep.days[d].mean_truth == doctest::Approx(mean(by_day[static_cast<int>(d + 1)])).epsilon(1e-12));
      if (d > 0) CHECK(rep.days[d].mean_truth < rep.days[d - 1].mean_truth);
      CHECK(rep.days[d].relevance.trial_count == 4);
    }
    CHECK(rep.has_behavioral);
    CHECK(rep.global.trial_count == 20);
    CHECK(rep.per_participant.size() == 4);
    CHECK(rep.attributions.size() == 20);

    testutil::TempDir dir("daily");
    write_daily_report(rep, data.montage, dir / "out");
    std::size_t day_svgs = 0;
    for (const auto& e : std::filesystem::directory_iterator(dir / "out")) {
      const auto name = e.path().filename().string();
      if (name.starts_with("relevance_day") && name.ends_with(".svg")) ++day_svgs;
    }
    CHECK(day_svgs == 5);
    const auto doc = nlohmann::json::parse(testutil::read_text(dir / "out/daily.json"));
    CHECK(doc["days"].size() == 5);
    CHECK(doc["days"][0].contains("behavioral"));
  }
  SUBCASE("no behavioral metrics, missing days") {
    TrialSet data = base;
    data.behavioral.clear();
    std::erase_if(data.trials, [](const Trial& t) { return t.key.day == 3; });
    std::erase_if(data.labels, [](const LabelRecord& l) { return l.key.day == 3; });
    const auto rep = longitudinal_report(data, pipe, ec, {"P01", "P02"});
    CHECK_FALSE(rep.has_behavioral);
    REQUIRE(rep.days.size() == 4);
    CHECK(rep.days[2].day == 4);
    CHECK(rep.participants == std::vector<std::string>{"P01", "P02"});
    const auto doc = to_json(rep);
    for (const auto& d : doc["days"]) CHECK_FALSE(d.contains("behavioral"));
    CHECK(testutil::error_code_of([&] { longitudinal_report(data, pipe, ec, {"nobody"}); }) == Errc::EmptyGroup);
  }
  SUBCASE("deterministic") {
    const auto a = to_json(longitudinal_report(base, pipe, ec)).dump();
    const auto b = to_json(longitudinal_report(base, pipe, ec)).dump();
    CHECK(a == b);
  }
}
