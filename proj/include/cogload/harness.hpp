#pragma once

#include <cstddef>
#include <functional>
#include <map>
#include <string>
#include <vector>

#include <json.hpp>

#include "cogload/dataset.hpp"
#include "cogload/explain.hpp"
#include "cogload/pipeline.hpp"

namespace cogload {

struct FoldSpec {
  std::size_t index{0};
  std::vector<std::string> train;
  std::string validation;
  std::string test;
};

// All ordered (test, validation) pairs of distinct eval participants, test
// major, both ascending by id. Throws TooFewParticipants when fewer than two
// distinct eval participants remain, Consistency when a participant is in
// both lists.
std::vector<FoldSpec> make_folds(std::vector<std::string> eval_participants,
                                 std::vector<std::string> train_participants);

struct ParticipantRoles {
  std::vector<std::string> train;  // ordered by (cohort, id)
  std::vector<std::string> eval;   // ordered by id
};
ParticipantRoles participant_roles(const TrialSet& data, char eval_cohort);

// Runs fn(i) for i in [0, n) on up to `parallelism` threads; rethrows the
// first exception.
void parallel_for(std::size_t n, std::size_t parallelism, const std::function<void(std::size_t)>& fn);

// One preprocessed, pooled feature row per trial, rows ordered by trial key.
struct FeatureTable {
  std::vector<TrialKey> keys;
  std::vector<char> cohorts;
  Matrix X;
  Vector y;

  std::vector<Eigen::Index> rows_of(const std::vector<std::string>& participants) const;
  Matrix rows(const std::vector<Eigen::Index>& idx) const;
  Vector targets(const std::vector<Eigen::Index>& idx) const;
};

FeatureTable build_feature_table(const TrialSet& data, const FeatureExtractor& extractor, std::size_t parallelism,
                                 const std::vector<std::string>* participants = nullptr);

struct FoldResult {
  std::size_t index{0};
  std::string test;
  std::string validation;
  bool failed{false};
  std::string reason;
  double chosen{0.0};
  std::size_t chosen_index{0};
  double validation_pearson{0.0};
  double test_pearson{0.0};
  double test_mse{0.0};
};

struct CvReport {
  PipelineConfig config;
  std::vector<std::string> train_participants;
  std::vector<std::string> eval_participants;
  std::size_t n_train_trials{0};
  std::vector<FoldResult> folds;
  std::size_t n_failed{0};
  double mean_test_pearson{0.0};
  double std_test_pearson{0.0};  // sample std over completed folds
  std::map<std::string, double> timings_s;

  std::vector<double> test_pearsons() const;  // completed folds only
};

struct CvOptions {
  // Off: every fold extracts its own features from the raw trials instead of
  // using the shared table.
  bool cache_features{true};
  // Off: every fold refits every grid point instead of sharing the fits of
  // its (identical) training set.
  bool reuse_fits{true};
};

// Grid points are fitted on the training participants, selected by
// validation Pearson (ties and undefined values resolved by grid order) and
// scored on the test participant.
CvReport run_nested_cv(const FeatureTable& table, const PipelineConfig& cfg, const std::vector<std::string>& train,
                       const std::vector<std::string>& eval, const CvOptions& opts = {});
CvReport run_nested_cv(const TrialSet& data, const PipelineConfig& cfg, const CvOptions& opts = {});

// The grid value chosen most often over completed folds (ties: grid order).
double consensus_hyperparameter(const CvReport& report);

nlohmann::ordered_json to_json(const CvReport& r);
std::string cv_report_csv(const CvReport& r);

struct SweepPoint {
  std::size_t step{0};
  std::vector<std::string> added;
  std::size_t n_participants{0};
  std::size_t n_trials{0};
  double train_fraction_pct{0.0};
  std::vector<double> fold_pearson;
  std::size_t n_failed{0};
  double mean{0.0};
  double ci_lo{0.0};
  double ci_hi{0.0};
  char last_cohort{'A'};
  bool cohort_boundary{false};  // the prefix ends with a complete cohort
};

struct SweepReport {
  PipelineConfig config;
  std::vector<std::string> eval_participants;
  std::vector<SweepPoint> points;
};

// mean +- t_{0.975, n-1} s / sqrt(n); degenerate (mean, mean) for n < 2.
std::pair<double, double> t_confidence_interval(const std::vector<double>& values, double level = 0.95);

// One participant per increment, training participants in (cohort, id) order.
std::vector<std::vector<std::string>> default_increments(const TrialSet& data, char eval_cohort);

SweepReport run_sweep(const FeatureTable& table, const PipelineConfig& cfg,
                      const std::vector<std::vector<std::string>>& increments, const std::vector<std::string>& eval);
SweepReport run_sweep(const TrialSet& data, const PipelineConfig& cfg,
                      const std::vector<std::vector<std::string>>& increments);

nlohmann::ordered_json to_json(const SweepReport& r);
std::string sweep_report_csv(const SweepReport& r);

struct DayEntry {
  int day{1};
  std::size_t n_trials{0};
  double mean_predicted{0.0};
  double mean_truth{0.0};
  RelevanceMap relevance;
  std::map<std::string, double> behavioral;  // per-metric mean over participants
};

struct DailyReport {
  std::vector<std::string> participants;
  std::vector<DayEntry> days;
  RelevanceMap global;
  std::vector<RelevanceMap> per_participant;
  bool has_behavioral{false};
  std::vector<std::pair<TrialKey, AttributionResult>> attributions;
};

// Predictions and attributions for the trials of `participants` (all when
// empty), grouped by day. Days without trials are left out.
DailyReport longitudinal_report(const TrialSet& data, const TrainedPipeline& pipeline, const ExplainConfig& cfg,
                                const std::vector<std::string>& participants = {});

nlohmann::ordered_json to_json(const DailyReport& r);
// daily.json, daily.csv, relevance.csv, relevance_<group>.json/.svg for the
// global, per-participant and per-day maps.
void write_daily_report(const DailyReport& r, const Montage& montage, const std::string& out_dir);

}  // namespace cogload
