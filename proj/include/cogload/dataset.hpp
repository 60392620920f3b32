#pragma once

#include <compare>
#include <cstddef>
#include <cstdint>
#include <map>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include "cogload/montage.hpp"

namespace cogload {

// (participant, day, trial_index) identifies a trial across all files.
struct TrialKey {
  std::string participant;
  int day{1};
  int trial_index{0};

  auto operator<=>(const TrialKey&) const = default;
  bool operator==(const TrialKey&) const = default;
  std::string str() const;  // "participant/day/trial_index"
};

struct Trial {
  TrialKey key;
  char cohort{'A'};
  double fs{0.0};
  std::size_t n_channels{0};
  std::size_t n_samples{0};
  std::vector<float> samples;  // channel-major, n_channels * n_samples

  std::span<const float> channel(std::size_t c) const {
    return {samples.data() + c * n_samples, n_samples};
  }
  std::span<float> channel(std::size_t c) { return {samples.data() + c * n_samples, n_samples}; }

  // Checks finiteness, shape and metadata ranges; throws Consistency.
  void validate() const;
  bool operator==(const Trial&) const = default;
};

struct LabelRecord {
  TrialKey key;
  char cohort{'A'};
  double score{0.0};
  bool operator==(const LabelRecord&) const = default;
};

// metric name -> value, per (participant, day)
using BehavioralMetrics = std::map<std::pair<std::string, int>, std::map<std::string, double>>;

struct TrialSet {
  Montage montage;
  std::vector<Trial> trials;
  std::vector<LabelRecord> labels;
  BehavioralMetrics behavioral;

  double score(const TrialKey& key) const;  // throws Consistency when absent
  const LabelRecord* find_label(const TrialKey& key) const;
  // participant -> cohort, ordered by participant id
  std::map<std::string, char> participants() const;

  // Throws Consistency for label/trial mismatches or channel-count mismatches.
  void validate() const;
  bool operator==(const TrialSet&) const = default;
};

bool valid_cohort(char c);

// CLT1 trial container.
Trial read_trial_file(const std::string& path);
void write_trial_file(const Trial& trial, const std::string& path);
std::vector<unsigned char> encode_trial(const Trial& trial);

std::vector<LabelRecord> read_labels_csv(const std::string& path);
void write_labels_csv(const std::vector<LabelRecord>& labels, const std::string& path);
BehavioralMetrics read_behavioral_csv(const std::string& path);
void write_behavioral_csv(const BehavioralMetrics& metrics, const std::string& path);

TrialSet load_trialset(const std::string& manifest_path);

// Writes montage.json, labels.csv, optional behavioral.csv, one CLT1 file per
// trial under trials/, and manifest.json into `dir`. Returns the manifest
// path. Existing files are replaced.
std::string write_trialset(const TrialSet& ts, const std::string& dir);

// Shortest round-trip decimal form.
std::string format_double(double v);

}  // namespace cogload
