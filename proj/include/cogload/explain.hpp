#pragma once

#include <cstddef>
#include <cstdint>
#include <functional>
#include <mutex>
#include <span>
#include <string>
#include <unordered_map>
#include <utility>
#include <vector>

#include "cogload/dataset.hpp"
#include "cogload/montage.hpp"
#include "cogload/preprocess.hpp"

namespace cogload {

// Bit i set = electrode i present (not masked).
using Coalition = std::uint64_t;

// Two-level coalition structure: blocks of electrode indices.
struct PartitionTree {
  std::size_t n_leaves{0};
  std::vector<std::vector<std::size_t>> blocks;

  // One block per region, members in the montage's region order.
  static PartitionTree from_montage(const Montage& montage);
  static PartitionTree singletons(std::size_t n);
  static PartitionTree one_block(std::size_t n);
  // Every leaf in exactly one non-empty block; throws InvalidArgument.
  void validate() const;
};

enum class Baseline { Zero, ChannelMean };
std::string_view to_string(Baseline b);
Baseline parse_baseline(std::string_view s);  // throws InvalidConfig

struct MaskSpec {
  std::vector<std::size_t> off_set;
  Baseline baseline{Baseline::Zero};
};

// Channels in off_set become all zeros (Zero) or their per-window mean
// (ChannelMean). Throws BadChannelIndex.
WindowTensor mask_apply(const WindowTensor& w, const MaskSpec& spec);

// Memoized coalition value function. The evaluator receives a batch of
// coalitions and writes one value per coalition; it is only called for
// coalitions not seen before. Safe for concurrent use.
class ValueFunction {
 public:
  using Evaluator = std::function<void(std::span<const Coalition>, std::span<double>)>;

  ValueFunction(std::size_t n_players, Evaluator eval, std::size_t batch_size = 256);
  static ValueFunction from_scalar(std::size_t n_players, std::function<double(Coalition)> f);

  double operator()(Coalition s);
  // Evaluates every coalition in `coalitions` that is not cached yet.
  void prefetch(std::span<const Coalition> coalitions);

  std::size_t n_players() const { return n_players_; }
  Coalition all() const;
  // Distinct evaluator calls so far (one per coalition).
  std::size_t evaluations() const;

 private:
  std::size_t n_players_;
  Evaluator eval_;
  std::size_t batch_size_;
  mutable std::mutex mu_;
  std::unordered_map<Coalition, double> cache_;
};

enum class AttributionMode { Exact, Sampled };

struct AttributionResult {
  std::vector<double> phi;        // per electrode, model-output units
  std::vector<double> std_error;  // sampled mode only; zeros for exact
  double base_value{0.0};         // v(empty)
  double full_value{0.0};         // v(all)
  AttributionMode mode{AttributionMode::Exact};
  std::size_t n_permutations{0};
  std::uint64_t seed{0};
  std::size_t evaluations{0};     // distinct v evaluations during the run
};

// Throws BudgetExceeded when there are more than 12 blocks or a block with
// more than 12 members.
AttributionResult owen_exact(ValueFunction& v, const PartitionTree& tree);
// Upper bound on distinct evaluations of owen_exact: 2^m + m 2^(m-1) 2^b_max.
std::size_t owen_exact_budget(const PartitionTree& tree);

// Permutations of blocks, and of members within each block; marginal
// contributions averaged over n_perm draws.
AttributionResult owen_sampled(ValueFunction& v, const PartitionTree& tree, std::size_t n_perm,
                               std::uint64_t seed);

// Exact Shapley values by enumeration of all subsets; n <= 12.
std::vector<double> shapley_bruteforce(ValueFunction& v, std::size_t n);

enum class GroupBy { Global, Participant, Day };

struct RelevanceMap {
  std::string group;  // "global", participant id, or "day<k>"
  std::vector<std::string> electrodes;
  std::vector<double> relevance;  // mean |phi|, divided by the map maximum
  std::size_t trial_count{0};
  bool operator==(const RelevanceMap&) const = default;
};

// One map per group, ordered by group key (days ascending). A map whose
// maximum is zero stays all zeros. Throws EmptyGroup on empty input.
std::vector<RelevanceMap> aggregate_relevance(
    const std::vector<std::pair<TrialKey, AttributionResult>>& results,
    const std::vector<std::string>& electrodes, GroupBy group_by);

struct TopoPoint {
  std::string electrode;
  Vec2 pos;
  double relevance{0.0};
};

// Throws Consistency when the map names an electrode missing from the montage.
std::vector<TopoPoint> topo_points(const RelevanceMap& map, const Montage& montage);

// {group, trial_count, electrodes: [{electrode, x, y, relevance}]}
void write_relevance_json(const RelevanceMap& map, const std::vector<TopoPoint>& points,
                          const std::string& path);
// Electrodes without x/y take their standard 10-10 position.
RelevanceMap read_relevance_json(const std::string& path, std::vector<TopoPoint>* points = nullptr);
// Long form: group,electrode,relevance
void write_relevance_csv(const std::vector<RelevanceMap>& maps, const std::string& path);

// Head circle of radius 1 with a nose wedge, one filled circle per electrode on
// a white -> red ramp, and labels.
std::string topomap_svg(const std::vector<TopoPoint>& points, const std::string& title);
// Writes <out_base>.json and <out_base>.svg.
void render_topomap(const RelevanceMap& map, const Montage& montage, const std::string& out_base);

}  // namespace cogload
