#include "cogload/explain.hpp"

#include <algorithm>
#include <bit>
#include <cmath>
#include <map>

#include "cogload/error.hpp"
#include "cogload/rng.hpp"

namespace cogload {

namespace {

constexpr std::size_t kMaxBlocks = 12;
constexpr std::size_t kMaxBlockSize = 12;

double factorial(std::size_t k) {
  double f = 1.0;
  for (std::size_t i = 2; i <= k; ++i) f *= static_cast<double>(i);
  return f;
}

// weight[s] = s! (n - s - 1)! / n!
std::vector<double> shapley_weights(std::size_t n) {
  std::vector<double> w(n);
  for (std::size_t s = 0; s < n; ++s) w[s] = factorial(s) * factorial(n - s - 1) / factorial(n);
  return w;
}

Coalition bit(std::size_t i) { return Coalition{1} << i; }

}  // namespace

PartitionTree PartitionTree::from_montage(const Montage& montage) {
  PartitionTree t;
  t.n_leaves = montage.size();
  for (const auto& members : montage.regions()) {
    if (!members.empty()) t.blocks.push_back(members);
  }
  return t;
}

PartitionTree PartitionTree::singletons(std::size_t n) {
  PartitionTree t;
  t.n_leaves = n;
  for (std::size_t i = 0; i < n; ++i) t.blocks.push_back({i});
  return t;
}

PartitionTree PartitionTree::one_block(std::size_t n) {
  PartitionTree t;
  t.n_leaves = n;
  t.blocks.emplace_back();
  for (std::size_t i = 0; i < n; ++i) t.blocks.back().push_back(i);
  return t;
}

void PartitionTree::validate() const {
  if (n_leaves == 0 || n_leaves > 64) throw Error(Errc::InvalidArgument, "partition tree needs 1..64 leaves");
  std::vector<int> seen(n_leaves, 0);
  for (const auto& b : blocks) {
    if (b.empty()) throw Error(Errc::InvalidArgument, "partition tree has an empty block");
    for (std::size_t i : b) {
      if (i >= n_leaves) throw Error(Errc::InvalidArgument, "leaf index out of range");
      ++seen[i];
    }
  }
  for (std::size_t i = 0; i < n_leaves; ++i) {
    if (seen[i] != 1) throw Error(Errc::InvalidArgument, "leaf " + std::to_string(i) + " must appear exactly once");
  }
}

std::string_view to_string(Baseline b) { return b == Baseline::Zero ? "zero" : "channel-mean"; }

Baseline parse_baseline(std::string_view s) {
  if (s == "zero") return Baseline::Zero;
  if (s == "channel-mean" || s == "mean") return Baseline::ChannelMean;
  throw Error(Errc::InvalidConfig, "unknown baseline '" + std::string(s) + "'");
}

WindowTensor mask_apply(const WindowTensor& w, const MaskSpec& spec) {
  for (std::size_t c : spec.off_set) {
    if (c >= w.n_channels) {
      throw Error(Errc::BadChannelIndex, "channel " + std::to_string(c) + " out of range (" +
                                             std::to_string(w.n_channels) + " channels)");
    }
  }
  WindowTensor out = w;
  for (std::size_t c : spec.off_set) {
    for (std::size_t t = 0; t < kNumWindows; ++t) {
      auto x = out.window(t, c);
      float fill = 0.0f;
      if (spec.baseline == Baseline::ChannelMean) {
        double s = 0.0;
        for (float v : x) s += v;
        fill = static_cast<float>(s / static_cast<double>(x.size()));
      }
      std::fill(x.begin(), x.end(), fill);
    }
  }
  return out;
}

ValueFunction::ValueFunction(std::size_t n_players, Evaluator eval, std::size_t batch_size)
    : n_players_(n_players), eval_(std::move(eval)), batch_size_(std::max<std::size_t>(1, batch_size)) {
  if (n_players == 0 || n_players > 64) throw Error(Errc::InvalidArgument, "value function needs 1..64 players");
}

ValueFunction ValueFunction::from_scalar(std::size_t n_players, std::function<double(Coalition)> f) {
  return ValueFunction(n_players, [f = std::move(f)](std::span<const Coalition> s, std::span<double> out) {
    for (std::size_t i = 0; i < s.size(); ++i) out[i] = f(s[i]);
  }, 1);
}

Coalition ValueFunction::all() const { return n_players_ == 64 ? ~Coalition{0} : bit(n_players_) - 1; }

std::size_t ValueFunction::evaluations() const {
  std::lock_guard lock(mu_);
  return cache_.size();
}

double ValueFunction::operator()(Coalition s) {
  {
    std::lock_guard lock(mu_);
    if (auto it = cache_.find(s); it != cache_.end()) return it->second;
  }
  prefetch(std::span<const Coalition>(&s, 1));
  std::lock_guard lock(mu_);
  return cache_.at(s);
}

void ValueFunction::prefetch(std::span<const Coalition> coalitions) {
  std::vector<Coalition> todo;
  {
    std::lock_guard lock(mu_);
    for (Coalition s : coalitions) {
      if ((s & ~all()) != 0) throw Error(Errc::BadChannelIndex, "coalition names a player out of range");
      if (!cache_.contains(s)) todo.push_back(s);
    }
  }
  std::sort(todo.begin(), todo.end());
  todo.erase(std::unique(todo.begin(), todo.end()), todo.end());
  std::vector<double> values;
  for (std::size_t start = 0; start < todo.size(); start += batch_size_) {
    const std::size_t n = std::min(batch_size_, todo.size() - start);
    values.assign(n, 0.0);
    eval_(std::span<const Coalition>(todo.data() + start, n), values);
    std::lock_guard lock(mu_);
    for (std::size_t i = 0; i < n; ++i) cache_.emplace(todo[start + i], values[i]);
  }
}

std::size_t owen_exact_budget(const PartitionTree& tree) {
  std::size_t b_max = 0;
  for (const auto& b : tree.blocks) b_max = std::max(b_max, b.size());
  const std::size_t m = tree.blocks.size();
  return (std::size_t{1} << m) + m * (std::size_t{1} << (m - 1)) * (std::size_t{1} << b_max);
}

AttributionResult owen_exact(ValueFunction& v, const PartitionTree& tree) {
  tree.validate();
  if (tree.n_leaves != v.n_players()) throw Error(Errc::DimensionMismatch, "tree and value function disagree on player count");
  const std::size_t m = tree.blocks.size();
  if (m > kMaxBlocks) throw Error(Errc::BudgetExceeded, std::to_string(m) + " blocks (max 12)");
  for (const auto& b : tree.blocks) {
    if (b.size() > kMaxBlockSize) throw Error(Errc::BudgetExceeded, "block of " + std::to_string(b.size()) + " members (max 12)");
  }
  std::vector<Coalition> block_mask(m, 0);
  for (std::size_t k = 0; k < m; ++k)
    for (std::size_t i : tree.blocks[k]) block_mask[k] |= bit(i);

  auto members_mask = [&](std::size_t k, std::size_t t) {
    Coalition s = 0;
    for (std::size_t j = 0; j < tree.blocks[k].size(); ++j)
      if (t & (std::size_t{1} << j)) s |= bit(tree.blocks[k][j]);
    return s;
  };
  auto union_of = [&](std::size_t r) {
    Coalition q = 0;
    for (std::size_t k = 0; k < m; ++k)
      if (r & (std::size_t{1} << k)) q |= block_mask[k];
    return q;
  };

  const std::size_t before = v.evaluations();
  std::vector<Coalition> needed;
  for (std::size_t k = 0; k < m; ++k) {
    const std::size_t nt = std::size_t{1} << tree.blocks[k].size();
    for (std::size_t r = 0; r < (std::size_t{1} << m); ++r) {
      if (r & (std::size_t{1} << k)) continue;
      const Coalition q = union_of(r);
      for (std::size_t t = 0; t < nt; ++t) needed.push_back(q | members_mask(k, t));
    }
  }
  v.prefetch(needed);

  AttributionResult res;
  res.mode = AttributionMode::Exact;
  res.phi.assign(tree.n_leaves, 0.0);
  res.std_error.assign(tree.n_leaves, 0.0);
  const auto wm = shapley_weights(m);
  std::vector<double> val;
  for (std::size_t k = 0; k < m; ++k) {
    const auto& block = tree.blocks[k];
    const std::size_t b = block.size();
    const auto wb = shapley_weights(b);
    const std::size_t nt = std::size_t{1} << b;
    val.resize(nt);
    for (std::size_t r = 0; r < (std::size_t{1} << m); ++r) {
      if (r & (std::size_t{1} << k)) continue;
      const double w_r = wm[static_cast<std::size_t>(std::popcount(r))];
      const Coalition q = union_of(r);
      for (std::size_t t = 0; t < nt; ++t) val[t] = v(q | members_mask(k, t));
      for (std::size_t j = 0; j < b; ++j) {
        const std::size_t jb = std::size_t{1} << j;
        double acc = 0.0;
        for (std::size_t t = 0; t < nt; ++t) {
          if (t & jb) continue;
          acc += wb[static_cast<std::size_t>(std::popcount(t))] * (val[t | jb] - val[t]);
        }
        res.phi[block[j]] += w_r * acc;
      }
    }
  }
  res.base_value = v(0);
  res.full_value = v(v.all());
  res.evaluations = v.evaluations() - before;
  return res;
}

AttributionResult owen_sampled(ValueFunction& v, const PartitionTree& tree, std::size_t n_perm,
                               std::uint64_t seed) {
  tree.validate();
  if (tree.n_leaves != v.n_players()) throw Error(Errc::DimensionMismatch, "tree and value function disagree on player count");
  if (n_perm < 1) throw Error(Errc::InvalidArgument, "n_perm must be >= 1");
  const std::size_t n = tree.n_leaves;
  const std::size_t before = v.evaluations();
  Rng rng(seed);
  std::vector<double> sum(n, 0.0), sum_sq(n, 0.0);
  std::vector<std::size_t> block_order(tree.blocks.size());
  std::vector<std::vector<std::size_t>> members = tree.blocks;
  std::vector<std::size_t> order;
  std::vector<Coalition> prefix(n + 1);
  for (std::size_t p = 0; p < n_perm; ++p) {
    for (std::size_t k = 0; k < block_order.size(); ++k) block_order[k] = k;
    rng.shuffle(std::span<std::size_t>(block_order));
    order.clear();
    for (std::size_t k : block_order) {
      auto& mem = members[k];
      std::copy(tree.blocks[k].begin(), tree.blocks[k].end(), mem.begin());
      rng.shuffle(std::span<std::size_t>(mem));
      order.insert(order.end(), mem.begin(), mem.end());
    }
    prefix[0] = 0;
    for (std::size_t j = 0; j < n; ++j) prefix[j + 1] = prefix[j] | bit(order[j]);
    v.prefetch(prefix);
    double prev = v(prefix[0]);
    for (std::size_t j = 0; j < n; ++j) {
      const double cur = v(prefix[j + 1]);
      const double d = cur - prev;
      sum[order[j]] += d;
      sum_sq[order[j]] += d * d;
      prev = cur;
    }
  }
  AttributionResult res;
  res.mode = AttributionMode::Sampled;
  res.n_permutations = n_perm;
  res.seed = seed;
  res.phi.resize(n);
  res.std_error.assign(n, 0.0);
  const double np = static_cast<double>(n_perm);
  for (std::size_t i = 0; i < n; ++i) {
    res.phi[i] = sum[i] / np;
    if (n_perm > 1) {
      const double var = std::max(0.0, (sum_sq[i] - np * res.phi[i] * res.phi[i]) / (np - 1.0));
      res.std_error[i] = std::sqrt(var / np);
    }
  }
  res.base_value = v(0);
  res.full_value = v(v.all());
  res.evaluations = v.evaluations() - before;
  return res;
}

std::vector<double> shapley_bruteforce(ValueFunction& v, std::size_t n) {
  if (n > 12) throw Error(Errc::BudgetExceeded, "brute-force Shapley limited to 12 players");
  if (n != v.n_players()) throw Error(Errc::DimensionMismatch, "player count mismatch");
  const std::size_t total = std::size_t{1} << n;
  std::vector<Coalition> all(total);
  for (std::size_t s = 0; s < total; ++s) all[s] = s;
  v.prefetch(all);
  const auto w = shapley_weights(n);
  std::vector<double> phi(n, 0.0);
  for (std::size_t i = 0; i < n; ++i) {
    for (std::size_t s = 0; s < total; ++s) {
      if (s & bit(i)) continue;
      phi[i] += w[static_cast<std::size_t>(std::popcount(s))] * (v(s | bit(i)) - v(s));
    }
  }
  return phi;
}

std::vector<RelevanceMap> aggregate_relevance(
    const std::vector<std::pair<TrialKey, AttributionResult>>& results,
    const std::vector<std::string>& electrodes, GroupBy group_by) {
  if (results.empty()) throw Error(Errc::EmptyGroup, "no attribution results to aggregate");
  struct Acc {
    std::vector<double> sum;
    std::size_t count{0};
  };
  // keyed so that days sort numerically
  std::map<std::pair<int, std::string>, Acc> groups;
  for (const auto& [key, res] : results) {
    if (res.phi.size() != electrodes.size()) {
      throw Error(Errc::DimensionMismatch, "attribution for " + key.str() + " has " +
                                               std::to_string(res.phi.size()) + " values, expected " +
                                               std::to_string(electrodes.size()));
    }
    std::pair<int, std::string> g{0, "global"};
    if (group_by == GroupBy::Participant) g = {0, key.participant};
    if (group_by == GroupBy::Day) g = {key.day, "day" + std::to_string(key.day)};
    auto& acc = groups[g];
    if (acc.sum.empty()) acc.sum.assign(electrodes.size(), 0.0);
    for (std::size_t e = 0; e < electrodes.size(); ++e) acc.sum[e] += std::abs(res.phi[e]);
    ++acc.count;
  }
  std::vector<RelevanceMap> maps;
  for (const auto& [g, acc] : groups) {
    RelevanceMap m;
    m.group = g.second;
    m.electrodes = electrodes;
    m.trial_count = acc.count;
    m.relevance.resize(electrodes.size());
    double mx = 0.0;
    for (std::size_t e = 0; e < electrodes.size(); ++e) {
      m.relevance[e] = acc.sum[e] / static_cast<double>(acc.count);
      mx = std::max(mx, m.relevance[e]);
    }
    if (mx > 0.0)
      for (double& r : m.relevance) r /= mx;
    maps.push_back(std::move(m));
  }
  return maps;
}

}  // namespace cogload
