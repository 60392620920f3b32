#include <doctest.h>

#include <algorithm>
#include <bit>
#include <cmath>
#include <random>
#include <set>
#include <sstream>

#include <boost/property_tree/ptree.hpp>
#include <boost/property_tree/xml_parser.hpp>

#include "cogload/error.hpp"
#include "cogload/explain.hpp"
#include "cogload/montage.hpp"
#include "cogload/pipeline.hpp"
#include "fixtures.hpp"
#include "oracles.hpp"
#include "testutil.hpp"

using namespace cogload;
using namespace oracles;
using namespace fixtures;

namespace {

PartitionTree make_tree(std::size_t n, std::vector<std::vector<std::size_t>> blocks) {
  PartitionTree t;
  t.n_leaves = n;
  t.blocks = std::move(blocks);
  t.validate();
  return t;
}

}  // namespace

TEST_CASE("mask_apply: identity, all-zero, locality, channel mean") {
  const auto w = random_windows(5, 1);
  CHECK(mask_apply(w, {}) == w);

  const auto z = mask_apply(w, {{0, 1, 2, 3, 4}, Baseline::Zero});
  CHECK(std::all_of(z.data.begin(), z.data.end(), [](float x) { return x == 0.0f; }));

  const auto m3 = mask_apply(w, {{3}, Baseline::Zero});
  for (std::size_t t = 0; t < kNumWindows; ++t) {
    for (std::size_t c = 0; c < 5; ++c) {
      const auto a = w.window(t, c);
      const auto b = m3.window(t, c);
      if (c == 3) {
        CHECK(std::all_of(b.begin(), b.end(), [](float x) { return x == 0.0f; }));
      } else {
        CHECK(std::equal(a.begin(), a.end(), b.begin()));
      }
    }
  }

  const auto cm = mask_apply(w, {{2}, Baseline::ChannelMean});
  for (std::size_t t = 0; t < kNumWindows; ++t) {
    const auto a = w.window(t, 2);
    double mean = 0.0;
    for (float x : a) mean += x;
    mean /= static_cast<double>(a.size());
    for (float x : cm.window(t, 2)) CHECK(x == doctest::Approx(mean).epsilon(1e-5));
  }

  CHECK(testutil::error_code_of([&] { mask_apply(w, {{5}, Baseline::Zero}); }) == Errc::BadChannelIndex);
}

TEST_CASE("value function memoizes and is additive for a sum-of-means stub") {
  const auto w = random_windows(4, 2);
  std::size_t calls = 0;
  auto stub = [&](Coalition on) {
    ++calls;
    const auto x = mask_apply(w, {[&] {
                                   std::vector<std::size_t> off;
                                   for (std::size_t c = 0; c < 4; ++c)
                                     if (!(on >> c & 1)) off.push_back(c);
                                   return off;
                                 }(),
                                 Baseline::Zero});
    double s = 0.0;
    for (float v : x.data) s += v;
    return s / static_cast<double>(x.data.size()) + 1.0;
  };
  auto v = ValueFunction::from_scalar(4, stub);
  const double a = v(0b0011);
  CHECK(v.evaluations() == 1);
  CHECK(v(0b0011) == a);
  CHECK(v.evaluations() == 1);
  CHECK(calls == 1);

  const double u = v(0b0011 | 0b0100), e = v(0), b = v(0b0100);
  CHECK(u == doctest::Approx(a + b - e).epsilon(1e-12));
  CHECK(v.all() == 0b1111);
}

TEST_CASE("owen_exact matches direct enumeration of the two-level formula") {
  const std::size_t n = 7;
  const auto table = random_game(n, 5);
  auto f = [&](Coalition s) { return table[s]; };
  for (const auto& blocks : std::vector<std::vector<std::vector<std::size_t>>>{
           {{0, 1, 2}, {3, 4}, {5, 6}}, {{6}, {0, 2, 4, 5}, {1, 3}}, {{0, 1, 2, 3, 4, 5, 6}}}) {
    const auto tree = make_tree(n, blocks);
    auto v = ValueFunction::from_scalar(n, f);
    const auto r = owen_exact(v, tree);
    const auto o = owen_oracle(f, tree);
    for (std::size_t i = 0; i < n; ++i) CHECK(r.phi[i] == doctest::Approx(o[i]).epsilon(1e-12));
    CHECK(r.base_value == table[0]);
    CHECK(r.full_value == table[(1u << n) - 1]);
    CHECK(r.mode == AttributionMode::Exact);
  }
}

TEST_CASE("worked examples") {
  SUBCASE("two players, one block") {
    const double tab[4] = {0.0, 1.0, 2.0, 4.0};
    auto v = ValueFunction::from_scalar(2, [&](Coalition s) { return tab[s]; });
    const auto r = owen_exact(v, PartitionTree::one_block(2));
    CHECK(r.phi[0] == doctest::Approx(1.5).epsilon(1e-15));
    CHECK(r.phi[1] == doctest::Approx(2.5).epsilon(1e-15));
    const auto s = shapley_bruteforce(v, 2);
    CHECK(s[0] == doctest::Approx(1.5));
    CHECK(s[1] == doctest::Approx(2.5));
  }
  SUBCASE("majority game") {
    auto v = ValueFunction::from_scalar(3, [](Coalition s) { return std::popcount(s) >= 2 ? 1.0 : 0.0; });
    for (double p : shapley_bruteforce(v, 3)) CHECK(p == doctest::Approx(1.0 / 3.0).epsilon(1e-14));
  }
  SUBCASE("single player") {
    auto v = ValueFunction::from_scalar(1, [](Coalition s) { return s ? 2.75 : -0.5; });
    const auto s = shapley_bruteforce(v, 1);
    REQUIRE(s.size() == 1);
    CHECK(s[0] == doctest::Approx(3.25).epsilon(1e-15));
  }
  SUBCASE("additive game gives its coefficients") {
    const std::vector<double> c{0.5, -1.25, 3.0, 0.0, 2.0, -0.75};
    auto f = [&](Coalition s) {
      double t = 0.0;
      for (std::size_t i = 0; i < c.size(); ++i)
        if (s >> i & 1) t += c[i];
      return t;
    };
    auto v = ValueFunction::from_scalar(6, f);
    const auto tree = make_tree(6, {{0, 3}, {1, 2, 5}, {4}});
    const auto r = owen_exact(v, tree);
    for (std::size_t i = 0; i < 6; ++i) CHECK(r.phi[i] == doctest::Approx(c[i]).epsilon(1e-14));
  }
}

TEST_CASE("efficiency, dummy and symmetry on random games") {
  for (std::uint64_t seed = 1; seed <= 5; ++seed) {
    const std::size_t n = 8;
    auto table = random_game(n, seed);
    // player 7 is a dummy; players 0 and 1 are interchangeable
    for (Coalition s = 0; s < table.size(); ++s) {
      if (s >> 7 & 1) table[s] = table[s & ~Coalition{0x80}];
    }
    for (Coalition s = 0; s < table.size(); ++s) {
      const Coalition sw = (s & ~Coalition{3}) | ((s & 1) << 1) | ((s >> 1) & 1);
      if (sw > s) table[sw] = table[s];
    }
    auto v = ValueFunction::from_scalar(n, [&](Coalition s) { return table[s]; });
    const auto tree = make_tree(n, {{0, 1, 2}, {3, 4, 7}, {5, 6}});
    const auto r = owen_exact(v, tree);
    double sum = 0.0;
    for (double p : r.phi) sum += p;
    CHECK(std::abs(sum - (r.full_value - r.base_value)) <= 1e-6 * std::max(1.0, std::abs(r.full_value)));
    CHECK(r.phi[7] == 0.0);
    CHECK(std::abs(r.phi[0] - r.phi[1]) <= 1e-9);
    for (double p : r.phi) CHECK(std::isfinite(p));
  }
}

TEST_CASE("Shapley limit: one block and singleton blocks") {
  for (std::size_t n = 1; n <= 8; ++n) {
    const auto table = random_game(n, 40 + n);
    auto f = [&](Coalition s) { return table[s]; };
    const auto oracle = shapley_oracle(f, n);
    auto v = ValueFunction::from_scalar(n, f);
    const auto a = owen_exact(v, PartitionTree::one_block(n));
    const auto b = owen_exact(v, PartitionTree::singletons(n));
    const auto c = shapley_bruteforce(v, n);
    for (std::size_t i = 0; i < n; ++i) {
      CHECK(std::abs(a.phi[i] - oracle[i]) <= 1e-9);
      CHECK(std::abs(b.phi[i] - oracle[i]) <= 1e-9);
      CHECK(std::abs(c[i] - oracle[i]) <= 1e-9);
    }
  }
}

TEST_CASE("evaluation count stays within the budget bound") {
  const std::vector<std::vector<std::vector<std::size_t>>> shapes{
      {{0, 1, 2}, {3, 4}, {5, 6}, {7, 8, 9}},
      {{0}, {1}, {2}, {3}, {4}, {5}, {6}, {7}, {8}},
      {{0, 1, 2, 3, 4, 5, 6, 7, 8, 9}},
  };
  for (const auto& blocks : shapes) {
    std::size_t n = 0;
    for (const auto& b : blocks) n += b.size();
    const auto tree = make_tree(n, blocks);
    const auto table = random_game(n, 77);
    auto v = ValueFunction::from_scalar(n, [&](Coalition s) { return table[s]; });
    const auto r = owen_exact(v, tree);
    std::size_t m = blocks.size(), bmax = 0;
    for (const auto& b : blocks) bmax = std::max(bmax, b.size());
    const std::size_t bound = (std::size_t{1} << m) + m * (std::size_t{1} << (m - 1)) * (std::size_t{1} << bmax);
    CHECK(owen_exact_budget(tree) == bound);
    CHECK(v.evaluations() <= bound);
    CHECK(r.evaluations == v.evaluations());
  }
}

TEST_CASE("budget errors") {
  auto v13 = ValueFunction::from_scalar(13, [](Coalition s) { return static_cast<double>(std::popcount(s)); });
  CHECK(testutil::error_code_of([&] { owen_exact(v13, PartitionTree::singletons(13)); }) == Errc::BudgetExceeded);
  CHECK(testutil::error_code_of([&] { owen_exact(v13, PartitionTree::one_block(13)); }) == Errc::BudgetExceeded);
  CHECK(testutil::error_code_of([&] { shapley_bruteforce(v13, 13); }) == Errc::BudgetExceeded);
  CHECK(v13.evaluations() == 0);

  PartitionTree bad;
  bad.n_leaves = 3;
  bad.blocks = {{0, 1}, {1, 2}};
  CHECK(testutil::error_code_of([&] { bad.validate(); }) == Errc::InvalidArgument);
  bad.blocks = {{0}, {}, {1, 2}};
  CHECK(testutil::error_code_of([&] { bad.validate(); }) == Errc::InvalidArgument);
}

TEST_CASE("owen_sampled") {
  const std::size_t n = 6;
  const auto tree = make_tree(n, {{0, 1}, {2, 3, 4}, {5}});
  const auto table = random_game(n, 8);
  auto f = [&](Coalition s) { return table[s]; };

  SUBCASE("converges to exact within three standard errors") {
    auto v = ValueFunction::from_scalar(n, f);
    const auto ex = owen_exact(v, tree);
    const auto sm = owen_sampled(v, tree, 10000, 21);
    CHECK(sm.mode == AttributionMode::Sampled);
    CHECK(sm.n_permutations == 10000);
    CHECK(sm.seed == 21);
    for (std::size_t i = 0; i < n; ++i) {
      CHECK(sm.std_error[i] > 0.0);
      CHECK(std::abs(sm.phi[i] - ex.phi[i]) <= 3.0 * sm.std_error[i]);
    }
  }
  SUBCASE("additive game is exact after one permutation") {
    const std::vector<double> c{1.0, -2.0, 0.25, 4.0, -0.5, 3.0};
    auto v = ValueFunction::from_scalar(n, [&](Coalition s) {
      double t = 0.0;
      for (std::size_t i = 0; i < n; ++i)
        if (s >> i & 1) t += c[i];
      return t;
    });
    const auto sm = owen_sampled(v, tree, 1, 3);
    for (std::size_t i = 0; i < n; ++i) CHECK(sm.phi[i] == doctest::Approx(c[i]).epsilon(1e-14));
  }
  SUBCASE("deterministic given the seed") {
    auto v1 = ValueFunction::from_scalar(n, f);
    auto v2 = ValueFunction::from_scalar(n, f);
    const auto a = owen_sampled(v1, tree, 50, 99);
    const auto b = owen_sampled(v2, tree, 50, 99);
    CHECK(a.phi == b.phi);
    CHECK(a.std_error == b.std_error);
    const auto c = owen_sampled(v2, tree, 50, 100);
    CHECK(c.phi != a.phi);
  }
}

TEST_CASE("efficiency holds for trained Linear, DNN and SVR heads") {
  const auto mont = builtin_montage(9);
  const auto tree = PartitionTree::from_montage(mont);
  CHECK(tree.blocks.size() == 9);
  const auto w = random_windows(9, 555);
  for (auto kind : {EstimatorKind::Linear, EstimatorKind::Dnn, EstimatorKind::Svm}) {
    CAPTURE(to_string(kind));
    const auto p = small_pipeline(kind, mont);
    auto v = make_value_function(p, w, Baseline::Zero);
    const auto r = owen_exact(v, tree);
    double sum = 0.0;
    for (double x : r.phi) sum += x;
    CHECK(std::abs(sum - (r.full_value - r.base_value)) <= 1e-6 * std::max(1.0, std::abs(r.full_value)));
    CHECK(r.full_value == doctest::Approx(p.predict(w)).epsilon(1e-9));
    CHECK(r.base_value == doctest::Approx(masked_prediction(p, w, 0, Baseline::Zero)).epsilon(1e-9));
  }
}

TEST_CASE("value function agrees with re-running the pipeline on masked input") {
  const auto mont = builtin_montage(12);
  const auto w = random_windows(12, 556);
  for (auto [kind, temporal] : {std::pair{EstimatorKind::Linear, TemporalMode::Global},
                                std::pair{EstimatorKind::Linear, TemporalMode::MeanStd},
                                std::pair{EstimatorKind::Dnn, TemporalMode::Mean}}) {
    const auto p = small_pipeline(kind, mont, temporal);
    for (auto base : {Baseline::Zero, Baseline::ChannelMean}) {
      auto v = make_value_function(p, w, base);
      std::mt19937_64 rng(4);
      for (int k = 0; k < 6; ++k) {
        const Coalition s = rng() & 0xfff;
        const double lit = masked_prediction(p, w, s, base);
        CHECK(v(s) == doctest::Approx(lit).epsilon(1e-6).scale(1.0));
      }
      CHECK(v(v.all()) == doctest::Approx(p.predict(w)).epsilon(1e-9));
    }
  }
}

TEST_CASE("precomputed provider cannot be explained") {
  testutil::TempDir dir("explain_pre");
  const auto mont = builtin_montage(9);
  auto p = small_pipeline(EstimatorKind::Linear, mont);
  const auto w = random_windows(9, 1);
  EmbeddingTable table;
  table[{"P1", 1, 0}] = toy_spectral_provider(3)->embed_trial(w);
  write_emb1(table, dir / "t.emb");
  p.extractor = std::make_shared<FeatureExtractor>(precomputed_provider(dir / "t.emb"), mont, p.config.spatial,
                                                   p.config.temporal);
  const auto code = testutil::error_code_of([&] { make_value_function(p, w, Baseline::Zero); });
  CHECK(code == Errc::InvalidConfig);
}

TEST_CASE("aggregate_relevance") {
  const std::vector<std::string> el{"Fz", "Cz", "Pz"};
  auto res = [](std::vector<double> phi) {
    AttributionResult r;
    r.phi = std::move(phi);
    return r;
  };
  const std::vector<double> phi{0.5, -2.0, 1.0};

  const auto one = aggregate_relevance({{{"P1", 1, 0}, res(phi)}}, el, GroupBy::Global);
  REQUIRE(one.size() == 1);
  CHECK(one[0].group == "global");
  CHECK(one[0].trial_count == 1);
  CHECK(one[0].relevance == std::vector<double>{0.25, 1.0, 0.5});

  std::vector<double> neg(phi);
  for (auto& x : neg) x = -x;
  const auto two = aggregate_relevance({{{"P1", 1, 0}, res(phi)}, {{"P1", 1, 1}, res(neg)}}, el, GroupBy::Global);
  CHECK(two[0].relevance == one[0].relevance);
  CHECK(two[0].trial_count == 2);

  const std::vector<std::pair<TrialKey, AttributionResult>> mixed{
      {{"P2", 10, 0}, res({0.0, 1.0, 0.0})},
      {{"P1", 2, 0}, res({1.0, 0.0, 0.0})},
      {{"P1", 10, 1}, res({0.0, 0.0, 3.0})},
      {{"P2", 2, 1}, res({1.0, 1.0, 0.0})},
  };
  const auto days = aggregate_relevance(mixed, el, GroupBy::Day);
  REQUIRE(days.size() == 2);
  CHECK(days[0].group == "day2");
  CHECK(days[1].group == "day10");
  CHECK(days[0].relevance == std::vector<double>{1.0, 0.5, 0.0});
  CHECK(days[1].relevance == std::vector<double>{0.0, 1.0 / 3.0, 1.0});

  const auto parts = aggregate_relevance(mixed, el, GroupBy::Participant);
  REQUIRE(parts.size() == 2);
  CHECK(parts[0].group == "P1");
  CHECK(parts[1].group == "P2");
  CHECK(parts[1].relevance == std::vector<double>{0.5, 1.0, 0.0});
  for (const auto& m : parts) {
    CHECK(*std::max_element(m.relevance.begin(), m.relevance.end()) == 1.0);
    for (double r : m.relevance) CHECK((r >= 0.0 && r <= 1.0));
  }

  const auto zero = aggregate_relevance({{{"P1", 1, 0}, res({0.0, 0.0, 0.0})}}, el, GroupBy::Global);
  CHECK(zero[0].relevance == std::vector<double>{0.0, 0.0, 0.0});

  CHECK(testutil::error_code_of([&] { aggregate_relevance({}, el, GroupBy::Global); }) == Errc::EmptyGroup);
}

namespace {

namespace pt = boost::property_tree;

std::vector<pt::ptree> circles(const std::string& svg) {
  std::istringstream in(svg);
  pt::ptree doc;
  pt::read_xml(in, doc);
  std::vector<pt::ptree> out;
  for (const auto& [tag, node] : doc.get_child("svg")) {
    if (tag == "circle") out.push_back(node);
  }
  return out;
}

}  // namespace

TEST_CASE("topomap JSON round trip and SVG structure") {
  testutil::TempDir dir("topo");
  const auto mont = builtin_montage(12);
  RelevanceMap map;
  map.group = "P7";
  map.trial_count = 4;
  for (std::size_t i = 0; i < mont.size(); ++i) {
    map.electrodes.push_back(mont[i].name);
    map.relevance.push_back(static_cast<double>(i) / static_cast<double>(mont.size() - 1));
  }
  render_topomap(map, mont, dir / "map");
  std::vector<TopoPoint> pts;
  const auto back = read_relevance_json(dir / "map.json", &pts);
  CHECK(back == map);
  REQUIRE(pts.size() == mont.size());
  for (std::size_t i = 0; i < pts.size(); ++i) {
    CHECK(pts[i].pos.x == doctest::Approx(mont[i].pos.x));
    CHECK(pts[i].pos.y == doctest::Approx(mont[i].pos.y));
  }

  const auto cs = circles(testutil::read_text(dir / "map.svg"));
  CHECK(cs.size() == mont.size() + 1);
  std::size_t heads = 0, electrodes = 0;
  std::set<std::string> names;
  for (const auto& c : cs) {
    const auto cls = c.get<std::string>("<xmlattr>.class", "");
    if (cls == "head") {
      ++heads;
      CHECK(c.get<double>("<xmlattr>.r") == 100.0);
    } else if (cls == "electrode") {
      ++electrodes;
      names.insert(c.get<std::string>("<xmlattr>.data-name"));
    }
  }
  CHECK(heads == 1);
  CHECK(electrodes == mont.size());
  CHECK(names.size() == mont.size());
}

TEST_CASE("equal relevance gives identical mid-ramp fills") {
  const auto mont = builtin_montage(9);
  RelevanceMap map;
  map.group = "global";
  map.trial_count = 1;
  for (const auto& e : mont.electrodes()) {
    map.electrodes.push_back(e.name);
    map.relevance.push_back(0.5);
  }
  std::set<std::string> fills;
  for (const auto& c : circles(topomap_svg(topo_points(map, mont), "t"))) {
    if (c.get<std::string>("<xmlattr>.class", "") == "electrode") fills.insert(c.get<std::string>("<xmlattr>.fill"));
  }
  REQUIRE(fills.size() == 1);
  // white -> red: green and blue halfway down
  const std::string f = *fills.begin();
  REQUIRE(f.size() == 7);
  CHECK(f.substr(0, 3) == "#ff");
  const int g = std::stoi(f.substr(3, 2), nullptr, 16), b = std::stoi(f.substr(5, 2), nullptr, 16);
  CHECK(g == b);
  CHECK(std::abs(g - 128) <= 1);

  RelevanceMap bad = map;
  bad.electrodes[0] = "Iz";
  CHECK(testutil::error_code_of([&] { topo_points(bad, mont); }) == Errc::Consistency);
}
