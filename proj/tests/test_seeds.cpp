#include <gtest/gtest.h>

#include <random>

#include "ceb/seeds.hpp"
#include "oracles/component_oracle.hpp"
#include "support.hpp"

using namespace ceb;

namespace {

// Two 3x3 plateaus of 0.9 separated by a 0.7 saddle, on a 0.6 shelf.
prob_map two_peaks() {
  const std::vector<float> row{0.6f, 0.9f, 0.8f, 0.7f, 0.8f, 0.9f, 0.6f};
  return map_of({row, row, row});
}

prob_map random_map(std::mt19937_64& rng, int w, int h, int levels) {
  std::vector<float> v(static_cast<std::size_t>(w * h));
  for (auto& x : v) x = static_cast<float>(static_cast<int>(unit(rng) * levels)) / static_cast<float>(levels - 1);
  return {w, h, v};
}

}  // namespace

TEST(BuildThresholdList, DropsDuplicates) {
  const auto t = build_threshold_list(map_of({{0.6f, 0.6f, 0.8f}}), 0.01);
  EXPECT_EQ(t.values, (std::vector<float>{0.6f, 0.8f}));
}

TEST(BuildThresholdList, MergesValuesWithinOneStep) {
  const auto t = build_threshold_list(map_of({{0.601f, 0.604f}}), 0.01);
  ASSERT_EQ(t.values.size(), 1u);
  EXPECT_EQ(t.values[0], 0.601f);
}

TEST(BuildThresholdList, NothingAboveHalfGivesEmptyList) {
  EXPECT_TRUE(build_threshold_list(map_of({{0.5f, 0.2f, 0.0f}})).empty());
}

TEST(BuildThresholdList, StepOutsideRangeRejected) {
  const auto p = map_of({{0.7f}});
  EXPECT_THROW(build_threshold_list(p, 0.0), precondition_error);
  EXPECT_THROW(build_threshold_list(p, 0.2), precondition_error);
  EXPECT_NO_THROW(build_threshold_list(p, 0.1));
}

TEST(BuildThresholdList, InvariantsOnRandomMaps) {
  std::mt19937_64 rng(11);
  for (int t = 0; t < 50; ++t) {
    const auto p = random_map(rng, 12, 9, 200);
    const double step = 0.005 + 0.05 * unit(rng);
    const auto v = build_threshold_list(p, step).values;
    for (std::size_t i = 0; i < v.size(); ++i) {
      EXPECT_GT(v[i], 0.5f);
      if (i > 0) {
        EXPECT_GE(static_cast<double>(v[i]) - static_cast<double>(v[i - 1]), step);
      }
    }
    // every pixel value above 0.5 lies within one step of some threshold at or below it
    for (float x : p.values()) {
      if (!(x > 0.5f)) continue;
      auto it = std::upper_bound(v.begin(), v.end(), x);
      ASSERT_NE(it, v.begin());
      EXPECT_LT(static_cast<double>(x) - static_cast<double>(*std::prev(it)), step);
    }
  }
}

TEST(BuildForest, EmptyThresholdListRejected) {
  EXPECT_THROW(build_forest(map_of({{0.1f}}), threshold_list{}), precondition_error);
}

TEST(BuildForest, LevelsMatchComponentOracle) {
  std::mt19937_64 rng(5);
  for (int t = 0; t < 40; ++t) {
    const auto p = random_map(rng, 10, 8, 12);
    const auto v = build_threshold_list(p, 0.01);
    if (v.empty()) continue;
    const bool eight = t % 2 == 0;
    const auto f = build_forest(p, v, eight ? connectivity::eight : connectivity::four);
    for (std::size_t h = 0; h < v.values.size(); ++h) {
      std::vector<std::vector<int>> got;
      for (const auto& n : f.nodes)
        if (n.level == h) got.emplace_back(n.pixels.begin(), n.pixels.end());
      EXPECT_EQ(got, oracle::components_at(p, v.values[h], eight)) << "level " << h;
    }
  }
}

TEST(BuildForest, ChildrenNestInParents) {
  std::mt19937_64 rng(9);
  for (int t = 0; t < 30; ++t) {
    const auto p = random_map(rng, 11, 11, 20);
    const auto v = build_threshold_list(p, 0.02);
    if (v.empty()) continue;
    const auto f = build_forest(p, v);
    for (std::size_t i = 0; i < f.nodes.size(); ++i) {
      const auto& n = f.nodes[i];
      if (!n.parent) {
        EXPECT_EQ(n.level, 0u);
        continue;
      }
      const auto& par = f.nodes[*n.parent];
      EXPECT_EQ(par.level + 1, n.level);
      EXPECT_TRUE(std::includes(par.pixels.begin(), par.pixels.end(), n.pixels.begin(), n.pixels.end()));
      EXPECT_NE(std::find(par.children.begin(), par.children.end(), i), par.children.end());
    }
  }
}

TEST(BuildForest, SeparatedBlobsAreSeparateRoots) {
  const auto p = map_of({{0.9f, 0.9f, 0.1f, 0.1f, 0.8f, 0.8f}});
  const auto f = build_forest(p, build_threshold_list(p));
  const auto roots = f.roots();
  ASSERT_EQ(roots.size(), 2u);
  EXPECT_EQ(f.nodes[roots[0]].pixels, (pixel_list{0, 1}));
  EXPECT_EQ(f.nodes[roots[1]].pixels, (pixel_list{4, 5}));
}

TEST(BuildForest, TwoPeaksSplitFromOneRoot) {
  const auto p = two_peaks();
  const auto f = build_forest(p, build_threshold_list(p, 0.01));
  ASSERT_EQ(f.roots().size(), 1u);
  const auto leaves = f.leaves();
  ASSERT_EQ(leaves.size(), 2u);
  EXPECT_EQ(f.nodes[leaves[0]].pixels, (pixel_list{1, 8, 15}));
  EXPECT_EQ(f.nodes[leaves[1]].pixels, (pixel_list{5, 12, 19}));
}

TEST(BuildForest, UniformBlobIsASingleChain) {
  const auto p = map_of({{0.1f, 0.7f, 0.7f}, {0.1f, 0.7f, 0.7f}});
  const auto f = build_forest(p, build_threshold_list(p));
  ASSERT_EQ(f.nodes.size(), 1u);
  EXPECT_EQ(f.roots(), f.leaves());
}

TEST(ExtractSeeds, SmallLeavesDropped) {
  // blobs of area 5, 9 and 1
  std::vector<float> v(15 * 5, 0.1f);
  auto put = [&](int x, int y) { v[static_cast<std::size_t>(y * 15 + x)] = 0.9f; };
  for (int x = 0; x < 5; ++x) put(x, 0);
  for (int y = 2; y < 5; ++y)
    for (int x = 5; x < 8; ++x) put(x, y);
  put(12, 2);
  const prob_map p(15, 5, v);
  const auto s = extract_seeds(build_forest(p, build_threshold_list(p)), 2);
  ASSERT_EQ(s.size(), 2u);
  EXPECT_EQ(s.seeds[0].size(), 5u);
  EXPECT_EQ(s.seeds[1].size(), 9u);
}

TEST(ExtractSeeds, ChainGivesHighestComponent) {
  const auto p = map_of({{0.6f, 0.7f, 0.8f, 0.8f, 0.8f, 0.7f}});
  const auto s = extract_seeds(build_forest(p, build_threshold_list(p, 0.01)), 3);
  ASSERT_EQ(s.size(), 1u);
  EXPECT_EQ(s.seeds[0], (pixel_list{2, 3, 4}));
}

TEST(ExtractSeeds, PrunedLeafFallsBackToLargeEnoughAncestor) {
  // a single bright pixel on top of a plateau: the plateau becomes the seed
  const auto p = map_of({{0.7f, 0.7f, 0.9f, 0.7f}});
  const auto s = extract_seeds(build_forest(p, build_threshold_list(p, 0.01)), 3);
  ASSERT_EQ(s.size(), 1u);
  EXPECT_EQ(s.seeds[0], (pixel_list{0, 1, 2, 3}));
}

TEST(ExtractSeeds, TwoPeaksGiveTwoSeedsInScanOrder) {
  const auto p = two_peaks();
  const auto s = extract_seeds(build_forest(p, build_threshold_list(p, 0.01)));
  ASSERT_EQ(s.size(), 2u);
  EXPECT_EQ(s.seeds[0], (pixel_list{1, 8, 15}));
  EXPECT_EQ(s.seeds[1], (pixel_list{5, 12, 19}));
}

TEST(ExtractSeeds, AllLeavesTooSmallGivesNoSeeds) {
  const auto p = map_of({{0.9f, 0.1f, 0.9f}});
  EXPECT_TRUE(extract_seeds(build_forest(p, build_threshold_list(p)), 2).empty());
}

TEST(ExtractSeeds, DisjointAboveHalfAndMonotoneInMinArea) {
  std::mt19937_64 rng(21);
  for (int t = 0; t < 40; ++t) {
    const auto p = random_map(rng, 14, 12, 30);
    const auto v = build_threshold_list(p, 0.02);
    if (v.empty()) continue;
    const auto f = build_forest(p, v);
    std::size_t prev = std::numeric_limits<std::size_t>::max();
    for (std::size_t a = 1; a <= 8; ++a) {
      const auto s = extract_seeds(f, a);
      EXPECT_LE(s.size(), prev) << "min_area " << a;
      prev = s.size();
      std::vector<int> owner(p.shape().size(), 0);
      for (std::size_t k = 0; k < s.size(); ++k) {
        EXPECT_GE(s.seeds[k].size(), a);
        if (k > 0) {
          EXPECT_LT(s.seeds[k - 1].front(), s.seeds[k].front());
        }
        for (pixel_index px : s.seeds[k]) {
          EXPECT_GT(p[px], 0.5f);
          EXPECT_EQ(owner[static_cast<std::size_t>(px)]++, 0);
        }
      }
    }
  }
}

TEST(SeedsToLabelmap, PaintsIds) {
  const auto p = two_peaks();
  const auto s = extract_seeds(build_forest(p, build_threshold_list(p, 0.01)));
  const auto m = seeds_to_labelmap(p.shape(), s);
  EXPECT_EQ(m.at(1, 0), 1u);
  EXPECT_EQ(m.at(5, 2), 2u);
  EXPECT_EQ(m.at(3, 1), 0u);
}
