#include <gtest/gtest.h>

#include <random>

#include "cases.hpp"
#include "ceb/temporal.hpp"
#include "support.hpp"

using namespace ceb;

namespace {

boundary_scores uniform_scores(const region_graph& g, double v) {
  boundary_scores s;
  for (const auto& [k, n] : g.edges()) s[k] = v;
  return s;
}

// Scores drawn from a hash of the boundary so any frame gets stable values in [0,1].
boundary_scores hashed_scores(const region_graph& g, std::uint64_t salt) {
  boundary_scores s;
  for (const auto& [k, n] : g.edges()) {
    std::mt19937_64 rng(salt * 1000003 + k.lo * 7919 + k.hi);
    s[k] = static_cast<double>(rng() % 1001) / 1000.0;
  }
  return s;
}

}  // namespace

TEST(ClassifyScore, ThresholdsAreStrict) {
  const temporal_config c;
  EXPECT_EQ(classify_score(0.05, c), boundary_class::false_boundary);
  EXPECT_EQ(classify_score(0.1, c), boundary_class::uncertain);
  EXPECT_EQ(classify_score(0.9, c), boundary_class::uncertain);
  EXPECT_EQ(classify_score(0.95, c), boundary_class::true_boundary);
}

TEST(TemporalConfig, Validation) {
  temporal_config c;
  c.sigma_low = 0.95;
  EXPECT_THROW(c.validate(), precondition_error);
}

TEST(InitState, ConfidentScoresSelectEverything) {
  const auto g = cases::graph_of(3, {{1, 2}, {2, 3}});
  const auto s = init_state(g, uniform_scores(g, 0.95), temporal_config{});
  EXPECT_EQ(s.selected, (std::vector<region_set>{{1}, {2}, {3}}));
  EXPECT_TRUE(s.candidates.empty());
  EXPECT_TRUE(s.remaining.empty());
}

TEST(InitState, UncertainScoresLeaveGraphUnchanged) {
  const auto g = cases::graph_of(3, {{1, 2}, {2, 3}});
  const auto s = init_state(g, uniform_scores(g, 0.5), temporal_config{});
  EXPECT_TRUE(s.selected.empty());
  EXPECT_EQ(s.remaining.size(), 3u);
  EXPECT_EQ(s.candidates.size(), 6u);
}

TEST(InitState, ChainWithOneFalseEdge) {
  const auto g = cases::graph_of(3, {{1, 2}, {2, 3}});
  const auto s = init_state(g, {{boundary_key(1, 2), 0.05}, {boundary_key(2, 3), 0.5}}, temporal_config{});
  EXPECT_EQ(s.nodes, (std::vector<region_set>{{1, 2}, {3}}));
  EXPECT_TRUE(s.selected.empty());
  EXPECT_EQ(s.candidates.size(), 3u);
  EXPECT_EQ(s.partition.at(boundary_key(1, 2)), boundary_class::false_boundary);
}

TEST(InitState, FalseCycleAndParallelEdges) {
  // 1-2 false, 2-3 uncertain, 1-3 uncertain: the reduced graph has one edge with two originals
  const auto g = cases::graph_of(3, {{1, 2}, {2, 3}, {1, 3}});
  const auto s = init_state(g, {{boundary_key(1, 2), 0.0}, {boundary_key(2, 3), 0.4}, {boundary_key(1, 3), 0.6}},
                            temporal_config{});
  ASSERT_EQ(s.uncertain_edges.size(), 1u);
  EXPECT_EQ(s.uncertain_edges.begin()->second.size(), 2u);
  EXPECT_THROW(init_state(g, {}, temporal_config{}), precondition_error);
}

TEST(FinalSelection, NothingLeft) {
  const auto g = cases::graph_of(2, {{1, 2}});
  const auto s = init_state(g, uniform_scores(g, 1.0), temporal_config{});
  const auto f = final_selection(s, uniform_scores(g, 1.0));
  EXPECT_TRUE(f.pending.empty());
  EXPECT_EQ(f.all, s.selected);
}

TEST(FinalSelection, LowScoreMergesAndHalfSplits) {
  const auto g = cases::graph_of(2, {{1, 2}});
  const auto low = uniform_scores(g, 0.3);
  EXPECT_EQ(final_selection(init_state(g, low, temporal_config{}), low).pending, (std::vector<region_set>{{1, 2}}));
  const auto half = uniform_scores(g, 0.5);
  EXPECT_EQ(final_selection(init_state(g, half, temporal_config{}), half).pending,
            (std::vector<region_set>{{1}, {2}}));
}

TEST(FinalSelection, AnyFalseOriginalMerges) {
  const auto g = cases::graph_of(3, {{1, 2}, {2, 3}, {1, 3}});
  const boundary_scores sc{{boundary_key(1, 2), 0.0}, {boundary_key(2, 3), 0.4}, {boundary_key(1, 3), 0.6}};
  EXPECT_EQ(final_selection(init_state(g, sc, temporal_config{}), sc).pending, (std::vector<region_set>{{1, 2, 3}}));
}

TEST(ResolveDirections, LargerSumWinsTieGoesToPrevious) {
  const auto g = cases::graph_of(4, {{1, 2}, {3, 4}});
  const auto s = init_state(g, uniform_scores(g, 0.5), temporal_config{}, 1);
  ASSERT_EQ(s.candidates.size(), 6u);  // {1},{1,2},{2},{3},{3,4},{4}
  detail::directional_flows prev{true, {{0, 0.9}, {2, 0.8}, {3, 0.6}}};
  detail::directional_flows next{true, {{1, 1.3}, {4, 0.6}}};
  const auto d = detail::resolve_directions(s, prev, next);
  ASSERT_EQ(d.size(), 2u);
  EXPECT_DOUBLE_EQ(d[0].previous_sum, 1.7);
  EXPECT_DOUBLE_EQ(d[0].next_sum, 1.3);
  EXPECT_TRUE(d[0].chose_previous);
  EXPECT_EQ(d[0].added, (std::vector<instance_candidate>{{{1}}, {{2}}}));
  EXPECT_TRUE(d[1].chose_previous);  // 0.6 vs 0.6
  EXPECT_EQ(d[1].added, (std::vector<instance_candidate>{{{3}}}));

  detail::directional_flows strong_next{true, {{1, 1.0}, {4, 0.7}}};
  const auto e = detail::resolve_directions(s, detail::directional_flows{true, {{0, 0.9}}}, strong_next);
  EXPECT_FALSE(e[0].chose_previous);
  EXPECT_EQ(e[0].added, (std::vector<instance_candidate>{{{1, 2}}}));
  EXPECT_FALSE(e[1].chose_previous);
}

TEST(ResolveDirections, EndFramesUseTheirOnlyNeighbour) {
  const auto g = cases::graph_of(2, {{1, 2}});
  const auto s = init_state(g, uniform_scores(g, 0.5), temporal_config{});
  const auto first = detail::resolve_directions(s, {}, detail::directional_flows{true, {{1, 0.2}}});
  EXPECT_FALSE(first[0].chose_previous);
  EXPECT_EQ(first[0].added.size(), 1u);
  const auto last = detail::resolve_directions(s, detail::directional_flows{true, {{0, 0.2}}}, {});
  EXPECT_TRUE(last[0].chose_previous);
}

TEST(Iterate, PropagatesOneFrameAtATime) {
  // Same map three times; the last frame is confident, the others uncertain.
  const auto img = synth_image(cases::video_spec(0));
  const auto a = analyze_frame(img.probabilities, pipeline_config{});
  ASSERT_GT(a.graph.edge_count(), 0u);
  std::vector<frame_analysis> frames{a, a, a};
  std::vector<boundary_scores> sc{uniform_scores(a.graph, 0.5), uniform_scores(a.graph, 0.5),
                                  uniform_scores(a.graph, 1.0)};
  std::vector<std::vector<std::size_t>> counts;
  temporal_config cfg;
  cfg.iterations = 3;
  refine_video(frames, sc, cfg, [&](std::size_t, const auto&, const auto& after, const auto&) {
    counts.push_back({after[0].selected.size(), after[1].selected.size(), after[2].selected.size()});
  });
  const std::size_t n = a.graph.node_count();
  const std::size_t isolated = init_state(a.graph, sc[0], cfg).selected.size();  // no edges at all
  ASSERT_LT(isolated, n);
  ASSERT_EQ(counts.size(), 3u);
  EXPECT_EQ(counts[0], (std::vector<std::size_t>{isolated, n, n}));
  EXPECT_EQ(counts[1], (std::vector<std::size_t>{n, n, n}));
  EXPECT_EQ(counts[2], (std::vector<std::size_t>{n, n, n}));
}

TEST(Iterate, SweepPropagatesWithinOneIteration) {
  // With the confident frame first, a sweep reaches the last frame in one pass.
  const auto img = synth_image(cases::video_spec(0));
  const auto a = analyze_frame(img.probabilities, pipeline_config{});
  std::vector<frame_analysis> frames{a, a, a};
  std::vector<boundary_scores> sc{uniform_scores(a.graph, 1.0), uniform_scores(a.graph, 0.5),
                                  uniform_scores(a.graph, 0.5)};
  temporal_config cfg;
  cfg.iterations = 1;
  cfg.sweep = true;
  std::vector<std::size_t> last;
  refine_video(frames, sc, cfg, [&](std::size_t, const auto&, const auto& after, const auto&) {
    last = {after[0].selected.size(), after[1].selected.size(), after[2].selected.size()};
  });
  const std::size_t n = a.graph.node_count();
  EXPECT_EQ(last, (std::vector<std::size_t>{n, n, n}));
}

TEST(Iterate, AllSelectedIsNoOp) {
  const auto img = synth_image(cases::video_spec(1));
  const auto a = analyze_frame(img.probabilities, pipeline_config{});
  std::vector<frame_state> states(3, init_state(a.graph, uniform_scores(a.graph, 1.0), temporal_config{}));
  const auto before = states;
  std::vector<frame_geometry> geo(3, frame_geometry(a.flooded));
  EXPECT_TRUE(iterate(states, geo, temporal_config{}).empty());
  for (std::size_t w = 0; w < 3; ++w) EXPECT_EQ(states[w].selected, before[w].selected);
}

TEST(SegmentVideo, SingleFrameEqualsSegmentFrame) {
  for (std::size_t i = 0; i < 4; ++i) {
    const auto img = synth_image(cases::image_spec(i));
    const auto a = analyze_frame(img.probabilities, pipeline_config{});
    const auto sc = hashed_scores(a.graph, i);
    const auto video = segment_video_scored({a}, {sc}, temporal_config{}, rim_policy::higher_mean_probability);
    ASSERT_EQ(video.size(), 1u);
    EXPECT_EQ(video[0], segment_analyzed(a, binarize(sc), rim_policy::higher_mean_probability)) << "image " << i;
  }
}

TEST(SegmentVideo, OracleScoresEqualPerFrame) {
  for (std::size_t v = 0; v < 3; ++v) {
    const auto m = cases::make_video(cases::video_spec(v));
    EXPECT_EQ(segment_video_scored(m.analyses, m.oracle, temporal_config{}, rim_policy::higher_mean_probability),
              cases::per_frame(m.analyses, m.oracle))
        << "video " << v;
  }
}

TEST(SegmentVideo, ScorerEntryPointMatchesScoredPath) {
  const auto frames = synth_video(cases::video_spec(2));
  std::vector<prob_map> p;
  oracle_scorer o;
  for (std::size_t w = 0; w < frames.size(); ++w) {
    p.push_back(frames[w].probabilities);
    o.add_frame(w, make_training_set(frames[w].probabilities, frames[w].truth, pipeline_config{}, w).labels);
  }
  const auto m = cases::make_video(cases::video_spec(2));
  EXPECT_EQ(segment_video(p, o, pipeline_config{}, temporal_config{}, 2),
            segment_video_scored(m.analyses, m.oracle, temporal_config{}, rim_policy::higher_mean_probability));
  EXPECT_THROW(segment_video({}, o, pipeline_config{}, temporal_config{}), precondition_error);
}

TEST(SegmentVideo, CorruptedMiddleFrameRecoversNeighbourGeometry) {
  std::size_t improved = 0;
  for (std::size_t v = 0; v < 4; ++v) {
    auto m = cases::make_video(cases::video_spec(v));
    auto scores = m.oracle;
    cases::corrupt_scores(scores[2], 0.2, 77 + v);
    const auto per = cases::per_frame(m.analyses, scores);
    const auto tmp = segment_video_scored(m.analyses, scores, temporal_config{}, rim_policy::higher_mean_probability);
    const auto clean = cases::per_frame(m.analyses, m.oracle);
    EXPECT_EQ(tmp[0], clean[0]);
    EXPECT_EQ(tmp[4], clean[4]);
    improved += evaluate(tmp[2], m.frames[2].truth).f1 > evaluate(per[2], m.frames[2].truth).f1;
    EXPECT_GE(evaluate(tmp[2], m.frames[2].truth).f1, evaluate(per[2], m.frames[2].truth).f1);
  }
  EXPECT_GE(improved, 2u);
}

TEST(Invariants, HoldOnCorruptedVideos) {
  for (std::size_t v = 0; v < 3; ++v) {
    auto m = cases::make_video(cases::video_spec(10 + v));
    auto scores = m.oracle;
    for (auto& s : scores) cases::corrupt_scores(s, 0.3, v);
    std::size_t calls = 0;
    segment_video_scored(m.analyses, scores, temporal_config{}, rim_policy::higher_mean_probability,
                         [&](std::size_t t, const auto& before, const auto& after, const auto& d) {
                           ++calls;
                           const auto bad = check_iteration_invariants(before, after, d);
                           EXPECT_FALSE(bad.has_value()) << "iteration " << t << ": " << bad.value_or("");
                         });
    EXPECT_EQ(calls, 10u);
  }
}

TEST(Invariants, CheckerCatchesViolations) {
  const auto g = cases::graph_of(3, {{1, 2}, {2, 3}});
  const auto s = init_state(g, uniform_scores(g, 0.5), temporal_config{});
  std::vector<frame_state> before{s};

  auto dup = before;
  dup[0].selected.push_back({1});
  EXPECT_NE(check_iteration_invariants(before, dup, {}).value_or(""), "");

  auto lost = before;
  lost[0].remaining.erase(3);
  EXPECT_NE(check_iteration_invariants(before, lost, {}).value_or("").find("conserved"), std::string::npos);

  auto shrunk = dup;
  EXPECT_NE(check_iteration_invariants(dup, before, {}).value_or("").find("monotone"), std::string::npos);
  (void)shrunk;

  direction_decision d;
  d.has_previous = d.has_next = true;
  d.previous_sum = 1.0;
  d.next_sum = 1.0;
  d.chose_previous = false;
  EXPECT_NE(check_iteration_invariants(before, before, {d}).value_or("").find("tie"), std::string::npos);
  d.next_sum = 0.5;
  EXPECT_NE(check_iteration_invariants(before, before, {d}).value_or("").find("maximum"), std::string::npos);
  EXPECT_FALSE(check_iteration_invariants(before, before, {}).has_value());
}
