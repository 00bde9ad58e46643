#include <doctest.h>

#include <cmath>

#include "hshmm/decode.hpp"
#include "hshmm/synthgen.hpp"

using namespace hshmm;

namespace {

Eigen::MatrixXd random_llh(Rng& rng, int n, int cols) {
  Eigen::MatrixXd m(n, cols);
  for (int i = 0; i < n; ++i)
    for (int j = 0; j < cols; ++j) m(i, j) = 2.0 * rng.normal();
  return m;
}

// recompute a path score from first principles
double path_score(const DecodingGraph& g, const std::vector<int>& path,
                  const Eigen::MatrixXd& llh) {
  double acc = g.log_initial[path[0]] + llh(0, g.states[path[0]].emission);
  for (size_t t = 1; t < path.size(); ++t) {
    double step = kLogZero;
    for (int a : g.arcs_from[path[t - 1]])
      if (g.arcs[a].dst == path[t]) step = log_add(step, g.arcs[a].log_prob);
    acc += step + llh(t, g.states[path[t]].emission);
  }
  return acc + g.log_final[path.back()];
}

}  // namespace

TEST_CASE("viterbi: one-state graph repeats the state") {
  ParamLayout layout{2, 1, 1};
  DecodingGraph g = build_phone_loop_graph(1, layout, Eigen::VectorXd::Zero(1));
  Rng rng(2);
  Rng st = rng.stream(0);
  Eigen::MatrixXd llh = random_llh(st, 7, 1);
  ViterbiResult res = viterbi(g, llh);
  CHECK(res.path == std::vector<int>(7, 0));
  // each step takes one of the two parallel half-probability arcs
  CHECK(res.score == doctest::Approx(llh.sum() + 6.0 * std::log(0.5)));
}

TEST_CASE("viterbi matches brute-force argmax on random small instances") {
  ParamLayout layout{2, 3, 4};
  Rng rng(23);
  for (int trial = 0; trial < 100; ++trial) {
    Rng st = rng.stream(trial);
    const int n_units = 1 + static_cast<int>(st.next_u64() % 3);
    const int n = 3 + static_cast<int>(st.next_u64() % 4);
    DecodingGraph g = build_phone_loop_graph(n_units, layout, st.normal_vector(n_units));
    Eigen::MatrixXd llh = random_llh(st, n, n_units * 3);

    ViterbiResult vit = viterbi(g, llh);
    BruteForceBestPath bf = brute_force_best_path(g, llh);
    CHECK(vit.path == bf.path);
    CHECK(vit.score == doctest::Approx(bf.score).epsilon(1e-9));
    CHECK(vit.score == doctest::Approx(path_score(g, vit.path, llh)).epsilon(1e-9));
  }
}

TEST_CASE("viterbi: constant llh shift leaves the argmax unchanged") {
  ParamLayout layout{2, 3, 4};
  Rng rng(31);
  Rng st = rng.stream(0);
  DecodingGraph g = build_phone_loop_graph(2, layout, st.normal_vector(2));
  Eigen::MatrixXd llh = random_llh(st, 12, 6);
  ViterbiResult base = viterbi(g, llh);
  ViterbiResult shifted = viterbi(g, llh.array() + 7.5);
  CHECK(base.path == shifted.path);
}

TEST_CASE("viterbi score dominates random admissible paths") {
  ParamLayout layout{2, 3, 4};
  Rng rng(37);
  Rng st = rng.stream(0);
  DecodingGraph g = build_phone_loop_graph(3, layout, st.normal_vector(3));
  const int n = 15;
  Eigen::MatrixXd llh = random_llh(st, n, 9);
  ViterbiResult vit = viterbi(g, llh);

  for (int trial = 0; trial < 100; ++trial) {
    Rng sp = rng.stream(1000 + trial);
    // random admissible path: start at a random entry, follow random arcs,
    // retry until it ends in a final state
    std::vector<int> path;
    for (int attempt = 0; attempt < 200 && path.empty(); ++attempt) {
      std::vector<int> p;
      int s = 3 * static_cast<int>(sp.next_u64() % 3);
      p.push_back(s);
      for (int t = 1; t < n; ++t) {
        const auto& arcs = g.arcs_from[p.back()];
        p.push_back(g.arcs[arcs[sp.next_u64() % arcs.size()]].dst);
      }
      if (g.log_final[p.back()] != kLogZero) path = p;
    }
    REQUIRE(!path.empty());
    CHECK(path_score(g, path, llh) <= vit.score + 1e-9);
  }
}

TEST_CASE("viterbi: infeasible combination raises") {
  ParamLayout layout{2, 3, 4};
  std::map<std::string, int> map{{"a", 0}};
  DecodingGraph g = build_alignment_graph({"a", "a", "a"}, map, layout);
  Eigen::MatrixXd llh = Eigen::MatrixXd::Zero(4, 3);  // 4 frames < 9 states
  CHECK_THROWS_AS(viterbi(g, llh), DataError);
}

TEST_CASE("path_to_units: merging and boundaries") {
  ParamLayout layout{2, 3, 4};
  DecodingGraph g = build_phone_loop_graph(4, layout, Eigen::VectorXd::Zero(4));

  // 10 frames all inside unit 3 -> a single segment (0, 100)
  std::vector<int> path;
  path.push_back(9);  // unit 3 state 0
  path.push_back(9);
  for (int t = 2; t < 9; ++t) path.push_back(10);
  path.push_back(11);
  UnitTranscription tr = path_to_units(g, path, 10.0, "u");
  REQUIRE(tr.segments.size() == 1);
  CHECK(tr.segments[0].start_ms == 0.0);
  CHECK(tr.segments[0].end_ms == 100.0);
  CHECK(tr.segments[0].unit == 3);

  // unit changes produce a boundary at 20 ms
  std::vector<int> two{0, 1, 2, 3, 4, 5};  // unit 0 then unit 1, 3 frames each
  UnitTranscription tr2 = path_to_units(g, two, 10.0, "u");
  REQUIRE(tr2.segments.size() == 2);
  CHECK(tr2.segments[0].end_ms == 30.0);
  CHECK(tr2.segments[1].start_ms == 30.0);
  CHECK(tr2.segments[1].unit == 1);

  // exit and immediate re-entry into the same unit keeps the boundary
  std::vector<int> reenter{0, 1, 2, 0, 1, 2};
  UnitTranscription tr3 = path_to_units(g, reenter, 10.0, "u");
  REQUIRE(tr3.segments.size() == 2);
  CHECK(tr3.segments[0].end_ms == 30.0);
  CHECK(tr3.segments[1].start_ms == 30.0);
  CHECK(tr3.segments[0].unit == tr3.segments[1].unit);

  CHECK_THROWS_AS(path_to_units(g, {}, 10.0, "u"), DataError);
}

TEST_CASE("path_to_units: segments tile the utterance") {
  ParamLayout layout{2, 3, 4};
  Rng rng(5);
  for (int trial = 0; trial < 25; ++trial) {
    Rng st = rng.stream(trial);
    const int n_units = 1 + static_cast<int>(st.next_u64() % 3);
    const int n = 3 + static_cast<int>(st.next_u64() % 30);
    DecodingGraph g = build_phone_loop_graph(n_units, layout, st.normal_vector(n_units));
    Eigen::MatrixXd llh = random_llh(st, n, 3 * n_units);
    ViterbiResult vit = viterbi(g, llh);
    UnitTranscription tr = path_to_units(g, vit.path, 10.0, "u");
    REQUIRE(!tr.segments.empty());
    CHECK(tr.segments.front().start_ms == 0.0);
    CHECK(tr.segments.back().end_ms == doctest::Approx(n * 10.0));
    for (size_t i = 1; i < tr.segments.size(); ++i)
      CHECK(tr.segments[i].start_ms == doctest::Approx(tr.segments[i - 1].end_ms));
  }
}

TEST_CASE("transcriptions_to_alignments renders au<N> labels") {
  UnitTranscription tr;
  tr.utterance_id = "utt0";
  tr.segments = {{0.0, 30.0, 2}, {30.0, 50.0, 11}};
  AlignmentMap ali = transcriptions_to_alignments({tr});
  REQUIRE(ali.count("utt0"));
  CHECK(ali["utt0"][0].label == "au2");
  CHECK(ali["utt0"][1].label == "au11");
}
