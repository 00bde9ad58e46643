#include <doctest.h>

#include <cmath>

#include "hshmm/synthgen.hpp"

using namespace hshmm;

TEST_CASE("generate_corpus is reproducible from spec and seed") {
  SynthSpec spec;
  spec.n_utterances = 10;
  spec.seed = 123;
  SyntheticCorpus a = generate_corpus(spec);
  SyntheticCorpus b = generate_corpus(spec);
  REQUIRE(a.features.size() == 10);
  for (const auto& [utt, fm] : a.features) {
    CHECK(b.features.count(utt));
    CHECK(fm.frames == b.features.at(utt).frames);
  }
  for (const auto& [utt, segs] : a.alignments) {
    const auto& other = b.alignments.at(utt);
    REQUIRE(segs.size() == other.size());
    for (size_t i = 0; i < segs.size(); ++i) {
      CHECK(segs[i].start_ms == other[i].start_ms);
      CHECK(segs[i].label == other[i].label);
    }
  }

  SynthSpec other_seed = spec;
  other_seed.seed = 124;
  SyntheticCorpus c = generate_corpus(other_seed);
  CHECK(c.features.begin()->second.frames != a.features.begin()->second.frames);
}

TEST_CASE("single-unit corpora have constant labels") {
  SynthSpec spec;
  spec.n_true_units = 1;
  spec.n_utterances = 5;
  SyntheticCorpus corpus = generate_corpus(spec);
  for (const auto& [utt, segs] : corpus.alignments)
    for (const auto& seg : segs) CHECK(seg.label == "p0");
}

TEST_CASE("alignments tile each utterance without gaps") {
  SynthSpec spec;
  spec.n_utterances = 25;
  spec.seed = 7;
  SyntheticCorpus corpus = generate_corpus(spec);
  for (const auto& [utt, segs] : corpus.alignments) {
    REQUIRE(!segs.empty());
    CHECK(segs.front().start_ms == 0.0);
    const auto& fm = corpus.features.at(utt);
    CHECK(segs.back().end_ms == doctest::Approx(fm.n_frames() * spec.frame_shift_ms));
    for (size_t i = 1; i < segs.size(); ++i)
      CHECK(segs[i].start_ms == doctest::Approx(segs[i - 1].end_ms));
    CHECK(fm.n_frames() >= spec.min_frames);
    CHECK(fm.n_frames() <= spec.max_frames);
  }
  // transcripts match the alignment labels
  for (const auto& [utt, tokens] : corpus.transcripts) {
    const auto& segs = corpus.alignments.at(utt);
    REQUIRE(tokens.size() == segs.size());
    for (size_t i = 0; i < tokens.size(); ++i) CHECK(tokens[i] == segs[i].label);
  }
}

TEST_CASE("single-gaussian generator matches its mean by the law of large numbers") {
  SynthSpec spec;
  spec.n_true_units = 1;
  spec.n_states = 1;
  spec.n_components = 1;
  spec.n_utterances = 60;
  spec.min_frames = 40;
  spec.max_frames = 60;
  spec.seed = 5;
  SynthWorld world = sample_world(spec);
  const Eigen::VectorXd mu = world.languages[0].units[0].means[0];
  const Eigen::VectorXd var = world.languages[0].units[0].vars[0];

  SyntheticCorpus corpus = generate_corpus(world, 0);
  Eigen::VectorXd sum = Eigen::VectorXd::Zero(spec.feature_dim);
  int64_t n = 0;
  for (const auto& [utt, fm] : corpus.features) {
    sum += fm.frames.cast<double>().colwise().sum();
    n += fm.n_frames();
  }
  const Eigen::VectorXd mean = sum / static_cast<double>(n);
  for (int d = 0; d < spec.feature_dim; ++d) {
    const double se = std::sqrt(var[d] / static_cast<double>(n));
    CHECK(std::abs(mean[d] - mu[d]) < 3.0 * se);
  }
}

TEST_CASE("world sampling separates languages through shared bases") {
  SynthSpec spec;
  spec.languages = {"l1", "l2"};
  SynthWorld world = sample_world(spec);
  REQUIRE(world.languages.size() == 2);
  CHECK(world.bases.size() == static_cast<size_t>(spec.hyper_dim + 1));
  CHECK(world.languages[0].alpha != world.languages[1].alpha);
  // units decode to valid parameters
  for (const auto& lang : world.languages)
    for (const auto& unit : lang.units)
      for (int i = 0; i < spec.n_states; ++i)
        CHECK(unit.weights[i].sum() == doctest::Approx(1.0).epsilon(1e-12));
}

TEST_CASE("brute force oracles: one-state graph and budget errors") {
  ParamLayout layout{2, 1, 1};
  DecodingGraph g = build_phone_loop_graph(1, layout, Eigen::VectorXd::Zero(1));
  Eigen::MatrixXd llh(3, 1);
  llh << -1.0, -2.0, -0.5;
  BruteForceMarginals m = brute_force_marginals(g, llh);
  CHECK(m.log_marginal == doctest::Approx(llh.sum()));
  for (int t = 0; t < 3; ++t) CHECK(m.posteriors(t, 0) == doctest::Approx(1.0));

  BruteForceBestPath p = brute_force_best_path(g, llh);
  CHECK(p.path == std::vector<int>(3, 0));
  // a single arc sequence carries the transition mass, not the arc sum
  CHECK(p.score == doctest::Approx(llh.sum() + 2.0 * std::log(0.5)));

  Eigen::MatrixXd too_long = Eigen::MatrixXd::Zero(9, 1);
  CHECK_THROWS_WITH_AS(brute_force_marginals(g, too_long), doctest::Contains("budget"),
                       DataError);
  ParamLayout big{2, 3, 4};
  DecodingGraph huge = build_phone_loop_graph(5, big, Eigen::VectorXd::Zero(5));
  Eigen::MatrixXd llh15 = Eigen::MatrixXd::Zero(4, 15);
  CHECK_THROWS_WITH_AS(brute_force_best_path(huge, llh15), doctest::Contains("budget"),
                       DataError);
}

TEST_CASE("brute force best path dominates every enumerated path") {
  ParamLayout layout{2, 3, 4};
  Rng rng(3);
  Rng st = rng.stream(0);
  DecodingGraph g = build_phone_loop_graph(2, layout, st.normal_vector(2));
  Eigen::MatrixXd llh(5, 6);
  for (int i = 0; i < llh.size(); ++i) llh.data()[i] = st.normal();
  BruteForceBestPath best = brute_force_best_path(g, llh);
  BruteForceMarginals marg = brute_force_marginals(g, llh);
  // the max path is never above the total mass, and exp(best - logZ) <= 1
  CHECK(best.score <= marg.log_marginal + 1e-12);
}
