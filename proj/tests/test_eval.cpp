#include <doctest.h>

#include <cmath>

#include "hshmm/eval.hpp"

using namespace hshmm;

namespace {

AlignmentMap single(const std::string& utt, std::vector<AlignSegment> segs) {
  AlignmentMap m;
  m[utt] = std::move(segs);
  return m;
}

ConfusionMatrix make_confusion(const Eigen::MatrixXi& counts) {
  ConfusionMatrix cm;
  cm.counts = counts.cast<int64_t>();
  for (int i = 0; i < counts.rows(); ++i) cm.ref_labels.push_back("r" + std::to_string(i));
  for (int j = 0; j < counts.cols(); ++j) cm.hyp_labels.push_back("h" + std::to_string(j));
  return cm;
}

}  // namespace

TEST_CASE("frame_confusion tallies by frame centers") {
  // 4 frames ref (a,a,b,b), hyp (1,1,1,2) -> [[2,0],[1,1]]
  AlignmentMap ref = single("u", {{0, 20, "a"}, {20, 40, "b"}});
  AlignmentMap hyp = single("u", {{0, 30, "1"}, {30, 40, "2"}});
  ConfusionMatrix cm = frame_confusion(ref, hyp, 10.0);
  REQUIRE(cm.counts.rows() == 2);
  REQUIRE(cm.counts.cols() == 2);
  CHECK(cm.counts(0, 0) == 2);
  CHECK(cm.counts(0, 1) == 0);
  CHECK(cm.counts(1, 0) == 1);
  CHECK(cm.counts(1, 1) == 1);
  CHECK(cm.total() == 4);
}

TEST_CASE("frame_confusion: identical labelings give a diagonal matrix") {
  AlignmentMap ref = single("u", {{0, 50, "a"}, {50, 90, "b"}, {90, 120, "c"}});
  ConfusionMatrix cm = frame_confusion(ref, ref, 10.0);
  CHECK(cm.counts.rows() == 3);
  for (int i = 0; i < 3; ++i)
    for (int j = 0; j < 3; ++j)
      if (i != j) CHECK(cm.counts(i, j) == 0);
  CHECK(cm.total() == 12);
}

TEST_CASE("frame_confusion: constant hypothesis fills one column") {
  AlignmentMap ref = single("u", {{0, 40, "a"}, {40, 80, "b"}});
  AlignmentMap hyp = single("u", {{0, 80, "z"}});
  ConfusionMatrix cm = frame_confusion(ref, hyp, 10.0);
  CHECK(cm.counts.cols() == 1);
  CHECK(cm.counts.col(0).sum() == 8);
}

TEST_CASE("frame_confusion: no shared utterances raises") {
  AlignmentMap ref = single("a", {{0, 40, "x"}});
  AlignmentMap hyp = single("b", {{0, 40, "x"}});
  CHECK_THROWS_AS(frame_confusion(ref, hyp, 10.0), DataError);
}

TEST_CASE("nmi on canonical matrices") {
  Eigen::MatrixXi diag(2, 2);
  diag << 2, 0, 0, 2;
  CHECK(nmi(make_confusion(diag)) == doctest::Approx(100.0).epsilon(1e-10));

  Eigen::MatrixXi uniform(2, 2);
  uniform << 1, 1, 1, 1;
  CHECK(nmi(make_confusion(uniform)) == doctest::Approx(0.0).epsilon(1e-10));

  // H(P) = 1 bit, H(U) = 0.8113 bit, I = 0.3113 bit -> 34.37
  Eigen::MatrixXi mixed(2, 2);
  mixed << 2, 0, 1, 1;
  CHECK(nmi(make_confusion(mixed)) == doctest::Approx(34.37).epsilon(0.0003));

  // degenerate single-cell matrix scores 0 with a warning
  Eigen::MatrixXi degenerate(1, 1);
  degenerate << 7;
  CHECK(nmi(make_confusion(degenerate)) == 0.0);
}

TEST_CASE("nmi is permutation invariant and bounded") {
  Rng rng(3);
  for (int trial = 0; trial < 50; ++trial) {
    Rng st = rng.stream(trial);
    const int r = 2 + static_cast<int>(st.next_u64() % 4);
    const int c = 2 + static_cast<int>(st.next_u64() % 4);
    Eigen::MatrixXi counts(r, c);
    for (int i = 0; i < r; ++i)
      for (int j = 0; j < c; ++j) counts(i, j) = static_cast<int>(st.next_u64() % 6);
    if (counts.sum() == 0) counts(0, 0) = 1;
    const double base = nmi(make_confusion(counts));
    CHECK(base >= -1e-9);
    CHECK(base <= 100.0 + 1e-9);

    // swap two rows and two columns
    Eigen::MatrixXi perm = counts;
    perm.row(0).swap(perm.row(r - 1));
    perm.col(0).swap(perm.col(c - 1));
    CHECK(nmi(make_confusion(perm)) == doctest::Approx(base).epsilon(1e-9));
  }
}

TEST_CASE("boundary_fscore on the worked example") {
  // ref internal boundaries {100, 200, 300}; hyp {110, 205, 400}; +-20 ms
  AlignmentMap ref = single(
      "u", {{0, 100, "a"}, {100, 200, "b"}, {200, 300, "c"}, {300, 380, "d"}});
  AlignmentMap hyp = single(
      "u", {{0, 110, "x"}, {110, 205, "y"}, {205, 400, "z"}, {400, 380 + 40, "w"}});
  BoundaryScore s = boundary_fscore(ref, hyp, 20.0);
  CHECK(s.n_ref == 3);
  CHECK(s.n_hyp == 3);
  CHECK(s.n_match == 2);
  CHECK(s.precision == doctest::Approx(2.0 / 3.0));
  CHECK(s.recall == doctest::Approx(2.0 / 3.0));
  CHECK(s.fscore == doctest::Approx(2.0 / 3.0));
}

TEST_CASE("boundary_fscore: exact match and empty hypothesis") {
  AlignmentMap ref = single("u", {{0, 70, "a"}, {70, 120, "b"}, {120, 200, "c"}});
  BoundaryScore perfect = boundary_fscore(ref, ref, 20.0);
  CHECK(perfect.precision == doctest::Approx(1.0));
  CHECK(perfect.recall == doctest::Approx(1.0));
  CHECK(perfect.fscore == doctest::Approx(1.0));

  AlignmentMap hyp = single("u", {{0, 200, "z"}});  // no internal boundaries
  BoundaryScore empty = boundary_fscore(ref, hyp, 20.0);
  CHECK(empty.recall == 0.0);
  CHECK(empty.fscore == 0.0);
}

TEST_CASE("boundary_fscore: swapping ref and hyp swaps precision and recall") {
  Rng rng(9);
  for (int trial = 0; trial < 20; ++trial) {
    Rng st = rng.stream(trial);
    auto random_segments = [&](int n) {
      std::vector<AlignSegment> segs;
      double t = 0;
      for (int i = 0; i < n; ++i) {
        double len = 30.0 + 10.0 * static_cast<double>(st.next_u64() % 12);
        segs.push_back({t, t + len, "s" + std::to_string(i)});
        t += len;
      }
      return segs;
    };
    AlignmentMap a = single("u", random_segments(3 + static_cast<int>(st.next_u64() % 5)));
    AlignmentMap b = single("u", random_segments(3 + static_cast<int>(st.next_u64() % 5)));
    BoundaryScore ab = boundary_fscore(a, b, 20.0);
    BoundaryScore ba = boundary_fscore(b, a, 20.0);
    CHECK(ab.precision == doctest::Approx(ba.recall));
    CHECK(ab.recall == doctest::Approx(ba.precision));
    CHECK(ab.fscore == doctest::Approx(ba.fscore));
  }
}
