// Copyright 2026 The hshmm authors
// Licensed under the Apache License, Version 2.0

#pragma once

#include <string>
#include <vector>

#include "hshmm/common.hpp"
#include "hshmm/feature_io.hpp"

namespace hshmm {

// Frame-level confusion counts between reference phones (rows) and
// hypothesized units (columns).
struct ConfusionMatrix {
  Eigen::Matrix<int64_t, Eigen::Dynamic, Eigen::Dynamic> counts;
  std::vector<std::string> ref_labels;
  std::vector<std::string> hyp_labels;

  int64_t total() const { return counts.sum(); }
};

// Each frame is assigned the labels covering its center, (t + 0.5) * shift;
// frames outside the reference (or hypothesis) coverage are skipped.
ConfusionMatrix frame_confusion(const AlignmentMap& reference, const AlignmentMap& hypothesis,
                                double frame_shift_ms = 10.0);

// 200 * I(P;U) / (H(P) + H(U)), in percent. A degenerate matrix with zero
// total label entropy scores 0 (with a warning on stderr).
double nmi(const ConfusionMatrix& confusion);

struct BoundaryScore {
  double precision = 0.0;
  double recall = 0.0;
  double fscore = 0.0;
  int64_t n_ref = 0;
  int64_t n_hyp = 0;
  int64_t n_match = 0;
};

// Greedy one-to-one boundary matching in time order within the tolerance;
// utterance-initial and utterance-final boundaries are excluded.
BoundaryScore boundary_fscore(const AlignmentMap& reference, const AlignmentMap& hypothesis,
                              double tolerance_ms = 20.0);

}  // namespace hshmm
