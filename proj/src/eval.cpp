// Copyright 2026 The hshmm authors
// Licensed under the Apache License, Version 2.0

#include "hshmm/eval.hpp"

#include <algorithm>
#include <cmath>
#include <iostream>
#include <map>

namespace hshmm {

namespace {

// label of the segment covering time t, or empty
const std::string* label_at(const std::vector<AlignSegment>& segments, double t) {
  for (const auto& seg : segments)
    if (t >= seg.start_ms && t < seg.end_ms) return &seg.label;
  return nullptr;
}

double entropy(const Eigen::VectorXd& counts, double total) {
  double h = 0.0;
  for (int i = 0; i < counts.size(); ++i) {
    if (counts[i] <= 0) continue;
    const double p = counts[i] / total;
    h -= p * std::log(p);
  }
  return h;
}

// internal boundaries of one utterance, sorted and deduplicated
std::vector<double> internal_boundaries(const std::vector<AlignSegment>& segments) {
  if (segments.size() < 1) return {};
  std::vector<double> edges;
  for (const auto& seg : segments) {
    edges.push_back(seg.start_ms);
    edges.push_back(seg.end_ms);
  }
  std::sort(edges.begin(), edges.end());
  edges.erase(std::unique(edges.begin(), edges.end()), edges.end());
  // drop the utterance-initial and utterance-final edges
  if (!edges.empty()) edges.erase(edges.begin());
  if (!edges.empty()) edges.pop_back();
  return edges;
}

}  // namespace

ConfusionMatrix frame_confusion(const AlignmentMap& reference, const AlignmentMap& hypothesis,
                                double frame_shift_ms) {
  if (frame_shift_ms <= 0) throw DataError("frame_confusion: frame shift must be positive");
  std::map<std::string, int> ref_index, hyp_index;
  for (const auto& [utt, segs] : reference)
    for (const auto& seg : segs) ref_index.emplace(seg.label, 0);
  for (const auto& [utt, segs] : hypothesis)
    for (const auto& seg : segs) hyp_index.emplace(seg.label, 0);
  int r = 0, h = 0;
  for (auto& [label, idx] : ref_index) idx = r++;
  for (auto& [label, idx] : hyp_index) idx = h++;

  ConfusionMatrix cm;
  cm.counts.setZero(std::max(r, 1), std::max(h, 1));
  cm.ref_labels.resize(r);
  cm.hyp_labels.resize(h);
  for (const auto& [label, idx] : ref_index) cm.ref_labels[idx] = label;
  for (const auto& [label, idx] : hyp_index) cm.hyp_labels[idx] = label;

  for (const auto& [utt, ref_segs] : reference) {
    auto hyp_it = hypothesis.find(utt);
    if (hyp_it == hypothesis.end()) continue;
    if (ref_segs.empty()) continue;
    const double ref_end = ref_segs.back().end_ms;
    for (int t = 0;; ++t) {
      const double center = (t + 0.5) * frame_shift_ms;
      if (center >= ref_end) break;
      const std::string* ref_label = label_at(ref_segs, center);
      if (!ref_label) continue;  // outside reference coverage
      const std::string* hyp_label = label_at(hyp_it->second, center);
      if (!hyp_label) continue;
      cm.counts(ref_index.at(*ref_label), hyp_index.at(*hyp_label)) += 1;
    }
  }
  if (cm.total() == 0)
    throw DataError("frame_confusion: reference and hypothesis share no scored frames");
  return cm;
}

double nmi(const ConfusionMatrix& confusion) {
  const double total = static_cast<double>(confusion.total());
  if (total <= 0) throw DataError("nmi: empty confusion matrix");

  const Eigen::VectorXd row_sums = confusion.counts.cast<double>().rowwise().sum();
  const Eigen::VectorXd col_sums = confusion.counts.cast<double>().colwise().sum();
  const double h_ref = entropy(row_sums, total);
  const double h_hyp = entropy(col_sums, total);
  if (h_ref + h_hyp == 0.0) {
    std::cerr << "warning: nmi undefined for a single-cell confusion matrix; returning 0\n";
    return 0.0;
  }

  double mi = 0.0;
  for (int i = 0; i < confusion.counts.rows(); ++i) {
    for (int j = 0; j < confusion.counts.cols(); ++j) {
      const double c = static_cast<double>(confusion.counts(i, j));
      if (c <= 0) continue;
      const double p = c / total;
      mi += p * std::log(p * total * total / (row_sums[i] * col_sums[j]));
    }
  }
  return 200.0 * mi / (h_ref + h_hyp);
}

BoundaryScore boundary_fscore(const AlignmentMap& reference, const AlignmentMap& hypothesis,
                              double tolerance_ms) {
  BoundaryScore score;
  for (const auto& [utt, ref_segs] : reference) {
    const std::vector<double> ref_edges = internal_boundaries(ref_segs);
    std::vector<double> hyp_edges;
    auto hyp_it = hypothesis.find(utt);
    if (hyp_it != hypothesis.end()) hyp_edges = internal_boundaries(hyp_it->second);

    score.n_ref += static_cast<int64_t>(ref_edges.size());
    score.n_hyp += static_cast<int64_t>(hyp_edges.size());
    size_t i = 0, j = 0;
    while (i < ref_edges.size() && j < hyp_edges.size()) {
      if (std::abs(ref_edges[i] - hyp_edges[j]) <= tolerance_ms) {
        ++score.n_match;
        ++i;
        ++j;
      } else if (ref_edges[i] < hyp_edges[j]) {
        ++i;
      } else {
        ++j;
      }
    }
  }
  // hypothesis-only utterances still count toward precision's denominator
  for (const auto& [utt, hyp_segs] : hypothesis)
    if (!reference.count(utt))
      score.n_hyp += static_cast<int64_t>(internal_boundaries(hyp_segs).size());

  score.precision = score.n_hyp > 0 ? static_cast<double>(score.n_match) / score.n_hyp : 0.0;
  score.recall = score.n_ref > 0 ? static_cast<double>(score.n_match) / score.n_ref : 0.0;
  score.fscore = (score.precision + score.recall) > 0
                     ? 2.0 * score.precision * score.recall / (score.precision + score.recall)
                     : 0.0;
  return score;
}

}  // namespace hshmm
