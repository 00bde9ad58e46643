// Copyright 2026 The hshmm authors
// Licensed under the Apache License, Version 2.0

#include "hshmm/decode.hpp"

#include <cmath>

namespace hshmm {

ViterbiResult viterbi(const DecodingGraph& graph, const Eigen::MatrixXd& llh) {
  const int n = static_cast<int>(llh.rows());
  const int ns = graph.n_graph_states();
  if (n < 1) throw DataError("viterbi: empty utterance");
  for (const auto& st : graph.states)
    if (st.emission >= llh.cols())
      throw DataError("viterbi: llh matrix misses emission columns");

  Eigen::MatrixXd emis(n, ns);
  for (int s = 0; s < ns; ++s) emis.col(s) = llh.col(graph.states[s].emission);

  Eigen::MatrixXd delta(n, ns);
  Eigen::MatrixXi back(n, ns);
  delta.row(0) = graph.log_initial.transpose() + emis.row(0);
  back.row(0).setConstant(-1);
  for (int t = 1; t < n; ++t) {
    for (int s = 0; s < ns; ++s) {
      double best = kLogZero;
      int best_src = -1;
      for (int a : graph.arcs_into[s]) {
        const auto& arc = graph.arcs[a];
        const double v = delta(t - 1, arc.src) + arc.log_prob;
        // strict comparison with ascending sources: lowest index wins ties
        if (v > best || (v == best && best_src >= 0 && arc.src < best_src)) {
          best = v;
          best_src = arc.src;
        }
      }
      delta(t, s) = best == kLogZero ? kLogZero : best + emis(t, s);
      back(t, s) = best_src;
    }
  }

  double best = kLogZero;
  int best_state = -1;
  for (int s = 0; s < ns; ++s) {
    const double v = delta(n - 1, s) + graph.log_final[s];
    if (v > best) {
      best = v;
      best_state = s;
    }
  }
  if (best_state < 0 || !std::isfinite(best))
    throw DataError("viterbi: infeasible graph/frame combination");

  ViterbiResult res;
  res.score = best;
  res.path.assign(n, 0);
  res.path[n - 1] = best_state;
  for (int t = n - 1; t > 0; --t) res.path[t - 1] = back(t, res.path[t]);
  return res;
}

UnitTranscription path_to_units(const DecodingGraph& graph, const std::vector<int>& path,
                                double frame_shift_ms, const std::string& utterance_id) {
  if (path.empty()) throw DataError("path_to_units: empty path");
  UnitTranscription out;
  out.utterance_id = utterance_id;
  int start = 0;
  for (size_t t = 1; t <= path.size(); ++t) {
    bool boundary = t == path.size();
    if (!boundary) {
      const auto& prev = graph.states.at(path[t - 1]);
      const auto& cur = graph.states.at(path[t]);
      // a drop in the state index means the unit was re-entered
      boundary = cur.unit != prev.unit || cur.hmm_state < prev.hmm_state;
    }
    if (boundary) {
      out.segments.push_back({start * frame_shift_ms, static_cast<double>(t) * frame_shift_ms,
                              graph.states.at(path[start]).unit});
      start = static_cast<int>(t);
    }
  }
  return out;
}

std::vector<UnitTranscription> decode_corpus(const Checkpoint& checkpoint,
                                             const std::string& language_id,
                                             const FeatureMap& features,
                                             const DecodeConfig& config) {
  const auto loop_it = checkpoint.phone_loops.find(language_id);
  if (loop_it == checkpoint.phone_loops.end())
    throw DataError("decode_corpus: no phone loop for language '" + language_id +
                    "' (run discovery first)");
  const int li = checkpoint.language_index(language_id);
  if (li < 0) throw DataError("decode_corpus: unknown language '" + language_id + "'");

  const DecodingGraph graph = build_phone_loop_graph(
      loop_it->second.truncation, checkpoint.dims.layout,
      stick_breaking_expected_log_weights(loop_it->second), config.self_loop_prob);

  ModelPosteriors post{checkpoint.hyper, checkpoint.languages};
  const Rng rng = Rng(config.seed).stream(0xDEC0DE);
  const auto decoded = sample_decoded_models(post, li, config.n_samples, rng, config.strict);

  std::vector<std::pair<const std::string*, const FeatureMatrix*>> order;
  order.reserve(features.size());
  for (const auto& [utt, fm] : features) order.emplace_back(&utt, &fm);

  std::vector<UnitTranscription> out(order.size());
  parallel_for(static_cast<int>(order.size()), resolve_thread_count(config.n_threads),
               [&](int idx) {
                 const FeatureMatrix& fm = *order[idx].second;
                 EmissionScores scores = expected_log_likelihoods(decoded, fm);
                 ViterbiResult vit = viterbi(graph, scores.llh);
                 out[idx] = path_to_units(graph, vit.path, fm.frame_shift_ms, *order[idx].first);
               });
  return out;
}

AlignmentMap transcriptions_to_alignments(const std::vector<UnitTranscription>& transcriptions) {
  AlignmentMap out;
  for (const auto& tr : transcriptions) {
    auto& segs = out[tr.utterance_id];
    for (const auto& seg : tr.segments)
      segs.push_back({seg.start_ms, seg.end_ms, "au" + std::to_string(seg.unit)});
  }
  return out;
}

}  // namespace hshmm
