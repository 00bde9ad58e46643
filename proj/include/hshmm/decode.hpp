// Copyright 2026 The hshmm authors
// Licensed under the Apache License, Version 2.0

#pragma once

#include <string>
#include <vector>

#include "hshmm/checkpoint.hpp"
#include "hshmm/feature_io.hpp"
#include "hshmm/inference.hpp"
#include "hshmm/model.hpp"

namespace hshmm {

struct ViterbiResult {
  std::vector<int> path;  // graph state per frame
  double score = kLogZero;
};

// Best path under the expected log-likelihoods; ties break toward the lowest
// state index.
ViterbiResult viterbi(const DecodingGraph& graph, const Eigen::MatrixXd& llh);

struct UnitSegment {
  double start_ms = 0.0;
  double end_ms = 0.0;
  int unit = 0;
};

struct UnitTranscription {
  std::string utterance_id;
  std::vector<UnitSegment> segments;
};

// Merges consecutive frames of one unit visit; a segment also ends when the
// unit's state sequence restarts (exit and immediate re-entry).
UnitTranscription path_to_units(const DecodingGraph& graph, const std::vector<int>& path,
                                double frame_shift_ms, const std::string& utterance_id = "");

struct DecodeConfig {
  int n_samples = 5;
  uint64_t seed = 0;
  int n_threads = 1;
  bool strict = false;
  double self_loop_prob = 0.5;
};

// Expected-likelihood Viterbi decoding of a whole corpus against the
// checkpoint's phone loop for `language_id`.
std::vector<UnitTranscription> decode_corpus(const Checkpoint& checkpoint,
                                             const std::string& language_id,
                                             const FeatureMap& features,
                                             const DecodeConfig& config = {});

// Renders segments in the CTM-like alignment format with labels au<N>.
AlignmentMap transcriptions_to_alignments(const std::vector<UnitTranscription>& transcriptions);

}  // namespace hshmm
