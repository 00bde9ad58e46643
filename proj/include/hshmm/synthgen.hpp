// Copyright 2026 The hshmm authors
// Licensed under the Apache License, Version 2.0

#pragma once

#include <string>
#include <vector>

#include "hshmm/feature_io.hpp"
#include "hshmm/model.hpp"
#include "hshmm/subspace.hpp"

namespace hshmm {

// Desk-scale generator settings; regenerating from an identical spec and seed
// reproduces corpora bit-exactly.
struct SynthSpec {
  int feature_dim = 2;
  int embedding_dim = 4;
  int hyper_dim = 2;
  int n_true_units = 5;
  int n_states = 3;
  int n_components = 4;

  int n_utterances = 200;
  int min_frames = 20;
  int max_frames = 60;
  double self_loop_prob = 0.5;   // geometric dwell tail per state
  int min_state_frames = 2;      // shifted-geometric dwell floor
  bool allow_unit_repeats = false;
  double frame_shift_ms = 10.0;

  // sampling scales of the generative story
  PriorConfig priors{1.0, 0.45, 0.45, 1.0};

  uint64_t seed = 0;
  std::vector<std::string> languages = {"synth"};

  ParamLayout layout() const { return {feature_dim, n_states, n_components}; }
  SubspaceDims dims() const { return {layout(), hyper_dim, embedding_dim}; }
};

// Ground truth: hyper-subspace bases plus per-language embeddings and the
// decoded unit parameters.
struct SyntheticLanguage {
  std::string language_id;
  Eigen::VectorXd alpha;
  std::vector<Eigen::VectorXd> embeddings;
  std::vector<GaussianParams> units;
};

struct SynthWorld {
  SynthSpec spec;
  std::vector<Eigen::MatrixXd> bases;   // hyper_dim + 1
  std::vector<Eigen::VectorXd> biases;  // hyper_dim + 1
  std::vector<SyntheticLanguage> languages;
};

SynthWorld sample_world(const SynthSpec& spec);

struct SyntheticCorpus {
  std::string language_id;
  FeatureMap features;
  AlignmentMap alignments;  // exact generating alignments, labels p<k>
  std::map<std::string, std::vector<std::string>> transcripts;
};

SyntheticCorpus generate_corpus(const SynthWorld& world, int language_index);
// Single-language convenience entry point.
SyntheticCorpus generate_corpus(const SynthSpec& spec);

std::string synth_unit_label(int unit, int n_units);

// --- brute-force oracles ----------------------------------------------------
// Exhaustive path enumeration for small instances; the budget guards keep the
// search tractable (n_frames <= 8, emitting states <= 12).

struct BruteForceMarginals {
  Eigen::MatrixXd posteriors;  // n_frames x graph states
  double log_marginal = kLogZero;
  Eigen::VectorXd unit_entry_counts;
};

BruteForceMarginals brute_force_marginals(const DecodingGraph& graph,
                                          const Eigen::MatrixXd& llh);

struct BruteForceBestPath {
  std::vector<int> path;
  double score = kLogZero;
};

BruteForceBestPath brute_force_best_path(const DecodingGraph& graph,
                                         const Eigen::MatrixXd& llh);

}  // namespace hshmm
