// Copyright 2026 The hshmm authors
// Licensed under the Apache License, Version 2.0

#pragma once

#include <functional>
#include <map>
#include <string>
#include <vector>

#include "hshmm/checkpoint.hpp"
#include "hshmm/feature_io.hpp"
#include "hshmm/model.hpp"
#include "hshmm/subspace.hpp"

namespace hshmm {

// Responsibility-weighted data moments per Gaussian component, indexed
// unit * n_states * K + state * K + component. Additive across utterances.
struct SufficientStats {
  int n_units = 0;
  int n_states = 0;
  int n_components = 0;
  int feature_dim = 0;
  Eigen::VectorXd N;        // zeroth order
  Eigen::MatrixXd phi;      // first order, one row per component
  Eigen::MatrixXd phi2;     // diagonal second order, one row per component
  Eigen::VectorXd unit_counts;  // expected unit entries, for stick-breaking
  double n_frames = 0.0;

  static SufficientStats zeros(const ParamLayout& layout, int n_units);
  int comp_index(int unit, int state, int comp) const {
    return (unit * n_states + state) * n_components + comp;
  }
  void merge(const SufficientStats& other);
};

// Decoded GMM parameters for every unit of one language, for one posterior
// sample.
using DecodedModel = std::vector<GaussianParams>;

// Sample-averaged emission scores for one utterance.
struct EmissionScores {
  // log sum_j pi_j N(x | mu_j, Sigma_j), averaged over samples;
  // n_frames x (n_units * n_states)
  Eigen::MatrixXd llh;
  // per-component ln pi_j + ln N(x | ...), averaged over samples;
  // n_frames x (n_units * n_states * K)
  Eigen::MatrixXd comp_logdens;
};

EmissionScores expected_log_likelihoods(const std::vector<DecodedModel>& samples,
                                        const FeatureMatrix& features);

struct FBResult {
  Eigen::MatrixXd posteriors;  // n_frames x graph states
  double log_marginal = kLogZero;
  Eigen::VectorXd unit_entry_counts;  // per graph unit
};

// Log-domain forward-backward over a decoding graph. llh columns are indexed
// by the graph states' emission ids.
FBResult forward_backward(const DecodingGraph& graph, const Eigen::MatrixXd& llh);

// Per-frame per-Gaussian responsibilities (n_frames x n_units*n_states*K):
// state posterior times the within-state component posteriors derived from
// the sample-averaged component log-densities.
Eigen::MatrixXd compute_responsibilities(const DecodingGraph& graph, const FBResult& fb,
                                         const EmissionScores& scores);

SufficientStats accumulate_stats(const Eigen::MatrixXd& responsibilities,
                                 const FeatureMatrix& features, const ParamLayout& layout,
                                 int n_units);

// --- Empirical ELBO -------------------------------------------------------

struct ModelPosteriors {
  HyperPosterior hyper;
  std::vector<LanguagePosterior> languages;
};

struct ElboReport {
  int iteration = 0;
  std::vector<std::pair<std::string, double>> language_terms;
  double kl_theta = 0.0;
  double kl_m = 0.0;
  double total = 0.0;

  double data_term() const {
    double t = 0.0;
    for (const auto& [id, v] : language_terms) t += v;
    return t;
  }
};

struct ElboGradients {
  Eigen::VectorXd hyper_omega, hyper_psi;
  // aligned with the language list handed to empirical_elbo
  std::vector<std::pair<Eigen::VectorXd, Eigen::VectorXd>> languages;
};

struct ElboOptions {
  int n_samples = 5;
  bool update_hyper = true;  // false freezes q(M) (transfer stage)
  bool strict = false;
  bool want_gradients = true;
};

struct ElboResult {
  ElboReport report;
  ElboGradients grads;
};

// Stats for one language, pointing at its posterior slot.
struct LanguageStats {
  int language_index = 0;
  const SufficientStats* stats = nullptr;
};

// Reparameterized ELBO estimate and its gradients with respect to every
// variational mean and log-variance, for fixed noise draws derived from
// sample_rng. Deterministic given (posteriors, stats, sample_rng).
ElboResult empirical_elbo(const std::vector<LanguageStats>& language_stats,
                          const ModelPosteriors& posteriors, const PriorConfig& priors,
                          const ElboOptions& options, const Rng& sample_rng);

// Posterior samples decoded to per-unit GMM parameters; the noise streams
// match empirical_elbo's for the same sample_rng.
std::vector<DecodedModel> sample_decoded_models(const ModelPosteriors& posteriors,
                                                int language_index, int n_samples,
                                                const Rng& sample_rng, bool strict = false);

// --- Adam ------------------------------------------------------------------

struct AdamConfig {
  double beta1 = 0.9;
  double beta2 = 0.999;
  double epsilon = 1e-8;
};

struct AdamState {
  Eigen::VectorXd m, v;
  int64_t t = 0;
};

// One ascent step (maximizing), with bias correction.
void adam_step(Eigen::VectorXd& params, const Eigen::VectorXd& grad, AdamState& state,
               double learning_rate, const AdamConfig& config = {});

// --- Training drivers -------------------------------------------------------

struct TrainConfig {
  int em_iterations = 30;
  int grad_steps = 1000;
  double learning_rate = 5e-3;
  int n_samples = 5;
  uint64_t seed = 0;
  bool common_random_numbers = false;
  int n_threads = 1;
  bool strict_numerics = false;
  double self_loop_prob = 0.5;
  double concentration = 1.0;
  InitConfig init;
  PriorConfig priors;
};

struct TrainLogEntry {
  int iteration = 0;
  ElboReport report;
  double wall_seconds = 0.0;
};
using TrainLogger = std::function<void(const TrainLogEntry&)>;

struct SupervisedCorpus {
  std::string language_id;
  FeatureMap features;
  std::map<std::string, std::vector<std::string>> transcripts;
  // built from the transcripts (sorted unique tokens) when empty
  std::map<std::string, int> token_to_unit;
};

// Stage 1: estimate q0(M) and per-source-language posteriors over forced
// alignment graphs.
Checkpoint train_supervised(std::vector<SupervisedCorpus> corpora, const SubspaceDims& dims,
                            const TrainConfig& config, const TrainLogger& logger = nullptr);

// Stage 2: discover units on the target corpus with the hyper-subspace
// posterior frozen; only the target's language posterior and the
// stick-breaking state change.
Checkpoint train_unsupervised(const FeatureMap& target_features,
                              const std::string& target_language_id, int truncation,
                              const Checkpoint& base, const TrainConfig& config,
                              const TrainLogger& logger = nullptr);

}  // namespace hshmm
