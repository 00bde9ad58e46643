// Copyright 2026 The hshmm authors
// Licensed under the Apache License, Version 2.0

#pragma once

#include <map>
#include <string>
#include <vector>

#include "hshmm/common.hpp"

namespace hshmm {

// Index map between the flat per-unit parameter vector and the structured
// per-state GMM blocks. Each state block stores, in order, the K component
// mean sub-vectors, the K component log-variance sub-vectors and the K-1
// free weight logits (the last logit is implicitly zero).
//
// The bias vector of a subspace is shorter: the mean/variance biases are
// shared across the mixture components of a state.
struct ParamLayout {
  int feature_dim = 0;
  int n_states = 3;
  int n_components = 4;

  int state_block() const { return 2 * n_components * feature_dim + n_components - 1; }
  int eta_dim() const { return n_states * state_block(); }

  int mean_offset(int state, int comp) const {
    return state * state_block() + comp * feature_dim;
  }
  int var_offset(int state, int comp) const {
    return state * state_block() + (n_components + comp) * feature_dim;
  }
  int weight_offset(int state) const {
    return state * state_block() + 2 * n_components * feature_dim;
  }

  int bias_state_block() const { return 2 * feature_dim + n_components - 1; }
  int bias_dim() const { return n_states * bias_state_block(); }
  int bias_mean_offset(int state) const { return state * bias_state_block(); }
  int bias_var_offset(int state) const { return state * bias_state_block() + feature_dim; }
  int bias_weight_offset(int state) const { return state * bias_state_block() + 2 * feature_dim; }

  bool operator==(const ParamLayout&) const = default;
};

// Natural (pre-activation) parameters of one unit, shaped like the GMM
// structure: per (state, component) mean/log-variance vectors plus per-state
// weight logits.
struct UnitNaturalParams {
  std::vector<Eigen::VectorXd> mean_pre;   // n_states*K entries of dim D
  std::vector<Eigen::VectorXd> var_pre;    // n_states*K entries of dim D
  std::vector<Eigen::VectorXd> weight_logits;  // n_states entries of dim K-1
};

Eigen::VectorXd pack_eta(const UnitNaturalParams& params, const ParamLayout& layout);
UnitNaturalParams unpack_eta(const Eigen::VectorXd& eta, const ParamLayout& layout);

// Decoded emission parameters of one unit.
struct GaussianParams {
  int n_states = 0;
  int n_components = 0;
  std::vector<Eigen::VectorXd> means;      // n_states*K entries of dim D
  std::vector<Eigen::VectorXd> vars;       // n_states*K entries of dim D, > 0
  std::vector<Eigen::VectorXd> weights;    // n_states entries of dim K, sum to 1

  int comp_index(int state, int comp) const { return state * n_components + comp; }
};

// Truncated Dirichlet-process phone loop: per-unit Beta posteriors of the
// stick-breaking weights.
struct PhoneLoop {
  int truncation = 0;
  double concentration = 1.0;
  Eigen::VectorXd stick_a, stick_b;
};

PhoneLoop make_phone_loop(int truncation, double concentration = 1.0);

// E[ln w_u] under independent Beta(a_u, b_u) sticks.
Eigen::VectorXd stick_breaking_expected_log_weights(const PhoneLoop& loop);

// Closed-form variational update: a_u = 1 + N_u, b_u = gamma + sum_{v>u} N_v.
PhoneLoop update_stick_breaking(const PhoneLoop& loop, const Eigen::VectorXd& unit_counts);

// Log-domain decoding graph over emitting states. Emission identities index
// columns of an expected log-likelihood matrix laid out as unit*n_states +
// hmm_state.
struct DecodingGraph {
  struct State {
    int unit = 0;       // unit index in the owning model
    int hmm_state = 0;  // 0..n_states-1 inside the unit
    int emission = 0;   // llh column
  };
  struct Arc {
    int src = 0;
    int dst = 0;
    double log_prob = kLogZero;
    bool unit_entry = false;  // arc that (re)starts a unit
  };

  std::vector<State> states;
  std::vector<Arc> arcs;
  std::vector<std::vector<int>> arcs_from;  // arc ids by source state
  std::vector<std::vector<int>> arcs_into;  // arc ids by destination state
  Eigen::VectorXd log_initial;  // per state; unit-entry mass at time 0
  Eigen::VectorXd log_final;    // per state; 0 where ending is allowed
  int n_units = 0;

  int n_graph_states() const { return static_cast<int>(states.size()); }
  void index_arcs();
};

// Phone loop over U units of n_states left-to-right states each. Entry mass
// is the given expected log unit weight, renormalized over the truncation so
// transition rows stay stochastic.
DecodingGraph build_phone_loop_graph(int n_units, const ParamLayout& layout,
                                     const Eigen::VectorXd& expected_log_unit_weights,
                                     double self_loop_prob = 0.5);

// Forced-alignment chain for a transcript; tokens are mapped to unit indices.
DecodingGraph build_alignment_graph(const std::vector<std::string>& transcript,
                                    const std::map<std::string, int>& token_to_unit,
                                    const ParamLayout& layout,
                                    double self_loop_prob = 0.5);

}  // namespace hshmm
