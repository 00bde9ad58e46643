// Copyright 2026 The hshmm authors
// Licensed under the Apache License, Version 2.0

#include "hshmm/model.hpp"

#include <cmath>

namespace hshmm {

Eigen::VectorXd pack_eta(const UnitNaturalParams& params, const ParamLayout& layout) {
  const int D = layout.feature_dim;
  const int K = layout.n_components;
  if (static_cast<int>(params.mean_pre.size()) != layout.n_states * K ||
      static_cast<int>(params.var_pre.size()) != layout.n_states * K ||
      static_cast<int>(params.weight_logits.size()) != layout.n_states)
    throw DataError("pack_eta: block count does not match layout");

  Eigen::VectorXd eta(layout.eta_dim());
  for (int i = 0; i < layout.n_states; ++i) {
    for (int j = 0; j < K; ++j) {
      const auto& mean = params.mean_pre[i * K + j];
      const auto& var = params.var_pre[i * K + j];
      if (mean.size() != D || var.size() != D)
        throw DataError("pack_eta: block dimension does not match layout");
      eta.segment(layout.mean_offset(i, j), D) = mean;
      eta.segment(layout.var_offset(i, j), D) = var;
    }
    if (params.weight_logits[i].size() != K - 1)
      throw DataError("pack_eta: weight block dimension does not match layout");
    eta.segment(layout.weight_offset(i), K - 1) = params.weight_logits[i];
  }
  return eta;
}

UnitNaturalParams unpack_eta(const Eigen::VectorXd& eta, const ParamLayout& layout) {
  if (eta.size() != layout.eta_dim())
    throw DataError("unpack_eta: vector length does not match layout");
  const int D = layout.feature_dim;
  const int K = layout.n_components;
  UnitNaturalParams params;
  params.mean_pre.resize(layout.n_states * K);
  params.var_pre.resize(layout.n_states * K);
  params.weight_logits.resize(layout.n_states);
  for (int i = 0; i < layout.n_states; ++i) {
    for (int j = 0; j < K; ++j) {
      params.mean_pre[i * K + j] = eta.segment(layout.mean_offset(i, j), D);
      params.var_pre[i * K + j] = eta.segment(layout.var_offset(i, j), D);
    }
    params.weight_logits[i] = eta.segment(layout.weight_offset(i), K - 1);
  }
  return params;
}

PhoneLoop make_phone_loop(int truncation, double concentration) {
  if (truncation < 1) throw DataError("make_phone_loop: truncation must be >= 1");
  if (concentration <= 0) throw DataError("make_phone_loop: concentration must be > 0");
  PhoneLoop loop;
  loop.truncation = truncation;
  loop.concentration = concentration;
  loop.stick_a = Eigen::VectorXd::Ones(truncation);
  loop.stick_b = Eigen::VectorXd::Constant(truncation, concentration);
  return loop;
}

Eigen::VectorXd stick_breaking_expected_log_weights(const PhoneLoop& loop) {
  const int U = loop.truncation;
  if (loop.stick_a.size() != U || loop.stick_b.size() != U)
    throw DataError("stick_breaking_expected_log_weights: bad Beta parameter size");
  Eigen::VectorXd out(U);
  double tail = 0.0;  // sum over v<u of E[ln(1-v_v)]
  for (int u = 0; u < U; ++u) {
    const double a = loop.stick_a[u];
    const double b = loop.stick_b[u];
    if (!(a > 0) || !(b > 0))
      throw DataError("stick_breaking_expected_log_weights: Beta parameters must be positive");
    out[u] = digamma(a) - digamma(a + b) + tail;
    tail += digamma(b) - digamma(a + b);
  }
  return out;
}

PhoneLoop update_stick_breaking(const PhoneLoop& loop, const Eigen::VectorXd& unit_counts) {
  if (unit_counts.size() != loop.truncation)
    throw DataError("update_stick_breaking: count vector length mismatch");
  if ((unit_counts.array() < 0).any())
    throw DataError("update_stick_breaking: negative unit count");
  PhoneLoop out = loop;
  double tail = 0.0;
  for (int u = loop.truncation - 1; u >= 0; --u) {
    out.stick_a[u] = 1.0 + unit_counts[u];
    out.stick_b[u] = loop.concentration + tail;
    tail += unit_counts[u];
  }
  return out;
}

void DecodingGraph::index_arcs() {
  arcs_from.assign(states.size(), {});
  arcs_into.assign(states.size(), {});
  for (int a = 0; a < static_cast<int>(arcs.size()); ++a) {
    arcs_from[arcs[a].src].push_back(a);
    arcs_into[arcs[a].dst].push_back(a);
  }
}

DecodingGraph build_phone_loop_graph(int n_units, const ParamLayout& layout,
                                     const Eigen::VectorXd& expected_log_unit_weights,
                                     double self_loop_prob) {
  if (n_units < 1) throw DataError("build_phone_loop_graph: need at least one unit");
  if (expected_log_unit_weights.size() != n_units)
    throw DataError("build_phone_loop_graph: weight vector length mismatch");
  if (!expected_log_unit_weights.allFinite())
    throw DataError("build_phone_loop_graph: non-finite unit weights");

  const int S = layout.n_states;
  const double log_self = std::log(self_loop_prob);
  const double log_next = std::log(1.0 - self_loop_prob);

  // Renormalize over the truncated set so every transition row is stochastic.
  Eigen::VectorXd log_w = expected_log_unit_weights;
  log_w.array() -= log_sum_exp(log_w);

  DecodingGraph g;
  g.n_units = n_units;
  g.states.reserve(static_cast<size_t>(n_units) * S);
  for (int u = 0; u < n_units; ++u)
    for (int i = 0; i < S; ++i) g.states.push_back({u, i, u * S + i});

  g.log_initial = Eigen::VectorXd::Constant(g.n_graph_states(), kLogZero);
  g.log_final = Eigen::VectorXd::Constant(g.n_graph_states(), kLogZero);
  for (int u = 0; u < n_units; ++u) {
    g.log_initial[u * S] = log_w[u];
    g.log_final[u * S + S - 1] = 0.0;
    for (int i = 0; i < S; ++i) {
      const int s = u * S + i;
      g.arcs.push_back({s, s, log_self, false});
      if (i + 1 < S) {
        g.arcs.push_back({s, s + 1, log_next, false});
      } else {
        for (int v = 0; v < n_units; ++v)
          g.arcs.push_back({s, v * S, log_next + log_w[v], true});
      }
    }
  }
  g.index_arcs();
  return g;
}

DecodingGraph build_alignment_graph(const std::vector<std::string>& transcript,
                                    const std::map<std::string, int>& token_to_unit,
                                    const ParamLayout& layout,
                                    double self_loop_prob) {
  if (transcript.empty()) throw DataError("build_alignment_graph: empty transcript");
  const int S = layout.n_states;
  const double log_self = std::log(self_loop_prob);
  const double log_next = std::log(1.0 - self_loop_prob);

  DecodingGraph g;
  g.n_units = 0;
  for (const auto& [tok, unit] : token_to_unit)
    g.n_units = std::max(g.n_units, unit + 1);

  for (const auto& token : transcript) {
    auto it = token_to_unit.find(token);
    if (it == token_to_unit.end())
      throw DataError("build_alignment_graph: unmapped token '" + token + "'");
    for (int i = 0; i < S; ++i)
      g.states.push_back({it->second, i, it->second * S + i});
  }

  const int n = g.n_graph_states();
  g.log_initial = Eigen::VectorXd::Constant(n, kLogZero);
  g.log_final = Eigen::VectorXd::Constant(n, kLogZero);
  g.log_initial[0] = 0.0;
  g.log_final[n - 1] = 0.0;
  for (int s = 0; s < n; ++s) {
    if (s + 1 < n) {
      g.arcs.push_back({s, s, log_self, false});
      g.arcs.push_back({s, s + 1, log_next, (s + 1) % S == 0});
    } else {
      // terminal state absorbs: self-loop with probability one
      g.arcs.push_back({s, s, 0.0, false});
    }
  }
  g.index_arcs();
  return g;
}

}  // namespace hshmm
