// Copyright 2026 The hshmm authors
// Licensed under the Apache License, Version 2.0

#include "hshmm/subspace.hpp"

#include <cmath>

namespace hshmm {

Eigen::VectorXd sample_posterior(const VariationalGaussian& q, const Eigen::VectorXd& eps) {
  if (eps.size() != q.omega.size())
    throw DataError("sample_posterior: noise length mismatch");
  return q.omega.array() + (q.psi.array() / 2.0).exp() * eps.array();
}

double kl_diag_gaussian(const Eigen::Ref<const Eigen::VectorXd>& omega,
                        const Eigen::Ref<const Eigen::VectorXd>& psi, double prior_sigma) {
  if (prior_sigma <= 0) throw DataError("kl_diag_gaussian: prior sigma must be positive");
  const double s2 = prior_sigma * prior_sigma;
  const double log_s2 = std::log(s2);
  double kl = 0.0;
  for (int i = 0; i < omega.size(); ++i)
    kl += 0.5 * (omega[i] * omega[i] / s2 + std::exp(psi[i]) / s2 - 1.0 - psi[i] + log_s2);
  return kl;
}

double kl_diag_gaussian(const VariationalGaussian& q, double prior_sigma) {
  return kl_diag_gaussian(q.omega, q.psi, prior_sigma);
}

void add_kl_gradients(const Eigen::Ref<const Eigen::VectorXd>& omega,
                      const Eigen::Ref<const Eigen::VectorXd>& psi, double prior_sigma,
                      Eigen::Ref<Eigen::VectorXd> grad_omega,
                      Eigen::Ref<Eigen::VectorXd> grad_psi) {
  const double s2 = prior_sigma * prior_sigma;
  grad_omega += omega / s2;
  grad_psi.array() += 0.5 * (psi.array().exp() / s2 - 1.0);
}

SubspaceSample compose_subspace(const std::vector<Eigen::MatrixXd>& bases,
                                const std::vector<Eigen::VectorXd>& biases,
                                const Eigen::VectorXd& alpha) {
  const int K = static_cast<int>(alpha.size());
  if (static_cast<int>(bases.size()) != K + 1 || static_cast<int>(biases.size()) != K + 1)
    throw DataError("compose_subspace: expected K+1 bases and biases");
  SubspaceSample s;
  s.W = bases[0];
  s.b = biases[0];
  for (int k = 0; k < K; ++k) {
    if (bases[k + 1].rows() != s.W.rows() || bases[k + 1].cols() != s.W.cols() ||
        biases[k + 1].size() != s.b.size())
      throw DataError("compose_subspace: inconsistent basis shapes");
    s.W.noalias() += alpha[k] * bases[k + 1];
    s.b += alpha[k] * biases[k + 1];
  }
  return s;
}

SubspaceSample compose_subspace(const HyperPosterior& hyper, const Eigen::VectorXd& hyper_flat,
                                const Eigen::VectorXd& alpha) {
  if (alpha.size() != hyper.dims.hyper_dim)
    throw DataError("compose_subspace: alpha length mismatch");
  if (hyper_flat.size() != hyper.flat_dim())
    throw DataError("compose_subspace: flat sample length mismatch");
  SubspaceSample s;
  s.W = hyper.base_view(hyper_flat, 0);
  s.b = hyper.bias_view(hyper_flat, 0);
  for (int k = 0; k < hyper.dims.hyper_dim; ++k) {
    s.W.noalias() += alpha[k] * hyper.base_view(hyper_flat, k + 1);
    s.b += alpha[k] * hyper.bias_view(hyper_flat, k + 1);
  }
  return s;
}

Eigen::VectorXd unit_preactivations(const Eigen::MatrixXd& W, const Eigen::VectorXd& b,
                                    const Eigen::VectorXd& embedding, const ParamLayout& layout) {
  if (W.rows() != layout.eta_dim() || b.size() != layout.bias_dim())
    throw DataError("unit_preactivations: subspace shape does not match layout");
  if (embedding.size() != W.cols())
    throw DataError("unit_preactivations: embedding length mismatch");
  const int D = layout.feature_dim;
  const int K = layout.n_components;
  Eigen::VectorXd pre = W * embedding;
  for (int i = 0; i < layout.n_states; ++i) {
    for (int j = 0; j < K; ++j) {
      pre.segment(layout.mean_offset(i, j), D) += b.segment(layout.bias_mean_offset(i), D);
      pre.segment(layout.var_offset(i, j), D) += b.segment(layout.bias_var_offset(i), D);
    }
    pre.segment(layout.weight_offset(i), K - 1) += b.segment(layout.bias_weight_offset(i), K - 1);
  }
  return pre;
}

GaussianParams decode_preactivations(const Eigen::VectorXd& pre, const ParamLayout& layout,
                                     bool strict) {
  if (pre.size() != layout.eta_dim())
    throw DataError("decode_preactivations: vector length does not match layout");
  const int D = layout.feature_dim;
  const int K = layout.n_components;
  const double log_floor = std::log(kVarianceFloor);
  const double log_ceil = std::log(kVarianceCeil);

  GaussianParams g;
  g.n_states = layout.n_states;
  g.n_components = K;
  g.means.resize(layout.n_states * K);
  g.vars.resize(layout.n_states * K);
  g.weights.resize(layout.n_states);
  for (int i = 0; i < layout.n_states; ++i) {
    // softmax over K-1 free logits plus an implicit zero logit
    Eigen::VectorXd logits(K);
    logits.head(K - 1) = pre.segment(layout.weight_offset(i), K - 1);
    logits[K - 1] = 0.0;
    const double m = logits.maxCoeff();
    Eigen::VectorXd w = (logits.array() - m).exp();
    g.weights[i] = w / w.sum();

    for (int j = 0; j < K; ++j) {
      Eigen::VectorXd log_var = pre.segment(layout.var_offset(i, j), D);
      for (int d = 0; d < D; ++d) {
        if (!std::isfinite(log_var[d]))
          throw NumericError("decode_preactivations: non-finite covariance for state " +
                             std::to_string(i) + " component " + std::to_string(j));
        if (log_var[d] < log_floor || log_var[d] > log_ceil) {
          if (strict)
            throw NumericError("decode_preactivations: covariance out of range for state " +
                               std::to_string(i) + " component " + std::to_string(j));
          log_var[d] = std::clamp(log_var[d], log_floor, log_ceil);
        }
      }
      Eigen::VectorXd var = log_var.array().exp();
      g.vars[i * K + j] = var;
      g.means[i * K + j] = var.cwiseProduct(pre.segment(layout.mean_offset(i, j), D));
    }
  }
  return g;
}

GaussianParams decode_unit_params(const Eigen::MatrixXd& W, const Eigen::VectorXd& b,
                                  const Eigen::VectorXd& embedding, const ParamLayout& layout,
                                  bool strict) {
  return decode_preactivations(unit_preactivations(W, b, embedding, layout), layout, strict);
}

HyperPosterior init_hyper_posterior(const SubspaceDims& dims, const Rng& rng,
                                    const InitConfig& init) {
  HyperPosterior h;
  h.dims = dims;
  Rng r = rng.stream(0x48595045);  // hyper block stream
  h.q.omega = init.init_scale * r.normal_vector(h.flat_dim());
  h.q.psi = Eigen::VectorXd::Constant(h.flat_dim(), init.init_log_var);
  return h;
}

LanguagePosterior init_language_posterior(const std::string& language_id, int n_units,
                                          const SubspaceDims& dims, const Rng& rng,
                                          const InitConfig& init) {
  if (n_units < 1) throw DataError("init_language_posterior: need at least one unit");
  LanguagePosterior lp;
  lp.language_id = language_id;
  lp.n_units = n_units;
  lp.hyper_dim = dims.hyper_dim;
  lp.embedding_dim = dims.embedding_dim;
  uint64_t name_key = 0;
  for (char c : language_id) name_key = splitmix64(name_key ^ static_cast<uint8_t>(c));
  Rng r = rng.stream(0x4c414e47, name_key);
  lp.q.omega = init.init_scale * r.normal_vector(lp.flat_dim());
  lp.q.psi = Eigen::VectorXd::Constant(lp.flat_dim(), init.init_log_var);
  return lp;
}

std::pair<HyperPosterior, std::vector<LanguagePosterior>> init_posteriors(
    uint64_t seed, const SubspaceDims& dims,
    const std::vector<std::pair<std::string, int>>& language_units, const InitConfig& init) {
  Rng rng(seed);
  auto hyper = init_hyper_posterior(dims, rng, init);
  std::vector<LanguagePosterior> langs;
  langs.reserve(language_units.size());
  for (const auto& [id, n_units] : language_units)
    langs.push_back(init_language_posterior(id, n_units, dims, rng, init));
  return {std::move(hyper), std::move(langs)};
}

}  // namespace hshmm
