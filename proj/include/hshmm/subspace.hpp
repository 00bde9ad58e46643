// Copyright 2026 The hshmm authors
// Licensed under the Apache License, Version 2.0

#pragma once

#include <string>
#include <vector>

#include "hshmm/common.hpp"
#include "hshmm/model.hpp"

namespace hshmm {

// Diagonal Gaussian variational posterior: mean omega, log-variance psi.
struct VariationalGaussian {
  Eigen::VectorXd omega;
  Eigen::VectorXd psi;

  int dim() const { return static_cast<int>(omega.size()); }
};

// Reparameterized draw: omega + exp(psi/2) .* eps.
Eigen::VectorXd sample_posterior(const VariationalGaussian& q, const Eigen::VectorXd& eps);

// KL( N(omega, exp(psi)) || N(0, sigma^2 I) ), summed over coordinates.
double kl_diag_gaussian(const VariationalGaussian& q, double prior_sigma);
double kl_diag_gaussian(const Eigen::Ref<const Eigen::VectorXd>& omega,
                        const Eigen::Ref<const Eigen::VectorXd>& psi, double prior_sigma);
// d KL / d omega and d KL / d psi, accumulated into the given segments.
void add_kl_gradients(const Eigen::Ref<const Eigen::VectorXd>& omega,
                      const Eigen::Ref<const Eigen::VectorXd>& psi, double prior_sigma,
                      Eigen::Ref<Eigen::VectorXd> grad_omega,
                      Eigen::Ref<Eigen::VectorXd> grad_psi);

// Standard deviations of the zero-mean Gaussian priors.
struct PriorConfig {
  double sigma_alpha = 1.0;
  double sigma_M = 1.0;
  double sigma_m = 1.0;
  double sigma_e = 1.0;
};

struct SubspaceDims {
  ParamLayout layout;
  int hyper_dim = 6;      // |alpha|
  int embedding_dim = 100;  // |e|

  bool operator==(const SubspaceDims&) const = default;
};

// Variational posterior over the hyper-subspace: bases M_0..M_K (eta_dim x E)
// and biases m_0..m_K (bias_dim), stored as one flat (omega, psi) pair.
// Bases come first, column-major, then biases.
struct HyperPosterior {
  SubspaceDims dims;
  VariationalGaussian q;

  int n_bases() const { return dims.hyper_dim + 1; }
  int base_size() const { return dims.layout.eta_dim() * dims.embedding_dim; }
  int base_offset(int k) const { return k * base_size(); }
  int bias_offset(int k) const { return n_bases() * base_size() + k * dims.layout.bias_dim(); }
  int flat_dim() const { return n_bases() * (base_size() + dims.layout.bias_dim()); }

  Eigen::Map<const Eigen::MatrixXd> base_view(const Eigen::VectorXd& flat, int k) const {
    return {flat.data() + base_offset(k), dims.layout.eta_dim(), dims.embedding_dim};
  }
  Eigen::Map<const Eigen::VectorXd> bias_view(const Eigen::VectorXd& flat, int k) const {
    return {flat.data() + bias_offset(k), dims.layout.bias_dim()};
  }
};

// Variational posterior over one language: alpha then the U unit embeddings,
// as one flat (omega, psi) pair.
struct LanguagePosterior {
  std::string language_id;
  int n_units = 0;
  int hyper_dim = 0;
  int embedding_dim = 0;
  VariationalGaussian q;

  int alpha_offset() const { return 0; }
  int embedding_offset(int unit) const { return hyper_dim + unit * embedding_dim; }
  int flat_dim() const { return hyper_dim + n_units * embedding_dim; }

  Eigen::Map<const Eigen::VectorXd> alpha_view(const Eigen::VectorXd& flat) const {
    return {flat.data() + alpha_offset(), hyper_dim};
  }
  Eigen::Map<const Eigen::VectorXd> embedding_view(const Eigen::VectorXd& flat, int unit) const {
    return {flat.data() + embedding_offset(unit), embedding_dim};
  }
};

// One concrete subspace: W = M_0 + sum_k alpha_k M_k, b = m_0 + sum_k alpha_k m_k.
struct SubspaceSample {
  Eigen::MatrixXd W;  // eta_dim x embedding_dim
  Eigen::VectorXd b;  // bias_dim
};

SubspaceSample compose_subspace(const std::vector<Eigen::MatrixXd>& bases,
                                const std::vector<Eigen::VectorXd>& biases,
                                const Eigen::VectorXd& alpha);

// Composes directly from a flat hyper-subspace sample.
SubspaceSample compose_subspace(const HyperPosterior& hyper, const Eigen::VectorXd& hyper_flat,
                                const Eigen::VectorXd& alpha);

inline constexpr double kVarianceFloor = 1e-8;
inline constexpr double kVarianceCeil = 1e8;

// The f(.) mapping: pre-activations W e + b to valid GMM parameters.
// Mixture weights use K-1 free logits with an implicit last logit of zero;
// covariances are Diag(exp(.)) clamped to [kVarianceFloor, kVarianceCeil];
// means are Sigma * (W_mu e + b_mu). In strict mode a clamped covariance
// raises NumericError naming the offending component instead.
GaussianParams decode_unit_params(const Eigen::MatrixXd& W, const Eigen::VectorXd& b,
                                  const Eigen::VectorXd& embedding, const ParamLayout& layout,
                                  bool strict = false);

// Pre-activation vector W e + b expanded to eta_dim (bias broadcast across
// the mixture components of each state).
Eigen::VectorXd unit_preactivations(const Eigen::MatrixXd& W, const Eigen::VectorXd& b,
                                    const Eigen::VectorXd& embedding, const ParamLayout& layout);

// Decode from an eta-sized pre-activation vector.
GaussianParams decode_preactivations(const Eigen::VectorXd& pre, const ParamLayout& layout,
                                     bool strict = false);

struct InitConfig {
  double init_scale = 0.1;            // stddev of the initial posterior means
  double init_log_var = std::log(1e-2);  // initial log-variance
};

HyperPosterior init_hyper_posterior(const SubspaceDims& dims, const Rng& rng,
                                    const InitConfig& init = {});
LanguagePosterior init_language_posterior(const std::string& language_id, int n_units,
                                          const SubspaceDims& dims, const Rng& rng,
                                          const InitConfig& init = {});

// Posteriors for the hyper-subspace and one language per entry of
// `language_units` = (language id, unit count); deterministic in the seed.
std::pair<HyperPosterior, std::vector<LanguagePosterior>> init_posteriors(
    uint64_t seed, const SubspaceDims& dims,
    const std::vector<std::pair<std::string, int>>& language_units,
    const InitConfig& init = {});

}  // namespace hshmm
