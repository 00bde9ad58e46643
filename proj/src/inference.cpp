// Copyright 2026 The hshmm authors
// Licensed under the Apache License, Version 2.0

#include "hshmm/inference.hpp"

#include <algorithm>
#include <chrono>
#include <cmath>
#include <iostream>
#include <sstream>

namespace hshmm {

namespace {

constexpr uint64_t kHyperEpsKey = 0x48;
constexpr uint64_t kLanguageEpsKey = 0x4C;
constexpr uint64_t kSampleKey = 0x5A4D17;

uint64_t stable_hash(const std::string& s) {
  uint64_t h = 0x9ae16a3b2f90404full;
  for (char c : s) h = splitmix64(h ^ static_cast<uint8_t>(c));
  return h;
}

double half_log_2pi(int d) { return 0.5 * d * std::log(2.0 * M_PI); }

}  // namespace

SufficientStats SufficientStats::zeros(const ParamLayout& layout, int n_units) {
  SufficientStats s;
  s.n_units = n_units;
  s.n_states = layout.n_states;
  s.n_components = layout.n_components;
  s.feature_dim = layout.feature_dim;
  const int n_comp = n_units * layout.n_states * layout.n_components;
  s.N = Eigen::VectorXd::Zero(n_comp);
  s.phi = Eigen::MatrixXd::Zero(n_comp, layout.feature_dim);
  s.phi2 = Eigen::MatrixXd::Zero(n_comp, layout.feature_dim);
  s.unit_counts = Eigen::VectorXd::Zero(n_units);
  return s;
}

void SufficientStats::merge(const SufficientStats& other) {
  if (other.N.size() != N.size() || other.feature_dim != feature_dim)
    throw DataError("SufficientStats::merge: shape mismatch");
  N += other.N;
  phi += other.phi;
  phi2 += other.phi2;
  unit_counts += other.unit_counts;
  n_frames += other.n_frames;
}

EmissionScores expected_log_likelihoods(const std::vector<DecodedModel>& samples,
                                        const FeatureMatrix& features) {
  if (samples.empty()) throw DataError("expected_log_likelihoods: need at least one sample");
  const int S = static_cast<int>(samples.size());
  const int n_units = static_cast<int>(samples[0].size());
  if (n_units == 0) throw DataError("expected_log_likelihoods: no units");
  const int n_states = samples[0][0].n_states;
  const int K = samples[0][0].n_components;
  const int n = features.n_frames();
  const int D = features.dim();
  if (!features.frames.allFinite())
    throw DataError("expected_log_likelihoods: non-finite feature in '" +
                    features.utterance_id + "'");

  Eigen::MatrixXd X = features.frames.cast<double>();

  EmissionScores out;
  out.llh = Eigen::MatrixXd::Zero(n, n_units * n_states);
  out.comp_logdens = Eigen::MatrixXd::Zero(n, n_units * n_states * K);

  Eigen::MatrixXd state_buf(n, K);
  for (const auto& model : samples) {
    if (static_cast<int>(model.size()) != n_units)
      throw DataError("expected_log_likelihoods: samples disagree on unit count");
    for (int u = 0; u < n_units; ++u) {
      const GaussianParams& g = model[u];
      for (int i = 0; i < n_states; ++i) {
        for (int j = 0; j < K; ++j) {
          const Eigen::VectorXd& mean = g.means[g.comp_index(i, j)];
          const Eigen::VectorXd& var = g.vars[g.comp_index(i, j)];
          const double log_norm = std::log(g.weights[i][j]) -
                                  0.5 * var.array().log().sum() - half_log_2pi(D);
          const Eigen::VectorXd inv_var = var.cwiseInverse();
          Eigen::VectorXd quad =
              (X.rowwise() - mean.transpose()).array().square().matrix() * inv_var;
          state_buf.col(j) = (-0.5 * quad).array() + log_norm;
        }
        const int col = u * n_states + i;
        for (int t = 0; t < n; ++t) {
          const auto row = state_buf.row(t);
          const double m = row.maxCoeff();
          out.llh(t, col) += m + std::log((row.array() - m).exp().sum());
        }
        out.comp_logdens.middleCols(col * K, K) += state_buf;
      }
    }
  }
  out.llh /= S;
  out.comp_logdens /= S;
  if (!out.llh.allFinite())
    throw NumericError("expected_log_likelihoods: non-finite score for '" +
                       features.utterance_id + "'");
  return out;
}

FBResult forward_backward(const DecodingGraph& graph, const Eigen::MatrixXd& llh) {
  const int n = static_cast<int>(llh.rows());
  const int ns = graph.n_graph_states();
  if (n < 1) throw DataError("forward_backward: empty utterance");
  for (const auto& st : graph.states)
    if (st.emission >= llh.cols())
      throw DataError("forward_backward: llh matrix misses emission columns");

  // emission scores gathered per graph state
  Eigen::MatrixXd emis(n, ns);
  for (int s = 0; s < ns; ++s) emis.col(s) = llh.col(graph.states[s].emission);

  Eigen::MatrixXd alpha(n, ns), beta(n, ns);
  alpha.row(0) = graph.log_initial.transpose() + emis.row(0);
  for (int t = 1; t < n; ++t) {
    for (int s = 0; s < ns; ++s) {
      double m = kLogZero;
      for (int a : graph.arcs_into[s])
        m = std::max(m, alpha(t - 1, graph.arcs[a].src) + graph.arcs[a].log_prob);
      if (m == kLogZero) {
        alpha(t, s) = kLogZero;
        continue;
      }
      double acc = 0.0;
      for (int a : graph.arcs_into[s])
        acc += std::exp(alpha(t - 1, graph.arcs[a].src) + graph.arcs[a].log_prob - m);
      alpha(t, s) = m + std::log(acc) + emis(t, s);
    }
  }

  double log_z = kLogZero;
  for (int s = 0; s < ns; ++s) log_z = log_add(log_z, alpha(n - 1, s) + graph.log_final[s]);
  if (log_z == kLogZero || !std::isfinite(log_z))
    throw DataError("forward_backward: infeasible alignment (no admissible path)");

  beta.row(n - 1) = graph.log_final.transpose();
  for (int t = n - 2; t >= 0; --t) {
    for (int s = 0; s < ns; ++s) {
      double m = kLogZero;
      for (int a : graph.arcs_from[s]) {
        const auto& arc = graph.arcs[a];
        m = std::max(m, arc.log_prob + emis(t + 1, arc.dst) + beta(t + 1, arc.dst));
      }
      if (m == kLogZero) {
        beta(t, s) = kLogZero;
        continue;
      }
      double acc = 0.0;
      for (int a : graph.arcs_from[s]) {
        const auto& arc = graph.arcs[a];
        acc += std::exp(arc.log_prob + emis(t + 1, arc.dst) + beta(t + 1, arc.dst) - m);
      }
      beta(t, s) = m + std::log(acc);
    }
  }

  FBResult out;
  out.log_marginal = log_z;
  out.posteriors = ((alpha + beta).array() - log_z).exp();
  // states unreachable at a given time keep exact zeros
  out.posteriors = out.posteriors.unaryExpr([](double p) { return std::isfinite(p) ? p : 0.0; });

  out.unit_entry_counts = Eigen::VectorXd::Zero(std::max(graph.n_units, 1));
  for (int s = 0; s < ns; ++s)
    if (graph.log_initial[s] != kLogZero)
      out.unit_entry_counts[graph.states[s].unit] += out.posteriors(0, s);
  for (int t = 1; t < n; ++t) {
    for (const auto& arc : graph.arcs) {
      if (!arc.unit_entry) continue;
      const double v = alpha(t - 1, arc.src) + arc.log_prob + emis(t, arc.dst) +
                       beta(t, arc.dst) - log_z;
      if (v != kLogZero)
        out.unit_entry_counts[graph.states[arc.dst].unit] += std::exp(v);
    }
  }
  return out;
}

Eigen::MatrixXd compute_responsibilities(const DecodingGraph& graph, const FBResult& fb,
                                         const EmissionScores& scores) {
  const int n = static_cast<int>(scores.llh.rows());
  const int n_emissions = static_cast<int>(scores.llh.cols());
  const int K = static_cast<int>(scores.comp_logdens.cols()) / n_emissions;
  Eigen::MatrixXd gamma = Eigen::MatrixXd::Zero(n, scores.comp_logdens.cols());
  Eigen::VectorXd w(K);
  for (int t = 0; t < n; ++t) {
    for (int s = 0; s < graph.n_graph_states(); ++s) {
      const double p = fb.posteriors(t, s);
      if (p <= 0.0) continue;
      const int base = graph.states[s].emission * K;
      const auto logd = scores.comp_logdens.row(t).segment(base, K);
      const double m = logd.maxCoeff();
      w = (logd.array() - m).exp();
      w /= w.sum();
      gamma.row(t).segment(base, K) += p * w.transpose();
    }
  }
  return gamma;
}

SufficientStats accumulate_stats(const Eigen::MatrixXd& responsibilities,
                                 const FeatureMatrix& features, const ParamLayout& layout,
                                 int n_units) {
  const int n = features.n_frames();
  if (responsibilities.rows() != n)
    throw DataError("accumulate_stats: responsibility rows do not match frames");
  if (responsibilities.cols() != n_units * layout.n_states * layout.n_components)
    throw DataError("accumulate_stats: responsibility columns do not match layout");
  if ((responsibilities.array() < 0).any())
    throw DataError("accumulate_stats: negative responsibility");

  Eigen::MatrixXd X = features.frames.cast<double>();
  SufficientStats s = SufficientStats::zeros(layout, n_units);
  s.N = responsibilities.colwise().sum();
  s.phi = responsibilities.transpose() * X;
  s.phi2 = responsibilities.transpose() * X.array().square().matrix();
  s.n_frames = n;
  return s;
}

// --- empirical ELBO ---------------------------------------------------------

namespace {

Eigen::VectorXd block_eps(const Rng& rng, uint64_t block, uint64_t key, int s, int dim) {
  Rng r = rng.stream(block, key, static_cast<uint64_t>(s));
  return r.normal_vector(dim);
}

// Data term of Eq.-style per-component sums for one language and one joint
// sample, plus gradients with respect to the flat samples.
double language_data_term(const SufficientStats& stats, const HyperPosterior& hyper,
                          const Eigen::VectorXd& hyper_flat, const LanguagePosterior& lang,
                          const Eigen::VectorXd& lang_flat, bool strict, bool want_grads,
                          bool update_hyper, Eigen::VectorXd* d_lang_flat,
                          Eigen::VectorXd* d_hyper_flat) {
  const ParamLayout& layout = hyper.dims.layout;
  const int D = layout.feature_dim;
  const int K = layout.n_components;
  const int P = layout.eta_dim();
  const int E = hyper.dims.embedding_dim;
  const double log_floor = std::log(kVarianceFloor);
  const double log_ceil = std::log(kVarianceCeil);

  if (stats.n_units != lang.n_units || stats.feature_dim != D)
    throw DataError("empirical_elbo: stats shape does not match posteriors");

  const Eigen::VectorXd alpha = lang.alpha_view(lang_flat);
  SubspaceSample sub = compose_subspace(hyper, hyper_flat, alpha);

  Eigen::MatrixXd grad_W;
  Eigen::VectorXd grad_b;
  if (want_grads) {
    grad_W = Eigen::MatrixXd::Zero(P, E);
    grad_b = Eigen::VectorXd::Zero(layout.bias_dim());
  }

  double data = 0.0;
  Eigen::VectorXd g_pre(P);
  for (int u = 0; u < lang.n_units; ++u) {
    const Eigen::VectorXd e = lang.embedding_view(lang_flat, u);
    Eigen::VectorXd pre = unit_preactivations(sub.W, sub.b, e, layout);
    if (want_grads) g_pre.setZero();

    for (int i = 0; i < layout.n_states; ++i) {
      Eigen::VectorXd logits(K);
      logits.head(K - 1) = pre.segment(layout.weight_offset(i), K - 1);
      logits[K - 1] = 0.0;
      const double lmax = logits.maxCoeff();
      Eigen::VectorXd pi = (logits.array() - lmax).exp();
      pi /= pi.sum();

      double n_state = 0.0;
      for (int j = 0; j < K; ++j) {
        const int c = stats.comp_index(u, i, j);
        const double nc = stats.N[c];
        n_state += nc;

        Eigen::VectorXd s_pre = pre.segment(layout.var_offset(i, j), D);
        Eigen::Array<bool, Eigen::Dynamic, 1> clamped(D);
        for (int d = 0; d < D; ++d) {
          clamped[d] = s_pre[d] < log_floor || s_pre[d] > log_ceil;
          if (clamped[d]) {
            if (strict)
              throw NumericError("empirical_elbo: covariance out of range at unit " +
                                 std::to_string(u) + " state " + std::to_string(i) +
                                 " component " + std::to_string(j));
            s_pre[d] = std::clamp(s_pre[d], log_floor, log_ceil);
          }
        }
        const Eigen::VectorXd exp_s = s_pre.array().exp();
        const Eigen::VectorXd inv_s = (-s_pre.array()).exp();
        const Eigen::VectorXd r = pre.segment(layout.mean_offset(i, j), D);
        const auto phi_c = stats.phi.row(c).transpose();
        const auto phi2_c = stats.phi2.row(c).transpose();

        const double term = nc * std::log(pi[j]) - 0.5 * nc * s_pre.sum() -
                            0.5 * nc * (exp_s.array() * r.array().square()).sum() +
                            phi_c.dot(r) - 0.5 * phi2_c.dot(inv_s) -
                            nc * half_log_2pi(D);
        if (!std::isfinite(term))
          throw NumericError("empirical_elbo: non-finite term at unit " + std::to_string(u) +
                             " state " + std::to_string(i) + " component " + std::to_string(j));
        data += term;

        if (want_grads) {
          g_pre.segment(layout.mean_offset(i, j), D) =
              phi_c - nc * exp_s.cwiseProduct(r);
          Eigen::VectorXd g_s = -0.5 * nc *
                                    (Eigen::VectorXd::Ones(D) +
                                     exp_s.cwiseProduct(r.cwiseProduct(r))) +
                                0.5 * phi2_c.cwiseProduct(inv_s);
          for (int d = 0; d < D; ++d)
            if (clamped[d]) g_s[d] = 0.0;
          g_pre.segment(layout.var_offset(i, j), D) = g_s;
        }
      }
      if (want_grads) {
        for (int k = 0; k < K - 1; ++k)
          g_pre[layout.weight_offset(i) + k] =
              stats.N[stats.comp_index(u, i, k)] - n_state * pi[k];
      }
    }

    if (want_grads) {
      d_lang_flat->segment(lang.embedding_offset(u), E) += sub.W.transpose() * g_pre;
      grad_W.noalias() += g_pre * e.transpose();
      for (int i = 0; i < layout.n_states; ++i) {
        for (int j = 0; j < K; ++j) {
          grad_b.segment(layout.bias_mean_offset(i), D) +=
              g_pre.segment(layout.mean_offset(i, j), D);
          grad_b.segment(layout.bias_var_offset(i), D) +=
              g_pre.segment(layout.var_offset(i, j), D);
        }
        grad_b.segment(layout.bias_weight_offset(i), K - 1) +=
            g_pre.segment(layout.weight_offset(i), K - 1);
      }
    }
  }

  if (want_grads) {
    auto d_alpha = d_lang_flat->segment(lang.alpha_offset(), lang.hyper_dim);
    for (int k = 0; k < hyper.dims.hyper_dim; ++k) {
      d_alpha[k] += hyper.base_view(hyper_flat, k + 1).cwiseProduct(grad_W).sum() +
                    hyper.bias_view(hyper_flat, k + 1).dot(grad_b);
    }
    if (update_hyper && d_hyper_flat) {
      const int pb = layout.bias_dim();
      Eigen::Map<Eigen::MatrixXd>(d_hyper_flat->data() + hyper.base_offset(0), P, E) += grad_W;
      d_hyper_flat->segment(hyper.bias_offset(0), pb) += grad_b;
      for (int k = 0; k < hyper.dims.hyper_dim; ++k) {
        Eigen::Map<Eigen::MatrixXd>(d_hyper_flat->data() + hyper.base_offset(k + 1), P, E) +=
            alpha[k] * grad_W;
        d_hyper_flat->segment(hyper.bias_offset(k + 1), pb) += alpha[k] * grad_b;
      }
    }
  }
  return data;
}

void subtract_kl_gradients(const Eigen::Ref<const Eigen::VectorXd>& omega,
                           const Eigen::Ref<const Eigen::VectorXd>& psi, double sigma,
                           Eigen::Ref<Eigen::VectorXd> grad_omega,
                           Eigen::Ref<Eigen::VectorXd> grad_psi) {
  const double s2 = sigma * sigma;
  grad_omega -= omega / s2;
  grad_psi.array() -= 0.5 * (psi.array().exp() / s2 - 1.0);
}

}  // namespace

std::vector<DecodedModel> sample_decoded_models(const ModelPosteriors& posteriors,
                                                int language_index, int n_samples,
                                                const Rng& sample_rng, bool strict) {
  const auto& hyper = posteriors.hyper;
  const auto& lang = posteriors.languages.at(language_index);
  const uint64_t lang_key = stable_hash(lang.language_id);
  std::vector<DecodedModel> out;
  out.reserve(n_samples);
  for (int s = 0; s < n_samples; ++s) {
    Eigen::VectorXd hyper_flat = sample_posterior(
        hyper.q, block_eps(sample_rng, kHyperEpsKey, 0, s, hyper.flat_dim()));
    Eigen::VectorXd lang_flat = sample_posterior(
        lang.q, block_eps(sample_rng, kLanguageEpsKey, lang_key, s, lang.flat_dim()));
    SubspaceSample sub = compose_subspace(hyper, hyper_flat, lang.alpha_view(lang_flat));
    DecodedModel model;
    model.reserve(lang.n_units);
    for (int u = 0; u < lang.n_units; ++u)
      model.push_back(decode_unit_params(sub.W, sub.b, lang.embedding_view(lang_flat, u),
                                         hyper.dims.layout, strict));
    out.push_back(std::move(model));
  }
  return out;
}

ElboResult empirical_elbo(const std::vector<LanguageStats>& language_stats,
                          const ModelPosteriors& posteriors, const PriorConfig& priors,
                          const ElboOptions& options, const Rng& sample_rng) {
  if (options.n_samples < 1) throw DataError("empirical_elbo: need at least one sample");
  const auto& hyper = posteriors.hyper;
  const int S = options.n_samples;

  ElboResult res;
  res.report.language_terms.reserve(language_stats.size());
  for (const auto& ls : language_stats)
    res.report.language_terms.emplace_back(
        posteriors.languages.at(ls.language_index).language_id, 0.0);

  const bool grads = options.want_gradients;
  if (grads) {
    res.grads.hyper_omega = Eigen::VectorXd::Zero(hyper.flat_dim());
    res.grads.hyper_psi = Eigen::VectorXd::Zero(hyper.flat_dim());
    for (const auto& ls : language_stats) {
      const auto& lang = posteriors.languages[ls.language_index];
      res.grads.languages.emplace_back(Eigen::VectorXd::Zero(lang.flat_dim()),
                                       Eigen::VectorXd::Zero(lang.flat_dim()));
    }
  }

  Eigen::VectorXd d_hyper_flat;
  for (int s = 0; s < S; ++s) {
    const Eigen::VectorXd eps_h =
        block_eps(sample_rng, kHyperEpsKey, 0, s, hyper.flat_dim());
    const Eigen::VectorXd hyper_flat = sample_posterior(hyper.q, eps_h);
    if (grads && options.update_hyper) d_hyper_flat = Eigen::VectorXd::Zero(hyper.flat_dim());

    for (size_t li = 0; li < language_stats.size(); ++li) {
      const auto& lang = posteriors.languages[language_stats[li].language_index];
      const Eigen::VectorXd eps_l = block_eps(sample_rng, kLanguageEpsKey,
                                              stable_hash(lang.language_id), s, lang.flat_dim());
      const Eigen::VectorXd lang_flat = sample_posterior(lang.q, eps_l);
      Eigen::VectorXd d_lang_flat;
      if (grads) d_lang_flat = Eigen::VectorXd::Zero(lang.flat_dim());

      const double data = language_data_term(
          *language_stats[li].stats, hyper, hyper_flat, lang, lang_flat, options.strict, grads,
          options.update_hyper, grads ? &d_lang_flat : nullptr,
          grads && options.update_hyper ? &d_hyper_flat : nullptr);
      res.report.language_terms[li].second += data / S;

      if (grads) {
        auto& [g_omega, g_psi] = res.grads.languages[li];
        g_omega += d_lang_flat / S;
        g_psi.array() += (0.5 / S) * d_lang_flat.array() * eps_l.array() *
                         (lang.q.psi.array() / 2.0).exp();
      }
    }
    if (grads && options.update_hyper) {
      res.grads.hyper_omega += d_hyper_flat / S;
      res.grads.hyper_psi.array() += (0.5 / S) * d_hyper_flat.array() * eps_h.array() *
                                     (hyper.q.psi.array() / 2.0).exp();
    }
  }

  // exact KL terms (they do not depend on the samples)
  const int bases_len = hyper.n_bases() * hyper.base_size();
  const int biases_len = hyper.flat_dim() - bases_len;
  res.report.kl_m =
      kl_diag_gaussian(hyper.q.omega.head(bases_len), hyper.q.psi.head(bases_len), priors.sigma_M) +
      kl_diag_gaussian(hyper.q.omega.tail(biases_len), hyper.q.psi.tail(biases_len), priors.sigma_m);
  for (size_t li = 0; li < language_stats.size(); ++li) {
    const auto& lang = posteriors.languages[language_stats[li].language_index];
    const int kh = lang.hyper_dim;
    const int rest = lang.flat_dim() - kh;
    res.report.kl_theta +=
        kl_diag_gaussian(lang.q.omega.head(kh), lang.q.psi.head(kh), priors.sigma_alpha) +
        kl_diag_gaussian(lang.q.omega.tail(rest), lang.q.psi.tail(rest), priors.sigma_e);
    if (grads) {
      auto& [g_omega, g_psi] = res.grads.languages[li];
      subtract_kl_gradients(lang.q.omega.head(kh), lang.q.psi.head(kh), priors.sigma_alpha,
                            g_omega.head(kh), g_psi.head(kh));
      subtract_kl_gradients(lang.q.omega.tail(rest), lang.q.psi.tail(rest), priors.sigma_e,
                            g_omega.tail(rest), g_psi.tail(rest));
    }
  }
  if (grads && options.update_hyper) {
    subtract_kl_gradients(hyper.q.omega.head(bases_len), hyper.q.psi.head(bases_len),
                          priors.sigma_M, res.grads.hyper_omega.head(bases_len),
                          res.grads.hyper_psi.head(bases_len));
    subtract_kl_gradients(hyper.q.omega.tail(biases_len), hyper.q.psi.tail(biases_len),
                          priors.sigma_m, res.grads.hyper_omega.tail(biases_len),
                          res.grads.hyper_psi.tail(biases_len));
  }

  res.report.total = res.report.data_term() - res.report.kl_theta - res.report.kl_m;
  if (!std::isfinite(res.report.total))
    throw NumericError("empirical_elbo: non-finite ELBO");
  return res;
}

void adam_step(Eigen::VectorXd& params, const Eigen::VectorXd& grad, AdamState& state,
               double learning_rate, const AdamConfig& config) {
  if (grad.size() != params.size()) throw DataError("adam_step: gradient shape mismatch");
  if (state.m.size() != params.size()) {
    state.m = Eigen::VectorXd::Zero(params.size());
    state.v = Eigen::VectorXd::Zero(params.size());
    state.t = 0;
  }
  state.t += 1;
  state.m = config.beta1 * state.m + (1.0 - config.beta1) * grad;
  state.v = config.beta2 * state.v + (1.0 - config.beta2) * grad.array().square().matrix();
  const double bc1 = 1.0 - std::pow(config.beta1, static_cast<double>(state.t));
  const double bc2 = 1.0 - std::pow(config.beta2, static_cast<double>(state.t));
  params.array() += learning_rate * (state.m.array() / bc1) /
                    ((state.v.array() / bc2).sqrt() + config.epsilon);
}

// --- training drivers --------------------------------------------------------

namespace {

struct EStepTask {
  const FeatureMatrix* features = nullptr;
  const DecodingGraph* graph = nullptr;
  std::string utterance_id;
};

struct EStepOutcome {
  SufficientStats stats;
  double log_marginal_sum = 0.0;
  int n_skipped = 0;
};

EStepOutcome run_estep(const std::vector<EStepTask>& tasks,
                       const std::vector<DecodedModel>& decoded, const ParamLayout& layout,
                       int n_units, int n_threads, bool skip_infeasible) {
  struct Slot {
    SufficientStats stats;
    double log_marginal = 0.0;
    bool ok = false;
    std::string error;
  };
  std::vector<Slot> slots(tasks.size());
  parallel_for(static_cast<int>(tasks.size()), n_threads, [&](int idx) {
    const auto& task = tasks[idx];
    try {
      EmissionScores scores = expected_log_likelihoods(decoded, *task.features);
      FBResult fb = forward_backward(*task.graph, scores.llh);
      Eigen::MatrixXd gamma = compute_responsibilities(*task.graph, fb, scores);
      slots[idx].stats = accumulate_stats(gamma, *task.features, layout, n_units);
      slots[idx].stats.unit_counts = fb.unit_entry_counts;
      slots[idx].log_marginal = fb.log_marginal;
      slots[idx].ok = true;
    } catch (const DataError& err) {
      if (!skip_infeasible) throw;
      slots[idx].error = err.what();
    }
  });

  EStepOutcome out;
  out.stats = SufficientStats::zeros(layout, n_units);
  for (size_t i = 0; i < slots.size(); ++i) {
    if (!slots[i].ok) {
      ++out.n_skipped;
      std::cerr << "warning: skipping utterance '" << tasks[i].utterance_id
                << "': " << slots[i].error << "\n";
      continue;
    }
    out.stats.merge(slots[i].stats);
    out.log_marginal_sum += slots[i].log_marginal;
  }
  return out;
}

Rng sample_stream(uint64_t seed, bool crn, int iteration, int step) {
  return Rng(seed).stream(kSampleKey, crn ? 0 : static_cast<uint64_t>(iteration),
                          crn ? 0 : static_cast<uint64_t>(step));
}

double seconds_since(const std::chrono::steady_clock::time_point& t0) {
  return std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
}

}  // namespace

Checkpoint train_supervised(std::vector<SupervisedCorpus> corpora, const SubspaceDims& dims,
                            const TrainConfig& config, const TrainLogger& logger) {
  if (corpora.empty()) throw DataError("train_supervised: no source corpora");
  SubspaceDims d = dims;
  for (auto& corpus : corpora) {
    if (corpus.features.empty())
      throw DataError("train_supervised: empty corpus for language '" + corpus.language_id + "'");
    if (corpus.transcripts.empty())
      throw DataError("train_supervised: no transcripts for language '" + corpus.language_id + "'");
    if (corpus.token_to_unit.empty()) {
      // unit ids in sorted token order, for reproducibility
      std::vector<std::string> all;
      for (const auto& [id, tokens] : corpus.transcripts)
        all.insert(all.end(), tokens.begin(), tokens.end());
      std::sort(all.begin(), all.end());
      all.erase(std::unique(all.begin(), all.end()), all.end());
      int next = 0;
      for (const auto& tok : all) corpus.token_to_unit[tok] = next++;
    }
    const int dim = corpus.features.begin()->second.dim();
    if (d.layout.feature_dim == 0) d.layout.feature_dim = dim;
    if (dim != d.layout.feature_dim)
      throw DataError("train_supervised: feature dim mismatch across corpora");
  }

  // posterior initialization
  std::vector<std::pair<std::string, int>> language_units;
  for (const auto& corpus : corpora)
    language_units.emplace_back(corpus.language_id,
                                static_cast<int>(corpus.token_to_unit.size()));
  auto [hyper, languages] = init_posteriors(config.seed, d, language_units, config.init);
  ModelPosteriors post{std::move(hyper), std::move(languages)};

  // per-utterance alignment graphs
  std::vector<std::vector<DecodingGraph>> graphs(corpora.size());
  std::vector<std::vector<EStepTask>> tasks(corpora.size());
  for (size_t c = 0; c < corpora.size(); ++c) {
    const auto& corpus = corpora[c];
    std::vector<std::pair<const std::string*, const FeatureMatrix*>> usable;
    for (const auto& [utt, feats] : corpus.features) {
      auto tr = corpus.transcripts.find(utt);
      if (tr == corpus.transcripts.end() || tr->second.empty()) {
        std::cerr << "warning: no transcript for utterance '" << utt << "', skipping\n";
        continue;
      }
      usable.emplace_back(&utt, &feats);
    }
    graphs[c].reserve(usable.size());
    for (const auto& [utt, feats] : usable) {
      graphs[c].push_back(build_alignment_graph(corpus.transcripts.at(*utt),
                                                corpus.token_to_unit, d.layout,
                                                config.self_loop_prob));
      tasks[c].push_back({feats, &graphs[c].back(), *utt});
    }
  }

  const int n_threads = resolve_thread_count(config.n_threads);
  AdamState adam_hyper_omega, adam_hyper_psi;
  std::vector<std::pair<AdamState, AdamState>> adam_langs(corpora.size());

  std::vector<SufficientStats> stats;
  for (int iter = 1; iter <= config.em_iterations; ++iter) {
    const auto t0 = std::chrono::steady_clock::now();
    const Rng estep_rng = sample_stream(config.seed, config.common_random_numbers, iter, 0);

    // E-step
    stats.assign(corpora.size(), SufficientStats{});
    ElboReport report;
    report.iteration = iter;
    for (size_t c = 0; c < corpora.size(); ++c) {
      auto decoded = sample_decoded_models(post, static_cast<int>(c), config.n_samples,
                                           estep_rng, config.strict_numerics);
      auto outcome = run_estep(tasks[c], decoded, d.layout, post.languages[c].n_units,
                               n_threads, /*skip_infeasible=*/true);
      if (outcome.stats.n_frames == 0)
        throw DataError("train_supervised: no usable utterances for language '" +
                        corpora[c].language_id + "'");
      report.language_terms.emplace_back(corpora[c].language_id, outcome.log_marginal_sum);
      stats[c] = std::move(outcome.stats);
    }

    std::vector<LanguageStats> lang_stats;
    for (size_t c = 0; c < corpora.size(); ++c)
      lang_stats.push_back({static_cast<int>(c), &stats[c]});

    // report the bound with the posteriors that produced the E-step
    {
      ElboOptions opts{config.n_samples, true, config.strict_numerics, false};
      auto kl_only = empirical_elbo(lang_stats, post, config.priors, opts, estep_rng);
      report.kl_theta = kl_only.report.kl_theta;
      report.kl_m = kl_only.report.kl_m;
      report.total = report.data_term() - report.kl_theta - report.kl_m;
    }

    // M-step
    ElboOptions opts{config.n_samples, true, config.strict_numerics, true};
    for (int g = 0; g < config.grad_steps; ++g) {
      const Rng rng_g = sample_stream(config.seed, config.common_random_numbers, iter, 1 + g);
      auto res = empirical_elbo(lang_stats, post, config.priors, opts, rng_g);
      adam_step(post.hyper.q.omega, res.grads.hyper_omega, adam_hyper_omega,
                config.learning_rate);
      adam_step(post.hyper.q.psi, res.grads.hyper_psi, adam_hyper_psi, config.learning_rate);
      for (size_t c = 0; c < corpora.size(); ++c) {
        adam_step(post.languages[c].q.omega, res.grads.languages[c].first,
                  adam_langs[c].first, config.learning_rate);
        adam_step(post.languages[c].q.psi, res.grads.languages[c].second,
                  adam_langs[c].second, config.learning_rate);
      }
    }

    if (logger) logger({iter, report, seconds_since(t0)});
  }

  Checkpoint ck;
  ck.dims = d;
  ck.priors = config.priors;
  ck.hyper = std::move(post.hyper);
  ck.languages = std::move(post.languages);
  return ck;
}

Checkpoint train_unsupervised(const FeatureMap& target_features,
                              const std::string& target_language_id, int truncation,
                              const Checkpoint& base, const TrainConfig& config,
                              const TrainLogger& logger) {
  if (target_features.empty()) throw DataError("train_unsupervised: empty target corpus");
  const SubspaceDims& d = base.dims;
  for (const auto& [utt, feats] : target_features)
    if (feats.dim() != d.layout.feature_dim)
      throw DataError("train_unsupervised: feature dim mismatch vs checkpoint (got " +
                      std::to_string(feats.dim()) + ", expected " +
                      std::to_string(d.layout.feature_dim) + ")");

  ModelPosteriors post{base.hyper, base.languages};
  int ti = -1;
  for (size_t i = 0; i < post.languages.size(); ++i)
    if (post.languages[i].language_id == target_language_id) ti = static_cast<int>(i);
  if (ti < 0) {
    post.languages.push_back(init_language_posterior(target_language_id, truncation, d,
                                                     Rng(config.seed), config.init));
    ti = static_cast<int>(post.languages.size()) - 1;
  } else {
    post.languages[ti] = init_language_posterior(target_language_id, truncation, d,
                                                 Rng(config.seed), config.init);
  }

  PhoneLoop loop = make_phone_loop(truncation, config.concentration);
  const int n_threads = resolve_thread_count(config.n_threads);
  AdamState adam_omega, adam_psi;

  for (int iter = 1; iter <= config.em_iterations; ++iter) {
    const auto t0 = std::chrono::steady_clock::now();
    const Rng estep_rng = sample_stream(config.seed, config.common_random_numbers, iter, 0);

    DecodingGraph graph = build_phone_loop_graph(
        truncation, d.layout, stick_breaking_expected_log_weights(loop), config.self_loop_prob);
    std::vector<EStepTask> tasks;
    tasks.reserve(target_features.size());
    for (const auto& [utt, feats] : target_features) tasks.push_back({&feats, &graph, utt});

    auto decoded =
        sample_decoded_models(post, ti, config.n_samples, estep_rng, config.strict_numerics);
    auto outcome =
        run_estep(tasks, decoded, d.layout, truncation, n_threads, /*skip_infeasible=*/true);
    if (outcome.stats.n_frames == 0)
      throw DataError("train_unsupervised: no usable utterances in target corpus");

    SufficientStats stats = std::move(outcome.stats);
    std::vector<LanguageStats> lang_stats{{ti, &stats}};

    ElboReport report;
    report.iteration = iter;
    report.language_terms.emplace_back(target_language_id, outcome.log_marginal_sum);
    {
      ElboOptions opts{config.n_samples, false, config.strict_numerics, false};
      auto kl_only = empirical_elbo(lang_stats, post, config.priors, opts, estep_rng);
      report.kl_theta = kl_only.report.kl_theta;
      report.kl_m = kl_only.report.kl_m;
      report.total = report.data_term() - report.kl_theta - report.kl_m;
    }

    ElboOptions opts{config.n_samples, false, config.strict_numerics, true};
    for (int g = 0; g < config.grad_steps; ++g) {
      const Rng rng_g = sample_stream(config.seed, config.common_random_numbers, iter, 1 + g);
      auto res = empirical_elbo(lang_stats, post, config.priors, opts, rng_g);
      adam_step(post.languages[ti].q.omega, res.grads.languages[0].first, adam_omega,
                config.learning_rate);
      adam_step(post.languages[ti].q.psi, res.grads.languages[0].second, adam_psi,
                config.learning_rate);
    }

    loop = update_stick_breaking(loop, stats.unit_counts);
    if (logger) logger({iter, report, seconds_since(t0)});
  }

  Checkpoint out;
  out.dims = base.dims;
  out.priors = base.priors;
  out.hyper = base.hyper;  // transferred as-is, never touched above
  out.languages = std::move(post.languages);
  out.phone_loops = base.phone_loops;
  out.phone_loops[target_language_id] = loop;
  return out;
}

}  // namespace hshmm
