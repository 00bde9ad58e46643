// Copyright 2026 The hshmm authors
// Licensed under the Apache License, Version 2.0

#include "hshmm/synthgen.hpp"

#include <cmath>

namespace hshmm {

namespace {

constexpr uint64_t kWorldKey = 0x574f524c;
constexpr uint64_t kUttKey = 0x55545453;

}  // namespace

std::string synth_unit_label(int unit, int n_units) {
  std::string num = std::to_string(unit);
  const size_t width = std::to_string(n_units - 1).size();
  while (num.size() < width) num.insert(num.begin(), '0');
  return "p" + num;
}

SynthWorld sample_world(const SynthSpec& spec) {
  if (spec.n_true_units < 1) throw DataError("sample_world: need at least one unit");
  if (spec.feature_dim < 1) throw DataError("sample_world: feature dim must be positive");
  if (spec.min_frames < 1 || spec.max_frames < spec.min_frames)
    throw DataError("sample_world: bad frame length range");

  const ParamLayout layout = spec.layout();
  const int P = layout.eta_dim();
  const int Pb = layout.bias_dim();

  SynthWorld world;
  world.spec = spec;

  Rng rng = Rng(spec.seed).stream(kWorldKey);
  for (int k = 0; k <= spec.hyper_dim; ++k) {
    Rng rk = rng.stream(1, k);
    Eigen::VectorXd flat = spec.priors.sigma_M * rk.normal_vector(P * spec.embedding_dim);
    world.bases.push_back(
        Eigen::Map<const Eigen::MatrixXd>(flat.data(), P, spec.embedding_dim));
    world.biases.push_back(spec.priors.sigma_m * rk.normal_vector(Pb));
  }

  for (size_t l = 0; l < spec.languages.size(); ++l) {
    Rng rl = rng.stream(2, l);
    SyntheticLanguage lang;
    lang.language_id = spec.languages[l];
    lang.alpha = spec.priors.sigma_alpha * rl.normal_vector(spec.hyper_dim);
    SubspaceSample sub = compose_subspace(world.bases, world.biases, lang.alpha);
    for (int u = 0; u < spec.n_true_units; ++u) {
      lang.embeddings.push_back(spec.priors.sigma_e * rl.normal_vector(spec.embedding_dim));
      lang.units.push_back(decode_unit_params(sub.W, sub.b, lang.embeddings.back(), layout));
    }
    world.languages.push_back(std::move(lang));
  }
  return world;
}

SyntheticCorpus generate_corpus(const SynthWorld& world, int language_index) {
  const SynthSpec& spec = world.spec;
  if (language_index < 0 || language_index >= static_cast<int>(world.languages.size()))
    throw DataError("generate_corpus: bad language index");
  const SyntheticLanguage& lang = world.languages[language_index];
  const int D = spec.feature_dim;

  SyntheticCorpus corpus;
  corpus.language_id = lang.language_id;

  for (int utt = 0; utt < spec.n_utterances; ++utt) {
    Rng rng = Rng(spec.seed).stream(kUttKey, static_cast<uint64_t>(language_index),
                                    static_cast<uint64_t>(utt));
    const int length = spec.min_frames +
                       static_cast<int>(rng.next_u64() %
                                        static_cast<uint64_t>(spec.max_frames - spec.min_frames + 1));

    Eigen::MatrixXf frames(length, D);
    std::vector<AlignSegment> segments;
    std::vector<std::string> tokens;

    int t = 0;
    while (t < length) {
      const int unit = static_cast<int>(rng.next_u64() %
                                        static_cast<uint64_t>(spec.n_true_units));
      const int seg_start = t;
      const GaussianParams& g = lang.units[unit];
      for (int state = 0; state < spec.n_states && t < length; ++state) {
        // geometric dwell: emit, then keep self-looping
        do {
          const int comp = rng.categorical(g.weights[state]);
          const auto& mean = g.means[g.comp_index(state, comp)];
          const auto& var = g.vars[g.comp_index(state, comp)];
          for (int dd = 0; dd < D; ++dd)
            frames(t, dd) =
                static_cast<float>(mean[dd] + std::sqrt(var[dd]) * rng.normal());
          ++t;
        } while (t < length && rng.uniform() < spec.self_loop_prob);
      }
      const std::string label = synth_unit_label(unit, spec.n_true_units);
      segments.push_back({seg_start * spec.frame_shift_ms, t * spec.frame_shift_ms, label});
      tokens.push_back(label);
    }

    const std::string utt_id =
        lang.language_id + "_utt" + std::to_string(utt);
    FeatureMatrix fm;
    fm.utterance_id = utt_id;
    fm.frames = std::move(frames);
    fm.frame_shift_ms = spec.frame_shift_ms;
    corpus.features.emplace(utt_id, std::move(fm));
    corpus.alignments.emplace(utt_id, std::move(segments));
    corpus.transcripts.emplace(utt_id, std::move(tokens));
  }
  return corpus;
}

SyntheticCorpus generate_corpus(const SynthSpec& spec) {
  return generate_corpus(sample_world(spec), 0);
}

// --- brute-force oracles ------------------------------------------------------

namespace {

void check_budget(const DecodingGraph& graph, const Eigen::MatrixXd& llh) {
  if (llh.rows() > 8)
    throw DataError("brute force oracle: more than 8 frames exceeds the enumeration budget");
  if (graph.n_graph_states() > 12)
    throw DataError("brute force oracle: more than 12 states exceeds the enumeration budget");
}

// Enumerates arc sequences (parallel arcs between the same state pair count
// as distinct paths). The leaf receives the state path, the taken arc ids and
// the total path score.
template <typename Leaf>
void enumerate_paths(const DecodingGraph& graph, const Eigen::MatrixXd& llh,
                     std::vector<int>& path, std::vector<int>& arc_ids, double acc,
                     const Leaf& leaf) {
  const int n = static_cast<int>(llh.rows());
  const int t = static_cast<int>(path.size()) - 1;
  const int s = path.back();
  if (t == n - 1) {
    const double total = acc + graph.log_final[s];
    if (total != kLogZero) leaf(path, arc_ids, total);
    return;
  }
  for (int a : graph.arcs_from[s]) {
    const auto& arc = graph.arcs[a];
    const double next =
        acc + arc.log_prob + llh(t + 1, graph.states[arc.dst].emission);
    if (next == kLogZero) continue;
    path.push_back(arc.dst);
    arc_ids.push_back(a);
    enumerate_paths(graph, llh, path, arc_ids, next, leaf);
    path.pop_back();
    arc_ids.pop_back();
  }
}

template <typename Leaf>
void for_each_path(const DecodingGraph& graph, const Eigen::MatrixXd& llh, const Leaf& leaf) {
  std::vector<int> path, arc_ids;
  for (int s = 0; s < graph.n_graph_states(); ++s) {
    if (graph.log_initial[s] == kLogZero) continue;
    const double acc = graph.log_initial[s] + llh(0, graph.states[s].emission);
    if (acc == kLogZero) continue;
    path.assign(1, s);
    arc_ids.clear();
    enumerate_paths(graph, llh, path, arc_ids, acc, leaf);
  }
}

}  // namespace

BruteForceMarginals brute_force_marginals(const DecodingGraph& graph,
                                          const Eigen::MatrixXd& llh) {
  check_budget(graph, llh);
  const int n = static_cast<int>(llh.rows());
  const int ns = graph.n_graph_states();

  Eigen::MatrixXd buckets = Eigen::MatrixXd::Constant(n, ns, kLogZero);
  double log_z = kLogZero;
  Eigen::MatrixXd entry_buckets = Eigen::MatrixXd::Constant(n, ns, kLogZero);

  for_each_path(graph, llh,
                [&](const std::vector<int>& path, const std::vector<int>& arc_ids, double total) {
                  log_z = log_add(log_z, total);
                  for (int t = 0; t < n; ++t)
                    buckets(t, path[t]) = log_add(buckets(t, path[t]), total);
                  entry_buckets(0, path[0]) = log_add(entry_buckets(0, path[0]), total);
                  for (size_t k = 0; k < arc_ids.size(); ++k)
                    if (graph.arcs[arc_ids[k]].unit_entry) {
                      const int t = static_cast<int>(k) + 1;
                      entry_buckets(t, path[t]) = log_add(entry_buckets(t, path[t]), total);
                    }
                });
  if (log_z == kLogZero)
    throw DataError("brute_force_marginals: no admissible path");

  BruteForceMarginals out;
  out.log_marginal = log_z;
  out.posteriors = (buckets.array() - log_z).exp();
  out.posteriors = out.posteriors.unaryExpr([](double p) { return std::isfinite(p) ? p : 0.0; });
  out.unit_entry_counts = Eigen::VectorXd::Zero(std::max(graph.n_units, 1));
  for (int t = 0; t < n; ++t)
    for (int s = 0; s < ns; ++s)
      if (entry_buckets(t, s) != kLogZero)
        out.unit_entry_counts[graph.states[s].unit] += std::exp(entry_buckets(t, s) - log_z);
  return out;
}

BruteForceBestPath brute_force_best_path(const DecodingGraph& graph,
                                         const Eigen::MatrixXd& llh) {
  check_budget(graph, llh);
  BruteForceBestPath best;
  for_each_path(graph, llh,
                [&](const std::vector<int>& path, const std::vector<int>&, double total) {
                  if (total > best.score) {
                    best.score = total;
                    best.path = path;
                  }
                });
  if (best.path.empty())
    throw DataError("brute_force_best_path: no admissible path");
  return best;
}

}  // namespace hshmm
