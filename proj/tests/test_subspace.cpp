#include <doctest.h>

#include <cmath>

#include "hshmm/subspace.hpp"

using namespace hshmm;

TEST_CASE("sample_posterior reparameterization") {
  VariationalGaussian q{Eigen::VectorXd::LinSpaced(4, 1.0, 4.0),
                        Eigen::VectorXd::Zero(4)};
  CHECK(sample_posterior(q, Eigen::VectorXd::Zero(4)).isApprox(q.omega));
  CHECK(sample_posterior(q, Eigen::VectorXd::Ones(4))
            .isApprox(q.omega + Eigen::VectorXd::Ones(4)));
  CHECK_THROWS_AS(sample_posterior(q, Eigen::VectorXd::Zero(3)), DataError);
}

TEST_CASE("sample_posterior empirical variance matches exp(psi)") {
  VariationalGaussian q{Eigen::VectorXd::Zero(1), Eigen::VectorXd::Constant(1, 0.7)};
  Rng rng(99);
  Rng s = rng.stream(0);
  const int n = 100000;
  double sum = 0.0, sumsq = 0.0;
  for (int i = 0; i < n; ++i) {
    const double x = sample_posterior(q, s.normal_vector(1))[0];
    sum += x;
    sumsq += x * x;
  }
  const double mean = sum / n;
  const double var = sumsq / n - mean * mean;
  CHECK(var == doctest::Approx(std::exp(0.7)).epsilon(0.05));
}

TEST_CASE("kl_diag_gaussian closed-form values") {
  VariationalGaussian standard{Eigen::VectorXd::Zero(3), Eigen::VectorXd::Zero(3)};
  CHECK(kl_diag_gaussian(standard, 1.0) == doctest::Approx(0.0));

  VariationalGaussian shifted{Eigen::VectorXd::Ones(1), Eigen::VectorXd::Zero(1)};
  CHECK(kl_diag_gaussian(shifted, 1.0) == doctest::Approx(0.5));

  // q = N(0, e), sigma = 1 -> (e - 2) / 2
  VariationalGaussian wide{Eigen::VectorXd::Zero(1), Eigen::VectorXd::Ones(1)};
  CHECK(kl_diag_gaussian(wide, 1.0) == doctest::Approx(0.5 * (std::exp(1.0) - 2.0)));

  CHECK_THROWS_AS(kl_diag_gaussian(standard, 0.0), DataError);
  CHECK_THROWS_AS(kl_diag_gaussian(standard, -1.0), DataError);
}

TEST_CASE("kl_diag_gaussian is nonnegative, zero only at the prior") {
  Rng rng(4);
  for (int trial = 0; trial < 50; ++trial) {
    Rng s = rng.stream(trial);
    VariationalGaussian q{s.normal_vector(5), s.normal_vector(5)};
    const double sigma = std::exp(0.3 * s.normal());
    CHECK(kl_diag_gaussian(q, sigma) >= 0.0);
  }
  VariationalGaussian prior{Eigen::VectorXd::Zero(2),
                            Eigen::VectorXd::Constant(2, std::log(4.0))};
  CHECK(kl_diag_gaussian(prior, 2.0) == doctest::Approx(0.0));
}

namespace {

std::pair<std::vector<Eigen::MatrixXd>, std::vector<Eigen::VectorXd>> random_bases(
    const ParamLayout& layout, int hyper_dim, int embedding_dim, Rng& rng) {
  std::vector<Eigen::MatrixXd> bases;
  std::vector<Eigen::VectorXd> biases;
  for (int k = 0; k <= hyper_dim; ++k) {
    Eigen::VectorXd flat = rng.normal_vector(layout.eta_dim() * embedding_dim);
    bases.push_back(
        Eigen::Map<const Eigen::MatrixXd>(flat.data(), layout.eta_dim(), embedding_dim));
    biases.push_back(rng.normal_vector(layout.bias_dim()));
  }
  return {bases, biases};
}

}  // namespace

TEST_CASE("compose_subspace: alpha = 0 recovers the bias basis") {
  ParamLayout layout{2, 3, 4};
  Rng rng(8);
  Rng s = rng.stream(0);
  auto [bases, biases] = random_bases(layout, 2, 4, s);
  SubspaceSample sub = compose_subspace(bases, biases, Eigen::VectorXd::Zero(2));
  CHECK(sub.W.isApprox(bases[0]));
  CHECK(sub.b.isApprox(biases[0]));
}

TEST_CASE("compose_subspace: single basis selection and linearity") {
  ParamLayout layout{2, 3, 4};
  Rng rng(9);
  Rng s = rng.stream(0);
  auto [bases, biases] = random_bases(layout, 1, 3, s);
  auto zero_bases = bases;
  auto zero_biases = biases;
  zero_bases[0].setZero();
  zero_biases[0].setZero();
  Eigen::VectorXd one = Eigen::VectorXd::Ones(1);
  SubspaceSample sel = compose_subspace(zero_bases, zero_biases, one);
  CHECK(sel.W.isApprox(bases[1]));

  // linearity in alpha: compose(2a) - compose(a) = compose with zeroed M0, m0
  auto [b2, bi2] = random_bases(layout, 3, 4, s);
  Eigen::VectorXd alpha = s.normal_vector(3);
  SubspaceSample at1 = compose_subspace(b2, bi2, alpha);
  SubspaceSample at2 = compose_subspace(b2, bi2, 2.0 * alpha);
  auto nb = b2;
  auto nbi = bi2;
  nb[0].setZero();
  nbi[0].setZero();
  SubspaceSample diff = compose_subspace(nb, nbi, alpha);
  CHECK((at2.W - at1.W).isApprox(diff.W, 1e-12));
  CHECK((at2.b - at1.b).isApprox(diff.b, 1e-12));

  CHECK_THROWS_AS(compose_subspace(b2, bi2, Eigen::VectorXd::Zero(2)), DataError);
}

TEST_CASE("decode_unit_params: softmax weights") {
  ParamLayout layout{2, 3, 4};
  const int E = 3;
  Eigen::MatrixXd W = Eigen::MatrixXd::Zero(layout.eta_dim(), E);
  Eigen::VectorXd b = Eigen::VectorXd::Zero(layout.bias_dim());
  Eigen::VectorXd e = Eigen::VectorXd::Zero(E);

  GaussianParams uniform = decode_unit_params(W, b, e, layout);
  for (int i = 0; i < 3; ++i) {
    CHECK(uniform.weights[i].size() == 4);
    for (int j = 0; j < 4; ++j) CHECK(uniform.weights[i][j] == doctest::Approx(0.25));
  }

  // logits (ln 2, 0, 0) -> (0.4, 0.2, 0.2, 0.2): denominator 2 + 1 + 1 + 1
  b[layout.bias_weight_offset(1)] = std::log(2.0);
  GaussianParams skewed = decode_unit_params(W, b, e, layout);
  CHECK(skewed.weights[1][0] == doctest::Approx(0.4).epsilon(1e-12));
  CHECK(skewed.weights[1][1] == doctest::Approx(0.2).epsilon(1e-12));
  CHECK(skewed.weights[1][3] == doctest::Approx(0.2).epsilon(1e-12));
  CHECK(skewed.weights[0][0] == doctest::Approx(0.25));
}

TEST_CASE("decode_unit_params: identity covariance and mean pass-through") {
  // zero variance pre-activation -> Sigma = I; mean = Sigma * v = v
  ParamLayout layout{3, 3, 4};
  const int E = 2;
  Eigen::MatrixXd W = Eigen::MatrixXd::Zero(layout.eta_dim(), E);
  Eigen::VectorXd b = Eigen::VectorXd::Zero(layout.bias_dim());
  Eigen::VectorXd v(3);
  v << 0.5, -1.5, 2.0;
  for (int i = 0; i < 3; ++i) b.segment(layout.bias_mean_offset(i), 3) = v;
  GaussianParams g = decode_unit_params(W, b, Eigen::VectorXd::Zero(E), layout);
  for (int i = 0; i < 3; ++i)
    for (int j = 0; j < 4; ++j) {
      CHECK(g.vars[g.comp_index(i, j)].isApprox(Eigen::VectorXd::Ones(3)));
      CHECK(g.means[g.comp_index(i, j)].isApprox(v));
    }
}

TEST_CASE("decode_unit_params: weights normalize and covariances stay positive") {
  ParamLayout layout{2, 3, 4};
  Rng rng(21);
  for (int trial = 0; trial < 30; ++trial) {
    Rng s = rng.stream(trial);
    Eigen::VectorXd wflat = 3.0 * s.normal_vector(layout.eta_dim() * 4);
    Eigen::MatrixXd W = Eigen::Map<const Eigen::MatrixXd>(wflat.data(), layout.eta_dim(), 4);
    Eigen::VectorXd b = 3.0 * s.normal_vector(layout.bias_dim());
    Eigen::VectorXd e = s.normal_vector(4);
    GaussianParams g = decode_unit_params(W, b, e, layout);
    for (int i = 0; i < 3; ++i) {
      CHECK(g.weights[i].sum() == doctest::Approx(1.0).epsilon(1e-12));
      for (int j = 0; j < 4; ++j) {
        CHECK((g.vars[g.comp_index(i, j)].array() > 0).all());
        CHECK(g.vars[g.comp_index(i, j)].allFinite());
      }
    }
  }
}

TEST_CASE("decode_unit_params: strict mode raises on clamped covariance") {
  ParamLayout layout{2, 3, 4};
  Eigen::MatrixXd W = Eigen::MatrixXd::Zero(layout.eta_dim(), 2);
  Eigen::VectorXd b = Eigen::VectorXd::Zero(layout.bias_dim());
  b[layout.bias_var_offset(0)] = 100.0;  // exp(100) above the ceiling
  Eigen::VectorXd e = Eigen::VectorXd::Zero(2);
  GaussianParams clamped = decode_unit_params(W, b, e, layout, false);
  CHECK(clamped.vars[0][0] == doctest::Approx(kVarianceCeil));
  CHECK_THROWS_WITH_AS(decode_unit_params(W, b, e, layout, true),
                       doctest::Contains("component 0"), NumericError);
}

TEST_CASE("init_posteriors determinism and scale") {
  SubspaceDims dims{{2, 3, 4}, 2, 4};
  auto [h1, langs1] = init_posteriors(7, dims, {{"aa", 3}, {"bb", 5}});
  auto [h2, langs2] = init_posteriors(7, dims, {{"aa", 3}, {"bb", 5}});
  CHECK(h1.q.omega == h2.q.omega);
  CHECK(langs1[1].q.omega == langs2[1].q.omega);
  CHECK(langs1[0].language_id == "aa");
  CHECK(langs1[0].flat_dim() == 2 + 3 * 4);

  auto [h3, langs3] = init_posteriors(8, dims, {{"aa", 3}});
  CHECK(h3.q.omega != h1.q.omega);

  InitConfig zero{0.0, std::log(1e-2)};
  auto [h4, langs4] = init_posteriors(7, dims, {{"aa", 3}}, zero);
  CHECK(h4.q.omega.cwiseAbs().maxCoeff() == 0.0);
  CHECK(h4.q.psi[0] == doctest::Approx(std::log(1e-2)));

  // default dims carry the published embedding sizes
  SubspaceDims defaults{{39, 3, 4}};
  CHECK(defaults.embedding_dim == 100);
  CHECK(defaults.hyper_dim == 6);
}
