// Copyright 2026 The hshmm authors
// Licensed under the Apache License, Version 2.0

#pragma once

#include <Eigen/Dense>
#include <cmath>
#include <cstdint>
#include <functional>
#include <limits>
#include <stdexcept>
#include <string>
#include <vector>

namespace hshmm {

// Malformed or inconsistent input data (files, shapes, ids).
struct DataError : std::runtime_error {
  using std::runtime_error::runtime_error;
};

// Numerical failure (non-finite values, overflow past the covariance range).
struct NumericError : std::runtime_error {
  using std::runtime_error::runtime_error;
};

inline constexpr double kLogZero = -std::numeric_limits<double>::infinity();

inline double log_add(double a, double b) {
  if (a == kLogZero) return b;
  if (b == kLogZero) return a;
  if (a < b) std::swap(a, b);
  return a + std::log1p(std::exp(b - a));
}

double log_sum_exp(const Eigen::VectorXd& v);

// Digamma via upward recurrence plus the asymptotic series.
double digamma(double x);

// --- Counter-based RNG -----------------------------------------------------
//
// All stochastic code derives its draws from (seed, stream keys) so that a
// fixed seed reproduces a run bit-exactly regardless of evaluation order or
// thread count.

uint64_t splitmix64(uint64_t x);

class Rng {
 public:
  explicit Rng(uint64_t seed) : state_(splitmix64(seed ^ 0x9e3779b97f4a7c15ull)) {}

  // Sub-stream addressed by up to three keys.
  Rng stream(uint64_t a, uint64_t b = 0, uint64_t c = 0) const {
    uint64_t s = state_;
    s = splitmix64(s ^ splitmix64(a + 0x1000000001ull));
    s = splitmix64(s ^ splitmix64(b + 0x2000000002ull));
    s = splitmix64(s ^ splitmix64(c + 0x3000000003ull));
    return Rng(FromState{}, s);
  }

  uint64_t next_u64() {
    state_ += 0x9e3779b97f4a7c15ull;
    return splitmix64(state_);
  }

  // Uniform in (0, 1).
  double uniform() {
    return (static_cast<double>(next_u64() >> 11) + 0.5) * 0x1.0p-53;
  }

  // Standard normal (Box-Muller, no cached spare so streams stay stateless).
  double normal() {
    double u1 = uniform();
    double u2 = uniform();
    return std::sqrt(-2.0 * std::log(u1)) * std::cos(2.0 * M_PI * u2);
  }

  Eigen::VectorXd normal_vector(int n) {
    Eigen::VectorXd v(n);
    for (int i = 0; i < n; ++i) v[i] = normal();
    return v;
  }

  int categorical(const Eigen::VectorXd& probs) {
    double u = uniform();
    double acc = 0.0;
    for (int i = 0; i < probs.size(); ++i) {
      acc += probs[i];
      if (u < acc) return i;
    }
    return static_cast<int>(probs.size()) - 1;
  }

 private:
  struct FromState {};
  Rng(FromState, uint64_t s) : state_(s) {}
  uint64_t state_;
};

// Runs fn(i) for i in [0, n) on up to n_threads threads. Results must be
// written to disjoint slots; merging afterwards in index order keeps runs
// deterministic.
void parallel_for(int n, int n_threads, const std::function<void(int)>& fn);

int resolve_thread_count(int configured);

// Hex SHA-256 of a byte buffer.
std::string sha256_hex(const std::vector<uint8_t>& bytes);

}  // namespace hshmm
