#pragma once

#include <array>
#include <cstdint>
#include <initializer_list>
#include <limits>

#include <Eigen/Dense>

namespace hetlmm::rng {

/// Philox4x32 with 10 rounds: a keyed bijection on 128-bit counters.
/// Output depends only on (key, counter), so draws never depend on the
/// order in which parallel workers consume streams.
class Philox4x32 {
 public:
  using Counter = std::array<std::uint32_t, 4>;
  using Key = std::array<std::uint32_t, 2>;

  static Counter block(Counter counter, Key key);
};

/// Mix a seed with an ordered list of stream identifiers into a 64-bit key.
std::uint64_t derive_key(std::uint64_t seed, std::initializer_list<std::uint64_t> stream_ids);

/// A keyed stream of 32-bit words produced by Philox in counter mode.
/// Satisfies UniformRandomBitGenerator; the normal sampler below is
/// implemented here so that draws are identical across standard libraries.
class CounterRng {
 public:
  using result_type = std::uint32_t;

  explicit CounterRng(std::uint64_t key);
  CounterRng(std::uint64_t seed, std::initializer_list<std::uint64_t> stream_ids);

  static constexpr result_type min() { return 0; }
  static constexpr result_type max() { return std::numeric_limits<result_type>::max(); }

  result_type operator()();

  std::uint64_t next_u64();
  /// Uniform on [0, 1) with 53 bits of resolution.
  double uniform();
  /// Uniform on (lo, hi).
  double uniform(double lo, double hi);
  /// Standard normal via Box-Muller.
  double normal();
  bool bernoulli(double p);
  /// Uniform integer in [0, n).
  std::uint64_t below(std::uint64_t n);

  Eigen::MatrixXd normal_matrix(Eigen::Index rows, Eigen::Index cols);
  Eigen::VectorXd normal_vector(Eigen::Index size);

 private:
  void refill();

  Philox4x32::Key key_{};
  std::uint64_t counter_ = 0;
  Philox4x32::Counter buffer_{};
  int used_ = 4;
  bool has_spare_normal_ = false;
  double spare_normal_ = 0.0;
};

}  // namespace hetlmm::rng
