#pragma once

#include <cstdint>
#include <functional>
#include <span>

#include <Eigen/Dense>

namespace ggfa {

// logsumexp with max shift; -inf for empty input.
double logsumexp(std::span<const double> v);
double logsumexp(const Eigen::VectorXd& v);

// log(1 + e^a) without overflow.
double softplus(double a);

// log sigm(a) = -softplus(-a).
double log_sigmoid(double a);

// Standard normal CDF and its inverse (quantile). The quantile uses a
// rational approximation polished with one Halley step; |rel err| < 1e-14
// away from the tails.
double normal_cdf(double x);
double normal_quantile(double p);

// SplitMix64 step; used to derive independent seeds from (seed, index).
std::uint64_t splitmix64(std::uint64_t x);
std::uint64_t derived_seed(std::uint64_t seed, std::uint64_t index);

// Compensated (Kahan) accumulator.
class KahanSum {
 public:
  void add(double v) {
    double y = v - comp_;
    double t = sum_ + y;
    comp_ = (t - sum_) - y;
    sum_ = t;
  }
  double value() const { return sum_; }

 private:
  double sum_ = 0.0;
  double comp_ = 0.0;
};

// Runs fn(0..n-1), with up to n_threads workers when n_threads > 1.
// Tasks must be independent; the first exception thrown is rethrown
// on the calling thread after all workers finish.
void parallel_for(int n, int n_threads, const std::function<void(int)>& fn);

}  // namespace ggfa
