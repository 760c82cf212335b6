#pragma once

#include <cstdint>
#include <span>
#include <string_view>
#include <vector>

namespace qrmlab::numkit {

// Stable 64-bit combiner for deriving sub-seeds; mix_seed(s, i) != s for
// practical purposes and distinct tags give unrelated streams.
std::uint64_t mix_seed(std::uint64_t seed, std::uint64_t tag);

// FNV-1a, for hashing experiment-kind labels into stream tags.
std::uint64_t hash64(std::string_view s);

// Seeded random stream with cheap independent-stream derivation.
//
// Each (seed, stream_id) pair selects a key; outputs are a strong 64-bit
// mix of (key ^ counter), so streams derived from one master seed never
// share state and can be handed to different tasks. Single-owner: do not
// share one stream across concurrent tasks.
class RngStream {
 public:
  RngStream(std::uint64_t seed, std::uint64_t stream_id);

  std::uint64_t seed() const { return seed_; }
  std::uint64_t stream_id() const { return stream_id_; }

  std::uint64_t next_u64();
  // Uniform on the open interval (0, 1); never returns 0 or 1.
  double uniform01();
  // Standard normal via Marsaglia's polar method (one spare cached).
  double normal();

 private:
  std::uint64_t seed_;
  std::uint64_t stream_id_;
  std::uint64_t key_;
  std::uint64_t counter_ = 0;
  double spare_ = 0.0;
  bool has_spare_ = false;
};

// A quantile level with two interchangeable encodings: a plain probability,
// or ln(1-alpha) for levels too close to 1 to represent in double
// (e.g. ln(1-alpha) = -1000). Exactly one encoding is active.
class AlphaLevel {
 public:
  static AlphaLevel probability(double alpha);        // alpha in [0, 1]
  static AlphaLevel log_one_minus(double log1m);      // log1m <= 0

  bool is_log_form() const { return is_log_; }

  // Probability value. In log form this is -expm1(log1m), which rounds to
  // 1.0 once 1-alpha underflows; use log_one_minus_alpha() in the tail.
  double alpha() const;
  // ln(1-alpha); exact for the probability form whenever alpha < 1.
  double log_one_minus_alpha() const;

 private:
  AlphaLevel(double v, bool is_log) : value_(v), is_log_(is_log) {}
  double value_;
  bool is_log_;
};

// Standard normal CDF, |error| <= 1e-12. Throws std::domain_error on
// non-finite input.
double std_normal_cdf(double x);

double std_normal_pdf(double x);

// ln of the standard normal survival function P(Z > x), valid for any
// finite x including far tails where erfc underflows.
double std_normal_log_sf(double x);

// Inverse standard normal CDF.
//
// Rational approximation (Acklam) plus one Newton polish step; relative
// error <= 1e-9. For extreme levels, ln(1-alpha) < -100, switches to the
// asymptotic form sqrt(-2 ln(1-alpha)). Throws std::domain_error for
// alpha in {0, 1} given in the probability form.
double std_normal_icdf(const AlphaLevel& a);
inline double std_normal_icdf(double alpha) {
  return std_normal_icdf(AlphaLevel::probability(alpha));
}

// ln(1-alpha) at which std_normal_icdf switches to the asymptotic branch.
inline constexpr double kIcdfAsymptoticSwitch = -100.0;

double sample_normal(RngStream& rng, double mean, double std);
// exp of a normal draw; sigma is the standard deviation of the underlying
// normal, not its variance.
double sample_lognormal(RngStream& rng, double mu, double sigma);
bool sample_bernoulli(RngStream& rng, double p);

struct SummaryStats {
  double mean;
  double sample_std;  // m-1 denominator; 0 for a single value
  double median;
  double iqr;         // linear-interpolation (type-7) quartiles
  double median_pairwise_distance;
};

SummaryStats summary_stats(std::span<const double> values);

// Type-7 quantile of already-sorted values (linear interpolation between
// order statistics), p in [0, 1].
double sorted_quantile_type7(std::span<const double> sorted, double p);

}  // namespace qrmlab::numkit
