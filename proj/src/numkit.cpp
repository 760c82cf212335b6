#include "qrmlab/numkit.hpp"

#include <algorithm>
#include <cmath>
#include <stdexcept>

namespace qrmlab::numkit {

namespace {

constexpr std::uint64_t kGamma = 0x9e3779b97f4a7c15ULL;

// Stafford "mix13" finalizer.
std::uint64_t mix64(std::uint64_t z) {
  z = (z ^ (z >> 30)) * 0xbf58476d1ce4e5b9ULL;
  z = (z ^ (z >> 27)) * 0x94d049bb133111ebULL;
  return z ^ (z >> 31);
}

}  // namespace

std::uint64_t mix_seed(std::uint64_t seed, std::uint64_t tag) {
  return mix64(seed + kGamma) ^ mix64(tag + 0x94d049bb133111ebULL);
}

std::uint64_t hash64(std::string_view s) {
  std::uint64_t h = 0xcbf29ce484222325ULL;
  for (unsigned char c : s) {
    h ^= c;
    h *= 0x100000001b3ULL;
  }
  return h;
}

RngStream::RngStream(std::uint64_t seed, std::uint64_t stream_id)
    : seed_(seed),
      stream_id_(stream_id),
      key_(mix64(seed + kGamma) ^ mix64(stream_id + 0xd1b54a32d192ed03ULL)) {}

std::uint64_t RngStream::next_u64() {
  counter_ += kGamma;
  return mix64(key_ ^ counter_);
}

double RngStream::uniform01() {
  // 53 random bits, offset by half an ulp so the result stays in (0,1).
  return (static_cast<double>(next_u64() >> 11) + 0.5) * 0x1.0p-53;
}

double RngStream::normal() {
  if (has_spare_) {
    has_spare_ = false;
    return spare_;
  }
  double u, v, s;
  do {
    u = 2.0 * uniform01() - 1.0;
    v = 2.0 * uniform01() - 1.0;
    s = u * u + v * v;
  } while (s >= 1.0 || s == 0.0);
  const double f = std::sqrt(-2.0 * std::log(s) / s);
  spare_ = v * f;
  has_spare_ = true;
  return u * f;
}

AlphaLevel AlphaLevel::probability(double alpha) {
  if (!(alpha >= 0.0 && alpha <= 1.0)) {
    throw std::domain_error("AlphaLevel: probability must be in [0, 1]");
  }
  return AlphaLevel(alpha, false);
}

AlphaLevel AlphaLevel::log_one_minus(double log1m) {
  if (!(log1m <= 0.0)) {
    throw std::domain_error("AlphaLevel: log(1-alpha) must be <= 0");
  }
  return AlphaLevel(log1m, true);
}

double AlphaLevel::alpha() const {
  return is_log_ ? -std::expm1(value_) : value_;
}

double AlphaLevel::log_one_minus_alpha() const {
  return is_log_ ? value_ : std::log1p(-value_);
}

double std_normal_cdf(double x) {
  if (!std::isfinite(x)) {
    throw std::domain_error("std_normal_cdf: non-finite input");
  }
  return 0.5 * std::erfc(-x * M_SQRT1_2);
}

double std_normal_pdf(double x) {
  static const double kInvSqrt2Pi = 1.0 / std::sqrt(2.0 * M_PI);
  return kInvSqrt2Pi * std::exp(-0.5 * x * x);
}

double std_normal_log_sf(double x) {
  if (x < 36.0) {
    // erfc stays well above the underflow threshold here.
    return std::log(0.5 * std::erfc(x * M_SQRT1_2));
  }
  // Asymptotic series for the Mills ratio; at x = 36 the truncation error
  // is far below 1e-12 relative.
  const double x2 = x * x;
  const double series =
      std::log1p(-1.0 / x2 + 3.0 / (x2 * x2) - 15.0 / (x2 * x2 * x2));
  return -0.5 * x2 - std::log(x) - 0.5 * std::log(2.0 * M_PI) + series;
}

namespace {

// Acklam's rational approximation to the inverse normal CDF.
double acklam_icdf(double p) {
  static constexpr double a[6] = {-3.969683028665376e+01, 2.209460984245205e+02,
                                  -2.759285104469687e+02, 1.383577518672690e+02,
                                  -3.066479806614716e+01, 2.506628277459239e+00};
  static constexpr double b[5] = {-5.447609879822406e+01, 1.615858368580409e+02,
                                  -1.556989798598866e+02, 6.680131188771972e+01,
                                  -1.328068155288572e+01};
  static constexpr double c[6] = {-7.784894002430293e-03, -3.223964580411365e-01,
                                  -2.400758277161838e+00, -2.549732539343734e+00,
                                  4.374664141464968e+00,  2.938163982698783e+00};
  static constexpr double d[4] = {7.784695709041462e-03, 3.224671290700398e-01,
                                  2.445134137142996e+00, 3.754408661907416e+00};
  constexpr double p_low = 0.02425;

  if (p < p_low) {
    const double q = std::sqrt(-2.0 * std::log(p));
    return (((((c[0] * q + c[1]) * q + c[2]) * q + c[3]) * q + c[4]) * q + c[5]) /
           ((((d[0] * q + d[1]) * q + d[2]) * q + d[3]) * q + 1.0);
  }
  if (p > 1.0 - p_low) {
    const double q = std::sqrt(-2.0 * std::log1p(-p));
    return -(((((c[0] * q + c[1]) * q + c[2]) * q + c[3]) * q + c[4]) * q + c[5]) /
           ((((d[0] * q + d[1]) * q + d[2]) * q + d[3]) * q + 1.0);
  }
  const double q = p - 0.5;
  const double r = q * q;
  return (((((a[0] * r + a[1]) * r + a[2]) * r + a[3]) * r + a[4]) * r + a[5]) * q /
         (((((b[0] * r + b[1]) * r + b[2]) * r + b[3]) * r + b[4]) * r + 1.0);
}

// Inverse survival function for a tail probability given as log_p = ln(p),
// p < 0.5. Rational start from log_p (no cancellation), then one Newton
// step carried out in log space so it stays stable arbitrarily deep in the
// tail.
double tail_isf_from_log(double log_p) {
  static constexpr double c[6] = {-7.784894002430293e-03, -3.223964580411365e-01,
                                  -2.400758277161838e+00, -2.549732539343734e+00,
                                  4.374664141464968e+00,  2.938163982698783e+00};
  static constexpr double d[4] = {7.784695709041462e-03, 3.224671290700398e-01,
                                  2.445134137142996e+00, 3.754408661907416e+00};
  const double q = std::sqrt(-2.0 * log_p);
  double x = -(((((c[0] * q + c[1]) * q + c[2]) * q + c[3]) * q + c[4]) * q + c[5]) /
             ((((d[0] * q + d[1]) * q + d[2]) * q + d[3]) * q + 1.0);
  // d/dx ln SF(x) = -pdf/SF, so the Newton step is
  // x += (lnSF(x) - log_p) * SF/pdf; form the Mills ratio in log space.
  const double log_sf = std_normal_log_sf(x);
  const double log_pdf = -0.5 * x * x - 0.5 * std::log(2.0 * M_PI);
  x += (log_sf - log_p) * std::exp(log_sf - log_pdf);
  return x;
}

}  // namespace

double std_normal_icdf(const AlphaLevel& a) {
  if (!a.is_log_form()) {
    const double p = a.alpha();
    if (!(p > 0.0 && p < 1.0)) {
      throw std::domain_error(
          "std_normal_icdf: probability form requires alpha in (0, 1); use the "
          "log form for alpha -> 1");
    }
  } else if (!(a.log_one_minus_alpha() < 0.0)) {
    throw std::domain_error("std_normal_icdf: requires log(1-alpha) < 0");
  }
  const double log1m = a.log_one_minus_alpha();
  if (log1m < kIcdfAsymptoticSwitch) {
    return std::sqrt(-2.0 * log1m);
  }
  if (a.is_log_form()) {
    return tail_isf_from_log(log1m);
  }
  const double alpha = a.alpha();
  if (alpha > 1.0 - 1e-10) {
    return tail_isf_from_log(std::log1p(-alpha));
  }
  if (alpha < 1e-10) {
    return -tail_isf_from_log(std::log(alpha));
  }
  double x = acklam_icdf(alpha);
  // One Newton polish step against the erfc-based CDF; in the tails use
  // the matching-tail residual to avoid cancellation.
  if (alpha > 0.5) {
    const double sf = 0.5 * std::erfc(x * M_SQRT1_2);
    x += (sf - (1.0 - alpha)) / std_normal_pdf(x);
  } else {
    const double cdf = 0.5 * std::erfc(-x * M_SQRT1_2);
    x -= (cdf - alpha) / std_normal_pdf(x);
  }
  return x;
}

double sample_normal(RngStream& rng, double mean, double std) {
  if (!(std >= 0.0)) {
    throw std::domain_error("sample_normal: std must be >= 0");
  }
  return mean + std * rng.normal();
}

double sample_lognormal(RngStream& rng, double mu, double sigma) {
  if (!(sigma >= 0.0)) {
    throw std::domain_error("sample_lognormal: sigma must be >= 0");
  }
  return std::exp(sample_normal(rng, mu, sigma));
}

bool sample_bernoulli(RngStream& rng, double p) {
  if (!(p >= 0.0 && p <= 1.0)) {
    throw std::domain_error("sample_bernoulli: p must be in [0, 1]");
  }
  return rng.uniform01() < p;
}

double sorted_quantile_type7(std::span<const double> sorted, double p) {
  if (sorted.empty()) {
    throw std::domain_error("sorted_quantile_type7: empty input");
  }
  p = std::clamp(p, 0.0, 1.0);
  const double h = static_cast<double>(sorted.size() - 1) * p;
  const auto j = static_cast<std::size_t>(h);
  if (j + 1 >= sorted.size()) {
    return sorted.back();
  }
  const double g = h - static_cast<double>(j);
  return (1.0 - g) * sorted[j] + g * sorted[j + 1];
}

SummaryStats summary_stats(std::span<const double> values) {
  if (values.empty()) {
    throw std::domain_error("summary_stats: empty input");
  }
  for (double v : values) {
    if (!std::isfinite(v)) {
      throw std::domain_error("summary_stats: non-finite input");
    }
  }
  const std::size_t n = values.size();

  double mean = 0.0;
  for (double v : values) mean += v;
  mean /= static_cast<double>(n);

  double sample_std = 0.0;
  if (n >= 2) {
    double ss = 0.0;
    for (double v : values) ss += (v - mean) * (v - mean);
    sample_std = std::sqrt(ss / static_cast<double>(n - 1));
  }

  std::vector<double> sorted(values.begin(), values.end());
  std::sort(sorted.begin(), sorted.end());
  const double median = sorted_quantile_type7(sorted, 0.5);
  const double iqr = sorted_quantile_type7(sorted, 0.75) -
                     sorted_quantile_type7(sorted, 0.25);

  double mpd = 0.0;
  if (n >= 2) {
    std::vector<double> dist;
    dist.reserve(n * (n - 1) / 2);
    for (std::size_t i = 0; i < n; ++i) {
      for (std::size_t j = i + 1; j < n; ++j) {
        dist.push_back(std::abs(values[i] - values[j]));
      }
    }
    std::sort(dist.begin(), dist.end());
    mpd = sorted_quantile_type7(dist, 0.5);
  }

  return SummaryStats{mean, sample_std, median, iqr, mpd};
}

}  // namespace qrmlab::numkit
