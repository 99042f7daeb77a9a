#include "bape/special.hpp"

#include <algorithm>
#include <array>
#include <cmath>
#include <limits>
#include <numbers>
#include <string>
#include <vector>

#include <boost/math/special_functions/gamma.hpp>

#include "bape/error.hpp"

namespace bape::special {

namespace {

constexpr double kInf = std::numeric_limits<double>::infinity();
constexpr double kSeriesTol = 1e-17;

// Orders at or above this use the uniform (Debye) expansion beyond the
// series regime; smaller orders use Hankel's large-argument expansion.
constexpr double kDebyeMinOrder = 15.0;
constexpr double kSeriesMinCutoff = 20.0;
constexpr int kDebyeTerms = 13;

double lgam(double v) { return boost::math::lgamma(v); }

void check_argument(double x, const char* where) {
  if (!(x >= 0.0) || !std::isfinite(x)) {
    throw DomainError(std::string(where) + ": argument must be finite and >= 0, got " +
                      std::to_string(x));
  }
}

void check_dimension(int p, const char* where) {
  if (p < 2) {
    throw DomainError(std::string(where) + ": dimension must be >= 2, got " + std::to_string(p));
  }
}

// ln sum_{i>=0} q^i / (i! Gamma(nu + i + 1)) with q = x^2/4.
//
// All terms are positive, so summation starts at the largest term and walks
// outward in both directions using term ratios; nothing overflows and there
// is no cancellation.
double log_scaled_series(double nu, double x) {
  const double q = 0.25 * x * x;
  if (q == 0.0) return -lgam(nu + 1.0);

  // Smallest i with (i + 1)(nu + i + 1) >= q.
  const double root = 0.5 * (-nu + std::sqrt(nu * nu + 4.0 * q));
  const double peak = std::max(0.0, std::ceil(root) - 1.0);
  const double log_peak = peak * std::log(q) - lgam(peak + 1.0) - lgam(nu + peak + 1.0);

  double sum = 1.0;
  double term = 1.0;
  for (double i = peak;; i += 1.0) {
    term *= q / ((i + 1.0) * (nu + i + 1.0));
    sum += term;
    if (term < kSeriesTol * sum) break;
  }
  term = 1.0;
  for (double i = peak - 1.0; i >= 0.0; i -= 1.0) {
    term *= ((i + 1.0) * (nu + i + 1.0)) / q;
    sum += term;
    if (term < kSeriesTol * sum) break;
  }
  return log_peak + std::log(sum);
}

using Poly = std::vector<double>;

double eval_poly(const Poly& c, double t) {
  double r = 0.0;
  for (auto it = c.rbegin(); it != c.rend(); ++it) r = r * t + *it;
  return r;
}

// Debye polynomials u_k(t), generated by
//   u_{k+1}(t) = t^2 (1 - t^2) u_k'(t) / 2 + (1/8) int_0^t (1 - 5 s^2) u_k(s) ds.
const std::array<Poly, kDebyeTerms>& debye_polynomials() {
  static const std::array<Poly, kDebyeTerms> table = [] {
    std::array<Poly, kDebyeTerms> u;
    u[0] = {1.0};
    for (int k = 0; k + 1 < kDebyeTerms; ++k) {
      const Poly& c = u[k];
      Poly next(c.size() + 3, 0.0);
      for (std::size_t j = 1; j < c.size(); ++j) {
        const double d = static_cast<double>(j) * c[j];  // coefficient of t^{j-1} in u'
        next[j + 1] += 0.5 * d;
        next[j + 3] -= 0.5 * d;
      }
      for (std::size_t j = 0; j < c.size() + 2; ++j) {
        double e = j < c.size() ? c[j] : 0.0;
        if (j >= 2 && j - 2 < c.size()) e -= 5.0 * c[j - 2];
        next[j + 1] += e / (8.0 * static_cast<double>(j + 1));
      }
      while (next.size() > 1 && next.back() == 0.0) next.pop_back();
      u[k + 1] = std::move(next);
    }
    return u;
  }();
  return table;
}

// sum_k (-1)^k a_k(nu) / x^k from Hankel's expansion
// I_nu(x) ~ e^x / sqrt(2 pi x) * sum_k (-1)^k a_k(nu) / x^k.
double hankel_sum(double nu, double x) {
  const double mu = 4.0 * nu * nu;
  double sum = 1.0;
  double term = 1.0;
  double prev = kInf;
  for (int k = 1; k < 400; ++k) {
    const double odd = 2.0 * k - 1.0;
    const double next = -term * (mu - odd * odd) / (8.0 * k * x);
    if (next == 0.0) break;  // terminating series at half-integer order
    if (std::abs(next) >= prev) break;
    sum += next;
    prev = std::abs(next);
    term = next;
    if (std::abs(term) < kSeriesTol * std::abs(sum)) break;
  }
  return sum;
}

bool use_series(double nu, double x) { return x <= std::max(kSeriesMinCutoff, nu); }

bool hankel_converges(double nu, double x) {
  return x >= std::max(kSeriesMinCutoff, nu * nu);
}

// ln I_nu(x) - nu ln(x / 2) for x > 0.
double log_bessel_i_over_power(double nu, double x) {
  if (use_series(nu, x)) return log_scaled_series(nu, x);
  return log_bessel_i(BesselOrder(nu), x) - nu * std::log(0.5 * x);
}

}  // namespace

BesselOrder::BesselOrder(double nu) : nu_(nu) {
  if (!(nu >= 0.0) || !std::isfinite(nu)) {
    throw DomainError("BesselOrder: order must be finite and >= 0, got " + std::to_string(nu));
  }
}

BesselOrder BesselOrder::for_dimension(int p) {
  check_dimension(p, "BesselOrder::for_dimension");
  return BesselOrder(0.5 * p - 1.0);
}

namespace detail {

double log_bessel_i_series(double nu, double x) {
  if (x == 0.0) return nu == 0.0 ? 0.0 : -kInf;
  return nu * std::log(0.5 * x) + log_scaled_series(nu, x);
}

double log_bessel_i_debye(double nu, double x) {
  const double z = x / nu;
  const double s = std::sqrt(1.0 + z * z);
  const double t = 1.0 / s;
  const double eta = s + std::log(z / (1.0 + s));

  const auto& u = debye_polynomials();
  double sum = 1.0;
  double scale = 1.0;
  // For nu >= kDebyeMinOrder the terms are still decreasing at k = 12, so
  // the whole table is summed; individual u_k(t) may pass through zero.
  for (int k = 1; k < kDebyeTerms; ++k) {
    scale /= nu;
    sum += eval_poly(u[k], t) * scale;
  }
  return nu * eta - 0.5 * std::log(2.0 * std::numbers::pi * nu) - 0.5 * std::log(s) +
         std::log(sum);
}

double log_bessel_i_hankel(double nu, double x) {
  return x - 0.5 * std::log(2.0 * std::numbers::pi * x) + std::log(hankel_sum(nu, x));
}

double bessel_ratio_continued_fraction(double nu, double x) {
  if (x == 0.0) return 0.0;
  if (x < 1e-150) return x / (2.0 * (nu + 1.0));

  // I_{nu+1}/I_nu = 1 / (b_1 + 1 / (b_2 + ...)), b_k = 2 (nu + k) / x,
  // evaluated with the modified Lentz algorithm.
  constexpr double tiny = 1e-300;
  constexpr double eps = 1e-16;
  double f = tiny;
  double c = f;
  double d = 0.0;
  const long max_iter = 1000000L + 4L * static_cast<long>(x);
  for (long k = 1; k <= max_iter; ++k) {
    const double b = 2.0 * (nu + static_cast<double>(k)) / x;
    d = b + d;
    if (d == 0.0) d = tiny;
    c = b + 1.0 / c;
    if (c == 0.0) c = tiny;
    d = 1.0 / d;
    const double delta = c * d;
    f *= delta;
    if (std::abs(delta - 1.0) < eps) return f;
  }
  throw DomainError("bessel_ratio: continued fraction did not converge (nu=" +
                    std::to_string(nu) + ", x=" + std::to_string(x) + ")");
}

double bessel_ratio_hankel(double nu, double x) {
  return hankel_sum(nu + 1.0, x) / hankel_sum(nu, x);
}

}  // namespace detail

double log_bessel_i(BesselOrder order, double x) {
  check_argument(x, "log_bessel_i");
  const double nu = order.value();
  if (use_series(nu, x)) return detail::log_bessel_i_series(nu, x);
  if (nu >= kDebyeMinOrder) return detail::log_bessel_i_debye(nu, x);
  if (hankel_converges(nu, x)) return detail::log_bessel_i_hankel(nu, x);
  return detail::log_bessel_i_series(nu, x);
}

double log_bessel_i(double nu, double x) { return log_bessel_i(BesselOrder(nu), x); }

LogNormalizer log_vmf_normalizer(int p, double kappa) {
  check_dimension(p, "log_vmf_normalizer");
  check_argument(kappa, "log_vmf_normalizer");
  const double nu = 0.5 * p - 1.0;
  const double half_p = 0.5 * p;
  const double log_2pi = std::log(2.0 * std::numbers::pi);
  if (kappa == 0.0) {
    return {std::log(2.0) + half_p * std::log(std::numbers::pi) - lgam(half_p)};
  }
  // ln C = (p/2) ln 2pi + ln I_nu(k) - nu ln k
  //      = (p/2) ln 2pi - nu ln 2 + [ln I_nu(k) - nu ln(k/2)]
  return {half_p * log_2pi - nu * std::log(2.0) + log_bessel_i_over_power(nu, kappa)};
}

double bessel_ratio(BesselOrder order, double x) {
  check_argument(x, "bessel_ratio");
  const double nu = order.value();
  // The continued fraction needs O(x) steps; far out in the large-argument
  // regime Hankel's expansion of both functions is exact to rounding.
  if (x > 1e4 && hankel_converges(nu + 1.0, x)) return detail::bessel_ratio_hankel(nu, x);
  return detail::bessel_ratio_continued_fraction(nu, x);
}

double mean_resultant_ratio(int p, double kappa) {
  return bessel_ratio(BesselOrder::for_dimension(p), kappa);
}

double mean_resultant_ratio_derivative(int p, double kappa) {
  check_dimension(p, "mean_resultant_ratio_derivative");
  check_argument(kappa, "mean_resultant_ratio_derivative");
  if (kappa < 1e-6) return 1.0 / p;
  const double a = mean_resultant_ratio(p, kappa);
  return 1.0 - a * a - (p - 1.0) * a / kappa;
}

}  // namespace bape::special
