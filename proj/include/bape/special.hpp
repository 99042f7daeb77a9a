#pragma once

// Modified Bessel function of the first kind and the von Mises-Fisher
// normalizer, evaluated in log space.
//
// Supported domain: order nu <= 2047 (p <= 4096), argument x <= 1e6.
// Outside that range the functions still return values but accuracy is
// not regression-tested.

namespace bape::special {

// Order of a modified Bessel function; nu >= 0 and finite.
class BesselOrder {
public:
  explicit BesselOrder(double nu);
  // Order p/2 - 1 that appears in the vMF normalizer of dimension p.
  static BesselOrder for_dimension(int p);

  double value() const { return nu_; }

private:
  double nu_;
};

// ln C_p(kappa), where C_p(kappa) = (2 pi)^{p/2} I_{p/2-1}(kappa) / kappa^{p/2-1}.
struct LogNormalizer {
  double value;
};

// ln I_nu(x). Returns -inf at x = 0 when nu > 0 and 0 at x = nu = 0.
// Throws DomainError for x < 0 or non-finite x.
double log_bessel_i(BesselOrder nu, double x);

// Convenience overload; throws DomainError when nu < 0.
double log_bessel_i(double nu, double x);

// ln C_p(kappa). At kappa = 0 this is the log surface area of S^{p-1}.
LogNormalizer log_vmf_normalizer(int p, double kappa);

// Ratio I_{nu+1}(x) / I_nu(x), in [0, 1).
double bessel_ratio(BesselOrder nu, double x);

// A_p(kappa) = I_{p/2}(kappa) / I_{p/2-1}(kappa), the mean resultant length
// of vMF(p, kappa). Strictly increasing, A_p(0) = 0, A_p -> 1 as kappa -> inf.
double mean_resultant_ratio(int p, double kappa);

// d A_p / d kappa = 1 - A^2 - (p - 1) A / kappa, with the kappa -> 0 limit 1/p.
double mean_resultant_ratio_derivative(int p, double kappa);

namespace detail {
// Regime-specific evaluators, exposed so tests can check the switchover.
double log_bessel_i_series(double nu, double x);
double log_bessel_i_debye(double nu, double x);
double log_bessel_i_hankel(double nu, double x);
double bessel_ratio_continued_fraction(double nu, double x);
double bessel_ratio_hankel(double nu, double x);
}  // namespace detail

}  // namespace bape::special
