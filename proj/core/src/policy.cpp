#include "graphevo/policy.hpp"

#include <cmath>

namespace gevo {

double gaussian_logp(std::span<const double> a, std::span<const double> mu,
                     std::span<const double> sigma) {
  constexpr double kHalfLog2Pi = 0.9189385332046727;
  double lp = 0.0;
  for (size_t i = 0; i < a.size(); ++i) {
    double z = (a[i] - mu[i]) / sigma[i];
    lp += -0.5 * z * z - std::log(sigma[i]) - kHalfLog2Pi;
  }
  return lp;
}

double gaussian_kl(std::span<const double> mu1, std::span<const double> s1,
                   std::span<const double> mu0, std::span<const double> s0) {
  double kl = 0.0;
  for (size_t i = 0; i < mu1.size(); ++i) {
    double d = mu1[i] - mu0[i];
    kl += std::log(s0[i] / s1[i]) +
          (s1[i] * s1[i] + d * d) / (2.0 * s0[i] * s0[i]) - 0.5;
  }
  return kl;
}

}  // namespace gevo
