// Chi-square tail by Simpson quadrature after the substitution x = u^2,
// which removes the x^(k/2-1) singularity at the origin for k = 1.

#include "rtlmp/state_estimation.hpp"

#include <cmath>
#include <string>

namespace rtlmp {

namespace {

// Density of u = sqrt(chi2_k): 2 c u^(k-1) exp(-u^2/2).
double root_density(double u, double k, double log_norm) {
    if (u <= 0.0) return k == 1.0 ? std::exp(log_norm + std::log(2.0)) : 0.0;
    return std::exp(std::log(2.0) + log_norm + (k - 1.0) * std::log(u) - 0.5 * u * u);
}

double simpson(double a, double b, double k, double log_norm) {
    if (b <= a) return 0.0;
    const int panels = 2 * static_cast<int>(std::ceil((b - a) / 0.005 / 2.0)) + 2;
    const double h = (b - a) / panels;
    double sum = root_density(a, k, log_norm) + root_density(b, k, log_norm);
    for (int i = 1; i < panels; ++i) sum += (i % 2 ? 4.0 : 2.0) * root_density(a + i * h, k, log_norm);
    return sum * h / 3.0;
}

}  // namespace

double chi_square_upper_tail(int dof, double x) {
    if (dof < 1) throw ModelError("chi-square degrees of freedom must be >= 1, got " + std::to_string(dof));
    if (x <= 0.0) return 1.0;
    const double k = dof;
    const double log_norm = -(0.5 * k * std::log(2.0) + std::lgamma(0.5 * k));
    const double u = std::sqrt(x);
    const double mode = std::sqrt(std::max(k - 1.0, 0.0));
    const double top = std::max(u, mode) + 40.0;   // density is below e^-800 of its peak here
    // Integrate whichever side is shorter to limit rounding in the difference.
    if (u > mode) return simpson(u, top, k, log_norm);
    return std::clamp(1.0 - simpson(0.0, u, k, log_norm), 0.0, 1.0);
}

double detector_threshold(int dof, double alpha) {
    if (!(alpha > 0.0 && alpha < 1.0)) throw ModelError("false-alarm probability must lie in (0, 1)");
    if (dof < 1) throw ModelError("chi-square degrees of freedom must be >= 1, got " + std::to_string(dof));
    double lo = 0.0;
    double hi = dof + 20.0 * std::sqrt(2.0 * dof) + 100.0;
    for (int it = 0; it < 200 && hi - lo > 1e-12 * (1.0 + hi); ++it) {
        const double mid = 0.5 * (lo + hi);
        if (chi_square_upper_tail(dof, mid) > alpha) lo = mid;
        else hi = mid;
    }
    return 0.5 * (lo + hi);
}

}  // namespace rtlmp
