#include "shellac/schedule.hpp"

#include <algorithm>
#include <cmath>
#include <numbers>
#include <string>

#include "shellac/error.hpp"

namespace shellac::schedule {

DiffusionTime::DiffusionTime(double tau) : tau_(tau) {
    if (!(tau >= 0.0 && tau <= 1.0)) {
        throw UsageError("schedule", "diffusion time out of [0,1]: " + std::to_string(tau));
    }
}

double sigma(DiffusionTime tau) { return (1.0 - std::cos(std::numbers::pi * tau.value())) / 2.0; }

double alpha_exact(DiffusionTime tau) {
    const double s = sigma(tau);
    return std::sqrt(std::max(0.0, 1.0 - s * s));
}

double alpha(DiffusionTime tau) { return std::max(alpha_exact(tau), kAlphaMin); }

SchedulePoint point(DiffusionTime tau) { return {tau.value(), sigma(tau), alpha(tau)}; }

namespace {

void require_ordered(DiffusionTime tau, DiffusionTime s) {
    if (s.value() > tau.value()) {
        throw UsageError("schedule", "earlier step s=" + std::to_string(s.value()) +
                                         " exceeds tau=" + std::to_string(tau.value()));
    }
}

}  // namespace

double alpha_ratio(DiffusionTime tau, DiffusionTime s) {
    require_ordered(tau, s);
    return alpha(tau) / alpha(s);
}

double sigma_cond_sq(DiffusionTime tau, DiffusionTime s) {
    require_ordered(tau, s);
    const double a = alpha_ratio(tau, s);
    const double st = sigma(tau);
    const double ss = sigma(s);
    return std::max(0.0, st * st - a * a * ss * ss);
}

StepCoefficients reverse_coefficients(DiffusionTime tau, DiffusionTime s) {
    if (!(s.value() < tau.value())) {
        throw UsageError("schedule", "reverse step needs s < tau");
    }
    const double a = alpha_ratio(tau, s);
    const double var = sigma_cond_sq(tau, s);
    const double st = sigma(tau);
    const double ss = sigma(s);
    return {1.0 / a, var / (a * st), std::sqrt(var * ss * ss / (st * st))};
}

}  // namespace shellac::schedule
