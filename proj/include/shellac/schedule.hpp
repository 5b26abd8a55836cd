#pragma once

// Variance-preserving diffusion with the cosine noise schedule.
//
//   sigma(tau) = (1 - cos(pi tau)) / 2,   alpha(tau) = sqrt(1 - sigma^2)
//
// All schedule math is done in double precision.

namespace shellac::schedule {

/// Floor applied to alpha so that 1/alpha stays finite at tau = 1.
inline constexpr double kAlphaMin = 1e-4;

/// Diffusion index in [0, 1]. Construction outside the range throws UsageError.
class DiffusionTime {
public:
    explicit DiffusionTime(double tau);
    double value() const noexcept { return tau_; }
    operator double() const noexcept { return tau_; }

private:
    double tau_;
};

struct SchedulePoint {
    double tau;
    double sigma;
    double alpha;
};

/// Multipliers of one reverse step z_s = f z_tau - g eps_hat + h eps.
struct StepCoefficients {
    double f;
    double g;
    double h;
};

double sigma(DiffusionTime tau);

/// Unclamped sqrt(1 - sigma^2); exactly 0 at tau = 1.
double alpha_exact(DiffusionTime tau);

/// alpha clamped below at kAlphaMin.
double alpha(DiffusionTime tau);

SchedulePoint point(DiffusionTime tau);

/// alpha(tau) / alpha(s), requires s <= tau.
double alpha_ratio(DiffusionTime tau, DiffusionTime s);

/// sigma_tau^2 - alpha_ratio^2 sigma_s^2, requires s <= tau. Round-off below zero is clamped.
double sigma_cond_sq(DiffusionTime tau, DiffusionTime s);

/// Coefficients of the ancestral step from tau down to s (0 <= s < tau <= 1):
///   f = 1 / alpha_{tau|s}
///   g = sigma_{tau|s}^2 / (alpha_{tau|s} sigma_tau)
///   h = sqrt(sigma_{tau|s}^2 sigma_s^2 / sigma_tau^2)
/// f z - g eps is the posterior mean of z_s given z_tau and x = (z - sigma eps)/alpha,
/// and h is the posterior standard deviation.
StepCoefficients reverse_coefficients(DiffusionTime tau, DiffusionTime s);

}  // namespace shellac::schedule
