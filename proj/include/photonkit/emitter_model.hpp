#pragma once

#include <Eigen/Dense>
#include <cmath>
#include <string>
#include <vector>

#include "photonkit/constants.hpp"
#include "photonkit/errors.hpp"

// Analytic photophysics of a three-level emitter (ground, excited,
// meta-stable shelf) and the small derived-quantity formulas shared by the
// simulator, the fitter and the CLI. Everything here is a pure function of
// its arguments; SI units throughout.
namespace photonkit {

// g2(tau) = 1 - A exp(-|tau-mu|/t1) + B exp(-|tau-mu|/t2)
struct ThreeLevelParams {
  double antibunch_amp = 1.0;     // A
  double bunch_amp = 0.0;         // B
  double excited_lifetime = 0.0;  // t1, s
  double shelving_lifetime = 0.0; // t2, s
  double delay_offset = 0.0;      // mu, s (interferometer path imbalance)

  // t2 > t1 is only meaningful while the bunching term is live; with B = 0
  // the shelf timescale is inert (see g2_from_rates on the two-level limit).
  void validate() const {
    if (!(antibunch_amp >= 0.0) || !(bunch_amp >= 0.0))
      throw ValidationError("ThreeLevelParams: amplitudes must be >= 0");
    if (!(excited_lifetime > 0.0) || !(shelving_lifetime > 0.0))
      throw ValidationError("ThreeLevelParams: lifetimes must be > 0");
    if (bunch_amp > 0.0 && !(shelving_lifetime > excited_lifetime))
      throw ValidationError("ThreeLevelParams: t2 must exceed t1");
    if (1.0 - antibunch_amp + bunch_amp < 0.0)
      throw ValidationError("ThreeLevelParams: g2(0) = 1 - A + B below 0");
  }

  double g2_zero() const { return 1.0 - antibunch_amp + bunch_amp; }
};

struct SaturationParams {
  double sat_intensity = 0.0;  // I_sat, counts/s
  double sat_power = 0.0;      // P_sat, W
  double dark_intensity = 0.0; // I_d, counts/s

  void validate() const {
    if (!(sat_intensity > 0.0) || !(sat_power > 0.0) || !(dark_intensity >= 0.0))
      throw ValidationError("SaturationParams: require I_sat > 0, P_sat > 0, I_d >= 0");
  }
};

struct PowerLawParams {
  double slope = 1.0;          // alpha
  double log_prefactor = 0.0;  // intercept of log I vs log P

  void validate() const {
    if (!(slope > 0.0)) throw ValidationError("PowerLawParams: alpha must be > 0");
  }
};

struct ExcitationConstants {
  double wavelength = 522e-9;    // m
  double pulse_length = 300e-15; // s
  double rep_rate = 20.8e6;      // Hz
  double spot_diameter = 0.67e-6;// m

  void validate() const {
    if (!(wavelength > 0.0) || !(pulse_length > 0.0) || !(rep_rate > 0.0) ||
        !(spot_diameter > 0.0))
      throw ValidationError("ExcitationConstants: all fields must be > 0");
    if (!(pulse_length * rep_rate < 1.0))
      throw ValidationError("ExcitationConstants: duty cycle must be < 1");
  }
};

// One spectral peak of a pseudo-Voigt lineshape. gauss_fraction = 0 is pure
// Lorentzian (the default family; the measured lineshape family is not
// pinned down by the data, so eta is only a fit parameter on request).
struct PeakShape {
  double center = 0.0;          // m
  double fwhm = 0.0;            // m
  double area = 0.0;            // counts * m
  double gauss_fraction = 0.0;  // eta in [0,1]
};

struct LineshapeParams {
  std::vector<PeakShape> peaks;
  double baseline = 0.0;  // counts

  void validate(double lambda_min, double lambda_max) const {
    for (const auto& p : peaks) {
      if (!(p.fwhm > 0.0)) throw ValidationError("LineshapeParams: fwhm must be > 0");
      if (!(p.area >= 0.0)) throw ValidationError("LineshapeParams: area must be >= 0");
      if (!(p.gauss_fraction >= 0.0 && p.gauss_fraction <= 1.0))
        throw ValidationError("LineshapeParams: gauss fraction outside [0,1]");
      if (p.center < lambda_min || p.center > lambda_max)
        throw ValidationError("LineshapeParams: peak center outside spectrum range");
    }
  }
};

namespace detail {
inline constexpr double kPi = 3.14159265358979323846;
inline constexpr double kLn2 = 0.69314718055994530942;
}  // namespace detail

// Unit-area Lorentzian / Gaussian of given FWHM and their pseudo-Voigt mix.
inline double lorentzian_profile(double x, double center, double fwhm) {
  const double u = 2.0 * (x - center) / fwhm;
  return 2.0 / (detail::kPi * fwhm * (1.0 + u * u));
}

inline double gaussian_profile(double x, double center, double fwhm) {
  const double d = (x - center) / fwhm;
  return 2.0 * std::sqrt(detail::kLn2 / detail::kPi) / fwhm *
         std::exp(-4.0 * detail::kLn2 * d * d);
}

inline double pseudo_voigt_profile(double x, const PeakShape& p) {
  return p.area * ((1.0 - p.gauss_fraction) * lorentzian_profile(x, p.center, p.fwhm) +
                   p.gauss_fraction * gaussian_profile(x, p.center, p.fwhm));
}

inline double lineshape_model(double x, const LineshapeParams& p) {
  double y = p.baseline;
  for (const auto& peak : p.peaks) y += pseudo_voigt_profile(x, peak);
  return y;
}

// Integral of one peak over [a, b] via the analytic CDFs.
inline double peak_area_in_window(const PeakShape& p, double a, double b) {
  const auto lor_cdf = [&](double x) {
    return 0.5 + std::atan(2.0 * (x - p.center) / p.fwhm) / detail::kPi;
  };
  const auto gauss_cdf = [&](double x) {
    return 0.5 * (1.0 + std::erf(2.0 * std::sqrt(detail::kLn2) * (x - p.center) / p.fwhm));
  };
  return p.area * ((1.0 - p.gauss_fraction) * (lor_cdf(b) - lor_cdf(a)) +
                   p.gauss_fraction * (gauss_cdf(b) - gauss_cdf(a)));
}

// Height of the fitted peak at its center (ZPL "peak brightness").
inline double peak_height(const PeakShape& p) {
  return p.area * ((1.0 - p.gauss_fraction) * 2.0 / (detail::kPi * p.fwhm) +
                   p.gauss_fraction * 2.0 * std::sqrt(detail::kLn2 / detail::kPi) / p.fwhm);
}

// Kinetic rates of the three-level system. excitation_rate is the
// power-dependent knob; the others are fixed emitter properties.
struct EmitterRates {
  double excitation_rate = 0.0;   // k_exc, 1/s (ground -> excited)
  double radiative_rate = 0.0;    // k_rad, 1/s (excited -> ground, photon)
  double intersystem_rate = 0.0;  // k_isc, 1/s (excited -> shelf)
  double deshelving_rate = 0.0;   // k_back, 1/s (shelf -> ground)
  double quantum_efficiency = 1.0;

  void validate() const {
    if (!(radiative_rate > 0.0))
      throw ValidationError("EmitterRates: radiative rate must be > 0");
    if (excitation_rate < 0.0 || intersystem_rate < 0.0 || deshelving_rate < 0.0)
      throw ValidationError("EmitterRates: rates must be >= 0");
    if (!(quantum_efficiency >= 0.0 && quantum_efficiency <= 1.0))
      throw ValidationError("EmitterRates: quantum efficiency outside [0,1]");
  }
};

inline double g2_model(double tau, const ThreeLevelParams& p) {
  const double x = std::abs(tau - p.delay_offset);
  return 1.0 - p.antibunch_amp * std::exp(-x / p.excited_lifetime) +
         p.bunch_amp * std::exp(-x / p.shelving_lifetime);
}

template <typename Derived>
Eigen::ArrayXd g2_model(const Eigen::ArrayBase<Derived>& tau,
                        const ThreeLevelParams& p) {
  const Eigen::ArrayXd x = (tau - p.delay_offset).abs();
  return 1.0 - p.antibunch_amp * (-x / p.excited_lifetime).exp() +
         p.bunch_amp * (-x / p.shelving_lifetime).exp();
}

inline double saturation_model(double power, const SaturationParams& p) {
  return p.sat_intensity * power / (power + p.sat_power) + p.dark_intensity;
}

template <typename Derived>
Eigen::ArrayXd saturation_model(const Eigen::ArrayBase<Derived>& power,
                                const SaturationParams& p) {
  return p.sat_intensity * power / (power + p.sat_power) + p.dark_intensity;
}

// dnu = c * dlambda / lambda^2
inline double linewidth_to_bandwidth(double center_wavelength, double fwhm) {
  return constants::speed_of_light * fwhm / (center_wavelength * center_wavelength);
}

// dnu * tau; transform limit is 1/(2*pi) ~ 0.16
inline double lifetime_bandwidth_product(double center_wavelength, double fwhm,
                                         double lifetime) {
  return linewidth_to_bandwidth(center_wavelength, fwhm) * lifetime;
}

inline double photon_energy_ev(double wavelength) {
  return constants::hc_over_e_ev_m / wavelength;
}

inline double duty_cycle(double pulse_length, double rep_rate) {
  return pulse_length * rep_rate;
}

enum class SpotAreaConvention {
  // A = pi * d^2. Reproduces the published 1.62 GW/cm^2 from its own inputs
  // (142.6 uW, duty 6.24e-6, d = 0.67 um); the textbook pi d^2/4 gives 6.48.
  PiDiameterSquared,
  // A = pi * d^2 / 4 (area of a circle of diameter d).
  PiDiameterSquaredOver4,
};

inline double peak_intensity(
    double average_power, double duty, double spot_diameter,
    SpotAreaConvention convention = SpotAreaConvention::PiDiameterSquared) {
  const double pi = 3.14159265358979323846;
  double area = pi * spot_diameter * spot_diameter;
  if (convention == SpotAreaConvention::PiDiameterSquaredOver4) area *= 0.25;
  return average_power / (duty * area);
}

// Steady-state excited-level occupation of the rate system.
inline double excited_state_occupation(const EmitterRates& r,
                                       double excitation_rate) {
  const double s = excitation_rate + r.radiative_rate + r.intersystem_rate;
  const double det = s * r.deshelving_rate + excitation_rate * r.intersystem_rate;
  if (r.intersystem_rate == 0.0 || r.deshelving_rate == 0.0) {
    // shelf decoupled (or absorbing with k_isc = 0): two-level steady state
    if (r.intersystem_rate == 0.0)
      return excitation_rate / (excitation_rate + r.radiative_rate);
    return 0.0;  // k_isc > 0, k_back = 0: population drains into the shelf
  }
  return excitation_rate * r.deshelving_rate / det;
}

// Analytic A, B, t1, t2 from the eigen-decomposition of the three-level rate
// matrix; the closed form of the relaxation the kinetic Monte Carlo sampler
// realises, and the ground truth the fitter is tested against.
//
// With populations (pe, ps) and pg eliminated, the generator is
//   d/dt (pe, ps) = [[-(k_exc+k_rad+k_isc), -k_exc], [k_isc, -k_back]] (pe,ps)
//                   + (k_exc, 0),
// and g2(tau) = pe(tau)/pe_ss for a trajectory started in the ground state.
inline ThreeLevelParams g2_from_rates(const EmitterRates& rates,
                                      double excitation_rate) {
  EmitterRates r = rates;
  r.excitation_rate = excitation_rate;
  r.validate();
  if (!(excitation_rate > 0.0))
    throw ValidationError("g2_from_rates: excitation rate must be > 0");

  const double s = excitation_rate + r.radiative_rate + r.intersystem_rate;
  const double trace = s + r.deshelving_rate;
  const double det = s * r.deshelving_rate + excitation_rate * r.intersystem_rate;
  const double disc2 = trace * trace - 4.0 * det;
  // disc2 < 0 is the underdamped (oscillatory) regime; neither case is a sum
  // of two real exponentials
  if (disc2 <= 0.0)
    throw DegenerateRates(
        "g2_from_rates: relaxation eigenvalues complex or degenerate");
  const double disc = std::sqrt(disc2);
  const double lam_fast = 0.5 * (trace + disc);
  const double lam_slow = 0.5 * (trace - disc);
  if (!(lam_slow > 0.0) || (lam_fast - lam_slow) < 1e-9 * lam_fast)
    throw DegenerateRates("g2_from_rates: relaxation eigenvalues degenerate");

  const double pe_ss = excitation_rate * r.deshelving_rate / det;
  // pe(t) = pe_ss + a e^{-lam_fast t} + b e^{-lam_slow t}; pe(0) = 0,
  // pe'(0) = k_exc.
  const double a = (pe_ss * lam_slow - excitation_rate) / (lam_fast - lam_slow);
  const double b = (excitation_rate - pe_ss * lam_fast) / (lam_fast - lam_slow);

  ThreeLevelParams p;
  p.delay_offset = 0.0;
  const double c_fast = a / pe_ss;
  const double c_slow = b / pe_ss;
  if (c_fast <= 0.0) {
    p.antibunch_amp = -c_fast;
    p.excited_lifetime = 1.0 / lam_fast;
    p.bunch_amp = std::max(c_slow, 0.0);
    p.shelving_lifetime = 1.0 / lam_slow;
  } else {
    // non-metastable shelf: the antibunching dip rides the slow eigenvalue
    p.antibunch_amp = -c_slow;
    p.excited_lifetime = 1.0 / lam_slow;
    p.bunch_amp = c_fast;
    p.shelving_lifetime = 1.0 / lam_fast;
  }
  return p;
}

// Measured g2 under uncorrelated background (dark or stray counts):
//   g2_meas = 1 + rho_a * rho_b * (g2 - 1),  rho = signal / (signal + bkg),
// so both amplitudes scale by rho_a * rho_b. This is what puts the floor
// under experimentally observed g2(0).
inline ThreeLevelParams with_background(const ThreeLevelParams& p, double rho_a,
                                        double rho_b) {
  if (!(rho_a >= 0.0 && rho_a <= 1.0 && rho_b >= 0.0 && rho_b <= 1.0))
    throw ValidationError("with_background: signal fractions outside [0,1]");
  ThreeLevelParams out = p;
  out.antibunch_amp *= rho_a * rho_b;
  out.bunch_amp *= rho_a * rho_b;
  return out;
}

}  // namespace photonkit
