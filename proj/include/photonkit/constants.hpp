#pragma once

#include <complex>

// CODATA-2018 exact values. Paper-rounded figures belong in tests, not here.
namespace photonkit::constants {

inline constexpr double speed_of_light = 299'792'458.0;         // m/s
inline constexpr double planck = 6.62607015e-34;                // J s
inline constexpr double elementary_charge = 1.602176634e-19;    // C

// hc/e: photon energy in eV is hc_over_e_ev_m / wavelength[m].
inline constexpr double hc_over_e_ev_m =
    planck * speed_of_light / elementary_charge;

// Indirect band gap of hexagonal boron nitride, eV. Reference value only;
// nothing in the toolkit computes with it.
inline constexpr double hbn_band_gap_ev = 5.955;

// Scalar refractive indices at 522 nm, normal incidence (see README for
// sources). hBN uses the PSI-calibrated effective index.
inline constexpr double hbn_index = 1.849;
inline constexpr double sio2_index = 1.45;
inline constexpr std::complex<double> si_index{4.20, 0.04};

}  // namespace photonkit::constants
