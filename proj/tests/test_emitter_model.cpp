#include <doctest.h>

#include <Eigen/Dense>
#include <cmath>

#include "photonkit/emitter_model.hpp"
#include "photonkit/rng.hpp"
#include "oracles.hpp"

using namespace photonkit;

TEST_CASE("g2_model limits and symmetry") {
  ThreeLevelParams p;
  p.antibunch_amp = 0.72;
  p.bunch_amp = 0.05;
  p.excited_lifetime = 1.123e-9;
  p.shelving_lifetime = 20e-9;
  p.delay_offset = 0.4e-9;
  p.validate();

  CHECK(g2_model(p.delay_offset + 1000 * p.shelving_lifetime, p) ==
        doctest::Approx(1.0).epsilon(1e-6));
  CHECK(g2_model(p.delay_offset - 1000 * p.shelving_lifetime, p) ==
        doctest::Approx(1.0).epsilon(1e-6));
  CHECK(g2_model(p.delay_offset, p) == doctest::Approx(0.33));

  // exact symmetry about mu = 0 (negation is exact in floating point);
  // a nonzero offset symmetrizes to rounding
  SplitRng rng(7);
  ThreeLevelParams centered = p;
  centered.delay_offset = 0.0;
  for (int i = 0; i < 200; ++i) {
    const double x = (rng.uniform() - 0.5) * 100e-9;
    CHECK(g2_model(x, centered) == g2_model(-x, centered));
    CHECK(g2_model(p.delay_offset + x, p) ==
          doctest::Approx(g2_model(p.delay_offset - x, p)).epsilon(1e-12));
  }

  ThreeLevelParams poissonian;
  poissonian.antibunch_amp = 0.0;
  poissonian.bunch_amp = 0.0;
  poissonian.excited_lifetime = 1e-9;
  poissonian.shelving_lifetime = 1e-8;
  CHECK(g2_model(3e-9, poissonian) == 1.0);

  // array overload agrees with the scalar one
  Eigen::ArrayXd taus = Eigen::ArrayXd::LinSpaced(11, -5e-9, 5e-9);
  const Eigen::ArrayXd curve = g2_model(taus, p);
  for (Eigen::Index i = 0; i < taus.size(); ++i)
    CHECK(curve[i] == g2_model(taus[i], p));
}

TEST_CASE("ThreeLevelParams invariants") {
  ThreeLevelParams p;
  p.antibunch_amp = 1.0;
  p.bunch_amp = 0.1;
  p.excited_lifetime = 1e-9;
  p.shelving_lifetime = 0.5e-9;  // t2 < t1 with live bunching
  CHECK_THROWS_AS(p.validate(), ValidationError);
  p.bunch_amp = 0.0;  // inert shelf: t2 ordering no longer applies
  p.antibunch_amp = 1.0;
  CHECK_NOTHROW(p.validate());
  p.antibunch_amp = 1.2;  // g2(0) < 0
  CHECK_THROWS_AS(p.validate(), ValidationError);
}

TEST_CASE("saturation_model basics and shape") {
  SaturationParams p{3.2e5, 142.6e-6, 130.0};
  p.validate();
  CHECK(saturation_model(0.0, p) == p.dark_intensity);
  CHECK(saturation_model(p.sat_power, p) ==
        doctest::Approx(0.5 * p.sat_intensity + p.dark_intensity));
  CHECK(saturation_model(1e6 * p.sat_power, p) ==
        doctest::Approx(p.sat_intensity + p.dark_intensity).epsilon(1e-5));

  // strictly increasing and concave
  double prev = saturation_model(0.0, p);
  double prev_slope = std::numeric_limits<double>::infinity();
  for (int i = 1; i <= 400; ++i) {
    const double power = i * 20e-6;
    const double value = saturation_model(power, p);
    CHECK(value > prev);
    const double slope = value - prev;
    CHECK(slope < prev_slope);
    prev = value;
    prev_slope = slope;
  }
}

TEST_CASE("linewidth conversion and lifetime-bandwidth products") {
  CHECK(linewidth_to_bandwidth(553.23e-9, 2.82e-9) ==
        doctest::Approx(2.763e12).epsilon(1e-3));
  CHECK(linewidth_to_bandwidth(566.04e-9, 1.31e-9) ==
        doctest::Approx(1.226e12).epsilon(1e-3));
  CHECK(linewidth_to_bandwidth(553.23e-9, 0.0) == 0.0);

  CHECK(lifetime_bandwidth_product(553.23e-9, 2.82e-9, 1.123e-9) ==
        doctest::Approx(3102).epsilon(0.01));
  CHECK(lifetime_bandwidth_product(566.04e-9, 1.31e-9, 1.133e-9) ==
        doctest::Approx(1389).epsilon(0.01));
  CHECK(lifetime_bandwidth_product(553.23e-9, 0.0, 1.123e-9) == 0.0);

  // linear in the linewidth
  SplitRng rng(3);
  for (int i = 0; i < 50; ++i) {
    const double lambda = 400e-9 + 400e-9 * rng.uniform();
    const double fwhm = 5e-9 * rng.uniform();
    const double a = 0.1 + 10.0 * rng.uniform();
    CHECK(linewidth_to_bandwidth(lambda, a * fwhm) ==
          doctest::Approx(a * linewidth_to_bandwidth(lambda, fwhm)).epsilon(1e-12));
  }
}

TEST_CASE("photon energy") {
  CHECK(photon_energy_ev(522e-9) == doctest::Approx(2.375).epsilon(1e-3));
  CHECK(photon_energy_ev(1239.84e-9) == doctest::Approx(1.000).epsilon(1e-4));
  CHECK(photon_energy_ev(620e-9) == doctest::Approx(2.000).epsilon(1e-3));

  // E * lambda constant across a sweep
  const double reference = photon_energy_ev(500e-9) * 500e-9;
  for (int i = 1; i <= 100; ++i) {
    const double lambda = 200e-9 + i * 10e-9;
    CHECK(photon_energy_ev(lambda) * lambda ==
          doctest::Approx(reference).epsilon(1e-12));
  }
}

TEST_CASE("duty cycle and peak intensity") {
  CHECK(duty_cycle(300e-15, 20.8e6) == doctest::Approx(6.24e-6).epsilon(1e-12));
  CHECK(duty_cycle(0.0, 77e6) == 0.0);
  CHECK(duty_cycle(1e-9, 1e6) == doctest::Approx(1e-3));

  // paper reproduction under the pi*d^2 area convention
  const double intensity = peak_intensity(142.6e-6, 6.24e-6, 0.67e-6);
  CHECK(intensity == doctest::Approx(1.62e13).epsilon(0.01));  // W/m^2 = 1.62 GW/cm^2

  // textbook convention differs by 4x
  CHECK(peak_intensity(142.6e-6, 6.24e-6, 0.67e-6,
                       SpotAreaConvention::PiDiameterSquaredOver4) ==
        doctest::Approx(4.0 * intensity).epsilon(1e-12));

  // duty = 1 and pi*d^2 = 1 m^2 gives power density = power
  const double d_unit = std::sqrt(1.0 / 3.14159265358979323846);
  CHECK(peak_intensity(1.0, 1.0, d_unit) == doctest::Approx(1.0).epsilon(1e-12));

  // quarter intensity at doubled spot diameter
  CHECK(peak_intensity(142.6e-6, 6.24e-6, 1.34e-6) ==
        doctest::Approx(0.405e13).epsilon(0.01));
}

TEST_CASE("g2_from_rates: two-level limit") {
  EmitterRates rates;
  rates.radiative_rate = 8.9e8;
  rates.intersystem_rate = 0.0;
  rates.deshelving_rate = 5e7;
  const double k_exc = 3e5;
  const ThreeLevelParams p = g2_from_rates(rates, k_exc);
  CHECK(p.antibunch_amp == doctest::Approx(1.0).epsilon(1e-12));
  CHECK(p.bunch_amp == doctest::Approx(0.0).epsilon(1e-12));
  CHECK(p.excited_lifetime ==
        doctest::Approx(1.0 / (k_exc + rates.radiative_rate)).epsilon(1e-12));
}

TEST_CASE("g2_from_rates: exactly symmetric rates are degenerate") {
  EmitterRates rates;
  rates.excitation_rate = 1e9;
  rates.radiative_rate = 1e9;
  rates.intersystem_rate = 1e9;
  rates.deshelving_rate = 1e9;
  // trace^2 == 4 det here: a double relaxation eigenvalue
  CHECK_THROWS_AS(g2_from_rates(rates, 1e9), DegenerateRates);
}

TEST_CASE("g2_from_rates matches the ODE oracle") {
  // a case near the symmetric-rates family but with real eigenvalues
  {
    EmitterRates rates;
    rates.radiative_rate = 1e9;
    rates.intersystem_rate = 1e9;
    rates.deshelving_rate = 1.1e9;
    const double k_exc = 1e8;
    const ThreeLevelParams p = g2_from_rates(rates, k_exc);
    for (const double tau : {0.2e-9, 0.5e-9, 1e-9, 2e-9}) {
      const double expected = oracles::ode_g2(rates, k_exc, tau);
      CHECK(g2_model(tau, p) == doctest::Approx(expected).epsilon(1e-6));
    }
  }

  // the underdamped regime cannot be two real exponentials
  {
    EmitterRates rates;
    rates.radiative_rate = 1e9;
    rates.intersystem_rate = 1e9;
    rates.deshelving_rate = 1.1e9;
    CHECK_THROWS_AS(g2_from_rates(rates, 1e9), DegenerateRates);
  }

  // 100-point random sweep over the metastable regime
  SplitRng rng(42);
  for (int trial = 0; trial < 100; ++trial) {
    EmitterRates rates;
    rates.radiative_rate = std::pow(10.0, 8.0 + 1.5 * rng.uniform());
    rates.intersystem_rate = rates.radiative_rate * std::pow(10.0, -2.0 + 1.5 * rng.uniform());
    rates.deshelving_rate = rates.intersystem_rate * std::pow(10.0, -1.5 + 1.3 * rng.uniform());
    const double k_exc = rates.radiative_rate * std::pow(10.0, -2.0 + 1.7 * rng.uniform());
    const ThreeLevelParams p = g2_from_rates(rates, k_exc);
    CHECK(p.shelving_lifetime > p.excited_lifetime);

    for (const double scale : {0.3, 1.0, 3.0}) {
      const double tau = scale * p.excited_lifetime;
      const double expected = oracles::ode_g2(rates, k_exc, tau);
      CHECK(g2_model(tau, p) == doctest::Approx(expected).epsilon(1e-6));
    }
    const double tau_slow = p.shelving_lifetime;
    CHECK(g2_model(tau_slow, p) ==
          doctest::Approx(oracles::ode_g2(rates, k_exc, tau_slow)).epsilon(1e-6));
  }
}

TEST_CASE("with_background scales the dip") {
  EmitterRates rates;
  rates.radiative_rate = 8.9e8;
  rates.intersystem_rate = 4e7;
  rates.deshelving_rate = 5e7;
  const ThreeLevelParams clean = g2_from_rates(rates, 1e6);
  CHECK(clean.g2_zero() == doctest::Approx(0.0).epsilon(1e-9));

  const double rho = std::sqrt(0.67);
  const ThreeLevelParams noisy = with_background(clean, rho, rho);
  CHECK(noisy.g2_zero() == doctest::Approx(0.33).epsilon(1e-9));
  CHECK(noisy.excited_lifetime == clean.excited_lifetime);

  CHECK_THROWS_AS(with_background(clean, 1.3, 0.5), ValidationError);
}

TEST_CASE("excited_state_occupation steady state") {
  EmitterRates rates;
  rates.radiative_rate = 1e9;
  rates.intersystem_rate = 0.0;
  rates.deshelving_rate = 1e7;
  CHECK(excited_state_occupation(rates, 1e9) == doctest::Approx(0.5));
  rates.intersystem_rate = 1e8;
  const double pe = excited_state_occupation(rates, 1e9);
  const double det = (1e9 + 1e9 + 1e8) * 1e7 + 1e9 * 1e8;
  CHECK(pe == doctest::Approx(1e9 * 1e7 / det));
}
