#include <doctest.h>

#include <cmath>
#include <complex>
#include <filesystem>

#include "photonkit/thinfilm.hpp"
#include "photonkit/rng.hpp"
#include "oracles.hpp"

using namespace photonkit;

namespace {

LayerStack random_lossless_stack(SplitRng& rng) {
  LayerStack stack;
  stack.wavelength_m = 400e-9 + 400e-9 * rng.uniform();
  stack.ambient_index = {1.0, 0.0};
  stack.substrate_index = {1.2 + 2.5 * rng.uniform(), 0.0};
  const int n_layers = static_cast<int>(rng.next_u64() % 5);
  for (int i = 0; i < n_layers; ++i)
    stack.layers.push_back(
        {{1.2 + 2.0 * rng.uniform(), 0.0}, 500e-9 * rng.uniform()});
  return stack;
}

}  // namespace

TEST_CASE("bare interface reproduces Fresnel") {
  LayerStack stack;
  stack.wavelength_m = 522e-9;
  stack.ambient_index = {1.0, 0.0};
  stack.substrate_index = {1.5, 0.0};
  const std::complex<double> r = reflect(stack);
  CHECK(r.real() == doctest::Approx((1.0 - 1.5) / (1.0 + 1.5)).epsilon(1e-14));
  CHECK(r.imag() == doctest::Approx(0.0).epsilon(1e-14));
}

TEST_CASE("quarter-wave layer matches the closed form") {
  const double n_layer = 2.0;
  const double n_sub = 3.5;
  LayerStack stack;
  stack.wavelength_m = 600e-9;
  stack.substrate_index = {n_sub, 0.0};
  stack.layers = {{{n_layer, 0.0}, 600e-9 / (4.0 * n_layer)}};
  const std::complex<double> r = reflect(stack);
  // quarter-wave identity: r = (n0*ns - n^2)/(n0*ns + n^2)
  const double expected = (n_sub - n_layer * n_layer) / (n_sub + n_layer * n_layer);
  CHECK(std::abs(r - std::complex<double>(expected, 0.0)) < 1e-12);
}

TEST_CASE("reflect matches the boundary-condition solve oracle") {
  // the documented hBN case
  {
    const LayerStack stack = hbn_on_sio2_si_stack(30e-9);
    const auto r = reflect(stack);
    const auto oracle = oracles::boundary_solve_reflectance(stack);
    CHECK(std::abs(r - oracle) < 1e-10);
  }
  // 100 random stacks
  SplitRng rng(314);
  for (int trial = 0; trial < 100; ++trial) {
    LayerStack stack = random_lossless_stack(rng);
    if (trial % 3 == 0) {
      // mix in absorbing substrates and layers
      stack.substrate_index += std::complex<double>(0.0, 3.0 * rng.uniform());
      if (!stack.layers.empty())
        stack.layers[0].index += std::complex<double>(0.0, 0.2 * rng.uniform());
    }
    const auto r = reflect(stack);
    const auto oracle = oracles::boundary_solve_reflectance(stack);
    CHECK(std::abs(r - oracle) < 1e-10);
  }
}

TEST_CASE("energy conservation for lossless stacks") {
  SplitRng rng(2718);
  for (int trial = 0; trial < 100; ++trial) {
    const LayerStack stack = random_lossless_stack(rng);
    const double r2 = std::norm(reflect(stack));
    const double t = transmittance(stack);
    CHECK(r2 <= 1.0 + 1e-12);
    CHECK(r2 + t == doctest::Approx(1.0).epsilon(1e-10));
  }
}

TEST_CASE("|r| <= 1 for passive stacks including absorbing ones") {
  SplitRng rng(161803);
  for (int trial = 0; trial < 60; ++trial) {
    LayerStack stack = random_lossless_stack(rng);
    stack.substrate_index += std::complex<double>(0.0, 2.0 * rng.uniform());
    for (auto& layer : stack.layers)
      layer.index += std::complex<double>(0.0, 0.5 * rng.uniform());
    CHECK(std::abs(reflect(stack)) <= 1.0 + 1e-12);
  }
}

TEST_CASE("characteristic matrices are associative in thickness") {
  SplitRng rng(55);
  for (int trial = 0; trial < 40; ++trial) {
    const double n = 1.3 + 2.0 * rng.uniform();
    const double t1 = 300e-9 * rng.uniform();
    const double t2 = 300e-9 * rng.uniform();
    LayerStack split;
    split.wavelength_m = 522e-9;
    split.substrate_index = {3.0, 0.1};
    split.layers = {{{n, 0.0}, t1}, {{n, 0.0}, t2}};
    LayerStack joined = split;
    joined.layers = {{{n, 0.0}, t1 + t2}};
    CHECK(std::abs(reflect(split) - reflect(joined)) < 1e-12);
  }
}

TEST_CASE("psi_opl trivial identities") {
  const LayerStack bare = [] {
    LayerStack s = hbn_on_sio2_si_stack(0.0);
    s.layers.erase(s.layers.begin());
    return s;
  }();

  // zero thickness
  LayerStack zero = hbn_on_sio2_si_stack(0.0);
  CHECK(psi_opl(zero, bare) == doctest::Approx(0.0).epsilon(1e-15));

  // index-matched flake is optically absent at any thickness
  for (const double t : {5e-9, 40e-9, 123e-9}) {
    LayerStack matched = hbn_on_sio2_si_stack(t);
    matched.layers[0].index = matched.ambient_index;
    CHECK(std::abs(psi_opl(matched, bare)) < 1e-12);
  }
}

TEST_CASE("hBN OPL curve: monotone below 40 nm, ambiguous onset in band") {
  const OplCurve curve = build_opl_curve(hbn_on_sio2_si_stack(0.0), 0.0, 120e-9, 1201);
  // strictly monotone through 40 nm of physical thickness
  for (Eigen::Index i = 1; i < curve.thickness_m.size(); ++i) {
    if (curve.thickness_m[i] > 40e-9) break;
    CHECK(curve.opl_m[i] > curve.opl_m[i - 1]);
  }
  CHECK(curve.injectivity_limit_m > 40e-9);
  CHECK(curve.injectivity_limit_m < 120e-9);

  // OPL at the injectivity limit sits in the 40-60 nm band
  double onset_opl = 0.0;
  for (Eigen::Index i = 0; i < curve.thickness_m.size(); ++i)
    if (curve.thickness_m[i] <= curve.injectivity_limit_m)
      onset_opl = std::max(onset_opl, curve.opl_m[i]);
  CHECK(onset_opl > 40e-9);
  CHECK(onset_opl < 60e-9);
}

TEST_CASE("constant-index trivial stack gives a linear injective curve") {
  // flake over an index-matched substrate: only the top face reflects, so
  // the reflection phase at the face is constant and the OPL is exactly
  // linear in thickness
  LayerStack stack;
  stack.wavelength_m = 522e-9;
  stack.ambient_index = {1.0, 0.0};
  stack.substrate_index = {1.4, 0.0};
  stack.layers = {{{1.4, 0.0}, 0.0}};
  const OplCurve curve = build_opl_curve(stack, 0.0, 30e-9, 301);
  CHECK(curve.injectivity_limit_m == doctest::Approx(30e-9));
  const double slope =
      (curve.opl_m[300] - curve.opl_m[0]) / (curve.thickness_m[300] - curve.thickness_m[0]);
  for (Eigen::Index i = 1; i <= 300; ++i) {
    const double local = (curve.opl_m[i] - curve.opl_m[i - 1]) /
                         (curve.thickness_m[i] - curve.thickness_m[i - 1]);
    CHECK(local == doctest::Approx(slope).epsilon(1e-9));
  }
}

TEST_CASE("build_opl_curve rejects a reversed range") {
  CHECK_THROWS_AS(build_opl_curve(hbn_on_sio2_si_stack(0.0), 50e-9, 10e-9, 100),
                  RangeOrder);
}

TEST_CASE("invert_opl round trip and ambiguity tagging") {
  const OplCurve curve = build_opl_curve(hbn_on_sio2_si_stack(0.0), 0.0, 120e-9, 2401);

  // round trip at 20 nm within interpolation error
  LayerStack bare = hbn_on_sio2_si_stack(0.0);
  bare.layers.erase(bare.layers.begin());
  const double opl20 = psi_opl(hbn_on_sio2_si_stack(20e-9), bare);
  const OplInversion unique = invert_opl(curve, opl20);
  CHECK_FALSE(unique.ambiguous);
  CHECK(unique.thickness() == doctest::Approx(20e-9).epsilon(0.1 / 20.0));

  // zero maps to zero
  const OplInversion zero = invert_opl(curve, curve.opl_m[0]);
  CHECK_FALSE(zero.ambiguous);
  CHECK(zero.thickness() == doctest::Approx(0.0).epsilon(1e-12));

  // beyond the injectivity limit: query inside the folded band (between the
  // first-branch maximum and the post-turn dip minimum)
  Eigen::Index turn = 0;
  for (Eigen::Index i = 0; i < curve.thickness_m.size(); ++i)
    if (curve.thickness_m[i] <= curve.injectivity_limit_m) turn = i;
  const double onset_opl = curve.opl_m[turn];
  const double dip_min = curve.opl_m.tail(curve.opl_m.size() - turn).minCoeff();
  REQUIRE(dip_min < onset_opl);
  const OplInversion folded = invert_opl(curve, 0.5 * (dip_min + onset_opl));
  CHECK(folded.ambiguous);
  CHECK(folded.candidates_m.size() >= 2);
  CHECK_THROWS_AS(folded.thickness(), ValidationError);

  // outside the tabulated range
  CHECK_THROWS_AS(invert_opl(curve, curve.opl_m.maxCoeff() + 1e-9), OutOfRange);
}

TEST_CASE("fit_index zero-noise identifiability") {
  LayerStack bare = hbn_on_sio2_si_stack(0.0);
  bare.layers.erase(bare.layers.begin());
  std::vector<CalibrationPoint> calibration;
  for (const double t : {8e-9, 15e-9, 22e-9, 30e-9, 38e-9}) {
    LayerStack flake = hbn_on_sio2_si_stack(t);
    calibration.push_back({t, psi_opl(flake, bare)});
  }
  // start the template away from the truth
  LayerStack tmpl = hbn_on_sio2_si_stack(0.0);
  tmpl.layers[0].index = {1.6, 0.0};
  FitOptions opts;
  opts.compute_ci = false;
  const FitResult fit = fit_index(calibration, tmpl, opts);
  CHECK(fit.converged);
  CHECK(fit.param("n") == doctest::Approx(1.849).epsilon(1e-4 / 1.849));
}

TEST_CASE("fit_index with noise covers the truth") {
  LayerStack bare = hbn_on_sio2_si_stack(0.0);
  bare.layers.erase(bare.layers.begin());
  SplitRng rng(90210);
  std::vector<CalibrationPoint> calibration;
  for (const double t : {8e-9, 15e-9, 22e-9, 30e-9, 38e-9}) {
    LayerStack flake = hbn_on_sio2_si_stack(t);
    calibration.push_back({t, psi_opl(flake, bare) + 2e-9 * rng.normal(0.0, 1.0)});
  }
  LayerStack tmpl = hbn_on_sio2_si_stack(0.0);
  tmpl.layers[0].index = {1.7, 0.0};
  FitOptions opts;
  opts.mc_samples = 150;
  const FitResult fit = fit_index(calibration, tmpl, opts);
  CHECK(std::abs(fit.param("n") - 1.849) < 0.05);
  const auto ci = fit.ci95.at("n");
  CHECK(ci.first <= 1.849);
  CHECK(ci.second >= 1.849);
}

TEST_CASE("fit_index flags a single calibration point and rejects none in region") {
  LayerStack bare = hbn_on_sio2_si_stack(0.0);
  bare.layers.erase(bare.layers.begin());
  LayerStack tmpl = hbn_on_sio2_si_stack(0.0);

  std::vector<CalibrationPoint> single{
      {10e-9, psi_opl(hbn_on_sio2_si_stack(10e-9), bare)}};
  const FitResult fit = fit_index(single, tmpl, {});
  CHECK(fit.degenerate_ci);

  std::vector<CalibrationPoint> beyond{{110e-9, 55e-9}, {115e-9, 57e-9}};
  CHECK_THROWS_AS(fit_index(beyond, tmpl, {}), UncalibratableRegion);
}

TEST_CASE("stack and curve serialization round trips") {
  const auto dir = std::filesystem::temp_directory_path();
  const LayerStack stack = hbn_on_sio2_si_stack(25e-9);
  const auto stack_path = dir / "photonkit_stack.json";
  write_stack_json(stack_path, stack);
  const LayerStack back = read_stack_json(stack_path);
  CHECK(back.layers.size() == stack.layers.size());
  CHECK(back.substrate_index.real() == doctest::Approx(stack.substrate_index.real()));
  CHECK(std::abs(reflect(back) - reflect(stack)) < 1e-12);

  const OplCurve curve = build_opl_curve(stack, 0.0, 60e-9, 121);
  const auto curve_path = dir / "photonkit_curve.csv";
  write_opl_curve_csv(curve_path, curve);
  const OplCurve curve_back = read_opl_curve_csv(curve_path);
  REQUIRE(curve_back.thickness_m.size() == curve.thickness_m.size());
  CHECK(std::abs(curve_back.opl_m[60] - curve.opl_m[60]) < 1e-12);
  CHECK(curve_back.injectivity_limit_m ==
        doctest::Approx(curve.injectivity_limit_m).epsilon(1e-6));

  std::filesystem::remove(stack_path);
  std::filesystem::remove(curve_path);
}
