#pragma once

#include <Eigen/Dense>
#include <complex>
#include <filesystem>
#include <string>
#include <vector>

#include "photonkit/fit/fitkit.hpp"

// Stratified-media optics at normal incidence via the characteristic-matrix
// (transfer-matrix) method; for laterally uniform films this is the
// zeroth-order limit of a coupled-wave treatment. Used for phase-shift
// interferometry OPL simulation, thickness inversion with ambiguity
// detection, and refractive-index calibration.
namespace photonkit {

struct Layer {
  std::complex<double> index;  // Im >= 0 (lossless or absorbing)
  double thickness_m = 0.0;
};

struct LayerStack {
  std::complex<double> ambient_index{1.0, 0.0};   // top half-space
  std::complex<double> substrate_index{1.0, 0.0}; // bottom half-space
  std::vector<Layer> layers;                      // top to bottom
  double wavelength_m = 522e-9;

  double total_thickness() const;
  void validate() const;
};

// Complex amplitude reflectance of the stack, phase referenced at the top
// interface.
std::complex<double> reflect(const LayerStack& stack);

// Fraction of incident power transmitted into the substrate; |r|^2 + T = 1
// for lossless stacks.
double transmittance(const LayerStack& stack);

// PSI optical path length of the flake stack relative to the bare stack:
// reflection-mode, double pass, OPL = -(lambda/4pi) * dphi with dphi the
// principal-value phase difference taken at a common reference plane (which
// contributes +4pi*n_amb*dt/lambda for the extra stack height dt). The sign
// makes a transparent film on a reflective stack read positive. Both stacks
// must share wavelength and ambient.
double psi_opl(const LayerStack& with_flake, const LayerStack& bare);

struct OplCurve {
  Eigen::ArrayXd thickness_m;  // strictly ascending grid
  Eigen::ArrayXd opl_m;
  double wavelength_m = 0.0;
  std::string stack_id;
  double injectivity_limit_m = 0.0;  // largest thickness with monotone OPL below
};

// Tabulates psi_opl over a thickness grid for the stack template (the flake
// is layers[0]; its thickness is swept), with cumulative phase unwrapping.
// A phase step of >= pi between grid points throws UnwrapStep.
OplCurve build_opl_curve(const LayerStack& stack_template, double thickness_min,
                         double thickness_max, int n_points);

struct OplInversion {
  bool ambiguous = false;
  std::vector<double> candidates_m;  // ascending

  double thickness() const;  // unique candidate; throws when ambiguous
};

OplInversion invert_opl(const OplCurve& curve, double opl_m);

// One-dimensional least squares for the flake index against AFM-calibrated
// (thickness, OPL) pairs; CI via residual-resampling bootstrap.
struct CalibrationPoint {
  double afm_thickness_m = 0.0;
  double measured_opl_m = 0.0;
};

FitResult fit_index(const std::vector<CalibrationPoint>& calibration,
                    const LayerStack& stack_template, const FitOptions& opts = {});

// JSON stack description and CSV `thickness_nm,opl_nm` curve export.
LayerStack read_stack_json(const std::filesystem::path& path);
void write_stack_json(const std::filesystem::path& path, const LayerStack& stack);
void write_opl_curve_csv(const std::filesystem::path& path, const OplCurve& curve);
OplCurve read_opl_curve_csv(const std::filesystem::path& path);

// hBN(t)/SiO2(280 nm)/Si at 522 nm with the documented material constants.
LayerStack hbn_on_sio2_si_stack(double hbn_thickness_m, double wavelength_m = 522e-9);

}  // namespace photonkit
