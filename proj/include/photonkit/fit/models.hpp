#pragma once

#include <Eigen/Dense>

#include "photonkit/emitter_model.hpp"

// Model curves and their analytic Jacobians in natural parameter space, as
// used by the optimizer. Parameter layouts:
//   g2:         (A, B, t1, t2, mu)                      tau in seconds
//   decay:      (amplitude, tau, baseline)              t in seconds
//   saturation: (I_sat, P_sat, I_d)                     P in watts
//   spectrum:   per peak (center, fwhm, area[, eta]) then trailing baseline
namespace photonkit::fitmodels {

Eigen::ArrayXd g2(const Eigen::ArrayXd& tau_s, const Eigen::VectorXd& p);
Eigen::MatrixXd g2_jacobian(const Eigen::ArrayXd& tau_s, const Eigen::VectorXd& p);

Eigen::ArrayXd decay(const Eigen::ArrayXd& t_s, const Eigen::VectorXd& p);
Eigen::MatrixXd decay_jacobian(const Eigen::ArrayXd& t_s, const Eigen::VectorXd& p);

Eigen::ArrayXd saturation(const Eigen::ArrayXd& power_w, const Eigen::VectorXd& p);
Eigen::MatrixXd saturation_jacobian(const Eigen::ArrayXd& power_w,
                                    const Eigen::VectorXd& p);

// n_peaks pseudo-Voigt peaks over a constant baseline. When fit_eta is false
// every peak uses eta_fixed and the per-peak block is (center, fwhm, area).
Eigen::ArrayXd spectrum(const Eigen::ArrayXd& wavelength_m, const Eigen::VectorXd& p,
                        int n_peaks, bool fit_eta, double eta_fixed);
Eigen::MatrixXd spectrum_jacobian(const Eigen::ArrayXd& wavelength_m,
                                  const Eigen::VectorXd& p, int n_peaks,
                                  bool fit_eta, double eta_fixed);

LineshapeParams unpack_lineshape(const Eigen::VectorXd& p, int n_peaks,
                                 bool fit_eta, double eta_fixed);
Eigen::VectorXd pack_lineshape(const LineshapeParams& shape, bool fit_eta);

}  // namespace photonkit::fitmodels
