#include "photonkit/fit/models.hpp"

#include <cmath>

namespace photonkit::fitmodels {

namespace {
constexpr double kPi = 3.14159265358979323846;
constexpr double kLn2 = 0.69314718055994530942;
}  // namespace

Eigen::ArrayXd g2(const Eigen::ArrayXd& tau_s, const Eigen::VectorXd& p) {
  const Eigen::ArrayXd x = (tau_s - p[4]).abs();
  return 1.0 - p[0] * (-x / p[2]).exp() + p[1] * (-x / p[3]).exp();
}

Eigen::MatrixXd g2_jacobian(const Eigen::ArrayXd& tau_s, const Eigen::VectorXd& p) {
  const Eigen::ArrayXd d = tau_s - p[4];
  const Eigen::ArrayXd x = d.abs();
  const Eigen::ArrayXd e1 = (-x / p[2]).exp();
  const Eigen::ArrayXd e2 = (-x / p[3]).exp();
  const Eigen::ArrayXd sgn = d.sign();

  Eigen::MatrixXd jac(tau_s.size(), 5);
  jac.col(0) = -e1;
  jac.col(1) = e2;
  jac.col(2) = -p[0] * e1 * x / (p[2] * p[2]);
  jac.col(3) = p[1] * e2 * x / (p[3] * p[3]);
  // d|tau-mu|/dmu = -sign(tau-mu)
  jac.col(4) = sgn * (-p[0] * e1 / p[2] + p[1] * e2 / p[3]);
  return jac;
}

Eigen::ArrayXd decay(const Eigen::ArrayXd& t_s, const Eigen::VectorXd& p) {
  return p[0] * (-t_s / p[1]).exp() + p[2];
}

Eigen::MatrixXd decay_jacobian(const Eigen::ArrayXd& t_s, const Eigen::VectorXd& p) {
  const Eigen::ArrayXd e = (-t_s / p[1]).exp();
  Eigen::MatrixXd jac(t_s.size(), 3);
  jac.col(0) = e;
  jac.col(1) = p[0] * e * t_s / (p[1] * p[1]);
  jac.col(2).setOnes();
  return jac;
}

Eigen::ArrayXd saturation(const Eigen::ArrayXd& power_w, const Eigen::VectorXd& p) {
  return p[0] * power_w / (power_w + p[1]) + p[2];
}

Eigen::MatrixXd saturation_jacobian(const Eigen::ArrayXd& power_w,
                                    const Eigen::VectorXd& p) {
  const Eigen::ArrayXd denom = power_w + p[1];
  Eigen::MatrixXd jac(power_w.size(), 3);
  jac.col(0) = power_w / denom;
  jac.col(1) = -p[0] * power_w / (denom * denom);
  jac.col(2).setOnes();
  return jac;
}

LineshapeParams unpack_lineshape(const Eigen::VectorXd& p, int n_peaks,
                                 bool fit_eta, double eta_fixed) {
  const int stride = fit_eta ? 4 : 3;
  LineshapeParams shape;
  shape.peaks.resize(static_cast<std::size_t>(n_peaks));
  for (int k = 0; k < n_peaks; ++k) {
    auto& peak = shape.peaks[static_cast<std::size_t>(k)];
    peak.center = p[stride * k + 0];
    peak.fwhm = p[stride * k + 1];
    peak.area = p[stride * k + 2];
    peak.gauss_fraction = fit_eta ? p[stride * k + 3] : eta_fixed;
  }
  shape.baseline = p[p.size() - 1];
  return shape;
}

Eigen::VectorXd pack_lineshape(const LineshapeParams& shape, bool fit_eta) {
  const int stride = fit_eta ? 4 : 3;
  const auto n_peaks = static_cast<int>(shape.peaks.size());
  Eigen::VectorXd p(stride * n_peaks + 1);
  for (int k = 0; k < n_peaks; ++k) {
    const auto& peak = shape.peaks[static_cast<std::size_t>(k)];
    p[stride * k + 0] = peak.center;
    p[stride * k + 1] = peak.fwhm;
    p[stride * k + 2] = peak.area;
    if (fit_eta) p[stride * k + 3] = peak.gauss_fraction;
  }
  p[p.size() - 1] = shape.baseline;
  return p;
}

Eigen::ArrayXd spectrum(const Eigen::ArrayXd& wavelength_m, const Eigen::VectorXd& p,
                        int n_peaks, bool fit_eta, double eta_fixed) {
  const LineshapeParams shape = unpack_lineshape(p, n_peaks, fit_eta, eta_fixed);
  Eigen::ArrayXd y = Eigen::ArrayXd::Constant(wavelength_m.size(), shape.baseline);
  for (const auto& peak : shape.peaks) {
    const Eigen::ArrayXd u = 2.0 * (wavelength_m - peak.center) / peak.fwhm;
    const Eigen::ArrayXd lor = 2.0 / (kPi * peak.fwhm) / (1.0 + u.square());
    if (peak.gauss_fraction == 0.0) {
      y += peak.area * lor;
    } else {
      const Eigen::ArrayXd gauss = 2.0 * std::sqrt(kLn2 / kPi) / peak.fwhm *
                                   (-kLn2 * u.square()).exp();
      y += peak.area *
           ((1.0 - peak.gauss_fraction) * lor + peak.gauss_fraction * gauss);
    }
  }
  return y;
}

Eigen::MatrixXd spectrum_jacobian(const Eigen::ArrayXd& wavelength_m,
                                  const Eigen::VectorXd& p, int n_peaks,
                                  bool fit_eta, double eta_fixed) {
  const int stride = fit_eta ? 4 : 3;
  const LineshapeParams shape = unpack_lineshape(p, n_peaks, fit_eta, eta_fixed);
  Eigen::MatrixXd jac = Eigen::MatrixXd::Zero(wavelength_m.size(), p.size());

  for (int k = 0; k < n_peaks; ++k) {
    const auto& peak = shape.peaks[static_cast<std::size_t>(k)];
    const double eta = peak.gauss_fraction;
    const Eigen::ArrayXd d = wavelength_m - peak.center;
    const Eigen::ArrayXd u = 2.0 * d / peak.fwhm;
    const Eigen::ArrayXd u2 = u.square();
    const Eigen::ArrayXd lor = 2.0 / (kPi * peak.fwhm) / (1.0 + u2);
    const Eigen::ArrayXd gauss =
        2.0 * std::sqrt(kLn2 / kPi) / peak.fwhm * (-kLn2 * u2).exp();

    // unit-area profile derivatives
    const Eigen::ArrayXd dlor_dc = lor * (2.0 * u / peak.fwhm) * 2.0 / (1.0 + u2);
    const Eigen::ArrayXd dlor_dw = lor / peak.fwhm * (2.0 * u2 / (1.0 + u2) - 1.0);
    const Eigen::ArrayXd dgauss_dc = gauss * (4.0 * kLn2 * u / peak.fwhm);
    const Eigen::ArrayXd dgauss_dw = gauss / peak.fwhm * (2.0 * kLn2 * u2 - 1.0);

    const Eigen::ArrayXd profile = (1.0 - eta) * lor + eta * gauss;
    jac.col(stride * k + 0) =
        peak.area * ((1.0 - eta) * dlor_dc + eta * dgauss_dc);
    jac.col(stride * k + 1) =
        peak.area * ((1.0 - eta) * dlor_dw + eta * dgauss_dw);
    jac.col(stride * k + 2) = profile;
    if (fit_eta) jac.col(stride * k + 3) = peak.area * (gauss - lor);
  }
  jac.col(p.size() - 1).setOnes();
  return jac;
}

}  // namespace photonkit::fitmodels
