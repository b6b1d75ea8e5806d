#include "photonkit/thinfilm.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <sstream>

#include <nlohmann/json.hpp>

#include "photonkit/constants.hpp"
#include "photonkit/rng.hpp"

namespace photonkit {

namespace {

constexpr double kPi = 3.14159265358979323846;

using Complex = std::complex<double>;
using Matrix2c = Eigen::Matrix2cd;

// characteristic matrix of one layer at normal incidence; the -i sign pairs
// with the convention where Im(n) >= 0 is absorbing
Matrix2c layer_matrix(const Layer& layer, double wavelength) {
  const Complex delta = 2.0 * kPi * layer.index * layer.thickness_m / wavelength;
  const Complex c = std::cos(delta);
  const Complex s = std::sin(delta);
  Matrix2c m;
  m << c, Complex(0, -1) * s / layer.index, Complex(0, -1) * layer.index * s, c;
  return m;
}

double wrap_to_pi(double phi) {
  while (phi > kPi) phi -= 2.0 * kPi;
  while (phi <= -kPi) phi += 2.0 * kPi;
  return phi;
}

}  // namespace

double LayerStack::total_thickness() const {
  double t = 0.0;
  for (const auto& l : layers) t += l.thickness_m;
  return t;
}

void LayerStack::validate() const {
  if (!(wavelength_m > 0.0)) throw ValidationError("LayerStack: wavelength must be > 0");
  if (ambient_index.imag() != 0.0)
    throw ValidationError("LayerStack: ambient must be lossless");
  if (!(ambient_index.real() > 0.0) || !(substrate_index.real() > 0.0))
    throw ValidationError("LayerStack: indices must have positive real part");
  if (substrate_index.imag() < 0.0)
    throw ValidationError("LayerStack: substrate must have Im(n) >= 0");
  for (const auto& l : layers) {
    if (l.thickness_m < 0.0) throw ValidationError("LayerStack: negative thickness");
    if (!(l.index.real() > 0.0) || l.index.imag() < 0.0)
      throw ValidationError("LayerStack: layer index must have Re > 0, Im >= 0");
  }
}

std::complex<double> reflect(const LayerStack& stack) {
  stack.validate();
  Matrix2c m = Matrix2c::Identity();
  for (const auto& layer : stack.layers)
    if (layer.thickness_m > 0.0) m *= layer_matrix(layer, stack.wavelength_m);
  const Complex n0 = stack.ambient_index;
  const Complex ns = stack.substrate_index;
  const Complex b = m(0, 0) + m(0, 1) * ns;
  const Complex c = m(1, 0) + m(1, 1) * ns;
  return (n0 * b - c) / (n0 * b + c);
}

double transmittance(const LayerStack& stack) {
  Matrix2c m = Matrix2c::Identity();
  for (const auto& layer : stack.layers)
    if (layer.thickness_m > 0.0) m *= layer_matrix(layer, stack.wavelength_m);
  const Complex n0 = stack.ambient_index;
  const Complex ns = stack.substrate_index;
  const Complex b = m(0, 0) + m(0, 1) * ns;
  const Complex c = m(1, 0) + m(1, 1) * ns;
  const Complex t = 2.0 * n0 / (n0 * b + c);
  return ns.real() / n0.real() * std::norm(t);
}

double psi_opl(const LayerStack& with_flake, const LayerStack& bare) {
  if (with_flake.wavelength_m != bare.wavelength_m)
    throw ValidationError("psi_opl: stacks must share the wavelength");
  if (with_flake.ambient_index != bare.ambient_index)
    throw ValidationError("psi_opl: stacks must share the ambient");
  const double lambda = with_flake.wavelength_m;
  const double extra = with_flake.total_thickness() - bare.total_thickness();
  const double phi_f = std::arg(reflect(with_flake));
  const double phi_b = std::arg(reflect(bare));
  const double dphi = wrap_to_pi(
      phi_f - phi_b - 4.0 * kPi * with_flake.ambient_index.real() * extra / lambda);
  return (lambda / (4.0 * kPi)) * dphi;
}

OplCurve build_opl_curve(const LayerStack& stack_template, double thickness_min,
                         double thickness_max, int n_points) {
  if (!(thickness_max > thickness_min))
    throw RangeOrder("build_opl_curve: thickness range must ascend");
  if (thickness_min < 0.0)
    throw ValidationError("build_opl_curve: negative thickness");
  if (n_points < 2) throw ValidationError("build_opl_curve: need >= 2 grid points");
  if (stack_template.layers.empty())
    throw ValidationError("build_opl_curve: template needs a flake layer on top");

  LayerStack bare = stack_template;
  bare.layers.erase(bare.layers.begin());
  const double phi_bare = std::arg(reflect(bare));
  const double lambda = stack_template.wavelength_m;
  const double n_amb = stack_template.ambient_index.real();

  OplCurve curve;
  curve.wavelength_m = lambda;
  curve.thickness_m.resize(n_points);
  curve.opl_m.resize(n_points);

  // cumulative unwrap of the height-compensated phase along the grid
  LayerStack stack = stack_template;
  double prev_phi = 0.0;
  double unwrapped = 0.0;
  for (int i = 0; i < n_points; ++i) {
    const double t = thickness_min + (thickness_max - thickness_min) * i /
                                         static_cast<double>(n_points - 1);
    stack.layers[0].thickness_m = t;
    const double phi =
        std::arg(reflect(stack)) - phi_bare - 4.0 * kPi * n_amb * t / lambda;
    if (i == 0) {
      unwrapped = wrap_to_pi(phi);
    } else {
      const double step = wrap_to_pi(phi - prev_phi);
      if (std::abs(step) >= kPi * (1.0 - 1e-12))
        throw UnwrapStep("build_opl_curve: phase step >= pi; refine the grid");
      unwrapped += step;
    }
    prev_phi = phi;
    curve.thickness_m[i] = t;
    curve.opl_m[i] = (lambda / (4.0 * kPi)) * unwrapped;
  }

  // largest thickness below which the tabulated curve is strictly monotone
  curve.injectivity_limit_m = curve.thickness_m[n_points - 1];
  if (n_points >= 2) {
    const bool increasing = curve.opl_m[1] >= curve.opl_m[0];
    for (int i = 1; i < n_points; ++i) {
      const double d = curve.opl_m[i] - curve.opl_m[i - 1];
      if ((increasing && d <= 0.0) || (!increasing && d >= 0.0)) {
        curve.injectivity_limit_m = curve.thickness_m[i - 1];
        break;
      }
    }
  }
  return curve;
}

double OplInversion::thickness() const {
  if (ambiguous || candidates_m.size() != 1)
    throw ValidationError("OplInversion: no unique thickness");
  return candidates_m.front();
}

OplInversion invert_opl(const OplCurve& curve, double opl_m) {
  const Eigen::Index n = curve.opl_m.size();
  if (n < 2) throw ValidationError("invert_opl: curve too short");
  const double lo = curve.opl_m.minCoeff();
  const double hi = curve.opl_m.maxCoeff();
  if (opl_m < lo || opl_m > hi)
    throw OutOfRange("invert_opl: OPL outside the tabulated curve");

  OplInversion result;
  for (Eigen::Index i = 0; i + 1 < n; ++i) {
    const double a = curve.opl_m[i];
    const double b = curve.opl_m[i + 1];
    const bool brackets = (opl_m >= std::min(a, b)) && (opl_m <= std::max(a, b));
    if (!brackets) continue;
    double t;
    if (a == b) {
      t = curve.thickness_m[i];
    } else {
      const double frac = (opl_m - a) / (b - a);
      t = curve.thickness_m[i] +
          frac * (curve.thickness_m[i + 1] - curve.thickness_m[i]);
    }
    if (result.candidates_m.empty() ||
        std::abs(t - result.candidates_m.back()) >
            1e-9 * (curve.thickness_m[n - 1] - curve.thickness_m[0]) + 1e-18)
      result.candidates_m.push_back(t);
  }

  result.ambiguous = result.candidates_m.size() != 1 ||
                     result.candidates_m.front() > curve.injectivity_limit_m;
  return result;
}

FitResult fit_index(const std::vector<CalibrationPoint>& calibration,
                    const LayerStack& stack_template, const FitOptions& opts) {
  if (calibration.empty())
    throw ValidationError("fit_index: no calibration points");
  if (stack_template.layers.empty())
    throw ValidationError("fit_index: template needs a flake layer on top");

  // restrict to the injective region of the template's OPL curve
  const double t_max_data =
      std::max_element(calibration.begin(), calibration.end(),
                       [](const auto& a, const auto& b) {
                         return a.afm_thickness_m < b.afm_thickness_m;
                       })
          ->afm_thickness_m;
  const OplCurve probe =
      build_opl_curve(stack_template, 0.0, std::max(t_max_data * 1.2, 1e-9), 400);
  std::vector<CalibrationPoint> usable;
  for (const auto& p : calibration)
    if (p.afm_thickness_m <= probe.injectivity_limit_m) usable.push_back(p);
  if (usable.empty())
    throw UncalibratableRegion(
        "fit_index: every calibration point lies beyond the injective region");

  const auto n_pts = static_cast<Eigen::Index>(usable.size());
  Eigen::ArrayXd thickness(n_pts), opl_meas(n_pts);
  for (Eigen::Index i = 0; i < n_pts; ++i) {
    thickness[i] = usable[static_cast<std::size_t>(i)].afm_thickness_m;
    opl_meas[i] = usable[static_cast<std::size_t>(i)].measured_opl_m;
  }

  auto model_opl = [&](double index_n, Eigen::ArrayXd& out) {
    LayerStack stack = stack_template;
    LayerStack bare = stack_template;
    bare.layers.erase(bare.layers.begin());
    stack.layers[0].index = Complex(index_n, stack.layers[0].index.imag());
    for (Eigen::Index i = 0; i < out.size(); ++i) {
      stack.layers[0].thickness_m = thickness[i];
      out[i] = psi_opl(stack, bare);
    }
  };

  // single-parameter LM with a central-difference derivative
  auto make_fn = [&](const Eigen::ArrayXd& y) {
    return [&, y](const Eigen::VectorXd& p, Eigen::VectorXd& r, Eigen::MatrixXd* jac) {
      if (!(p[0] > 1.0) || p[0] > 10.0) return false;
      Eigen::ArrayXd model(y.size());
      model_opl(p[0], model);
      r = (model - y).matrix();
      if (jac) {
        const double h = 1e-6 * p[0];
        Eigen::ArrayXd up(y.size()), down(y.size());
        model_opl(p[0] + h, up);
        model_opl(p[0] - h, down);
        jac->resize(y.size(), 1);
        jac->col(0) = ((up - down) / (2.0 * h)).matrix();
      }
      return true;
    };
  };

  Eigen::VectorXd p0(1);
  p0 << stack_template.layers[0].index.real();
  const LmResult lm = levenberg_marquardt(make_fn(opl_meas), p0, opts.lm);

  FitResult result;
  result.model_id = "thinfilm_index";
  result.n_points = static_cast<int>(n_pts);
  result.param_names = {"n"};
  result.param_values = lm.params;
  result.covariance = lm.covariance;
  result.residual_norm = lm.residual_norm;
  result.converged = lm.converged;
  result.stderr_cov["n"] = std::sqrt(std::max(0.0, lm.covariance(0, 0)));
  result.annotations["n_points_in_region"] = std::to_string(usable.size());

  if (!lm.converged)
    throw NotConverged("fit_index: no convergence within iteration budget", result);

  if (opts.compute_ci) {
    if (n_pts < 2) {
      // a single point cannot constrain the noise scale
      result.degenerate_ci = true;
      result.ci95["n"] = {lm.params[0], lm.params[0]};
    } else {
      Eigen::ArrayXd model(n_pts);
      model_opl(lm.params[0], model);
      const Eigen::ArrayXd residuals = opl_meas - model;
      auto sample = [&](std::uint64_t sample_seed) -> std::optional<Eigen::VectorXd> {
        SplitRng rng(sample_seed);
        Eigen::ArrayXd synth(n_pts);
        for (Eigen::Index i = 0; i < n_pts; ++i) {
          const auto pick = static_cast<Eigen::Index>(
              rng.uniform() * static_cast<double>(residuals.size()));
          synth[i] = model[i] + residuals[std::min(pick, residuals.size() - 1)];
        }
        try {
          const LmResult refit = levenberg_marquardt(make_fn(synth), lm.params, opts.lm);
          if (!refit.converged) return std::nullopt;
          return Eigen::VectorXd(refit.params);
        } catch (const Error&) {
          return std::nullopt;
        }
      };
      const BootstrapOutcome boot = mc_confidence({"n"}, sample, opts.mc_samples,
                                                  opts.seed, opts.n_threads);
      result.ci95 = boot.ci95;
      result.n_mc_samples = boot.n_samples;
      const auto ci = result.ci95.at("n");
      if (ci.second - ci.first > 0.5) result.degenerate_ci = true;
    }
  }
  return result;
}

LayerStack hbn_on_sio2_si_stack(double hbn_thickness_m, double wavelength_m) {
  LayerStack stack;
  stack.wavelength_m = wavelength_m;
  stack.ambient_index = {1.0, 0.0};
  stack.substrate_index = constants::si_index;
  stack.layers = {{{constants::hbn_index, 0.0}, hbn_thickness_m},
                  {{constants::sio2_index, 0.0}, 280e-9}};
  return stack;
}

// ---------------------------------------------------------------------------
// file I/O
// ---------------------------------------------------------------------------

LayerStack read_stack_json(const std::filesystem::path& path) {
  std::ifstream f(path);
  if (!f) throw IoError("cannot open: " + path.string());
  nlohmann::json j;
  try {
    f >> j;
  } catch (const nlohmann::json::exception& e) {
    throw IoError("bad stack json: " + std::string(e.what()));
  }
  LayerStack stack;
  stack.wavelength_m = j.value("wavelength_nm", 522.0) * 1e-9;
  stack.ambient_index = {j.value("ambient_n", 1.0), 0.0};
  stack.substrate_index = {j.at("substrate_n").get<double>(),
                           j.value("substrate_k", 0.0)};
  for (const auto& layer : j.at("layers")) {
    stack.layers.push_back({{layer.at("n").get<double>(), layer.value("k", 0.0)},
                            layer.at("thickness_nm").get<double>() * 1e-9});
  }
  stack.validate();
  return stack;
}

void write_stack_json(const std::filesystem::path& path, const LayerStack& stack) {
  nlohmann::json j;
  j["schema_version"] = 1;
  j["wavelength_nm"] = stack.wavelength_m * 1e9;
  j["ambient_n"] = stack.ambient_index.real();
  j["substrate_n"] = stack.substrate_index.real();
  j["substrate_k"] = stack.substrate_index.imag();
  j["layers"] = nlohmann::json::array();
  for (const auto& layer : stack.layers)
    j["layers"].push_back({{"n", layer.index.real()},
                           {"k", layer.index.imag()},
                           {"thickness_nm", layer.thickness_m * 1e9}});
  std::ofstream f(path, std::ios::trunc);
  if (!f) throw IoError("cannot open for writing: " + path.string());
  f << j.dump(2) << "\n";
}

void write_opl_curve_csv(const std::filesystem::path& path, const OplCurve& curve) {
  std::ofstream f(path, std::ios::trunc);
  if (!f) throw IoError("cannot open for writing: " + path.string());
  f << "thickness_nm,opl_nm\n";
  f.precision(10);
  for (Eigen::Index i = 0; i < curve.thickness_m.size(); ++i)
    f << curve.thickness_m[i] * 1e9 << ',' << curve.opl_m[i] * 1e9 << '\n';
}

OplCurve read_opl_curve_csv(const std::filesystem::path& path) {
  std::ifstream f(path);
  if (!f) throw IoError("cannot open: " + path.string());
  std::string line;
  std::getline(f, line);
  std::vector<double> ts, opls;
  while (std::getline(f, line)) {
    if (line.empty()) continue;
    std::stringstream ss(line);
    std::string a, b;
    if (!std::getline(ss, a, ',') || !std::getline(ss, b, ','))
      throw IoError("expected two csv columns in " + path.string());
    ts.push_back(std::stod(a) * 1e-9);
    opls.push_back(std::stod(b) * 1e-9);
  }
  OplCurve curve;
  curve.thickness_m =
      Eigen::Map<const Eigen::ArrayXd>(ts.data(), static_cast<Eigen::Index>(ts.size()));
  curve.opl_m = Eigen::Map<const Eigen::ArrayXd>(opls.data(),
                                                 static_cast<Eigen::Index>(opls.size()));
  // recompute the monotone prefix for a curve loaded without metadata
  curve.injectivity_limit_m = curve.thickness_m[curve.thickness_m.size() - 1];
  if (curve.opl_m.size() >= 2) {
    const bool increasing = curve.opl_m[1] >= curve.opl_m[0];
    for (Eigen::Index i = 1; i < curve.opl_m.size(); ++i) {
      const double d = curve.opl_m[i] - curve.opl_m[i - 1];
      if ((increasing && d <= 0.0) || (!increasing && d >= 0.0)) {
        curve.injectivity_limit_m = curve.thickness_m[i - 1];
        break;
      }
    }
  }
  return curve;
}

}  // namespace photonkit
