#pragma once

#include <Eigen/Dense>
#include <cstdint>
#include <filesystem>
#include <map>
#include <optional>
#include <string>
#include <utility>
#include <vector>

#include <nlohmann/json_fwd.hpp>

#include "photonkit/correlator.hpp"
#include "photonkit/emitter_model.hpp"
#include "photonkit/fit/levmar.hpp"

// Nonlinear least-squares fits of the toolkit's models with Monte Carlo 95%
// confidence intervals (parametric bootstrap: Poisson re-synthesis for count
// data, residual resampling otherwise).
namespace photonkit {

struct Spectrum {
  Eigen::ArrayXd wavelength_m;  // strictly ascending
  Eigen::ArrayXd counts;
  std::string metadata;

  void validate() const;
};

struct FitResult {
  std::string model_id;
  std::vector<std::string> param_names;
  Eigen::VectorXd param_values;  // same order; includes derived entries
  std::map<std::string, std::pair<double, double>> ci95;  // Monte Carlo
  std::map<std::string, double> stderr_cov;  // from the fit covariance
  Eigen::MatrixXd covariance;                // fitted (non-derived) params
  double residual_norm = 0.0;
  int n_points = 0;
  bool converged = false;
  int n_mc_samples = 0;
  bool degenerate_ci = false;
  std::map<std::string, std::string> annotations;

  double param(const std::string& name) const;
  bool has_param(const std::string& name) const;

  nlohmann::json to_json() const;
};

// Non-convergence after the iteration budget; carries the best point reached.
class NotConverged : public FitError {
 public:
  NotConverged(std::string what, FitResult best)
      : FitError(std::move(what)), best_so_far(std::move(best)) {}
  FitResult best_so_far;
};

struct FitOptions {
  int mc_samples = 200;  // minimum 100 enforced whenever CIs are requested
  std::uint64_t seed = 20200522;
  int n_threads = 1;
  bool compute_ci = true;
  bool fit_gauss_fraction = false;  // spectrum fits: free pseudo-Voigt eta
  LmOptions lm;
};

// Eq.-(1)-shaped three-level fit of a normalized correlation histogram.
// Reports the derived g2_zero = 1 - A + B with its bootstrap CI; a converged
// fit with t2 <= t1 is rejected with InvalidRegime.
FitResult fit_g2(const CorrelationHistogram& hist,
                 std::optional<ThreeLevelParams> init = {},
                 const FitOptions& opts = {});

ThreeLevelParams three_level_from_fit(const FitResult& fit);

// Single-exponential tail fit amplitude*exp(-t/tau) + baseline over the given
// window (no instrument-response deconvolution; start the window beyond ~4x
// the timing jitter sigma).
FitResult fit_lifetime(const DecayHistogram& decay, std::int64_t window_start_ps,
                       std::int64_t window_end_ps, const FitOptions& opts = {});

// Saturation-law fit plus the sub-saturation log-log slope alpha and its
// classification (defect / free_exciton / biexciton / unclassified, in
// annotations["classification"]).
FitResult fit_saturation(const Eigen::ArrayXd& powers_w,
                         const Eigen::ArrayXd& intensities_cps,
                         const FitOptions& opts = {});

FitResult fit_power_law(const Eigen::ArrayXd& powers_w,
                        const Eigen::ArrayXd& intensities_cps,
                        const FitOptions& opts = {});

std::string classify_power_law(double alpha);

// Multi-peak pseudo-Voigt + constant baseline. Unresolvable overlap is
// reported through degenerate_ci, never silently.
FitResult fit_spectrum(const Spectrum& spectrum, int n_peaks,
                       std::optional<LineshapeParams> init = {},
                       const FitOptions& opts = {});

LineshapeParams lineshape_from_fit(const FitResult& fit);

// Parametric-bootstrap confidence engine. sample(rng) synthesizes one dataset
// from the fitted model and refits it, returning the refit parameter vector
// (ordered as `names`) or nullopt on failure. Deterministic given the seed,
// identical across thread counts.
struct BootstrapOutcome {
  std::map<std::string, std::pair<double, double>> ci95;
  int n_samples = 0;
  int n_failed = 0;
};

BootstrapOutcome mc_confidence(
    const std::vector<std::string>& names,
    const std::function<std::optional<Eigen::VectorXd>(std::uint64_t sample_seed)>& sample,
    int n_samples, std::uint64_t seed, int n_threads = 1);

// CSV `wavelength_nm,counts`
Spectrum read_spectrum_csv(const std::filesystem::path& path);
void write_spectrum_csv(const std::filesystem::path& path, const Spectrum& s);
// CSV `power_w,intensity_cps`
std::pair<Eigen::ArrayXd, Eigen::ArrayXd> read_saturation_csv(
    const std::filesystem::path& path);

void write_fit_json(const std::filesystem::path& path, const FitResult& fit);

}  // namespace photonkit
