#include "photonkit/fit/fitkit.hpp"

#include <algorithm>
#include <atomic>
#include <cmath>
#include <fstream>
#include <sstream>
#include <thread>

#include <nlohmann/json.hpp>

#include "photonkit/fit/models.hpp"
#include "photonkit/rng.hpp"

namespace photonkit {

namespace {

double percentile(std::vector<double> v, double q) {
  std::sort(v.begin(), v.end());
  if (v.empty()) return std::numeric_limits<double>::quiet_NaN();
  const double h = q * static_cast<double>(v.size() - 1);
  const auto lo = static_cast<std::size_t>(h);
  if (lo + 1 >= v.size()) return v.back();
  const double frac = h - static_cast<double>(lo);
  return v[lo] + frac * (v[lo + 1] - v[lo]);
}

Eigen::ArrayXd to_array(const std::vector<double>& v) {
  return Eigen::Map<const Eigen::ArrayXd>(v.data(), static_cast<Eigen::Index>(v.size()));
}

// weights 1/max(counts,1): Poisson count-noise model
Eigen::ArrayXd count_weights(const Eigen::ArrayXd& counts) {
  return counts.max(1.0).inverse().sqrt();  // sqrt of the weight, applied to r
}

// Internal smooth reparameterization so parameter invariants hold by
// construction, the optimizer never stalls on a domain boundary, and every
// internal coordinate is O(1): Log for strictly positive scales, Sqrt
// (natural = scale * internal^2) for non-negative amplitudes, Linear with an
// explicit scale otherwise.
struct ParamTf {
  enum Kind { Linear, Log, Sqrt } kind = Linear;
  double scale = 1.0;
};

Eigen::VectorXd tf_to_internal(const std::vector<ParamTf>& kinds,
                               const Eigen::VectorXd& natural) {
  Eigen::VectorXd internal(natural.size());
  for (Eigen::Index i = 0; i < natural.size(); ++i) {
    const auto& tf = kinds[static_cast<std::size_t>(i)];
    switch (tf.kind) {
      case ParamTf::Linear: internal[i] = natural[i] / tf.scale; break;
      case ParamTf::Log: internal[i] = std::log(natural[i]); break;
      // small floor so a refit seeded exactly at zero is not pinned to the
      // d(natural)/d(internal) = 0 saddle
      case ParamTf::Sqrt:
        internal[i] = std::sqrt(std::max(natural[i] / tf.scale, 1e-10));
        break;
    }
  }
  return internal;
}

Eigen::VectorXd tf_to_natural(const std::vector<ParamTf>& kinds,
                              const Eigen::VectorXd& internal) {
  Eigen::VectorXd natural(internal.size());
  for (Eigen::Index i = 0; i < internal.size(); ++i) {
    const auto& tf = kinds[static_cast<std::size_t>(i)];
    switch (tf.kind) {
      case ParamTf::Linear: natural[i] = internal[i] * tf.scale; break;
      case ParamTf::Log: natural[i] = std::exp(internal[i]); break;
      case ParamTf::Sqrt: natural[i] = tf.scale * internal[i] * internal[i]; break;
    }
  }
  return natural;
}

Eigen::VectorXd tf_chain(const std::vector<ParamTf>& kinds,
                         const Eigen::VectorXd& internal) {
  Eigen::VectorXd d(internal.size());
  for (Eigen::Index i = 0; i < internal.size(); ++i) {
    const auto& tf = kinds[static_cast<std::size_t>(i)];
    switch (tf.kind) {
      case ParamTf::Linear: d[i] = tf.scale; break;
      case ParamTf::Log: d[i] = std::exp(internal[i]); break;
      case ParamTf::Sqrt: d[i] = 2.0 * tf.scale * internal[i]; break;
    }
  }
  return d;
}

// Runs LM in the transformed space; returns params and covariance mapped
// back to natural coordinates.
LmResult run_lm_transformed(const std::vector<ParamTf>& kinds,
                            const LmFunction& natural_fn,
                            const Eigen::VectorXd& natural_init,
                            const LmOptions& opts) {
  LmFunction internal_fn = [&](const Eigen::VectorXd& p_int, Eigen::VectorXd& r,
                               Eigen::MatrixXd* jac) {
    const Eigen::VectorXd nat = tf_to_natural(kinds, p_int);
    if (!jac) return natural_fn(nat, r, nullptr);
    Eigen::MatrixXd jac_nat;
    if (!natural_fn(nat, r, &jac_nat)) return false;
    const Eigen::VectorXd chain = tf_chain(kinds, p_int);
    *jac = jac_nat * chain.asDiagonal();
    return true;
  };
  LmResult result =
      levenberg_marquardt(internal_fn, tf_to_internal(kinds, natural_init), opts);
  const Eigen::VectorXd chain = tf_chain(kinds, result.params);
  result.covariance =
      chain.asDiagonal() * result.covariance * chain.asDiagonal();
  result.params = tf_to_natural(kinds, result.params);
  return result;
}

void fill_result_params(FitResult& result, std::vector<std::string> names,
                        const Eigen::VectorXd& values, const LmResult& lm) {
  result.param_names = std::move(names);
  result.param_values = values;
  result.covariance = lm.covariance;
  result.residual_norm = lm.residual_norm;
  result.converged = lm.converged;
  for (Eigen::Index i = 0; i < lm.params.size(); ++i)
    result.stderr_cov[result.param_names[static_cast<std::size_t>(i)]] =
        std::sqrt(std::max(0.0, lm.covariance(i, i)));
}

void attach_ci(FitResult& result, const BootstrapOutcome& boot) {
  result.ci95 = boot.ci95;
  result.n_mc_samples = boot.n_samples;
}

}  // namespace

void Spectrum::validate() const {
  if (wavelength_m.size() != counts.size())
    throw ValidationError("Spectrum: wavelength/count length mismatch");
  if (wavelength_m.size() < 2) throw ValidationError("Spectrum: too few points");
  for (Eigen::Index i = 1; i < wavelength_m.size(); ++i)
    if (!(wavelength_m[i] > wavelength_m[i - 1]))
      throw ValidationError("Spectrum: wavelengths not strictly ascending");
  if ((counts < 0.0).any())
    throw ValidationError("Spectrum: negative counts");
}

double FitResult::param(const std::string& name) const {
  for (std::size_t i = 0; i < param_names.size(); ++i)
    if (param_names[i] == name) return param_values[static_cast<Eigen::Index>(i)];
  throw ValidationError("FitResult: unknown parameter " + name);
}

bool FitResult::has_param(const std::string& name) const {
  return std::find(param_names.begin(), param_names.end(), name) != param_names.end();
}

nlohmann::json FitResult::to_json() const {
  nlohmann::json j;
  j["schema_version"] = 1;
  j["model_id"] = model_id;
  nlohmann::json params = nlohmann::json::object();
  for (std::size_t i = 0; i < param_names.size(); ++i)
    params[param_names[i]] = param_values[static_cast<Eigen::Index>(i)];
  j["params"] = params;
  nlohmann::json ci = nlohmann::json::object();
  for (const auto& [name, interval] : ci95)
    ci[name] = {interval.first, interval.second};
  j["ci95"] = ci;
  j["converged"] = converged;
  j["n_mc_samples"] = n_mc_samples;
  j["residual_norm"] = residual_norm;
  j["n_points"] = n_points;
  j["degenerate_ci"] = degenerate_ci;
  nlohmann::json se = nlohmann::json::object();
  for (const auto& [name, s] : stderr_cov) se[name] = s;
  j["stderr"] = se;
  j["param_order"] = param_names;
  std::vector<std::vector<double>> cov;
  for (Eigen::Index r = 0; r < covariance.rows(); ++r) {
    std::vector<double> row;
    for (Eigen::Index c = 0; c < covariance.cols(); ++c)
      row.push_back(covariance(r, c));
    cov.push_back(std::move(row));
  }
  j["covariance"] = cov;
  j["annotations"] = annotations;
  return j;
}

BootstrapOutcome mc_confidence(
    const std::vector<std::string>& names,
    const std::function<std::optional<Eigen::VectorXd>(std::uint64_t)>& sample,
    int n_samples, std::uint64_t seed, int n_threads) {
  if (n_samples < 100)
    throw InsufficientSamples("mc_confidence: at least 100 bootstrap samples required");

  const auto n_cols = static_cast<Eigen::Index>(names.size());
  Eigen::MatrixXd rows(n_samples, n_cols);
  std::vector<char> ok(static_cast<std::size_t>(n_samples), 0);

  SplitRng base(seed);
  auto run_one = [&](int i) {
    const std::uint64_t sample_seed =
        base.split(0xB007 + static_cast<std::uint64_t>(i)).base_seed();
    if (auto p = sample(sample_seed); p && p->size() == n_cols && p->allFinite()) {
      rows.row(i) = p->transpose();
      ok[static_cast<std::size_t>(i)] = 1;
    }
  };

  if (n_threads <= 1) {
    for (int i = 0; i < n_samples; ++i) run_one(i);
  } else {
    std::atomic<int> next{0};
    auto worker = [&] {
      for (int i = next.fetch_add(1); i < n_samples; i = next.fetch_add(1)) run_one(i);
    };
    std::vector<std::thread> pool;
    for (int t = 0; t < n_threads; ++t) pool.emplace_back(worker);
    for (auto& th : pool) th.join();
  }

  BootstrapOutcome out;
  out.n_samples = n_samples;
  for (const char o : ok)
    if (!o) ++out.n_failed;
  if (out.n_failed * 5 > n_samples)
    throw UnstableBootstrap("mc_confidence: more than 20% of refits failed (" +
                            std::to_string(out.n_failed) + "/" +
                            std::to_string(n_samples) + ")");

  for (Eigen::Index c = 0; c < n_cols; ++c) {
    std::vector<double> col;
    col.reserve(static_cast<std::size_t>(n_samples));
    for (int i = 0; i < n_samples; ++i)
      if (ok[static_cast<std::size_t>(i)]) col.push_back(rows(i, c));
    out.ci95[names[static_cast<std::size_t>(c)]] = {percentile(col, 0.025),
                                                    percentile(col, 0.975)};
  }
  return out;
}

// ---------------------------------------------------------------------------
// g2
// ---------------------------------------------------------------------------

namespace {

ThreeLevelParams g2_init_heuristic(const Eigen::ArrayXd& tau_s,
                                   const Eigen::ArrayXd& values) {
  const Eigen::Index n = values.size();
  Eigen::Index idx_min = 0;
  values.minCoeff(&idx_min);

  ThreeLevelParams init;
  init.delay_offset = tau_s[idx_min];
  init.antibunch_amp = std::clamp(1.0 - values[idx_min], 1e-3, 1.9);

  // bunching baseline from the flank mean (robust to per-bin noise)
  const auto n_outer = std::max<Eigen::Index>(2, n / 10);
  const double flank_mean =
      (values.head(n_outer).mean() + values.tail(n_outer).mean()) / 2.0;
  init.bunch_amp = std::clamp(flank_mean - 1.0, 1e-4, 2.0);
  if (init.antibunch_amp > 1.0 + init.bunch_amp)
    init.antibunch_amp = 1.0 + init.bunch_amp;

  // half-recovery lag -> t1
  const double half_level = 1.0 - 0.5 * init.antibunch_amp;
  double t_half = 0.0;
  for (Eigen::Index off = 1; off < n; ++off) {
    const Eigen::Index right = idx_min + off;
    const Eigen::Index left = idx_min - off;
    if (right < n && values[right] >= half_level) {
      t_half = std::abs(tau_s[right] - init.delay_offset);
      break;
    }
    if (left >= 0 && values[left] >= half_level) {
      t_half = std::abs(tau_s[left] - init.delay_offset);
      break;
    }
  }
  const double span = tau_s[n - 1] - tau_s[0];
  init.excited_lifetime = std::clamp(t_half / 0.69314718056, span / (2.0 * n), span);

  // bunching tail e-folding -> t2
  double t2 = 10.0 * init.excited_lifetime;
  if (init.bunch_amp > 0.02) {
    const double level = 1.0 + init.bunch_amp / 2.718281828;
    for (Eigen::Index off = 1; off < n; ++off) {
      const Eigen::Index right = idx_min + off;
      if (right < n && values[right] > 1.0 &&
          values[right] <= level) {
        t2 = std::abs(tau_s[right] - init.delay_offset);
        break;
      }
    }
  }
  init.shelving_lifetime = std::max(t2, 1.5 * init.excited_lifetime);
  return init;
}

// positivity is carried by the parameter transforms; the explicit checks are
// the dip floor plus resolvability boxes (a timescale below one bin or far
// beyond the window opens a flat degenerate valley, e.g. B->inf with t2->0)
bool g2_domain(const Eigen::VectorXd& p, double bin_s, double span_s) {
  if (1.0 - p[0] + p[1] < -1e-9) return false;
  if (p[0] > 10.0 || p[1] > 10.0) return false;
  if (p[2] < 0.1 * bin_s || p[2] > 100.0 * span_s) return false;
  if (p[3] < 0.1 * bin_s || p[3] > 100.0 * span_s) return false;
  return std::abs(p[4]) <= span_s;
}

// mu carries nanosecond scale so every internal coordinate is O(1)
const std::vector<ParamTf> kG2Kinds{{ParamTf::Sqrt, 1.0},
                                    {ParamTf::Sqrt, 1.0},
                                    {ParamTf::Log, 1.0},
                                    {ParamTf::Log, 1.0},
                                    {ParamTf::Linear, 1e-9}};

}  // namespace

FitResult fit_g2(const CorrelationHistogram& hist,
                 std::optional<ThreeLevelParams> init, const FitOptions& opts) {
  if (hist.n_bins() < 10) throw ValidationError("fit_g2: need at least 10 bins");
  if (hist.normalized.size() != hist.n_bins())
    throw ValidationError("fit_g2: histogram is not normalized");

  const Eigen::ArrayXd tau_s = hist.bin_centers_ps() * 1e-12;
  const Eigen::ArrayXd values = hist.normalized;
  const bool have_counts = hist.raw_counts.sum() > 0 && hist.normalization_factor > 0.0;
  const double factor = hist.normalization_factor;
  const Eigen::ArrayXd sqrt_w =
      have_counts ? count_weights(hist.raw_counts.cast<double>()).eval()
                  : Eigen::ArrayXd::Ones(hist.n_bins()).eval();

  const ThreeLevelParams start = init ? *init : g2_init_heuristic(tau_s, values);
  Eigen::VectorXd p0(5);
  p0 << start.antibunch_amp, start.bunch_amp, start.excited_lifetime,
      start.shelving_lifetime, start.delay_offset;

  const double bin_s =
      static_cast<double>(hist.bin_edges_ps[1] - hist.bin_edges_ps[0]) * 1e-12;
  const double span_s = static_cast<double>(hist.lag_range_ps) * 1e-12;

  // residuals in count space when counts are available, else on normalized
  // values directly (noise-free synthetic input)
  auto make_fn = [&](const Eigen::ArrayXd& y_norm) {
    return [&, y_norm](const Eigen::VectorXd& p, Eigen::VectorXd& r,
                       Eigen::MatrixXd* jac) {
      if (!g2_domain(p, bin_s, span_s)) return false;
      const Eigen::ArrayXd model = fitmodels::g2(tau_s, p);
      const double scale = have_counts ? factor : 1.0;
      r = (scale * (y_norm - model) * sqrt_w).matrix();
      if (jac) {
        *jac = fitmodels::g2_jacobian(tau_s, p);
        for (Eigen::Index c = 0; c < jac->cols(); ++c)
          jac->col(c) = (-scale * jac->col(c).array() * sqrt_w).matrix();
      }
      return true;
    };
  };

  const LmResult lm = run_lm_transformed(kG2Kinds, make_fn(values), p0, opts.lm);

  FitResult result;
  result.model_id = "g2_three_level";
  result.n_points = static_cast<int>(hist.n_bins());
  Eigen::VectorXd full(6);
  full << lm.params[0], lm.params[1], lm.params[2], lm.params[3], lm.params[4],
      1.0 - lm.params[0] + lm.params[1];
  fill_result_params(result, {"A", "B", "t1", "t2", "mu", "g2_zero"}, full, lm);

  if (!lm.converged)
    throw NotConverged("fit_g2: no convergence within iteration budget", result);
  // with the bunching term at noise level t2 is inert; only a live term can
  // violate the regime
  if (lm.params[1] > 0.01 && lm.params[3] <= lm.params[2])
    throw InvalidRegime("fit_g2: fitted shelving lifetime t2 <= t1");

  if (opts.compute_ci) {
    const Eigen::ArrayXd model = fitmodels::g2(tau_s, lm.params);
    const Eigen::ArrayXd residuals = values - model;
    auto sample = [&](std::uint64_t sample_seed) -> std::optional<Eigen::VectorXd> {
      SplitRng rng(sample_seed);
      Eigen::ArrayXd synth(values.size());
      if (have_counts) {
        for (Eigen::Index i = 0; i < synth.size(); ++i)
          synth[i] = static_cast<double>(
                         rng.poisson(std::max(0.0, model[i] * factor))) /
                     factor;
      } else {
        for (Eigen::Index i = 0; i < synth.size(); ++i) {
          const auto pick = static_cast<Eigen::Index>(
              rng.uniform() * static_cast<double>(residuals.size()));
          synth[i] = model[i] + residuals[std::min(pick, residuals.size() - 1)];
        }
      }
      try {
        const LmResult refit =
            run_lm_transformed(kG2Kinds, make_fn(synth), lm.params, opts.lm);
        if (!refit.converged) return std::nullopt;
        Eigen::VectorXd v(6);
        v << refit.params[0], refit.params[1], refit.params[2], refit.params[3],
            refit.params[4], 1.0 - refit.params[0] + refit.params[1];
        return v;
      } catch (const Error&) {
        return std::nullopt;
      }
    };
    attach_ci(result, mc_confidence(result.param_names, sample, opts.mc_samples,
                                    opts.seed, opts.n_threads));
  }
  return result;
}

ThreeLevelParams three_level_from_fit(const FitResult& fit) {
  ThreeLevelParams p;
  p.antibunch_amp = fit.param("A");
  p.bunch_amp = fit.param("B");
  p.excited_lifetime = fit.param("t1");
  p.shelving_lifetime = fit.param("t2");
  p.delay_offset = fit.param("mu");
  return p;
}

// ---------------------------------------------------------------------------
// lifetime
// ---------------------------------------------------------------------------

FitResult fit_lifetime(const DecayHistogram& decay, std::int64_t window_start_ps,
                       std::int64_t window_end_ps, const FitOptions& opts) {
  if (decay.n_bins() < 1) throw ValidationError("fit_lifetime: empty histogram");
  const std::int64_t lo = decay.bin_edges_ps[0];
  const std::int64_t hi = decay.bin_edges_ps[decay.bin_edges_ps.size() - 1];
  if (window_start_ps < lo || window_end_ps > hi || window_start_ps >= window_end_ps)
    throw ValidationError("fit_lifetime: window outside histogram span");

  std::vector<double> t_list, c_list;
  const Eigen::ArrayXd centers = decay.bin_centers_ps();
  for (Eigen::Index i = 0; i < decay.n_bins(); ++i) {
    if (centers[i] >= static_cast<double>(window_start_ps) &&
        centers[i] <= static_cast<double>(window_end_ps)) {
      t_list.push_back((centers[i] - static_cast<double>(window_start_ps)) * 1e-12);
      c_list.push_back(static_cast<double>(decay.counts[i]));
    }
  }
  if (t_list.size() < 10)
    throw ValidationError("fit_lifetime: fewer than 10 bins in the fit window");
  const Eigen::ArrayXd t = to_array(t_list);
  const Eigen::ArrayXd counts = to_array(c_list);
  if (counts.maxCoeff() <= 0.0)
    throw EmptyDecay("fit_lifetime: no counts in the fit window");

  // init: baseline from the tail, tau from a log-linear regression
  const auto n = counts.size();
  const auto n_tail = std::max<Eigen::Index>(1, n / 10);
  const double b0 = counts.tail(n_tail).mean();
  double tau0 = (t[n - 1] - t[0]) / 3.0;
  double amp0 = std::max(counts.maxCoeff() - b0, 1.0);
  {
    std::vector<double> xs, ys;
    for (Eigen::Index i = 0; i < n; ++i)
      if (counts[i] - b0 > 0.5) {
        xs.push_back(t[i]);
        ys.push_back(std::log(counts[i] - b0));
      }
    if (xs.size() >= 3) {
      const Eigen::ArrayXd x = to_array(xs), y = to_array(ys);
      const double mx = x.mean(), my = y.mean();
      const double sxx = ((x - mx) * (x - mx)).sum();
      if (sxx > 0) {
        const double slope = ((x - mx) * (y - my)).sum() / sxx;
        if (slope < -1e-3) {
          tau0 = -1.0 / slope;
          amp0 = std::exp(my - slope * mx);
        }
      }
    }
  }

  const Eigen::ArrayXd sqrt_w = count_weights(counts);
  const double amp_scale = std::max(amp0, 1.0);
  const std::vector<ParamTf> kinds{{ParamTf::Linear, amp_scale},
                                   {ParamTf::Log, 1.0},
                                   {ParamTf::Linear, amp_scale}};
  auto make_fn = [&](const Eigen::ArrayXd& y) {
    return [&, y](const Eigen::VectorXd& p, Eigen::VectorXd& r, Eigen::MatrixXd* jac) {
      r = ((y - fitmodels::decay(t, p)) * sqrt_w).matrix();
      if (jac) {
        *jac = fitmodels::decay_jacobian(t, p);
        for (Eigen::Index c = 0; c < jac->cols(); ++c)
          jac->col(c) = (-jac->col(c).array() * sqrt_w).matrix();
      }
      return true;
    };
  };

  Eigen::VectorXd p0(3);
  p0 << amp0, tau0, std::max(b0, 0.0);
  const LmResult lm = run_lm_transformed(kinds, make_fn(counts), p0, opts.lm);

  FitResult result;
  result.model_id = "lifetime_single_exp";
  result.n_points = static_cast<int>(n);
  fill_result_params(result, {"amplitude", "tau", "baseline"}, lm.params, lm);
  if (!lm.converged)
    throw NotConverged("fit_lifetime: no convergence within iteration budget", result);

  if (opts.compute_ci) {
    const Eigen::ArrayXd model = fitmodels::decay(t, lm.params);
    auto sample = [&](std::uint64_t sample_seed) -> std::optional<Eigen::VectorXd> {
      SplitRng rng(sample_seed);
      Eigen::ArrayXd synth(n);
      for (Eigen::Index i = 0; i < n; ++i)
        synth[i] = static_cast<double>(rng.poisson(std::max(0.0, model[i])));
      try {
        const LmResult refit =
            run_lm_transformed(kinds, make_fn(synth), lm.params, opts.lm);
        if (!refit.converged) return std::nullopt;
        return Eigen::VectorXd(refit.params);
      } catch (const Error&) {
        return std::nullopt;
      }
    };
    attach_ci(result, mc_confidence(result.param_names, sample, opts.mc_samples,
                                    opts.seed, opts.n_threads));
  }
  return result;
}

// ---------------------------------------------------------------------------
// saturation / power law
// ---------------------------------------------------------------------------

std::string classify_power_law(double alpha) {
  if (std::abs(alpha - 1.0) <= 0.05) return "free_exciton";
  if (std::abs(alpha - 2.0) <= 0.10) return "biexciton";
  if (alpha < 0.95) return "defect";
  return "unclassified";
}

namespace {

// closed-form weighted linear LS of y = a*x + b; returns (a, b, cov)
struct LinearFit {
  double slope, intercept;
  Eigen::Matrix2d covariance;
  double residual_norm;
};

LinearFit linear_fit(const Eigen::ArrayXd& x, const Eigen::ArrayXd& y) {
  Eigen::MatrixXd design(x.size(), 2);
  design.col(0) = x.matrix();
  design.col(1).setOnes();
  const Eigen::Vector2d sol =
      design.colPivHouseholderQr().solve(y.matrix()).eval();
  const Eigen::VectorXd res = y.matrix() - design * sol;
  const double dof = std::max<double>(1.0, static_cast<double>(x.size()) - 2.0);
  const Eigen::Matrix2d cov =
      (design.transpose() * design).inverse() * (res.squaredNorm() / dof);
  return {sol[0], sol[1], cov, res.norm()};
}

}  // namespace

FitResult fit_power_law(const Eigen::ArrayXd& powers_w,
                        const Eigen::ArrayXd& intensities_cps,
                        const FitOptions& opts) {
  std::vector<double> xs, ys;
  for (Eigen::Index i = 0; i < powers_w.size(); ++i)
    if (powers_w[i] > 0.0 && intensities_cps[i] > 0.0) {
      xs.push_back(std::log10(powers_w[i]));
      ys.push_back(std::log10(intensities_cps[i]));
    }
  if (xs.size() < 2)
    throw ValidationError("fit_power_law: need at least 2 positive points");
  const Eigen::ArrayXd x = to_array(xs), y = to_array(ys);
  if ((x - x[0]).abs().maxCoeff() == 0.0)
    throw DegenerateDesign("fit_power_law: all powers equal");

  const LinearFit lin = linear_fit(x, y);
  FitResult result;
  result.model_id = "power_law";
  result.n_points = static_cast<int>(xs.size());
  result.param_names = {"alpha", "log_prefactor"};
  result.param_values = Eigen::Vector2d(lin.slope, lin.intercept);
  result.covariance = lin.covariance;
  result.residual_norm = lin.residual_norm;
  result.converged = true;
  result.stderr_cov["alpha"] = std::sqrt(std::max(0.0, lin.covariance(0, 0)));
  result.stderr_cov["log_prefactor"] = std::sqrt(std::max(0.0, lin.covariance(1, 1)));
  result.annotations["classification"] = classify_power_law(lin.slope);

  if (opts.compute_ci) {
    const Eigen::ArrayXd yhat = lin.slope * x + lin.intercept;
    const Eigen::ArrayXd residuals = y - yhat;
    auto sample = [&](std::uint64_t sample_seed) -> std::optional<Eigen::VectorXd> {
      SplitRng rng(sample_seed);
      Eigen::ArrayXd synth(y.size());
      for (Eigen::Index i = 0; i < y.size(); ++i) {
        const auto pick = static_cast<Eigen::Index>(
            rng.uniform() * static_cast<double>(residuals.size()));
        synth[i] = yhat[i] + residuals[std::min(pick, residuals.size() - 1)];
      }
      const LinearFit refit = linear_fit(x, synth);
      return Eigen::VectorXd(Eigen::Vector2d(refit.slope, refit.intercept));
    };
    attach_ci(result, mc_confidence(result.param_names, sample, opts.mc_samples,
                                    opts.seed, opts.n_threads));
  }
  return result;
}

FitResult fit_saturation(const Eigen::ArrayXd& powers_w,
                         const Eigen::ArrayXd& intensities_cps,
                         const FitOptions& opts) {
  if (powers_w.size() != intensities_cps.size())
    throw ValidationError("fit_saturation: length mismatch");
  std::vector<double> distinct(powers_w.data(), powers_w.data() + powers_w.size());
  std::sort(distinct.begin(), distinct.end());
  distinct.erase(std::unique(distinct.begin(), distinct.end()), distinct.end());
  if (distinct.size() == 1)
    throw DegenerateDesign("fit_saturation: all powers equal");
  if (distinct.size() < 4)
    throw ValidationError("fit_saturation: need at least 4 distinct powers");

  // init: dark level from the low-power end, P_sat at the half-rise
  const double i_max = intensities_cps.maxCoeff();
  const double p_max = powers_w.maxCoeff();
  Eigen::Index idx_min = 0;
  powers_w.minCoeff(&idx_min);
  const double i_d0 = std::max(0.0, std::min(0.5 * intensities_cps[idx_min],
                                             0.25 * i_max));
  const double half = i_d0 + 0.5 * (i_max - i_d0);
  double p_half = 0.5 * p_max;
  for (Eigen::Index i = 0; i < powers_w.size(); ++i)
    if (intensities_cps[i] >= half) {
      p_half = powers_w[i];
      break;
    }
  Eigen::VectorXd p0(3);
  p0 << (i_max - i_d0) * (p_max + p_half) / std::max(p_max, 1e-300), p_half, i_d0;

  const std::vector<ParamTf> kinds{{ParamTf::Log, 1.0},
                                   {ParamTf::Log, 1.0},
                                   {ParamTf::Sqrt, std::max(i_max, 1.0)}};
  auto make_fn = [&](const Eigen::ArrayXd& y) {
    return [&, y](const Eigen::VectorXd& p, Eigen::VectorXd& r, Eigen::MatrixXd* jac) {
      r = (y - fitmodels::saturation(powers_w, p)).matrix();
      if (jac) {
        *jac = -fitmodels::saturation_jacobian(powers_w, p);
      }
      return true;
    };
  };

  const LmResult lm =
      run_lm_transformed(kinds, make_fn(intensities_cps), p0, opts.lm);

  // sub-saturation slope: points below P_sat/2 when that leaves enough of
  // them, otherwise the whole power range
  std::vector<double> sub_p, sub_i;
  for (Eigen::Index i = 0; i < powers_w.size(); ++i)
    if (powers_w[i] <= 0.5 * lm.params[1]) {
      sub_p.push_back(powers_w[i]);
      sub_i.push_back(intensities_cps[i]);
    }
  const bool use_subset = sub_p.size() >= 3;
  FitOptions alpha_opts = opts;
  alpha_opts.compute_ci = false;
  const FitResult alpha_fit =
      use_subset ? fit_power_law(to_array(sub_p), to_array(sub_i), alpha_opts)
                 : fit_power_law(powers_w, intensities_cps, alpha_opts);
  const double alpha = alpha_fit.param("alpha");
  const double log_pref = alpha_fit.param("log_prefactor");

  FitResult result;
  result.model_id = "saturation";
  result.n_points = static_cast<int>(powers_w.size());
  Eigen::VectorXd full(5);
  full << lm.params[0], lm.params[1], lm.params[2], alpha, log_pref;
  fill_result_params(result, {"I_sat", "P_sat", "I_d", "alpha", "log_prefactor"},
                     full, lm);
  result.converged = lm.converged;
  result.annotations["classification"] = classify_power_law(alpha);
  result.annotations["alpha_fit_points"] =
      std::to_string(use_subset ? sub_p.size() : static_cast<std::size_t>(powers_w.size()));

  if (opts.compute_ci && lm.converged) {
    const Eigen::ArrayXd yhat = fitmodels::saturation(powers_w, lm.params);
    const Eigen::ArrayXd residuals = intensities_cps - yhat;
    auto sample = [&](std::uint64_t sample_seed) -> std::optional<Eigen::VectorXd> {
      SplitRng rng(sample_seed);
      Eigen::ArrayXd synth(yhat.size());
      for (Eigen::Index i = 0; i < yhat.size(); ++i) {
        const auto pick = static_cast<Eigen::Index>(
            rng.uniform() * static_cast<double>(residuals.size()));
        synth[i] = yhat[i] + residuals[std::min(pick, residuals.size() - 1)];
      }
      try {
        const LmResult refit =
            run_lm_transformed(kinds, make_fn(synth), lm.params, opts.lm);
        if (!refit.converged) return std::nullopt;
        std::vector<double> sp, si;
        for (Eigen::Index i = 0; i < powers_w.size(); ++i)
          if (powers_w[i] <= 0.5 * refit.params[1]) {
            sp.push_back(powers_w[i]);
            si.push_back(synth[i]);
          }
        FitOptions sub_opts = opts;
        sub_opts.compute_ci = false;
        const FitResult a = sp.size() >= 3
                                ? fit_power_law(to_array(sp), to_array(si), sub_opts)
                                : fit_power_law(powers_w, synth, sub_opts);
        Eigen::VectorXd v(5);
        v << refit.params[0], refit.params[1], refit.params[2], a.param("alpha"),
            a.param("log_prefactor");
        return v;
      } catch (const Error&) {
        return std::nullopt;
      }
    };
    attach_ci(result, mc_confidence(result.param_names, sample, opts.mc_samples,
                                    opts.seed, opts.n_threads));
  }
  return result;
}

// ---------------------------------------------------------------------------
// spectrum
// ---------------------------------------------------------------------------

namespace {

LineshapeParams spectrum_init_heuristic(const Spectrum& s, int n_peaks,
                                        double eta_fixed) {
  const Eigen::Index n = s.counts.size();
  std::vector<double> sorted(s.counts.data(), s.counts.data() + n);
  std::sort(sorted.begin(), sorted.end());
  const double baseline0 = sorted[static_cast<std::size_t>(0.10 * static_cast<double>(n - 1))];

  // noise scale from successive differences
  std::vector<double> diffs;
  for (Eigen::Index i = 1; i < n; ++i)
    diffs.push_back(std::abs(s.counts[i] - s.counts[i - 1]));
  std::nth_element(diffs.begin(), diffs.begin() + diffs.size() / 2, diffs.end());
  const double sigma = diffs[diffs.size() / 2] / 0.954 + 1e-12;
  const double threshold = baseline0 + 3.0 * sigma;

  const Eigen::Index w = std::max<Eigen::Index>(2, n / 100);
  std::vector<std::pair<double, Eigen::Index>> maxima;  // (height, index)
  for (Eigen::Index i = 0; i < n; ++i) {
    bool is_max = true;
    for (Eigen::Index j = std::max<Eigen::Index>(0, i - w);
         j <= std::min(n - 1, i + w) && is_max; ++j)
      if (j != i && s.counts[j] > s.counts[i]) is_max = false;
    if (is_max && s.counts[i] > threshold) maxima.emplace_back(s.counts[i], i);
  }
  std::sort(maxima.rbegin(), maxima.rend());

  const double span = s.wavelength_m[n - 1] - s.wavelength_m[0];
  const double min_sep = span / (4.0 * n_peaks);
  std::vector<Eigen::Index> picks;
  for (const auto& [height, idx] : maxima) {
    bool far_enough = true;
    for (const auto p : picks)
      if (std::abs(s.wavelength_m[idx] - s.wavelength_m[p]) < min_sep)
        far_enough = false;
    if (far_enough) picks.push_back(idx);
    if (static_cast<int>(picks.size()) == n_peaks) break;
  }
  // fall back to evenly spaced seeds if peak picking came up short
  for (int k = static_cast<int>(picks.size()); k < n_peaks; ++k)
    picks.push_back((n * (2 * k + 1)) / (2 * n_peaks));

  LineshapeParams init;
  init.baseline = std::max(baseline0, 0.0);
  for (const auto idx : picks) {
    PeakShape peak;
    peak.center = s.wavelength_m[idx];
    peak.gauss_fraction = eta_fixed;
    const double height = std::max(s.counts[idx] - baseline0, 3.0 * sigma);
    // half-max walk for the width
    const double half = baseline0 + 0.5 * height;
    Eigen::Index left = idx, right = idx;
    while (left > 0 && s.counts[left] > half) --left;
    while (right < n - 1 && s.counts[right] > half) ++right;
    peak.fwhm = std::clamp(s.wavelength_m[right] - s.wavelength_m[left],
                           2.0 * span / static_cast<double>(n), 0.25 * span);
    peak.area = height * peak.fwhm * 1.5707963268;  // Lorentzian height*pi*G/2
    init.peaks.push_back(peak);
  }
  std::sort(init.peaks.begin(), init.peaks.end(),
            [](const PeakShape& a, const PeakShape& b) { return a.center < b.center; });
  return init;
}

}  // namespace

FitResult fit_spectrum(const Spectrum& spectrum, int n_peaks,
                       std::optional<LineshapeParams> init, const FitOptions& opts) {
  spectrum.validate();
  if (n_peaks < 1) throw ValidationError("fit_spectrum: n_peaks must be >= 1");
  if (spectrum.counts.size() <= 5 * n_peaks)
    throw ValidationError("fit_spectrum: spectrum shorter than 5 points per peak");

  const bool fit_eta = opts.fit_gauss_fraction;
  const double eta_fixed = 0.0;
  const Eigen::ArrayXd& wl = spectrum.wavelength_m;
  const double wl_min = wl[0], wl_max = wl[wl.size() - 1];
  const double span = wl_max - wl_min;

  const LineshapeParams start =
      init ? *init : spectrum_init_heuristic(spectrum, n_peaks, eta_fixed);
  if (static_cast<int>(start.peaks.size()) != n_peaks)
    throw ValidationError("fit_spectrum: init peak count mismatch");
  const Eigen::VectorXd p0 = fitmodels::pack_lineshape(start, fit_eta);
  const int stride = fit_eta ? 4 : 3;

  const Eigen::ArrayXd sqrt_w = count_weights(spectrum.counts);
  std::vector<ParamTf> kinds;
  const double count_scale = std::max(spectrum.counts.maxCoeff(), 1.0);
  for (int k = 0; k < n_peaks; ++k) {
    kinds.push_back({ParamTf::Linear, 1e-9});  // center, nm units internally
    kinds.push_back({ParamTf::Log, 1.0});      // fwhm
    kinds.push_back({ParamTf::Sqrt, std::max(p0[stride * k + 2], 1e-300)});
    if (fit_eta) kinds.push_back({ParamTf::Linear, 1.0});
  }
  kinds.push_back({ParamTf::Linear, count_scale});  // baseline
  auto domain = [&](const Eigen::VectorXd& p) {
    for (int k = 0; k < n_peaks; ++k) {
      if (p[stride * k] < wl_min || p[stride * k] > wl_max) return false;
      if (p[stride * k + 1] > 2.0 * span) return false;
      if (fit_eta && (p[stride * k + 3] < 0.0 || p[stride * k + 3] > 1.0)) return false;
    }
    return true;
  };
  auto make_fn = [&](const Eigen::ArrayXd& y) {
    return [&, y](const Eigen::VectorXd& p, Eigen::VectorXd& r, Eigen::MatrixXd* jac) {
      if (!domain(p)) return false;
      r = ((y - fitmodels::spectrum(wl, p, n_peaks, fit_eta, eta_fixed)) * sqrt_w)
              .matrix();
      if (jac) {
        *jac = fitmodels::spectrum_jacobian(wl, p, n_peaks, fit_eta, eta_fixed);
        for (Eigen::Index c = 0; c < jac->cols(); ++c)
          jac->col(c) = (-jac->col(c).array() * sqrt_w).matrix();
      }
      return true;
    };
  };

  const LmResult lm =
      run_lm_transformed(kinds, make_fn(spectrum.counts), p0, opts.lm);

  std::vector<std::string> names;
  for (int k = 0; k < n_peaks; ++k) {
    const std::string suffix = std::to_string(k);
    names.push_back("center_" + suffix);
    names.push_back("fwhm_" + suffix);
    names.push_back("area_" + suffix);
    if (fit_eta) names.push_back("eta_" + suffix);
  }
  names.emplace_back("baseline");

  FitResult result;
  result.model_id = "spectrum_pseudo_voigt";
  result.n_points = static_cast<int>(wl.size());
  fill_result_params(result, names, lm.params, lm);
  result.annotations["n_peaks"] = std::to_string(n_peaks);
  if (!lm.converged)
    throw NotConverged("fit_spectrum: no convergence within iteration budget", result);

  if (opts.compute_ci) {
    const Eigen::ArrayXd model =
        fitmodels::spectrum(wl, lm.params, n_peaks, fit_eta, eta_fixed);
    auto sample = [&](std::uint64_t sample_seed) -> std::optional<Eigen::VectorXd> {
      SplitRng rng(sample_seed);
      Eigen::ArrayXd synth(model.size());
      for (Eigen::Index i = 0; i < model.size(); ++i)
        synth[i] = static_cast<double>(rng.poisson(std::max(0.0, model[i])));
      try {
        const LmResult refit =
            run_lm_transformed(kinds, make_fn(synth), lm.params, opts.lm);
        if (!refit.converged) return std::nullopt;
        return Eigen::VectorXd(refit.params);
      } catch (const Error&) {
        return std::nullopt;
      }
    };
    attach_ci(result, mc_confidence(result.param_names, sample, opts.mc_samples,
                                    opts.seed, opts.n_threads));

    // overlap collapse shows up as center CIs wider than the linewidth or
    // overlapping each other
    for (int k = 0; k < n_peaks && !result.degenerate_ci; ++k) {
      const auto ci_k = result.ci95.at("center_" + std::to_string(k));
      if (ci_k.second - ci_k.first > lm.params[stride * k + 1])
        result.degenerate_ci = true;
      for (int j = k + 1; j < n_peaks && !result.degenerate_ci; ++j) {
        const auto ci_j = result.ci95.at("center_" + std::to_string(j));
        if (ci_k.second >= ci_j.first && ci_j.second >= ci_k.first)
          result.degenerate_ci = true;
      }
    }
  }
  return result;
}

LineshapeParams lineshape_from_fit(const FitResult& fit) {
  LineshapeParams shape;
  shape.baseline = fit.param("baseline");
  for (int k = 0;; ++k) {
    const std::string suffix = std::to_string(k);
    if (!fit.has_param("center_" + suffix)) break;
    PeakShape peak;
    peak.center = fit.param("center_" + suffix);
    peak.fwhm = fit.param("fwhm_" + suffix);
    peak.area = fit.param("area_" + suffix);
    peak.gauss_fraction =
        fit.has_param("eta_" + suffix) ? fit.param("eta_" + suffix) : 0.0;
    shape.peaks.push_back(peak);
  }
  return shape;
}

// ---------------------------------------------------------------------------
// file I/O
// ---------------------------------------------------------------------------

namespace {

std::vector<std::vector<double>> read_two_columns(const std::filesystem::path& path) {
  std::ifstream f(path);
  if (!f) throw IoError("cannot open: " + path.string());
  std::string line;
  std::getline(f, line);  // header
  std::vector<std::vector<double>> cols(2);
  while (std::getline(f, line)) {
    if (line.empty()) continue;
    std::stringstream ss(line);
    std::string a, b;
    if (!std::getline(ss, a, ',') || !std::getline(ss, b, ','))
      throw IoError("expected two csv columns in " + path.string());
    cols[0].push_back(std::stod(a));
    cols[1].push_back(std::stod(b));
  }
  if (cols[0].empty()) throw IoError("no data rows in " + path.string());
  return cols;
}

}  // namespace

Spectrum read_spectrum_csv(const std::filesystem::path& path) {
  const auto cols = read_two_columns(path);
  Spectrum s;
  s.wavelength_m = to_array(cols[0]) * 1e-9;
  s.counts = to_array(cols[1]);
  s.validate();
  return s;
}

void write_spectrum_csv(const std::filesystem::path& path, const Spectrum& s) {
  std::ofstream f(path, std::ios::trunc);
  if (!f) throw IoError("cannot open for writing: " + path.string());
  f << "wavelength_nm,counts\n";
  f.precision(10);
  for (Eigen::Index i = 0; i < s.wavelength_m.size(); ++i)
    f << s.wavelength_m[i] * 1e9 << ',' << s.counts[i] << '\n';
}

std::pair<Eigen::ArrayXd, Eigen::ArrayXd> read_saturation_csv(
    const std::filesystem::path& path) {
  const auto cols = read_two_columns(path);
  return {to_array(cols[0]), to_array(cols[1])};
}

void write_fit_json(const std::filesystem::path& path, const FitResult& fit) {
  std::ofstream f(path, std::ios::trunc);
  if (!f) throw IoError("cannot open for writing: " + path.string());
  f << fit.to_json().dump(2) << "\n";
}

}  // namespace photonkit
