// Command-line surface for the photonkit toolkit: simulation of photon
// time-tag streams, correlation/decay reduction, model fitting, thin-film
// OPL work and survey statistics. Every subcommand is a pure function of
// (input files, flags, seed): reruns produce byte-identical outputs.
//
// Exit codes: 0 success, 2 validation error, 3 fit non-convergence,
// 4 I/O error.

#include <CLI11.hpp>

#include <filesystem>
#include <fstream>
#include <iostream>
#include <optional>

#include <nlohmann/json.hpp>

#include "photonkit/analysis.hpp"
#include "photonkit/correlator.hpp"
#include "photonkit/emitter_model.hpp"
#include "photonkit/fit/fitkit.hpp"
#include "photonkit/photon_sim.hpp"
#include "photonkit/thinfilm.hpp"
#include "photonkit/timetag.hpp"

namespace {

using namespace photonkit;
namespace fs = std::filesystem;

nlohmann::json histogram_json(const CorrelationHistogram& hist) {
  nlohmann::json j;
  j["schema_version"] = 1;
  j["type"] = "correlation";
  j["bin_edges_ps"] = std::vector<std::int64_t>(
      hist.bin_edges_ps.data(), hist.bin_edges_ps.data() + hist.bin_edges_ps.size());
  j["raw_counts"] = std::vector<std::uint64_t>(
      hist.raw_counts.data(), hist.raw_counts.data() + hist.raw_counts.size());
  if (hist.normalized.size() == hist.n_bins())
    j["normalized"] = std::vector<double>(
        hist.normalized.data(), hist.normalized.data() + hist.normalized.size());
  j["normalization_factor"] = hist.normalization_factor;
  j["lag_range_ps"] = hist.lag_range_ps;
  j["log_bins"] = hist.log_bins;
  return j;
}

nlohmann::json decay_json(const DecayHistogram& hist) {
  nlohmann::json j;
  j["schema_version"] = 1;
  j["type"] = "decay";
  j["bin_edges_ps"] = std::vector<std::int64_t>(
      hist.bin_edges_ps.data(), hist.bin_edges_ps.data() + hist.bin_edges_ps.size());
  j["counts"] = std::vector<std::uint64_t>(hist.counts.data(),
                                           hist.counts.data() + hist.counts.size());
  j["n_sync"] = hist.n_sync;
  return j;
}

void write_json(const fs::path& path, const nlohmann::json& j) {
  std::ofstream f(path, std::ios::trunc);
  if (!f) throw IoError("cannot open for writing: " + path.string());
  f << j.dump(2) << "\n";
}

void emit(const fs::path& out, const nlohmann::json& j) {
  if (out.empty())
    std::cout << j.dump(2) << "\n";
  else
    write_json(out, j);
}

struct CommonFitFlags {
  int mc_samples = 200;
  std::uint64_t seed = 20200522;
  int threads = 1;

  FitOptions options() const {
    FitOptions opts;
    opts.mc_samples = mc_samples;
    opts.seed = seed;
    opts.n_threads = threads;
    return opts;
  }
};

void add_fit_flags(CLI::App* cmd, CommonFitFlags& flags) {
  cmd->add_option("--mc-samples", flags.mc_samples, "bootstrap sample count");
  cmd->add_option("--seed", flags.seed, "bootstrap RNG seed");
  cmd->add_option("--threads", flags.threads, "bootstrap worker threads");
}

// automatic lifetime window: histogram peak to the end of the span
std::pair<std::int64_t, std::int64_t> auto_window(const DecayHistogram& decay) {
  Eigen::Index peak = 0;
  decay.counts.maxCoeff(&peak);
  const auto centers = decay.bin_centers_ps();
  return {static_cast<std::int64_t>(centers[peak]),
          decay.bin_edges_ps[decay.bin_edges_ps.size() - 1]};
}

int run(int argc, char** argv) {
  CLI::App app{"single-photon emitter simulation and analysis toolkit"};
  app.require_subcommand(1);

  // ---- simulate ----
  auto* simulate = app.add_subcommand("simulate", "generate a photon time-tag stream");
  std::string sim_mode = "cw";
  double duration_s = 1.0;
  std::uint64_t n_pulses = 1000000;
  EmitterRates rates;
  rates.excitation_rate = 1e6;
  rates.radiative_rate = 8.9e8;
  rates.intersystem_rate = 0.0;
  rates.deshelving_rate = 1e7;
  DetectorConfig det;
  det.dark_rate = 20.0;
  ExcitationConfig exc;
  exc.mode = ExcitationMode::Pulsed;
  std::uint64_t sim_seed = 1;
  int n_windows = 1;
  int sim_threads = 1;
  std::string sim_out = "stream.ett1";
  simulate->add_option("--mode", sim_mode, "cw or pulsed")
      ->check(CLI::IsMember({"cw", "pulsed"}));
  simulate->add_option("--duration", duration_s, "CW duration, seconds");
  simulate->add_option("--pulses", n_pulses, "pulse count (pulsed mode)");
  simulate->add_option("--k-exc", rates.excitation_rate, "excitation rate, 1/s");
  simulate->add_option("--k-rad", rates.radiative_rate, "radiative rate, 1/s");
  simulate->add_option("--k-isc", rates.intersystem_rate, "intersystem rate, 1/s");
  simulate->add_option("--k-back", rates.deshelving_rate, "deshelving rate, 1/s");
  simulate->add_option("--qe", rates.quantum_efficiency, "quantum efficiency");
  simulate->add_option("--efficiency", det.efficiency, "detector efficiency");
  simulate->add_option("--dark-rate", det.dark_rate, "dark counts per second");
  simulate->add_option("--dead-time", det.dead_time, "detector dead time, s");
  simulate->add_option("--jitter", det.timing_jitter_sigma, "timing jitter sigma, s");
  simulate->add_option("--rep-rate", exc.rep_rate, "pulse repetition rate, Hz");
  simulate->add_option("--pulse-length", exc.pulse_length, "pulse length, s");
  simulate->add_option("--excite-prob", exc.excitation_prob,
                       "per-pulse excitation probability");
  simulate->add_option("--windows", n_windows, "independent simulation windows");
  simulate->add_option("--sim-threads", sim_threads, "window worker threads");
  simulate->add_option("--seed", sim_seed, "master RNG seed");
  simulate->add_option("--out", sim_out, "output ETT1 path");

  // ---- correlate ----
  auto* correlate_cmd = app.add_subcommand("correlate", "second-order correlation histogram");
  std::string corr_in;
  std::int64_t bin_width_ps = 100, max_lag_ps = 100000, min_lag_ps = 100;
  int log_bins_per_decade = 0;
  std::string normalize_mode = "analytic";
  bool start_stop = false;
  int corr_threads = 1;
  std::string corr_out;
  std::string corr_format = "csv";
  correlate_cmd->add_option("--in", corr_in, "input ETT1 stream")->required();
  correlate_cmd->add_option("--bin-width", bin_width_ps, "bin width, ps");
  correlate_cmd->add_option("--max-lag", max_lag_ps, "max |delay|, ps");
  correlate_cmd->add_option("--log-bins", log_bins_per_decade,
                            "log binning, bins per decade (0 = uniform)");
  correlate_cmd->add_option("--min-lag", min_lag_ps, "innermost log bin edge, ps");
  correlate_cmd->add_option("--normalize", normalize_mode, "analytic, tail or none")
      ->check(CLI::IsMember({"analytic", "tail", "none"}));
  correlate_cmd->add_flag("--start-stop", start_stop, "legacy start-stop mode");
  correlate_cmd->add_option("--threads", corr_threads, "correlator threads");
  correlate_cmd->add_option("--out", corr_out, "output path (default stdout)");
  correlate_cmd->add_option("--format", corr_format, "csv or json")
      ->check(CLI::IsMember({"csv", "json"}));

  // ---- trpl ----
  auto* trpl_cmd = app.add_subcommand("trpl", "sync-referenced decay histogram");
  std::string trpl_in, trpl_out;
  std::int64_t trpl_bin_ps = 20;
  std::string trpl_format = "csv";
  trpl_cmd->add_option("--in", trpl_in, "input ETT1 stream")->required();
  trpl_cmd->add_option("--bin-width", trpl_bin_ps, "bin width, ps");
  trpl_cmd->add_option("--out", trpl_out, "output path (default stdout)");
  trpl_cmd->add_option("--format", trpl_format, "csv or json")
      ->check(CLI::IsMember({"csv", "json"}));

  // ---- fit-g2 ----
  auto* fit_g2_cmd = app.add_subcommand("fit-g2", "three-level correlation fit");
  std::string fg2_in, fg2_out;
  CommonFitFlags fg2_flags;
  fit_g2_cmd->add_option("--in", fg2_in, "histogram csv")->required();
  fit_g2_cmd->add_option("--out", fg2_out, "output json (default stdout)");
  add_fit_flags(fit_g2_cmd, fg2_flags);

  // ---- fit-lifetime ----
  auto* fit_lt_cmd = app.add_subcommand("fit-lifetime", "single-exponential decay fit");
  std::string flt_in, flt_out;
  std::int64_t window_start = -1, window_end = -1;
  CommonFitFlags flt_flags;
  fit_lt_cmd->add_option("--in", flt_in, "decay csv")->required();
  fit_lt_cmd->add_option("--window-start", window_start, "fit window start, ps");
  fit_lt_cmd->add_option("--window-end", window_end, "fit window end, ps");
  fit_lt_cmd->add_option("--out", flt_out, "output json (default stdout)");
  add_fit_flags(fit_lt_cmd, flt_flags);

  // ---- fit-saturation ----
  auto* fit_sat_cmd = app.add_subcommand("fit-saturation", "saturation and power-law fit");
  std::string fsat_in, fsat_out;
  CommonFitFlags fsat_flags;
  fit_sat_cmd->add_option("--in", fsat_in, "csv power_w,intensity_cps")->required();
  fit_sat_cmd->add_option("--out", fsat_out, "output json (default stdout)");
  add_fit_flags(fit_sat_cmd, fsat_flags);

  // ---- fit-spectrum ----
  auto* fit_sp_cmd = app.add_subcommand("fit-spectrum", "multi-peak pseudo-Voigt fit");
  std::string fsp_in, fsp_out;
  int n_peaks = 1;
  bool fit_eta = false;
  CommonFitFlags fsp_flags;
  fit_sp_cmd->add_option("--in", fsp_in, "csv wavelength_nm,counts")->required();
  fit_sp_cmd->add_option("--peaks", n_peaks, "number of peaks");
  fit_sp_cmd->add_flag("--fit-eta", fit_eta, "fit the pseudo-Voigt mixing fraction");
  fit_sp_cmd->add_option("--out", fsp_out, "output json (default stdout)");
  add_fit_flags(fit_sp_cmd, fsp_flags);

  // ---- thinfilm ----
  auto* thinfilm_cmd = app.add_subcommand("thinfilm", "stratified-media OPL tools");
  thinfilm_cmd->require_subcommand(1);
  auto* tf_curve = thinfilm_cmd->add_subcommand("curve", "tabulate OPL vs thickness");
  std::string tf_stack_path, tf_curve_out;
  double t_min_nm = 0.0, t_max_nm = 120.0;
  int tf_points = 1201;
  std::string tf_format = "csv";
  tf_curve->add_option("--stack", tf_stack_path,
                       "stack json (default: hBN/SiO2(280nm)/Si at 522nm)");
  tf_curve->add_option("--t-min", t_min_nm, "minimum flake thickness, nm");
  tf_curve->add_option("--t-max", t_max_nm, "maximum flake thickness, nm");
  tf_curve->add_option("--points", tf_points, "grid points");
  tf_curve->add_option("--out", tf_curve_out, "output path (default stdout)");
  tf_curve->add_option("--format", tf_format, "csv or json")
      ->check(CLI::IsMember({"csv", "json"}));

  auto* tf_invert = thinfilm_cmd->add_subcommand("invert", "OPL to thickness");
  std::string tf_inv_curve, tf_inv_out;
  double opl_nm = 0.0;
  tf_invert->add_option("--curve", tf_inv_curve, "curve csv from `thinfilm curve`")
      ->required();
  tf_invert->add_option("--opl", opl_nm, "measured OPL, nm")->required();
  tf_invert->add_option("--out", tf_inv_out, "output json (default stdout)");

  auto* tf_cal = thinfilm_cmd->add_subcommand("calibrate", "fit the flake index");
  std::string tf_cal_stack, tf_cal_data, tf_cal_out;
  CommonFitFlags tf_cal_flags;
  tf_cal->add_option("--stack", tf_cal_stack,
                     "stack json (default: hBN/SiO2(280nm)/Si at 522nm)");
  tf_cal->add_option("--data", tf_cal_data, "csv afm_thickness_nm,opl_nm")->required();
  tf_cal->add_option("--out", tf_cal_out, "output json (default stdout)");
  add_fit_flags(tf_cal, tf_cal_flags);

  // ---- survey ----
  auto* survey_cmd = app.add_subcommand("survey", "statistics over emitter records");
  std::string survey_in, survey_out;
  bool allow_ensembles = false;
  survey_cmd->add_option("--records", survey_in, "records json")->required();
  survey_cmd->add_flag("--allow-ensembles", allow_ensembles,
                       "keep records with g2(0) > 0.5");
  survey_cmd->add_option("--out", survey_out, "output json (default stdout)");

  // ---- compare ----
  auto* compare_cmd = app.add_subcommand("compare", "before/after transfer report");
  std::string b_spec, b_decay, b_g2, a_spec, a_decay, a_g2, cmp_out;
  CommonFitFlags cmp_flags;
  compare_cmd->add_option("--before-spectrum", b_spec, "csv")->required();
  compare_cmd->add_option("--before-decay", b_decay, "csv")->required();
  compare_cmd->add_option("--before-g2", b_g2, "csv")->required();
  compare_cmd->add_option("--after-spectrum", a_spec, "csv")->required();
  compare_cmd->add_option("--after-decay", a_decay, "csv")->required();
  compare_cmd->add_option("--after-g2", a_g2, "csv")->required();
  compare_cmd->add_option("--out", cmp_out, "output json (default stdout)");
  add_fit_flags(compare_cmd, cmp_flags);

  // ---- report ----
  auto* report_cmd = app.add_subcommand(
      "report", "bundle a full characterization into json + plot-ready csv");
  std::string rep_cw, rep_pulsed, rep_spectrum, rep_saturation;
  std::string rep_prefix = "report";
  std::int64_t rep_bin = 100, rep_lag = 50000, rep_trpl_bin = 20;
  int rep_peaks = 1;
  CommonFitFlags rep_flags;
  report_cmd->add_option("--cw-stream", rep_cw, "ETT1 stream for g2");
  report_cmd->add_option("--pulsed-stream", rep_pulsed, "ETT1 stream for TRPL");
  report_cmd->add_option("--spectrum", rep_spectrum, "spectrum csv");
  report_cmd->add_option("--saturation", rep_saturation, "saturation csv");
  report_cmd->add_option("--bin-width", rep_bin, "g2 bin width, ps");
  report_cmd->add_option("--max-lag", rep_lag, "g2 max lag, ps");
  report_cmd->add_option("--trpl-bin-width", rep_trpl_bin, "TRPL bin width, ps");
  report_cmd->add_option("--peaks", rep_peaks, "spectrum peak count");
  report_cmd->add_option("--out", rep_prefix, "output prefix");
  add_fit_flags(report_cmd, rep_flags);

  CLI11_PARSE(app, argc, argv);

  if (simulate->parsed()) {
    SimOptions opts;
    opts.n_windows = n_windows;
    opts.n_threads = sim_threads;
    TimeTagStream stream;
    if (sim_mode == "cw") {
      stream = simulate_cw(rates, det, duration_s, sim_seed, opts);
    } else {
      exc.mode = ExcitationMode::Pulsed;
      stream = simulate_pulsed(rates, det, exc, n_pulses, sim_seed, opts);
    }
    write_ett1(sim_out, stream);
    write_sidecar(sim_out, stream);
    std::cout << stream_summary(stream).dump(2) << "\n";
    return 0;
  }

  if (correlate_cmd->parsed()) {
    const TimeTagStream stream = read_ett1(corr_in);
    CorrelateOptions opts;
    opts.n_threads = corr_threads;
    opts.start_stop = start_stop;
    CorrelationHistogram hist =
        log_bins_per_decade > 0
            ? correlate_log(stream, log_bins_per_decade, min_lag_ps, max_lag_ps, opts)
            : correlate(stream, bin_width_ps, max_lag_ps, opts);
    if (normalize_mode == "analytic")
      hist = normalize_g2(hist, stream);
    else if (normalize_mode == "tail")
      hist = normalize_g2_tail(hist);
    if (corr_format == "json") {
      emit(corr_out, histogram_json(hist));
    } else if (corr_out.empty()) {
      write_histogram_csv("/dev/stdout", hist);
    } else {
      write_histogram_csv(corr_out, hist);
    }
    return 0;
  }

  if (trpl_cmd->parsed()) {
    const TimeTagStream stream = read_ett1(trpl_in);
    const DecayHistogram hist = trpl_histogram(stream, trpl_bin_ps);
    if (trpl_format == "json") {
      emit(trpl_out, decay_json(hist));
    } else if (trpl_out.empty()) {
      write_decay_csv("/dev/stdout", hist);
    } else {
      write_decay_csv(trpl_out, hist);
    }
    return 0;
  }

  if (fit_g2_cmd->parsed()) {
    const CorrelationHistogram hist = read_histogram_csv(fg2_in);
    const FitResult fit = fit_g2(hist, {}, fg2_flags.options());
    emit(fg2_out, fit.to_json());
    return 0;
  }

  if (fit_lt_cmd->parsed()) {
    const DecayHistogram hist = read_decay_csv(flt_in);
    auto [w0, w1] = auto_window(hist);
    if (window_start >= 0) w0 = window_start;
    if (window_end >= 0) w1 = window_end;
    const FitResult fit = fit_lifetime(hist, w0, w1, flt_flags.options());
    emit(flt_out, fit.to_json());
    return 0;
  }

  if (fit_sat_cmd->parsed()) {
    const auto [powers, intensities] = read_saturation_csv(fsat_in);
    const FitResult fit = fit_saturation(powers, intensities, fsat_flags.options());
    emit(fsat_out, fit.to_json());
    return 0;
  }

  if (fit_sp_cmd->parsed()) {
    const Spectrum spectrum = read_spectrum_csv(fsp_in);
    FitOptions opts = fsp_flags.options();
    opts.fit_gauss_fraction = fit_eta;
    const FitResult fit = fit_spectrum(spectrum, n_peaks, {}, opts);
    emit(fsp_out, fit.to_json());
    return 0;
  }

  if (tf_curve->parsed()) {
    const LayerStack stack = tf_stack_path.empty() ? hbn_on_sio2_si_stack(0.0)
                                                   : read_stack_json(tf_stack_path);
    const OplCurve curve =
        build_opl_curve(stack, t_min_nm * 1e-9, t_max_nm * 1e-9, tf_points);
    if (tf_format == "json") {
      nlohmann::json j;
      j["schema_version"] = 1;
      j["wavelength_nm"] = curve.wavelength_m * 1e9;
      j["injectivity_limit_nm"] = curve.injectivity_limit_m * 1e9;
      j["thickness_nm"] = std::vector<double>(curve.thickness_m.size());
      j["opl_nm"] = std::vector<double>(curve.opl_m.size());
      for (Eigen::Index i = 0; i < curve.thickness_m.size(); ++i) {
        j["thickness_nm"][static_cast<std::size_t>(i)] = curve.thickness_m[i] * 1e9;
        j["opl_nm"][static_cast<std::size_t>(i)] = curve.opl_m[i] * 1e9;
      }
      emit(tf_curve_out, j);
    } else if (tf_curve_out.empty()) {
      write_opl_curve_csv("/dev/stdout", curve);
    } else {
      write_opl_curve_csv(tf_curve_out, curve);
    }
    return 0;
  }

  if (tf_invert->parsed()) {
    const OplCurve curve = read_opl_curve_csv(tf_inv_curve);
    const OplInversion inv = invert_opl(curve, opl_nm * 1e-9);
    nlohmann::json j;
    j["schema_version"] = 1;
    j["ambiguous"] = inv.ambiguous;
    j["candidates_nm"] = nlohmann::json::array();
    for (const double t : inv.candidates_m) j["candidates_nm"].push_back(t * 1e9);
    if (!inv.ambiguous) j["thickness_nm"] = inv.thickness() * 1e9;
    emit(tf_inv_out, j);
    return 0;
  }

  if (tf_cal->parsed()) {
    const LayerStack stack = tf_cal_stack.empty() ? hbn_on_sio2_si_stack(0.0)
                                                  : read_stack_json(tf_cal_stack);
    const auto cols = read_saturation_csv(tf_cal_data);  // generic two-column csv
    std::vector<CalibrationPoint> calibration;
    for (Eigen::Index i = 0; i < cols.first.size(); ++i)
      calibration.push_back({cols.first[i] * 1e-9, cols.second[i] * 1e-9});
    const FitResult fit = fit_index(calibration, stack, tf_cal_flags.options());
    emit(tf_cal_out, fit.to_json());
    return 0;
  }

  if (survey_cmd->parsed()) {
    const auto records = read_records_json(survey_in, allow_ensembles);
    const SurveyStats stats = survey_stats(records);
    emit(survey_out, survey_stats_json(stats));
    return 0;
  }

  if (compare_cmd->parsed()) {
    EmitterDataset before, after;
    before.spectrum = read_spectrum_csv(b_spec);
    before.decay = read_decay_csv(b_decay);
    before.g2 = read_histogram_csv(b_g2);
    after.spectrum = read_spectrum_csv(a_spec);
    after.decay = read_decay_csv(a_decay);
    after.g2 = read_histogram_csv(a_g2);
    const TransferReport report = compare_emitters(before, after, cmp_flags.options());
    emit(cmp_out, transfer_report_json(report));
    return 0;
  }

  if (report_cmd->parsed()) {
    nlohmann::json j;
    j["schema_version"] = 1;
    const FitOptions opts = rep_flags.options();
    std::optional<double> tau_fit, center_fit, fwhm_fit;

    if (!rep_cw.empty()) {
      const TimeTagStream stream = read_ett1(rep_cw);
      const CorrelationHistogram hist =
          normalize_g2(correlate(stream, rep_bin, rep_lag), stream);
      const FitResult fit = fit_g2(hist, {}, opts);
      j["g2"] = fit.to_json();
      write_histogram_csv(rep_prefix + "_g2.csv", hist);
    }
    if (!rep_pulsed.empty()) {
      const TimeTagStream stream = read_ett1(rep_pulsed);
      const DecayHistogram hist = trpl_histogram(stream, rep_trpl_bin);
      const auto [w0, w1] = auto_window(hist);
      const FitResult fit = fit_lifetime(hist, w0, w1, opts);
      tau_fit = fit.param("tau");
      j["lifetime"] = fit.to_json();
      write_decay_csv(rep_prefix + "_decay.csv", hist);
    }
    if (!rep_spectrum.empty()) {
      const Spectrum spectrum = read_spectrum_csv(rep_spectrum);
      const FitResult fit = fit_spectrum(spectrum, rep_peaks, {}, opts);
      center_fit = fit.param("center_0");
      fwhm_fit = fit.param("fwhm_0");
      j["spectrum"] = fit.to_json();
      j["spectrum"]["zpl_fraction"] = zpl_fraction(spectrum, fit);
      write_spectrum_csv(rep_prefix + "_spectrum.csv", spectrum);
    }
    if (!rep_saturation.empty()) {
      const auto [powers, intensities] = read_saturation_csv(rep_saturation);
      const FitResult fit = fit_saturation(powers, intensities, opts);
      j["saturation"] = fit.to_json();
    }
    if (tau_fit && center_fit && fwhm_fit) {
      j["lifetime_bandwidth_product"] =
          lifetime_bandwidth_product(*center_fit, *fwhm_fit, *tau_fit);
    }
    write_json(rep_prefix + ".json", j);
    std::cout << "report written to " << rep_prefix << ".json\n";
    return 0;
  }

  return 0;
}

}  // namespace

int main(int argc, char** argv) {
  try {
    return run(argc, argv);
  } catch (const photonkit::IoError& e) {
    std::cerr << "io error: " << e.what() << "\n";
    return 4;
  } catch (const photonkit::NotConverged& e) {
    std::cerr << "fit did not converge: " << e.what() << "\n";
    return 3;
  } catch (const photonkit::FitError& e) {
    std::cerr << "fit error: " << e.what() << "\n";
    return 3;
  } catch (const photonkit::ValidationError& e) {
    std::cerr << "validation error: " << e.what() << "\n";
    return 2;
  } catch (const photonkit::Error& e) {
    std::cerr << "error: " << e.what() << "\n";
    return 2;
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << "\n";
    return 2;
  }
}
