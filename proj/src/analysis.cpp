#include "photonkit/analysis.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <set>

#include <nlohmann/json.hpp>

#include "photonkit/emitter_model.hpp"

namespace photonkit {

namespace {

bool usable(double v) { return std::isfinite(v); }

double nan() { return std::numeric_limits<double>::quiet_NaN(); }

}  // namespace

void validate_records(const std::vector<EmitterRecord>& records,
                      bool allow_ensembles) {
  for (const auto& r : records) {
    if (usable(r.g2_zero) && !(r.g2_zero >= 0.0))
      throw ValidationError("record " + r.defect_id + ": negative g2(0)");
    if (!allow_ensembles && r.single_emitter && usable(r.g2_zero) &&
        r.g2_zero > 0.5)
      throw ValidationError("record " + r.defect_id +
                            ": g2(0) > 0.5 labeled single emitter (ensemble)");
    if (usable(r.zpl_fraction) && !(r.zpl_fraction >= 0.0 && r.zpl_fraction <= 1.0))
      throw ValidationError("record " + r.defect_id + ": zpl fraction outside [0,1]");
  }
}

double defect_density(std::uint64_t n_defects, double edge_length_m) {
  if (!(edge_length_m > 0.0))
    throw DegenerateGeometry("defect_density: edge length must be > 0");
  return static_cast<double>(n_defects) / edge_length_m;
}

SurveyStats survey_stats(const std::vector<EmitterRecord>& records) {
  if (records.empty()) throw ValidationError("survey_stats: no records");

  SurveyStats stats;
  std::map<std::string, std::uint64_t> defects_per_flake;
  for (const auto& r : records) defects_per_flake[r.flake_id] += 1;
  stats.n_flakes = defects_per_flake.size();
  stats.n_defects = records.size();
  double sum = 0.0;
  for (const auto& [flake, n] : defects_per_flake) sum += static_cast<double>(n);
  stats.mean_defects_per_hosting_flake = sum / static_cast<double>(stats.n_flakes);

  // ZPL histogram over fixed bands
  double zpl_max = stats.zpl_band_start_m;
  for (const auto& r : records)
    if (usable(r.zpl_center_m)) zpl_max = std::max(zpl_max, r.zpl_center_m);
  const int n_bands = std::max(
      1, static_cast<int>(std::ceil((zpl_max - stats.zpl_band_start_m) /
                                    stats.zpl_band_width_m)) +
             1);
  stats.zpl_histogram.assign(static_cast<std::size_t>(n_bands), 0);
  for (const auto& r : records) {
    if (!usable(r.zpl_center_m)) continue;
    int band = static_cast<int>(
        std::floor((r.zpl_center_m - stats.zpl_band_start_m) / stats.zpl_band_width_m));
    band = std::clamp(band, 0, n_bands - 1);
    stats.zpl_histogram[static_cast<std::size_t>(band)] += 1;
  }

  stats.property_names = {"zpl_fwhm",     "lifetime",     "g2_zero",
                          "alpha",        "thickness",    "plasma_power",
                          "plasma_time",  "anneal_temp"};
  auto value_of = [](const EmitterRecord& r, std::size_t p) {
    switch (p) {
      case 0: return r.zpl_fwhm_m;
      case 1: return r.lifetime_s;
      case 2: return r.g2_zero;
      case 3: return r.alpha;
      case 4: return r.flake.thickness_m;
      case 5: return r.fabrication.plasma_power_w;
      case 6: return r.fabrication.plasma_time_s;
      default: return r.fabrication.anneal_temp_k;
    }
  };

  const std::size_t n_props = stats.property_names.size();
  for (std::size_t p = 0; p < n_props; ++p) {
    PropertySummary s;
    for (const auto& r : records) {
      const double v = value_of(r, p);
      if (!usable(v)) continue;
      if (s.n == 0) {
        s.min = s.max = v;
        s.mean = 0.0;
      }
      s.min = std::min(s.min, v);
      s.max = std::max(s.max, v);
      s.mean += v;
      s.n += 1;
    }
    if (s.n > 0) s.mean /= s.n;
    stats.per_property[stats.property_names[p]] = s;
  }

  // pairwise-complete Pearson correlations
  stats.correlations = Eigen::MatrixXd::Constant(
      static_cast<Eigen::Index>(n_props), static_cast<Eigen::Index>(n_props), nan());
  for (std::size_t a = 0; a < n_props; ++a) {
    for (std::size_t b = a; b < n_props; ++b) {
      std::vector<double> xs, ys;
      for (const auto& r : records) {
        const double x = value_of(r, a);
        const double y = value_of(r, b);
        if (usable(x) && usable(y)) {
          xs.push_back(x);
          ys.push_back(y);
        }
      }
      double rho = nan();
      if (xs.size() >= 2) {
        const auto n = static_cast<Eigen::Index>(xs.size());
        Eigen::Map<const Eigen::ArrayXd> x(xs.data(), n), y(ys.data(), n);
        const double mx = x.mean(), my = y.mean();
        const double sx = std::sqrt(((x - mx) * (x - mx)).sum());
        const double sy = std::sqrt(((y - my) * (y - my)).sum());
        if (sx > 0.0 && sy > 0.0) rho = ((x - mx) * (y - my)).sum() / (sx * sy);
      }
      stats.correlations(static_cast<Eigen::Index>(a), static_cast<Eigen::Index>(b)) = rho;
      stats.correlations(static_cast<Eigen::Index>(b), static_cast<Eigen::Index>(a)) = rho;
    }
  }
  return stats;
}

double zpl_fraction(const Spectrum& spectrum, const FitResult& spectral_fit,
                    int zpl_peak) {
  const LineshapeParams shape = lineshape_from_fit(spectral_fit);
  if (shape.peaks.empty()) throw ValidationError("zpl_fraction: fit has no peaks");
  if (zpl_peak < 0) {
    zpl_peak = 0;
    for (std::size_t k = 1; k < shape.peaks.size(); ++k)
      if (shape.peaks[k].area > shape.peaks[static_cast<std::size_t>(zpl_peak)].area)
        zpl_peak = static_cast<int>(k);
  }
  if (zpl_peak >= static_cast<int>(shape.peaks.size()))
    throw ValidationError("zpl_fraction: ZPL peak index out of range");

  const double lo = spectrum.wavelength_m[0];
  const double hi = spectrum.wavelength_m[spectrum.wavelength_m.size() - 1];
  double total = 0.0;
  for (const auto& p : shape.peaks) total += peak_area_in_window(p, lo, hi);
  if (!(total > 0.0)) throw EmptySpectrum("zpl_fraction: fitted spectral area <= 0");
  return peak_area_in_window(shape.peaks[static_cast<std::size_t>(zpl_peak)], lo, hi) /
         total;
}

LifetimeBandwidthTable lifetime_bandwidth_table(
    const std::vector<EmitterRecord>& records) {
  LifetimeBandwidthTable table;
  double sum = 0.0;
  for (const auto& r : records) {
    if (!usable(r.zpl_center_m) || !usable(r.zpl_fwhm_m) || !usable(r.lifetime_s)) {
      table.n_skipped += 1;
      continue;
    }
    const double product =
        lifetime_bandwidth_product(r.zpl_center_m, r.zpl_fwhm_m, r.lifetime_s);
    table.rows.push_back({r.flake_id, r.defect_id, product});
    sum += product;
    if (!(product >= table.min) || table.rows.size() == 1) table.min = product;
  }
  if (!table.rows.empty()) table.mean = sum / static_cast<double>(table.rows.size());
  return table;
}

double QuantityChange::delta_ci() const {
  return std::sqrt(ci_before * ci_before + ci_after * ci_after);
}

double QuantityChange::ratio_ci() const {
  if (before == 0.0) return nan();
  const double rel_b = ci_before / std::abs(before);
  const double rel_a = after == 0.0 ? 0.0 : ci_after / std::abs(after);
  return std::abs(ratio()) * std::sqrt(rel_a * rel_a + rel_b * rel_b);
}

namespace {

double ci_half_width(const FitResult& fit, const std::string& name) {
  const auto it = fit.ci95.find(name);
  if (it == fit.ci95.end()) return 0.0;
  return 0.5 * (it->second.second - it->second.first);
}

struct SingleEmitterFits {
  FitResult spectrum;
  FitResult lifetime;
  FitResult g2;
  int zpl_peak = 0;
  double zpl_frac = 0.0;
};

SingleEmitterFits fit_dataset(const EmitterDataset& data, const FitOptions& opts) {
  SingleEmitterFits fits;
  fits.spectrum = fit_spectrum(data.spectrum, 1, {}, opts);

  std::int64_t w0 = data.lifetime_window_start_ps;
  std::int64_t w1 = data.lifetime_window_end_ps;
  if (w0 == 0 && w1 == 0) {
    // automatic: from the histogram peak to the end of the span
    Eigen::Index peak = 0;
    data.decay.counts.maxCoeff(&peak);
    const auto centers = data.decay.bin_centers_ps();
    w0 = static_cast<std::int64_t>(centers[peak]);
    w1 = data.decay.bin_edges_ps[data.decay.bin_edges_ps.size() - 1];
  }
  fits.lifetime = fit_lifetime(data.decay, w0, w1, opts);
  fits.g2 = fit_g2(data.g2, {}, opts);
  fits.zpl_frac = zpl_fraction(data.spectrum, fits.spectrum);
  return fits;
}

}  // namespace

TransferReport compare_emitters(const EmitterDataset& before,
                                const EmitterDataset& after,
                                const FitOptions& opts) {
  const SingleEmitterFits fb = fit_dataset(before, opts);
  const SingleEmitterFits fa = fit_dataset(after, opts);

  TransferReport report;
  report.spectrum_before = fb.spectrum;
  report.spectrum_after = fa.spectrum;
  report.lifetime_before = fb.lifetime;
  report.lifetime_after = fa.lifetime;
  report.g2_before = fb.g2;
  report.g2_after = fa.g2;

  auto change = [](double b, double a, double cb, double ca) {
    QuantityChange c;
    c.before = b;
    c.after = a;
    c.ci_before = cb;
    c.ci_after = ca;
    return c;
  };

  report.zpl_center = change(fb.spectrum.param("center_0"), fa.spectrum.param("center_0"),
                             ci_half_width(fb.spectrum, "center_0"),
                             ci_half_width(fa.spectrum, "center_0"));
  report.zpl_fwhm = change(fb.spectrum.param("fwhm_0"), fa.spectrum.param("fwhm_0"),
                           ci_half_width(fb.spectrum, "fwhm_0"),
                           ci_half_width(fa.spectrum, "fwhm_0"));

  const PeakShape peak_b = lineshape_from_fit(fb.spectrum).peaks.front();
  const PeakShape peak_a = lineshape_from_fit(fa.spectrum).peaks.front();
  // brightness CI from the area CI (height scales with area at fixed width)
  const double height_b = peak_height(peak_b);
  const double height_a = peak_height(peak_a);
  const double rel_hb = peak_b.area > 0.0
                            ? ci_half_width(fb.spectrum, "area_0") / peak_b.area
                            : 0.0;
  const double rel_ha = peak_a.area > 0.0
                            ? ci_half_width(fa.spectrum, "area_0") / peak_a.area
                            : 0.0;
  report.zpl_peak_brightness =
      change(height_b, height_a, height_b * rel_hb, height_a * rel_ha);

  report.lifetime = change(fb.lifetime.param("tau"), fa.lifetime.param("tau"),
                           ci_half_width(fb.lifetime, "tau"),
                           ci_half_width(fa.lifetime, "tau"));
  report.g2_zero = change(fb.g2.param("g2_zero"), fa.g2.param("g2_zero"),
                          ci_half_width(fb.g2, "g2_zero"),
                          ci_half_width(fa.g2, "g2_zero"));
  report.zpl_fraction = change(fb.zpl_frac, fa.zpl_frac, 0.0, 0.0);
  return report;
}

AnnealSummary anneal_brightness_summary(
    const std::map<double, std::vector<double>>& samples_by_temp) {
  if (samples_by_temp.empty())
    throw ValidationError("anneal_brightness_summary: no groups");
  AnnealSummary summary;
  for (const auto& [temp, samples] : samples_by_temp) {
    if (samples.empty())
      throw ValidationError("anneal_brightness_summary: empty group");
    AnnealGroupSummary g;
    g.anneal_temp_k = temp;
    g.n = static_cast<int>(samples.size());
    g.small_n = g.n < 2;
    double mean = 0.0;
    for (const double s : samples) mean += s;
    mean /= static_cast<double>(g.n);
    g.mean = mean;
    if (g.n >= 2) {
      double ss = 0.0;
      for (const double s : samples) ss += (s - mean) * (s - mean);
      g.stddev = std::sqrt(ss / static_cast<double>(g.n - 1));
    }
    summary.groups.push_back(g);
  }
  // maximal mean; deterministic lowest-temperature tie-break (map is ordered)
  const auto best = std::max_element(
      summary.groups.begin(), summary.groups.end(),
      [](const auto& a, const auto& b) { return a.mean < b.mean; });
  summary.best_temp_k = best->anneal_temp_k;
  for (const auto& g : summary.groups)
    if (g.mean == best->mean && g.anneal_temp_k != best->anneal_temp_k)
      summary.tie = true;
  return summary;
}

// ---------------------------------------------------------------------------
// record I/O
// ---------------------------------------------------------------------------

namespace {

double json_opt(const nlohmann::json& j, const char* key, double scale) {
  if (!j.contains(key) || j[key].is_null()) return nan();
  return j[key].get<double>() * scale;
}

void json_put(nlohmann::json& j, const char* key, double value, double scale) {
  if (usable(value)) j[key] = value * scale;
}

}  // namespace

std::vector<EmitterRecord> read_records_json(const std::filesystem::path& path,
                                             bool allow_ensembles) {
  std::ifstream f(path);
  if (!f) throw IoError("cannot open: " + path.string());
  nlohmann::json j;
  try {
    f >> j;
  } catch (const nlohmann::json::exception& e) {
    throw IoError("bad records json: " + std::string(e.what()));
  }
  std::vector<EmitterRecord> records;
  for (const auto& rec : j.at("records")) {
    EmitterRecord r;
    r.flake_id = rec.value("flake_id", "");
    r.defect_id = rec.value("defect_id", "");
    r.zpl_center_m = json_opt(rec, "zpl_center_nm", 1e-9);
    r.zpl_fwhm_m = json_opt(rec, "zpl_fwhm_nm", 1e-9);
    r.lifetime_s = json_opt(rec, "lifetime_ns", 1e-9);
    r.g2_zero = json_opt(rec, "g2_zero", 1.0);
    r.alpha = json_opt(rec, "alpha", 1.0);
    r.zpl_fraction = json_opt(rec, "zpl_fraction", 1.0);
    r.fabrication.plasma_power_w = json_opt(rec, "plasma_power_w", 1.0);
    r.fabrication.plasma_time_s = json_opt(rec, "plasma_time_s", 1.0);
    r.fabrication.anneal_temp_k = json_opt(rec, "anneal_temp_k", 1.0);
    r.flake.edge_length_m = json_opt(rec, "edge_length_um", 1e-6);
    r.flake.thickness_m = json_opt(rec, "thickness_nm", 1e-9);
    r.single_emitter = rec.value("single_emitter", true);
    records.push_back(std::move(r));
  }
  validate_records(records, allow_ensembles);
  return records;
}

void write_records_json(const std::filesystem::path& path,
                        const std::vector<EmitterRecord>& records) {
  nlohmann::json j;
  j["schema_version"] = 1;
  j["records"] = nlohmann::json::array();
  for (const auto& r : records) {
    nlohmann::json rec;
    rec["flake_id"] = r.flake_id;
    rec["defect_id"] = r.defect_id;
    json_put(rec, "zpl_center_nm", r.zpl_center_m, 1e9);
    json_put(rec, "zpl_fwhm_nm", r.zpl_fwhm_m, 1e9);
    json_put(rec, "lifetime_ns", r.lifetime_s, 1e9);
    json_put(rec, "g2_zero", r.g2_zero, 1.0);
    json_put(rec, "alpha", r.alpha, 1.0);
    json_put(rec, "zpl_fraction", r.zpl_fraction, 1.0);
    json_put(rec, "plasma_power_w", r.fabrication.plasma_power_w, 1.0);
    json_put(rec, "plasma_time_s", r.fabrication.plasma_time_s, 1.0);
    json_put(rec, "anneal_temp_k", r.fabrication.anneal_temp_k, 1.0);
    json_put(rec, "edge_length_um", r.flake.edge_length_m, 1e6);
    json_put(rec, "thickness_nm", r.flake.thickness_m, 1e9);
    rec["single_emitter"] = r.single_emitter;
    j["records"].push_back(std::move(rec));
  }
  std::ofstream f(path, std::ios::trunc);
  if (!f) throw IoError("cannot open for writing: " + path.string());
  f << j.dump(2) << "\n";
}

nlohmann::json survey_stats_json(const SurveyStats& stats) {
  nlohmann::json j;
  j["schema_version"] = 1;
  j["n_flakes"] = stats.n_flakes;
  j["n_defects"] = stats.n_defects;
  j["mean_defects_per_hosting_flake"] = stats.mean_defects_per_hosting_flake;
  j["zpl_band_start_nm"] = stats.zpl_band_start_m * 1e9;
  j["zpl_band_width_nm"] = stats.zpl_band_width_m * 1e9;
  j["zpl_histogram"] = stats.zpl_histogram;
  nlohmann::json props = nlohmann::json::object();
  for (const auto& [name, s] : stats.per_property) {
    nlohmann::json p;
    p["n"] = s.n;
    if (s.n > 0) {
      p["min"] = s.min;
      p["max"] = s.max;
      p["mean"] = s.mean;
    }
    props[name] = p;
  }
  j["per_property"] = props;
  j["correlation_order"] = stats.property_names;
  std::vector<std::vector<nlohmann::json>> corr;
  for (Eigen::Index r = 0; r < stats.correlations.rows(); ++r) {
    std::vector<nlohmann::json> row;
    for (Eigen::Index c = 0; c < stats.correlations.cols(); ++c) {
      const double v = stats.correlations(r, c);
      row.push_back(usable(v) ? nlohmann::json(v) : nlohmann::json(nullptr));
    }
    corr.push_back(std::move(row));
  }
  j["correlations"] = corr;
  return j;
}

nlohmann::json transfer_report_json(const TransferReport& report) {
  auto quantity = [](const QuantityChange& c, double scale) {
    nlohmann::json j;
    j["before"] = c.before * scale;
    j["after"] = c.after * scale;
    j["delta"] = c.delta() * scale;
    j["ratio"] = c.ratio();
    j["ci_before"] = c.ci_before * scale;
    j["ci_after"] = c.ci_after * scale;
    j["delta_ci"] = c.delta_ci() * scale;
    const double rci = c.ratio_ci();
    if (usable(rci)) j["ratio_ci"] = rci;
    return j;
  };
  nlohmann::json j;
  j["schema_version"] = 1;
  j["zpl_center_nm"] = quantity(report.zpl_center, 1e9);
  j["zpl_fwhm_nm"] = quantity(report.zpl_fwhm, 1e9);
  j["zpl_peak_brightness"] = quantity(report.zpl_peak_brightness, 1.0);
  j["lifetime_ns"] = quantity(report.lifetime, 1e9);
  j["g2_zero"] = quantity(report.g2_zero, 1.0);
  j["zpl_fraction"] = quantity(report.zpl_fraction, 1.0);
  j["fits"] = {{"spectrum_before", report.spectrum_before.to_json()},
               {"spectrum_after", report.spectrum_after.to_json()},
               {"lifetime_before", report.lifetime_before.to_json()},
               {"lifetime_after", report.lifetime_after.to_json()},
               {"g2_before", report.g2_before.to_json()},
               {"g2_after", report.g2_after.to_json()}};
  return j;
}

}  // namespace photonkit
