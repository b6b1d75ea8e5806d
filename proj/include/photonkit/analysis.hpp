#pragma once

#include <Eigen/Dense>
#include <cstdint>
#include <filesystem>
#include <limits>
#include <map>
#include <optional>
#include <string>
#include <vector>

#include <nlohmann/json_fwd.hpp>

#include "photonkit/correlator.hpp"
#include "photonkit/fit/fitkit.hpp"

// Survey statistics, emitter records and the report-level comparisons that
// tie the fitting machinery into end-to-end workflows.
namespace photonkit {

struct FabricationParams {
  double plasma_power_w = std::numeric_limits<double>::quiet_NaN();
  double plasma_time_s = std::numeric_limits<double>::quiet_NaN();
  double anneal_temp_k = std::numeric_limits<double>::quiet_NaN();
};

struct FlakeGeometry {
  double edge_length_m = std::numeric_limits<double>::quiet_NaN();  // perimeter
  double thickness_m = std::numeric_limits<double>::quiet_NaN();
};

// One characterized defect. Missing quantities are NaN.
struct EmitterRecord {
  std::string flake_id;
  std::string defect_id;
  double zpl_center_m = std::numeric_limits<double>::quiet_NaN();
  double zpl_fwhm_m = std::numeric_limits<double>::quiet_NaN();
  double lifetime_s = std::numeric_limits<double>::quiet_NaN();
  double g2_zero = std::numeric_limits<double>::quiet_NaN();
  double alpha = std::numeric_limits<double>::quiet_NaN();
  double zpl_fraction = std::numeric_limits<double>::quiet_NaN();
  FabricationParams fabrication;
  FlakeGeometry flake;
  bool single_emitter = true;
};

// Records labeled single-emitter must have g2(0) <= 0.5 (above that they are
// ensembles); allow_ensembles skips the rejection.
void validate_records(const std::vector<EmitterRecord>& records,
                      bool allow_ensembles = false);

double defect_density(std::uint64_t n_defects, double edge_length_m);

struct PropertySummary {
  double min = std::numeric_limits<double>::quiet_NaN();
  double max = std::numeric_limits<double>::quiet_NaN();
  double mean = std::numeric_limits<double>::quiet_NaN();
  int n = 0;
};

struct SurveyStats {
  std::uint64_t n_flakes = 0;
  std::uint64_t n_defects = 0;
  double mean_defects_per_hosting_flake = 0.0;  // flakes with zero defects excluded
  // wavelength bands [start, start+width) from zpl_band_start_m
  double zpl_band_start_m = 550e-9;
  double zpl_band_width_m = 20e-9;
  std::vector<std::uint64_t> zpl_histogram;
  std::vector<std::string> property_names;
  std::map<std::string, PropertySummary> per_property;
  Eigen::MatrixXd correlations;  // pairwise-complete Pearson; NaN when undefined
};

SurveyStats survey_stats(const std::vector<EmitterRecord>& records);

// ZPL fitted-peak area over the summed fitted peak areas, both integrated
// over the recorded window only; baseline excluded. zpl_peak defaults to the
// largest-area peak.
double zpl_fraction(const Spectrum& spectrum, const FitResult& spectral_fit,
                    int zpl_peak = -1);

struct LifetimeBandwidthRow {
  std::string flake_id;
  std::string defect_id;
  double product = std::numeric_limits<double>::quiet_NaN();
};

struct LifetimeBandwidthTable {
  std::vector<LifetimeBandwidthRow> rows;
  double min = std::numeric_limits<double>::quiet_NaN();
  double mean = std::numeric_limits<double>::quiet_NaN();
  int n_skipped = 0;  // records with missing fields
};

LifetimeBandwidthTable lifetime_bandwidth_table(const std::vector<EmitterRecord>& records);

struct EmitterDataset {
  Spectrum spectrum;
  DecayHistogram decay;
  CorrelationHistogram g2;
  std::int64_t lifetime_window_start_ps = 0;  // 0,0 = automatic
  std::int64_t lifetime_window_end_ps = 0;
};

struct QuantityChange {
  double before = 0.0, after = 0.0;
  double ci_before = 0.0, ci_after = 0.0;  // CI half-widths
  double delta() const { return after - before; }
  double ratio() const { return after / before; }
  double delta_ci() const;  // propagated half-width on the difference
  double ratio_ci() const;  // propagated half-width on the ratio
};

struct TransferReport {
  QuantityChange zpl_center;
  QuantityChange zpl_fwhm;
  QuantityChange zpl_peak_brightness;
  QuantityChange lifetime;
  QuantityChange g2_zero;
  QuantityChange zpl_fraction;
  FitResult spectrum_before, spectrum_after;
  FitResult lifetime_before, lifetime_after;
  FitResult g2_before, g2_after;
};

TransferReport compare_emitters(const EmitterDataset& before,
                                const EmitterDataset& after,
                                const FitOptions& opts = {});

struct AnnealGroupSummary {
  double anneal_temp_k = 0.0;
  double mean = 0.0;
  double stddev = 0.0;  // sample standard deviation; 0 for n = 1
  int n = 0;
  bool small_n = false;  // fewer than 2 samples
};

struct AnnealSummary {
  std::vector<AnnealGroupSummary> groups;  // ascending temperature
  double best_temp_k = 0.0;  // maximal mean; ties break to lowest temperature
  bool tie = false;
};

AnnealSummary anneal_brightness_summary(
    const std::map<double, std::vector<double>>& samples_by_temp);

std::vector<EmitterRecord> read_records_json(const std::filesystem::path& path,
                                             bool allow_ensembles = false);
void write_records_json(const std::filesystem::path& path,
                        const std::vector<EmitterRecord>& records);
nlohmann::json survey_stats_json(const SurveyStats& stats);
nlohmann::json transfer_report_json(const TransferReport& report);

}  // namespace photonkit
