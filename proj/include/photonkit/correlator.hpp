#pragma once

#include <Eigen/Dense>
#include <cstdint>
#include <filesystem>

#include "photonkit/timetag.hpp"

// Reduction of time-tag streams into normalized second-order correlation
// histograms and sync-referenced decay histograms.
namespace photonkit {

struct CorrelationHistogram {
  // n+1 edges for n bins, picoseconds; uniform unless log_bins is set.
  // Bins are half-open [lo, hi): a delay exactly on an edge lands in the bin
  // to its right. The counted window is [-lag_range, lag_range).
  Eigen::Array<std::int64_t, Eigen::Dynamic, 1> bin_edges_ps;
  Eigen::Array<std::uint64_t, Eigen::Dynamic, 1> raw_counts;
  Eigen::ArrayXd normalized;       // empty until one of the normalizers ran
  double normalization_factor = 0.0;
  std::int64_t lag_range_ps = 0;
  bool log_bins = false;

  Eigen::Index n_bins() const { return raw_counts.size(); }
  Eigen::ArrayXd bin_centers_ps() const;
  Eigen::ArrayXd bin_widths_ps() const;
  std::uint64_t total_counts() const { return raw_counts.sum(); }
};

struct DecayHistogram {
  Eigen::Array<std::int64_t, Eigen::Dynamic, 1> bin_edges_ps;  // from sync
  Eigen::Array<std::uint64_t, Eigen::Dynamic, 1> counts;
  std::uint64_t n_sync = 0;

  Eigen::Index n_bins() const { return counts.size(); }
  Eigen::ArrayXd bin_centers_ps() const;
};

struct CorrelateOptions {
  int n_threads = 1;    // channel-A chunking; result is bin-exact regardless
  bool start_stop = false;  // only the first B partner per A tag (legacy mode)
};

// Histogram of pairwise delays (t_B - t_A) within [-max_lag, max_lag), filled
// by a sorted two-pointer sweep (linear in tags plus one increment per
// counted pair; never the N*M double loop).
CorrelationHistogram correlate(const TimeTagStream& stream,
                               std::int64_t bin_width_ps, std::int64_t max_lag_ps,
                               const CorrelateOptions& opts = {});

// Symmetric logarithmic binning for shelving-timescale visualisation: a
// linear bin over [-min_lag, min_lag) flanked by log-spaced bins out to
// max_lag on both sides.
CorrelationHistogram correlate_log(const TimeTagStream& stream,
                                   int bins_per_decade, std::int64_t min_lag_ps,
                                   std::int64_t max_lag_ps,
                                   const CorrelateOptions& opts = {});

// Analytic normalization: expected accidental coincidences per bin,
// rate_A * rate_B * duration * bin_width. No background subtraction, ever.
CorrelationHistogram normalize_g2(const CorrelationHistogram& hist,
                                  const TimeTagStream& stream);

// Empirical normalization by the mean of the outer fraction of bins (half on
// each flank). Operates on the current normalized values when present, else
// on raw counts.
CorrelationHistogram normalize_g2_tail(const CorrelationHistogram& hist,
                                       double outer_fraction = 0.2);

// Delay of each photon to the most recent preceding SYNC, over one sync
// period (shortest observed sync gap). Photons before the first SYNC are
// discarded.
DecayHistogram trpl_histogram(const TimeTagStream& stream,
                              std::int64_t bin_width_ps);

// CSV: bin_center_ps,raw_counts,normalized
void write_histogram_csv(const std::filesystem::path& path,
                         const CorrelationHistogram& hist);
// CSV: bin_center_ps,counts
void write_decay_csv(const std::filesystem::path& path, const DecayHistogram& hist);
CorrelationHistogram read_histogram_csv(const std::filesystem::path& path);
DecayHistogram read_decay_csv(const std::filesystem::path& path);

}  // namespace photonkit
