#include "photonkit/correlator.hpp"

#include <algorithm>
#include <atomic>
#include <cmath>
#include <fstream>
#include <sstream>
#include <thread>
#include <vector>

#include "photonkit/errors.hpp"

namespace photonkit {

namespace {

Eigen::ArrayXd centers_from_edges(
    const Eigen::Array<std::int64_t, Eigen::Dynamic, 1>& edges) {
  const Eigen::Index n = edges.size() - 1;
  Eigen::ArrayXd c(n);
  for (Eigen::Index i = 0; i < n; ++i)
    c[i] = 0.5 * (static_cast<double>(edges[i]) + static_cast<double>(edges[i + 1]));
  return c;
}

std::vector<std::int64_t> signed_channel_times(const TimeTagStream& stream,
                                               Channel c) {
  std::vector<std::int64_t> out;
  for (const auto& t : stream.records)
    if (t.channel == c) out.push_back(static_cast<std::int64_t>(t.time_ps));
  return out;
}

// Shared sweep core: per-A-tag window of B tags, one bin increment per pair.
template <typename BinFn>
void sweep(const std::vector<std::int64_t>& a, const std::vector<std::int64_t>& b,
           std::int64_t lag, std::size_t a_begin, std::size_t a_end,
           bool start_stop, BinFn&& bin_fn) {
  std::size_t lo = 0;
  for (std::size_t i = a_begin; i < a_end; ++i) {
    const std::int64_t t_a = a[i];
    while (lo < b.size() && b[lo] < t_a - lag) ++lo;
    if (start_stop) {
      // first partner at non-negative delay only
      auto it = std::lower_bound(b.begin() + static_cast<std::ptrdiff_t>(lo),
                                 b.end(), t_a);
      if (it != b.end() && *it - t_a < lag) bin_fn(*it - t_a);
      continue;
    }
    for (std::size_t j = lo; j < b.size() && b[j] - t_a < lag; ++j)
      bin_fn(b[j] - t_a);
  }
}

CorrelationHistogram correlate_impl(
    const TimeTagStream& stream,
    Eigen::Array<std::int64_t, Eigen::Dynamic, 1> edges, bool log_bins,
    std::int64_t uniform_bw, const CorrelateOptions& opts) {
  const auto a = signed_channel_times(stream, Channel::A);
  const auto b = signed_channel_times(stream, Channel::B);
  if (a.empty() || b.empty())
    throw EmptyChannel("correlate: a channel has no tags");

  CorrelationHistogram hist;
  hist.bin_edges_ps = std::move(edges);
  hist.log_bins = log_bins;
  hist.lag_range_ps = hist.bin_edges_ps[hist.bin_edges_ps.size() - 1];
  const Eigen::Index n_bins = hist.bin_edges_ps.size() - 1;
  const std::int64_t lag = hist.lag_range_ps;
  const std::int64_t lo_edge = hist.bin_edges_ps[0];

  const int n_threads =
      std::max(1, std::min<int>(opts.n_threads, static_cast<int>(a.size())));
  std::vector<Eigen::Array<std::uint64_t, Eigen::Dynamic, 1>> partial(
      n_threads, Eigen::Array<std::uint64_t, Eigen::Dynamic, 1>::Zero(n_bins));

  auto run_chunk = [&](int t, std::size_t begin, std::size_t end) {
    auto& counts = partial[t];
    if (!log_bins) {
      sweep(a, b, lag, begin, end, opts.start_stop, [&](std::int64_t d) {
        counts[static_cast<Eigen::Index>((d - lo_edge) / uniform_bw)] += 1;
      });
    } else {
      const auto* e = hist.bin_edges_ps.data();
      const auto* e_end = e + hist.bin_edges_ps.size();
      sweep(a, b, lag, begin, end, opts.start_stop, [&](std::int64_t d) {
        const auto* it = std::upper_bound(e, e_end, d);
        counts[static_cast<Eigen::Index>(it - e) - 1] += 1;
      });
    }
  };

  if (n_threads == 1) {
    run_chunk(0, 0, a.size());
  } else {
    std::vector<std::thread> pool;
    const std::size_t chunk = (a.size() + n_threads - 1) / n_threads;
    for (int t = 0; t < n_threads; ++t) {
      const std::size_t begin = chunk * static_cast<std::size_t>(t);
      const std::size_t end = std::min(a.size(), begin + chunk);
      pool.emplace_back(run_chunk, t, begin, end);
    }
    for (auto& th : pool) th.join();
  }

  hist.raw_counts = Eigen::Array<std::uint64_t, Eigen::Dynamic, 1>::Zero(n_bins);
  for (const auto& p : partial) hist.raw_counts += p;
  return hist;
}

}  // namespace

Eigen::ArrayXd CorrelationHistogram::bin_centers_ps() const {
  return centers_from_edges(bin_edges_ps);
}

Eigen::ArrayXd CorrelationHistogram::bin_widths_ps() const {
  const Eigen::Index n = n_bins();
  Eigen::ArrayXd w(n);
  for (Eigen::Index i = 0; i < n; ++i)
    w[i] = static_cast<double>(bin_edges_ps[i + 1] - bin_edges_ps[i]);
  return w;
}

Eigen::ArrayXd DecayHistogram::bin_centers_ps() const {
  return centers_from_edges(bin_edges_ps);
}

CorrelationHistogram correlate(const TimeTagStream& stream,
                               std::int64_t bin_width_ps, std::int64_t max_lag_ps,
                               const CorrelateOptions& opts) {
  if (bin_width_ps <= 0) throw ValidationError("correlate: bin width must be > 0");
  if (max_lag_ps < bin_width_ps)
    throw ValidationError("correlate: max lag must be >= bin width");
  const std::int64_t n_side = (max_lag_ps + bin_width_ps - 1) / bin_width_ps;
  Eigen::Array<std::int64_t, Eigen::Dynamic, 1> edges(2 * n_side + 1);
  for (std::int64_t k = 0; k <= 2 * n_side; ++k)
    edges[k] = (k - n_side) * bin_width_ps;
  return correlate_impl(stream, std::move(edges), false, bin_width_ps, opts);
}

CorrelationHistogram correlate_log(const TimeTagStream& stream,
                                   int bins_per_decade, std::int64_t min_lag_ps,
                                   std::int64_t max_lag_ps,
                                   const CorrelateOptions& opts) {
  if (bins_per_decade < 1 || min_lag_ps < 1 || max_lag_ps <= min_lag_ps)
    throw ValidationError("correlate_log: bad binning parameters");
  std::vector<std::int64_t> pos{min_lag_ps};
  const double factor = std::pow(10.0, 1.0 / bins_per_decade);
  double edge = static_cast<double>(min_lag_ps);
  while (pos.back() < max_lag_ps) {
    edge *= factor;
    pos.push_back(std::max<std::int64_t>(pos.back() + 1,
                                         static_cast<std::int64_t>(std::llround(edge))));
  }
  Eigen::Array<std::int64_t, Eigen::Dynamic, 1> edges(2 * pos.size());
  for (std::size_t i = 0; i < pos.size(); ++i) {
    edges[static_cast<Eigen::Index>(pos.size() - 1 - i)] = -pos[i];
    edges[static_cast<Eigen::Index>(pos.size() + i)] = pos[i];
  }
  return correlate_impl(stream, std::move(edges), true, 0, opts);
}

CorrelationHistogram normalize_g2(const CorrelationHistogram& hist,
                                  const TimeTagStream& stream) {
  const double rate_a = stream.rate_hz(Channel::A);
  const double rate_b = stream.rate_hz(Channel::B);
  const double duration_s = static_cast<double>(stream.duration_ps) * 1e-12;
  if (!(rate_a > 0.0) || !(rate_b > 0.0) || !(duration_s > 0.0))
    throw DegenerateNormalization("normalize_g2: zero channel rate");

  CorrelationHistogram out = hist;
  const double pair_rate = rate_a * rate_b * duration_s;  // per second of lag
  if (!hist.log_bins) {
    const double bw_s =
        static_cast<double>(hist.bin_edges_ps[1] - hist.bin_edges_ps[0]) * 1e-12;
    out.normalization_factor = pair_rate * bw_s;
    out.normalized = hist.raw_counts.cast<double>() / out.normalization_factor;
  } else {
    out.normalization_factor = pair_rate;  // per-bin width applied below
    out.normalized = hist.raw_counts.cast<double>() /
                     (pair_rate * (hist.bin_widths_ps() * 1e-12));
  }
  return out;
}

CorrelationHistogram normalize_g2_tail(const CorrelationHistogram& hist,
                                       double outer_fraction) {
  if (!(outer_fraction > 0.0 && outer_fraction <= 1.0))
    throw ValidationError("normalize_g2_tail: outer fraction outside (0,1]");
  const Eigen::Index n = hist.n_bins();
  const auto n_outer = std::max<Eigen::Index>(
      1, static_cast<Eigen::Index>(std::llround(0.5 * outer_fraction * n)));

  const bool from_normalized = hist.normalized.size() == n;
  Eigen::ArrayXd values =
      from_normalized ? hist.normalized : hist.raw_counts.cast<double>().eval();
  const double tail_mean =
      (values.head(n_outer).sum() + values.tail(n_outer).sum()) /
      static_cast<double>(2 * n_outer);
  if (!(tail_mean > 0.0))
    throw DegenerateNormalization("normalize_g2_tail: empty flank bins");

  CorrelationHistogram out = hist;
  out.normalized = values / tail_mean;
  out.normalization_factor =
      (from_normalized ? hist.normalization_factor : 1.0) * tail_mean;
  return out;
}

DecayHistogram trpl_histogram(const TimeTagStream& stream,
                              std::int64_t bin_width_ps) {
  if (bin_width_ps <= 0)
    throw ValidationError("trpl_histogram: bin width must be > 0");
  std::vector<std::uint64_t> syncs;
  for (const auto& t : stream.records)
    if (t.channel == Channel::Sync) syncs.push_back(t.time_ps);
  if (syncs.empty()) throw MissingSync("trpl_histogram: stream has no SYNC tags");

  // span = one sync period; delays past it belong to a missed-sync region
  std::uint64_t span = stream.duration_ps > syncs.back()
                           ? stream.duration_ps - syncs.back()
                           : 0;
  for (std::size_t i = 1; i < syncs.size(); ++i) {
    const std::uint64_t gap = syncs[i] - syncs[i - 1];
    if (gap > 0) span = span == 0 ? gap : std::min(span, gap);
  }
  const auto n_bins = static_cast<Eigen::Index>(
      span / static_cast<std::uint64_t>(bin_width_ps));
  if (n_bins < 1)
    throw ValidationError("trpl_histogram: bin width exceeds the sync period");

  DecayHistogram hist;
  hist.n_sync = syncs.size();
  hist.bin_edges_ps.resize(n_bins + 1);
  for (Eigen::Index i = 0; i <= n_bins; ++i) hist.bin_edges_ps[i] = i * bin_width_ps;
  hist.counts = Eigen::Array<std::uint64_t, Eigen::Dynamic, 1>::Zero(n_bins);

  std::size_t s = 0;
  for (const auto& tag : stream.records) {
    if (tag.channel == Channel::Sync) continue;
    while (s + 1 < syncs.size() && syncs[s + 1] <= tag.time_ps) ++s;
    if (tag.time_ps < syncs[s]) continue;  // before the first sync
    const std::uint64_t delay = tag.time_ps - syncs[s];
    const auto idx = static_cast<Eigen::Index>(
        delay / static_cast<std::uint64_t>(bin_width_ps));
    if (idx < n_bins) hist.counts[idx] += 1;
  }
  return hist;
}

void write_histogram_csv(const std::filesystem::path& path,
                         const CorrelationHistogram& hist) {
  std::ofstream f(path, std::ios::trunc);
  if (!f) throw IoError("cannot open for writing: " + path.string());
  f << "bin_center_ps,raw_counts,normalized\n";
  const auto centers = hist.bin_centers_ps();
  const bool has_norm = hist.normalized.size() == hist.n_bins();
  f.precision(12);
  for (Eigen::Index i = 0; i < hist.n_bins(); ++i)
    f << centers[i] << ',' << hist.raw_counts[i] << ','
      << (has_norm ? hist.normalized[i] : 0.0) << '\n';
  if (!f) throw IoError("short write: " + path.string());
}

void write_decay_csv(const std::filesystem::path& path, const DecayHistogram& hist) {
  std::ofstream f(path, std::ios::trunc);
  if (!f) throw IoError("cannot open for writing: " + path.string());
  f << "bin_center_ps,counts\n";
  const auto centers = hist.bin_centers_ps();
  f.precision(12);
  for (Eigen::Index i = 0; i < hist.n_bins(); ++i)
    f << centers[i] << ',' << hist.counts[i] << '\n';
  if (!f) throw IoError("short write: " + path.string());
}

namespace {

std::vector<std::vector<double>> read_csv_columns(const std::filesystem::path& path,
                                                  std::size_t n_cols) {
  std::ifstream f(path);
  if (!f) throw IoError("cannot open: " + path.string());
  std::string line;
  std::getline(f, line);  // header
  std::vector<std::vector<double>> cols(n_cols);
  while (std::getline(f, line)) {
    if (line.empty()) continue;
    std::stringstream ss(line);
    std::string cell;
    for (std::size_t c = 0; c < n_cols; ++c) {
      if (!std::getline(ss, cell, ','))
        throw IoError("csv row with too few columns in " + path.string());
      cols[c].push_back(std::stod(cell));
    }
  }
  return cols;
}

// uniform-bin edges from center positions
Eigen::Array<std::int64_t, Eigen::Dynamic, 1> edges_from_centers(
    const std::vector<double>& centers) {
  if (centers.size() < 2) throw IoError("histogram csv needs >= 2 rows");
  const double bw = centers[1] - centers[0];
  Eigen::Array<std::int64_t, Eigen::Dynamic, 1> edges(centers.size() + 1);
  for (std::size_t i = 0; i < centers.size(); ++i)
    edges[static_cast<Eigen::Index>(i)] =
        static_cast<std::int64_t>(std::llround(centers[i] - 0.5 * bw));
  edges[static_cast<Eigen::Index>(centers.size())] =
      static_cast<std::int64_t>(std::llround(centers.back() + 0.5 * bw));
  return edges;
}

}  // namespace

CorrelationHistogram read_histogram_csv(const std::filesystem::path& path) {
  const auto cols = read_csv_columns(path, 3);
  CorrelationHistogram hist;
  hist.bin_edges_ps = edges_from_centers(cols[0]);
  hist.lag_range_ps = hist.bin_edges_ps[hist.bin_edges_ps.size() - 1];
  const auto n = static_cast<Eigen::Index>(cols[0].size());
  hist.raw_counts.resize(n);
  hist.normalized.resize(n);
  for (Eigen::Index i = 0; i < n; ++i) {
    hist.raw_counts[i] = static_cast<std::uint64_t>(std::llround(cols[1][static_cast<std::size_t>(i)]));
    hist.normalized[i] = cols[2][static_cast<std::size_t>(i)];
  }
  return hist;
}

DecayHistogram read_decay_csv(const std::filesystem::path& path) {
  const auto cols = read_csv_columns(path, 2);
  DecayHistogram hist;
  hist.bin_edges_ps = edges_from_centers(cols[0]);
  const auto n = static_cast<Eigen::Index>(cols[0].size());
  hist.counts.resize(n);
  for (Eigen::Index i = 0; i < n; ++i)
    hist.counts[i] = static_cast<std::uint64_t>(std::llround(cols[1][static_cast<std::size_t>(i)]));
  hist.n_sync = 0;  // unknown from csv
  return hist;
}

}  // namespace photonkit
