#include <doctest.h>

#include <cmath>

#include "photonkit/correlator.hpp"
#include "photonkit/photon_sim.hpp"
#include "photonkit/rng.hpp"
#include "oracles.hpp"

using namespace photonkit;

namespace {

TimeTagStream poisson_pair_stream(double rate_hz, double duration_s,
                                  std::uint64_t seed) {
  SplitRng rng(seed);
  TimeTagStream stream;
  stream.duration_ps = static_cast<std::uint64_t>(duration_s * 1e12);
  for (int ch = 0; ch < 2; ++ch) {
    SplitRng crng = rng.split(static_cast<std::uint64_t>(ch));
    double t = 0.0;
    while (true) {
      t += crng.exponential(rate_hz);
      if (t >= duration_s) break;
      stream.records.push_back({static_cast<std::uint64_t>(t * 1e12),
                                static_cast<Channel>(ch)});
    }
  }
  std::sort(stream.records.begin(), stream.records.end(), time_order);
  return stream;
}

TimeTagStream random_stream(SplitRng& rng, std::size_t max_tags) {
  TimeTagStream stream;
  const auto n =
      2 + static_cast<std::size_t>(rng.uniform() * static_cast<double>(max_tags - 2));
  const std::uint64_t span = 1 + rng.next_u64() % 5000000;
  for (std::size_t i = 0; i < n; ++i)
    stream.records.push_back({rng.next_u64() % span,
                              rng.bernoulli(0.5) ? Channel::A : Channel::B});
  std::sort(stream.records.begin(), stream.records.end(), time_order);
  stream.duration_ps = span + 1;
  return stream;
}

}  // namespace

TEST_CASE("hand-checkable coincidence example") {
  TimeTagStream stream;
  stream.records = {{0, Channel::A}, {100, Channel::B}, {500, Channel::B}};
  stream.duration_ps = 1000000;
  const CorrelationHistogram hist = correlate(stream, 100, 1000);
  CHECK(hist.lag_range_ps == 1000);
  CHECK(hist.n_bins() == 20);
  CHECK(hist.total_counts() == 2);
  // delays +100 and +500 land in [100,200) and [500,600)
  const auto edges = hist.bin_edges_ps;
  for (Eigen::Index i = 0; i < hist.n_bins(); ++i) {
    const bool expected = (edges[i] == 100) || (edges[i] == 500);
    CHECK(hist.raw_counts[i] == (expected ? 1u : 0u));
  }
}

TEST_CASE("delays on bin edges go right; window is [-L, L)") {
  TimeTagStream stream;
  stream.records = {{1000, Channel::A},
                    {1200, Channel::B},   // +200, edge of [200,300)
                    {2000, Channel::B},   // +1000 = +L, outside [-L, L)
                    {0, Channel::B}};     // -1000 = -L, first bin
  std::sort(stream.records.begin(), stream.records.end(), time_order);
  stream.duration_ps = 10000;
  const CorrelationHistogram hist = correlate(stream, 100, 1000);
  CHECK(hist.total_counts() == 2);
  for (Eigen::Index i = 0; i < hist.n_bins(); ++i) {
    const bool expected = (hist.bin_edges_ps[i] == 200) ||
                          (hist.bin_edges_ps[i] == -1000);
    CHECK(hist.raw_counts[i] == (expected ? 1u : 0u));
  }
}

TEST_CASE("correlate matches the brute-force oracle bin-exactly") {
  SplitRng rng(2025);
  for (int trial = 0; trial < 60; ++trial) {
    const TimeTagStream stream = random_stream(rng, 3000);
    const std::int64_t bin = 1 + static_cast<std::int64_t>(rng.next_u64() % 997);
    const std::int64_t lag =
        bin + static_cast<std::int64_t>(rng.next_u64() % 100000);
    bool has_a = false, has_b = false;
    for (const auto& t : stream.records) {
      has_a |= t.channel == Channel::A;
      has_b |= t.channel == Channel::B;
    }
    if (!has_a || !has_b) continue;
    const CorrelationHistogram hist = correlate(stream, bin, lag);
    const auto expected = oracles::brute_force_correlate(stream, bin, lag);
    REQUIRE(hist.n_bins() == static_cast<Eigen::Index>(expected.size()));
    std::uint64_t expected_total = 0;
    for (Eigen::Index i = 0; i < hist.n_bins(); ++i) {
      CHECK(hist.raw_counts[i] == expected[static_cast<std::size_t>(i)]);
      expected_total += expected[static_cast<std::size_t>(i)];
    }
    // count conservation against the oracle's pair count
    CHECK(hist.total_counts() == expected_total);
  }
}

TEST_CASE("correlate is thread-count invariant") {
  SplitRng rng(4);
  const TimeTagStream stream = random_stream(rng, 20000);
  const CorrelationHistogram one = correlate(stream, 50, 20000, {.n_threads = 1});
  const CorrelationHistogram four = correlate(stream, 50, 20000, {.n_threads = 4});
  REQUIRE(one.n_bins() == four.n_bins());
  for (Eigen::Index i = 0; i < one.n_bins(); ++i)
    CHECK(one.raw_counts[i] == four.raw_counts[i]);
}

TEST_CASE("swapping channels mirrors the histogram") {
  SplitRng rng(6);

  SUBCASE("delays never on an edge: flip is j <-> n-1-j") {
    // A on even timestamps, B on odd: every delay is odd, bins are 2 ps wide
    TimeTagStream stream;
    for (int i = 0; i < 500; ++i) {
      stream.records.push_back({2 * (rng.next_u64() % 4000), Channel::A});
      stream.records.push_back({2 * (rng.next_u64() % 4000) + 1, Channel::B});
    }
    std::sort(stream.records.begin(), stream.records.end(), time_order);
    stream.duration_ps = 8002;
    TimeTagStream swapped = stream;
    for (auto& tag : swapped.records)
      tag.channel = tag.channel == Channel::A ? Channel::B : Channel::A;

    const CorrelationHistogram fwd = correlate(stream, 2, 500);
    const CorrelationHistogram rev = correlate(swapped, 2, 500);
    const Eigen::Index n = fwd.n_bins();
    CHECK(fwd.total_counts() > 0);
    for (Eigen::Index i = 0; i < n; ++i)
      CHECK(fwd.raw_counts[i] == rev.raw_counts[n - 1 - i]);
  }

  SUBCASE("every delay edge-aligned (1 ps bins): flip is j <-> n-j") {
    const std::int64_t lag = 64;
    TimeTagStream stream;
    bool boundary = true;
    while (boundary) {
      stream = random_stream(rng, 400);
      boundary = false;
      for (const auto& a : stream.records)
        for (const auto& b : stream.records)
          if (a.channel == Channel::A && b.channel == Channel::B &&
              std::llabs(static_cast<std::int64_t>(b.time_ps) -
                         static_cast<std::int64_t>(a.time_ps)) == lag)
            boundary = true;
    }
    TimeTagStream swapped = stream;
    for (auto& tag : swapped.records)
      tag.channel = tag.channel == Channel::A ? Channel::B : Channel::A;

    const CorrelationHistogram fwd = correlate(stream, 1, lag);
    const CorrelationHistogram rev = correlate(swapped, 1, lag);
    const Eigen::Index n = fwd.n_bins();
    // no pairs at |delay| = lag by construction, so the boundary bins are empty
    CHECK(fwd.raw_counts[0] == 0);
    CHECK(rev.raw_counts[0] == 0);
    for (Eigen::Index i = 1; i < n; ++i)
      CHECK(fwd.raw_counts[i] == rev.raw_counts[n - i]);
  }
}

TEST_CASE("empty channel raises") {
  TimeTagStream stream;
  stream.records = {{10, Channel::A}, {20, Channel::A}};
  stream.duration_ps = 100;
  CHECK_THROWS_AS(correlate(stream, 1, 10), EmptyChannel);
}

TEST_CASE("two Poisson channels normalize to a flat unit histogram") {
  const TimeTagStream stream = poisson_pair_stream(50000.0, 2.0, 88);
  const CorrelationHistogram raw = correlate(stream, 10000, 1000000);
  const CorrelationHistogram hist = normalize_g2(raw, stream);
  REQUIRE(hist.normalized.size() == hist.n_bins());
  // each bin is Poisson with mean = normalization factor
  const double sigma = std::sqrt(hist.normalization_factor) / hist.normalization_factor;
  int outliers = 0;
  for (Eigen::Index i = 0; i < hist.n_bins(); ++i) {
    if (std::abs(hist.normalized[i] - 1.0) > 3.0 * sigma) ++outliers;
  }
  // 3-sigma outliers should be rare (0.27% expected)
  CHECK(outliers <= std::max<int>(3, static_cast<int>(0.01 * hist.n_bins())));
  CHECK(hist.normalized.mean() == doctest::Approx(1.0).epsilon(0.02));
}

TEST_CASE("empirical tail normalization is exact on its own flanks") {
  const TimeTagStream stream = poisson_pair_stream(20000.0, 1.0, 13);
  const CorrelationHistogram raw = correlate(stream, 5000, 500000);
  const CorrelationHistogram analytic = normalize_g2(raw, stream);
  const CorrelationHistogram tail = normalize_g2_tail(analytic, 0.2);
  const Eigen::Index n = tail.n_bins();
  const auto n_outer = std::max<Eigen::Index>(1, n / 10);
  const double mean = (tail.normalized.head(n_outer).sum() +
                       tail.normalized.tail(n_outer).sum()) /
                      static_cast<double>(2 * n_outer);
  CHECK(mean == doctest::Approx(1.0).epsilon(1e-12));
}

TEST_CASE("normalization rejects degenerate rates") {
  TimeTagStream stream;
  stream.records = {{10, Channel::A}, {30, Channel::B}};
  stream.duration_ps = 0;  // no duration -> zero rates
  CorrelationHistogram hist;
  hist.bin_edges_ps.resize(3);
  hist.bin_edges_ps << -10, 0, 10;
  hist.raw_counts = Eigen::Array<std::uint64_t, Eigen::Dynamic, 1>::Zero(2);
  CHECK_THROWS_AS(normalize_g2(hist, stream), DegenerateNormalization);
}

TEST_CASE("log binning covers the lag range with per-width normalization") {
  const TimeTagStream stream = poisson_pair_stream(100000.0, 1.0, 17);
  const CorrelationHistogram hist = correlate_log(stream, 4, 100, 1000000);
  CHECK(hist.log_bins);
  CHECK(hist.bin_edges_ps[0] == -hist.lag_range_ps);
  const CorrelationHistogram normed = normalize_g2(hist, stream);
  // flat Poisson input: every log bin near 1 despite wildly different widths
  CHECK(normed.normalized.mean() == doctest::Approx(1.0).epsilon(0.05));
}

TEST_CASE("start-stop mode keeps at most one partner per start tag") {
  SplitRng rng(33);
  const TimeTagStream stream = random_stream(rng, 2000);
  const CorrelationHistogram ss = correlate(stream, 100, 10000, {.start_stop = true});
  std::uint64_t n_a = 0;
  for (const auto& t : stream.records)
    if (t.channel == Channel::A) ++n_a;
  CHECK(ss.total_counts() <= n_a);
  // start-stop only fills non-negative delays
  for (Eigen::Index i = 0; i < ss.n_bins(); ++i)
    if (ss.bin_edges_ps[i + 1] <= 0) CHECK(ss.raw_counts[i] == 0);
}

TEST_CASE("trpl histogram basics") {
  TimeTagStream stream;
  stream.records = {{0, Channel::Sync},
                    {1000000, Channel::Sync},
                    {1003000, Channel::A}};
  stream.duration_ps = 2000000;

  const DecayHistogram hist = trpl_histogram(stream, 1000);
  CHECK(hist.n_sync == 2);
  std::uint64_t total = 0;
  for (Eigen::Index i = 0; i < hist.n_bins(); ++i) {
    total += hist.counts[i];
    if (hist.counts[i] > 0) CHECK(hist.bin_edges_ps[i] == 3000);
  }
  CHECK(total == 1);
}

TEST_CASE("photons before the first sync are discarded") {
  TimeTagStream stream;
  stream.records = {{500, Channel::A}, {1000, Channel::Sync}, {500000, Channel::Sync}};
  stream.duration_ps = 1000000;
  const DecayHistogram hist = trpl_histogram(stream, 100);
  CHECK(hist.counts.sum() == 0);
}

TEST_CASE("missing sync raises") {
  TimeTagStream stream;
  stream.records = {{10, Channel::A}};
  stream.duration_ps = 100;
  CHECK_THROWS_AS(trpl_histogram(stream, 10), MissingSync);
}

TEST_CASE("simulated two-level emitter dips at zero delay") {
  EmitterRates rates;
  rates.excitation_rate = 2e6;
  rates.radiative_rate = 5e8;  // t1 ~ 2 ns
  rates.intersystem_rate = 0.0;
  rates.deshelving_rate = 1e7;
  rates.quantum_efficiency = 1.0;
  DetectorConfig det;
  det.efficiency = 1.0;
  det.dark_rate = 0.0;
  const TimeTagStream stream = simulate_cw(rates, det, 2.0, 1234);
  const CorrelationHistogram hist =
      normalize_g2(correlate(stream, 100, 50000), stream);
  Eigen::Index center = 0;
  const auto centers = hist.bin_centers_ps();
  for (Eigen::Index i = 0; i < hist.n_bins(); ++i)
    if (std::abs(centers[i]) < std::abs(centers[center])) center = i;
  // bin width 100 ps << t1: the zero-delay bin must be deeply antibunched
  CHECK(hist.normalized[center] < 0.05);
  // far wings near 1
  CHECK(hist.normalized.head(20).mean() == doctest::Approx(1.0).epsilon(0.1));
}
