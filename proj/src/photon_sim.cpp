#include "photonkit/photon_sim.hpp"

#include <algorithm>
#include <atomic>
#include <cmath>
#include <thread>
#include <vector>

#include <nlohmann/json.hpp>

#include "photonkit/rng.hpp"

namespace photonkit {

namespace {

enum class Level { Ground, Excited, Shelf };

// Sub-stream ids off the master seed.
constexpr std::uint64_t kRoutingStream = 1;
constexpr std::uint64_t kDetectorStream = 2;
constexpr std::uint64_t kWindowStreamBase = 1000;
// inside the detector chain
constexpr std::uint64_t kThinningStream = 10;
constexpr std::uint64_t kJitterStream = 11;
constexpr std::uint64_t kDarkStreamBase = 12;  // +0 channel A, +1 channel B

// Walks the three-level kinetics from t (local seconds) to t_end, appending
// photon emission times. Exponential waiting times are memoryless, so
// entering with a fresh draw at a window boundary is distributionally exact.
void evolve(Level& state, double t, double t_end, const EmitterRates& r,
            bool pumped, SplitRng& rng, std::vector<double>& photons) {
  const double k_exc = pumped ? r.excitation_rate : 0.0;
  const double k_e_out = r.radiative_rate + r.intersystem_rate;
  const double p_radiative = r.radiative_rate / k_e_out;
  while (true) {
    double rate_out = 0.0;
    switch (state) {
      case Level::Ground: rate_out = k_exc; break;
      case Level::Excited: rate_out = k_e_out; break;
      case Level::Shelf: rate_out = r.deshelving_rate; break;
    }
    if (rate_out <= 0.0) return;  // absorbing under current drive
    t += rng.exponential(rate_out);
    if (t >= t_end) return;
    switch (state) {
      case Level::Ground:
        state = Level::Excited;
        break;
      case Level::Excited:
        if (rng.bernoulli(p_radiative)) {
          state = Level::Ground;
          if (rng.bernoulli(r.quantum_efficiency)) photons.push_back(t);
        } else {
          state = Level::Shelf;
        }
        break;
      case Level::Shelf:
        state = Level::Ground;
        break;
    }
  }
}

Level draw_steady_state(const EmitterRates& r, SplitRng& rng) {
  const double pe = excited_state_occupation(r, r.excitation_rate);
  const double ps = r.deshelving_rate > 0.0
                        ? pe * r.intersystem_rate / r.deshelving_rate
                        : (r.intersystem_rate > 0.0 ? 1.0 : 0.0);
  const double u = rng.uniform();
  if (u < pe) return Level::Excited;
  if (u < pe + ps) return Level::Shelf;
  return Level::Ground;
}

// Beamsplitter: one routing draw per emitted photon, in emission order.
std::vector<TimeTag> route_photons(const std::vector<std::uint64_t>& times_ps,
                                   SplitRng rng) {
  std::vector<TimeTag> tags;
  tags.reserve(times_ps.size());
  for (const auto t : times_ps)
    tags.push_back({t, rng.bernoulli(0.5) ? Channel::B : Channel::A});
  return tags;
}

void check_capacity(double expected_tags, const SimOptions& opts) {
  if (expected_tags > static_cast<double>(opts.max_expected_tags))
    throw CapacityExceeded("expected tag count " + std::to_string(expected_tags) +
                           " exceeds cap " + std::to_string(opts.max_expected_tags));
}

nlohmann::json config_json(const EmitterRates& r, const DetectorConfig& d) {
  return {{"rates",
           {{"excitation_rate_hz", r.excitation_rate},
            {"radiative_rate_hz", r.radiative_rate},
            {"intersystem_rate_hz", r.intersystem_rate},
            {"deshelving_rate_hz", r.deshelving_rate},
            {"quantum_efficiency", r.quantum_efficiency}}},
          {"detector",
           {{"efficiency", d.efficiency},
            {"dark_rate_hz", d.dark_rate},
            {"dead_time_s", d.dead_time},
            {"timing_jitter_sigma_s", d.timing_jitter_sigma}}}};
}

TimeTagStream finish_stream(std::vector<std::uint64_t> photon_times,
                            std::vector<TimeTag> sync_tags,
                            std::uint64_t duration_ps, const EmitterRates& rates,
                            const DetectorConfig& det, std::uint64_t seed,
                            nlohmann::json meta) {
  TimeTagStream ideal;
  ideal.duration_ps = duration_ps;
  ideal.seed = seed;
  ideal.records = route_photons(photon_times, SplitRng(seed).split(kRoutingStream));
  ideal.records.insert(ideal.records.end(), sync_tags.begin(), sync_tags.end());
  std::sort(ideal.records.begin(), ideal.records.end(), time_order);

  TimeTagStream out =
      apply_detector(ideal, det, SplitRng(seed).split(kDetectorStream).base_seed());
  out.seed = seed;
  meta.update(config_json(rates, det));
  out.metadata_json = meta.dump();
  return out;
}

}  // namespace

TimeTagStream simulate_cw(const EmitterRates& rates, const DetectorConfig& det,
                          double duration_s, std::uint64_t seed,
                          const SimOptions& opts) {
  rates.validate();
  det.validate();
  if (!(duration_s > 0.0)) throw ValidationError("simulate_cw: duration must be > 0");
  if (opts.n_windows < 1) throw ValidationError("simulate_cw: n_windows must be >= 1");

  const double pe_ss = excited_state_occupation(rates, rates.excitation_rate);
  const double emission_rate = pe_ss * rates.radiative_rate * rates.quantum_efficiency;
  check_capacity((emission_rate + 2.0 * det.dark_rate) * duration_s * 1.1 + 1024,
                 opts);

  const int n_windows = opts.n_windows;
  const double window_s = duration_s / n_windows;
  std::vector<std::vector<std::uint64_t>> window_photons(n_windows);

  auto run_window = [&](int w) {
    SplitRng rng = SplitRng(seed).split(kWindowStreamBase + static_cast<std::uint64_t>(w));
    Level state = (w == 0) ? Level::Ground : draw_steady_state(rates, rng);
    std::vector<double> local;
    evolve(state, 0.0, window_s, rates, /*pumped=*/true, rng, local);
    const double offset_ps = static_cast<double>(w) * window_s * 1e12;
    auto& out = window_photons[w];
    out.reserve(local.size());
    for (const double t : local)
      out.push_back(static_cast<std::uint64_t>(std::llround(offset_ps + t * 1e12)));
  };

  if (opts.n_threads <= 1 || n_windows == 1) {
    for (int w = 0; w < n_windows; ++w) run_window(w);
  } else {
    std::atomic<int> next{0};
    auto worker = [&] {
      for (int w = next.fetch_add(1); w < n_windows; w = next.fetch_add(1))
        run_window(w);
    };
    std::vector<std::thread> pool;
    const int n = std::min(opts.n_threads, n_windows);
    for (int i = 0; i < n; ++i) pool.emplace_back(worker);
    for (auto& th : pool) th.join();
  }

  std::vector<std::uint64_t> photons;
  for (auto& w : window_photons)
    photons.insert(photons.end(), w.begin(), w.end());

  const auto duration_ps = static_cast<std::uint64_t>(std::llround(duration_s * 1e12));
  // window offsets are rounded independently; keep tags inside the stream
  std::erase_if(photons, [&](std::uint64_t t) { return t >= duration_ps; });

  nlohmann::json meta{{"mode", "cw"},
                      {"duration_s", duration_s},
                      {"n_windows", n_windows}};
  return finish_stream(std::move(photons), {}, duration_ps, rates, det, seed,
                       std::move(meta));
}

TimeTagStream simulate_pulsed(const EmitterRates& rates, const DetectorConfig& det,
                              const ExcitationConfig& exc, std::uint64_t n_pulses,
                              std::uint64_t seed, const SimOptions& opts) {
  rates.validate();
  det.validate();
  exc.validate();
  if (exc.mode != ExcitationMode::Pulsed)
    throw ValidationError("simulate_pulsed: excitation mode must be Pulsed");

  const double period_ps = 1e12 / exc.rep_rate;
  const double period_s = 1.0 / exc.rep_rate;
  const double n = static_cast<double>(n_pulses);
  check_capacity(n * (1.0 + exc.excitation_prob * rates.quantum_efficiency) +
                     2.0 * det.dark_rate * n * period_s + 1024,
                 opts);

  std::vector<std::uint64_t> photons;
  std::vector<TimeTag> syncs;
  syncs.reserve(n_pulses);
  SplitRng rng = SplitRng(seed).split(kWindowStreamBase);

  // Excitation is instantaneous at the pulse time (pulse length is orders of
  // magnitude below every lifetime); the emitter state, in particular shelf
  // occupation, persists across pulses.
  Level state = Level::Ground;
  for (std::uint64_t k = 0; k < n_pulses; ++k) {
    const double t_pulse_ps = static_cast<double>(k) * period_ps;
    syncs.push_back({static_cast<std::uint64_t>(std::llround(t_pulse_ps)), Channel::Sync});
    if (state == Level::Ground && rng.bernoulli(exc.excitation_prob))
      state = Level::Excited;
    std::vector<double> local;
    evolve(state, 0.0, period_s, rates, /*pumped=*/false, rng, local);
    for (const double t : local)
      photons.push_back(
          static_cast<std::uint64_t>(std::llround(t_pulse_ps + t * 1e12)));
  }

  const auto duration_ps = static_cast<std::uint64_t>(std::llround(n * period_ps));
  std::erase_if(photons, [&](std::uint64_t t) { return t >= duration_ps; });

  nlohmann::json meta{{"mode", "pulsed"},
                      {"n_pulses", n_pulses},
                      {"rep_rate_hz", exc.rep_rate},
                      {"pulse_length_s", exc.pulse_length},
                      {"excitation_prob", exc.excitation_prob}};
  return finish_stream(std::move(photons), std::move(syncs), duration_ps, rates,
                       det, seed, std::move(meta));
}

TimeTagStream apply_detector(const TimeTagStream& ideal, const DetectorConfig& det,
                             std::uint64_t seed) {
  det.validate();
  SplitRng base(seed);
  SplitRng thin_rng = base.split(kThinningStream);
  SplitRng jitter_rng = base.split(kJitterStream);

  const double sigma_ps = det.timing_jitter_sigma * 1e12;
  const auto dead_ps =
      static_cast<std::uint64_t>(std::llround(det.dead_time * 1e12));

  TimeTagStream out;
  out.duration_ps = ideal.duration_ps;
  out.seed = ideal.seed;
  out.metadata_json = ideal.metadata_json;

  std::vector<TimeTag> photons;
  photons.reserve(ideal.records.size());
  for (const auto& tag : ideal.records) {
    if (tag.channel == Channel::Sync) {
      out.records.push_back(tag);
      continue;
    }
    // one thinning draw and one jitter draw per input photon, always, so the
    // two imperfections stay decoupled
    const bool keep = thin_rng.bernoulli(det.efficiency);
    const double dt_ps = sigma_ps > 0.0 ? jitter_rng.normal(0.0, sigma_ps) : 0.0;
    if (!keep) continue;
    const double jittered = static_cast<double>(tag.time_ps) + dt_ps;
    const double rounded = std::nearbyint(jittered);  // half-to-even
    if (rounded < 0.0 || rounded >= static_cast<double>(out.duration_ps)) continue;
    photons.push_back({static_cast<std::uint64_t>(rounded), tag.channel});
  }
  std::sort(photons.begin(), photons.end(), time_order);

  // non-paralyzable per-channel dead time
  std::uint64_t last_accept[2] = {0, 0};
  bool any_accept[2] = {false, false};
  std::vector<TimeTag> alive;
  alive.reserve(photons.size());
  for (const auto& tag : photons) {
    const int ch = static_cast<int>(tag.channel);
    if (any_accept[ch] && dead_ps > 0 && tag.time_ps - last_accept[ch] < dead_ps)
      continue;
    alive.push_back(tag);
    last_accept[ch] = tag.time_ps;
    any_accept[ch] = true;
  }

  // dark counts are injected after the veto stage
  if (det.dark_rate > 0.0 && out.duration_ps > 0) {
    const double duration_s = static_cast<double>(out.duration_ps) * 1e-12;
    for (int ch = 0; ch < 2; ++ch) {
      SplitRng dark_rng = base.split(kDarkStreamBase + static_cast<std::uint64_t>(ch));
      double t = 0.0;
      while (true) {
        t += dark_rng.exponential(det.dark_rate);
        if (t >= duration_s) break;
        alive.push_back({static_cast<std::uint64_t>(std::llround(t * 1e12)),
                         static_cast<Channel>(ch)});
      }
    }
  }

  out.records.insert(out.records.end(), alive.begin(), alive.end());
  std::sort(out.records.begin(), out.records.end(), time_order);
  return out;
}

double expected_channel_rate(const EmitterRates& rates, const DetectorConfig& det) {
  const double pe_ss = excited_state_occupation(rates, rates.excitation_rate);
  return 0.5 * pe_ss * rates.radiative_rate * rates.quantum_efficiency *
         det.efficiency;
}

}  // namespace photonkit
