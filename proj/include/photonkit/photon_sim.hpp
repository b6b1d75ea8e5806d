#pragma once

#include <cstdint>

#include "photonkit/emitter_model.hpp"
#include "photonkit/timetag.hpp"

// Kinetic Monte Carlo generation of photon time-tag streams from a
// three-level emitter under CW or pulsed excitation, through an HBT
// beamsplitter and imperfect detectors. Ground-truth oracle for the whole
// analysis chain: output is a pure function of (configs, seed) regardless of
// window count or thread count.
namespace photonkit {

struct DetectorConfig {
  double efficiency = 1.0;          // in [0,1]
  double dark_rate = 20.0;          // counts/s per channel
  double dead_time = 0.0;           // s, per-channel, non-paralyzable
  double timing_jitter_sigma = 0.0; // s, Gaussian

  void validate() const {
    if (!(efficiency >= 0.0 && efficiency <= 1.0))
      throw ValidationError("DetectorConfig: efficiency outside [0,1]");
    if (dark_rate < 0.0 || dead_time < 0.0 || timing_jitter_sigma < 0.0)
      throw ValidationError("DetectorConfig: negative dark/dead/jitter");
  }
};

enum class ExcitationMode { Cw, Pulsed };

struct ExcitationConfig {
  ExcitationMode mode = ExcitationMode::Cw;
  double power = 0.0;            // W (CW bookkeeping; k_exc is the knob)
  double excitation_prob = 1.0;  // per-pulse excitation probability
  double pulse_length = 300e-15; // s
  double rep_rate = 20.8e6;      // Hz

  void validate() const {
    if (mode == ExcitationMode::Pulsed) {
      if (!(pulse_length > 0.0) || !(rep_rate > 0.0) ||
          !(pulse_length * rep_rate < 1.0))
        throw ValidationError("ExcitationConfig: pulsed duty cycle must be in (0,1)");
      if (!(excitation_prob >= 0.0 && excitation_prob <= 1.0))
        throw ValidationError("ExcitationConfig: excitation probability outside [0,1]");
    }
  }
};

struct SimOptions {
  std::uint64_t max_expected_tags = std::uint64_t{1} << 26;
  // Emission is generated in n_windows independent time windows (each with a
  // derived seed and a steady-state-drawn initial emitter state), so windows
  // may run on any number of threads; the merged stream depends only on
  // (configs, seed, n_windows). Correlations across window boundaries are
  // approximated, so keep windows much longer than the slowest emitter
  // timescale.
  int n_windows = 1;
  int n_threads = 1;
};

TimeTagStream simulate_cw(const EmitterRates& rates, const DetectorConfig& det,
                          double duration_s, std::uint64_t seed,
                          const SimOptions& opts = {});

TimeTagStream simulate_pulsed(const EmitterRates& rates, const DetectorConfig& det,
                              const ExcitationConfig& exc, std::uint64_t n_pulses,
                              std::uint64_t seed, const SimOptions& opts = {});

// Detector chain on an ideal tag stream, in order: efficiency thinning,
// Gaussian jitter (continuous, rounded half-to-even to integer ps), re-sort,
// per-channel dead-time veto, dark-count injection. SYNC tags pass through
// untouched (electronic trigger line). Each imperfection draws from its own
// sub-stream of the seed, so toggling one does not perturb the others.
TimeTagStream apply_detector(const TimeTagStream& ideal, const DetectorConfig& det,
                             std::uint64_t seed);

// Expected detected signal rate per HBT channel (before dark counts).
double expected_channel_rate(const EmitterRates& rates, const DetectorConfig& det);

}  // namespace photonkit
