#pragma once

#include <cstdint>
#include <filesystem>
#include <string>
#include <vector>

#include <nlohmann/json_fwd.hpp>

namespace photonkit {

enum class Channel : std::uint8_t { A = 0, B = 1, Sync = 2 };

struct TimeTag {
  std::uint64_t time_ps = 0;
  Channel channel = Channel::A;

  friend bool operator==(const TimeTag&, const TimeTag&) = default;
};

inline bool time_order(const TimeTag& a, const TimeTag& b) {
  if (a.time_ps != b.time_ps) return a.time_ps < b.time_ps;
  return static_cast<std::uint8_t>(a.channel) < static_cast<std::uint8_t>(b.channel);
}

// Ordered photon/sync detection events; the raw measurement currency.
struct TimeTagStream {
  std::vector<TimeTag> records;  // non-decreasing time_ps, all < duration_ps
  std::uint64_t duration_ps = 0;
  std::uint64_t seed = 0;
  std::string metadata_json;  // config sidecar payload, "{}" when absent

  std::uint64_t count(Channel c) const;
  std::vector<std::uint64_t> channel_times(Channel c) const;
  double rate_hz(Channel c) const;  // counts / duration

  void validate() const;  // ordering + duration invariants
};

// "ETT1" binary layout (little-endian):
//   magic "ETT1" | u16 version | u16 channel count | u64 record count
//   then per record: u64 timestamp [ps] | u8 channel (0=A, 1=B, 2=SYNC)
inline constexpr std::uint16_t kEtt1Version = 1;

void write_ett1(const std::filesystem::path& path, const TimeTagStream& stream);
TimeTagStream read_ett1(const std::filesystem::path& path);

// JSON sidecar (<path>.json) carrying seed, duration and the full configs.
void write_sidecar(const std::filesystem::path& ett1_path, const TimeTagStream& stream);

nlohmann::json stream_summary(const TimeTagStream& stream);

}  // namespace photonkit
