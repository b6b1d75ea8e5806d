#include "photonkit/timetag.hpp"

#include <algorithm>
#include <array>
#include <cstring>
#include <fstream>

#include <nlohmann/json.hpp>

#include "photonkit/errors.hpp"

namespace photonkit {

namespace {

void put_u16(std::string& buf, std::uint16_t v) {
  buf.push_back(static_cast<char>(v & 0xff));
  buf.push_back(static_cast<char>((v >> 8) & 0xff));
}

void put_u64(std::string& buf, std::uint64_t v) {
  for (int i = 0; i < 8; ++i) buf.push_back(static_cast<char>((v >> (8 * i)) & 0xff));
}

std::uint16_t get_u16(const unsigned char* p) {
  return static_cast<std::uint16_t>(p[0] | (p[1] << 8));
}

std::uint64_t get_u64(const unsigned char* p) {
  std::uint64_t v = 0;
  for (int i = 7; i >= 0; --i) v = (v << 8) | p[i];
  return v;
}

}  // namespace

std::uint64_t TimeTagStream::count(Channel c) const {
  return static_cast<std::uint64_t>(
      std::count_if(records.begin(), records.end(),
                    [c](const TimeTag& t) { return t.channel == c; }));
}

std::vector<std::uint64_t> TimeTagStream::channel_times(Channel c) const {
  std::vector<std::uint64_t> out;
  out.reserve(records.size() / 2);
  for (const auto& t : records)
    if (t.channel == c) out.push_back(t.time_ps);
  return out;
}

double TimeTagStream::rate_hz(Channel c) const {
  if (duration_ps == 0) return 0.0;
  return static_cast<double>(count(c)) / (static_cast<double>(duration_ps) * 1e-12);
}

void TimeTagStream::validate() const {
  std::uint64_t prev = 0;
  for (const auto& t : records) {
    if (t.time_ps < prev)
      throw ValidationError("TimeTagStream: timestamps not non-decreasing");
    if (t.time_ps >= duration_ps)
      throw ValidationError("TimeTagStream: timestamp beyond stream duration");
    prev = t.time_ps;
  }
}

void write_ett1(const std::filesystem::path& path, const TimeTagStream& stream) {
  std::string buf;
  buf.reserve(16 + 9 * stream.records.size());
  buf += "ETT1";
  put_u16(buf, kEtt1Version);
  put_u16(buf, 3);  // channel space: A, B, SYNC
  put_u64(buf, stream.records.size());
  for (const auto& t : stream.records) {
    put_u64(buf, t.time_ps);
    buf.push_back(static_cast<char>(t.channel));
  }
  std::ofstream f(path, std::ios::binary | std::ios::trunc);
  if (!f) throw IoError("cannot open for writing: " + path.string());
  f.write(buf.data(), static_cast<std::streamsize>(buf.size()));
  if (!f) throw IoError("short write: " + path.string());
}

TimeTagStream read_ett1(const std::filesystem::path& path) {
  std::ifstream f(path, std::ios::binary);
  if (!f) throw IoError("cannot open: " + path.string());
  std::array<unsigned char, 16> header{};
  f.read(reinterpret_cast<char*>(header.data()), header.size());
  if (!f || std::memcmp(header.data(), "ETT1", 4) != 0)
    throw IoError("not an ETT1 file: " + path.string());
  const std::uint16_t version = get_u16(header.data() + 4);
  if (version != kEtt1Version)
    throw IoError("unsupported ETT1 version " + std::to_string(version));
  const std::uint64_t n = get_u64(header.data() + 8);

  TimeTagStream stream;
  stream.records.resize(n);
  std::vector<unsigned char> body(9 * n);
  f.read(reinterpret_cast<char*>(body.data()), static_cast<std::streamsize>(body.size()));
  if (!f) throw IoError("truncated ETT1 record section: " + path.string());
  for (std::uint64_t i = 0; i < n; ++i) {
    const unsigned char* rec = body.data() + 9 * i;
    stream.records[i].time_ps = get_u64(rec);
    const unsigned char ch = rec[8];
    if (ch > 2) throw IoError("ETT1 record with channel > 2");
    stream.records[i].channel = static_cast<Channel>(ch);
  }
  // duration is sidecar metadata; fall back to last tag + 1
  stream.duration_ps = n ? stream.records.back().time_ps + 1 : 0;

  auto sidecar = path;
  sidecar += ".json";
  if (std::filesystem::exists(sidecar)) {
    std::ifstream sf(sidecar);
    nlohmann::json j = nlohmann::json::parse(sf, nullptr, false);
    if (!j.is_discarded()) {
      stream.metadata_json = j.dump();
      if (j.contains("duration_ps")) stream.duration_ps = j["duration_ps"].get<std::uint64_t>();
      if (j.contains("seed")) stream.seed = j["seed"].get<std::uint64_t>();
    }
  }
  return stream;
}

void write_sidecar(const std::filesystem::path& ett1_path, const TimeTagStream& stream) {
  nlohmann::json j = stream.metadata_json.empty()
                         ? nlohmann::json::object()
                         : nlohmann::json::parse(stream.metadata_json);
  j["schema_version"] = 1;
  j["seed"] = stream.seed;
  j["duration_ps"] = stream.duration_ps;
  j["record_count"] = stream.records.size();
  auto sidecar = ett1_path;
  sidecar += ".json";
  std::ofstream f(sidecar, std::ios::trunc);
  if (!f) throw IoError("cannot open for writing: " + sidecar.string());
  f << j.dump(2) << "\n";
}

nlohmann::json stream_summary(const TimeTagStream& stream) {
  nlohmann::json j;
  j["record_count"] = stream.records.size();
  j["duration_ps"] = stream.duration_ps;
  j["counts"] = {{"A", stream.count(Channel::A)},
                 {"B", stream.count(Channel::B)},
                 {"SYNC", stream.count(Channel::Sync)}};
  j["rates_hz"] = {{"A", stream.rate_hz(Channel::A)},
                   {"B", stream.rate_hz(Channel::B)}};
  return j;
}

}  // namespace photonkit
