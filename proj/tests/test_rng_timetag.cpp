#include <doctest.h>

#include <cmath>
#include <cstdio>
#include <filesystem>
#include <fstream>

#include "photonkit/rng.hpp"
#include "photonkit/timetag.hpp"
#include "photonkit/errors.hpp"

using namespace photonkit;

namespace {

std::filesystem::path temp_file(const char* name) {
  return std::filesystem::temp_directory_path() / name;
}

}  // namespace

TEST_CASE("SplitRng determinism and stream independence") {
  SplitRng a(12345), b(12345);
  for (int i = 0; i < 1000; ++i) CHECK(a.next_u64() == b.next_u64());

  // consuming one stream leaves a sibling stream untouched
  SplitRng parent(99);
  SplitRng s0 = parent.split(0);
  SplitRng s1 = parent.split(1);
  std::vector<std::uint64_t> first;
  for (int i = 0; i < 16; ++i) first.push_back(s1.next_u64());
  for (int i = 0; i < 1000; ++i) s0.next_u64();
  SplitRng s1_again = parent.split(1);
  for (int i = 0; i < 16; ++i) CHECK(s1_again.next_u64() == first[static_cast<std::size_t>(i)]);

  // different streams differ
  CHECK(parent.split(2).next_u64() != parent.split(3).next_u64());
}

TEST_CASE("SplitRng variates are sane") {
  SplitRng rng(2024);
  double sum = 0.0, sum2 = 0.0;
  const int n = 200000;
  for (int i = 0; i < n; ++i) {
    const double u = rng.uniform();
    CHECK(u >= 0.0);
    CHECK(u < 1.0);
    sum += u;
    sum2 += u * u;
  }
  CHECK(sum / n == doctest::Approx(0.5).epsilon(0.01));
  CHECK(sum2 / n == doctest::Approx(1.0 / 3.0).epsilon(0.01));

  double esum = 0.0;
  for (int i = 0; i < n; ++i) esum += rng.exponential(2.0);
  CHECK(esum / n == doctest::Approx(0.5).epsilon(0.02));

  double nsum = 0.0, nsum2 = 0.0;
  for (int i = 0; i < n; ++i) {
    const double x = rng.normal(1.0, 3.0);
    nsum += x;
    nsum2 += x * x;
  }
  const double mean = nsum / n;
  CHECK(mean == doctest::Approx(1.0).epsilon(0.05));
  CHECK(nsum2 / n - mean * mean == doctest::Approx(9.0).epsilon(0.05));

  double psum = 0.0;
  for (int i = 0; i < 20000; ++i) psum += static_cast<double>(rng.poisson(7.3));
  CHECK(psum / 20000 == doctest::Approx(7.3).epsilon(0.03));
}

TEST_CASE("ETT1 round trip is lossless and bit-exact") {
  TimeTagStream stream;
  stream.duration_ps = 100000;
  stream.seed = 77;
  SplitRng rng(5);
  std::uint64_t t = 0;
  for (int i = 0; i < 5000; ++i) {
    t += 1 + static_cast<std::uint64_t>(rng.uniform() * 17.0);
    const auto ch = static_cast<Channel>(rng.next_u64() % 3);
    stream.records.push_back({t, ch});
  }
  stream.duration_ps = t + 1;
  stream.validate();

  const auto path = temp_file("photonkit_roundtrip.ett1");
  write_ett1(path, stream);
  write_sidecar(path, stream);
  const TimeTagStream back = read_ett1(path);
  REQUIRE(back.records.size() == stream.records.size());
  CHECK(back.records == stream.records);
  CHECK(back.duration_ps == stream.duration_ps);
  CHECK(back.seed == stream.seed);

  // byte-level check of the documented header layout
  std::ifstream f(path, std::ios::binary);
  std::vector<unsigned char> header(16);
  f.read(reinterpret_cast<char*>(header.data()), 16);
  CHECK(header[0] == 'E');
  CHECK(header[1] == 'T');
  CHECK(header[2] == 'T');
  CHECK(header[3] == '1');
  CHECK(header[4] == 1);  // version u16 LE
  CHECK(header[5] == 0);
  CHECK(header[6] == 3);  // channel count
  CHECK(header[7] == 0);
  std::uint64_t n = 0;
  for (int i = 7; i >= 0; --i) n = (n << 8) | header[8 + i];
  CHECK(n == stream.records.size());

  // first record: u64 LE timestamp + channel byte
  std::vector<unsigned char> rec(9);
  f.read(reinterpret_cast<char*>(rec.data()), 9);
  std::uint64_t t0 = 0;
  for (int i = 7; i >= 0; --i) t0 = (t0 << 8) | rec[static_cast<std::size_t>(i)];
  CHECK(t0 == stream.records[0].time_ps);
  CHECK(rec[8] == static_cast<unsigned char>(stream.records[0].channel));

  std::filesystem::remove(path);
  std::filesystem::remove(path.string() + ".json");
}

TEST_CASE("ETT1 rejects malformed input") {
  const auto path = temp_file("photonkit_bad.ett1");
  {
    std::ofstream f(path, std::ios::binary);
    f << "NOPE";
  }
  CHECK_THROWS_AS(read_ett1(path), IoError);
  CHECK_THROWS_AS(read_ett1(temp_file("photonkit_missing.ett1")), IoError);
  std::filesystem::remove(path);
}

TEST_CASE("stream validation catches broken invariants") {
  TimeTagStream stream;
  stream.duration_ps = 10;
  stream.records = {{5, Channel::A}, {3, Channel::B}};
  CHECK_THROWS_AS(stream.validate(), ValidationError);
  stream.records = {{3, Channel::A}, {10, Channel::B}};
  CHECK_THROWS_AS(stream.validate(), ValidationError);
  stream.records = {{3, Channel::A}, {9, Channel::B}};
  CHECK_NOTHROW(stream.validate());
}
