#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include "doctest.h"

#include <cstdio>
#include <cstring>
#include <filesystem>
#include <fstream>
#include <iterator>

#include "json.hpp"
#include "mtb/checkpoint.hpp"
#include "mtb/error.hpp"

using namespace mtb;
namespace fs = std::filesystem;

namespace {

ParamStore sample_store(std::uint64_t seed) {
  ParamStore s;
  Rng r(seed);
  s.normal("encoder.w", "encoder", {3, 4}, 1.0, r);
  s.normal("encoder.b", "encoder", {4}, 1.0, r);
  s.normal("head.w", "sst", {4, 2}, 1.0, r);
  return s;
}

std::vector<char> slurp(const fs::path& p) {
  std::ifstream f(p, std::ios::binary);
  return {std::istreambuf_iterator<char>(f), {}};
}

void dump(const fs::path& p, const std::vector<char>& b) {
  std::ofstream(p, std::ios::binary).write(b.data(), static_cast<std::streamsize>(b.size()));
}

// Reference 64-bit FNV-1a.
std::string fnv_hex(const std::vector<char>& bytes) {
  std::uint64_t h = 0xcbf29ce484222325ULL;
  for (char c : bytes) {
    h ^= static_cast<unsigned char>(c);
    h *= 0x100000001b3ULL;
  }
  char buf[17];
  std::snprintf(buf, sizeof buf, "%016llx", static_cast<unsigned long long>(h));
  return buf;
}

void rewrite_checksum(const fs::path& dir) {
  nlohmann::json m;
  std::ifstream(dir / "manifest.json") >> m;
  m["fnv1a64"] = fnv_hex(slurp(dir / "model.bin"));
  std::ofstream(dir / "manifest.json") << m.dump(2);
}

fs::path fresh_dir(const std::string& name) {
  auto d = fs::temp_directory_path() / name;
  fs::remove_all(d);
  return d;
}

}  // namespace

TEST_CASE("checkpoint round trip is exact") {
  auto dir = fresh_dir("mtb_ckpt_roundtrip");
  auto src = sample_store(1);
  save_checkpoint(dir, src, {{"kind", "test"}, {"epochs", 3}});
  auto ck = load_checkpoint(dir);
  CHECK(ck.version == kCheckpointVersion);
  REQUIRE(ck.tensors.size() == 3);
  CHECK(ck.tensors[0].name == "encoder.w");
  CHECK(ck.tensors[2].group == "sst");
  CHECK(ck.tensors[0].shape == Shape{3, 4});
  CHECK(ck.meta["epochs"] == 3);

  auto dst = sample_store(2);
  CHECK(restore(dst, ck) == 3);
  for (std::size_t i = 0; i < 3; ++i) {
    auto a = src.entries()[i].tensor.values(), b = dst.entries()[i].tensor.values();
    CHECK(std::equal(a.begin(), a.end(), b.begin(), b.end()));
  }

  nlohmann::json m;
  std::ifstream(dir / "manifest.json") >> m;
  CHECK(m["fnv1a64"] == fnv_hex(slurp(dir / "model.bin")));
  CHECK(m["bytes"] == fs::file_size(dir / "model.bin"));
  // Offsets point at the raw float64 payload.
  auto bytes = slurp(dir / "model.bin");
  const std::size_t off = m["tensors"][1]["offset"];
  double first;
  std::memcpy(&first, bytes.data() + off, sizeof first);
  CHECK(first == src.get("encoder.b").values()[0]);
}

TEST_CASE("saving the same store twice gives identical bytes") {
  auto a = fresh_dir("mtb_ckpt_a"), b = fresh_dir("mtb_ckpt_b");
  save_checkpoint(a, sample_store(4));
  save_checkpoint(b, sample_store(4));
  CHECK(slurp(a / "model.bin") == slurp(b / "model.bin"));
}

TEST_CASE("corruption is detected") {
  auto dir = fresh_dir("mtb_ckpt_corrupt");
  save_checkpoint(dir, sample_store(1));
  auto bytes = slurp(dir / "model.bin");

  SUBCASE("flipped payload byte") {
    auto bad = bytes;
    bad[bad.size() - 3] ^= 0x10;
    dump(dir / "model.bin", bad);
    CHECK_THROWS_WITH_AS(load_checkpoint(dir), doctest::Contains("checksum"), DataError);
  }
  SUBCASE("unknown version") {
    auto bad = bytes;
    bad[8] = 2;  // version follows the 8-byte magic
    dump(dir / "model.bin", bad);
    rewrite_checksum(dir);
    CHECK_THROWS_WITH_AS(load_checkpoint(dir), doctest::Contains("version"), DataError);
  }
  SUBCASE("wrong magic") {
    auto bad = bytes;
    bad[0] = 'X';
    dump(dir / "model.bin", bad);
    rewrite_checksum(dir);
    CHECK_THROWS_AS(load_checkpoint(dir), DataError);
  }
  SUBCASE("truncated file") {
    bytes.resize(bytes.size() - 8);
    dump(dir / "model.bin", bytes);
    rewrite_checksum(dir);
    CHECK_THROWS_WITH_AS(load_checkpoint(dir), doctest::Contains("truncated"), DataError);
  }
  SUBCASE("trailing bytes") {
    bytes.push_back(0);
    dump(dir / "model.bin", bytes);
    rewrite_checksum(dir);
    CHECK_THROWS_WITH_AS(load_checkpoint(dir), doctest::Contains("trailing"), DataError);
  }
  SUBCASE("missing manifest") {
    fs::remove(dir / "manifest.json");
    CHECK_THROWS_AS(load_checkpoint(dir), DataError);
  }
}

TEST_CASE("restore checks names and shapes") {
  auto dir = fresh_dir("mtb_ckpt_restore");
  save_checkpoint(dir, sample_store(1));
  auto ck = load_checkpoint(dir);

  ParamStore wrong;
  Rng r(0);
  wrong.normal("encoder.w", "encoder", {4, 3}, 1.0, r);
  CHECK_THROWS_AS(restore(wrong, ck), DimensionError);

  ParamStore extra = sample_store(3);
  extra.zeros("encoder.extra", "encoder", {2});
  CHECK_THROWS_AS(restore(extra, ck), DataError);
  CHECK(restore(extra, ck, "", false) == 3);

  // Prefix restore copies only the encoder and leaves the head untouched.
  ParamStore partial = sample_store(5);
  const auto head_before = std::vector<double>(partial.get("head.w").values().begin(), partial.get("head.w").values().end());
  CHECK(restore(partial, ck, "encoder.") == 2);
  auto hw = partial.get("head.w").values();
  CHECK(std::equal(hw.begin(), hw.end(), head_before.begin()));
  auto ew = partial.get("encoder.w").values();
  CHECK(ew[0] == ck.tensors[0].values[0]);
}
