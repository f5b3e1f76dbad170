#include <catch2/catch_amalgamated.hpp>

#include <filesystem>
#include <fstream>

#include "disms/checkpoint.hpp"
#include "disms/rng.hpp"
#include "test_helpers.hpp"

using namespace disms;
namespace fs = std::filesystem;

namespace {

ParamStore make_store(Tape& tape, std::uint64_t seed) {
  Rng rng(seed);
  ParamStore store;
  store.add("encoder.scale0.var3.conv.kernels",
            tape.leaf({4, 3}, disms::test::random_values(rng, 12)));
  store.add("encoder.beta", tape.leaf({5}, disms::test::random_values(rng, 5)));
  store.add("head.fc1.bias", tape.leaf({2}, {1e-300, -0.0}));
  return store;
}

std::string slurp(const fs::path& p) {
  std::ifstream is(p, std::ios::binary);
  return std::string(std::istreambuf_iterator<char>(is), {});
}

}  // namespace

TEST_CASE("checkpoint round trip is bit exact") {
  const fs::path dir = fs::temp_directory_path() / "disms_ckpt_test";
  fs::create_directories(dir);
  Tape tape;
  ParamStore store = make_store(tape, 5);
  save_checkpoint(store, dir / "a.ckpt");

  Tape tape2;
  ParamStore other = make_store(tape2, 99);  // different values, same layout
  load_checkpoint(other, dir / "a.ckpt");
  for (auto& [name, t] : store) {
    REQUIRE(other.get(name).values() == t.values());
  }
  save_checkpoint(other, dir / "b.ckpt");
  REQUIRE(slurp(dir / "a.ckpt") == slurp(dir / "b.ckpt"));
}

TEST_CASE("checkpoint header starts with the magic string") {
  const fs::path dir = fs::temp_directory_path() / "disms_ckpt_test";
  fs::create_directories(dir);
  Tape tape;
  ParamStore store = make_store(tape, 5);
  save_checkpoint(store, dir / "m.ckpt");
  REQUIRE(slurp(dir / "m.ckpt").substr(0, 10) == "DMTS-CKPT\n");
}

TEST_CASE("checkpoint load rejects corruption") {
  const fs::path dir = fs::temp_directory_path() / "disms_ckpt_test";
  fs::create_directories(dir);
  Tape tape;
  ParamStore store = make_store(tape, 5);
  save_checkpoint(store, dir / "c.ckpt");
  const std::string bytes = slurp(dir / "c.ckpt");

  SECTION("missing file") {
    REQUIRE_THROWS_AS(load_checkpoint(store, dir / "nope.ckpt"), StateError);
  }
  SECTION("bad magic") {
    std::ofstream(dir / "bad.ckpt", std::ios::binary) << "XXXX" << bytes;
    REQUIRE_THROWS_AS(load_checkpoint(store, dir / "bad.ckpt"), DataError);
  }
  SECTION("bad version") {
    std::string mutated = bytes;
    mutated[10] = 9;
    std::ofstream(dir / "ver.ckpt", std::ios::binary) << mutated;
    REQUIRE_THROWS_AS(load_checkpoint(store, dir / "ver.ckpt"), DataError);
  }
  SECTION("truncated payload") {
    std::ofstream(dir / "trunc.ckpt", std::ios::binary)
        << bytes.substr(0, bytes.size() - 9);
    REQUIRE_THROWS_AS(load_checkpoint(store, dir / "trunc.ckpt"), DataError);
  }
  SECTION("layout mismatch") {
    Tape tape2;
    ParamStore small;
    small.add("only", tape2.leaf({1}, {0.0}));
    REQUIRE_THROWS_AS(load_checkpoint(small, dir / "c.ckpt"), DataError);
  }
}
