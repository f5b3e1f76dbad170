#include <catch2/catch_amalgamated.hpp>

#include <cmath>
#include <filesystem>
#include <fstream>

#include "disms/analysis.hpp"
#include "disms/data.hpp"
#include "test_helpers.hpp"

using namespace disms;
namespace fs = std::filesystem;

namespace {

DatasetContainer small_dataset() {
  SynthSpec spec;
  spec.variables = 2;
  spec.length = 32;
  spec.classes = 2;
  spec.per_class = 15;
  spec.seed = 21;
  return generate_synthetic(spec);
}

Model small_model(const DatasetContainer& ds, Ablation ablation = Ablation::kFull) {
  ModelConfig mc;
  mc.variables = ds.variables;
  mc.length = ds.length;
  mc.classes = ds.classes;
  mc.scales = 2;
  mc.channels = 4;
  mc.hidden = 5;
  mc.ablation = ablation;
  return Model(mc, 13);
}

}  // namespace

TEST_CASE("vec_similarity handles the canonical directions") {
  const double a[3] = {1, 0, 0};
  const double b[3] = {0, 1, 0};
  const double c[3] = {2, 0, 0};
  REQUIRE(detail::vec_similarity(a, b, 3, false) == 0.0);
  REQUIRE(std::abs(detail::vec_similarity(a, c, 3, false) - 1.0) < 1e-12);
  REQUIRE(std::abs(detail::vec_similarity(a, a, 3, false) - 1.0) < 1e-12);
  // pearson mode removes a common offset
  const double d[3] = {11, 12, 13};
  const double e[3] = {1, 2, 3};
  REQUIRE(std::abs(detail::vec_similarity(d, e, 3, true) - 1.0) < 1e-12);
}

TEST_CASE("cross-scale matrix is symmetric, unit diagonal, bounded") {
  DatasetContainer ds = small_dataset();
  Model model = small_model(ds);
  for (RepKind kind : {RepKind::kRaw, RepKind::kShared, RepKind::kSpecific}) {
    CorrelationMatrix m = cross_scale_correlation(model, ds.test, kind);
    REQUIRE(m.scales == 3);
    for (std::size_t i = 0; i < m.scales; ++i) {
      REQUIRE(std::abs(m.at(i, i) - 1.0) < 1e-9);
      for (std::size_t j = 0; j < m.scales; ++j) {
        REQUIRE(m.at(i, j) == m.at(j, i));
        REQUIRE(m.at(i, j) >= -1.0 - 1e-9);
        REQUIRE(m.at(i, j) <= 1.0 + 1e-9);
      }
    }
  }
}

TEST_CASE("swf-mean models refuse disentangled correlation requests") {
  DatasetContainer ds = small_dataset();
  Model model = small_model(ds, Ablation::kSwfMean);
  REQUIRE_THROWS_AS(cross_scale_correlation(model, ds.test, RepKind::kShared),
                    StateError);
  REQUIRE_NOTHROW(cross_scale_correlation(model, ds.test, RepKind::kRaw));
}

TEST_CASE("matrix export/parse round trip") {
  DatasetContainer ds = small_dataset();
  Model model = small_model(ds);
  CorrelationMatrix m =
      cross_scale_correlation(model, ds.test, RepKind::kShared);
  const fs::path path = fs::temp_directory_path() / "disms_matrix.txt";
  export_matrix(m, path);
  CorrelationMatrix back = parse_matrix(path);
  REQUIRE(back.scales == m.scales);
  for (std::size_t i = 0; i < m.entries.size(); ++i) {
    REQUIRE(std::abs(back.entries[i] - m.entries[i]) < 1e-15);
  }
  REQUIRE(std::abs(back.mean_off_diagonal() - m.mean_off_diagonal()) < 1e-15);
}

TEST_CASE("matrix file layout is a labeled grid") {
  CorrelationMatrix m;
  m.scales = 2;
  m.entries = {1.0, 0.25, 0.25, 1.0};
  const fs::path path = fs::temp_directory_path() / "disms_matrix_2x2.txt";
  export_matrix(m, path);
  std::ifstream is(path);
  std::string l0, l1, l2;
  std::getline(is, l0);
  std::getline(is, l1);
  std::getline(is, l2);
  REQUIRE(l0 == "scale s0 s1");
  REQUIRE(l1.substr(0, 4) == "s0 1");
  REQUIRE(l2.substr(0, 2) == "s1");
  REQUIRE(l1.find("0.25") != std::string::npos);

  std::string extra;
  const bool has_extra = static_cast<bool>(std::getline(is, extra)) && !extra.empty();
  REQUIRE_FALSE(has_extra);
}

TEST_CASE("parse_matrix rejects truncated files") {
  const fs::path path = fs::temp_directory_path() / "disms_matrix_bad.txt";
  std::ofstream(path) << "scale s0 s1\ns0 1.0 0.5\n";
  REQUIRE_THROWS_AS(parse_matrix(path), DataError);
}

TEST_CASE("mean off-diagonal helpers") {
  CorrelationMatrix m;
  m.scales = 3;
  m.entries = {1.0, 0.5, -0.5, 0.5, 1.0, 0.25, -0.5, 0.25, 1.0};
  REQUIRE(std::abs(m.mean_off_diagonal() - (0.5 - 0.5 + 0.25) * 2 / 6.0) <
          1e-15);
  REQUIRE(std::abs(m.mean_off_diagonal_abs() - (0.5 + 0.5 + 0.25) * 2 / 6.0) <
          1e-15);
}

TEST_CASE("representation dump round trip is bitwise") {
  DatasetContainer ds = small_dataset();
  Model model = small_model(ds);
  const fs::path path = fs::temp_directory_path() / "disms_dump.bin";
  representation_dump(model, ds.test, RepKind::kSpecific, path);
  RepresentationDump dump = load_representation_dump(path);
  REQUIRE(dump.kind == RepKind::kSpecific);
  REQUIRE(dump.dim == model.config().rep_width());
  REQUIRE(dump.scale.size() == 3 * ds.test.batch);  // (S+1) x B rows

  // rows carry the split's labels and the expected scale ids
  for (std::size_t s = 0; s < 3; ++s) {
    for (std::size_t b = 0; b < ds.test.batch; ++b) {
      const std::size_t r = s * ds.test.batch + b;
      REQUIRE(dump.scale[r] == s);
      REQUIRE(dump.label[r] == ds.test.labels[b]);
    }
  }

  // vectors equal a fresh forward pass, bit for bit
  ForwardResult fwd = model.forward(ds.test);
  const std::size_t d = dump.dim;
  for (std::size_t s = 0; s < 3; ++s) {
    const Tensor& src = fwd.specific.at(s);
    for (std::size_t b = 0; b < ds.test.batch; ++b) {
      for (std::size_t i = 0; i < d; ++i) {
        REQUIRE(dump.vectors[(s * ds.test.batch + b) * d + i] ==
                src.values()[b * d + i]);
      }
    }
  }
}

TEST_CASE("dump loader rejects corruption") {
  const fs::path path = fs::temp_directory_path() / "disms_dump_bad.bin";
  std::ofstream(path, std::ios::binary) << "NOTADUMP--";
  REQUIRE_THROWS_AS(load_representation_dump(path), DataError);
  REQUIRE_THROWS_AS(load_representation_dump(path.parent_path() / "absent.bin"),
                    DataError);
}

TEST_CASE("rep kind string round trip") {
  for (RepKind k : {RepKind::kRaw, RepKind::kShared, RepKind::kSpecific}) {
    REQUIRE(rep_kind_from_string(to_string(k)) == k);
  }
  REQUIRE_THROWS_AS(rep_kind_from_string("bogus"), ConfigError);
}
