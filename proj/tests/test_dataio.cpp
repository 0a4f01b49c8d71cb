#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <filesystem>
#include <fstream>
#include <vector>

#include "proulearn/errors.hpp"
#include "proulearn/io.hpp"
#include "proulearn/matrix.hpp"
#include "proulearn/numeric.hpp"
#include "proulearn/random.hpp"
#include "test_support.hpp"

using namespace proulearn;
namespace fs = std::filesystem;

namespace {

fs::path scratch_dir() {
  const fs::path dir = fs::temp_directory_path() / "proulearn_dataio_test";
  fs::create_directories(dir);
  return dir;
}

void write_text_file(const fs::path& p, const std::string& content) {
  std::ofstream out(p);
  out << content;
}

}  // namespace

TEST_CASE("random source reproduces the pinned draw sequence") {
  // Frozen golden values; a mismatch means the generator scheme changed and
  // every recorded seed in checked-in artifacts is invalid.
  RandomSource r(42, 7);
  CHECK(r.next_u64() == 0x568c9c687ecda1c5ULL);
  CHECK(r.next_u64() == 0x1dba285274dc86a3ULL);
  CHECK(r.next_u64() == 0x925eec8d61c8ec93ULL);
  CHECK(r.next_u64() == 0x190e1f60eb1df583ULL);

  RandomSource d(42, 7);
  CHECK(d.next_double() == 0.33808305312304876);
  CHECK(d.next_double() == 0.11612178814981355);
  CHECK(d.next_double() == 0.5717609257860975);

  CHECK(derive_seed(0, 0) == 0x9d04f601b5dc885aULL);
  CHECK(derive_seed(42, 7) == 0xecbe3e23620556a0ULL);
  CHECK(derive_seed(6, 0) == 0x9aa0e970976eb03cULL);
}

TEST_CASE("random source basics") {
  RandomSource a(1, 2), b(1, 2);
  for (int i = 0; i < 100; ++i) CHECK(a.next_u64() == b.next_u64());

  RandomSource c(1, 2);
  for (int i = 0; i < 1000; ++i) {
    const double x = c.next_double();
    CHECK(x >= 0.0);
    CHECK(x < 1.0);
  }
  RandomSource d(9, 9);
  for (int i = 0; i < 1000; ++i) CHECK(d.next_below(17) < 17);
  CHECK_THROWS_AS(d.next_below(0), std::invalid_argument);

  const auto sample = d.sample_without_replacement(20, 10);
  CHECK(sample.size() == 10);
  auto sorted = sample;
  std::sort(sorted.begin(), sorted.end());
  CHECK(std::adjacent_find(sorted.begin(), sorted.end()) == sorted.end());
  CHECK(sorted.back() < 20);
  CHECK_THROWS_AS(d.sample_without_replacement(3, 4), std::invalid_argument);
}

TEST_CASE("streams of one seed do not collide over the first million draws") {
  std::vector<std::uint64_t> a(1000000), b(1000000);
  RandomSource ra(42, 0), rb(42, 1);
  for (auto& v : a) v = ra.next_u64();
  for (auto& v : b) v = rb.next_u64();
  std::sort(a.begin(), a.end());
  std::sort(b.begin(), b.end());
  std::vector<std::uint64_t> common;
  std::set_intersection(a.begin(), a.end(), b.begin(), b.end(), std::back_inserter(common));
  CHECK(common.empty());
}

TEST_CASE("softmax hand cases") {
  const std::vector<double> zeros = {0.0, 0.0, 0.0};
  const auto thirds = softmax(zeros);
  CHECK(thirds[0] == 1.0 / 3.0);
  CHECK(thirds[1] == 1.0 / 3.0);
  CHECK(thirds[2] == 1.0 / 3.0);

  const std::vector<double> extreme = {1000.0, 0.0};
  const auto stable = softmax(extreme);
  CHECK(std::isfinite(stable[0]));
  CHECK(std::isfinite(stable[1]));
  CHECK(stable[0] == doctest::Approx(1.0));
  CHECK(stable[1] == doctest::Approx(0.0).epsilon(1e-12));

  const std::vector<double> ln2 = {std::log(2.0), 0.0};
  const auto p = softmax(ln2);
  CHECK(p[0] == doctest::Approx(2.0 / 3.0).epsilon(1e-14));
  CHECK(p[1] == doctest::Approx(1.0 / 3.0).epsilon(1e-14));
}

TEST_CASE("softmax is invariant to a common logit shift") {
  // Exactly representable values keep the shifted subtraction bitwise.
  const std::vector<double> v = {-1.5, 0.25, 1.0};
  std::vector<double> shifted = v;
  for (double& x : shifted) x += 2.0;
  const auto a = softmax(v), b = softmax(shifted);
  for (std::size_t i = 0; i < v.size(); ++i) CHECK(a[i] == b[i]);
}

TEST_CASE("softmax rows sum to one") {
  RandomSource rng(5, 0);
  FeatureMatrix logits = testutil::random_matrix(17, 4, rng, -30.0, 30.0);
  const ProbMatrix p = softmax_rows(logits);
  p.validate();
  CHECK(p.rows == 17);
  CHECK(p.cols == 4);
}

TEST_CASE("min max normalize hand cases") {
  const std::vector<double> a = {2.0, 4.0, 6.0};
  const auto na = min_max_normalize(a);
  CHECK(na[0] == 0.0);
  CHECK(na[1] == 0.5);
  CHECK(na[2] == 1.0);

  const std::vector<double> b = {7.0, 7.0, 7.0};
  for (const double v : min_max_normalize(b)) CHECK(v == 0.5);

  const std::vector<double> c = {-1.0, 0.0, 3.0};
  const auto nc = min_max_normalize(c);
  CHECK(nc[0] == 0.0);
  CHECK(nc[1] == 0.25);
  CHECK(nc[2] == 1.0);
}

TEST_CASE("min max normalize preserves argmax and argmin") {
  RandomSource rng(11, 0);
  for (int rep = 0; rep < 200; ++rep) {
    std::vector<double> v(3 + rep % 20);
    for (double& x : v) x = rng.next_uniform(-50.0, 50.0);
    const auto n = min_max_normalize(v);
    const auto src_max = std::max_element(v.begin(), v.end()) - v.begin();
    const auto dst_max = std::max_element(n.begin(), n.end()) - n.begin();
    const auto src_min = std::min_element(v.begin(), v.end()) - v.begin();
    const auto dst_min = std::min_element(n.begin(), n.end()) - n.begin();
    CHECK(src_max == dst_max);
    CHECK(src_min == dst_min);
    for (const double x : n) {
      CHECK(x >= 0.0);
      CHECK(x <= 1.0);
    }
  }
}

TEST_CASE("entropy hand cases") {
  const std::vector<double> uniform4 = {0.25, 0.25, 0.25, 0.25};
  CHECK(entropy(uniform4) == doctest::Approx(std::log(4.0)).epsilon(1e-6));
  const std::vector<double> onehot = {1.0, 0.0};
  CHECK(entropy(onehot) == doctest::Approx(0.0).epsilon(1e-7));
}

TEST_CASE("csv parse of a 2x3 file") {
  const fs::path p = scratch_dir() / "parse.csv";
  write_text_file(p, "1,2,3\n4.5,5,6\n");
  const FeatureMatrix m = load_features(p, FileFormat::csv);
  CHECK(m.rows == 2);
  CHECK(m.cols == 3);
  CHECK(m.at(0, 0) == 1.0);
  CHECK(m.at(0, 2) == 3.0);
  CHECK(m.at(1, 0) == 4.5);
  CHECK(m.at(1, 2) == 6.0);

  const fs::path ph = scratch_dir() / "parse_header.csv";
  write_text_file(ph, "f0,f1,f2\n1,2,3\n4.5,5,6\n");
  const FeatureMatrix mh = load_features(ph, FileFormat::csv, true);
  CHECK(mh.rows == 2);
  CHECK(mh.values == m.values);
}

TEST_CASE("feature round trips reproduce the matrix") {
  RandomSource rng(21, 0);
  const fs::path bin = scratch_dir() / "rt.pulf";
  const fs::path csv = scratch_dir() / "rt.csv";
  for (int rep = 0; rep < 20; ++rep) {
    const std::size_t rows = 1 + rng.next_below(12);
    const std::size_t cols = 2 + rng.next_below(6);
    const FeatureMatrix m32 = testutil::random_matrix_f32(rows, cols, rng);
    save_features(m32, bin, FileFormat::binary);
    const FeatureMatrix back_bin = load_features(bin, FileFormat::binary);
    CHECK(back_bin.rows == rows);
    CHECK(back_bin.cols == cols);
    CHECK(back_bin.values == m32.values);

    const FeatureMatrix m = testutil::random_matrix(rows, cols, rng, -100.0, 100.0);
    save_features(m, csv, FileFormat::csv, rep % 2 == 0);
    const FeatureMatrix back_csv = load_features(csv, FileFormat::csv, rep % 2 == 0);
    CHECK(back_csv.values == m.values);
  }
}

TEST_CASE("binary feature file size is header plus f32 payload") {
  const fs::path p = scratch_dir() / "tiny.pulf";
  FeatureMatrix m(1, 2);
  m.at(0, 0) = 1.0;
  m.at(0, 1) = 2.0;
  save_features(m, p, FileFormat::binary);
  CHECK(fs::file_size(p) == 24 + 1 * 2 * 4);
}

TEST_CASE("saving an empty matrix is an error") {
  const fs::path p = scratch_dir() / "never.pulf";
  CHECK_THROWS_AS(save_features(FeatureMatrix(), p, FileFormat::binary),
                  std::invalid_argument);
  CHECK_THROWS_AS(save_features(FeatureMatrix(), p, FileFormat::csv),
                  std::invalid_argument);
}

TEST_CASE("csv with a non-finite value names the offending cell") {
  const fs::path p = scratch_dir() / "bad.csv";
  write_text_file(p, "inf,2\n3,4\n");
  try {
    load_features(p, FileFormat::csv);
    FAIL("expected format_error");
  } catch (const format_error& e) {
    CHECK(e.fault() == format_fault::non_finite_value);
    CHECK(e.row() == 0);
    CHECK(e.col() == 0);
  }
}

TEST_CASE("csv with a malformed token is a format error") {
  const fs::path p = scratch_dir() / "junk.csv";
  write_text_file(p, "1,2\n3,zebra\n");
  CHECK_THROWS_AS(load_features(p, FileFormat::csv), format_error);
}

TEST_CASE("csv with ragged rows is a format error") {
  const fs::path p = scratch_dir() / "ragged.csv";
  write_text_file(p, "1,2,3\n4,5\n");
  try {
    load_features(p, FileFormat::csv);
    FAIL("expected format_error");
  } catch (const format_error& e) {
    CHECK(e.fault() == format_fault::dimension_mismatch);
  }
}

TEST_CASE("missing file is an io error") {
  CHECK_THROWS_AS(load_features(scratch_dir() / "nope.pulf", FileFormat::binary), io_error);
  CHECK_THROWS_AS(load_labels(scratch_dir() / "nope.pull"), io_error);
}

TEST_CASE("binary file with wrong magic is a format error") {
  const fs::path p = scratch_dir() / "magic.pulf";
  write_text_file(p, "QQQQ not a feature file at all, padded to be long enough");
  try {
    load_features(p, FileFormat::binary);
    FAIL("expected format_error");
  } catch (const format_error& e) {
    CHECK(e.fault() == format_fault::malformed_header);
  }
}

TEST_CASE("truncated binary feature file is a format error") {
  const fs::path full = scratch_dir() / "full.pulf";
  RandomSource rng(33, 0);
  save_features(testutil::random_matrix_f32(4, 3, rng), full, FileFormat::binary);
  std::ifstream in(full, std::ios::binary);
  std::vector<char> bytes((std::istreambuf_iterator<char>(in)),
                          std::istreambuf_iterator<char>());
  const fs::path cut = scratch_dir() / "cut.pulf";
  std::ofstream out(cut, std::ios::binary);
  out.write(bytes.data(), static_cast<std::streamsize>(bytes.size() - 5));
  out.close();
  CHECK_THROWS_AS(load_features(cut, FileFormat::binary), format_error);
}

TEST_CASE("label round trip preserves labels and class count") {
  LabelVector v;
  v.num_classes = 7;
  v.labels = {0, 6, 3, 3, 1};
  const fs::path p = scratch_dir() / "rt.pull";
  save_labels(v, p);
  const LabelVector back = load_labels(p);
  CHECK(back.num_classes == 7);
  CHECK(back.labels == v.labels);
  CHECK(fs::file_size(p) == 20 + 5 * 4);
}

TEST_CASE("label file with out of range entry is a format error") {
  LabelVector v;
  v.num_classes = 3;
  v.labels = {0, 1, 2};
  const fs::path p = scratch_dir() / "oob.pull";
  save_labels(v, p);
  // Corrupt the last label to 9 in place.
  std::fstream f(p, std::ios::in | std::ios::out | std::ios::binary);
  f.seekp(20 + 2 * 4);
  const std::uint32_t bad = 9;
  f.write(reinterpret_cast<const char*>(&bad), 4);
  f.close();
  CHECK_THROWS_AS(load_labels(p), format_error);
}

TEST_CASE("matrix validate rejects bad shapes and values") {
  FeatureMatrix ok(2, 3, 1.0);
  CHECK_NOTHROW(ok.validate());
  FeatureMatrix skinny(2, 1, 1.0);
  CHECK_THROWS_AS(skinny.validate(), std::invalid_argument);
  FeatureMatrix nan_holder(2, 2, 0.0);
  nan_holder.at(1, 1) = std::nan("");
  CHECK_THROWS_AS(nan_holder.validate(), std::invalid_argument);

  LabelVector lv;
  lv.num_classes = 2;
  lv.labels = {0, 2};
  CHECK_THROWS_AS(lv.validate(), std::invalid_argument);

  ProbMatrix pm(1, 2);
  pm.at(0, 0) = 0.7;
  pm.at(0, 1) = 0.7;
  CHECK_THROWS_AS(pm.validate(), std::invalid_argument);
}
