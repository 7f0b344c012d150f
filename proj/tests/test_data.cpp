#include <zlib.h>

#include <cstdint>
#include <cstring>
#include <filesystem>
#include <fstream>
#include <memory>
#include <set>
#include <string>
#include <vector>

#include "doctest.h"
#include "stlsgd/dataset.hpp"
#include "stlsgd/errors.hpp"
#include "stlsgd/metrics.hpp"
#include "stlsgd/objective.hpp"
#include "stlsgd/partition.hpp"

using namespace stlsgd;

namespace {

std::string gzip_compress(const std::string& text) {
  z_stream zs;
  std::memset(&zs, 0, sizeof zs);
  REQUIRE(deflateInit2(&zs, Z_BEST_SPEED, Z_DEFLATED, 16 + MAX_WBITS, 8,
                       Z_DEFAULT_STRATEGY) == Z_OK);
  std::string out(deflateBound(&zs, text.size()), '\0');
  zs.next_in = reinterpret_cast<Bytef*>(const_cast<char*>(text.data()));
  zs.avail_in = static_cast<uInt>(text.size());
  zs.next_out = reinterpret_cast<Bytef*>(out.data());
  zs.avail_out = static_cast<uInt>(out.size());
  REQUIRE(deflate(&zs, Z_FINISH) == Z_STREAM_END);
  out.resize(zs.total_out);
  deflateEnd(&zs);
  return out;
}

std::filesystem::path write_temp(const std::string& name, const std::string& bytes) {
  auto path = std::filesystem::temp_directory_path() / name;
  std::ofstream f(path, std::ios::binary);
  f.write(bytes.data(), static_cast<std::streamsize>(bytes.size()));
  REQUIRE(f.good());
  return path;
}

}  // namespace

TEST_CASE("libsvm rows parse with 1-based ascending indices") {
  Dataset d = parse_libsvm("+1 1:0.5 3:-1.2\n-1 2:4\n");
  REQUIRE(d.size() == 2);
  CHECK(d.num_features == 3);
  CHECK(d.labels[0] == 1.0);
  CHECK(d.labels[1] == -1.0);
  CHECK(d.rows[0].idx == std::vector<std::uint32_t>{0, 2});
  CHECK(d.rows[0].val == std::vector<double>{0.5, -1.2});
  CHECK(d.rows[1].idx == std::vector<std::uint32_t>{1});
}

TEST_CASE("a bare label line is a legal empty example") {
  Dataset d = parse_libsvm("-1\n+1 1:1\n");
  REQUIRE(d.size() == 2);
  CHECK(d.rows[0].idx.empty());
  CHECK(d.labels[0] == -1.0);
}

TEST_CASE("parse failures carry the offending line number") {
  try {
    parse_libsvm("+1 1:1\nbogus 1:1\n");
    FAIL("expected ParseError");
  } catch (const ParseError& e) {
    CHECK(e.line() == 2);
  }
  try {
    parse_libsvm("+1 2:1 2:3\n");
    FAIL("expected ParseError");
  } catch (const ParseError& e) {
    CHECK(e.line() == 1);
  }
  CHECK_THROWS_AS(parse_libsvm("+1 3:1 2:1\n"), ParseError);  // descending
  CHECK_THROWS_AS(parse_libsvm("+1 0:1\n"), ParseError);      // 1-based indices
  CHECK_THROWS_AS(parse_libsvm("+1 1\n"), ParseError);        // missing colon
  CHECK_THROWS_AS(parse_libsvm("+1 1:x\n"), ParseError);      // bad value
  CHECK_THROWS_AS(parse_libsvm(""), ParseError);              // no examples
  CHECK_THROWS_AS(parse_libsvm("\n  \n"), ParseError);
}

TEST_CASE("zero/one labels map zero to the negative class") {
  Dataset d = parse_libsvm("0 1:1\n1 1:2\n");
  CHECK(d.labels[0] == -1.0);
  CHECK(d.labels[1] == 1.0);
}

TEST_CASE("an unfamiliar two-class label set maps the smaller value to +1") {
  Dataset d = parse_libsvm("9 1:1\n4 1:2\n");
  CHECK(d.labels[0] == -1.0);  // 9 is the larger raw label
  CHECK(d.labels[1] == 1.0);
}

TEST_CASE("an explicit class pair filters every other label out") {
  ParseOptions opts;
  opts.positive_class = 3.0;
  opts.negative_class = 8.0;
  Dataset d = parse_libsvm("3 1:1\n5 1:2\n8 1:3\n3 1:4\n", opts);
  REQUIRE(d.size() == 3);
  CHECK(d.labels == std::vector<double>{1.0, -1.0, 1.0});

  ParseOptions half;
  half.positive_class = 3.0;  // partner inferred when exactly one other class exists
  Dataset d2 = parse_libsvm("3 1:1\n8 1:2\n", half);
  CHECK(d2.labels == std::vector<double>{1.0, -1.0});
  CHECK_THROWS_AS(parse_libsvm("3 1:1\n5 1:2\n8 1:3\n", half), ParseError);
}

TEST_CASE("more than two unpaired classes is an error") {
  CHECK_THROWS_AS(parse_libsvm("1 1:1\n2 1:1\n3 1:1\n"), ParseError);
}

TEST_CASE("num_features override must cover the largest index") {
  ParseOptions opts;
  opts.num_features = 10;
  Dataset d = parse_libsvm("+1 1:1\n-1 3:1\n", opts);
  CHECK(d.num_features == 10);
  opts.num_features = 2;
  CHECK_THROWS_AS(parse_libsvm("+1 3:1\n-1 1:1\n", opts), ParseError);
}

TEST_CASE("content hash tracks every stored field") {
  Dataset a = parse_libsvm("+1 1:1\n-1 2:1\n");
  Dataset b = parse_libsvm("+1 1:1\n-1 2:1\n");
  CHECK(a.content_hash() == b.content_hash());
  Dataset c = parse_libsvm("-1 1:1\n-1 2:1\n");
  CHECK(a.content_hash() != c.content_hash());
  Dataset e = parse_libsvm("+1 1:1\n-1 2:1.5\n");
  CHECK(a.content_hash() != e.content_hash());
}

TEST_CASE("gzip files are sniffed by magic bytes and inflated") {
  const std::string text = "+1 1:0.5 3:-1.2\n-1 2:4\n+1 1:-3\n";
  Dataset plain = parse_libsvm(text);

  auto gz_path = write_temp("stlsgd_test_data.gz", gzip_compress(text));
  Dataset via_gz = load_libsvm_file(gz_path.string());
  CHECK(via_gz.content_hash() == plain.content_hash());

  auto raw_path = write_temp("stlsgd_test_data.txt", text);
  Dataset via_raw = load_libsvm_file(raw_path.string());
  CHECK(via_raw.content_hash() == plain.content_hash());

  std::filesystem::remove(gz_path);
  std::filesystem::remove(raw_path);
  CHECK_THROWS(load_libsvm_file("/nonexistent/path/data.txt"));
}

TEST_CASE("synthetic corpus is deterministic, balanced, and dense") {
  Dataset a = synthetic_two_class(128, 10, 9002);
  Dataset b = synthetic_two_class(128, 10, 9002);
  CHECK(a.content_hash() == b.content_hash());
  Dataset c = synthetic_two_class(128, 10, 9003);
  CHECK(a.content_hash() != c.content_hash());
  CHECK(a.size() == 128);
  CHECK(a.num_features == 10);
  int pos = 0;
  for (double y : a.labels) pos += (y > 0);
  CHECK(pos == 64);
  for (const auto& r : a.rows) CHECK(r.idx.size() == 10);
}

TEST_CASE("partition covers every example exactly once") {
  Dataset d = synthetic_two_class(103, 4, 1);
  Shards shards = partition(d, {4, 37.0, 5});
  REQUIRE(shards.size() == 4);
  std::set<std::uint32_t> seen;
  std::size_t total = 0, smallest = d.size(), largest = 0;
  for (const auto& s : shards) {
    total += s.size();
    smallest = std::min(smallest, s.size());
    largest = std::max(largest, s.size());
    for (auto i : s) {
      CHECK(i < d.size());
      CHECK(seen.insert(i).second);  // no index appears twice
    }
  }
  CHECK(total == d.size());
  CHECK(largest - smallest <= 1);

  Shards again = partition(d, {4, 37.0, 5});
  CHECK(shards == again);
  Shards other_seed = partition(d, {4, 37.0, 6});
  CHECK(shards != other_seed);
}

TEST_CASE("fully skewed split isolates the classes") {
  Dataset d = synthetic_two_class(200, 6, 2);
  for (std::size_t clients : {2, 4}) {
    Shards shards = partition(d, {clients, 0.0, 9});
    int mixed = 0;
    for (const auto& s : shards) {
      bool has_pos = false, has_neg = false;
      for (auto i : s) ((d.labels[i] > 0) ? has_pos : has_neg) = true;
      mixed += (has_pos && has_neg);
    }
    // The label boundary can cut through at most one shard.
    CHECK(mixed <= 1);
  }
}

TEST_CASE("fully random split looks label-independent under chi-square") {
  Dataset d = synthetic_two_class(1000, 6, 3);
  Shards shards = partition(d, {4, 100.0, 17});
  double chi2 = 0.0;
  for (const auto& s : shards) {
    double pos = 0;
    for (auto i : s) pos += (d.labels[i] > 0);
    double neg = static_cast<double>(s.size()) - pos;
    double exp_half = static_cast<double>(s.size()) / 2.0;  // labels are balanced
    chi2 += (pos - exp_half) * (pos - exp_half) / exp_half;
    chi2 += (neg - exp_half) * (neg - exp_half) / exp_half;
  }
  CHECK(chi2 < 11.345);  // df = 3, p = 0.01
}

TEST_CASE("client disagreement falls as the random fraction grows") {
  Dataset raw = synthetic_two_class(512, 10, 4);
  auto data = std::make_shared<Dataset>(std::move(raw));
  Vec x0(10, 0.0);
  double mean_zeta[3] = {0.0, 0.0, 0.0};
  const double fractions[3] = {0.0, 50.0, 100.0};
  for (std::uint64_t seed = 0; seed < 10; ++seed) {
    for (int j = 0; j < 3; ++j) {
      Shards shards = partition(*data, {4, fractions[j], seed});
      auto obj = logistic_objective(data, 0.0, shards);
      mean_zeta[j] += zeta_at(*obj, x0) / 10.0;
    }
  }
  CHECK(mean_zeta[0] >= mean_zeta[1]);
  CHECK(mean_zeta[1] >= mean_zeta[2]);
  CHECK(mean_zeta[0] > 10.0 * mean_zeta[2]);  // skew should dominate, not tie
}

TEST_CASE("partition rejects impossible requests") {
  Dataset d = parse_libsvm("+1 1:1\n-1 1:2\n+1 1:3\n");
  CHECK_THROWS_AS(partition(d, {0, 100.0, 0}), std::invalid_argument);
  CHECK_THROWS_AS(partition(d, {4, 100.0, 0}), std::invalid_argument);  // N > n
  CHECK_THROWS_AS(partition(d, {2, -1.0, 0}), std::invalid_argument);
  CHECK_THROWS_AS(partition(d, {2, 101.0, 0}), std::invalid_argument);
}
