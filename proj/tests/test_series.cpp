#include <algorithm>
#include <set>

#include "doctest.h"
#include "helpers.hpp"

using namespace ltsm;

TEST_CASE("csv: timestamp column is metadata, numeric columns are variates") {
  const auto ts = parse_csv("date,a,b\n2020-01-01 00:00,1,2\n2020-01-01 01:00,3,4\n2020-01-01 02:00,5,6\n", {});
  CHECK(ts.length() == 3);
  CHECK(ts.channels() == 2);
  CHECK(ts.values()(2, 1) == 6.0);
  CHECK(ts.timestamps().size() == 3);
  CHECK(ts.variate_names() == std::vector<std::string>{"a", "b"});
}

TEST_CASE("csv: numeric-only file has no timestamp column") {
  const auto ts = parse_csv("x,y\n1,2\n3,4\n", {});
  CHECK(ts.channels() == 2);
  CHECK(ts.timestamps().empty());
}

TEST_CASE("csv: header-only file is an empty dataset") {
  CHECK(th::error_of([] { parse_csv("date,a,b\n", {}); }) == Errc::EmptyDataset);
}

TEST_CASE("csv: non-numeric cell reports row and column") {
  const std::string text =
      "date,a,b\nt1,1,1\nt2,1,1\nt3,1,1\nt4,1,1\nt5,abc,1\n";
  try {
    parse_csv(text, {});
    FAIL("expected ParseError");
  } catch (const ParseError& e) {
    CHECK(e.row() == 5);
    CHECK(e.column() == 2);
  }
}

TEST_CASE("csv: ragged row reports its row") {
  try {
    parse_csv("a,b\n1,2\n3\n", {});
    FAIL("expected ParseError");
  } catch (const ParseError& e) {
    CHECK(e.row() == 2);
  }
}

TEST_CASE("csv: NaN is rejected rather than imputed") {
  CHECK(th::error_of([] { parse_csv("a\n1\nnan\n", {}); }).has_value());
}

TEST_CASE("csv: write then load reproduces values bit-exactly") {
  const auto ts = th::series_of(th::random_matrix(17, 3, 5));
  const auto path = std::filesystem::temp_directory_path() / "ltsm_roundtrip.csv";
  write_csv(ts, path);
  const auto back = load_csv(path);
  CHECK(back.values() == ts.values());
  std::filesystem::remove(path);
}

TEST_CASE("split: 100 rows at 0.7/0.1/0.2") {
  const auto s = chronological_split(th::ramp(100), {});
  CHECK(s.train.length() == 70);
  CHECK(s.val.length() == 10);
  CHECK(s.test.length() == 20);
}

TEST_CASE("split: 10 rows gives 7/1/2 by floor arithmetic") {
  // enumerate floor(0.7*10), floor(0.1*10), remainder
  const auto s = chronological_split(th::ramp(10), {});
  CHECK(s.train.length() == 7);
  CHECK(s.val.length() == 1);
  CHECK(s.test.length() == 2);
}

TEST_CASE("split: too short series") {
  CHECK(th::error_of([] { chronological_split(th::ramp(2), {}); }) == Errc::SplitTooSmall);
}

TEST_CASE("split: concatenation reproduces the input bit-exactly") {
  for (std::size_t T : {10, 11, 57, 1000}) {
    const auto ts = th::series_of(th::random_matrix(T, 2, T));
    const auto s = chronological_split(ts, {});
    Matrix cat(T, 2);
    cat << s.train.values(), s.val.values(), s.test.values();
    CHECK(cat == ts.values());
  }
}

TEST_CASE("downsample: index selection, identity and length law") {
  const auto ts = th::ramp(10);
  const auto half = downsample(ts, 2);
  CHECK(th::column(half.values(), 0) == std::vector<double>{1, 3, 5, 7, 9});
  CHECK(downsample(ts, 1).values() == ts.values());
  CHECK(downsample(th::ramp(1000), 20).length() == 50);
  CHECK(th::error_of([&] { downsample(ts, 0); }) == Errc::InvalidRate);
  const std::size_t T = 97;
  for (std::size_t r = 1; r <= T; ++r) CHECK(downsample(th::ramp(T), r).length() == (T + r - 1) / r);
}

TEST_CASE("downsample: composition matches the product rate") {
  const auto ts = th::ramp(240);
  for (std::size_t a : {2, 3, 4})
    for (std::size_t b : {2, 5}) {
      const auto twice = downsample(downsample(ts, a), b);
      const auto once = downsample(ts, a * b);
      CHECK(twice.values() == once.values());
    }
}

TEST_CASE("downsample: rates 40, 20, 10 keep nested index sets") {
  const auto i40 = downsample_indices(2000, 40), i20 = downsample_indices(2000, 20), i10 = downsample_indices(2000, 10);
  CHECK(std::includes(i20.begin(), i20.end(), i40.begin(), i40.end()));
  CHECK(std::includes(i10.begin(), i10.end(), i20.begin(), i20.end()));
  CHECK(i10.size() > i20.size());
  CHECK(i20.size() > i40.size());
}

TEST_CASE("windows: counts and guards") {
  const auto w = make_windows(th::ramp(10), 4, 2, 1);
  REQUIRE(w.size() == 5);
  for (std::size_t i = 0; i < 5; ++i) CHECK(w[i].source_offset == i);
  CHECK(make_windows(th::ramp(6), 4, 2, 1).size() == 1);
  CHECK(th::error_of([] { make_windows(th::ramp(5), 4, 2, 1); }) == Errc::SeriesTooShort);
  for (std::size_t stride : {1, 2, 3, 7})
    CHECK(make_windows(th::ramp(50), 8, 5, stride).size() == (50 - 8 - 5) / stride + 1);
}

TEST_CASE("windows: lookback and target equal the source slice") {
  const auto ts = th::series_of(th::random_matrix(40, 3, 9));
  for (const auto& w : make_windows(ts, 7, 5, 3)) {
    CHECK(w.lookback == ts.values().middleRows(static_cast<Eigen::Index>(w.source_offset), 7));
    CHECK(w.target == ts.values().middleRows(static_cast<Eigen::Index>(w.source_offset + 7), 5));
  }
}

namespace {
std::vector<DatasetWindows> two_datasets(std::size_t a, std::size_t b) {
  return {{"A", make_windows(th::ramp(a + 5), 4, 2, 1)}, {"B", make_windows(th::ramp(b + 5, 2), 4, 2, 1)}};
}
std::multiset<std::pair<std::string, std::size_t>> identities(const Corpus& c) {
  std::multiset<std::pair<std::string, std::size_t>> out;
  for (const auto& e : c.entries()) out.insert({e.dataset_id, e.window.source_offset});
  return out;
}
}  // namespace

TEST_CASE("corpus: counts are preserved") {
  const auto c = mix_corpus(two_datasets(3, 2), 1);
  CHECK(c.size() == 5);
  CHECK(c.counts() == std::map<std::string, std::size_t>{{"A", 3}, {"B", 2}});
}

TEST_CASE("corpus: same seed gives the same order, other seeds permute") {
  const auto data = two_datasets(60, 40);
  const auto a = mix_corpus(data, 11), b = mix_corpus(data, 11), c = mix_corpus(data, 12);
  bool same_order = true, differs = false;
  for (std::size_t i = 0; i < a.size(); ++i) {
    same_order &= a.entries()[i].dataset_id == b.entries()[i].dataset_id &&
                  a.entries()[i].window.source_offset == b.entries()[i].window.source_offset;
    differs |= a.entries()[i].dataset_id != c.entries()[i].dataset_id ||
               a.entries()[i].window.source_offset != c.entries()[i].window.source_offset;
  }
  CHECK(same_order);
  CHECK(differs);
  CHECK(identities(a) == identities(c));
}

TEST_CASE("corpus: empty input") {
  CHECK(th::error_of([] { mix_corpus({}, 0); }) == Errc::EmptyCorpus);
  CHECK(th::error_of([] { mix_corpus({{"A", {}}}, 0); }) == Errc::EmptyCorpus);
}

TEST_CASE("corpus: json dump carries offsets") {
  const auto j = corpus_to_json(mix_corpus(two_datasets(3, 2), 4));
  CHECK(j.dump().find("source_offset") != std::string::npos);
}
