#include <cmath>
#include <numeric>

#include "doctest.h"
#include "helpers.hpp"
#include "oracle.hpp"

using namespace ltsm;

namespace {
double fv(const std::string& name, std::vector<double> s, FeatureParams p = {}) {
  return feature_value(name, s, p);
}
}  // namespace

TEST_CASE("features: worked values") {
  CHECK(fv("peak_to_peak", {1, 5, 3}) == 4.0);
  CHECK(fv("absolute_energy", {1, 2, 3}) == 14.0);
  CHECK(fv("autocorrelation", {1, 1, 1}) == 2.0);
  CHECK(fv("rms", {3, 4}) == doctest::Approx(std::sqrt(12.5)).epsilon(1e-15));
  CHECK(fv("area_under_curve", {0, 1, 0}) == 1.0);
  // one sample per bin over ten equal-width bins
  CHECK(fv("entropy", {0, 1, 2, 3, 4, 5, 6, 7, 8, 9}) == doctest::Approx(std::log2(10.0)).epsilon(1e-14));
}

TEST_CASE("features: skewness against a direct sum") {
  const std::vector<double> s{1, 2, 3, 4, 100};
  double m = 0;
  for (double x : s) m += x;
  m /= 5;
  double m2 = 0, m3 = 0;
  for (double x : s) {
    m2 += (x - m) * (x - m);
    m3 += (x - m) * (x - m) * (x - m);
  }
  const double sd = std::sqrt(m2 / 5);
  CHECK(fv("skewness", s) == doctest::Approx(m3 / (5 * sd * sd * sd)).epsilon(1e-12));
}

TEST_CASE("features: errors") {
  CHECK(th::error_of([] { fv("kurtosis", {1, 2, 3}); }) == Errc::UnknownFeature);
  CHECK(th::error_of([] { fv("max_diff", {1}); }) == Errc::SeriesTooShort);
  CHECK(th::error_of([] { fv("rms", {}); }) == Errc::SeriesTooShort);
  CHECK(th::error_of([] { fv("autocorrelation", {1, 2, 3}, {3, 10}); }) == Errc::SeriesTooShort);
}

TEST_CASE("features: canonical catalog is 25 unique, ordered names") {
  const auto cat = FeatureCatalog::canonical();
  CHECK(cat.size() == 25);
  CHECK(cat.features().front().name == "autocorrelation");
  CHECK(cat.features().back().name == "skewness");
  CHECK(FeatureCatalog::preset("prompt133").size() == 133);
  const auto back = FeatureCatalog::from_json(cat.to_json());
  CHECK(back.version() == cat.version());
  CHECK(back.size() == cat.size());
}

TEST_CASE("features: random 64-sample series match the brute-force oracle") {
  const auto ts = th::series_of(th::random_matrix(64, 1, 3, 2.5));
  const auto cat = FeatureCatalog::canonical();
  const Matrix raw = extract_features(ts, cat);
  const auto s = th::column(ts.values(), 0);
  for (std::size_t i = 0; i < cat.size(); ++i) {
    const auto& f = cat.features()[i];
    INFO(f.name);
    CHECK(oracle::close(raw(static_cast<Eigen::Index>(i), 0), oracle::feature(f.name, s), 1e-9));
  }
}

TEST_CASE("features: doubling a variate quadruples absolute energy") {
  Matrix m = th::random_matrix(50, 1, 8);
  Matrix two(50, 2);
  two << m, 2.0 * m;
  const auto raw = extract_features(th::series_of(two), FeatureCatalog::canonical());
  std::size_t k = 0;
  while (FeatureCatalog::canonical().features()[k].name != "absolute_energy") ++k;
  CHECK(raw(k, 1) == doctest::Approx(4.0 * raw(k, 0)).epsilon(1e-14));
}

TEST_CASE("features: constants") {
  const std::vector<double> c(20, 3.5);
  for (const char* f : {"std", "var", "peak_to_peak", "max_diff", "mean_diff", "median_diff", "max_abs_diff",
                        "mean_abs_diff", "median_abs_diff", "sum_abs_diff", "iqr", "entropy", "skewness"})
    CHECK(fv(f, c) == 0.0);
}

TEST_CASE("features: shift invariance and scale homogeneity") {
  const auto s = th::column(th::random_matrix(90, 1, 21), 0);
  std::vector<double> shifted = s, scaled = s;
  for (double& x : shifted) x += 7.25;
  for (double& x : scaled) x *= 3.0;
  for (const char* f : {"std", "var", "peak_to_peak", "max_diff", "mean_diff", "median_diff", "max_abs_diff",
                        "mean_abs_diff", "median_abs_diff", "sum_abs_diff", "distance", "iqr",
                        "mean_abs_deviation", "median_abs_deviation", "skewness", "wavelet_std", "wavelet_var",
                        "wavelet_abs_mean", "entropy"}) {
    INFO(f);
    CHECK(fv(f, shifted) == doctest::Approx(fv(f, s)).epsilon(1e-9).scale(1.0));
  }
  CHECK(fv("absolute_energy", scaled) == doctest::Approx(9.0 * fv("absolute_energy", s)).epsilon(1e-12));
  for (const char* f : {"rms", "std", "peak_to_peak"}) CHECK(fv(f, scaled) == doctest::Approx(3.0 * fv(f, s)).epsilon(1e-12));
  CHECK(fv("skewness", scaled) == doctest::Approx(fv("skewness", s)).epsilon(1e-10));
}

TEST_CASE("standardizer: two-point population and single sample") {
  Matrix a(1, 1), b(1, 1);
  a << 0.0;
  b << 2.0;
  const auto st = fit_standardizer({a, b});
  CHECK(st.mean(0) == 1.0);
  CHECK(st.std(0) == 1.0);
  CHECK_FALSE(st.degenerate[0]);
  const auto one = fit_standardizer({a});
  CHECK(one.std(0) == 0.0);
  CHECK(one.degenerate[0]);
}

TEST_CASE("standardizer: pooled stats equal the concatenated population") {
  const Matrix x = th::random_matrix(4, 2, 1), y = th::random_matrix(4, 3, 2), z = th::random_matrix(4, 1, 3);
  const auto pooled = fit_standardizer({x, y, z});
  Matrix cat(4, 6);
  cat << x, y, z;
  const auto whole = fit_standardizer({cat});
  for (int r = 0; r < 4; ++r) {
    std::vector<double> pop = th::column(cat.transpose(), r);
    CHECK(pooled.mean(r) == doctest::Approx(oracle::mean(pop)).epsilon(1e-14));
    CHECK(pooled.std(r) == doctest::Approx(std::sqrt(oracle::pvar(pop))).epsilon(1e-13));
    CHECK(pooled.mean(r) == doctest::Approx(whole.mean(r)).epsilon(1e-15));
    CHECK(pooled.std(r) == doctest::Approx(whole.std(r)).epsilon(1e-15));
  }
}

TEST_CASE("standardize: centering, unit scaling, degenerate slots, shape guard") {
  StandardizationStats st;
  st.mean = Vector::Constant(2, 5.0);
  st.std = Vector(2);
  st.std << 2.0, 0.0;
  st.degenerate = {false, true};
  st.population = 3;
  Matrix raw(2, 3);
  raw << 5, 7, 3, 1e9, -4, 5;
  const auto p = standardize(raw, st);
  CHECK(p.features(0, 0) == 0.0);
  CHECK(p.features(0, 1) == 1.0);
  CHECK(p.features(0, 2) == -1.0);
  CHECK(p.features.row(1).isZero(0.0));
  CHECK(th::error_of([&] { standardize(Matrix::Zero(3, 1), st); }) == Errc::ShapeError);
}

TEST_CASE("standardize: training population has mean 0 and std 1 per slot") {
  std::vector<Matrix> raws;
  for (std::uint64_t s = 0; s < 3; ++s)
    raws.push_back(extract_features(th::series_of(th::random_matrix(80, 2, s, 1.0 + s)), FeatureCatalog::canonical()));
  const auto st = fit_standardizer(raws);
  Matrix all(25, 6);
  for (int i = 0; i < 3; ++i) all.middleCols(2 * i, 2) = standardize(raws[i], st).features;
  for (int r = 0; r < 25; ++r) {
    if (st.degenerate[r]) continue;
    const auto v = th::column(all.transpose(), r);
    CHECK(std::abs(oracle::mean(v)) < 1e-9);
    CHECK(std::sqrt(oracle::pvar(v)) == doctest::Approx(1.0).epsilon(1e-9));
  }
}

TEST_CASE("standardize: stats depend only on training inputs") {
  const auto train = th::series_of(th::random_matrix(60, 2, 100));
  const auto test = th::series_of(th::random_matrix(60, 2, 101, 10.0));
  const auto cat = FeatureCatalog::canonical();
  const auto raw = extract_features(train, cat);
  const auto a = standardize(raw, fit_standardizer({raw}));
  (void)fit_standardizer({raw, extract_features(test, cat)});  // a contaminated fit elsewhere does not matter
  const auto b = standardize(raw, fit_standardizer({raw}));
  CHECK(a.features == b.features);
}

TEST_CASE("assemble_input: prompt rows first, lookback untouched") {
  const Matrix lookback = th::random_matrix(3, 1, 4);
  PromptMatrix none{Matrix(0, 1), ""};
  CHECK(assemble_input(none, lookback) == lookback);
  PromptMatrix two{th::random_matrix(2, 1, 5), "v"};
  const Matrix x = assemble_input(two, lookback);
  CHECK(x.rows() == 5);
  CHECK(x.topRows(2) == two.features);
  CHECK(x.bottomRows(3) == lookback);
  PromptMatrix wide{Matrix::Zero(133, 2), "pad"};
  CHECK(assemble_input(wide, Matrix::Zero(336, 2)).rows() == 469);
  CHECK(th::error_of([&] { assemble_input(wide, lookback); }) == Errc::ShapeError);
}

TEST_CASE("stats json round trip") {
  const auto st = fit_standardizer({th::random_matrix(5, 4, 12)});
  const auto back = StandardizationStats::from_json(st.to_json());
  CHECK(back.mean == st.mean);
  CHECK(back.std == st.std);
  CHECK(back.degenerate == st.degenerate);
}
