#include <doctest.h>

#include <cmath>
#include <filesystem>
#include <fstream>

#include "conpro/data.hpp"
#include "conpro/eval.hpp"
#include "conpro/rng.hpp"
#include "oracles.hpp"

using namespace conpro;

namespace {

eval::FeatureStats stats_from(const oracle::Mat& rows) {
  eval::FeatureStats s;
  const int64_t n = static_cast<int64_t>(rows.size());
  const int64_t d = static_cast<int64_t>(rows[0].size());
  Tensor t({n, d});
  for (int64_t i = 0; i < n; ++i)
    for (int64_t j = 0; j < d; ++j) t.at2(i, j) = rows[static_cast<size_t>(i)][static_cast<size_t>(j)];
  return eval::feature_stats(t);
}

eval::FeatureStats gaussian_1d(double mu, double var) {
  eval::FeatureStats s;
  s.mean = Tensor({1}, {mu});
  s.cov = Tensor({1, 1}, {var});
  s.count = 2;
  return s;
}

}  // namespace

TEST_CASE("feature_stats: identical rows give a zero covariance") {
  Tensor rows({4, 3});
  for (int64_t i = 0; i < 4; ++i)
    for (int64_t j = 0; j < 3; ++j) rows.at2(i, j) = double(j) + 1.0;
  auto s = eval::feature_stats(rows);
  for (int64_t i = 0; i < s.cov.size(); ++i) CHECK(s.cov[i] == 0.0);
  CHECK(s.mean[1] == doctest::Approx(2.0));
  CHECK_THROWS(eval::feature_stats(Tensor({1, 3})));
}

TEST_CASE("feature_stats: duplicating the sample set leaves the moments unchanged") {
  Rng rng(1);
  Tensor rows = rng.normal_tensor({6, 4});
  Tensor doubled({12, 4});
  for (int64_t i = 0; i < 6; ++i)
    for (int64_t j = 0; j < 4; ++j) {
      doubled.at2(i, j) = rows.at2(i, j);
      doubled.at2(i + 6, j) = rows.at2(i, j);
    }
  auto a = eval::feature_stats(rows);
  auto b = eval::feature_stats(doubled);
  for (int64_t i = 0; i < 4; ++i) CHECK(a.mean[i] == doctest::Approx(b.mean[i]).epsilon(1e-12));
  // biased covariances would agree; the unbiased ones differ by (n-1) scaling
  for (int64_t i = 0; i < 16; ++i)
    CHECK(a.cov[i] * 5.0 / 6.0 == doctest::Approx(b.cov[i] * 11.0 / 12.0).epsilon(1e-10));
}

TEST_CASE("feature_stats matches the naive two-pass oracle to 1e-10") {
  for (uint64_t seed = 0; seed < 5; ++seed) {
    Rng rng(mix_seed(400, seed));
    const int64_t n = 4, d = 3;
    Tensor rows = rng.normal_tensor({n, d});
    auto s = eval::feature_stats(rows);
    oracle::Mat m(static_cast<size_t>(n), oracle::Vec(static_cast<size_t>(d)));
    for (int64_t i = 0; i < n; ++i)
      for (int64_t j = 0; j < d; ++j) m[static_cast<size_t>(i)][static_cast<size_t>(j)] = rows.at2(i, j);
    oracle::Vec mean;
    oracle::Mat cov;
    oracle::mean_cov(m, mean, cov);
    for (int64_t j = 0; j < d; ++j) CHECK(s.mean[j] == doctest::Approx(mean[static_cast<size_t>(j)]).epsilon(1e-10));
    for (int64_t a = 0; a < d; ++a)
      for (int64_t b = 0; b < d; ++b)
        CHECK(s.cov.at2(a, b) == doctest::Approx(cov[static_cast<size_t>(a)][static_cast<size_t>(b)]).epsilon(1e-10));
  }
}

TEST_CASE("jacobi eigensolver reconstructs symmetric matrices") {
  Rng rng(2);
  for (int trial = 0; trial < 5; ++trial) {
    const int64_t d = 5;
    Tensor a = rng.normal_tensor({d, d});
    Tensor sym({d, d});
    for (int64_t i = 0; i < d; ++i)
      for (int64_t j = 0; j < d; ++j) sym.at2(i, j) = 0.5 * (a.at2(i, j) + a.at2(j, i));
    Tensor vals, vecs;
    eval::jacobi_eig(sym, vals, vecs);
    // reconstruct Q diag(vals) Q^T
    for (int64_t i = 0; i < d; ++i)
      for (int64_t j = 0; j < d; ++j) {
        double acc = 0.0;
        for (int64_t k = 0; k < d; ++k) acc += vecs.at2(i, k) * vals[k] * vecs.at2(j, k);
        CHECK(acc == doctest::Approx(sym.at2(i, j)).epsilon(1e-9));
      }
  }
}

TEST_CASE("frechet distance: identity, 1-d closed forms and symmetry") {
  auto a = gaussian_1d(0.0, 1.0);
  CHECK(eval::frechet_distance(a, a) == doctest::Approx(0.0).epsilon(1e-8));

  // (mu 0, var 1) vs (mu 1, var 1) -> (0-1)^2 + (1-1)^2 = 1
  CHECK(eval::frechet_distance(a, gaussian_1d(1.0, 1.0)) == doctest::Approx(1.0).epsilon(1e-8));
  // (0,1) vs (0,4): (sigma difference)^2 = (1-2)^2 = 1
  CHECK(eval::frechet_distance(a, gaussian_1d(0.0, 4.0)) == doctest::Approx(1.0).epsilon(1e-8));

  Rng rng(3);
  for (int trial = 0; trial < 10; ++trial) {
    const int64_t n = 6, d = 4;
    Tensor ra = rng.normal_tensor({n, d});
    Tensor rb = rng.normal_tensor({n, d}, 1.3, 0.4);
    auto sa = eval::feature_stats(ra);
    auto sb = eval::feature_stats(rb);
    const double ab = eval::frechet_distance(sa, sb);
    const double ba = eval::frechet_distance(sb, sa);
    CHECK(ab >= 0.0);
    CHECK(std::fabs(ab - ba) < 1e-8);
  }

  eval::FeatureStats bad = gaussian_1d(0, 1);
  bad.mean = Tensor({2});
  CHECK_THROWS(eval::frechet_distance(a, bad));
}

TEST_CASE("frechet distance matches the Denman-Beavers oracle on 20 seeded instances") {
  for (uint64_t seed = 0; seed < 20; ++seed) {
    Rng rng(mix_seed(500, seed));
    const int64_t d = 2 + static_cast<int64_t>(seed % 7);  // dims <= 8
    const int64_t n = d + 3;
    oracle::Mat rows_a(static_cast<size_t>(n), oracle::Vec(static_cast<size_t>(d)));
    oracle::Mat rows_b(static_cast<size_t>(n), oracle::Vec(static_cast<size_t>(d)));
    for (auto& r : rows_a)
      for (auto& v : r) v = rng.normal();
    for (auto& r : rows_b)
      for (auto& v : r) v = 0.7 * rng.normal() + 0.2;

    auto sa = stats_from(rows_a);
    auto sb = stats_from(rows_b);
    const double impl = eval::frechet_distance(sa, sb);

    oracle::Vec mean_a, mean_b;
    oracle::Mat cov_a, cov_b;
    oracle::mean_cov(rows_a, mean_a, cov_a);
    oracle::mean_cov(rows_b, mean_b, cov_b);
    const double want = oracle::frechet(mean_a, cov_a, mean_b, cov_b);
    CHECK(impl == doctest::Approx(want).epsilon(1e-10));
  }
}

TEST_CASE("extractor is deterministic in its seed and serializes") {
  eval::FeatureExtractor ex(77, 16);
  eval::FeatureExtractor ex2(77, 16);
  Rng rng(4);
  Tensor imgs = rng.uniform_tensor({3, 3, 32, 32}, -1.0, 1.0);
  Tensor fa = ex.features(imgs);
  Tensor fb = ex2.features(imgs);
  CHECK(fa.shape() == Shape{3, 16});
  CHECK(fnv1a64(fa) == fnv1a64(fb));

  ArrayStore store;
  ex.save(store);
  auto loaded = eval::FeatureExtractor::load(store);
  CHECK(fnv1a64(loaded.features(imgs)) == fnv1a64(fa));

  eval::FeatureExtractor other(78, 16);
  CHECK(fnv1a64(other.features(imgs)) != fnv1a64(fa));
}

TEST_CASE("toy_fid is ~0 on identical sets and increases with noise level") {
  eval::FeatureExtractor ex(7, 16);
  auto specs = data::make_class_specs(2, 9);
  auto ds = data::render_class(specs[0], 40, 3);

  CHECK(eval::toy_fid(ds.images, ds.images, ex) <= 1e-6);

  for (uint64_t seed = 0; seed < 5; ++seed) {
    Rng light_rng(mix_seed(600, seed));
    Rng heavy_rng(mix_seed(700, seed));
    Tensor light = ds.images;
    Tensor heavy = ds.images;
    for (int64_t i = 0; i < light.size(); ++i) {
      light[i] += 0.05 * light_rng.normal();
      heavy[i] += 0.3 * heavy_rng.normal();
    }
    const double fid_light = eval::toy_fid(ds.images, light, ex);
    const double fid_heavy = eval::toy_fid(ds.images, heavy, ex);
    CHECK(fid_heavy > fid_light);
  }
}

TEST_CASE("fid bar plot emits a readable PPM") {
  std::vector<eval::TaskMetrics> ms(3);
  ms[0].toy_fid = 1.0;
  ms[1].toy_fid = 0.25;
  ms[2].toy_fid = 2.0;
  auto file = std::filesystem::temp_directory_path() / "conpro_bars.ppm";
  eval::write_fid_bars(ms, file);
  std::ifstream is(file, std::ios::binary);
  std::string magic;
  is >> magic;
  CHECK(magic == "P6");
  std::filesystem::remove(file);
}

TEST_CASE("report table dimensions follow tasks x configs") {
  std::vector<eval::TaskMetrics> col_a(3), col_b(3);
  for (int64_t i = 0; i < 3; ++i) {
    col_a[static_cast<size_t>(i)].task_id = i;
    col_a[static_cast<size_t>(i)].toy_fid = 1.0 + double(i);
    col_b[static_cast<size_t>(i)].task_id = i;
    col_b[static_cast<size_t>(i)].toy_fid = 2.0 + double(i);
  }
  std::string table = eval::report_table({"baseline", "full"}, {col_a, col_b});
  // one header, three task rows, params row, ms row
  const size_t lines = std::count(table.begin(), table.end(), '\n');
  CHECK(lines == 6);
  CHECK(table.find("baseline") != std::string::npos);
  CHECK(table.find("task 2") != std::string::npos);
  CHECK_THROWS(eval::report_table({"only"}, {col_a, col_b}));
}
