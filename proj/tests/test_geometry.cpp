#include "v2p/geometry.hpp"

#include <cmath>

#include "doctest.h"
#include "v2p/rng.hpp"

using namespace v2p;

namespace {

// Independent oracle: exhaustive pairwise distance, written without reusing
// library internals.
double pairwise_oracle(const std::vector<Eigen::Vector3d>& pts) {
  double best = 0.0;
  for (size_t a = 0; a < pts.size(); ++a) {
    for (size_t b = 0; b < pts.size(); ++b) {
      const double dx = pts[a].x() - pts[b].x();
      const double dy = pts[a].y() - pts[b].y();
      const double dz = pts[a].z() - pts[b].z();
      best = std::max(best, std::sqrt(dx * dx + dy * dy + dz * dz));
    }
  }
  return best;
}

}  // namespace

TEST_CASE("unproject principal point at unit depth") {
  CameraIntrinsics K{1, 1, 0, 0};
  const auto p = unproject_pixel(K, 0, 0, 1.0);
  CHECK(p.x() == doctest::Approx(0.0));
  CHECK(p.y() == doctest::Approx(0.0));
  CHECK(p.z() == doctest::Approx(1.0));
}

TEST_CASE("unproject hand-applied example") {
  // K^-1 * [3, 1, 1]^T * 2 with fx=fy=2, cx=cy=1: ((3-1)/2*2, (1-1)/2*2, 2)
  CameraIntrinsics K{2, 2, 1, 1};
  const auto p = unproject_pixel(K, 1, 3, 2.0);
  CHECK(p.x() == doctest::Approx(2.0));
  CHECK(p.y() == doctest::Approx(0.0));
  CHECK(p.z() == doctest::Approx(2.0));
}

TEST_CASE("unproject rejects degenerate depth and bad pixels") {
  CameraIntrinsics K{1, 1, 0, 0};
  CHECK_THROWS_AS(unproject_pixel(K, 0, 0, 0.0), InputError);
  CHECK_THROWS_AS(unproject_pixel(K, -1, 0, 1.0), InputError);
  CHECK_THROWS_AS(unproject_pixel({0, 1, 0, 0}, 0, 0, 1.0), InputError);
}

TEST_CASE("unproject is linear in depth") {
  CameraIntrinsics K{500, 480, 320, 240};
  Rng rng(42);
  for (int t = 0; t < 100; ++t) {
    const int i = rng.uniform_int(480);
    const int j = rng.uniform_int(640);
    const double d = rng.uniform(0.1, 5.0);
    const auto p1 = unproject_pixel(K, i, j, d);
    const auto p2 = unproject_pixel(K, i, j, 2.0 * d);
    CHECK((p2 - 2.0 * p1).norm() < 1e-12);
  }
}

TEST_CASE("masked diameter: single pixel is zero") {
  CameraIntrinsics K{1, 1, 0, 0};
  DepthMap d{3, 3, std::vector<float>(9, 1.0f)};
  ObjectMask m{3, 3, {{1, 1}}};
  CHECK(masked_diameter(m, d, K) == 0.0);
}

TEST_CASE("masked diameter: two known pixels") {
  // fx=fy=10 so that pixel (0,3) at depth 1 unprojects to (0.3, 0, 1).
  CameraIntrinsics K{10, 10, 0, 0};
  DepthMap d{4, 1, std::vector<float>(4, 1.0f)};
  ObjectMask m{4, 1, {{0, 0}, {0, 3}}};
  CHECK(masked_diameter(m, d, K) == doctest::Approx(0.3));
}

TEST_CASE("masked diameter equals exhaustive oracle on random fixtures") {
  Rng rng(7);
  for (int trial = 0; trial < 30; ++trial) {
    const int w = 4 + rng.uniform_int(12);
    const int h = 4 + rng.uniform_int(12);
    CameraIntrinsics K{rng.uniform(50, 600), rng.uniform(50, 600), rng.uniform(0, w),
                       rng.uniform(0, h)};
    DepthMap depth{w, h, {}};
    depth.values.resize(static_cast<size_t>(w) * h);
    for (auto& v : depth.values) v = rng.chance(0.15) ? 0.0f : static_cast<float>(rng.uniform(0.2, 4.0));
    ObjectMask mask{w, h, {}};
    const int n = 2 + rng.uniform_int(198);
    for (int k = 0; k < n; ++k) mask.pixels.emplace_back(rng.uniform_int(h), rng.uniform_int(w));
    std::vector<Eigen::Vector3d> valid;
    for (auto [i, j] : mask.pixels) {
      if (depth.at(i, j) > 0) valid.push_back(unproject_pixel(K, i, j, depth.at(i, j)));
    }
    if (valid.empty()) {
      CHECK_THROWS_AS(masked_diameter(mask, depth, K), InputError);
      continue;
    }
    CHECK(masked_diameter(mask, depth, K) == pairwise_oracle(valid));
  }
}

TEST_CASE("masked diameter: 3x3 constant depth equals brute force over all pairs") {
  CameraIntrinsics K{1, 1, 1, 1};
  DepthMap d{3, 3, std::vector<float>(9, 1.0f)};
  ObjectMask m{3, 3, {}};
  std::vector<Eigen::Vector3d> pts;
  for (int i = 0; i < 3; ++i)
    for (int j = 0; j < 3; ++j) {
      m.pixels.emplace_back(i, j);
      pts.push_back(unproject_pixel(K, i, j, 1.0));
    }
  CHECK(masked_diameter(m, d, K) == pairwise_oracle(pts));
}

TEST_CASE("mesh diameter: unit cube diagonal") {
  std::vector<Eigen::Vector3d> cube;
  for (int k = 0; k < 8; ++k)
    cube.emplace_back(k & 1 ? 1.0 : 0.0, k & 2 ? 1.0 : 0.0, k & 4 ? 1.0 : 0.0);
  CHECK(mesh_diameter(cube) == doctest::Approx(std::sqrt(3.0)).epsilon(1e-12));
}

TEST_CASE("mesh diameter: single vertex and empty input") {
  CHECK(mesh_diameter({{1, 2, 3}}) == 0.0);
  CHECK_THROWS_AS(mesh_diameter({}), InputError);
}

TEST_CASE("mesh diameter equals O(n^2) oracle on 500 random vertices") {
  Rng rng(11);
  std::vector<Eigen::Vector3d> pts;
  for (int k = 0; k < 500; ++k)
    pts.emplace_back(rng.uniform(-1, 1), rng.uniform(-1, 1), rng.uniform(-1, 1));
  CHECK(mesh_diameter(pts) == pairwise_oracle(pts));
}

TEST_CASE("mesh diameter pruned path equals oracle above the brute-force cutoff") {
  Rng rng(13);
  std::vector<Eigen::Vector3d> pts;
  for (int k = 0; k < 3000; ++k) {
    pts.emplace_back(rng.normal(0, 1), rng.normal(0, 0.5), rng.normal(0, 2));
  }
  CHECK(mesh_diameter(pts) == pairwise_oracle(pts));
  // Degenerate shapes take the same path.
  std::vector<Eigen::Vector3d> plane;
  for (int k = 0; k < 2500; ++k) plane.emplace_back(rng.uniform(0, 1), rng.uniform(0, 2), 0.0);
  CHECK(mesh_diameter(plane) == pairwise_oracle(plane));
}

TEST_CASE("scale ratio") {
  CHECK(scale_ratio(0.5, 0.5) == 1.0);
  CHECK(scale_ratio(0.21, 0.07) == doctest::Approx(3.0).epsilon(1e-12));
  CHECK_THROWS_AS(scale_ratio(1.0, 0.0), InputError);
  CHECK_THROWS_AS(scale_ratio(1.0, -2.0), InputError);
}

TEST_CASE("scale ratio recovers uniform mesh scaling") {
  Rng rng(17);
  std::vector<Eigen::Vector3d> pts;
  for (int k = 0; k < 300; ++k)
    pts.emplace_back(rng.uniform(-1, 1), rng.uniform(-1, 1), rng.uniform(-1, 1));
  for (double s : {0.25, 1.0, 3.5, 40.0}) {
    std::vector<Eigen::Vector3d> scaled;
    for (const auto& p : pts) scaled.push_back(s * p);
    CHECK(scale_ratio(mesh_diameter(scaled), mesh_diameter(pts)) ==
          doctest::Approx(s).epsilon(1e-9));
  }
}

TEST_CASE("d1 metric basics") {
  DepthMap gt{4, 4, std::vector<float>(16, 2.0f)};
  DepthMap same = gt;
  CHECK(d1_metric(same, gt) == 1.0);
  DepthMap off = gt;
  for (auto& v : off.values) v *= 1.5f;
  CHECK(d1_metric(off, gt) == 0.0);
  DepthMap zero{4, 4, std::vector<float>(16, 0.0f)};
  CHECK_THROWS_AS(d1_metric(same, zero), InputError);
}

TEST_CASE("d1 metric: region restriction, order-invariance and monotonicity") {
  Rng rng(23);
  DepthMap gt{8, 8, {}};
  gt.values.resize(64);
  for (auto& v : gt.values) v = static_cast<float>(rng.uniform(0.5, 3.0));
  DepthMap pred = gt;
  for (auto& v : pred.values) v += static_cast<float>(rng.uniform(-0.2, 0.2));
  ObjectMask region{8, 8, {{0, 0}, {3, 4}, {7, 7}, {2, 2}}};
  ObjectMask shuffled{8, 8, {{2, 2}, {7, 7}, {0, 0}, {3, 4}}};
  CHECK(d1_metric(pred, gt, &region) == d1_metric(pred, gt, &shuffled));

  double prev = 1.0;
  for (double grow : {0.0, 0.05, 0.12, 0.3, 0.8}) {
    DepthMap p2 = gt;
    for (auto& v : p2.values) v *= static_cast<float>(1.0 + grow);
    const double d1 = d1_metric(p2, gt);
    CHECK(d1 <= prev);
    prev = d1;
  }
}
