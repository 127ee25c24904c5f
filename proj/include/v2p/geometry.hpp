#pragma once

#include <Eigen/Core>
#include <cstdint>
#include <utility>
#include <vector>

#include "v2p/common.hpp"

namespace v2p {

// Pinhole intrinsics in pixels.
struct CameraIntrinsics {
  double fx = 1.0;
  double fy = 1.0;
  double cx = 0.0;
  double cy = 0.0;
};

// Per-pixel depth in meters, row-major. 0 marks an invalid pixel.
struct DepthMap {
  int width = 0;
  int height = 0;
  std::vector<float> values;

  float at(int i, int j) const { return values[static_cast<size_t>(i) * width + j]; }
  float& at(int i, int j) { return values[static_cast<size_t>(i) * width + j]; }
};

// Segmentation mask as an explicit pixel set. Pixels are (i, j) = (row, col).
struct ObjectMask {
  int width = 0;
  int height = 0;
  std::vector<std::pair<int, int>> pixels;
};

// Pixel convention used throughout: i is the row (image y), j is the column
// (image x); the homogeneous vector is [x, y, 1]^T = [j, i, 1]^T.
Eigen::Vector3d unproject_pixel(const CameraIntrinsics& K, int i, int j, double depth);

// Max pairwise distance between unprojections of valid masked pixels
// (pixels with depth 0 are excluded). Exact O(p^2) scan.
double masked_diameter(const ObjectMask& mask, const DepthMap& depth, const CameraIntrinsics& K);

// Max pairwise vertex distance. Brute force up to 2000 vertices; above that a
// convex-hull candidate reduction is applied, with conservative margins and a
// brute-force fallback so the result always equals the exhaustive scan.
double mesh_diameter(const std::vector<Eigen::Vector3d>& vertices);

// rho = d_image / d_mesh.
double scale_ratio(double d_image, double d_mesh);

// Fraction of valid pixels (gt > 0, inside region when given) whose relative
// depth error is within 10%. Higher is better.
double d1_metric(const DepthMap& predicted, const DepthMap& ground_truth,
                 const ObjectMask* region = nullptr);

}  // namespace v2p
