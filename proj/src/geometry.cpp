#include "v2p/geometry.hpp"

#include <algorithm>
#include <array>
#include <cmath>
#include <string>

namespace v2p {

Eigen::Vector3d unproject_pixel(const CameraIntrinsics& K, int i, int j, double depth) {
  if (K.fx <= 0.0 || K.fy <= 0.0) throw InputError("intrinsics: focal lengths must be positive");
  if (depth <= 0.0) throw InputError("unproject: depth must be positive");
  if (i < 0 || j < 0) throw InputError("unproject: pixel out of bounds");
  const double x = static_cast<double>(j);
  const double y = static_cast<double>(i);
  return {(x - K.cx) / K.fx * depth, (y - K.cy) / K.fy * depth, depth};
}

namespace {

double dist3(const Eigen::Vector3d& a, const Eigen::Vector3d& b) {
  const double dx = a.x() - b.x();
  const double dy = a.y() - b.y();
  const double dz = a.z() - b.z();
  return std::sqrt(dx * dx + dy * dy + dz * dz);
}

double max_pairwise(const std::vector<Eigen::Vector3d>& pts) {
  double best = 0.0;
  for (size_t a = 0; a + 1 < pts.size(); ++a) {
    for (size_t b = a + 1; b < pts.size(); ++b) {
      best = std::max(best, dist3(pts[a], pts[b]));
    }
  }
  return best;
}

int farthest_from(const std::vector<Eigen::Vector3d>& pts, int p) {
  int best = 0;
  double best_d = -1.0;
  for (int q = 0; q < static_cast<int>(pts.size()); ++q) {
    const double d = dist3(pts[p], pts[q]);
    if (d > best_d) {
      best_d = d;
      best = q;
    }
  }
  return best;
}

}  // namespace

double masked_diameter(const ObjectMask& mask, const DepthMap& depth, const CameraIntrinsics& K) {
  if (mask.width != depth.width || mask.height != depth.height)
    throw InputError("masked_diameter: mask and depth dimensions differ");
  std::vector<Eigen::Vector3d> pts;
  pts.reserve(mask.pixels.size());
  for (auto [i, j] : mask.pixels) {
    if (i < 0 || j < 0 || i >= mask.height || j >= mask.width)
      throw InputError("masked_diameter: mask pixel out of bounds");
    const double d = depth.at(i, j);
    if (d > 0.0f) pts.push_back(unproject_pixel(K, i, j, d));
  }
  if (pts.empty()) throw InputError("masked_diameter: no masked pixel has valid depth");
  return max_pairwise(pts);
}

double mesh_diameter(const std::vector<Eigen::Vector3d>& vertices) {
  if (vertices.empty()) throw InputError("mesh_diameter: empty vertex list");
  const int n = static_cast<int>(vertices.size());
  if (n <= 2000) return max_pairwise(vertices);

  // Large meshes: exact pruned scan. A double sweep gives a lower bound that
  // is itself a realized pairwise distance; a vertex whose distance to every
  // corner of the bounding box cannot beat the bound (minus slack) can be
  // skipped entirely, because |p - q| <= max_corner |p - corner| for any q in
  // the box. The slack absorbs floating-point rounding so the result is
  // always identical to the exhaustive scan.
  Eigen::Vector3d lo = vertices[0], hi = vertices[0];
  for (const auto& v : vertices) {
    lo = lo.cwiseMin(v);
    hi = hi.cwiseMax(v);
  }
  double best = 0.0;
  int a = 0;
  for (int sweep = 0; sweep < 4; ++sweep) {
    const int b = farthest_from(vertices, a);
    const double d = dist3(vertices[a], vertices[b]);
    if (d <= best) break;
    best = d;
    a = b;
  }
  const double slack = 1e-9 * std::max(1.0, (hi - lo).norm());
  std::array<Eigen::Vector3d, 8> corners;
  for (int k = 0; k < 8; ++k) {
    corners[k] = {(k & 1) ? hi.x() : lo.x(), (k & 2) ? hi.y() : lo.y(), (k & 4) ? hi.z() : lo.z()};
  }
  std::vector<int> active;
  active.reserve(64);
  for (int p = 0; p < n; ++p) {
    double reach = 0.0;
    for (const auto& c : corners) reach = std::max(reach, dist3(vertices[p], c));
    if (reach + slack >= best) active.push_back(p);
  }
  // Pairs of pruned points cannot exceed best; scan active-vs-all.
  for (int p : active) {
    for (int q = 0; q < n; ++q) {
      best = std::max(best, dist3(vertices[p], vertices[q]));
    }
  }
  return best;
}

double scale_ratio(double d_image, double d_mesh) {
  if (d_mesh <= 0.0) throw InputError("scale_ratio: mesh diameter must be positive");
  if (d_image < 0.0) throw InputError("scale_ratio: image diameter must be non-negative");
  return d_image / d_mesh;
}

double d1_metric(const DepthMap& predicted, const DepthMap& ground_truth, const ObjectMask* region) {
  if (predicted.width != ground_truth.width || predicted.height != ground_truth.height)
    throw InputError("d1_metric: dimension mismatch");
  size_t valid = 0, good = 0;
  auto visit = [&](int i, int j) {
    const double gt = ground_truth.at(i, j);
    if (gt <= 0.0) return;
    ++valid;
    const double err = std::abs(static_cast<double>(predicted.at(i, j)) - gt) / gt;
    if (err <= 0.1) ++good;
  };
  if (region) {
    if (region->width != predicted.width || region->height != predicted.height)
      throw InputError("d1_metric: region dimension mismatch");
    for (auto [i, j] : region->pixels) visit(i, j);
  } else {
    for (int i = 0; i < predicted.height; ++i)
      for (int j = 0; j < predicted.width; ++j) visit(i, j);
  }
  if (valid == 0) throw InputError("d1_metric: no valid pixels");
  return static_cast<double>(good) / static_cast<double>(valid);
}

}  // namespace v2p
