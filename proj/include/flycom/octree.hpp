#pragma once

#include "flycom/types.hpp"

#include <cstdint>
#include <string>

namespace flycom {

/// Axis-aligned root box for the spatial search.
struct Aabb {
  Vec3 min_corner;
  Vec3 max_corner;

  void validate() const;
  bool contains(const Vec3& p, int dim = 3) const;

  /// Tight bounding cube of the points, expanded by `pad` relative margin.
  static Aabb bounding_cube(const PointList& points, double pad = 0.01);
};

/// Depth-major occupancy bit sequences. depth_sequences[0] is the single
/// root bit; depth_sequences[d] holds one 2^dim-bit group per occupied
/// octant at depth d, in encoding order. Child order is lexicographic on
/// (x, y, z) half-splits with low halves first; this order is a pinned
/// convention of this codec, not dictated by the bit-sequence format.
struct OccupancyCode {
  int dim = 3;  // 2 selects the quadtree variant (test fixture only)
  std::vector<std::vector<uint8_t>> depth_sequences;

  int max_depth() const { return static_cast<int>(depth_sequences.size()); }
  std::size_t total_bits() const;
  void validate() const;

  /// Keep only depths <= new_depth.
  OccupancyCode truncated(int new_depth) const;

  /// Wire format: "FLY2OCC", u8 max_depth, depth-major bits packed
  /// MSB-first. 3D codes only.
  std::vector<uint8_t> serialize() const;
  static OccupancyCode deserialize(const std::vector<uint8_t>& bytes);
};

/// Occupied leaf octants of a decoded tree, centers in encoding order.
/// The linear index of a center doubles as the voxel index pi(d,j).
struct VoxelGrid {
  int depth = 0;
  Aabb root;
  PointList occupied_centers;
  double cell_size = 0.0;

  Eigen::Index size() const {
    return static_cast<Eigen::Index>(occupied_centers.size());
  }
};

OccupancyCode build_occupancy(const PointList& points, const Aabb& root,
                              int max_depth, int dim = 3);

VoxelGrid decode_occupancy(const OccupancyCode& code, const Aabb& root);

/// Mean attribute of the member points of each occupied voxel.
VecX voxelize_attributes(const PointList& points, const VecX& attributes,
                         const VoxelGrid& grid, int dim = 3);

}  // namespace flycom
