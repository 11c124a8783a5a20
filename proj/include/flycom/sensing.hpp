#pragma once

#include "flycom/gp.hpp"
#include "flycom/octree.hpp"

#include <limits>
#include <string>

namespace flycom {

/// Multi-view geometry: equal azimuth sectors about the scene centroid,
/// widened by an overlap margin on each side. K = 1 means a full view.
struct ViewGeometry {
  double overlap_deg = 15.0;
  double max_range = std::numeric_limits<double>::infinity();
};

struct SceneSpec {
  GpModel ground_truth;
  uint64_t seed = 0;
  int num_sensors = 8;
  int per_slot_budget = 50;
  ViewGeometry view;

  void validate() const;
};

/// One sensor's share of the voxelized scene. voxel_indices refer to the
/// global VoxelGrid in octree encoding order; slot_batches chunk the
/// local indices into per-slot uploads of at most per_slot_budget voxels.
struct SensorCloud {
  int sensor_id = 0;
  std::vector<Eigen::Index> voxel_indices;
  PointList positions;
  VecX attributes;
  std::vector<std::vector<Eigen::Index>> slot_batches;
};

/// One exact joint draw of the ground-truth field at the given positions,
/// plus i.i.d. observation noise. Deterministic under the scene seed.
VecX sample_scene(const SceneSpec& spec, const PointList& positions);

std::vector<SensorCloud> partition_views(const VoxelGrid& grid,
                                         const VecX& attributes,
                                         const SceneSpec& spec);

/// Chunk each sensor's voxel list into slot batches of size <= budget.
void assign_slot_batches(std::vector<SensorCloud>& sensors, int budget);

struct Normalization {
  VecX values;
  double mean = 0.0;
  double std = 1.0;
};

Normalization normalize_attributes(const VecX& attributes);

double rgb_to_grayscale(double r, double g, double b);

struct PlyData {
  PointList positions;
  std::vector<std::array<double, 3>> rgb;
};

/// Reads ASCII or binary-little-endian PLY with x,y,z and red,green,blue.
PlyData ingest_ply(const std::string& path);

/// Synthetic clustered point cloud in the unit cube (Gaussian blobs),
/// used as the test substrate for experiment runs.
PointList make_blob_cloud(uint64_t seed, int num_points, int num_blobs = 4);

}  // namespace flycom
