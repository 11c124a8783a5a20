#include "flycom/octree.hpp"

#include <algorithm>
#include <array>
#include <cmath>
#include <map>
#include <numeric>
#include <sstream>

namespace flycom {

namespace {

struct Cell {
  Vec3 lo;
  Vec3 hi;
  std::vector<int> members;  // point indices, empty during decode
};

// Child index: lexicographic on (x, y, z) half-splits, low halves first.
Cell child_cell(const Cell& c, int idx, int dim) {
  Cell out;
  out.lo = c.lo;
  out.hi = c.hi;
  for (int a = 0; a < dim; ++a) {
    const double mid = 0.5 * (c.lo[a] + c.hi[a]);
    const int bit = (idx >> (dim - 1 - a)) & 1;
    if (bit)
      out.lo[a] = mid;
    else
      out.hi[a] = mid;
  }
  return out;
}

int child_index_of(const Cell& c, const Vec3& p, int dim) {
  int idx = 0;
  for (int a = 0; a < dim; ++a) {
    const double mid = 0.5 * (c.lo[a] + c.hi[a]);
    idx = (idx << 1) | (p[a] >= mid ? 1 : 0);
  }
  return idx;
}

Vec3 center_of(const Cell& c) { return 0.5 * (c.lo + c.hi); }

}  // namespace

void Aabb::validate() const {
  require((min_corner.array() < max_corner.array()).all(),
          "Aabb: min_corner must be componentwise below max_corner");
}

bool Aabb::contains(const Vec3& p, int dim) const {
  for (int a = 0; a < dim; ++a)
    if (p[a] < min_corner[a] || p[a] > max_corner[a]) return false;
  return true;
}

Aabb Aabb::bounding_cube(const PointList& points, double pad) {
  require(!points.empty(), "Aabb::bounding_cube: empty point list");
  Vec3 lo = points.front(), hi = points.front();
  for (const Vec3& p : points) {
    lo = lo.cwiseMin(p);
    hi = hi.cwiseMax(p);
  }
  const Vec3 c = 0.5 * (lo + hi);
  double half = 0.5 * (hi - lo).maxCoeff();
  if (half <= 0.0) half = 0.5;  // degenerate single-point cloud
  half *= (1.0 + pad);
  return Aabb{c.array() - half, c.array() + half};
}

std::size_t OccupancyCode::total_bits() const {
  std::size_t n = 0;
  for (const auto& seq : depth_sequences) n += seq.size();
  return n;
}

void OccupancyCode::validate() const {
  require(dim == 2 || dim == 3, "OccupancyCode: dim must be 2 or 3");
  require(!depth_sequences.empty(), "OccupancyCode: no depth sequences");
  require(depth_sequences[0].size() == 1,
          "OccupancyCode: root depth must hold exactly one bit");
  const std::size_t fanout = std::size_t{1} << dim;
  for (std::size_t d = 1; d < depth_sequences.size(); ++d) {
    const std::size_t prev_occupied =
        static_cast<std::size_t>(std::count(depth_sequences[d - 1].begin(),
                                            depth_sequences[d - 1].end(), 1));
    if (depth_sequences[d].size() != prev_occupied * fanout) {
      std::ostringstream msg;
      msg << "OccupancyCode: depth " << d + 1 << " holds "
          << depth_sequences[d].size() << " bits, expected "
          << prev_occupied * fanout;
      throw ConfigError(msg.str());
    }
  }
}

OccupancyCode OccupancyCode::truncated(int new_depth) const {
  require(new_depth >= 1 && new_depth <= max_depth(),
          "OccupancyCode::truncated: depth out of range");
  OccupancyCode out;
  out.dim = dim;
  out.depth_sequences.assign(depth_sequences.begin(),
                             depth_sequences.begin() + new_depth);
  return out;
}

std::vector<uint8_t> OccupancyCode::serialize() const {
  require(dim == 3, "OccupancyCode::serialize: 3D codes only");
  validate();
  static const char magic[] = "FLY2OCC";
  std::vector<uint8_t> out(magic, magic + 7);
  out.push_back(static_cast<uint8_t>(max_depth()));
  uint8_t acc = 0;
  int nbits = 0;
  for (const auto& seq : depth_sequences)
    for (uint8_t bit : seq) {
      acc = static_cast<uint8_t>((acc << 1) | (bit & 1));
      if (++nbits == 8) {
        out.push_back(acc);
        acc = 0;
        nbits = 0;
      }
    }
  if (nbits > 0) out.push_back(static_cast<uint8_t>(acc << (8 - nbits)));
  return out;
}

OccupancyCode OccupancyCode::deserialize(const std::vector<uint8_t>& bytes) {
  require(bytes.size() >= 8, "OccupancyCode: byte stream too short");
  require(std::equal(bytes.begin(), bytes.begin() + 7, "FLY2OCC"),
          "OccupancyCode: bad magic");
  const int depth = bytes[7];
  require(depth >= 1, "OccupancyCode: max_depth must be >= 1");

  std::size_t bitpos = 0;
  const std::size_t payload_bits = (bytes.size() - 8) * 8;
  auto next_bit = [&]() -> uint8_t {
    if (bitpos >= payload_bits)
      throw ConfigError("OccupancyCode: truncated payload at byte offset " +
                        std::to_string(8 + bitpos / 8));
    const uint8_t byte = bytes[8 + bitpos / 8];
    const uint8_t bit = (byte >> (7 - bitpos % 8)) & 1;
    ++bitpos;
    return bit;
  };

  OccupancyCode code;
  code.dim = 3;
  code.depth_sequences.resize(depth);
  code.depth_sequences[0].push_back(next_bit());
  for (int d = 1; d < depth; ++d) {
    const std::size_t prev_occupied = static_cast<std::size_t>(
        std::count(code.depth_sequences[d - 1].begin(),
                   code.depth_sequences[d - 1].end(), 1));
    for (std::size_t i = 0; i < prev_occupied * 8; ++i)
      code.depth_sequences[d].push_back(next_bit());
  }
  code.validate();
  return code;
}

OccupancyCode build_occupancy(const PointList& points, const Aabb& root,
                              int max_depth, int dim) {
  root.validate();
  require(max_depth >= 1, "build_occupancy: max_depth must be >= 1");
  require(dim == 2 || dim == 3, "build_occupancy: dim must be 2 or 3");
  for (std::size_t i = 0; i < points.size(); ++i) {
    if (!root.contains(points[i], dim)) {
      std::ostringstream msg;
      msg << "build_occupancy: point " << i << " ("
          << points[i].transpose() << ") lies outside the root box";
      throw ConfigError(msg.str());
    }
  }

  OccupancyCode code;
  code.dim = dim;
  code.depth_sequences.resize(max_depth);
  code.depth_sequences[0].push_back(points.empty() ? 0 : 1);

  const int fanout = 1 << dim;
  std::vector<Cell> level;
  if (!points.empty()) {
    Cell rc{root.min_corner, root.max_corner, {}};
    rc.members.resize(points.size());
    std::iota(rc.members.begin(), rc.members.end(), 0);
    level.push_back(std::move(rc));
  }

  for (int d = 1; d < max_depth; ++d) {
    std::vector<Cell> next;
    for (const Cell& cell : level) {
      std::vector<std::vector<int>> buckets(fanout);
      for (int pi : cell.members)
        buckets[child_index_of(cell, points[pi], dim)].push_back(pi);
      for (int i = 0; i < fanout; ++i) {
        const bool occ = !buckets[i].empty();
        code.depth_sequences[d].push_back(occ ? 1 : 0);
        if (occ) {
          Cell cc = child_cell(cell, i, dim);
          cc.members = std::move(buckets[i]);
          next.push_back(std::move(cc));
        }
      }
    }
    level = std::move(next);
  }
  return code;
}

VoxelGrid decode_occupancy(const OccupancyCode& code, const Aabb& root) {
  root.validate();
  code.validate();
  const int dim = code.dim;
  const int fanout = 1 << dim;

  VoxelGrid grid;
  grid.depth = code.max_depth();
  grid.root = root;
  grid.cell_size = (root.max_corner[0] - root.min_corner[0]) /
                   std::pow(2.0, grid.depth - 1);
  if (code.depth_sequences[0][0] == 0) return grid;

  std::vector<Cell> level{Cell{root.min_corner, root.max_corner, {}}};
  for (int d = 1; d < code.max_depth(); ++d) {
    const auto& bits = code.depth_sequences[d];
    std::vector<Cell> next;
    for (std::size_t c = 0; c < level.size(); ++c)
      for (int i = 0; i < fanout; ++i)
        if (bits[c * fanout + i]) next.push_back(child_cell(level[c], i, dim));
    level = std::move(next);
  }
  grid.occupied_centers.reserve(level.size());
  for (const Cell& cell : level) grid.occupied_centers.push_back(center_of(cell));
  return grid;
}

VecX voxelize_attributes(const PointList& points, const VecX& attributes,
                         const VoxelGrid& grid, int dim) {
  require(static_cast<Eigen::Index>(points.size()) == attributes.size(),
          "voxelize_attributes: points/attributes length mismatch");
  if (points.empty()) return VecX();

  // Cell coordinates of a point; the closed max face clamps inward.
  const double cs = grid.cell_size;
  const long res = 1L << (grid.depth - 1);
  auto key_of = [&](const Vec3& p) {
    std::array<long, 3> key{0, 0, 0};
    for (int a = 0; a < dim; ++a) {
      long k = static_cast<long>(
          std::floor((p[a] - grid.root.min_corner[a]) / cs));
      key[a] = std::clamp(k, 0L, res - 1);
    }
    return key;
  };
  std::map<std::array<long, 3>, Eigen::Index> index;
  for (Eigen::Index v = 0; v < grid.size(); ++v)
    index[key_of(grid.occupied_centers[v])] = v;

  VecX sums = VecX::Zero(grid.size());
  VecX counts = VecX::Zero(grid.size());
  for (std::size_t i = 0; i < points.size(); ++i) {
    auto it = index.find(key_of(points[i]));
    if (it == index.end())
      throw NumericalError(
          "voxelize_attributes: point falls in a voxel absent from the grid");
    sums[it->second] += attributes[static_cast<Eigen::Index>(i)];
    counts[it->second] += 1.0;
  }
  if ((counts.array() == 0.0).any())
    throw NumericalError("voxelize_attributes: grid voxel with no member points");
  return sums.array() / counts.array();
}

}  // namespace flycom
