#pragma once

#include <cstdint>
#include <vector>

#include "dsf/array.hpp"
#include "dsf/rng.hpp"

namespace dsf::inline DSF_PREC {

class ValidationError : public std::invalid_argument {
 public:
  using std::invalid_argument::invalid_argument;
};

/// N x 3 coordinates in meters.
struct PointCloud {
  Array points;

  std::size_t size() const noexcept { return points.rows(); }
  /// Throws ValidationError naming `field` unless the cloud is [N x 3], N >= 1, finite.
  void validate(const char* field = "points") const;
};

/// Per-point 3-vector field over a source cloud.
struct FlowField {
  Array vectors;

  std::size_t size() const noexcept { return vectors.rows(); }
};

struct ScenePair {
  PointCloud source;
  PointCloud target;
  FlowField gt_flow;
  /// 1 where the source point's correspondence survives in the target.
  std::vector<std::uint8_t> valid_mask;

  void validate() const;
};

/// Dense k-nearest-neighbour result, row-major [rows x k].
struct NeighborIndex {
  std::size_t rows = 0;
  std::size_t k = 0;
  std::vector<std::uint32_t> index;

  std::uint32_t operator()(std::size_t r, std::size_t j) const { return index[r * k + j]; }
};

/// Greedy maximin subset. The first index is drawn uniformly from `rng`.
std::vector<std::size_t> farthest_point_sampling(const PointCloud& pc, std::size_t m,
                                                 RngStream& rng);
/// Same, with an explicit start index. Ties go to the lowest index.
std::vector<std::size_t> farthest_point_sampling(const PointCloud& pc, std::size_t m,
                                                 std::size_t start);

/// k nearest rows of `base` for every row of `query` (any feature width).
/// Ascending distance, ties by lowest index; a point may be its own neighbour.
NeighborIndex knn(const Array& query, const Array& base, std::size_t k);

enum class Subsampling { fps, random };

/// Draws `n_source` / `n_target` points (FPS or uniform without replacement).
/// Flow and mask follow the selected source rows.
ScenePair subsample(const ScenePair& pair, std::size_t n_source, std::size_t n_target,
                    Subsampling mode, RngStream& rng);

/// Source shifted by flow (rows must match).
Array warp(const PointCloud& source, const Array& flow);

}  // namespace dsf::inline DSF_PREC
