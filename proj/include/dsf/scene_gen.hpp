#pragma once

#include <array>
#include <span>
#include <string>

#include "dsf/pointcloud.hpp"

namespace dsf::inline DSF_PREC {

enum class ShapeFamily { box, sphere, plane, mixed };

ShapeFamily parse_shape_family(const std::string& name);
std::string to_string(ShapeFamily family);

struct SceneGenConfig {
  std::size_t n1 = 256;
  std::size_t n2 = 256;
  std::size_t n_parts = 1;
  double max_rotation_deg = 20.0;
  double max_translation_m = 0.3;
  double noise_sigma_m = 0.005;
  double occlusion_fraction = 0.0;
  ShapeFamily shape = ShapeFamily::box;

  void validate() const;
};

/// Row-major rotation matrix and translation (meters). Rotation is about the
/// part centre.
struct RigidMotion {
  std::array<double, 9> rotation{1, 0, 0, 0, 1, 0, 0, 0, 1};
  std::array<double, 3> translation{0, 0, 0};
};

/// Synthetic rigid multi-part scene. Each part gets its own rotation (about the
/// part centre) and translation; gt_flow is the exact rigid displacement of
/// every source point, occluded or not. The target holds the moved visible
/// points plus jitter, topped up with fresh surface samples to n2, shuffled.
ScenePair generate_scene(const SceneGenConfig& cfg, RngStream& rng);
/// Same, with caller-chosen motions (one per part) instead of random ones.
ScenePair generate_scene(const SceneGenConfig& cfg, RngStream& rng,
                         std::span<const RigidMotion> motions);

}  // namespace dsf::inline DSF_PREC
