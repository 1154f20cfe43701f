#include "dsf/scene_gen.hpp"

#include <array>
#include <cmath>
#include <numbers>
#include <numeric>

namespace dsf::inline DSF_PREC {

namespace {

using Vec3 = std::array<double, 3>;
using Mat3 = std::array<double, 9>;

Vec3 apply(const Mat3& r, const Vec3& v) {
  return {r[0] * v[0] + r[1] * v[1] + r[2] * v[2], r[3] * v[0] + r[4] * v[1] + r[5] * v[2],
          r[6] * v[0] + r[7] * v[1] + r[8] * v[2]};
}

Vec3 random_unit(RngStream& rng) {
  for (;;) {
    Vec3 v{rng.normal(), rng.normal(), rng.normal()};
    const double n = std::sqrt(v[0] * v[0] + v[1] * v[1] + v[2] * v[2]);
    if (n > 1e-9) return {v[0] / n, v[1] / n, v[2] / n};
  }
}

Mat3 axis_angle(const Vec3& a, double angle) {
  const double c = std::cos(angle), s = std::sin(angle), t = 1.0 - c;
  return {t * a[0] * a[0] + c,        t * a[0] * a[1] - s * a[2], t * a[0] * a[2] + s * a[1],
          t * a[0] * a[1] + s * a[2], t * a[1] * a[1] + c,        t * a[1] * a[2] - s * a[0],
          t * a[0] * a[2] - s * a[1], t * a[1] * a[2] + s * a[0], t * a[2] * a[2] + c};
}

struct Part {
  ShapeFamily family;
  Vec3 size;
  Mat3 orientation;
  Vec3 center;

  Vec3 sample(RngStream& rng) const {
    Vec3 local{};
    switch (family) {
      case ShapeFamily::sphere: {
        const Vec3 u = random_unit(rng);
        local = {u[0] * size[0], u[1] * size[0], u[2] * size[0]};
        break;
      }
      case ShapeFamily::plane:
        local = {rng.uniform(-0.5, 0.5) * size[0], rng.uniform(-0.5, 0.5) * size[1], 0.0};
        break;
      case ShapeFamily::box:
      case ShapeFamily::mixed: {
        const double ax = size[1] * size[2], ay = size[0] * size[2], az = size[0] * size[1];
        const double u = rng.uniform() * (ax + ay + az);
        const double sign = rng.uniform() < 0.5 ? -0.5 : 0.5;
        const double a = rng.uniform(-0.5, 0.5), b = rng.uniform(-0.5, 0.5);
        if (u < ax) {
          local = {sign * size[0], a * size[1], b * size[2]};
        } else if (u < ax + ay) {
          local = {a * size[0], sign * size[1], b * size[2]};
        } else {
          local = {a * size[0], b * size[1], sign * size[2]};
        }
        break;
      }
    }
    const Vec3 w = apply(orientation, local);
    return {w[0] + center[0], w[1] + center[1], w[2] + center[2]};
  }
};

Part make_part(ShapeFamily family, std::size_t n_parts, RngStream& rng) {
  if (family == ShapeFamily::mixed) {
    constexpr ShapeFamily kinds[] = {ShapeFamily::box, ShapeFamily::sphere, ShapeFamily::plane};
    family = kinds[rng.uniform_index(3)];
  }
  Part p{family, {}, {}, {}};
  switch (family) {
    case ShapeFamily::sphere: {
      const double r = rng.uniform(0.3, 0.6);
      p.size = {r, r, r};
      break;
    }
    case ShapeFamily::plane:
      p.size = {rng.uniform(0.6, 1.2), rng.uniform(0.6, 1.2), 0.0};
      break;
    default:
      p.size = {rng.uniform(0.4, 1.0), rng.uniform(0.4, 1.0), rng.uniform(0.4, 1.0)};
      break;
  }
  p.orientation = axis_angle(random_unit(rng), rng.uniform(0.0, std::numbers::pi));
  const double spread = n_parts > 1 ? 1.0 : 0.0;
  p.center = {rng.uniform(-spread, spread), rng.uniform(-spread, spread),
              rng.uniform(-spread, spread)};
  return p;
}

}  // namespace

ShapeFamily parse_shape_family(const std::string& name) {
  if (name == "box") return ShapeFamily::box;
  if (name == "sphere") return ShapeFamily::sphere;
  if (name == "plane") return ShapeFamily::plane;
  if (name == "mixed") return ShapeFamily::mixed;
  throw std::invalid_argument("unknown shape family: " + name);
}

std::string to_string(ShapeFamily family) {
  switch (family) {
    case ShapeFamily::box: return "box";
    case ShapeFamily::sphere: return "sphere";
    case ShapeFamily::plane: return "plane";
    case ShapeFamily::mixed: return "mixed";
  }
  return "box";
}

void SceneGenConfig::validate() const {
  if (n1 < 1 || n2 < 1) throw std::invalid_argument("scene: point counts must be positive");
  if (n_parts < 1 || n_parts > n1) {
    throw std::invalid_argument("scene: n_parts must be in [1, n1]");
  }
  if (!(occlusion_fraction >= 0.0 && occlusion_fraction < 1.0)) {
    throw std::invalid_argument("scene: occlusion_fraction must be in [0, 1)");
  }
  if (max_rotation_deg < 0 || max_translation_m < 0 || noise_sigma_m < 0) {
    throw std::invalid_argument("scene: motion and noise bounds must be nonnegative");
  }
}

ScenePair generate_scene(const SceneGenConfig& cfg, RngStream& rng,
                         std::span<const RigidMotion> motions) {
  cfg.validate();
  if (!motions.empty() && motions.size() != cfg.n_parts) {
    throw std::invalid_argument("generate_scene: one motion per part required");
  }
  std::vector<Part> parts;
  std::vector<RigidMotion> motion(cfg.n_parts);
  for (std::size_t k = 0; k < cfg.n_parts; ++k) {
    parts.push_back(make_part(cfg.shape, cfg.n_parts, rng));
    if (motions.empty()) {
      const double angle =
          rng.uniform(-cfg.max_rotation_deg, cfg.max_rotation_deg) * std::numbers::pi / 180.0;
      motion[k].rotation = axis_angle(random_unit(rng), angle);
      const Vec3 dir = random_unit(rng);
      const double mag = rng.uniform(0.0, cfg.max_translation_m);
      motion[k].translation = {dir[0] * mag, dir[1] * mag, dir[2] * mag};
    } else {
      motion[k] = motions[k];
    }
  }

  // Displacement of a point on part k: (R - I)(p - c) + t, so a zero motion
  // yields an exactly zero flow.
  auto displacement = [&](std::size_t k, const Vec3& p) {
    const auto& r = motion[k].rotation;
    const Mat3 rm{r[0] - 1.0, r[1], r[2], r[3], r[4] - 1.0, r[5], r[6], r[7], r[8] - 1.0};
    const Vec3 rel{p[0] - parts[k].center[0], p[1] - parts[k].center[1],
                   p[2] - parts[k].center[2]};
    const Vec3 d = apply(rm, rel);
    const auto& t = motion[k].translation;
    return Vec3{d[0] + t[0], d[1] + t[1], d[2] + t[2]};
  };

  const std::size_t n1 = cfg.n1;
  ScenePair pair;
  pair.source.points = Array::matrix(n1, 3);
  pair.gt_flow.vectors = Array::matrix(n1, 3);
  std::vector<std::size_t> part_of(n1);
  for (std::size_t i = 0; i < n1; ++i) {
    const std::size_t k = i * cfg.n_parts / n1;
    part_of[i] = k;
    const Vec3 p = parts[k].sample(rng);
    const Vec3 f = displacement(k, p);
    for (int c = 0; c < 3; ++c) {
      pair.source.points(i, c) = static_cast<Real>(p[c]);
      pair.gt_flow.vectors(i, c) = static_cast<Real>(f[c]);
    }
  }

  // Occluded correspondences.
  pair.valid_mask.assign(n1, 1);
  const auto n_occ = static_cast<std::size_t>(std::llround(cfg.occlusion_fraction * n1));
  std::vector<std::size_t> order(n1);
  std::iota(order.begin(), order.end(), 0);
  for (std::size_t i = 0; i < n_occ; ++i) {
    std::swap(order[i], order[i + rng.uniform_index(n1 - i)]);
    pair.valid_mask[order[i]] = 0;
  }
  std::vector<std::size_t> visible;
  for (std::size_t i = 0; i < n1; ++i) {
    if (pair.valid_mask[i]) visible.push_back(i);
  }
  // A target smaller than the visible set drops further correspondences.
  while (visible.size() > cfg.n2) {
    const std::size_t j = rng.uniform_index(visible.size());
    pair.valid_mask[visible[j]] = 0;
    visible.erase(visible.begin() + static_cast<std::ptrdiff_t>(j));
  }

  pair.target.points = Array::matrix(cfg.n2, 3);
  std::size_t row = 0;
  for (auto i : visible) {
    for (int c = 0; c < 3; ++c) {
      pair.target.points(row, c) = pair.source.points(i, c) + pair.gt_flow.vectors(i, c);
    }
    ++row;
  }
  for (std::size_t pad = 0; row < cfg.n2; ++row, ++pad) {
    const std::size_t k = pad % cfg.n_parts;
    const Vec3 p = parts[k].sample(rng);
    const Vec3 f = displacement(k, p);
    for (int c = 0; c < 3; ++c) {
      pair.target.points(row, c) = static_cast<Real>(p[c]) + static_cast<Real>(f[c]);
    }
  }
  if (cfg.noise_sigma_m > 0) {
    for (auto& v : pair.target.points.values()) {
      v += static_cast<Real>(cfg.noise_sigma_m * rng.normal());
    }
  }
  for (std::size_t i = cfg.n2; i-- > 1;) {
    const std::size_t j = rng.uniform_index(i + 1);
    for (int c = 0; c < 3; ++c) std::swap(pair.target.points(i, c), pair.target.points(j, c));
  }
  pair.validate();
  return pair;
}

ScenePair generate_scene(const SceneGenConfig& cfg, RngStream& rng) {
  return generate_scene(cfg, rng, {});
}

}  // namespace dsf::inline DSF_PREC
