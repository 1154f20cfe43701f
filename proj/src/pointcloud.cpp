#include "dsf/pointcloud.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <numeric>
#include <string>

namespace dsf::inline DSF_PREC {

void PointCloud::validate(const char* field) const {
  if (points.rank() != 2 || points.cols() != 3) {
    throw ValidationError(std::string(field) + ": expected [N x 3], got " +
                          shape_str(points.shape()));
  }
  if (points.rows() == 0) throw ValidationError(std::string(field) + ": empty point cloud");
  if (!points.all_finite()) throw ValidationError(std::string(field) + ": non-finite coordinate");
}

void ScenePair::validate() const {
  source.validate("source");
  target.validate("target");
  const std::size_t n1 = source.size();
  if (gt_flow.vectors.shape() != Shape{n1, 3}) {
    throw ValidationError("gt_flow: expected " + shape_str({n1, 3}) + ", got " +
                          shape_str(gt_flow.vectors.shape()));
  }
  if (!gt_flow.vectors.all_finite()) throw ValidationError("gt_flow: non-finite value");
  if (valid_mask.size() != n1) {
    throw ValidationError("valid_mask: expected " + std::to_string(n1) + " entries, got " +
                          std::to_string(valid_mask.size()));
  }
}

std::vector<std::size_t> farthest_point_sampling(const PointCloud& pc, std::size_t m,
                                                 RngStream& rng) {
  if (pc.size() == 0) throw std::invalid_argument("farthest_point_sampling: empty cloud");
  return farthest_point_sampling(pc, m, static_cast<std::size_t>(rng.uniform_index(pc.size())));
}

std::vector<std::size_t> farthest_point_sampling(const PointCloud& pc, std::size_t m,
                                                 std::size_t start) {
  const std::size_t n = pc.size();
  if (m < 1 || m > n) {
    throw std::invalid_argument("farthest_point_sampling: cannot pick " + std::to_string(m) +
                                " of " + std::to_string(n) + " points");
  }
  if (start >= n) throw std::out_of_range("farthest_point_sampling: start index out of range");
  const Real* p = pc.points.data();
  std::vector<double> dist(n, std::numeric_limits<double>::infinity());
  std::vector<std::size_t> picked;
  picked.reserve(m);
  std::size_t last = start;
  for (;;) {
    picked.push_back(last);
    dist[last] = -1.0;
    if (picked.size() == m) break;
    const double lx = p[3 * last], ly = p[3 * last + 1], lz = p[3 * last + 2];
    std::size_t best = n;
    double best_d = -1.0;
    for (std::size_t i = 0; i < n; ++i) {
      if (dist[i] < 0) continue;
      const double dx = p[3 * i] - lx, dy = p[3 * i + 1] - ly, dz = p[3 * i + 2] - lz;
      const double d = dx * dx + dy * dy + dz * dz;
      if (d < dist[i]) dist[i] = d;
      if (dist[i] > best_d) {
        best_d = dist[i];
        best = i;
      }
    }
    last = best;
  }
  return picked;
}

NeighborIndex knn(const Array& query, const Array& base, std::size_t k) {
  if (query.rank() != 2 || base.rank() != 2 || query.cols() != base.cols()) {
    throw ShapeError("knn: query " + shape_str(query.shape()) + " and base " +
                     shape_str(base.shape()) + " must be matrices of equal width");
  }
  const std::size_t nq = query.rows(), nb = base.rows(), d = query.cols();
  if (k < 1 || k > nb) {
    throw std::invalid_argument("knn: k = " + std::to_string(k) + " with " + std::to_string(nb) +
                                " base points");
  }
  NeighborIndex out{nq, k, std::vector<std::uint32_t>(nq * k)};
  const Real* Q = query.data();
  const Real* B = base.data();
#pragma omp parallel
  {
    std::vector<std::pair<double, std::uint32_t>> cand(nb);
#pragma omp for schedule(static)
    for (std::size_t i = 0; i < nq; ++i) {
      const Real* q = Q + i * d;
      for (std::size_t j = 0; j < nb; ++j) {
        const Real* b = B + j * d;
        double s = 0.0;
        for (std::size_t c = 0; c < d; ++c) {
          const double diff = static_cast<double>(q[c]) - b[c];
          s += diff * diff;
        }
        cand[j] = {s, static_cast<std::uint32_t>(j)};
      }
      std::partial_sort(cand.begin(), cand.begin() + static_cast<std::ptrdiff_t>(k), cand.end());
      for (std::size_t j = 0; j < k; ++j) out.index[i * k + j] = cand[j].second;
    }
  }
  return out;
}

namespace {

std::vector<std::size_t> pick(const PointCloud& pc, std::size_t m, Subsampling mode,
                              RngStream& rng) {
  if (m > pc.size()) {
    throw std::invalid_argument("subsample: requested " + std::to_string(m) + " of " +
                                std::to_string(pc.size()) + " points");
  }
  if (mode == Subsampling::fps) return farthest_point_sampling(pc, m, rng);
  std::vector<std::size_t> idx(pc.size());
  std::iota(idx.begin(), idx.end(), 0);
  for (std::size_t i = 0; i < m; ++i) {
    std::swap(idx[i], idx[i + rng.uniform_index(idx.size() - i)]);
  }
  idx.resize(m);
  return idx;
}

Array take_rows(const Array& a, const std::vector<std::size_t>& idx) {
  const std::size_t c = a.cols();
  Array out = Array::matrix(idx.size(), c);
  for (std::size_t r = 0; r < idx.size(); ++r) {
    std::copy_n(a.data() + idx[r] * c, c, out.data() + r * c);
  }
  return out;
}

}  // namespace

ScenePair subsample(const ScenePair& pair, std::size_t n_source, std::size_t n_target,
                    Subsampling mode, RngStream& rng) {
  const auto si = pick(pair.source, n_source, mode, rng);
  const auto ti = pick(pair.target, n_target, mode, rng);
  ScenePair out;
  out.source.points = take_rows(pair.source.points, si);
  out.target.points = take_rows(pair.target.points, ti);
  out.gt_flow.vectors = take_rows(pair.gt_flow.vectors, si);
  out.valid_mask.reserve(si.size());
  for (auto i : si) out.valid_mask.push_back(pair.valid_mask[i]);
  return out;
}

Array warp(const PointCloud& source, const Array& flow) {
  if (flow.shape() != source.points.shape()) {
    throw ShapeError("warp: flow " + shape_str(flow.shape()) + " vs source " +
                     shape_str(source.points.shape()));
  }
  Array out = source.points;
  for (std::size_t i = 0; i < out.size(); ++i) out[i] += flow[i];
  return out;
}

}  // namespace dsf::inline DSF_PREC
