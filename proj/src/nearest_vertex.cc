#include "mono3d/nearest_vertex.h"

#include <algorithm>
#include <limits>

namespace mono3d {
namespace {
constexpr int kLeafSize = 8;
}  // namespace

NearestVertexIndex::NearestVertexIndex(std::span<const Vec3> points)
    : points_(points.begin(), points.end()), order_(points.size()) {
  for (size_t i = 0; i < order_.size(); ++i) order_[i] = static_cast<int>(i);
  if (!points_.empty()) {
    nodes_.reserve(2 * points_.size() / kLeafSize + 2);
    Build(0, static_cast<int>(points_.size()));
  }
}

int NearestVertexIndex::Build(int begin, int end) {
  const int id = static_cast<int>(nodes_.size());
  nodes_.push_back(Node{begin, end});
  if (end - begin <= kLeafSize) return id;

  Vec3 lo = points_[static_cast<size_t>(order_[static_cast<size_t>(begin)])];
  Vec3 hi = lo;
  for (int i = begin; i < end; ++i) {
    const Vec3& p = points_[static_cast<size_t>(order_[static_cast<size_t>(i)])];
    lo = lo.cwiseMin(p);
    hi = hi.cwiseMax(p);
  }
  int axis = 0;
  (hi - lo).maxCoeff(&axis);
  const int mid = begin + (end - begin) / 2;
  std::nth_element(order_.begin() + begin, order_.begin() + mid, order_.begin() + end,
                   [&](int a, int b) {
                     return points_[static_cast<size_t>(a)](axis) <
                            points_[static_cast<size_t>(b)](axis);
                   });
  const double split = points_[static_cast<size_t>(order_[static_cast<size_t>(mid)])](axis);
  const int left = Build(begin, mid);
  const int right = Build(mid, end);
  Node& node = nodes_[static_cast<size_t>(id)];
  node.axis = axis;
  node.split = split;
  node.left = left;
  node.right = right;
  return id;
}

void NearestVertexIndex::Search(int node_id, const Vec3& q, Match* best) const {
  const Node& node = nodes_[static_cast<size_t>(node_id)];
  if (node.axis < 0) {
    for (int i = node.begin; i < node.end; ++i) {
      const int idx = order_[static_cast<size_t>(i)];
      const double d2 = (points_[static_cast<size_t>(idx)] - q).squaredNorm();
      if (d2 < best->squared_distance ||
          (d2 == best->squared_distance && idx < best->index)) {
        best->squared_distance = d2;
        best->index = idx;
      }
    }
    return;
  }
  // Left subtree holds coordinates <= split, right holds >= split.
  const double diff = q(node.axis) - node.split;
  const int near = diff <= 0.0 ? node.left : node.right;
  const int far = diff <= 0.0 ? node.right : node.left;
  Search(near, q, best);
  if (diff * diff <= best->squared_distance) Search(far, q, best);
}

NearestVertexIndex::Match NearestVertexIndex::Nearest(const Vec3& query) const {
  Match best;
  best.squared_distance = std::numeric_limits<double>::infinity();
  if (!nodes_.empty()) Search(0, query, &best);
  return best;
}

}  // namespace mono3d
