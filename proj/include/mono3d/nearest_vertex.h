#pragma once

#include <span>
#include <vector>

#include "mono3d/geometry.h"

namespace mono3d {

// Static k-d tree over a point set for exact nearest-neighbor queries.
// Among equidistant points the lowest index wins, matching a linear scan.
class NearestVertexIndex {
 public:
  struct Match {
    int index = -1;
    double squared_distance = 0.0;
  };

  explicit NearestVertexIndex(std::span<const Vec3> points);

  Match Nearest(const Vec3& query) const;
  size_t size() const { return points_.size(); }

 private:
  struct Node {
    int begin = 0;
    int end = 0;
    int axis = -1;  // -1 for leaves
    double split = 0.0;
    int left = -1;
    int right = -1;
  };

  int Build(int begin, int end);
  void Search(int node, const Vec3& q, Match* best) const;

  std::vector<Vec3> points_;
  std::vector<int> order_;
  std::vector<Node> nodes_;
};

}  // namespace mono3d
