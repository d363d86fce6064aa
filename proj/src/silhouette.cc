#include "mono3d/silhouette.h"

#include <algorithm>
#include <cmath>
#include <limits>
#include <string>
#include <tuple>

#include "mono3d/error.h"

namespace mono3d {
namespace {

// Coverage grid cell size and contour subdivision, in pixels.
constexpr int kGridCell = 8;
constexpr double kContourPiece = 0.5;
constexpr double kOutsideProbe = 1e-3;

double Cross(const Vec2& a, const Vec2& b) { return a.x() * b.y() - a.y() * b.x(); }

double PointSegmentDistanceSquared(double px, double py, const Vec2& a, const Vec2& b) {
  const double abx = b.x() - a.x();
  const double aby = b.y() - a.y();
  const double apx = px - a.x();
  const double apy = py - a.y();
  const double len2 = abx * abx + aby * aby;
  double t = 0.0;
  if (len2 > 0.0) t = std::clamp((apx * abx + apy * aby) / len2, 0.0, 1.0);
  const double dx = apx - t * abx;
  const double dy = apy - t * aby;
  return dx * dx + dy * dy;
}

double SmoothStep01(double t) {
  t = std::clamp(t, 0.0, 1.0);
  return t * t * (3.0 - 2.0 * t);
}

void CheckSameSize(const MaskImage& a, const MaskImage& b) {
  if (a.width() != b.width() || a.height() != b.height()) {
    throw Error(ErrorCode::kSizeMismatch,
                std::to_string(a.width()) + "x" + std::to_string(a.height()) + " vs " +
                    std::to_string(b.width()) + "x" + std::to_string(b.height()));
  }
}

}  // namespace

MaskImage::MaskImage(int width, int height, double fill)
    : width_(width), height_(height) {
  if (width <= 0 || height <= 0) {
    throw Error(ErrorCode::kNonPositiveDimension, "mask dimensions must be positive");
  }
  values_.assign(static_cast<size_t>(width) * static_cast<size_t>(height), fill);
}

int MaskImage::CountOccupied() const {
  return static_cast<int>(
      std::count_if(values_.begin(), values_.end(), [](double v) { return v >= 0.5; }));
}

SilhouetteRenderer::SilhouetteRenderer(std::span<const std::array<int, 3>> faces)
    : faces_(faces.begin(), faces.end()) {
  // (min vertex, max vertex, face) triples sorted to group shared edges.
  struct HalfEdge {
    int a, b, face;
  };
  std::vector<HalfEdge> half;
  half.reserve(faces_.size() * 3);
  for (size_t f = 0; f < faces_.size(); ++f) {
    for (int e = 0; e < 3; ++e) {
      const int u = faces_[f][static_cast<size_t>(e)];
      const int v = faces_[f][static_cast<size_t>((e + 1) % 3)];
      if (u == v) continue;
      half.push_back({std::min(u, v), std::max(u, v), static_cast<int>(f)});
    }
  }
  std::sort(half.begin(), half.end(), [](const HalfEdge& x, const HalfEdge& y) {
    return std::tie(x.a, x.b, x.face) < std::tie(y.a, y.b, y.face);
  });
  for (size_t i = 0; i < half.size();) {
    size_t j = i;
    Edge edge{half[i].a, half[i].b, static_cast<int>(edge_faces_.size()), 0};
    while (j < half.size() && half[j].a == half[i].a && half[j].b == half[i].b) {
      edge_faces_.push_back(half[j].face);
      ++edge.count;
      ++j;
    }
    edges_.push_back(edge);
    i = j;
  }
}

MaskImage SilhouetteRenderer::Render(std::span<const Vec3> vertices, const Pose& pose,
                                     const CameraIntrinsics& k, int width, int height,
                                     double softness) const {
  if (vertices.empty()) throw Error(ErrorCode::kEmptyMesh, "mesh has no vertices");
  if (!(softness >= 0.0) || !std::isfinite(softness)) {
    throw Error(ErrorCode::kNonFiniteInput, "softness must be finite and >= 0");
  }
  k.Validate();
  MaskImage mask(width, height, 0.0);

  const Mat3 r = pose.Rotation();
  const size_t nv = vertices.size();
  std::vector<Vec2> pix(nv);
  std::vector<char> valid(nv, 0);
  bool any_valid = false;
  for (size_t i = 0; i < nv; ++i) {
    const Vec3 pc = r * vertices[i] + pose.t;
    if (pc.z() > kDepthEpsilon) {
      pix[i] = Vec2(k.fx * pc.x() / pc.z() + k.cx, k.fy * pc.y() / pc.z() + k.cy);
      valid[i] = 1;
      any_valid = true;
    }
  }
  if (!any_valid) {
    throw Error(ErrorCode::kAllVerticesClipped, "no mesh vertex is in front of the camera");
  }

  const int nf = static_cast<int>(faces_.size());
  std::vector<char> kept(static_cast<size_t>(nf), 0);
  std::vector<char> covered(static_cast<size_t>(width) * static_cast<size_t>(height), 0);
  for (int f = 0; f < nf; ++f) {
    const auto& face = faces_[static_cast<size_t>(f)];
    if (face[0] < 0 || face[1] < 0 || face[2] < 0 ||
        static_cast<size_t>(std::max({face[0], face[1], face[2]})) >= nv) {
      throw Error(ErrorCode::kIndexOutOfRange, "face references a missing vertex");
    }
    if (!valid[static_cast<size_t>(face[0])] || !valid[static_cast<size_t>(face[1])] ||
        !valid[static_cast<size_t>(face[2])]) {
      continue;
    }
    kept[static_cast<size_t>(f)] = 1;
    const Vec2& p0 = pix[static_cast<size_t>(face[0])];
    const Vec2& p1 = pix[static_cast<size_t>(face[1])];
    const Vec2& p2 = pix[static_cast<size_t>(face[2])];
    const double area2 = Cross(p1 - p0, p2 - p0);
    if (std::abs(area2) <= 1e-12) continue;
    const double orient = area2 > 0.0 ? 1.0 : -1.0;

    const int x0 = std::max(0, static_cast<int>(std::ceil(std::min({p0.x(), p1.x(), p2.x()}))));
    const int x1 =
        std::min(width - 1, static_cast<int>(std::floor(std::max({p0.x(), p1.x(), p2.x()}))));
    const int y0 = std::max(0, static_cast<int>(std::ceil(std::min({p0.y(), p1.y(), p2.y()}))));
    const int y1 =
        std::min(height - 1, static_cast<int>(std::floor(std::max({p0.y(), p1.y(), p2.y()}))));
    for (int y = y0; y <= y1; ++y) {
      for (int x = x0; x <= x1; ++x) {
        const Vec2 p(x, y);
        if (orient * Cross(p1 - p0, p - p0) >= 0.0 && orient * Cross(p2 - p1, p - p1) >= 0.0 &&
            orient * Cross(p0 - p2, p - p2) >= 0.0) {
          covered[static_cast<size_t>(y) * static_cast<size_t>(width) +
                  static_cast<size_t>(x)] = 1;
        }
      }
    }
  }

  std::span<double> out = mask.values();
  if (softness == 0.0) {
    for (size_t i = 0; i < out.size(); ++i) out[i] = covered[i] ? 1.0 : 0.0;
    return mask;
  }

  // Continuous coverage queries go through a coarse grid of face buckets
  // spanning the image plus the blending band.
  const double band = 3.0 * softness;
  const double band2 = band * band;
  const int margin = static_cast<int>(std::ceil(band)) + 1;
  const double gx0 = -margin;
  const double gy0 = -margin;
  const int gw = (width + 2 * margin + kGridCell - 1) / kGridCell;
  const int gh = (height + 2 * margin + kGridCell - 1) / kGridCell;
  std::vector<std::vector<int>> grid(static_cast<size_t>(gw) * static_cast<size_t>(gh));
  for (int f = 0; f < nf; ++f) {
    if (!kept[static_cast<size_t>(f)]) continue;
    const auto& face = faces_[static_cast<size_t>(f)];
    const Vec2& p0 = pix[static_cast<size_t>(face[0])];
    const Vec2& p1 = pix[static_cast<size_t>(face[1])];
    const Vec2& p2 = pix[static_cast<size_t>(face[2])];
    const double lo_x = std::min({p0.x(), p1.x(), p2.x()}) - gx0;
    const double hi_x = std::max({p0.x(), p1.x(), p2.x()}) - gx0;
    const double lo_y = std::min({p0.y(), p1.y(), p2.y()}) - gy0;
    const double hi_y = std::max({p0.y(), p1.y(), p2.y()}) - gy0;
    if (hi_x < 0 || hi_y < 0 || lo_x >= gw * kGridCell || lo_y >= gh * kGridCell) continue;
    const int cx0 = std::max(0, static_cast<int>(lo_x / kGridCell));
    const int cx1 = std::min(gw - 1, static_cast<int>(hi_x / kGridCell));
    const int cy0 = std::max(0, static_cast<int>(lo_y / kGridCell));
    const int cy1 = std::min(gh - 1, static_cast<int>(hi_y / kGridCell));
    for (int cy = cy0; cy <= cy1; ++cy) {
      for (int cx = cx0; cx <= cx1; ++cx) {
        grid[static_cast<size_t>(cy) * static_cast<size_t>(gw) + static_cast<size_t>(cx)]
            .push_back(f);
      }
    }
  }
  auto covered_at = [&](const Vec2& q) {
    const double lx = q.x() - gx0;
    const double ly = q.y() - gy0;
    if (lx < 0 || ly < 0 || lx >= gw * kGridCell || ly >= gh * kGridCell) return false;
    const auto& cell = grid[static_cast<size_t>(ly / kGridCell) * static_cast<size_t>(gw) +
                            static_cast<size_t>(lx / kGridCell)];
    for (int f : cell) {
      const auto& face = faces_[static_cast<size_t>(f)];
      const Vec2& p0 = pix[static_cast<size_t>(face[0])];
      const Vec2& p1 = pix[static_cast<size_t>(face[1])];
      const Vec2& p2 = pix[static_cast<size_t>(face[2])];
      const double c0 = Cross(p1 - p0, q - p0);
      const double c1 = Cross(p2 - p1, q - p1);
      const double c2 = Cross(p0 - p2, q - p2);
      if ((c0 > 0 && c1 > 0 && c2 > 0) || (c0 < 0 && c1 < 0 && c2 < 0)) return true;
    }
    return false;
  };

  // Contour candidates are edges with a single kept face, or whose two kept
  // faces fold onto the same side of the projected edge. Pieces of them
  // whose outer side is covered by other faces lie inside the silhouette and
  // are skipped, leaving the outline.
  std::vector<double> dist2(out.size(), std::numeric_limits<double>::infinity());
  auto splat = [&](const Vec2& a, const Vec2& b) {
    const int x0 = std::max(0, static_cast<int>(std::ceil(std::min(a.x(), b.x()) - band)));
    const int x1 = std::min(width - 1, static_cast<int>(std::floor(std::max(a.x(), b.x()) + band)));
    const int y0 = std::max(0, static_cast<int>(std::ceil(std::min(a.y(), b.y()) - band)));
    const int y1 =
        std::min(height - 1, static_cast<int>(std::floor(std::max(a.y(), b.y()) + band)));
    for (int y = y0; y <= y1; ++y) {
      for (int x = x0; x <= x1; ++x) {
        const size_t idx = static_cast<size_t>(y) * static_cast<size_t>(width) +
                           static_cast<size_t>(x);
        const double d2 = PointSegmentDistanceSquared(x, y, a, b);
        if (d2 < dist2[idx]) dist2[idx] = d2;
      }
    }
  };
  for (const Edge& edge : edges_) {
    int kept_count = 0;
    int thirds[2] = {-1, -1};
    for (int i = 0; i < edge.count; ++i) {
      const int f = edge_faces_[static_cast<size_t>(edge.first + i)];
      if (!kept[static_cast<size_t>(f)]) continue;
      if (kept_count < 2) {
        const auto& face = faces_[static_cast<size_t>(f)];
        for (int v : face) {
          if (v != edge.a && v != edge.b) thirds[kept_count] = v;
        }
      }
      ++kept_count;
    }
    if (kept_count == 0 || kept_count > 2 || thirds[0] < 0) continue;
    const Vec2& a = pix[static_cast<size_t>(edge.a)];
    const Vec2& b = pix[static_cast<size_t>(edge.b)];
    const Vec2 ab = b - a;
    const double s0 = Cross(ab, pix[static_cast<size_t>(thirds[0])] - a);
    if (kept_count == 2) {
      if (thirds[1] < 0) continue;
      const double s1 = Cross(ab, pix[static_cast<size_t>(thirds[1])] - a);
      if (s0 * s1 < 0.0) continue;  // faces on opposite sides: interior edge
    }
    const double len = ab.norm();
    if (len == 0.0 || s0 == 0.0) continue;
    // Unit normal pointing away from the adjacent faces.
    const Vec2 outward = (s0 > 0.0 ? 1.0 : -1.0) * Vec2(ab.y(), -ab.x()) / len;
    const int pieces = std::max(1, static_cast<int>(std::ceil(len / kContourPiece)));
    int run_start = -1;
    for (int i = 0; i <= pieces; ++i) {
      bool exposed = false;
      if (i < pieces) {
        const Vec2 mid = a + ((i + 0.5) / pieces) * ab;
        exposed = !covered_at(mid + kOutsideProbe * outward);
      }
      if (exposed && run_start < 0) run_start = i;
      if (!exposed && run_start >= 0) {
        splat(a + (static_cast<double>(run_start) / pieces) * ab,
              a + (static_cast<double>(i) / pieces) * ab);
        run_start = -1;
      }
    }
  }

  for (size_t i = 0; i < out.size(); ++i) {
    const double hard = covered[i] ? 1.0 : 0.0;
    if (dist2[i] >= band2) {
      out[i] = hard;
    } else {
      const double d = std::sqrt(dist2[i]);
      const double signed_d = covered[i] ? d : -d;
      out[i] = SmoothStep01((signed_d + band) / (2.0 * band));
    }
  }
  return mask;
}

MaskImage RenderSilhouette(const TriangleMesh& mesh, const Pose& pose,
                           const CameraIntrinsics& k, int width, int height,
                           double softness) {
  if (mesh.vertices.empty()) throw Error(ErrorCode::kEmptyMesh, "mesh has no vertices");
  const SilhouetteRenderer renderer(mesh.faces);
  return renderer.Render(mesh.vertices, pose, k, width, height, softness);
}

double MaskL1(const MaskImage& rendered, const MaskImage& target) {
  CheckSameSize(rendered, target);
  const auto a = rendered.values();
  const auto b = target.values();
  double sum = 0.0;
  for (size_t i = 0; i < a.size(); ++i) sum += std::abs(a[i] - b[i]);
  return sum;
}

double MaskIou(const MaskImage& a, const MaskImage& b) {
  CheckSameSize(a, b);
  const auto va = a.values();
  const auto vb = b.values();
  long long inter = 0;
  long long uni = 0;
  for (size_t i = 0; i < va.size(); ++i) {
    const bool ia = va[i] >= 0.5;
    const bool ib = vb[i] >= 0.5;
    inter += (ia && ib) ? 1 : 0;
    uni += (ia || ib) ? 1 : 0;
  }
  if (uni == 0) return 1.0;
  return static_cast<double>(inter) / static_cast<double>(uni);
}

}  // namespace mono3d
