#include "mono3d/synthetic.h"

#include <cmath>
#include <numbers>

#include "mono3d/error.h"
#include "mono3d/silhouette.h"

namespace mono3d::synthetic {
namespace {

double Uniform(Rng& rng, double lo, double hi) {
  return std::uniform_real_distribution<double>(lo, hi)(rng);
}

}  // namespace

CameraIntrinsics KittiIntrinsics() { return {721.5377, 721.5377, 609.5593, 172.854}; }

CameraIntrinsics LabelingIntrinsics(int width, int height) {
  const double f = 0.9 * width;
  return {f, f, 0.5 * width, 0.5 * height};
}

KeypointScene GenerateKeypointScene(Rng& rng, const KeypointSceneOptions& options) {
  if (options.num_keypoints < 2) {
    throw Error(ErrorCode::kTooFewKeypoints, "scene needs at least 2 keypoints");
  }
  KeypointScene scene;
  scene.intrinsics = KittiIntrinsics();
  scene.dims = {Uniform(rng, 3.2, 4.8), Uniform(rng, 1.5, 1.9), Uniform(rng, 1.35, 1.8)};
  scene.pose.yaw = Uniform(rng, -std::numbers::pi, std::numbers::pi);
  const double tz = Uniform(rng, options.min_depth, options.max_depth);
  scene.pose.t = Vec3(Uniform(rng, -0.5, 0.5) * tz, Uniform(rng, 0.8, 2.0), tz);

  const Vec3 half = 0.5 * scene.dims.AxisExtents();
  for (int i = 0; i < options.num_keypoints; ++i) {
    KeypointPair kp;
    kp.p3d = Vec3(Uniform(rng, -half.x(), half.x()), Uniform(rng, -half.y(), half.y()),
                  Uniform(rng, -half.z(), half.z()));
    kp.p2d = Project(TransformObjectToCamera(kp.p3d, scene.pose), scene.intrinsics).pixel;
    scene.keypoints.push_back(kp);
  }
  return scene;
}

std::vector<Vec3> LabelingScene::Cloud() const {
  std::vector<Vec3> cloud = object_points;
  cloud.insert(cloud.end(), ground_points.begin(), ground_points.end());
  return cloud;
}

Observation LabelingScene::MakeObservation() const {
  Observation obs;
  obs.instance_mask = mask;
  obs.gt_box = truth_box;
  obs.points = object_points;
  return obs;
}

LabelingScene GenerateLabelingScene(const ShapeBasis& basis, Rng& rng,
                                    const LabelingSceneOptions& options) {
  LabelingScene scene;
  scene.intrinsics = LabelingIntrinsics(options.width, options.height);

  scene.s = ShapeCoeff(basis.num_components());
  for (int k = 0; k < basis.num_components(); ++k) {
    scene.s(k) = Uniform(rng, -options.coeff_range, options.coeff_range);
  }
  const TriangleMesh mesh = Deform(basis, scene.s);
  const MeshExtent extent = MeshDimensions(mesh.vertices);

  scene.pose.yaw = Uniform(rng, -std::numbers::pi, std::numbers::pi);
  const double tilt = options.ground_tilt_deg * std::numbers::pi / 180.0;
  const double tilt_dir = Uniform(rng, 0.0, 2.0 * std::numbers::pi);
  scene.pose.pitch = tilt * std::cos(tilt_dir);
  scene.pose.roll = tilt * std::sin(tilt_dir);
  const Mat3 r = scene.pose.Rotation();

  // Place the object so the ground below its center is camera_height down.
  const double tz = Uniform(rng, options.min_depth, options.max_depth);
  const Vec3 bottom_local(extent.center.x(), extent.max.y(), extent.center.z());
  const Vec3 bottom_offset = r * bottom_local;
  scene.pose.t = Vec3(Uniform(rng, -0.1, 0.1) * tz, options.camera_height - bottom_offset.y(),
                      tz - bottom_offset.z());
  scene.truth_box = FittedBox(basis, scene.s, scene.pose);
  scene.mask = RenderSilhouette(mesh, scene.pose, scene.intrinsics, options.width,
                                options.height, 0.0);

  // Camera-facing faces, sampled by area.
  std::vector<Vec3> posed;
  posed.reserve(mesh.vertices.size());
  for (const Vec3& v : mesh.vertices) posed.push_back(r * v + scene.pose.t);
  std::vector<double> areas;
  std::vector<int> visible;
  for (size_t f = 0; f < mesh.faces.size(); ++f) {
    const Vec3& a = posed[static_cast<size_t>(mesh.faces[f][0])];
    const Vec3& b = posed[static_cast<size_t>(mesh.faces[f][1])];
    const Vec3& c = posed[static_cast<size_t>(mesh.faces[f][2])];
    const Vec3 n = (b - a).cross(c - a);
    if (n.dot((a + b + c) / 3.0) >= 0.0) continue;
    visible.push_back(static_cast<int>(f));
    areas.push_back(0.5 * n.norm());
  }
  std::normal_distribution<double> noise(0.0, options.point_noise);
  if (!visible.empty()) {
    std::discrete_distribution<int> pick_face(areas.begin(), areas.end());
    for (int i = 0; i < options.num_points; ++i) {
      const auto& face = mesh.faces[static_cast<size_t>(visible[static_cast<size_t>(pick_face(rng))])];
      double u = Uniform(rng, 0.0, 1.0);
      double v = Uniform(rng, 0.0, 1.0);
      if (u + v > 1.0) {
        u = 1.0 - u;
        v = 1.0 - v;
      }
      const Vec3& a = posed[static_cast<size_t>(face[0])];
      const Vec3& b = posed[static_cast<size_t>(face[1])];
      const Vec3& c = posed[static_cast<size_t>(face[2])];
      const Vec3 p = a + u * (b - a) + v * (c - a);
      scene.object_points.push_back(p + Vec3(noise(rng), noise(rng), noise(rng)));
    }
  }

  // Ground plane patch around the footprint (outside it).
  const Vec3 ground_origin = r * bottom_local + scene.pose.t;
  const Vec3 e_len = r.col(0);
  const Vec3 e_wid = r.col(2);
  const Vec3 up = -r.col(1);
  const double half_l = 0.5 * extent.dims.l;
  const double half_w = 0.5 * extent.dims.w;
  int placed = 0;
  while (placed < options.num_ground_points) {
    const double a = Uniform(rng, -half_l - 1.5, half_l + 1.5);
    const double b = Uniform(rng, -half_w - 1.5, half_w + 1.5);
    if (std::abs(a) < half_l && std::abs(b) < half_w) continue;
    scene.ground_points.push_back(ground_origin + a * e_len + b * e_wid + noise(rng) * up);
    ++placed;
  }
  return scene;
}

}  // namespace mono3d::synthetic
