#include "mono3d/autolabel.h"

#include <algorithm>
#include <cmath>
#include <limits>
#include <numbers>
#include <random>
#include <string>

#include "mono3d/error.h"
#include "mono3d/nearest_vertex.h"

namespace mono3d {
namespace {

void Require(bool ok, const char* what) {
  if (!ok) throw Error(ErrorCode::kNonFiniteInput, std::string("invalid autolabel config: ") + what);
}

Mat3 YawDerivative(double a) {
  const double c = std::cos(a), s = std::sin(a);
  Mat3 m;
  m << -s, 0.0, c, 0.0, 0.0, 0.0, -c, 0.0, -s;
  return m;
}

Mat3 PitchDerivative(double a) {
  const double c = std::cos(a), s = std::sin(a);
  Mat3 m;
  m << 0.0, 0.0, 0.0, 0.0, -s, -c, 0.0, c, -s;
  return m;
}

Mat3 RollDerivative(double a) {
  const double c = std::cos(a), s = std::sin(a);
  Mat3 m;
  m << -s, -c, 0.0, c, -s, 0.0, 0.0, 0.0, 0.0;
  return m;
}

std::vector<Vec3> PoseVertices(std::span<const Vec3> vertices, const Pose& pose) {
  const Mat3 r = pose.Rotation();
  std::vector<Vec3> posed;
  posed.reserve(vertices.size());
  for (const Vec3& v : vertices) posed.push_back(r * v + pose.t);
  return posed;
}

// Parameter vector layout: [s_0 .. s_{r-1}, yaw, pitch, roll, tx, ty, tz].
struct ParamLayout {
  int r = 0;
  int yaw() const { return r; }
  int pitch() const { return r + 1; }
  int roll() const { return r + 2; }
  int tx() const { return r + 3; }
  int size() const { return r + 6; }
};

Eigen::VectorXd PackParams(const ParamLayout& layout, const ShapeCoeff& s, const Pose& pose) {
  Eigen::VectorXd theta(layout.size());
  theta.head(layout.r) = s;
  theta(layout.yaw()) = pose.yaw;
  theta(layout.pitch()) = pose.pitch;
  theta(layout.roll()) = pose.roll;
  theta.segment<3>(layout.tx()) = pose.t;
  return theta;
}

void UnpackParams(const ParamLayout& layout, const Eigen::VectorXd& theta, ShapeCoeff* s,
                  Pose* pose) {
  *s = theta.head(layout.r);
  pose->yaw = theta(layout.yaw());
  pose->pitch = theta(layout.pitch());
  pose->roll = theta(layout.roll());
  pose->t = theta.segment<3>(layout.tx());
}

// Evaluates the objective pieces for one observation, reusing the renderer
// topology and a nearest-vertex query per call.
class Objective {
 public:
  Objective(const ShapeBasis& basis, const Observation& obs, const CameraIntrinsics& k,
            const AutolabelConfig& cfg)
      : basis_(basis), obs_(obs), k_(k), cfg_(cfg), renderer_(basis.mean.faces) {}

  double MaskLoss(const ShapeCoeff& s, const Pose& pose, double softness) const {
    const std::vector<Vec3> vertices = DeformVertices(basis_, s);
    const MaskImage rendered =
        renderer_.Render(vertices, pose, k_, obs_.instance_mask.width(),
                         obs_.instance_mask.height(), softness);
    return MaskL1(rendered, obs_.instance_mask);
  }

  MaskImage HardMask(const ShapeCoeff& s, const Pose& pose) const {
    return renderer_.Render(DeformVertices(basis_, s), pose, k_, obs_.instance_mask.width(),
                            obs_.instance_mask.height(), 0.0);
  }

  LossTerms Evaluate(const ShapeCoeff& s, const Pose& pose) const {
    LossTerms terms;
    terms.l2d = MaskLoss(s, pose, cfg_.softness);
    terms.l3d = ChamferL3d(obs_.points, DeformVertices(basis_, s), pose);
    terms.total = cfg_.alpha * terms.l2d + cfg_.beta * terms.l3d;
    return terms;
  }

 private:
  const ShapeBasis& basis_;
  const Observation& obs_;
  const CameraIntrinsics& k_;
  const AutolabelConfig& cfg_;
  SilhouetteRenderer renderer_;
};

}  // namespace

void AutolabelConfig::Validate() const {
  Require(std::isfinite(alpha) && alpha >= 0.0, "alpha must be >= 0");
  Require(std::isfinite(beta) && beta >= 0.0, "beta must be >= 0");
  Require(alpha > 0.0 || beta > 0.0, "alpha and beta cannot both be zero");
  Require(std::isfinite(learning_rate) && learning_rate > 0.0, "learning_rate must be > 0");
  Require(adam_beta1 >= 0.0 && adam_beta1 < 1.0, "adam_beta1 must lie in [0, 1)");
  Require(adam_beta2 >= 0.0 && adam_beta2 < 1.0, "adam_beta2 must lie in [0, 1)");
  Require(adam_epsilon > 0.0, "adam_epsilon must be > 0");
  Require(shape_step_scale > 0.0 && angle_step_scale > 0.0 && translation_step_scale > 0.0,
          "step scales must be > 0");
  Require(max_steps >= 1, "max_steps must be >= 1");
  Require(s_clamp > 0.0, "s_clamp must be > 0");
  Require(convergence_window >= 1, "convergence_window must be >= 1");
  Require(convergence_tolerance >= 0.0, "convergence_tolerance must be >= 0");
  Require(fd_step_angle > 0.0 && fd_step_translation > 0.0 && fd_step_shape > 0.0,
          "finite-difference steps must be > 0");
  Require(std::isfinite(softness) && softness >= 0.0, "softness must be >= 0");
  Require(segment_margin >= 0.0, "segment_margin must be >= 0");
  Require(ransac_iterations >= 1, "ransac_iterations must be >= 1");
  Require(ransac_inlier_threshold > 0.0, "ransac_inlier_threshold must be > 0");
  Require(ransac_min_inlier_fraction >= 0.0 && ransac_min_inlier_fraction <= 1.0,
          "ransac_min_inlier_fraction must lie in [0, 1]");
  Require(ground_normal_max_angle_deg >= 0.0 && ground_normal_max_angle_deg <= 90.0,
          "ground_normal_max_angle_deg must lie in [0, 90]");
  Require(min_points >= 1, "min_points must be >= 1");
}

std::vector<Vec3> SegmentPointsInBox(std::span<const Vec3> cloud, const Box3D& box,
                                     double margin) {
  const Mat3 rt = RotationMatrixYaw(box.yaw).transpose();
  const Vec3 half = 0.5 * box.dims.AxisExtents() + Vec3::Constant(margin);
  std::vector<Vec3> inside;
  for (const Vec3& p : cloud) {
    const Vec3 local = rt * (p - box.center);
    if (std::abs(local.x()) <= half.x() && std::abs(local.y()) <= half.y() &&
        std::abs(local.z()) <= half.z()) {
      inside.push_back(p);
    }
  }
  return inside;
}

GroundRemoval RemoveGroundRansac(std::span<const Vec3> points, const AutolabelConfig& cfg,
                                 std::uint64_t seed) {
  const int n = static_cast<int>(points.size());
  if (n < 3) {
    throw Error(ErrorCode::kTooFewPoints,
                "ground removal needs at least 3 points, got " + std::to_string(n));
  }
  const double min_up = std::cos(cfg.ground_normal_max_angle_deg * std::numbers::pi / 180.0);
  std::mt19937_64 rng(seed);
  std::uniform_int_distribution<int> pick(0, n - 1);

  GroundRemoval result;
  int best_inliers = 0;
  for (int iter = 0; iter < cfg.ransac_iterations; ++iter) {
    const int i0 = pick(rng);
    int i1 = pick(rng);
    int i2 = pick(rng);
    if (i0 == i1 || i0 == i2 || i1 == i2) continue;
    const Vec3& a = points[static_cast<size_t>(i0)];
    Vec3 normal = (points[static_cast<size_t>(i1)] - a).cross(points[static_cast<size_t>(i2)] - a);
    const double norm = normal.norm();
    if (norm < 1e-9) continue;
    normal /= norm;
    if (normal.y() > 0.0) normal = -normal;
    if (-normal.y() < min_up) continue;  // not ground-like
    const double d = -normal.dot(a);
    int count = 0;
    for (const Vec3& p : points) {
      if (std::abs(normal.dot(p) + d) <= cfg.ransac_inlier_threshold) ++count;
    }
    if (count > best_inliers) {
      best_inliers = count;
      result.normal = normal;
      result.d = d;
    }
  }
  result.inliers = best_inliers;
  if (best_inliers == 0 ||
      best_inliers < cfg.ransac_min_inlier_fraction * static_cast<double>(n)) {
    result.points.assign(points.begin(), points.end());
    return result;
  }
  result.removed = true;
  for (const Vec3& p : points) {
    if (std::abs(result.normal.dot(p) + result.d) > cfg.ransac_inlier_threshold) {
      result.points.push_back(p);
    }
  }
  return result;
}

double ChamferL3d(std::span<const Vec3> points, std::span<const Vec3> vertices,
                  const Pose& pose) {
  if (points.empty() || vertices.empty()) {
    throw Error(ErrorCode::kEmptyInput, "chamfer loss needs points and mesh vertices");
  }
  const std::vector<Vec3> posed = PoseVertices(vertices, pose);
  const NearestVertexIndex index(posed);
  double sum = 0.0;
  for (const Vec3& p : points) {
    const auto match = index.Nearest(p);
    sum += (p - posed[static_cast<size_t>(match.index)]).norm();
  }
  return sum;
}

ChamferGradient ChamferL3dWithGradient(std::span<const Vec3> points, const ShapeBasis& basis,
                                       const ShapeCoeff& s, const Pose& pose) {
  const std::vector<Vec3> vertices = DeformVertices(basis, s);
  if (points.empty() || vertices.empty()) {
    throw Error(ErrorCode::kEmptyInput, "chamfer loss needs points and mesh vertices");
  }
  const Mat3 ry = RotationMatrixYaw(pose.yaw);
  const Mat3 rx = RotationMatrixPitch(pose.pitch);
  const Mat3 rz = RotationMatrixRoll(pose.roll);
  const Mat3 r = ry * rx * rz;
  const Mat3 d_yaw = YawDerivative(pose.yaw) * rx * rz;
  const Mat3 d_pitch = ry * PitchDerivative(pose.pitch) * rz;
  const Mat3 d_roll = ry * rx * RollDerivative(pose.roll);

  const std::vector<Vec3> posed = PoseVertices(vertices, pose);
  const NearestVertexIndex index(posed);

  ChamferGradient g;
  g.d_shape = Eigen::VectorXd::Zero(basis.num_components());
  // Accumulated dL/dv per vertex in the object frame.
  std::vector<Vec3> d_vertex(vertices.size(), Vec3::Zero());
  std::vector<char> touched(vertices.size(), 0);
  for (const Vec3& p : points) {
    const auto match = index.Nearest(p);
    const size_t j = static_cast<size_t>(match.index);
    const Vec3 diff = posed[j] - p;
    const double dist = diff.norm();
    g.loss += dist;
    if (dist == 0.0) continue;
    const Vec3 u = diff / dist;
    g.d_translation += u;
    g.d_angles.x() += u.dot(d_yaw * vertices[j]);
    g.d_angles.y() += u.dot(d_pitch * vertices[j]);
    g.d_angles.z() += u.dot(d_roll * vertices[j]);
    d_vertex[j] += r.transpose() * u;
    touched[j] = 1;
  }
  for (int k = 0; k < basis.num_components(); ++k) {
    const std::vector<Vec3>& comp = basis.components[static_cast<size_t>(k)];
    double acc = 0.0;
    for (size_t j = 0; j < vertices.size(); ++j) {
      if (touched[j]) acc += d_vertex[j].dot(comp[j]);
    }
    g.d_shape(k) = acc * basis.sigmas[static_cast<size_t>(k)];
  }
  return g;
}

LossTerms TotalLoss(const ShapeCoeff& s, const Pose& pose, const ShapeBasis& basis,
                    const Observation& obs, const CameraIntrinsics& k,
                    const AutolabelConfig& cfg) {
  const Objective objective(basis, obs, k, cfg);
  return objective.Evaluate(s, pose);
}

Box3D FittedBox(const ShapeBasis& basis, const ShapeCoeff& s, const Pose& pose) {
  const MeshExtent extent = MeshDimensions(DeformVertices(basis, s));
  Box3D box;
  box.dims = extent.dims;
  box.center = pose.Rotation() * extent.center + pose.t;
  box.yaw = WrapAngle(pose.yaw);
  return box;
}

FitResult Fit(const Observation& obs, const ShapeBasis& basis, const CameraIntrinsics& k,
              const AutolabelConfig& cfg) {
  cfg.Validate();
  basis.Validate();
  k.Validate();
  if (static_cast<int>(obs.points.size()) < cfg.min_points) {
    throw Error(ErrorCode::kInsufficientPoints,
                "fit needs at least " + std::to_string(cfg.min_points) + " points, got " +
                    std::to_string(obs.points.size()));
  }
  if (obs.instance_mask.empty()) {
    throw Error(ErrorCode::kEmptyInput, "observation has no instance mask");
  }

  const Objective objective(basis, obs, k, cfg);
  const ParamLayout layout{basis.num_components()};
  const int np = layout.size();

  ShapeCoeff s = ShapeCoeff::Zero(layout.r);
  Pose pose;
  pose.yaw = obs.gt_box.yaw;
  pose.t = obs.gt_box.center -
           RotationMatrixYaw(pose.yaw) * MeshDimensions(basis.mean.vertices).center;
  Eigen::VectorXd theta = PackParams(layout, s, pose);

  Eigen::VectorXd fd_step(np);
  Eigen::VectorXd step_scale(np);
  Eigen::VectorXd active = Eigen::VectorXd::Ones(np);
  fd_step.head(layout.r).setConstant(cfg.fd_step_shape);
  step_scale.head(layout.r).setConstant(cfg.shape_step_scale);
  for (int i = 0; i < 3; ++i) {
    fd_step(layout.yaw() + i) = cfg.fd_step_angle;
    step_scale(layout.yaw() + i) = cfg.angle_step_scale;
    fd_step(layout.tx() + i) = cfg.fd_step_translation;
    step_scale(layout.tx() + i) = cfg.translation_step_scale;
  }
  if (!cfg.optimize_pitch_roll) {
    active(layout.pitch()) = 0.0;
    active(layout.roll()) = 0.0;
  }

  Eigen::VectorXd m = Eigen::VectorXd::Zero(np);
  Eigen::VectorXd v = Eigen::VectorXd::Zero(np);

  FitResult result;
  double best_loss = std::numeric_limits<double>::infinity();
  Eigen::VectorXd best_theta = theta;
  LossTerms best_terms;

  auto consider = [&](const Eigen::VectorXd& th, const LossTerms& terms, int step) {
    if (!std::isfinite(terms.total)) {
      throw Error(ErrorCode::kDivergedLoss,
                  "loss became non-finite at step " + std::to_string(step));
    }
    if (terms.total < best_loss) {
      best_loss = terms.total;
      best_theta = th;
      best_terms = terms;
      result.best_step = step;
    }
  };

  int step = 0;
  for (; step < cfg.max_steps; ++step) {
    UnpackParams(layout, theta, &s, &pose);
    const LossTerms terms = objective.Evaluate(s, pose);
    consider(theta, terms, step);
    result.loss_curve.push_back(terms.total);

    if (terms.total == 0.0) {
      result.converged = true;
      break;
    }
    const int w = cfg.convergence_window;
    if (step >= w) {
      const double prev = result.loss_curve[static_cast<size_t>(step - w)];
      if (std::abs(prev - terms.total) <= cfg.convergence_tolerance * std::abs(prev)) {
        result.converged = true;
        if (cfg.stop_at_convergence) break;
      }
    }

    Eigen::VectorXd grad = Eigen::VectorXd::Zero(np);
    if (cfg.alpha > 0.0) {
      for (int i = 0; i < np; ++i) {
        if (active(i) == 0.0) continue;
        Eigen::VectorXd plus = theta;
        Eigen::VectorXd minus = theta;
        plus(i) += fd_step(i);
        minus(i) -= fd_step(i);
        ShapeCoeff sp, sm;
        Pose pp, pm;
        UnpackParams(layout, plus, &sp, &pp);
        UnpackParams(layout, minus, &sm, &pm);
        const double lp = objective.MaskLoss(sp, pp, cfg.softness);
        const double lm = objective.MaskLoss(sm, pm, cfg.softness);
        grad(i) += cfg.alpha * (lp - lm) / (2.0 * fd_step(i));
      }
    }
    if (cfg.beta > 0.0) {
      const ChamferGradient g = ChamferL3dWithGradient(obs.points, basis, s, pose);
      grad.head(layout.r) += cfg.beta * g.d_shape;
      grad.segment<3>(layout.yaw()) += cfg.beta * g.d_angles;
      grad.segment<3>(layout.tx()) += cfg.beta * g.d_translation;
    }
    grad = grad.cwiseProduct(active);
    if (!grad.allFinite()) {
      throw Error(ErrorCode::kDivergedLoss,
                  "gradient became non-finite at step " + std::to_string(step));
    }

    m = cfg.adam_beta1 * m + (1.0 - cfg.adam_beta1) * grad;
    v = cfg.adam_beta2 * v + (1.0 - cfg.adam_beta2) * grad.cwiseAbs2();
    const double bc1 = 1.0 - std::pow(cfg.adam_beta1, step + 1);
    const double bc2 = 1.0 - std::pow(cfg.adam_beta2, step + 1);
    for (int i = 0; i < np; ++i) {
      if (active(i) == 0.0) continue;
      const double m_hat = m(i) / bc1;
      const double v_hat = v(i) / bc2;
      theta(i) -= cfg.learning_rate * step_scale(i) * m_hat / (std::sqrt(v_hat) + cfg.adam_epsilon);
    }
    for (int i = 0; i < layout.r; ++i) theta(i) = std::clamp(theta(i), -cfg.s_clamp, cfg.s_clamp);
  }
  if (step == cfg.max_steps) {
    UnpackParams(layout, theta, &s, &pose);
    consider(theta, objective.Evaluate(s, pose), step);
  }
  result.steps = step;

  UnpackParams(layout, best_theta, &result.s, &result.pose);
  result.pose.yaw = WrapAngle(result.pose.yaw);
  result.final_loss = best_terms.total;
  result.final_l2d = best_terms.l2d;
  result.final_l3d = best_terms.l3d;
  result.mask_iou = MaskIou(objective.HardMask(result.s, result.pose), obs.instance_mask);
  result.box = FittedBox(basis, result.s, result.pose);
  result.box_iou = Iou3d(result.box, obs.gt_box);
  return result;
}

FitResult LabelObject(const LabelingInput& input, const ShapeBasis& basis,
                      const CameraIntrinsics& k, const AutolabelConfig& cfg,
                      std::uint64_t seed) {
  Observation obs;
  obs.instance_mask = input.instance_mask;
  obs.gt_box = input.gt_box;
  std::vector<Vec3> segmented = SegmentPointsInBox(input.cloud, input.gt_box, cfg.segment_margin);
  if (segmented.size() >= 3) {
    obs.points = RemoveGroundRansac(segmented, cfg, seed).points;
  } else {
    obs.points = std::move(segmented);
  }
  return Fit(obs, basis, k, cfg);
}

KeypointRecord ExportKeypointLabels(const FitResult& result, const ShapeBasis& basis,
                                    const KeypointSpec& spec, const CameraIntrinsics& k,
                                    const std::string& id) {
  if (spec.semantic_indices.empty()) {
    throw Error(ErrorCode::kTooFewKeypoints, "keypoint spec has no semantic keypoints");
  }
  const TriangleMesh mesh = Deform(basis, result.s);
  const std::vector<Vec3> local = SampleKeypoints(mesh, spec);
  const MeshExtent extent = MeshDimensions(mesh.vertices);

  const Mat3 r = result.pose.Rotation();
  // Express keypoints in the yaw-only frame used by the translation solver.
  const Mat3 fold = RotationMatrixYaw(result.pose.yaw).transpose() * r;
  const Vec3 extents = extent.dims.AxisExtents();

  KeypointRecord rec;
  rec.id = id;
  rec.intrinsics = k;
  rec.yaw = result.pose.yaw;
  rec.dims = extent.dims;
  rec.keypoints.reserve(local.size());
  for (size_t i = 0; i < local.size(); ++i) {
    KeypointPair kp;
    try {
      kp.p2d = Project(r * local[i] + result.pose.t, k).pixel;
    } catch (const Error&) {
      throw Error(ErrorCode::kProjectionFailure,
                  "keypoint " + std::to_string(i) + " of object " + id + " is behind the camera");
    }
    kp.p3d = (fold * local[i]).cwiseQuotient(extents);
    kp.conf_u = 1.0;
    kp.conf_v = 1.0;
    rec.keypoints.push_back(kp);
  }
  return rec;
}

}  // namespace mono3d
