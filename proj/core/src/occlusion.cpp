#include "emghand/occlusion.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <stdexcept>

namespace emghand::occlusion {

HandSkeleton HandSkeleton::canonical() {
  HandSkeleton s;
  const double knuckle_x = s.palm_length;
  const double ys[kFingerCount] = {3.0, 1.0, -1.0, -3.0};
  const double prox[kFingerCount] = {4.5, 4.8, 4.4, 3.5};
  const double inter[kFingerCount] = {2.5, 2.9, 2.7, 2.0};
  const double dist[kFingerCount] = {2.0, 2.2, 2.1, 1.8};
  for (int f = 0; f < kFingerCount; ++f) {
    auto& fg = s.fingers[static_cast<std::size_t>(f)];
    fg.knuckle = {knuckle_x, ys[f], 0.0};
    fg.proximal = prox[f];
    fg.intermediate = inter[f];
    fg.distal = dist[f];
  }
  return s;
}

void HandSkeleton::validate() const {
  if (palm_length <= 0.0 || palm_width <= 0.0 || palm_thickness <= 0.0)
    throw std::invalid_argument("palm dimensions must be positive");
  for (const auto& f : fingers)
    if (f.proximal <= 0.0 || f.intermediate <= 0.0 || f.distal <= 0.0)
      throw std::invalid_argument("phalanx lengths must be positive");
}

std::array<FingerBones, kFingerCount> forward_kinematics(const HandSkeleton& skeleton,
                                                         const JointAngleVector& angles,
                                                         const Pose& root) {
  std::array<FingerBones, kFingerCount> out;
  for (int f = 0; f < kFingerCount; ++f) {
    const auto& fg = skeleton.fingers[static_cast<std::size_t>(f)];
    const double mcp = angles[2 * f] * kDegToRad;
    const double pip = angles[2 * f + 1] * kDegToRad;
    const double dip = kDistalCoupling * pip;

    // flexion about local +y: +x bends toward -z (palmar side)
    auto dir = [&](double theta) {
      return root.apply_direction({std::cos(theta), 0.0, -std::sin(theta)});
    };
    const Vec3 base = root.apply(fg.knuckle);
    const Vec3 p1 = base + fg.proximal * dir(mcp);
    const Vec3 p2 = p1 + fg.intermediate * dir(mcp + pip);
    const Vec3 p3 = p2 + fg.distal * dir(mcp + pip + dip);

    out[static_cast<std::size_t>(f)] = {{base, p1}, {p1, p2}, {p2, p3}};
  }
  return out;
}

HandGeometry build_geometry(const HandSkeleton& skeleton, const JointAngleVector& angles,
                            const Pose& root) {
  skeleton.validate();
  HandGeometry g;
  g.bones = forward_kinematics(skeleton, angles, root);
  g.palm.pose.position = root.apply({skeleton.palm_length / 2.0, 0.0, 0.0});
  g.palm.pose.orientation = root.orientation;
  g.palm.half_extents = {skeleton.palm_length / 2.0, skeleton.palm_width / 2.0,
                         skeleton.palm_thickness / 2.0};
  for (int f = 0; f < kFingerCount; ++f) {
    const auto& bones = g.bones[static_cast<std::size_t>(f)];
    g.capsules[static_cast<std::size_t>(f)] = {
        Capsule{bones.proximal.a, bones.proximal.b, kCapsuleRadiusCm},
        Capsule{bones.intermediate.a, bones.intermediate.b, kCapsuleRadiusCm},
        Capsule{bones.distal.a, bones.distal.b, kCapsuleRadiusCm}};
  }
  return g;
}

std::optional<double> ray_box_intersect(const Vec3& origin, const Vec3& direction,
                                        const OrientedBox& box) {
  if (direction.norm() == 0.0) throw std::invalid_argument("ray direction must be non-zero");
  const Vec3 dir = direction.normalized();
  const Vec3 o = box.pose.untransform(origin);
  const Vec3 d = box.pose.orientation.conjugate().rotate(dir);

  double tmin = 0.0, tmax = std::numeric_limits<double>::infinity();
  const double od[3] = {o.x, o.y, o.z};
  const double dd[3] = {d.x, d.y, d.z};
  const double he[3] = {box.half_extents.x, box.half_extents.y, box.half_extents.z};
  bool started_inside = true;
  for (int i = 0; i < 3; ++i) {
    if (std::abs(od[i]) > he[i]) started_inside = false;
    if (std::abs(dd[i]) < 1e-15) {
      if (std::abs(od[i]) > he[i]) return std::nullopt;  // parallel and outside the slab
      continue;
    }
    double t1 = (-he[i] - od[i]) / dd[i];
    double t2 = (he[i] - od[i]) / dd[i];
    if (t1 > t2) std::swap(t1, t2);
    tmin = std::max(tmin, t1);
    tmax = std::min(tmax, t2);
    if (tmin > tmax) return std::nullopt;
  }
  if (started_inside) return 0.0;
  return tmin;
}

std::optional<double> ray_capsule_intersect(const Vec3& origin, const Vec3& direction,
                                            const Capsule& capsule) {
  if (direction.norm() == 0.0) throw std::invalid_argument("ray direction must be non-zero");
  const Vec3 n = direction.normalized();
  const Vec3 d = capsule.b - capsule.a;
  const Vec3 m = origin - capsule.a;
  const double r = capsule.radius;

  // A ray starting inside reports an immediate hit.
  {
    const double dd = d.dot(d);
    const double t = dd > 0.0 ? std::clamp(m.dot(d) / dd, 0.0, 1.0) : 0.0;
    const Vec3 closest = capsule.a + t * d;
    if ((origin - closest).norm() <= r) return 0.0;
  }

  double best = std::numeric_limits<double>::infinity();

  auto try_sphere = [&](const Vec3& center) {
    const Vec3 mm = origin - center;
    const double b = mm.dot(n);
    const double c = mm.dot(mm) - r * r;
    const double disc = b * b - c;
    if (disc < 0.0) return;
    const double t = -b - std::sqrt(disc);
    if (t >= 0.0) best = std::min(best, t);
  };

  const double dd = d.dot(d);
  if (dd > 0.0) {
    const double nd = n.dot(d);
    const double md = m.dot(d);
    const double a_q = dd - nd * nd;  // |n| = 1
    const double b_q = dd * m.dot(n) - nd * md;
    const double c_q = dd * (m.dot(m) - r * r) - md * md;
    if (std::abs(a_q) > 1e-12) {
      const double disc = b_q * b_q - a_q * c_q;
      if (disc >= 0.0) {
        const double t = (-b_q - std::sqrt(disc)) / a_q;
        if (t >= 0.0) {
          const double along = md + t * nd;
          if (along >= 0.0 && along <= dd) best = std::min(best, t);
        }
      }
    }
  }
  try_sphere(capsule.a);
  try_sphere(capsule.b);

  if (!std::isfinite(best)) return std::nullopt;
  return best;
}

bool bone_occluded(const Vec3& camera_position, int bone, const HandGeometry& geometry) {
  if (bone < 0 || bone >= kJointCount) throw std::invalid_argument("bone index out of range");
  const int finger = finger_of_joint(bone);
  const int segment = is_pip(bone) ? 1 : 0;

  const BoneSegment& target =
      segment == 0 ? geometry.bones[static_cast<std::size_t>(finger)].proximal
                   : geometry.bones[static_cast<std::size_t>(finger)].intermediate;
  const Vec3 mid = target.midpoint();
  const Vec3 to_bone = mid - camera_position;
  const double dist = to_bone.norm();
  if (dist == 0.0) return false;
  const Vec3 dir = to_bone.normalized();
  const double lo = 1e-9;
  const double hi = dist * (1.0 - 1e-9);

  if (auto t = ray_box_intersect(camera_position, dir, geometry.palm))
    if (*t > lo && *t < hi) return true;

  for (int f = 0; f < kFingerCount; ++f) {
    for (int s = 0; s < 3; ++s) {
      if (f == finger && std::abs(s - segment) <= 1) continue;  // self + chain-adjacent
      const Capsule& c =
          geometry.capsules[static_cast<std::size_t>(f)][static_cast<std::size_t>(s)];
      if (auto t = ray_capsule_intersect(camera_position, dir, c))
        if (*t > lo && *t < hi) return true;
    }
  }
  return false;
}

OcclusionSummary occlusion_fraction(const Tensor& occluded_flags) {
  if (occluded_flags.rank() != 2 || occluded_flags.cols() != kJointCount)
    throw std::invalid_argument("occlusion flags must be T x 8");
  OcclusionSummary s;
  const std::int64_t ticks = occluded_flags.rows();
  if (ticks == 0) return s;
  std::array<std::int64_t, kFingerCount> per_finger{};
  std::int64_t total = 0;
  for (std::int64_t t = 0; t < ticks; ++t) {
    for (int j = 0; j < kJointCount; ++j) {
      if (occluded_flags.at(t, j) != 0.0) {
        ++per_finger[static_cast<std::size_t>(finger_of_joint(j))];
        ++total;
      }
    }
  }
  for (int f = 0; f < kFingerCount; ++f)
    s.per_finger_pct[static_cast<std::size_t>(f)] =
        100.0 * static_cast<double>(per_finger[static_cast<std::size_t>(f)]) /
        static_cast<double>(ticks * 2);
  s.overall_pct = 100.0 * static_cast<double>(total) / static_cast<double>(ticks * kJointCount);
  return s;
}

}  // namespace emghand::occlusion
