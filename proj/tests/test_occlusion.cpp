#include <doctest.h>

#include <cmath>
#include <stdexcept>

#include "emghand/occlusion.hpp"
#include "emghand/rng.hpp"

using namespace emghand;
using namespace emghand::occlusion;

namespace {

// Geometric oracles built on nothing but point membership tests.

bool point_in_box(const Vec3& p, const OrientedBox& box) {
  const Vec3 l = box.pose.untransform(p);
  return std::abs(l.x) <= box.half_extents.x && std::abs(l.y) <= box.half_extents.y &&
         std::abs(l.z) <= box.half_extents.z;
}

double point_segment_distance(const Vec3& p, const Vec3& a, const Vec3& b) {
  const Vec3 d = b - a;
  const double dd = d.dot(d);
  const double t = dd > 0.0 ? std::clamp((p - a).dot(d) / dd, 0.0, 1.0) : 0.0;
  return (p - (a + t * d)).norm();
}

bool point_in_capsule(const Vec3& p, const Capsule& c) {
  return point_segment_distance(p, c.a, c.b) <= c.radius;
}

// Ray-capsule oracle: the capsule as a dense union of spheres along its axis.
bool oracle_ray_hits_capsule(const Vec3& origin, const Vec3& dir, const Capsule& c,
                             int samples = 2000) {
  const Vec3 n = dir.normalized();
  for (int i = 0; i <= samples; ++i) {
    const double u = static_cast<double>(i) / samples;
    const Vec3 center = c.a + u * (c.b - c.a);
    // distance from the half-line to the sphere center
    const double along = (center - origin).dot(n);
    const Vec3 closest = along >= 0.0 ? origin + along * n : origin;
    if ((center - closest).norm() <= c.radius) return true;
  }
  return false;
}

// Occlusion oracle: march the open camera->midpoint segment and test point
// membership against every non-excluded primitive.
bool oracle_bone_occluded(const Vec3& camera, int bone, const HandGeometry& g,
                          int samples = 4000) {
  const int finger = finger_of_joint(bone);
  const int segment = is_pip(bone) ? 1 : 0;
  const BoneSegment& target = segment == 0 ? g.bones[static_cast<std::size_t>(finger)].proximal
                                           : g.bones[static_cast<std::size_t>(finger)].intermediate;
  const Vec3 mid = target.midpoint();
  for (int i = 1; i < samples; ++i) {
    const double u = static_cast<double>(i) / samples;
    const Vec3 p = camera + u * (mid - camera);
    if (point_in_box(p, g.palm)) return true;
    for (int f = 0; f < kFingerCount; ++f)
      for (int s = 0; s < 3; ++s) {
        if (f == finger && std::abs(s - segment) <= 1) continue;
        if (point_in_capsule(p, g.capsules[static_cast<std::size_t>(f)][static_cast<std::size_t>(s)]))
          return true;
      }
  }
  return false;
}

Pose compose(const Pose& a, const Pose& b) {
  return {a.apply(b.position), a.orientation * b.orientation};
}

Pose random_rigid(Rng& rng) {
  Pose p;
  p.position = {rng.uniform(-30.0, 30.0), rng.uniform(-30.0, 30.0), rng.uniform(-30.0, 30.0)};
  const Vec3 axis{rng.normal(), rng.normal(), rng.normal()};
  p.orientation = Quat::from_axis_angle(axis, rng.uniform(0.0, 6.28));
  return p;
}

}  // namespace

TEST_CASE("forward kinematics: straight, single-rotation, and double-rotation poses") {
  const HandSkeleton skel = HandSkeleton::canonical();
  const Pose root;

  {
    JointAngleVector zero;
    const auto bones = forward_kinematics(skel, zero, root);
    for (int f = 0; f < kFingerCount; ++f) {
      const auto& fg = skel.fingers[static_cast<std::size_t>(f)];
      const auto& b = bones[static_cast<std::size_t>(f)];
      const double reach = (b.distal.b - b.proximal.a).norm();
      CHECK(reach == doctest::Approx(fg.proximal + fg.intermediate + fg.distal).epsilon(1e-12));
      CHECK(std::abs(b.distal.b.z) < 1e-12);  // colinear with the palm plane
      CHECK(b.distal.b.y == doctest::Approx(fg.knuckle.y));
    }
  }
  {
    JointAngleVector a;
    a[0] = 90.0;  // index MCP
    const auto bones = forward_kinematics(skel, a, root);
    const auto& b = bones[0];
    CHECK(b.proximal.b.x == doctest::Approx(9.0).epsilon(1e-12));
    CHECK(b.proximal.b.z == doctest::Approx(-4.5).epsilon(1e-12));
  }
  {
    JointAngleVector a;
    a[0] = 90.0;
    a[1] = 90.0;
    const auto bones = forward_kinematics(skel, a, root);
    const Vec3 tip = bones[0].distal.b;
    // two successive 90 degree planar rotations, distal trailing at 54 degrees
    CHECK(std::abs(tip.x - 5.3244294954150537) < 1e-9);
    CHECK(std::abs(tip.y - 3.0) < 1e-9);
    CHECK(std::abs(tip.z - (-2.8819660112501055)) < 1e-9);
    CHECK(bones[0].intermediate.b.x == doctest::Approx(6.5).epsilon(1e-12));
    CHECK(bones[0].intermediate.b.z == doctest::Approx(-4.5).epsilon(1e-12));
  }
}

TEST_CASE("ray-box: axis-aligned arithmetic and containment") {
  OrientedBox box;
  box.pose.position = {0.0, 0.0, 5.0};
  box.half_extents = {0.5, 0.5, 0.5};

  const auto hit = ray_box_intersect({0, 0, 0}, {0, 0, 1}, box);
  REQUIRE(hit.has_value());
  CHECK(*hit == doctest::Approx(4.5).epsilon(1e-12));

  CHECK(!ray_box_intersect({0, 0, 0}, {0, 0, -1}, box).has_value());
  CHECK(!ray_box_intersect({2, 0, 0}, {0, 0, 1}, box).has_value());

  const auto inside = ray_box_intersect({0, 0.2, 5.1}, {1, 0, 0}, box);
  REQUIRE(inside.has_value());
  CHECK(*inside == 0.0);

  CHECK_THROWS_AS(ray_box_intersect({0, 0, 0}, {0, 0, 0}, box), std::invalid_argument);
}

TEST_CASE("ray-capsule: clearance, perpendicular hit, cap hit") {
  Capsule c{{0, 0, 0}, {0, 0, 4}, 0.8};

  CHECK(!ray_capsule_intersect({1.6, 0, -5}, {0, 0, 1}, c).has_value());  // 2r off axis

  const auto hit = ray_capsule_intersect({5, 0, 2}, {-1, 0, 0}, c);
  REQUIRE(hit.has_value());
  CHECK(*hit == doctest::Approx(5.0 - 0.8).epsilon(1e-12));

  const auto cap = ray_capsule_intersect({0, 0, 10}, {0, 0, -1}, c);
  REQUIRE(cap.has_value());
  CHECK(*cap == doctest::Approx(10.0 - 4.0 - 0.8).epsilon(1e-12));

  const auto inside = ray_capsule_intersect({0.2, 0, 1}, {1, 1, 1}, c);
  REQUIRE(inside.has_value());
  CHECK(*inside == 0.0);

  CHECK_THROWS_AS(ray_capsule_intersect({0, 0, 0}, {0, 0, 0}, c), std::invalid_argument);
}

TEST_CASE("ray-capsule agrees with the dense sphere-sampling oracle") {
  Rng rng(31);
  int mismatches = 0;
  const int trials = 10000;
  for (int i = 0; i < trials; ++i) {
    Capsule c;
    c.a = {rng.uniform(-5, 5), rng.uniform(-5, 5), rng.uniform(-5, 5)};
    c.b = {rng.uniform(-5, 5), rng.uniform(-5, 5), rng.uniform(-5, 5)};
    c.radius = rng.uniform(0.3, 1.5);
    const Vec3 origin{rng.uniform(-10, 10), rng.uniform(-10, 10), rng.uniform(-10, 10)};
    Vec3 dir{rng.normal(), rng.normal(), rng.normal()};
    if (dir.norm() == 0.0) continue;
    const bool got = ray_capsule_intersect(origin, dir, c).has_value();
    const bool want = oracle_ray_hits_capsule(origin, dir, c);
    if (got != want) ++mismatches;
  }
  CHECK(mismatches <= trials / 1000);  // > 99.9% agreement
}

TEST_CASE("ray-box agrees with a dense point-marching oracle") {
  Rng rng(32);
  int mismatches = 0;
  const int trials = 4000;
  for (int i = 0; i < trials; ++i) {
    OrientedBox box;
    box.pose = random_rigid(rng);
    box.pose.position = {rng.uniform(-4, 4), rng.uniform(-4, 4), rng.uniform(-4, 4)};
    box.half_extents = {rng.uniform(0.5, 3), rng.uniform(0.5, 3), rng.uniform(0.5, 3)};
    const Vec3 origin{rng.uniform(-12, 12), rng.uniform(-12, 12), rng.uniform(-12, 12)};
    Vec3 dir{rng.normal(), rng.normal(), rng.normal()};
    if (dir.norm() == 0.0) continue;
    dir = dir.normalized();
    const auto got = ray_box_intersect(origin, dir, box);
    bool want = false;
    for (int k = 0; k <= 3000 && !want; ++k)
      want = point_in_box(origin + (40.0 * k / 3000.0) * dir, box);
    if (got.has_value() != want) ++mismatches;
  }
  CHECK(mismatches <= 4);
}

TEST_CASE("bone occlusion: constructed clear and blocked cameras") {
  const HandSkeleton skel = HandSkeleton::canonical();
  const Pose root;
  JointAngleVector extended;
  const HandGeometry g = build_geometry(skel, extended, root);

  const Vec3 palmar_camera{4.5, 0.0, -50.0};
  for (int bone = 0; bone < kJointCount; ++bone)
    CHECK(!bone_occluded(palmar_camera, bone, g));

  const Vec3 behind_camera{-50.0, 0.0, 0.0};  // palm box sits between camera and fingers
  for (int bone = 0; bone < kJointCount; ++bone)
    CHECK(bone_occluded(behind_camera, bone, g));
}

TEST_CASE("bone occlusion matches the dense-march oracle over poses") {
  const HandSkeleton skel = HandSkeleton::canonical();
  const Pose root;
  Rng rng(33);

  JointAngleVector fist;
  for (int j = 0; j < kJointCount; ++j) fist[j] = is_pip(j) ? 100.0 : 90.0;

  const double elev = 45.0 * kDegToRad;
  // 45 degrees above the palm plane, looking across the fingers from the side
  const Vec3 cam45{9.0, 50.0 * std::cos(elev), 50.0 * std::sin(elev)};

  int checked = 0;
  for (int trial = 0; trial < 12; ++trial) {
    JointAngleVector pose;
    if (trial == 0) {
      pose = fist;
    } else {
      for (int j = 0; j < kJointCount; ++j)
        pose[j] = rng.uniform(0.0, is_pip(j) ? 100.0 : 90.0);
    }
    const HandGeometry g = build_geometry(skel, pose, root);
    const Vec3 cam = trial < 6 ? cam45
                               : Vec3{rng.uniform(-60, 60), rng.uniform(-60, 60),
                                      rng.uniform(-60, 60)};
    for (int bone = 0; bone < kJointCount; ++bone) {
      CHECK(bone_occluded(cam, bone, g) == oracle_bone_occluded(cam, bone, g));
      ++checked;
    }
  }
  CHECK(checked == 96);

  // fist from 45 degrees: some bones visible, some hidden
  const HandGeometry gf = build_geometry(skel, fist, root);
  int occluded_count = 0;
  for (int bone = 0; bone < kJointCount; ++bone)
    if (bone_occluded(cam45, bone, gf)) ++occluded_count;
  CHECK(occluded_count > 0);
  CHECK(occluded_count < kJointCount);
}

TEST_CASE("occlusion flags are invariant under rigid transforms") {
  const HandSkeleton skel = HandSkeleton::canonical();
  Rng rng(34);
  for (int trial = 0; trial < 20; ++trial) {
    JointAngleVector pose;
    for (int j = 0; j < kJointCount; ++j)
      pose[j] = rng.uniform(0.0, is_pip(j) ? 100.0 : 90.0);
    const Vec3 cam{rng.uniform(-60, 60), rng.uniform(-60, 60), rng.uniform(-60, 60)};
    const Pose rigid = random_rigid(rng);

    const HandGeometry g0 = build_geometry(skel, pose, Pose{});
    const HandGeometry g1 = build_geometry(skel, pose, rigid);
    const Vec3 cam1 = rigid.apply(cam);
    for (int bone = 0; bone < kJointCount; ++bone)
      CHECK(bone_occluded(cam, bone, g0) == bone_occluded(cam1, bone, g1));
  }
}

TEST_CASE("occlusion_fraction pooling and monotonicity") {
  Tensor none({10, 8});
  CHECK(occlusion_fraction(none).overall_pct == 0.0);

  Tensor all({10, 8});
  all.fill(1.0);
  const auto full = occlusion_fraction(all);
  CHECK(full.overall_pct == 100.0);
  for (double f : full.per_finger_pct) CHECK(f == 100.0);

  Rng rng(35);
  Tensor a({50, 8});
  for (std::int64_t i = 0; i < a.size(); ++i) a[i] = rng.uniform() < 0.3 ? 1.0 : 0.0;
  Tensor b = a;
  for (std::int64_t i = 0; i < b.size(); ++i)
    if (rng.uniform() < 0.2) b[i] = 1.0;  // superset of set flags
  const auto fa = occlusion_fraction(a);
  const auto fb = occlusion_fraction(b);
  CHECK(fb.overall_pct >= fa.overall_pct);
  for (int f = 0; f < kFingerCount; ++f)
    CHECK(fb.per_finger_pct[static_cast<std::size_t>(f)] >=
          fa.per_finger_pct[static_cast<std::size_t>(f)]);
  CHECK(fa.overall_pct >= 0.0);
  CHECK(fb.overall_pct <= 100.0);

  // half of the joints of finger 0 flagged at every tick
  Tensor half({10, 8});
  for (std::int64_t t = 0; t < 10; ++t) half.at(t, 0) = 1.0;
  CHECK(occlusion_fraction(half).per_finger_pct[0] == doctest::Approx(50.0));
}
