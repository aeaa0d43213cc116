#pragma once

#include <array>
#include <optional>

#include "emghand/geom.hpp"
#include "emghand/joints.hpp"
#include "emghand/tensor.hpp"

namespace emghand::occlusion {

/// Canonical right-hand layout, palm plane = local x-y, fingers along +x,
/// dorsal side +z. Flexion rotates fingers toward -z (palmar side).
struct HandSkeleton {
  struct Finger {
    Vec3 knuckle;        // base position on the distal palm edge (cm)
    double proximal;     // phalanx lengths (cm)
    double intermediate;
    double distal;
  };

  std::array<Finger, kFingerCount> fingers;  // index, middle, ring, pinky
  double palm_length = 9.0;     // local x
  double palm_width = 8.0;      // local y
  double palm_thickness = 2.5;  // local z
  Pose root;                    // wrist frame in world coordinates

  static HandSkeleton canonical();
  void validate() const;  // throws std::invalid_argument on non-positive dims
};

inline constexpr double kCapsuleRadiusCm = 0.8;
/// Untracked distal joints follow the PIP at this coupling ratio.
inline constexpr double kDistalCoupling = 0.6;

struct Capsule {
  Vec3 a, b;
  double radius = kCapsuleRadiusCm;
};

struct OrientedBox {
  Pose pose;         // box frame; local box is centered at the origin
  Vec3 half_extents;
};

struct BoneSegment {
  Vec3 a, b;
  Vec3 midpoint() const { return 0.5 * (a + b); }
};

struct FingerBones {
  BoneSegment proximal, intermediate, distal;
};

/// Planar flexion chain per finger: proximal rotates by the MCP angle about
/// the knuckle axis, intermediate by PIP relative to proximal, distal follows
/// at 0.6 * PIP. All outputs are in world coordinates.
std::array<FingerBones, kFingerCount> forward_kinematics(const HandSkeleton& skeleton,
                                                         const JointAngleVector& angles,
                                                         const Pose& root);

struct HandGeometry {
  OrientedBox palm;
  std::array<std::array<Capsule, 3>, kFingerCount> capsules;  // [finger][prox/inter/dist]
  std::array<FingerBones, kFingerCount> bones;
};

HandGeometry build_geometry(const HandSkeleton& skeleton, const JointAngleVector& angles,
                            const Pose& root);

/// Nearest non-negative hit parameter in units of |direction|, or nullopt.
/// A ray starting inside the primitive reports a hit at 0.
std::optional<double> ray_box_intersect(const Vec3& origin, const Vec3& direction,
                                        const OrientedBox& box);
std::optional<double> ray_capsule_intersect(const Vec3& origin, const Vec3& direction,
                                            const Capsule& capsule);

/// True iff the open segment from the camera to the bone midpoint hits any
/// geometry other than the bone's own capsule and the capsules adjacent to
/// it in the same finger chain. Bone indices follow the joint order (MCP
/// bones are proximal segments, PIP bones intermediate segments).
bool bone_occluded(const Vec3& camera_position, int bone, const HandGeometry& geometry);

struct OcclusionSummary {
  std::array<double, kFingerCount> per_finger_pct{};
  double overall_pct = 0.0;
};

/// Percentage of set flags in a T x 8 matrix of 0/1 occlusion marks, pooled
/// per finger (MCP and PIP bones together) and overall.
OcclusionSummary occlusion_fraction(const Tensor& occluded_flags);

}  // namespace emghand::occlusion
