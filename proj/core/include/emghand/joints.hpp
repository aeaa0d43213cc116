#pragma once

#include <algorithm>
#include <array>
#include <cstdint>

namespace emghand {

/// Tracked joints, in vector order: MCP then PIP for index, middle, ring,
/// pinky. The thumb is not modeled.
inline constexpr int kJointCount = 8;
inline constexpr int kFingerCount = 4;

inline constexpr const char* kJointNames[kJointCount] = {
    "index_mcp", "index_pip", "middle_mcp", "middle_pip",
    "ring_mcp",  "ring_pip",  "pinky_mcp",  "pinky_pip"};

/// Physiological guard band; model outputs are clamped to this range at
/// inference time.
inline constexpr double kAngleMinDeg = -20.0;
inline constexpr double kAngleMaxDeg = 130.0;

/// Flexion angles in degrees for the eight tracked joints.
struct JointAngleVector {
  std::array<double, kJointCount> deg{};

  double& operator[](int i) { return deg[static_cast<std::size_t>(i)]; }
  double operator[](int i) const { return deg[static_cast<std::size_t>(i)]; }

  JointAngleVector clamped() const {
    JointAngleVector out;
    for (int i = 0; i < kJointCount; ++i)
      out.deg[static_cast<std::size_t>(i)] =
          std::clamp(deg[static_cast<std::size_t>(i)], kAngleMinDeg, kAngleMaxDeg);
    return out;
  }
};

inline constexpr int finger_of_joint(int joint) { return joint / 2; }
inline constexpr bool is_pip(int joint) { return (joint % 2) == 1; }

}  // namespace emghand
