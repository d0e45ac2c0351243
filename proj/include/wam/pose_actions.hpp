#pragma once

// Absolute / relative end-effector poses and the 10-dim action layout
// (3 position + 6D rotation + 1 normalized gripper).

#include <algorithm>
#include <array>
#include <cmath>
#include <cstdio>
#include <sstream>
#include <string>

#include <Eigen/Dense>
#include <Eigen/Geometry>

#include "wam/error.hpp"
#include "wam/text_record.hpp"

namespace wam::pose {

inline constexpr int kActionDim = 10;
inline constexpr double kUnitTolerance = 1e-6;

using Vec3 = Eigen::Vector3d;
using Mat3 = Eigen::Matrix3d;
using Rot6d = std::array<double, 6>;
using ActionVec = std::array<double, kActionDim>;

/// Quaternion stored as (w, x, y, z), right-handed, active rotation.
struct Quat {
  double w = 1.0, x = 0.0, y = 0.0, z = 0.0;

  double norm() const { return std::sqrt(w * w + x * x + y * y + z * z); }
  Eigen::Quaterniond eigen() const { return {w, x, y, z}; }
  static Quat from_eigen(const Eigen::Quaterniond& q) { return {q.w(), q.x(), q.y(), q.z()}; }
};

struct GripperRange {
  double raw_min = 0.0;
  double raw_max = 1.0;

  GripperRange() = default;
  GripperRange(double lo, double hi) : raw_min(lo), raw_max(hi) {
    require(std::isfinite(lo) && std::isfinite(hi) && lo < hi, "GripperRange: raw_min must be < raw_max");
  }

  struct Normalized {
    double value;
    bool clamped;
  };

  Normalized normalize(double raw) const {
    double g = 2.0 * (raw - raw_min) / (raw_max - raw_min) - 1.0;
    if (g < -1.0) return {-1.0, true};
    if (g > 1.0) return {1.0, true};
    return {g, false};
  }
  double denormalize(double g) const { return raw_min + (g + 1.0) * 0.5 * (raw_max - raw_min); }
};

/// Absolute end-effector state. The quaternion is renormalized on construction.
class Pose {
 public:
  Pose() = default;
  Pose(const Vec3& position, const Quat& rotation, double gripper) : position_(position), gripper_(gripper) {
    require(position.allFinite(), "Pose: position must be finite");
    require(std::isfinite(gripper), "Pose: gripper must be finite");
    const double n = rotation.norm();
    require(std::isfinite(n) && std::abs(n - 1.0) <= kUnitTolerance,
            "Pose: rotation quaternion is not unit within 1e-6");
    rotation_ = {rotation.w / n, rotation.x / n, rotation.y / n, rotation.z / n};
  }

  const Vec3& position() const { return position_; }
  const Quat& rotation() const { return rotation_; }
  double gripper() const { return gripper_; }
  Mat3 matrix() const { return rotation_.eigen().toRotationMatrix(); }

 private:
  Vec3 position_ = Vec3::Zero();
  Quat rotation_{};
  double gripper_ = 0.0;
};

struct RelAction {
  Vec3 delta_position = Vec3::Zero();
  Rot6d rotation6d{1, 0, 0, 0, 1, 0};
  double gripper_norm = 0.0;

  static constexpr int dim() { return kActionDim; }

  ActionVec to_vector() const {
    ActionVec v{};
    for (int i = 0; i < 3; ++i) v[i] = delta_position[i];
    for (int i = 0; i < 6; ++i) v[3 + i] = rotation6d[i];
    v[9] = gripper_norm;
    return v;
  }
  static RelAction from_vector(const ActionVec& v) {
    RelAction r;
    r.delta_position = {v[0], v[1], v[2]};
    for (int i = 0; i < 6; ++i) r.rotation6d[i] = v[3 + i];
    r.gripper_norm = v[9];
    return r;
  }
};

/// First two columns of the rotation matrix, column-major.
inline Rot6d matrix_to_rot6d(const Mat3& m) {
  return {m(0, 0), m(1, 0), m(2, 0), m(0, 1), m(1, 1), m(2, 1)};
}

inline Rot6d quat_to_rot6d(const Quat& q) {
  require(std::abs(q.norm() - 1.0) <= kUnitTolerance, "quat_to_rot6d: quaternion is not unit within 1e-6");
  return matrix_to_rot6d(q.eigen().toRotationMatrix());
}

/// Gram-Schmidt on the two stored columns, third column by cross product.
inline Mat3 rot6d_to_matrix(const Rot6d& r6) {
  const Vec3 a1(r6[0], r6[1], r6[2]);
  const Vec3 a2(r6[3], r6[4], r6[5]);
  require(a1.allFinite() && a2.allFinite(), "rot6d_to_matrix: non-finite input");
  const double n1 = a1.norm();
  require(n1 > 1e-8, "rot6d_to_matrix: first column is degenerate");
  const Vec3 b1 = a1 / n1;
  const Vec3 u2 = a2 - b1.dot(a2) * b1;
  const double n2 = u2.norm();
  require(n2 > 1e-8, "rot6d_to_matrix: columns are parallel or second column is degenerate");
  const Vec3 b2 = u2 / n2;
  Mat3 m;
  m.col(0) = b1;
  m.col(1) = b2;
  m.col(2) = b1.cross(b2);
  return m;
}

inline Quat matrix_to_quat(const Mat3& m) {
  Eigen::Quaterniond q(m);
  q.normalize();
  if (q.w() < 0) q.coeffs() *= -1.0;
  return Quat::from_eigen(q);
}

/// Angle of the rotation taking a to b, in radians.
inline double rotation_angle_between(const Mat3& a, const Mat3& b) {
  const Mat3 rel = a.transpose() * b;
  const double c = std::clamp((rel.trace() - 1.0) * 0.5, -1.0, 1.0);
  // acos loses precision near zero; use the antisymmetric part there.
  const Vec3 s(rel(2, 1) - rel(1, 2), rel(0, 2) - rel(2, 0), rel(1, 0) - rel(0, 1));
  return std::atan2(0.5 * s.norm(), c);
}

struct RelativeResult {
  RelAction action;
  bool gripper_clamped = false;
};

inline RelativeResult to_relative(const Pose& abs, const Pose& ref, const GripperRange& range) {
  RelativeResult out;
  out.action.delta_position = abs.position() - ref.position();
  const Mat3 rel = ref.matrix().transpose() * abs.matrix();
  out.action.rotation6d = matrix_to_rot6d(rel);
  const auto g = range.normalize(abs.gripper());
  out.action.gripper_norm = g.value;
  out.gripper_clamped = g.clamped;
  return out;
}

inline Pose to_absolute(const RelAction& rel, const Pose& ref, const GripperRange& range) {
  require(rel.delta_position.allFinite(), "to_absolute: non-finite delta_position");
  require(std::isfinite(rel.gripper_norm) && std::abs(rel.gripper_norm) <= 1.0,
          "to_absolute: gripper_norm outside [-1,1]");
  const Mat3 r = ref.matrix() * rot6d_to_matrix(rel.rotation6d);
  return Pose(ref.position() + rel.delta_position, matrix_to_quat(r), range.denormalize(rel.gripper_norm));
}

// ---- text records ---------------------------------------------------------
//   pose position=px,py,pz rotation=w,x,y,z gripper=g
//   rel delta_position=dx,dy,dz rotation6d=r0,...,r5 gripper_norm=g

inline std::string to_record(const Pose& p) {
  const auto& q = p.rotation();
  std::ostringstream os;
  os << "pose position=" << record::join({p.position()[0], p.position()[1], p.position()[2]})
     << " rotation=" << record::join({q.w, q.x, q.y, q.z}) << " gripper=" << record::fmt(p.gripper());
  return os.str();
}

inline std::string to_record(const RelAction& r) {
  std::ostringstream os;
  os << "rel delta_position=" << record::join({r.delta_position[0], r.delta_position[1], r.delta_position[2]})
     << " rotation6d="
     << record::join({r.rotation6d[0], r.rotation6d[1], r.rotation6d[2], r.rotation6d[3], r.rotation6d[4],
                      r.rotation6d[5]})
     << " gripper_norm=" << record::fmt(r.gripper_norm);
  return os.str();
}

inline Pose pose_from_record(const std::string& line) {
  const auto rec = record::parse_line(line);
  require(rec.tag == "pose", "pose record must start with 'pose'");
  const auto p = record::numbers(rec.get("position"), 3);
  const auto q = record::numbers(rec.get("rotation"), 4);
  return Pose({p[0], p[1], p[2]}, {q[0], q[1], q[2], q[3]}, record::number(rec.get("gripper")));
}

inline RelAction rel_from_record(const std::string& line) {
  const auto rec = record::parse_line(line);
  require(rec.tag == "rel", "relative action record must start with 'rel'");
  RelAction r;
  const auto p = record::numbers(rec.get("delta_position"), 3);
  const auto q = record::numbers(rec.get("rotation6d"), 6);
  r.delta_position = {p[0], p[1], p[2]};
  std::copy(q.begin(), q.end(), r.rotation6d.begin());
  r.gripper_norm = record::number(rec.get("gripper_norm"));
  require(std::abs(r.gripper_norm) <= 1.0, "gripper_norm outside [-1,1]");
  return r;
}

}  // namespace wam::pose
