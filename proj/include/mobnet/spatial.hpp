#pragma once

// Spatial (6D) vector algebra for rigid-body dynamics.
// Motion vectors are [angular; linear], force vectors are [torque; force],
// both expressed in the local frame of the body they belong to.

#include <Eigen/Dense>

namespace mobnet {

using Vec3 = Eigen::Vector3d;
using Mat3 = Eigen::Matrix3d;
using Vec6 = Eigen::Matrix<double, 6, 1>;
using Mat6 = Eigen::Matrix<double, 6, 6>;
using VecX = Eigen::VectorXd;
using MatX = Eigen::MatrixXd;

inline Mat3 skew(const Vec3& v) {
  Mat3 s;
  s << 0, -v.z(), v.y(), v.z(), 0, -v.x(), -v.y(), v.x(), 0;
  return s;
}

inline Mat3 rot_axis(const Vec3& axis, double angle) {
  return Eigen::AngleAxisd(angle, axis).toRotationMatrix();
}

// X-Y-Z fixed-axis (roll, pitch, yaw) rotation, URDF-style.
inline Mat3 rot_rpy(const Vec3& rpy) {
  return (Eigen::AngleAxisd(rpy.z(), Vec3::UnitZ()) *
          Eigen::AngleAxisd(rpy.y(), Vec3::UnitY()) *
          Eigen::AngleAxisd(rpy.x(), Vec3::UnitX()))
      .toRotationMatrix();
}

// Plücker transform ^B X_A. E maps A-frame 3-vectors to B-frame 3-vectors,
// r is the origin of B expressed in A.
struct SpTransform {
  Mat3 E = Mat3::Identity();
  Vec3 r = Vec3::Zero();

  static SpTransform from_frame(const Mat3& R_ab, const Vec3& origin_in_a) {
    return SpTransform{R_ab.transpose(), origin_in_a};
  }

  Vec6 apply_motion(const Vec6& m) const {
    Vec6 out;
    out.head<3>() = E * m.head<3>();
    out.tail<3>() = E * (m.tail<3>() - r.cross(m.head<3>()));
    return out;
  }

  Vec6 apply_force(const Vec6& f) const {
    Vec6 out;
    out.head<3>() = E * (f.head<3>() - r.cross(f.tail<3>()));
    out.tail<3>() = E * f.tail<3>();
    return out;
  }

  // Force transform by the inverse of this transform (B -> A coordinates).
  Vec6 apply_force_inverse(const Vec6& f) const {
    Vec6 out;
    const Vec3 fa = E.transpose() * f.tail<3>();
    out.tail<3>() = fa;
    out.head<3>() = E.transpose() * f.head<3>() + r.cross(fa);
    return out;
  }

  Vec6 apply_motion_inverse(const Vec6& m) const {
    Vec6 out;
    const Vec3 wa = E.transpose() * m.head<3>();
    out.head<3>() = wa;
    out.tail<3>() = E.transpose() * m.tail<3>() + r.cross(wa);
    return out;
  }

  // ^C X_A = (^C X_B) * (^B X_A), where *this is ^C X_B and other is ^B X_A.
  SpTransform operator*(const SpTransform& other) const {
    SpTransform out;
    out.E = E * other.E;
    out.r = other.r + other.E.transpose() * r;
    return out;
  }

  SpTransform inverse() const {
    SpTransform out;
    out.E = E.transpose();
    out.r = -(E * r);
    return out;
  }

  Mat6 motion_matrix() const {
    Mat6 X = Mat6::Zero();
    X.topLeftCorner<3, 3>() = E;
    X.bottomRightCorner<3, 3>() = E;
    X.bottomLeftCorner<3, 3>() = -E * skew(r);
    return X;
  }
};

// Motion cross product: v x m.
inline Vec6 cross_motion(const Vec6& v, const Vec6& m) {
  Vec6 out;
  out.head<3>() = v.head<3>().cross(m.head<3>());
  out.tail<3>() = v.head<3>().cross(m.tail<3>()) + v.tail<3>().cross(m.head<3>());
  return out;
}

// Force cross product: v x* f.
inline Vec6 cross_force(const Vec6& v, const Vec6& f) {
  Vec6 out;
  out.head<3>() = v.head<3>().cross(f.head<3>()) + v.tail<3>().cross(f.tail<3>());
  out.tail<3>() = v.head<3>().cross(f.tail<3>());
  return out;
}

// Spatial rigid-body inertia from mass, COM offset, and rotational inertia
// about the COM, all in the body frame.
struct SpInertia {
  Mat6 I = Mat6::Zero();

  static SpInertia from_params(double mass, const Vec3& com, const Mat3& I_com) {
    SpInertia out;
    const Mat3 cx = skew(com);
    out.I.topLeftCorner<3, 3>() = I_com + mass * cx * cx.transpose();
    out.I.topRightCorner<3, 3>() = mass * cx;
    out.I.bottomLeftCorner<3, 3>() = mass * cx.transpose();
    out.I.bottomRightCorner<3, 3>() = mass * Mat3::Identity();
    return out;
  }

  Vec6 operator*(const Vec6& v) const { return I * v; }

  // ^A I = X^T ^B I X for X = ^B X_A.
  Mat6 transform_to_parent(const SpTransform& X) const {
    const Mat6 Xm = X.motion_matrix();
    return Xm.transpose() * I * Xm;
  }
};

}  // namespace mobnet
