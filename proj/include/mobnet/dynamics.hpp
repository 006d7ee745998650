#pragma once

// Exact rigid-body quantities: mass matrix (composite rigid body), inverse
// dynamics (recursive Newton-Euler), point Jacobians, forward dynamics, and
// the momentum-observer beta term C^T qd - g.

#include <vector>

#include "mobnet/model.hpp"
#include "mobnet/spatial.hpp"

namespace mobnet {

struct DynState {
  VecX q;   // n_v
  VecX qd;  // n_v
};

// An external wrench applied at a point on a link, world frame, [force; torque].
struct ExternalWrench {
  int link = -1;
  Vec3 local_point = Vec3::Zero();
  Vec6 wrench = Vec6::Zero();  // [f(3); n(3)] in world coordinates
};

struct ContactJacobian {
  int link = -1;
  Vec3 local_point = Vec3::Zero();
  MatX J;  // 6 x n_v, rows [linear(3); angular(3)], world frame
};

namespace detail {

struct JointKin {
  SpTransform X_up;  // ^child X_parent-link
  Vec6 S;            // motion subspace in child coordinates
};

inline JointKin joint_kinematics(const JointSpec& j, double q) {
  JointKin k;
  SpTransform X_tree = SpTransform::from_frame(j.origin_R, j.origin_p);
  SpTransform X_joint;
  k.S.setZero();
  if (j.type == JointType::Revolute) {
    X_joint.E = rot_axis(j.axis, q).transpose();
    k.S.head<3>() = j.axis;
  } else {
    X_joint.r = j.axis * q;
    k.S.tail<3>() = j.axis;
  }
  k.X_up = X_joint * X_tree;
  return k;
}

}  // namespace detail

// Forward-kinematics cache: per-joint transforms and world poses.
struct Kinematics {
  std::vector<detail::JointKin> jk;       // per joint
  std::vector<SpTransform> X_world;       // ^i X_world per joint/child-link
  std::vector<Mat3> R_world;              // child-link orientation in world
  std::vector<Vec3> p_world;              // child-link origin in world

  static Kinematics compute(const RobotModel& m, const VecX& q) {
    Kinematics k;
    const int n = m.n_v();
    k.jk.resize(n);
    k.X_world.resize(n);
    k.R_world.resize(n);
    k.p_world.resize(n);
    for (int i = 0; i < n; ++i) {
      k.jk[i] = detail::joint_kinematics(m.joints[i], q[i]);
      const int pj = m.parent_joint_of(i);
      k.X_world[i] = pj < 0 ? k.jk[i].X_up : k.jk[i].X_up * k.X_world[pj];
      k.R_world[i] = k.X_world[i].E.transpose();
      // X_world maps world -> link; link origin in world is X_world.r of the
      // accumulated transform expressed in world coordinates
      k.p_world[i] = k.X_world[i].r;
    }
    return k;
  }

  Vec3 point_world(int joint, const Vec3& local) const {
    return p_world[joint] + R_world[joint] * local;
  }
};

inline MatX mass_matrix(const RobotModel& m, const VecX& q) {
  const int n = m.n_v();
  Kinematics kin = Kinematics::compute(m, q);
  std::vector<Mat6> Ic(n);
  for (int i = 0; i < n; ++i) {
    const auto& l = m.links[m.joints[i].child_link];
    Ic[i] = SpInertia::from_params(l.mass, l.com, l.inertia).I;
  }
  MatX M = MatX::Zero(n, n);
  for (int i = n - 1; i >= 0; --i) {
    const int pj = m.parent_joint_of(i);
    if (pj >= 0) {
      const Mat6 Xm = kin.jk[i].X_up.motion_matrix();
      Ic[pj] += Xm.transpose() * Ic[i] * Xm;
    }
    Vec6 F = Ic[i] * kin.jk[i].S;
    M(i, i) = kin.jk[i].S.dot(F);
    int j = i;
    while (m.parent_joint_of(j) >= 0) {
      F = kin.jk[j].X_up.apply_force_inverse(F);
      j = m.parent_joint_of(j);
      M(i, j) = M(j, i) = kin.jk[j].S.dot(F);
    }
  }
  return M;
}

inline VecX inverse_dynamics(const RobotModel& m, const VecX& q, const VecX& qd,
                             const VecX& qdd,
                             const std::vector<ExternalWrench>& wrenches = {}) {
  const int n = m.n_v();
  Kinematics kin = Kinematics::compute(m, q);

  // gravity enters as a fictitious base acceleration
  const Vec6 a_base = (Vec6() << 0, 0, 0, 0, 0, m.gravity).finished();

  std::vector<Vec6> v(n), a(n), f(n);
  for (int i = 0; i < n; ++i) {
    const auto& jk = kin.jk[i];
    const int pj = m.parent_joint_of(i);
    const Vec6 vj = jk.S * qd[i];
    v[i] = (pj < 0 ? vj : jk.X_up.apply_motion(v[pj]) + vj);
    a[i] = (pj < 0 ? jk.X_up.apply_motion(a_base) : jk.X_up.apply_motion(a[pj])) +
           jk.S * qdd[i] + cross_motion(v[i], vj);
    const auto& l = m.links[m.joints[i].child_link];
    const Mat6 I = SpInertia::from_params(l.mass, l.com, l.inertia).I;
    f[i] = I * a[i] + cross_force(v[i], I * v[i]);
  }
  // external wrenches, converted to link coordinates as spatial forces
  for (const auto& w : wrenches) {
    const int ji = m.links[w.link].parent_joint;
    if (ji < 0) continue;  // wrench on a fixed root has no effect
    const Vec3 p = kin.point_world(ji, w.local_point);
    // spatial force about the world origin, [n; f] ordering
    Vec6 fw;
    fw.tail<3>() = w.wrench.head<3>();
    fw.head<3>() = w.wrench.tail<3>() + p.cross(w.wrench.head<3>());
    f[ji] -= kin.X_world[ji].apply_force(fw);
  }
  VecX tau(n);
  for (int i = n - 1; i >= 0; --i) {
    tau[i] = kin.jk[i].S.dot(f[i]);
    const int pj = m.parent_joint_of(i);
    if (pj >= 0) f[pj] += kin.jk[i].X_up.apply_force_inverse(f[i]);
  }
  return tau;
}

inline VecX gravity_vector(const RobotModel& m, const VecX& q) {
  return inverse_dynamics(m, q, VecX::Zero(m.n_v()), VecX::Zero(m.n_v()));
}

inline VecX bias_force(const RobotModel& m, const VecX& q, const VecX& qd) {
  return inverse_dynamics(m, q, qd, VecX::Zero(m.n_v()));
}

inline MatX contact_jacobian_matrix(const RobotModel& m, const Kinematics& kin, int link,
                                    const Vec3& local_point, int* out_joint = nullptr) {
  const int n = m.n_v();
  MatX J = MatX::Zero(6, n);
  int ji = m.links[link].parent_joint;
  if (out_joint) *out_joint = ji;
  if (ji < 0) return J;  // fixed root
  const Vec3 p = kin.point_world(ji, local_point);
  for (int j = ji; j >= 0; j = m.parent_joint_of(j)) {
    const Vec3 axis_w = kin.R_world[j] * m.joints[j].axis;
    if (m.joints[j].type == JointType::Revolute) {
      J.block<3, 1>(0, j) = axis_w.cross(p - kin.p_world[j]);
      J.block<3, 1>(3, j) = axis_w;
    } else {
      J.block<3, 1>(0, j) = axis_w;
    }
  }
  return J;
}

inline ContactJacobian contact_jacobian(const RobotModel& m, const VecX& q,
                                        const std::string& link_name,
                                        const Vec3& local_point) {
  ContactJacobian out;
  out.link = m.link_index(link_name);
  out.local_point = local_point;
  Kinematics kin = Kinematics::compute(m, q);
  out.J = contact_jacobian_matrix(m, kin, out.link, local_point);
  return out;
}

inline VecX external_generalized_force(const RobotModel& m, const VecX& q,
                                       const std::vector<ExternalWrench>& wrenches) {
  VecX tau = VecX::Zero(m.n_v());
  if (wrenches.empty()) return tau;
  Kinematics kin = Kinematics::compute(m, q);
  for (const auto& w : wrenches) {
    const MatX J = contact_jacobian_matrix(m, kin, w.link, w.local_point);
    tau += J.transpose() * w.wrench;
  }
  return tau;
}

inline VecX forward_dynamics(const RobotModel& m, const VecX& q, const VecX& qd,
                             const VecX& tau,
                             const std::vector<ExternalWrench>& wrenches = {}) {
  const VecX rhs =
      tau + external_generalized_force(m, q, wrenches) - bias_force(m, q, qd);
  const MatX M = mass_matrix(m, q);
  Eigen::LDLT<MatX> ldlt(M);
  if (ldlt.info() != Eigen::Success)
    throw std::runtime_error("forward_dynamics: mass matrix factorization failed");
  return ldlt.solve(rhs);
}

// beta = C^T qd - g, using (C^T qd)_i = 1/2 qd^T dM/dq_i qd via central
// finite differences of the mass matrix.
// beta = C^T qd - g. Uses Mdot = C + C^T, so beta = Mdot qd - (C qd + g)
// with Mdot from a single directional finite difference along qd — two mass
// matrices and one bias evaluation regardless of n_v.
inline VecX beta_term(const RobotModel& m, const VecX& q, const VecX& qd,
                      double fd_step = 1e-6) {
  const MatX Mp = mass_matrix(m, q + fd_step * qd);
  const MatX Mm = mass_matrix(m, q - fd_step * qd);
  return ((Mp - Mm) / (2.0 * fd_step)) * qd - bias_force(m, q, qd);
}

// Christoffel-symbol construction of C (finite differences of M); retained as
// an independent route for small models.
inline MatX coriolis_matrix_christoffel(const RobotModel& m, const VecX& q, const VecX& qd,
                                        double fd_step = 1e-6) {
  const int n = m.n_v();
  std::vector<MatX> dM(n);
  VecX qp = q;
  for (int k = 0; k < n; ++k) {
    qp[k] = q[k] + fd_step;
    const MatX Mp = mass_matrix(m, qp);
    qp[k] = q[k] - fd_step;
    const MatX Mm = mass_matrix(m, qp);
    qp[k] = q[k];
    dM[k] = (Mp - Mm) / (2.0 * fd_step);
  }
  MatX C = MatX::Zero(n, n);
  for (int i = 0; i < n; ++i)
    for (int j = 0; j < n; ++j)
      for (int k = 0; k < n; ++k)
        C(i, j) += 0.5 * (dM[k](i, j) + dM[j](i, k) - dM[i](j, k)) * qd[k];
  return C;
}

inline VecX beta_term_christoffel(const RobotModel& m, const VecX& q, const VecX& qd) {
  return coriolis_matrix_christoffel(m, q, qd).transpose() * qd - gravity_vector(m, q);
}

inline double potential_energy(const RobotModel& m, const VecX& q) {
  Kinematics kin = Kinematics::compute(m, q);
  double V = 0.0;
  for (int i = 0; i < m.n_v(); ++i) {
    const auto& l = m.links[m.joints[i].child_link];
    V += l.mass * m.gravity * kin.point_world(i, l.com).z();
  }
  return V;
}

inline double total_energy(const RobotModel& m, const VecX& q, const VecX& qd) {
  return 0.5 * qd.dot(mass_matrix(m, q) * qd) + potential_energy(m, q);
}

}  // namespace mobnet
