#pragma once

// Robot description: kinematic tree with per-link inertial parameters,
// parsed from the project's JSON model schema. A model optionally carries a
// nominal (perturbed) parameter set next to the true one.

#include <map>
#include <optional>
#include <stdexcept>
#include <string>
#include <vector>

#include <json.hpp>

#include "mobnet/spatial.hpp"

namespace mobnet {

using json = nlohmann::json;

struct ModelError : std::runtime_error {
  using std::runtime_error::runtime_error;
};

enum class JointType { Revolute, Prismatic };

enum class BaseMode { Fixed, FloatingPlanar, FloatingSpatial };

struct JointLimits {
  double lower = -1e9;
  double upper = 1e9;
  double velocity = 1e9;
  double effort = 1e9;
};

struct JointSpec {
  std::string name;
  JointType type = JointType::Revolute;
  int parent_link = -1;  // index into links
  int child_link = -1;
  Vec3 axis = Vec3::UnitZ();       // in the joint origin frame
  Mat3 origin_R = Mat3::Identity();  // child origin orientation in parent link frame
  Vec3 origin_p = Vec3::Zero();      // child origin position in parent link frame
  JointLimits limits;
  bool is_virtual = false;
};

struct LinkSpec {
  std::string name;
  int parent_joint = -1;  // -1 for the root link
  double mass = 0.0;
  Vec3 com = Vec3::Zero();   // in the link (child joint) frame
  Mat3 inertia = Mat3::Zero();  // about COM, link frame
  bool is_virtual = false;
};

struct RobotModel {
  std::string name;
  BaseMode base_mode = BaseMode::Fixed;
  std::vector<LinkSpec> links;    // links[0] is the (possibly virtual) root
  std::vector<JointSpec> joints;  // joints[i] connects links, virtual first
  int n_virtual = 0;              // 0, 3, or 6
  std::vector<int> contact_links;  // links that may bear ground contact (feet)
  double nominal_inertial_scale = 1.0;
  double gravity = 9.81;

  int n_v() const { return static_cast<int>(joints.size()); }
  int n_actuated() const { return n_v() - n_virtual; }

  // Parent joint index of joint j (-1 if its parent link is the root).
  int parent_joint_of(int j) const { return links[joints[j].parent_link].parent_joint; }

  int joint_index(const std::string& jname) const {
    for (int i = 0; i < n_v(); ++i)
      if (joints[i].name == jname) return i;
    throw ModelError("unknown joint: " + jname);
  }

  int link_index(const std::string& lname) const {
    for (size_t i = 0; i < links.size(); ++i)
      if (links[i].name == lname) return static_cast<int>(i);
    throw ModelError("unknown link: " + lname);
  }
};

namespace detail {

inline void check_spd(const Mat3& I, const std::string& where) {
  if ((I - I.transpose()).cwiseAbs().maxCoeff() > 1e-9 * (1.0 + I.cwiseAbs().maxCoeff()))
    throw ModelError(where + ": inertia tensor not symmetric");
  Eigen::LLT<Mat3> llt(I);
  if (llt.info() != Eigen::Success)
    throw ModelError(where + ": inertia tensor not positive definite");
}

inline Vec3 get_vec3(const json& j, const std::string& key, const std::string& where) {
  if (!j.contains(key) || !j[key].is_array() || j[key].size() != 3)
    throw ModelError(where + ": missing or malformed field '" + key + "'");
  return Vec3(j[key][0].get<double>(), j[key][1].get<double>(), j[key][2].get<double>());
}

inline void append_virtual_chain(RobotModel& m) {
  struct VJoint {
    const char* name;
    JointType type;
    Vec3 axis;
  };
  std::vector<VJoint> chain;
  if (m.base_mode == BaseMode::FloatingPlanar) {
    chain = {{"v_x", JointType::Prismatic, Vec3::UnitX()},
             {"v_z", JointType::Prismatic, Vec3::UnitZ()},
             {"v_pitch", JointType::Revolute, Vec3::UnitY()}};
  } else {
    // world translation then Z-Y-X Euler rotations
    chain = {{"v_x", JointType::Prismatic, Vec3::UnitX()},
             {"v_y", JointType::Prismatic, Vec3::UnitY()},
             {"v_z", JointType::Prismatic, Vec3::UnitZ()},
             {"v_yaw", JointType::Revolute, Vec3::UnitZ()},
             {"v_pitch", JointType::Revolute, Vec3::UnitY()},
             {"v_roll", JointType::Revolute, Vec3::UnitX()}};
  }
  m.n_virtual = static_cast<int>(chain.size());
  for (size_t i = 0; i < chain.size(); ++i) {
    LinkSpec parent;
    parent.name = i == 0 ? "world" : ("v_link_" + std::to_string(i));
    parent.is_virtual = true;
    parent.parent_joint = static_cast<int>(i) - 1;  // -1 for the world root
    m.links.push_back(parent);
    JointSpec vj;
    vj.name = chain[i].name;
    vj.type = chain[i].type;
    vj.axis = chain[i].axis;
    vj.is_virtual = true;
    vj.parent_link = static_cast<int>(i);
    vj.child_link = static_cast<int>(i + 1);
    m.joints.push_back(vj);
  }
  // links[n_virtual] will be the parsed root link, child of the last virtual joint
}

}  // namespace detail

inline RobotModel parse_model(const std::string& text) {
  json doc;
  try {
    doc = json::parse(text);
  } catch (const json::exception& e) {
    throw ModelError(std::string("model file is not valid JSON: ") + e.what());
  }
  if (!doc.contains("schema_version")) throw ModelError("missing field 'schema_version'");
  if (doc["schema_version"].get<int>() != 1)
    throw ModelError("unsupported schema_version (expected 1)");

  RobotModel m;
  m.name = doc.value("name", "unnamed");
  const std::string base = doc.value("base_mode", "fixed");
  if (base == "fixed")
    m.base_mode = BaseMode::Fixed;
  else if (base == "floating_planar")
    m.base_mode = BaseMode::FloatingPlanar;
  else if (base == "floating_spatial")
    m.base_mode = BaseMode::FloatingSpatial;
  else
    throw ModelError("base_mode: expected fixed | floating_planar | floating_spatial");

  if (m.base_mode != BaseMode::Fixed) detail::append_virtual_chain(m);
  const int link_offset = static_cast<int>(m.links.size());
  const int joint_offset = static_cast<int>(m.joints.size());

  if (!doc.contains("links") || doc["links"].empty()) throw ModelError("missing 'links'");
  if (!doc.contains("joints")) throw ModelError("missing 'joints'");

  std::map<std::string, int> link_ids;
  for (const auto& jl : doc["links"]) {
    LinkSpec l;
    l.name = jl.value("name", "");
    const std::string where = "link '" + l.name + "'";
    if (l.name.empty()) throw ModelError("link with missing 'name'");
    if (link_ids.count(l.name)) throw ModelError("duplicate link name: " + l.name);
    if (!jl.contains("mass")) throw ModelError(where + ": missing 'mass'");
    l.mass = jl["mass"].get<double>();
    if (l.mass <= 0.0) throw ModelError(where + ": mass must be > 0");
    l.com = detail::get_vec3(jl, "com", where);
    if (!jl.contains("inertia") || jl["inertia"].size() != 6)
      throw ModelError(where + ": 'inertia' must have 6 entries [ixx iyy izz ixy ixz iyz]");
    const auto& I6 = jl["inertia"];
    l.inertia << I6[0].get<double>(), I6[3].get<double>(), I6[4].get<double>(),
        I6[3].get<double>(), I6[1].get<double>(), I6[5].get<double>(),
        I6[4].get<double>(), I6[5].get<double>(), I6[2].get<double>();
    detail::check_spd(l.inertia, where);
    link_ids[l.name] = static_cast<int>(m.links.size());
    m.links.push_back(l);
  }

  std::map<std::string, int> joint_ids;
  for (const auto& jj : doc["joints"]) {
    JointSpec j;
    j.name = jj.value("name", "");
    const std::string where = "joint '" + j.name + "'";
    if (j.name.empty()) throw ModelError("joint with missing 'name'");
    if (joint_ids.count(j.name)) throw ModelError("duplicate joint name: " + j.name);
    const std::string type = jj.value("type", "");
    if (type == "revolute")
      j.type = JointType::Revolute;
    else if (type == "prismatic")
      j.type = JointType::Prismatic;
    else
      throw ModelError(where + ": type must be revolute | prismatic");
    for (const char* key : {"parent_link", "child_link"})
      if (!jj.contains(key) || !link_ids.count(jj[key].get<std::string>()))
        throw ModelError(where + ": missing or unknown '" + std::string(key) + "'");
    j.parent_link = link_ids[jj["parent_link"].get<std::string>()];
    j.child_link = link_ids[jj["child_link"].get<std::string>()];
    j.axis = detail::get_vec3(jj, "axis", where);
    if (std::abs(j.axis.norm() - 1.0) > 1e-9)
      throw ModelError(where + ": axis must have unit norm");
    if (jj.contains("origin")) {
      j.origin_p = detail::get_vec3(jj["origin"], "xyz", where);
      j.origin_R = rot_rpy(detail::get_vec3(jj["origin"], "rpy", where));
    }
    if (jj.contains("limits")) {
      const auto& lim = jj["limits"];
      j.limits.lower = lim.value("lower", -1e9);
      j.limits.upper = lim.value("upper", 1e9);
      j.limits.velocity = lim.value("velocity", 1e9);
      j.limits.effort = lim.value("effort", 1e9);
      if (j.limits.lower >= j.limits.upper)
        throw ModelError(where + ": limits must satisfy lower < upper");
    }
    joint_ids[j.name] = static_cast<int>(m.joints.size());
    m.joints.push_back(j);
  }

  // wire parent joints and validate the tree
  const int root = link_offset;
  for (size_t ji = joint_offset; ji < m.joints.size(); ++ji) {
    auto& j = m.joints[ji];
    auto& child = m.links[j.child_link];
    if (child.parent_joint != -1)
      throw ModelError("link '" + child.name + "' has more than one parent joint");
    child.parent_joint = static_cast<int>(ji);
  }
  if (m.base_mode != BaseMode::Fixed) {
    // the parsed root becomes the child of the last virtual joint
    if (m.links[root].parent_joint != -1)
      throw ModelError("root link '" + m.links[root].name + "' must not have a parent joint");
    m.joints[joint_offset - 1].child_link = root;
    m.links[root].parent_joint = joint_offset - 1;
  }
  int n_roots = 0;
  for (size_t li = link_offset; li < m.links.size(); ++li)
    if (m.links[li].parent_joint == -1 ||
        (static_cast<int>(li) == root && m.base_mode != BaseMode::Fixed))
      ++n_roots;
  if (m.base_mode == BaseMode::Fixed && n_roots != 1)
    throw ModelError("tree must have exactly one root link");
  // cycle / ordering check: every link must reach the root by parent traversal
  for (size_t li = link_offset; li < m.links.size(); ++li) {
    int cur = static_cast<int>(li);
    size_t hops = 0;
    while (m.links[cur].parent_joint != -1) {
      cur = m.joints[m.links[cur].parent_joint].parent_link;
      if (++hops > m.links.size()) throw ModelError("cycle detected in kinematic tree");
    }
  }
  // joints must be ordered parent-before-child for the dynamics algorithms
  for (size_t ji = 0; ji < m.joints.size(); ++ji) {
    const int pj = m.parent_joint_of(static_cast<int>(ji));
    if (pj >= static_cast<int>(ji))
      throw ModelError("joint '" + m.joints[ji].name + "' appears before its parent joint");
  }

  if (doc.contains("nominal")) {
    m.nominal_inertial_scale = doc["nominal"].value("inertial_scale", 1.0);
    if (m.nominal_inertial_scale <= 0.0) throw ModelError("nominal.inertial_scale must be > 0");
  }
  m.gravity = doc.value("gravity", 9.81);
  if (doc.contains("contact_links"))
    for (const auto& cl : doc["contact_links"])
      m.contact_links.push_back(m.link_index(cl.get<std::string>()));
  return m;
}

inline std::string serialize_model(const RobotModel& m) {
  json doc;
  doc["schema_version"] = 1;
  doc["name"] = m.name;
  doc["base_mode"] = m.base_mode == BaseMode::Fixed          ? "fixed"
                     : m.base_mode == BaseMode::FloatingPlanar ? "floating_planar"
                                                               : "floating_spatial";
  doc["gravity"] = m.gravity;
  if (m.nominal_inertial_scale != 1.0)
    doc["nominal"] = {{"inertial_scale", m.nominal_inertial_scale}};
  doc["links"] = json::array();
  for (const auto& l : m.links) {
    if (l.is_virtual) continue;
    json jl;
    jl["name"] = l.name;
    jl["mass"] = l.mass;
    jl["com"] = {l.com.x(), l.com.y(), l.com.z()};
    jl["inertia"] = {l.inertia(0, 0), l.inertia(1, 1), l.inertia(2, 2),
                     l.inertia(0, 1), l.inertia(0, 2), l.inertia(1, 2)};
    doc["links"].push_back(jl);
  }
  doc["joints"] = json::array();
  for (const auto& j : m.joints) {
    if (j.is_virtual) continue;
    json jj;
    jj["name"] = j.name;
    jj["type"] = j.type == JointType::Revolute ? "revolute" : "prismatic";
    jj["parent_link"] = m.links[j.parent_link].name;
    jj["child_link"] = m.links[j.child_link].name;
    jj["axis"] = {j.axis.x(), j.axis.y(), j.axis.z()};
    const Vec3 rpy = j.origin_R.eulerAngles(2, 1, 0).reverse();
    jj["origin"] = {{"xyz", {j.origin_p.x(), j.origin_p.y(), j.origin_p.z()}},
                    {"rpy", {rpy.x(), rpy.y(), rpy.z()}}};
    jj["limits"] = {{"lower", j.limits.lower},
                    {"upper", j.limits.upper},
                    {"velocity", j.limits.velocity},
                    {"effort", j.limits.effort}};
    doc["joints"].push_back(jj);
  }
  if (!m.contact_links.empty()) {
    doc["contact_links"] = json::array();
    for (int li : m.contact_links) doc["contact_links"].push_back(m.links[li].name);
  }
  return doc.dump(2);
}

// Scale every link mass and inertia entry; kinematics untouched.
inline RobotModel perturb_inertial(const RobotModel& model, double scale) {
  if (scale <= 0.0) throw ModelError("perturb_inertial: scale must be > 0");
  RobotModel out = model;
  for (auto& l : out.links) {
    l.mass *= scale;
    l.inertia *= scale;
  }
  return out;
}

inline RobotModel nominal_model(const RobotModel& model) {
  return perturb_inertial(model, model.nominal_inertial_scale);
}

// --- limb grouping ------------------------------------------------------

enum class TargetMode { ResidualMinusExternal, ResidualOnly };

struct LimbGroup {
  std::string id;
  std::vector<int> joints;          // actuated joint indices, ordered
  std::vector<int> ancestor_chain;  // actuated joints on the base->subtree-root path
  std::vector<int> descendants;     // actuated joints in subtrees hanging below this group
  bool load_bearing = false;        // group carries a declared contact link
  TargetMode target_mode = TargetMode::ResidualOnly;
};

struct LimbGrouping {
  std::vector<LimbGroup> groups;
  std::optional<int> virtual_group;  // index into groups
  std::vector<int> virtual_joints;

  const LimbGroup* find(const std::string& id) const {
    for (const auto& g : groups)
      if (g.id == id) return &g;
    return nullptr;
  }
};

namespace detail {

// Splits the subtree rooted at joint `j` into groups: the serial chain down to
// the first branch point forms one group, each branch recurses into new groups.
inline void split_subtree(const RobotModel& m, const std::vector<std::vector<int>>& children,
                          int j, std::vector<int> chain_above, std::vector<LimbGroup>& out) {
  LimbGroup g;
  g.ancestor_chain = chain_above;
  int cur = j;
  while (true) {
    g.joints.push_back(cur);
    const auto& kids = children[cur];
    if (kids.empty()) break;
    if (kids.size() == 1) {
      cur = kids[0];
      continue;
    }
    // branch point: this group ends here, children become their own groups
    std::vector<int> chain = chain_above;
    chain.insert(chain.end(), g.joints.begin(), g.joints.end());
    const size_t first_child_group = out.size() + 1;
    out.push_back(g);
    for (int k : kids) split_subtree(m, children, k, chain, out);
    // collect descendants for the group we just closed
    auto& closed = out[first_child_group - 1];
    for (size_t gi = first_child_group; gi < out.size(); ++gi)
      for (int dj : out[gi].joints) closed.descendants.push_back(dj);
    return;
  }
  out.push_back(g);
}

}  // namespace detail

// Derives limb groups from tree topology: one group per maximal serial
// segment hanging off the base chain, splitting at branch points so that
// subtrees beyond a branch become their own groups with the chain joints as
// ancestors. `single_group` collapses all actuated joints into one group.
inline LimbGrouping derive_groups(const RobotModel& model, bool single_group = false) {
  LimbGrouping out;
  for (int j = 0; j < model.n_virtual; ++j) out.virtual_joints.push_back(j);

  if (single_group) {
    LimbGroup g;
    g.id = "ALL";
    for (int j = model.n_virtual; j < model.n_v(); ++j) g.joints.push_back(j);
    out.groups.push_back(g);
  } else {
    std::vector<std::vector<int>> children(model.n_v());
    std::vector<int> base_children;
    for (int j = model.n_virtual; j < model.n_v(); ++j) {
      const int pj = model.parent_joint_of(j);
      if (pj < model.n_virtual)
        base_children.push_back(j);
      else
        children[pj].push_back(j);
    }
    for (int j : base_children)
      detail::split_subtree(model, children, j, {}, out.groups);
    for (auto& g : out.groups)
      g.id = model.links[model.joints[g.joints.front()].child_link].name;
  }

  // a group is load-bearing iff its own links carry a declared contact link;
  // those groups (and the virtual group) target r - tau_e, the rest target r
  for (auto& g : out.groups) {
    for (int j : g.joints)
      for (int cl : model.contact_links)
        if (model.joints[j].child_link == cl) g.load_bearing = true;
    g.target_mode =
        g.load_bearing ? TargetMode::ResidualMinusExternal : TargetMode::ResidualOnly;
  }

  if (model.n_virtual > 0) {
    LimbGroup v;
    v.id = "V";
    v.joints = out.virtual_joints;
    for (int j = model.n_virtual; j < model.n_v(); ++j) v.descendants.push_back(j);
    v.target_mode = TargetMode::ResidualMinusExternal;
    out.virtual_group = static_cast<int>(out.groups.size());
    out.groups.push_back(v);
  }
  return out;
}

}  // namespace mobnet
