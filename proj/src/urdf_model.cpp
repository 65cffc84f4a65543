// Copyright 2026 The ecflow Authors
//
// Licensed under the Apache License, Version 2.0 (the "License");
// you may not use this file except in compliance with the License.
// You may obtain a copy of the License at
//
//     http://www.apache.org/licenses/LICENSE-2.0
//
// Unless required by applicable law or agreed to in writing, software
// distributed under the License is distributed on an "AS IS" BASIS,
// WITHOUT WARRANTIES OR CONDITIONS OF ANY KIND, either express or implied.
// See the License for the specific language governing permissions and
// limitations under the License.

#include "ecflow/urdf_model.hpp"

#include <algorithm>
#include <boost/property_tree/ptree.hpp>
#include <boost/property_tree/xml_parser.hpp>
#include <cmath>
#include <cstdio>
#include <map>
#include <optional>
#include <set>
#include <sstream>

#include "ecflow/errors.hpp"

namespace ecflow {

namespace pt = boost::property_tree;

namespace {

constexpr double kDefaultSphereRadius = 0.02;

Eigen::Vector3d parse_vec3(const std::string& text, const char* what) {
  Eigen::Vector3d v;
  std::istringstream is(text);
  if (!(is >> v.x() >> v.y() >> v.z())) {
    throw Error(ErrorCode::kMalformedXml, std::string("bad 3-vector in ") + what + ": '" + text + "'");
  }
  return v;
}

Pose parse_origin(const pt::ptree& node) {
  Eigen::Vector3d xyz = Eigen::Vector3d::Zero();
  Eigen::Vector3d rpy = Eigen::Vector3d::Zero();
  if (auto s = node.get_optional<std::string>("<xmlattr>.xyz")) xyz = parse_vec3(*s, "origin xyz");
  if (auto s = node.get_optional<std::string>("<xmlattr>.rpy")) rpy = parse_vec3(*s, "origin rpy");
  return Pose::from_rpy(xyz, rpy);
}

std::optional<LinkGeometry> parse_geometry(const pt::ptree& body, const std::string& link_name,
                                           GeometrySource source,
                                           std::vector<std::string>* warnings) {
  auto geom = body.get_child_optional("geometry");
  if (!geom) return std::nullopt;

  LinkGeometry g;
  g.link_name = link_name;
  g.source = source;
  if (auto origin = body.get_child_optional("origin")) g.origin = parse_origin(*origin);

  if (auto box = geom->get_child_optional("box")) {
    g.kind = GeometryKind::kBox;
    g.dims = parse_vec3(box->get<std::string>("<xmlattr>.size", ""), "box size");
  } else if (auto cyl = geom->get_child_optional("cylinder")) {
    g.kind = GeometryKind::kCylinder;
    g.dims = Eigen::Vector3d(cyl->get<double>("<xmlattr>.radius", 0.0),
                             cyl->get<double>("<xmlattr>.length", 0.0), 0.0);
  } else if (auto sph = geom->get_child_optional("sphere")) {
    g.kind = GeometryKind::kSphere;
    g.dims = Eigen::Vector3d(sph->get<double>("<xmlattr>.radius", 0.0), 0.0, 0.0);
  } else {
    if (warnings) warnings->push_back("link '" + link_name + "': unsupported geometry primitive ignored");
    return std::nullopt;
  }

  int ndims = g.kind == GeometryKind::kBox ? 3 : (g.kind == GeometryKind::kCylinder ? 2 : 1);
  for (int i = 0; i < ndims; ++i) {
    if (!(g.dims[i] > 0.0)) {
      throw Error(ErrorCode::kFormatError,
                  "link '" + link_name + "': geometry dimension " + std::to_string(i) + " must be > 0");
    }
  }
  return g;
}

std::string fmt_double(double v) {
  char buf[32];
  std::snprintf(buf, sizeof(buf), "%.17g", v);
  return buf;
}

std::string fmt_vec3(const Eigen::Vector3d& v) {
  return fmt_double(v.x()) + " " + fmt_double(v.y()) + " " + fmt_double(v.z());
}

// Recover extrinsic X-Y-Z rpy from a rotation; parse(from_rpy(rpy)) is exact
// because both sides go through the same quaternion construction.
Eigen::Vector3d rotation_to_rpy(const Eigen::Quaterniond& q) {
  Eigen::Matrix3d r = q.toRotationMatrix();
  double pitch = std::asin(std::clamp(-r(2, 0), -1.0, 1.0));
  double roll, yaw;
  if (std::abs(std::cos(pitch)) > 1e-12) {
    roll = std::atan2(r(2, 1), r(2, 2));
    yaw = std::atan2(r(1, 0), r(0, 0));
  } else {  // gimbal lock: fold yaw into roll
    roll = std::atan2(-r(1, 2), r(1, 1));
    yaw = 0.0;
  }
  return {roll, pitch, yaw};
}

void emit_origin(std::ostringstream& os, const Pose& origin, const char* indent) {
  Eigen::Vector3d rpy = rotation_to_rpy(origin.rotation);
  os << indent << "<origin xyz=\"" << fmt_vec3(origin.translation) << "\" rpy=\"" << fmt_vec3(rpy)
     << "\"/>\n";
}

}  // namespace

int KinematicChain::link_index(const std::string& link) const {
  auto it = std::find(links.begin(), links.end(), link);
  return it == links.end() ? -1 : static_cast<int>(it - links.begin());
}

std::vector<int> KinematicChain::config_slots() const {
  std::vector<int> slots(joints.size(), -1);
  int next = 0;
  for (size_t i = 0; i < joints.size(); ++i) {
    if (joints[i].mobile()) slots[i] = next++;
  }
  return slots;
}

std::vector<int> KinematicChain::rigid_groups() const {
  std::vector<int> groups(links.size(), 0);
  int group = 0;
  for (size_t i = 0; i < joints.size(); ++i) {
    if (joints[i].mobile()) ++group;
    groups[i + 1] = group;
  }
  return groups;
}

KinematicChain parse_urdf(const std::string& xml_text, std::vector<std::string>* warnings) {
  pt::ptree tree;
  try {
    std::istringstream is(xml_text);
    pt::read_xml(is, tree, pt::xml_parser::trim_whitespace);
  } catch (const pt::xml_parser_error& e) {
    throw Error(ErrorCode::kMalformedXml, e.what());
  }

  auto robot = tree.get_child_optional("robot");
  if (!robot) throw Error(ErrorCode::kMalformedXml, "no <robot> element");

  struct LinkInfo {
    std::optional<LinkGeometry> collision;
    std::optional<LinkGeometry> visual;
  };
  std::map<std::string, LinkInfo> link_infos;
  std::vector<std::string> link_order;
  std::vector<JointSpec> joints;

  for (const auto& [tag, node] : *robot) {
    if (tag == "<xmlattr>") continue;
    if (tag == "link") {
      std::string name = node.get<std::string>("<xmlattr>.name", "");
      if (name.empty()) throw Error(ErrorCode::kMalformedXml, "link without name");
      if (link_infos.count(name)) {
        throw Error(ErrorCode::kMalformedXml, "duplicate link '" + name + "'");
      }
      LinkInfo info;
      for (const auto& [ltag, lnode] : node) {
        if (ltag == "collision" && !info.collision) {
          info.collision = parse_geometry(lnode, name, GeometrySource::kCollision, warnings);
        } else if (ltag == "visual" && !info.visual) {
          info.visual = parse_geometry(lnode, name, GeometrySource::kVisual, warnings);
        } else if (ltag != "<xmlattr>" && ltag != "collision" && ltag != "visual") {
          if (warnings) warnings->push_back("link '" + name + "': ignored tag <" + ltag + ">");
        }
      }
      link_infos[name] = std::move(info);
      link_order.push_back(name);
    } else if (tag == "joint") {
      JointSpec j;
      j.name = node.get<std::string>("<xmlattr>.name", "");
      std::string type = node.get<std::string>("<xmlattr>.type", "");
      if (type == "revolute") {
        j.kind = JointKind::kRevolute;
      } else if (type == "prismatic") {
        j.kind = JointKind::kPrismatic;
      } else if (type == "fixed") {
        j.kind = JointKind::kFixed;
      } else {
        throw Error(ErrorCode::kUnsupportedJoint,
                    "joint '" + j.name + "': type '" + type + "' not supported");
      }
      j.parent_link = node.get<std::string>("parent.<xmlattr>.link", "");
      j.child_link = node.get<std::string>("child.<xmlattr>.link", "");
      if (j.parent_link.empty() || j.child_link.empty()) {
        throw Error(ErrorCode::kMalformedXml, "joint '" + j.name + "': missing parent/child link");
      }
      if (auto origin = node.get_child_optional("origin")) j.origin = parse_origin(*origin);

      if (j.mobile()) {
        Eigen::Vector3d axis = Eigen::Vector3d::UnitX();  // URDF default
        if (auto an = node.get_child_optional("axis")) {
          axis = parse_vec3(an->get<std::string>("<xmlattr>.xyz", "1 0 0"), "joint axis");
        }
        double norm = axis.norm();
        if (norm < 1e-12) {
          throw Error(ErrorCode::kBadAxis, "joint '" + j.name + "': zero-norm axis");
        }
        j.axis = axis / norm;

        auto limit = node.get_child_optional("limit");
        auto lower = limit ? limit->get_optional<double>("<xmlattr>.lower") : boost::none;
        auto upper = limit ? limit->get_optional<double>("<xmlattr>.upper") : boost::none;
        if (!lower || !upper) {
          throw Error(ErrorCode::kMissingLimit, "joint '" + j.name + "': revolute/prismatic joints need limit lower/upper");
        }
        j.limit_lower = *lower;
        j.limit_upper = *upper;
        if (j.limit_lower > j.limit_upper) {
          throw Error(ErrorCode::kFormatError, "joint '" + j.name + "': lower > upper");
        }
      } else {
        if (node.get_child_optional("axis") || node.get_child_optional("limit")) {
          if (warnings) warnings->push_back("joint '" + j.name + "': axis/limit on fixed joint ignored");
        }
      }
      for (const auto& [jtag, _] : node) {
        if (jtag != "<xmlattr>" && jtag != "origin" && jtag != "parent" && jtag != "child" &&
            jtag != "axis" && jtag != "limit") {
          if (warnings) warnings->push_back("joint '" + j.name + "': ignored tag <" + jtag + ">");
        }
      }
      joints.push_back(std::move(j));
    } else {
      if (warnings) warnings->push_back("ignored tag <" + tag + ">");
    }
  }

  if (link_infos.empty()) throw Error(ErrorCode::kMalformedXml, "robot has no links");

  // Assemble the serial chain: unique root, at most one child joint per link.
  std::map<std::string, const JointSpec*> child_joint_of_parent;
  std::set<std::string> is_child;
  for (const auto& j : joints) {
    if (!link_infos.count(j.parent_link)) {
      throw Error(ErrorCode::kMalformedXml, "joint '" + j.name + "': unknown parent link '" + j.parent_link + "'");
    }
    if (!link_infos.count(j.child_link)) {
      throw Error(ErrorCode::kMalformedXml, "joint '" + j.name + "': unknown child link '" + j.child_link + "'");
    }
    if (child_joint_of_parent.count(j.parent_link)) {
      throw Error(ErrorCode::kBranchingChain, "link '" + j.parent_link + "' has multiple child joints");
    }
    if (is_child.count(j.child_link)) {
      throw Error(ErrorCode::kBranchingChain, "link '" + j.child_link + "' has multiple parent joints");
    }
    child_joint_of_parent[j.parent_link] = &j;
    is_child.insert(j.child_link);
  }

  std::vector<std::string> roots;
  for (const auto& name : link_order) {
    if (!is_child.count(name)) roots.push_back(name);
  }
  if (roots.size() != 1) {
    throw Error(ErrorCode::kBranchingChain,
                "expected exactly one root link, found " + std::to_string(roots.size()));
  }

  KinematicChain chain;
  chain.name = robot->get<std::string>("<xmlattr>.name", "robot");
  std::string current = roots[0];
  chain.links.push_back(current);
  while (child_joint_of_parent.count(current)) {
    const JointSpec* j = child_joint_of_parent[current];
    chain.joints.push_back(*j);
    current = j->child_link;
    chain.links.push_back(current);
  }
  if (chain.links.size() != link_infos.size()) {
    throw Error(ErrorCode::kBranchingChain, "links are not a single serial chain");
  }

  for (const auto& name : chain.links) {
    const LinkInfo& info = link_infos[name];
    if (info.collision) {
      chain.geometries[name] = *info.collision;
    } else if (info.visual) {
      chain.geometries[name] = *info.visual;
    } else {
      LinkGeometry g;
      g.link_name = name;
      g.kind = GeometryKind::kSphere;
      g.dims = Eigen::Vector3d(kDefaultSphereRadius, 0.0, 0.0);
      g.source = GeometrySource::kDefault;
      chain.geometries[name] = g;
    }
  }

  chain.dof = static_cast<int>(std::count_if(chain.joints.begin(), chain.joints.end(),
                                             [](const JointSpec& j) { return j.mobile(); }));
  validate_chain(chain);
  return chain;
}

void validate_chain(const KinematicChain& chain) {
  if (chain.links.size() != chain.joints.size() + 1) {
    throw Error(ErrorCode::kBranchingChain, "links/joints count mismatch");
  }
  if (chain.dof < 1) throw Error(ErrorCode::kEmptyChain, "chain has no non-fixed joint");
  for (size_t i = 0; i < chain.joints.size(); ++i) {
    const JointSpec& j = chain.joints[i];
    if (j.parent_link != chain.links[i] || j.child_link != chain.links[i + 1]) {
      throw Error(ErrorCode::kBranchingChain, "joint '" + j.name + "' breaks the serial order");
    }
    if (j.mobile()) {
      if (std::abs(j.axis.norm() - 1.0) > 1e-9) {
        throw Error(ErrorCode::kBadAxis, "joint '" + j.name + "': axis not unit");
      }
      if (j.limit_lower > j.limit_upper) {
        throw Error(ErrorCode::kFormatError, "joint '" + j.name + "': lower > upper");
      }
    }
  }
  for (const auto& name : chain.links) {
    if (!chain.geometries.count(name)) {
      throw Error(ErrorCode::kFormatError, "link '" + name + "' has no geometry");
    }
  }
}

std::string serialize_urdf(const KinematicChain& chain) {
  std::ostringstream os;
  os << "<robot name=\"" << chain.name << "\">\n";
  for (const auto& link : chain.links) {
    const LinkGeometry& g = chain.geometries.at(link);
    os << "  <link name=\"" << link << "\">\n";
    if (g.source != GeometrySource::kDefault) {
      const char* tag = g.source == GeometrySource::kCollision ? "collision" : "visual";
      os << "    <" << tag << ">\n";
      emit_origin(os, g.origin, "      ");
      os << "      <geometry>\n";
      switch (g.kind) {
        case GeometryKind::kBox:
          os << "        <box size=\"" << fmt_vec3(g.dims) << "\"/>\n";
          break;
        case GeometryKind::kCylinder:
          os << "        <cylinder radius=\"" << fmt_double(g.dims[0]) << "\" length=\""
             << fmt_double(g.dims[1]) << "\"/>\n";
          break;
        case GeometryKind::kSphere:
          os << "        <sphere radius=\"" << fmt_double(g.dims[0]) << "\"/>\n";
          break;
      }
      os << "      </geometry>\n";
      os << "    </" << tag << ">\n";
    }
    os << "  </link>\n";
  }
  for (const auto& j : chain.joints) {
    const char* type = j.kind == JointKind::kRevolute    ? "revolute"
                       : j.kind == JointKind::kPrismatic ? "prismatic"
                                                         : "fixed";
    os << "  <joint name=\"" << j.name << "\" type=\"" << type << "\">\n";
    os << "    <parent link=\"" << j.parent_link << "\"/>\n";
    os << "    <child link=\"" << j.child_link << "\"/>\n";
    emit_origin(os, j.origin, "    ");
    if (j.mobile()) {
      os << "    <axis xyz=\"" << fmt_vec3(j.axis) << "\"/>\n";
      os << "    <limit lower=\"" << fmt_double(j.limit_lower) << "\" upper=\""
         << fmt_double(j.limit_upper) << "\"/>\n";
    }
    os << "  </joint>\n";
  }
  os << "</robot>\n";
  return os.str();
}

KinematicChain serial_subchain(const KinematicChain& chain, const std::string& base,
                               const std::string& tip) {
  int bi = chain.link_index(base);
  int ti = chain.link_index(tip);
  if (bi < 0) throw Error(ErrorCode::kUnknownLink, "base link '" + base + "'");
  if (ti < 0) throw Error(ErrorCode::kUnknownLink, "tip link '" + tip + "'");
  if (bi >= ti) throw Error(ErrorCode::kNotAncestor, "'" + base + "' is not an ancestor of '" + tip + "'");

  KinematicChain sub;
  sub.name = chain.name;
  sub.base_pose = chain.base_pose;
  for (int i = bi; i <= ti; ++i) {
    sub.links.push_back(chain.links[i]);
    sub.geometries[chain.links[i]] = chain.geometries.at(chain.links[i]);
  }
  for (int i = bi; i < ti; ++i) sub.joints.push_back(chain.joints[i]);
  sub.dof = static_cast<int>(std::count_if(sub.joints.begin(), sub.joints.end(),
                                           [](const JointSpec& j) { return j.mobile(); }));
  validate_chain(sub);
  return sub;
}

JointConfig clamp_to_limits(const KinematicChain& chain, const JointConfig& config) {
  JointConfig out = config;
  int slot = 0;
  for (const auto& j : chain.joints) {
    if (!j.mobile()) continue;
    out[slot] = std::clamp(out[slot], j.limit_lower, j.limit_upper);
    ++slot;
  }
  return out;
}

bool within_limits(const KinematicChain& chain, const JointConfig& config, double tol) {
  int slot = 0;
  for (const auto& j : chain.joints) {
    if (!j.mobile()) continue;
    if (config[slot] < j.limit_lower - tol || config[slot] > j.limit_upper + tol) return false;
    ++slot;
  }
  return true;
}

JointConfig zero_config(const KinematicChain& chain) {
  return JointConfig::Zero(chain.dof);
}

}  // namespace ecflow
