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

#include <functional>
#include <string>
#include <vector>

#include "doctest.h"
#include "ecflow/errors.hpp"
#include "ecflow/kinematics.hpp"
#include "ecflow/urdf_model.hpp"
#include "test_util.hpp"

using namespace ecflow;
using testutil::fixture_chain;

namespace {

ErrorCode code_of(const std::function<void()>& fn) {
  try {
    fn();
  } catch (const Error& e) {
    return e.code();
  }
  FAIL("expected an ecflow::Error");
  return ErrorCode::kIoError;
}

const char* kTwoJoint = R"(
<robot name="mini">
  <link name="base">
    <collision><origin xyz="0 0 0.05"/><geometry><box size="0.2 0.2 0.1"/></geometry></collision>
  </link>
  <link name="arm">
    <collision><origin xyz="0 0 0.15" rpy="0 0 0"/><geometry><cylinder radius="0.04" length="0.3"/></geometry></collision>
  </link>
  <link name="hand"/>
  <joint name="j1" type="revolute">
    <parent link="base"/><child link="arm"/>
    <origin xyz="0 0 0.1"/><axis xyz="0 0 1"/>
    <limit lower="-1.5" upper="1.5"/>
  </joint>
  <joint name="j2" type="prismatic">
    <parent link="arm"/><child link="hand"/>
    <origin xyz="0 0 0.3" rpy="0 0.2 0"/><axis xyz="1 0 0"/>
    <limit lower="-0.1" upper="0.2"/>
  </joint>
</robot>
)";

}  // namespace

TEST_CASE("fixture arm parses with the expected structure") {
  const KinematicChain& chain = fixture_chain();
  CHECK(chain.dof == 7);
  CHECK(chain.links.size() == 9);
  CHECK(chain.joints.size() == 8);
  CHECK(chain.links.front() == "base_link");
  CHECK(chain.links.back() == "tool");
  CHECK(chain.link_index("link4") == 4);
  CHECK(chain.link_index("nope") == -1);

  for (int j = 0; j < 7; ++j) {
    const JointSpec& js = chain.joints[j];
    CHECK(js.kind == JointKind::kRevolute);
    CHECK(js.limit_lower < 0.0);
    CHECK(js.limit_upper > 0.0);
    CHECK(std::abs(js.axis.norm() - 1.0) < 1e-12);
  }
  CHECK(chain.joints.back().kind == JointKind::kFixed);

  // every link carries usable geometry
  for (const auto& link : chain.links) {
    REQUIRE(chain.geometries.count(link) == 1);
    CHECK(chain.geometries.at(link).dims[0] > 0.0);
  }
}

TEST_CASE("config slots skip fixed joints") {
  const KinematicChain& chain = fixture_chain();
  std::vector<int> slots = chain.config_slots();
  REQUIRE(slots.size() == chain.joints.size());
  for (int j = 0; j < 7; ++j) CHECK(slots[j] == j);
  CHECK(slots[7] == -1);
}

TEST_CASE("rigid groups merge fixed-joint children into the parent joint group") {
  const KinematicChain& chain = fixture_chain();
  std::vector<int> groups = chain.rigid_groups();
  REQUIRE(groups.size() == chain.links.size());
  CHECK(groups[0] == 0);
  for (int i = 1; i <= 7; ++i) CHECK(groups[i] == i);
  // tool hangs off link7 through a fixed joint, so it moves with joint 7
  CHECK(groups[8] == 7);
}

TEST_CASE("serialize then reparse reproduces the chain") {
  const KinematicChain& chain = fixture_chain();
  KinematicChain again = parse_urdf(serialize_urdf(chain));

  REQUIRE(again.links == chain.links);
  REQUIRE(again.joints.size() == chain.joints.size());
  CHECK(again.dof == chain.dof);
  CHECK(again.name == chain.name);
  for (std::size_t i = 0; i < chain.joints.size(); ++i) {
    const JointSpec& a = chain.joints[i];
    const JointSpec& b = again.joints[i];
    CHECK(a.name == b.name);
    CHECK(a.kind == b.kind);
    CHECK(a.limit_lower == b.limit_lower);
    CHECK(a.limit_upper == b.limit_upper);
    CHECK((a.axis - b.axis).norm() == 0.0);
    CHECK(translation_distance(a.origin, b.origin) == 0.0);
    CHECK(rotation_distance(a.origin, b.origin) < 1e-15);
  }
  for (const auto& link : chain.links) {
    const LinkGeometry& a = chain.geometries.at(link);
    const LinkGeometry& b = again.geometries.at(link);
    CHECK(a.kind == b.kind);
    CHECK((a.dims - b.dims).norm() == 0.0);
    CHECK(translation_distance(a.origin, b.origin) == 0.0);
    CHECK(rotation_distance(a.origin, b.origin) < 1e-15);
  }

  // FK must agree exactly at random configurations
  Rng rng(31);
  for (int trial = 0; trial < 50; ++trial) {
    JointConfig q = testutil::random_config(chain, rng);
    Pose pa = tip_pose(chain, q);
    Pose pb = tip_pose(again, q);
    CHECK(translation_distance(pa, pb) < 1e-14);
    CHECK(rotation_distance(pa, pb) < 1e-12);
  }
}

TEST_CASE("mixed revolute and prismatic chain parses") {
  std::vector<std::string> warnings;
  KinematicChain chain = parse_urdf(kTwoJoint, &warnings);
  CHECK(chain.dof == 2);
  CHECK(chain.joints[0].kind == JointKind::kRevolute);
  CHECK(chain.joints[1].kind == JointKind::kPrismatic);
  CHECK(chain.joints[1].limit_upper == 0.2);
  // hand has no geometry tag: default sphere takes its place
  CHECK(chain.geometries.at("hand").source == GeometrySource::kDefault);
  CHECK(chain.geometries.at("hand").kind == GeometryKind::kSphere);
  CHECK(chain.geometries.at("base").source == GeometrySource::kCollision);
}

TEST_CASE("parser rejects malformed input with specific codes") {
  CHECK(code_of([] { parse_urdf("<robot"); }) == ErrorCode::kMalformedXml);
  CHECK(code_of([] { parse_urdf("<nothing/>"); }) == ErrorCode::kMalformedXml);
  CHECK(code_of([] { parse_urdf("<robot name=\"x\"></robot>"); }) == ErrorCode::kMalformedXml);

  std::string branching = R"(
<robot name="b">
  <link name="a"/><link name="b"/><link name="c"/>
  <joint name="j1" type="revolute"><parent link="a"/><child link="b"/><axis xyz="0 0 1"/><limit lower="-1" upper="1"/></joint>
  <joint name="j2" type="revolute"><parent link="a"/><child link="c"/><axis xyz="0 0 1"/><limit lower="-1" upper="1"/></joint>
</robot>)";
  CHECK(code_of([&] { parse_urdf(branching); }) == ErrorCode::kBranchingChain);

  std::string no_limit = R"(
<robot name="n">
  <link name="a"/><link name="b"/>
  <joint name="j1" type="revolute"><parent link="a"/><child link="b"/><axis xyz="0 0 1"/></joint>
</robot>)";
  CHECK(code_of([&] { parse_urdf(no_limit); }) == ErrorCode::kMissingLimit);

  std::string zero_axis = R"(
<robot name="z">
  <link name="a"/><link name="b"/>
  <joint name="j1" type="revolute"><parent link="a"/><child link="b"/><axis xyz="0 0 0"/><limit lower="-1" upper="1"/></joint>
</robot>)";
  CHECK(code_of([&] { parse_urdf(zero_axis); }) == ErrorCode::kBadAxis);

  std::string planar = R"(
<robot name="p">
  <link name="a"/><link name="b"/>
  <joint name="j1" type="planar"><parent link="a"/><child link="b"/></joint>
</robot>)";
  CHECK(code_of([&] { parse_urdf(planar); }) == ErrorCode::kUnsupportedJoint);

  std::string fixed_only = R"(
<robot name="f">
  <link name="a"/><link name="b"/>
  <joint name="j1" type="fixed"><parent link="a"/><child link="b"/></joint>
</robot>)";
  CHECK(code_of([&] { parse_urdf(fixed_only); }) == ErrorCode::kEmptyChain);
}

TEST_CASE("unknown tags are reported as warnings, not errors") {
  std::string noisy = R"(
<robot name="w">
  <gazebo/>
  <link name="a"><inertial/></link>
  <link name="b"/>
  <joint name="j1" type="revolute">
    <parent link="a"/><child link="b"/><axis xyz="0 1 0"/>
    <limit lower="-1" upper="1"/><dynamics damping="0.1"/>
  </joint>
</robot>)";
  std::vector<std::string> warnings;
  KinematicChain chain = parse_urdf(noisy, &warnings);
  CHECK(chain.dof == 1);
  CHECK(warnings.size() >= 3);
}

TEST_CASE("serial_subchain slices by link names") {
  const KinematicChain& chain = fixture_chain();
  KinematicChain sub = serial_subchain(chain, "link2", "link5");
  CHECK(sub.links.size() == 4);
  CHECK(sub.joints.size() == 3);
  CHECK(sub.dof == 3);
  CHECK(sub.links.front() == "link2");
  CHECK(sub.links.back() == "link5");

  CHECK(code_of([&] { serial_subchain(fixture_chain(), "ghost", "link5"); }) ==
        ErrorCode::kUnknownLink);
  CHECK(code_of([&] { serial_subchain(fixture_chain(), "link5", "link2"); }) ==
        ErrorCode::kNotAncestor);
}

TEST_CASE("limit helpers clamp and test membership") {
  const KinematicChain& chain = fixture_chain();
  JointConfig q = zero_config(chain);
  REQUIRE(q.size() == 7);
  CHECK(q.norm() == 0.0);
  CHECK(within_limits(chain, q));

  JointConfig wild = q;
  wild[0] = 100.0;
  wild[3] = -100.0;
  CHECK_FALSE(within_limits(chain, wild));
  JointConfig clamped = clamp_to_limits(chain, wild);
  CHECK(within_limits(chain, clamped));
  CHECK(clamped[0] == chain.joints[0].limit_upper);
  CHECK(clamped[3] == chain.joints[3].limit_lower);
  CHECK(clamped[1] == wild[1]);
}

TEST_CASE("validate_chain rejects hand-assembled inconsistencies") {
  KinematicChain chain = fixture_chain();
  chain.joints[2].axis = Eigen::Vector3d(0, 0, 2);
  CHECK(code_of([&] { validate_chain(chain); }) == ErrorCode::kBadAxis);

  chain = fixture_chain();
  chain.geometries.erase("link3");
  CHECK(code_of([&] { validate_chain(chain); }) == ErrorCode::kFormatError);

  chain = fixture_chain();
  std::swap(chain.joints[1], chain.joints[2]);
  CHECK(code_of([&] { validate_chain(chain); }) == ErrorCode::kBranchingChain);
}
