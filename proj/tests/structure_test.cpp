#include <gtest/gtest.h>

#include <algorithm>
#include <random>
#include <set>
#include <string>

#include "kinet/catalog.hpp"
#include "kinet/oracle.hpp"
#include "kinet/structure.hpp"
#include "test_support.hpp"

namespace kinet {
namespace {

constexpr const char* kTriangle = R"({
  "name": "triangle",
  "joints": [
    {"id": 0, "x": 0, "y": 0, "kind": "hinge"},
    {"id": 1, "x": 4, "y": 0, "kind": "hinge"},
    {"id": 2, "x": 2, "y": 3, "kind": "hinge"}
  ],
  "bars": [
    {"id": 0, "j1": 0, "j2": 1},
    {"id": 1, "j1": 1, "j2": 2},
    {"id": 2, "j1": 2, "j2": 0}
  ]
})";

std::string error_of(std::string_view doc) {
    try {
        parse_structure(doc);
    } catch (const StructureError& e) {
        return e.what();
    }
    return {};
}

TEST(ParseStructure, Triangle) {
    const Structure s = parse_structure(kTriangle);
    EXPECT_EQ(s.name(), "triangle");
    ASSERT_EQ(s.joints().size(), 3u);
    ASSERT_EQ(s.bars().size(), 3u);
    EXPECT_EQ(s.joint(2).x, 2.0);
    EXPECT_EQ(s.joint(2).y, 3.0);
    EXPECT_EQ(s.joint(1).kind, JointKind::Hinge);
}

TEST(ParseStructure, NoBars) {
    EXPECT_EQ(error_of(R"({"name":"x","joints":[{"id":0,"x":0,"y":0,"kind":"hinge"}],"bars":[]})"),
              "structure has no bars");
}

TEST(ParseStructure, DanglingReferenceNamesId) {
    const auto msg = error_of(R"({"name":"x","joints":[{"id":0,"x":0,"y":0,"kind":"hinge"},
        {"id":1,"x":1,"y":0,"kind":"hinge"}],"bars":[{"id":0,"j1":0,"j2":99}]})");
    EXPECT_NE(msg.find("99"), std::string::npos) << msg;
}

TEST(ParseStructure, ErrorsCarryLocation) {
    EXPECT_NE(error_of("{\"name\": ").find("byte"), std::string::npos);
    EXPECT_NE(error_of(R"({"name":"x","joints":[{"id":0,"x":0,"y":0,"kind":"hinge","w":1}],"bars":[]})")
                  .find("joints[0]: unknown field \"w\""),
              std::string::npos);
    EXPECT_NE(error_of(R"({"name":"x","joints":[{"id":0,"x":0,"y":0,"kind":"pin"}],"bars":[]})")
                  .find("joints[0].kind"),
              std::string::npos);
    EXPECT_NE(error_of(R"({"name":"x","joints":[{"id":0,"x":"a","y":0,"kind":"hinge"}],"bars":[]})")
                  .find("joints[0].x"),
              std::string::npos);
    EXPECT_NE(error_of(R"({"name":"x","joints":[],"bars":[],"loads":[]})").find("loads"),
              std::string::npos);
}

TEST(ParseStructure, InvariantViolations) {
    EXPECT_NE(error_of(R"({"name":"x","joints":[{"id":0,"x":0,"y":0,"kind":"hinge"},
        {"id":1,"x":0,"y":0,"kind":"hinge"}],"bars":[{"id":0,"j1":0,"j2":1}]})")
                  .find("zero-length bar 0"),
              std::string::npos);
    EXPECT_NE(error_of(R"({"name":"x","joints":[{"id":0,"x":0,"y":0,"kind":"hinge"},
        {"id":0,"x":1,"y":0,"kind":"hinge"}],"bars":[{"id":0,"j1":0,"j2":0}]})")
                  .find("duplicate joint id 0"),
              std::string::npos);
    EXPECT_NE(error_of(R"({"name":"x","joints":[{"id":0,"x":0,"y":0,"kind":"hinge"},
        {"id":1,"x":1,"y":0,"kind":"hinge"}],"bars":[{"id":3,"j1":0,"j2":1},{"id":3,"j1":1,"j2":0}]})")
                  .find("duplicate bar id 3"),
              std::string::npos);
    EXPECT_NE(error_of(R"({"name":"x","joints":[{"id":0,"x":0,"y":0,"kind":"hinge"},
        {"id":1,"x":1,"y":0,"kind":"hinge"}],"bars":[{"id":3,"j1":0,"j2":1},{"id":4,"j1":1,"j2":0}]})")
                  .find("duplicate bar between the same joints"),
              std::string::npos);
    EXPECT_NE(error_of(R"({"name":"x","joints":[{"id":0,"x":0,"y":0,"kind":"hinge"},
        {"id":1,"x":1,"y":0,"kind":"hinge"},{"id":7,"x":5,"y":5,"kind":"rigid"}],
        "bars":[{"id":0,"j1":0,"j2":1}]})")
                  .find("joint 7"),
              std::string::npos);
}

TEST(SerializeStructure, RoundTripTriangle) {
    const Structure s = parse_structure(kTriangle);
    EXPECT_TRUE(parse_structure(serialize_structure(s)).same_as(s));
}

TEST(SerializeStructure, RoundTripWholeCatalog) {
    const Catalog& c = builtin_catalog();
    for (const auto* list : {&c.training_examples, &c.holdout_examples}) {
        for (const CatalogEntry& e : *list) {
            const Structure back = parse_structure(serialize_structure(e.structure));
            EXPECT_TRUE(back.same_as(e.structure)) << e.structure.name();
        }
    }
    // non-integral coordinates survive bit-exactly
    const Structure& wheel = c.find("hexagon_wheel")->structure;
    EXPECT_EQ(parse_structure(serialize_structure(wheel)).joint(1).y, wheel.joint(1).y);
}

TEST(SerializeStructure, RigidKindTag) {
    const Structure& s = builtin_catalog().find("rigid_square")->structure;
    EXPECT_NE(serialize_structure(s).find("\"kind\": \"rigid\""), std::string::npos);
}

TEST(AddBinaryUnit, GrowsTriangle) {
    const Structure tri = parse_structure(kTriangle);
    const Structure grown = add_binary_unit(tri, 0, 1, {2, -3}, JointKind::Hinge);
    EXPECT_EQ(grown.joints().size(), 4u);
    EXPECT_EQ(grown.bars().size(), 5u);
    EXPECT_EQ(tri.joints().size(), 3u);
    EXPECT_EQ(tri.bars().size(), 3u);
    EXPECT_EQ(grown.joint(3).kind, JointKind::Hinge);
}

TEST(AddBinaryUnit, RejectsCollinearApex) {
    const Structure tri = parse_structure(kTriangle);
    EXPECT_THROW(add_binary_unit(tri, 0, 1, {8, 0}, JointKind::Hinge), StructureError);
    EXPECT_THROW(add_binary_unit(tri, 0, 1, {2, 1e-12}, JointKind::Hinge), StructureError);
    EXPECT_THROW(add_binary_unit(tri, 0, 0, {2, 5}, JointKind::Hinge), StructureError);
    EXPECT_THROW(add_binary_unit(tri, 0, 1, {2, 3}, JointKind::Hinge), StructureError);
    EXPECT_NO_THROW(add_binary_unit(tri, 0, 1, {2, 1e-6}, JointKind::Hinge));
}

TEST(AddBinaryUnit, RejectsRigidConnections) {
    const Structure tri = parse_structure(kTriangle);
    EXPECT_THROW(add_binary_unit(tri, 0, 1, {2, -3}, JointKind::Rigid), StructureError);
    const Structure& cantilever = builtin_catalog().find("triangle_rigid_cantilever")->structure;
    EXPECT_THROW(add_binary_unit(cantilever, 0, 1, {3, -2}, JointKind::Hinge), StructureError);
}

TEST(AddBinaryUnit, RepeatedUnitsKeepTriangleStable) {
    Structure s = parse_structure(kTriangle);
    std::mt19937_64 rng(11);
    std::uniform_real_distribution<double> coord(-6.0, 10.0);
    for (int added = 0; added < 5;) {
        const auto& js = s.joints();
        const int a = js[rng() % js.size()].id;
        const int b = js[rng() % js.size()].id;
        if (a == b) continue;
        try {
            s = add_binary_unit(s, a, b, {coord(rng), coord(rng)}, JointKind::Hinge);
        } catch (const StructureError&) {
            continue;
        }
        ++added;
        EXPECT_EQ(classify_stability(s).classification, Stability::Stable) << "after " << added;
    }
    EXPECT_EQ(s.bars().size(), 13u);
}

TEST(Structure, DanglingJointsReported) {
    const Structure& s = builtin_catalog().find("triangle_rigid_cantilever")->structure;
    EXPECT_EQ(s.dangling_joints(), std::vector<int>{3});
    EXPECT_TRUE(parse_structure(kTriangle).dangling_joints().empty());
}

TEST(Catalog, Counts) {
    const Catalog& c = builtin_catalog();
    ASSERT_EQ(c.training_examples.size(), 24u);
    ASSERT_EQ(c.holdout_examples.size(), 10u);
    auto count = [](const std::vector<CatalogEntry>& v, int label) {
        return std::count_if(v.begin(), v.end(), [&](const auto& e) { return e.intended_label == label; });
    };
    EXPECT_EQ(count(c.training_examples, 0), 12);
    EXPECT_EQ(count(c.training_examples, 1), 12);
    EXPECT_EQ(count(c.holdout_examples, 0), 5);
    EXPECT_EQ(count(c.holdout_examples, 1), 5);
    EXPECT_EQ(c.training_examples[0].structure.name(), "hinged_triangle");
}

TEST(Catalog, NamesUniqueAndInUnitBox) {
    const Catalog& c = builtin_catalog();
    std::set<std::string> names;
    for (const auto* list : {&c.training_examples, &c.holdout_examples}) {
        for (const CatalogEntry& e : *list) {
            EXPECT_TRUE(names.insert(e.structure.name()).second) << e.structure.name();
            for (const Joint& j : e.structure.joints()) {
                EXPECT_GE(j.x, -1e-9);
                EXPECT_LE(j.x, 10 + 1e-9);
                EXPECT_GE(j.y, -1e-9);
                EXPECT_LE(j.y, 10 + 1e-9);
            }
        }
    }
}

TEST(Catalog, HoldoutNotIsomorphicToTraining) {
    const Catalog& c = builtin_catalog();
    for (const CatalogEntry& h : c.holdout_examples) {
        for (const CatalogEntry& t : c.training_examples) {
            EXPECT_FALSE(testing::isomorphic(h.structure, t.structure))
                << h.structure.name() << " ~ " << t.structure.name();
        }
    }
}

TEST(Catalog, IsomorphismHelperSanity) {
    const Structure& a = builtin_catalog().find("hinged_quadrilateral")->structure;
    EXPECT_TRUE(testing::isomorphic(a, transformed(a, 2.0, 1.0, 3.0, 4.0)));
    EXPECT_FALSE(testing::isomorphic(a, with_all_joints(a, JointKind::Rigid)));
}

}  // namespace
}  // namespace kinet
