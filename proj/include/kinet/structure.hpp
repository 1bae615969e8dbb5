#pragma once

#include <compare>
#include <filesystem>
#include <stdexcept>
#include <string>
#include <string_view>
#include <vector>

namespace kinet {

enum class JointKind { Hinge, Rigid };

struct Point {
    double x = 0.0;
    double y = 0.0;

    friend bool operator==(const Point&, const Point&) = default;
};

struct Joint {
    int id = 0;
    double x = 0.0;
    double y = 0.0;
    JointKind kind = JointKind::Hinge;

    Point position() const { return {x, y}; }
    friend auto operator<=>(const Joint&, const Joint&) = default;
};

struct Bar {
    int id = 0;
    int j1 = 0;
    int j2 = 0;

    friend auto operator<=>(const Bar&, const Bar&) = default;
};

/// Raised for any structure that violates the model invariants. The message
/// names the offending location (a document path such as `bars[2].j1`, or an
/// entity id).
class StructureError : public std::runtime_error {
public:
    using std::runtime_error::runtime_error;
};

/// A plane bar structure: joints (hinge or rigid) connected by bars.
///
/// Instances are validated on construction and immutable afterwards, so any
/// `Structure` in hand satisfies: unique joint and bar ids, finite
/// coordinates, bars referencing two distinct existing joints at distinct
/// positions, no duplicate bar between the same joint pair, at least one
/// bar, and every joint incident to at least one bar.
class Structure {
public:
    Structure(std::string name, std::vector<Joint> joints, std::vector<Bar> bars);

    const std::string& name() const { return name_; }
    const std::vector<Joint>& joints() const { return joints_; }
    const std::vector<Bar>& bars() const { return bars_; }

    /// Position of the joint with this id in `joints()`; throws if absent.
    std::size_t joint_index(int joint_id) const;
    const Joint& joint(int joint_id) const { return joints_[joint_index(joint_id)]; }
    bool has_joint(int joint_id) const;

    /// Number of bars meeting at each joint, indexed like `joints()`.
    std::vector<int> joint_degrees() const;

    /// Ids of joints incident to exactly one bar. Legal, but reported by the
    /// analysis because such a joint carries no kinematic meaning.
    std::vector<int> dangling_joints() const;

    /// Same name, joint set and bar set (order-insensitive).
    bool same_as(const Structure& other) const;

private:
    std::string name_;
    std::vector<Joint> joints_;
    std::vector<Bar> bars_;
};

std::string_view to_string(JointKind kind);

/// Parses the structure file schema
/// `{"name", "joints": [{"id","x","y","kind"}], "bars": [{"id","j1","j2"}]}`.
/// Unknown fields are rejected.
Structure parse_structure(std::string_view document);
Structure load_structure(const std::filesystem::path& path);

std::string serialize_structure(const Structure& s);
void save_structure(const Structure& s, const std::filesystem::path& path);

/// Attaches a binary unit: one new joint at `p` and two bars tying it to the
/// existing joints `ja` and `jb`. Rejects `p` (nearly) collinear with the
/// segment ja-jb, which would create an instantaneously unstable attachment.
/// All three joints must be hinges: a rigid apex or a rigid attachment point
/// makes the two bars act as a brace rather than a binary unit.
Structure add_binary_unit(const Structure& s, int ja, int jb, Point p, JointKind kind);

/// Applies x' = scale * R(angle) * x + (dx, dy) to every joint.
Structure transformed(const Structure& s, double scale, double angle_rad, double dx, double dy);

/// Copy of `s` with every joint set to `kind`.
Structure with_all_joints(const Structure& s, JointKind kind);

}  // namespace kinet
