#pragma once

#include <span>
#include <string_view>
#include <vector>

#include <Eigen/Dense>

#include "kinet/structure.hpp"

namespace kinet {

/// Bars grouped into rigid bodies: bars sharing a rigid joint move together.
struct RigidBodySet {
    std::vector<int> body_of_bar;  // indexed like Structure::bars()
    int body_count = 0;
    std::vector<Point> reference_point;  // per body: first joint of its first bar

    int body_of(const Structure& s, int bar_id) const;
};

struct PinConstraint {
    int joint_id = 0;
    int body_a = 0;
    int body_b = 0;
};

/// First-order pin constraints between bodies. Columns come in triples
/// (u, v, omega) per body; each pin contributes two rows equating the
/// velocity of the hinge point as seen from two bodies.
struct ConstraintSystem {
    Eigen::MatrixXd jacobian;
    std::vector<PinConstraint> constraint_origin;  // one per row pair
};

enum class Stability { Stable, Unstable, InstantaneouslyUnstable };

struct Verdict {
    Stability classification = Stability::Unstable;
    int nullity_given = 0;
    int nullity_generic = 0;
    int mechanism_dof = 0;
    bool connected = false;
    int body_count = 0;
    int constraint_count = 0;
};

inline constexpr double kRankTolerance = 1e-9;

RigidBodySet merge_rigid_bodies(const Structure& s);

/// `coords` is indexed like Structure::joints(); pass the structure's own
/// coordinates or a perturbed copy.
ConstraintSystem build_constraint_system(const Structure& s, const RigidBodySet& bodies,
                                         std::span<const Point> coords);
ConstraintSystem build_constraint_system(const Structure& s, const RigidBodySet& bodies);

/// cols - rank, rank counting singular values above tau * sigma_max * max(rows, cols).
int nullity(const Eigen::MatrixXd& m, double tau = kRankTolerance);

/// Connectivity of the joint-bar incidence graph.
bool is_connected(const Structure& s);

Verdict classify_stability(const Structure& s);

/// Stable -> 0; anything unstable -> 1.
int binary_label(Stability classification);
inline int binary_label(const Verdict& v) { return binary_label(v.classification); }

std::string_view to_string(Stability classification);

}  // namespace kinet
