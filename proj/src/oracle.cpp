#include "kinet/oracle.hpp"

#include <algorithm>
#include <cmath>
#include <map>
#include <numeric>
#include <random>

namespace kinet {

namespace {

struct DisjointSets {
    std::vector<int> parent;

    explicit DisjointSets(std::size_t n) : parent(n) { std::iota(parent.begin(), parent.end(), 0); }

    int find(int i) {
        while (parent[i] != i) {
            parent[i] = parent[parent[i]];
            i = parent[i];
        }
        return i;
    }

    void unite(int a, int b) {
        a = find(a);
        b = find(b);
        if (a != b) parent[std::max(a, b)] = std::min(a, b);
    }
};

std::vector<Point> positions(const Structure& s) {
    std::vector<Point> out;
    out.reserve(s.joints().size());
    for (const Joint& j : s.joints()) out.push_back(j.position());
    return out;
}

// Perturbations used for the generic-position rank; fixed so verdicts are
// reproducible.
constexpr int kGenericDraws = 5;
constexpr double kGenericAmplitude = 1e-3;
constexpr std::uint64_t kGenericSeed = 0x6b696e6574ULL;

}  // namespace

int RigidBodySet::body_of(const Structure& s, int bar_id) const {
    for (std::size_t i = 0; i < s.bars().size(); ++i) {
        if (s.bars()[i].id == bar_id) return body_of_bar[i];
    }
    throw StructureError("unknown bar id " + std::to_string(bar_id));
}

RigidBodySet merge_rigid_bodies(const Structure& s) {
    const auto& bars = s.bars();
    DisjointSets sets(bars.size());
    std::vector<int> first_bar_at(s.joints().size(), -1);
    for (std::size_t b = 0; b < bars.size(); ++b) {
        for (int end : {bars[b].j1, bars[b].j2}) {
            const std::size_t j = s.joint_index(end);
            if (s.joints()[j].kind != JointKind::Rigid) continue;
            if (first_bar_at[j] < 0) {
                first_bar_at[j] = static_cast<int>(b);
            } else {
                sets.unite(first_bar_at[j], static_cast<int>(b));
            }
        }
    }

    // Bodies are numbered by the first bar (in bar order) that belongs to them.
    RigidBodySet out;
    out.body_of_bar.assign(bars.size(), -1);
    std::map<int, int> body_of_root;
    for (std::size_t b = 0; b < bars.size(); ++b) {
        const int root = sets.find(static_cast<int>(b));
        auto [it, inserted] = body_of_root.emplace(root, out.body_count);
        if (inserted) {
            ++out.body_count;
            out.reference_point.push_back(s.joint(bars[b].j1).position());
        }
        out.body_of_bar[b] = it->second;
    }
    return out;
}

ConstraintSystem build_constraint_system(const Structure& s, const RigidBodySet& bodies,
                                         std::span<const Point> coords) {
    ConstraintSystem out;

    // Reference points follow the supplied coordinates, so perturbed systems
    // stay consistent.
    std::vector<Point> ref(bodies.body_count);
    std::vector<bool> have_ref(bodies.body_count, false);
    for (std::size_t b = 0; b < s.bars().size(); ++b) {
        const int body = bodies.body_of_bar[b];
        if (!have_ref[body]) {
            ref[body] = coords[s.joint_index(s.bars()[b].j1)];
            have_ref[body] = true;
        }
    }

    for (std::size_t j = 0; j < s.joints().size(); ++j) {
        const Joint& joint = s.joints()[j];
        if (joint.kind != JointKind::Hinge) continue;
        std::vector<int> incident;
        for (std::size_t b = 0; b < s.bars().size(); ++b) {
            const Bar& bar = s.bars()[b];
            if (bar.j1 == joint.id || bar.j2 == joint.id) incident.push_back(bodies.body_of_bar[b]);
        }
        std::sort(incident.begin(), incident.end());
        incident.erase(std::unique(incident.begin(), incident.end()), incident.end());
        for (std::size_t i = 1; i < incident.size(); ++i) {
            out.constraint_origin.push_back({joint.id, incident.front(), incident[i]});
        }
    }

    const auto rows = static_cast<Eigen::Index>(2 * out.constraint_origin.size());
    const auto cols = static_cast<Eigen::Index>(3 * bodies.body_count);
    out.jacobian = Eigen::MatrixXd::Zero(rows, cols);
    for (std::size_t k = 0; k < out.constraint_origin.size(); ++k) {
        const PinConstraint& pin = out.constraint_origin[k];
        const Point p = coords[s.joint_index(pin.joint_id)];
        const auto r = static_cast<Eigen::Index>(2 * k);
        // velocity of p on body b: (u_b - w_b (p_y - c_y), v_b + w_b (p_x - c_x))
        auto put = [&](int body, double sign) {
            const Point c = ref[body];
            const auto col = static_cast<Eigen::Index>(3 * body);
            out.jacobian(r, col) += sign;
            out.jacobian(r, col + 2) += -sign * (p.y - c.y);
            out.jacobian(r + 1, col + 1) += sign;
            out.jacobian(r + 1, col + 2) += sign * (p.x - c.x);
        };
        put(pin.body_a, 1.0);
        put(pin.body_b, -1.0);
    }
    return out;
}

ConstraintSystem build_constraint_system(const Structure& s, const RigidBodySet& bodies) {
    const auto coords = positions(s);
    return build_constraint_system(s, bodies, coords);
}

int nullity(const Eigen::MatrixXd& m, double tau) {
    const auto cols = static_cast<int>(m.cols());
    if (m.rows() == 0 || cols == 0) return cols;
    const Eigen::JacobiSVD<Eigen::MatrixXd> svd(m);
    const auto& sigma = svd.singularValues();
    const double sigma_max = sigma.size() > 0 ? sigma(0) : 0.0;
    const double threshold =
        tau * sigma_max * static_cast<double>(std::max(m.rows(), m.cols()));
    int rank = 0;
    for (Eigen::Index i = 0; i < sigma.size(); ++i) {
        if (sigma(i) > threshold) ++rank;
    }
    return cols - rank;
}

bool is_connected(const Structure& s) {
    DisjointSets sets(s.joints().size());
    for (const Bar& b : s.bars()) {
        sets.unite(static_cast<int>(s.joint_index(b.j1)), static_cast<int>(s.joint_index(b.j2)));
    }
    for (std::size_t j = 1; j < s.joints().size(); ++j) {
        if (sets.find(static_cast<int>(j)) != sets.find(0)) return false;
    }
    return true;
}

Verdict classify_stability(const Structure& s) {
    Verdict v;
    const RigidBodySet bodies = merge_rigid_bodies(s);
    const auto coords = positions(s);
    const ConstraintSystem given = build_constraint_system(s, bodies, coords);
    v.body_count = bodies.body_count;
    v.constraint_count = static_cast<int>(given.constraint_origin.size());
    v.connected = is_connected(s);
    v.nullity_given = nullity(given.jacobian);

    double min_x = coords[0].x, max_x = coords[0].x, min_y = coords[0].y, max_y = coords[0].y;
    for (const Point& p : coords) {
        min_x = std::min(min_x, p.x);
        max_x = std::max(max_x, p.x);
        min_y = std::min(min_y, p.y);
        max_y = std::max(max_y, p.y);
    }
    const double amplitude = kGenericAmplitude * std::hypot(max_x - min_x, max_y - min_y);

    std::mt19937_64 rng(kGenericSeed);
    std::map<int, int> votes;
    for (int draw = 0; draw < kGenericDraws; ++draw) {
        auto perturbed = coords;
        for (Point& p : perturbed) {
            // 53-bit uniform in [-1, 1)
            p.x += amplitude * (2.0 * static_cast<double>(rng() >> 11) * 0x1.0p-53 - 1.0);
            p.y += amplitude * (2.0 * static_cast<double>(rng() >> 11) * 0x1.0p-53 - 1.0);
        }
        ++votes[nullity(build_constraint_system(s, bodies, perturbed).jacobian)];
    }
    v.nullity_generic = std::max_element(votes.begin(), votes.end(), [](const auto& a, const auto& b) {
                            return a.second < b.second;
                        })->first;

    v.mechanism_dof = v.nullity_given - 3;
    if (!v.connected) {
        v.classification = Stability::Unstable;
    } else if (v.nullity_given == 3) {
        v.classification = Stability::Stable;
    } else if (v.nullity_generic == 3) {
        v.classification = Stability::InstantaneouslyUnstable;
    } else {
        v.classification = Stability::Unstable;
    }
    return v;
}

int binary_label(Stability classification) {
    return classification == Stability::Stable ? 0 : 1;
}

std::string_view to_string(Stability classification) {
    switch (classification) {
        case Stability::Stable: return "stable";
        case Stability::Unstable: return "unstable";
        case Stability::InstantaneouslyUnstable: return "instantaneously-unstable";
    }
    return "unknown";
}

}  // namespace kinet
