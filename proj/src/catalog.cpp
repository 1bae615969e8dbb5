#include "kinet/catalog.hpp"

#include <cmath>
#include <numbers>
#include <utility>

namespace kinet {

namespace {

constexpr JointKind H = JointKind::Hinge;
constexpr JointKind R = JointKind::Rigid;

struct J {
    double x, y;
    JointKind kind;
};

// Joint ids are list positions; bar ids are list positions.
CatalogEntry make(const char* name, int label, std::initializer_list<J> js,
                  std::initializer_list<std::pair<int, int>> bs) {
    std::vector<Joint> joints;
    for (const J& j : js) joints.push_back({static_cast<int>(joints.size()), j.x, j.y, j.kind});
    std::vector<Bar> bars;
    for (auto [a, b] : bs) bars.push_back({static_cast<int>(bars.size()), a, b});
    return {Structure(name, std::move(joints), std::move(bars)), label};
}

// Ring of n joints on a circle, optionally with a hub joint appended last.
CatalogEntry ring(const char* name, int label, int n, double phase_deg, bool hub,
                  std::vector<JointKind> kinds = {}) {
    std::vector<Joint> joints;
    std::vector<Bar> bars;
    for (int i = 0; i < n; ++i) {
        const double a = (phase_deg + 360.0 * i / n) * std::numbers::pi / 180.0;
        const JointKind k = kinds.empty() ? H : kinds[i];
        joints.push_back({i, 5.0 + 5.0 * std::cos(a), 5.0 + 5.0 * std::sin(a), k});
        bars.push_back({i, i, (i + 1) % n});
    }
    if (hub) {
        joints.push_back({n, 5.0, 5.0, H});
        for (int i = 0; i < n; ++i) bars.push_back({n + i, n, i});
    }
    return {Structure(name, std::move(joints), std::move(bars)), label};
}

Catalog build() {
    Catalog c;
    auto& t = c.training_examples;

    // Stable training examples.
    t.push_back(make("hinged_triangle", 0, {{0, 0, H}, {8, 0, H}, {4, 6, H}}, {{0, 1}, {1, 2}, {2, 0}}));
    t.push_back(make("hinged_rhombus_braced", 0, {{0, 0, H}, {6, 0, H}, {9, 5, H}, {3, 5, H}},
                     {{0, 1}, {1, 2}, {2, 3}, {3, 0}, {1, 3}}));
    t.push_back(make("warren_truss_3", 0, {{0, 0, H}, {4.5, 0, H}, {9, 0, H}, {2.25, 4, H}, {6.75, 4, H}},
                     {{0, 1}, {1, 2}, {3, 4}, {0, 3}, {3, 1}, {1, 4}, {4, 2}}));
    t.push_back(make("pratt_truss_4",
                     0,
                     {{0, 0, H}, {2.5, 0, H}, {5, 0, H}, {7.5, 0, H}, {10, 0, H},
                      {2.5, 3, H}, {5, 3, H}, {7.5, 3, H}},
                     {{0, 1}, {1, 2}, {2, 3}, {3, 4}, {5, 6}, {6, 7}, {0, 5}, {7, 4},
                      {1, 5}, {2, 6}, {3, 7}, {5, 2}, {7, 2}}));
    t.push_back(make("rigid_square", 0, {{1, 1, R}, {9, 1, R}, {9, 9, R}, {1, 9, R}},
                     {{0, 1}, {1, 2}, {2, 3}, {3, 0}}));
    t.push_back(make("portal_two_rigid_knees", 0, {{0, 0, R}, {10, 0, H}, {10, 6, R}, {0, 6, H}},
                     {{0, 1}, {1, 2}, {2, 3}, {3, 0}}));
    t.push_back(make("quad_one_rigid_corner", 0, {{0, 0, R}, {8, 0, H}, {9, 6, H}, {1, 5, H}},
                     {{0, 1}, {1, 2}, {2, 3}, {3, 0}}));
    t.push_back(make("crossed_square", 0,
                     {{1, 1, H}, {9, 1, H}, {9, 9, H}, {1, 9, H}, {5, 5, R}},
                     {{0, 1}, {1, 2}, {2, 3}, {3, 0}, {0, 4}, {1, 4}, {2, 4}, {3, 4}}));
    t.push_back(make("triangle_rigid_cantilever", 0, {{0, 2, H}, {6, 2, R}, {3, 7, H}, {10, 0, R}},
                     {{0, 1}, {1, 2}, {2, 0}, {1, 3}}));
    t.push_back(ring("hexagon_wheel", 0, 6, 0.0, true));
    t.push_back(make("triangle_fan_3", 0, {{5, 0, H}, {0, 4, H}, {3, 8, H}, {7, 8, H}, {10, 4, H}},
                     {{0, 1}, {0, 2}, {0, 3}, {0, 4}, {1, 2}, {2, 3}, {3, 4}}));
    t.push_back(make("a_frame_rigid_tie", 0,
                     {{0, 0, R}, {2.5, 4.5, R}, {5, 9, H}, {7.5, 4.5, R}, {10, 0, R}},
                     {{0, 1}, {1, 2}, {2, 3}, {3, 4}, {1, 3}}));

    // Unstable training examples.
    t.push_back(make("hinged_quadrilateral", 1, {{1, 1, H}, {9, 1, H}, {9, 8, H}, {1, 8, H}},
                     {{0, 1}, {1, 2}, {2, 3}, {3, 0}}));
    t.push_back(ring("hinged_pentagon", 1, 5, 90.0, false));
    t.push_back(make("two_bar_hinge", 1, {{0, 0, R}, {5, 8, H}, {10, 0, R}}, {{0, 1}, {1, 2}}));
    t.push_back(make("square_plus_triangle", 1,
                     {{0, 0, H}, {5, 0, H}, {5, 5, H}, {0, 5, H}, {10, 2.5, H}},
                     {{0, 1}, {1, 2}, {2, 3}, {3, 0}, {1, 4}, {4, 2}}));
    t.push_back(make("truss_missing_diagonal",
                     1,
                     {{0, 0, H}, {3.4, 0, H}, {6.6, 0, H}, {10, 0, H},
                      {0, 3.5, H}, {3.4, 3.5, H}, {6.6, 3.5, H}, {10, 3.5, H}},
                     {{0, 1}, {1, 2}, {2, 3}, {4, 5}, {5, 6}, {6, 7},
                      {0, 4}, {1, 5}, {2, 6}, {3, 7}, {0, 5}, {2, 7}}));
    t.push_back(ring("pentagon_one_rigid_corner", 1, 5, 90.0, false, {R, H, H, H, H}));
    t.push_back(make("hinged_bowtie", 1,
                     {{0, 0, H}, {0, 6, H}, {5, 3, H}, {10, 0, H}, {10, 6, H}},
                     {{0, 1}, {1, 2}, {2, 0}, {2, 3}, {3, 4}, {4, 2}}));
    t.push_back(ring("hinged_hexagon", 1, 6, 0.0, false));
    t.push_back(make("triangles_parallel_links", 1,
                     {{0, 3, H}, {3, 1, H}, {3, 5, H}, {7, 1, H}, {7, 5, H}, {10, 3, H}},
                     {{0, 1}, {1, 2}, {2, 0}, {3, 4}, {4, 5}, {5, 3}, {1, 3}, {2, 4}}));
    t.push_back(make("triangle_hinged_tail", 1,
                     {{0, 0, H}, {5, 0, H}, {2.5, 4.5, H}, {7.5, 4, H}, {10, 0.5, R}},
                     {{0, 1}, {1, 2}, {2, 0}, {1, 3}, {3, 4}}));
    t.push_back(make("a_frame_hinged_tie", 1,
                     {{0, 0, R}, {2.5, 4.5, H}, {5, 9, H}, {7.5, 4.5, H}, {10, 0, R}},
                     {{0, 1}, {1, 2}, {2, 3}, {3, 4}, {1, 3}}));
    t.push_back(make("hinged_portal", 1, {{0, 0, R}, {0, 7, H}, {10, 7, H}, {10, 0, R}},
                     {{0, 1}, {1, 2}, {2, 3}}));

    auto& h = c.holdout_examples;

    // Stable held-out examples.
    h.push_back(make("warren_truss_5",
                     0,
                     {{0, 0, H}, {3.4, 0, H}, {6.6, 0, H}, {10, 0, H},
                      {1.7, 3, H}, {5, 3, H}, {8.3, 3, H}},
                     {{0, 1}, {1, 2}, {2, 3}, {4, 5}, {5, 6},
                      {0, 4}, {4, 1}, {1, 5}, {5, 2}, {2, 6}, {6, 3}}));
    h.push_back(ring("rigid_pentagon", 0, 5, 90.0, false, {R, R, R, R, R}));
    h.push_back(make("bowtie_rigid_center", 0,
                     {{0, 0, H}, {0, 6, H}, {5, 3, R}, {10, 0, H}, {10, 6, H}},
                     {{0, 1}, {1, 2}, {2, 0}, {2, 3}, {3, 4}, {4, 2}}));
    h.push_back(ring("pentagon_wheel", 0, 5, 90.0, true));
    h.push_back(make("triangular_prism", 0,
                     {{0, 0, H}, {10, 0, H}, {5, 9, H}, {3.5, 2.5, H}, {7, 2.2, H}, {5.5, 5.8, H}},
                     {{0, 1}, {1, 2}, {2, 0}, {3, 4}, {4, 5}, {5, 3}, {0, 3}, {1, 4}, {2, 5}}));

    // Unstable held-out examples.
    h.push_back(make("two_hinged_squares", 1,
                     {{0, 2, H}, {5, 2, H}, {10, 2, H}, {0, 7, H}, {5, 7, H}, {10, 7, H}},
                     {{0, 1}, {1, 2}, {3, 4}, {4, 5}, {0, 3}, {1, 4}, {2, 5}}));
    h.push_back(make("quad_with_two_binary_units", 1,
                     {{0, 3, H}, {6, 3, H}, {6, 9, H}, {0, 9, H}, {3, 0, H}, {10, 6, H}},
                     {{0, 1}, {1, 2}, {2, 3}, {3, 0}, {0, 4}, {4, 1}, {1, 5}, {5, 2}}));
    h.push_back(make("pratt_missing_diagonal",
                     1,
                     {{0, 0, H}, {2.5, 0, H}, {5, 0, H}, {7.5, 0, H}, {10, 0, H},
                      {2.5, 3, H}, {5, 3, H}, {7.5, 3, H}},
                     {{0, 1}, {1, 2}, {2, 3}, {3, 4}, {5, 6}, {6, 7}, {0, 5}, {7, 4},
                      {1, 5}, {2, 6}, {3, 7}, {7, 2}}));
    h.push_back(make("hinged_kite_chain", 1,
                     {{0, 5, H}, {4, 0, H}, {4, 10, H}, {7, 5, H}, {10, 5, R}},
                     {{0, 1}, {1, 3}, {3, 2}, {2, 0}, {3, 4}}));
    h.push_back(make("hexagon_rigid_knees", 1,
                     {{0, 1.5, H}, {0, 9, R}, {8, 9, R}, {10, 5, H}, {8, 1.5, H}, {4, 0, H}},
                     {{0, 1}, {1, 2}, {2, 3}, {3, 4}, {4, 5}, {5, 0}}));
    return c;
}

}  // namespace

const CatalogEntry* Catalog::find(std::string_view name) const {
    for (const auto* list : {&training_examples, &holdout_examples}) {
        for (const CatalogEntry& e : *list) {
            if (e.structure.name() == name) return &e;
        }
    }
    return nullptr;
}

const Catalog& builtin_catalog() {
    static const Catalog catalog = build();
    return catalog;
}

}  // namespace kinet
