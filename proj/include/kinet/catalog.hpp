#pragma once

#include <string_view>
#include <vector>

#include "kinet/structure.hpp"

namespace kinet {

struct CatalogEntry {
    Structure structure;
    int intended_label = 0;  // 0 stable, 1 unstable
};

/// Built-in structures: 24 training examples (12 stable, 12 unstable) and
/// 10 held-out examples (5 + 5) with no graph overlapping the training set.
struct Catalog {
    std::vector<CatalogEntry> training_examples;
    std::vector<CatalogEntry> holdout_examples;

    /// nullptr when no entry has this name.
    const CatalogEntry* find(std::string_view name) const;
};

const Catalog& builtin_catalog();

}  // namespace kinet
