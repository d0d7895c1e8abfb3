#pragma once

#include <map>
#include <string>
#include <vector>

#include "tsarch/pref.hpp"
#include "tsarch/record_store.hpp"

namespace tsarch {

using ObjectiveVector = std::vector<double>;

struct LabeledPoint {
    std::string key;
    ObjectiveVector f;
};

/// Non-dominated subset of a record collection plus per-coordinate extrema.
struct ParetoFront {
    std::vector<LabeledPoint> members;  // sorted by key
    ObjectiveVector lo, hi;             // per-coordinate min/max over members

    const LabeledPoint* find(const std::string& key) const;
};

/// Strict Pareto dominance: a <= b everywhere and a < b somewhere. Exact
/// comparisons, no tolerance.
bool dominates(const ObjectiveVector& a, const ObjectiveVector& b);

ParetoFront pareto_front(const std::vector<LabeledPoint>& records);
ParetoFront pareto_front(const std::vector<PerformanceRecord>& records);

/// Affine per-coordinate re-scale fitted on a front: min -> 0, max -> 1;
/// a degenerate coordinate (min == max) maps to 0 everywhere.
struct RescaleMap {
    ObjectiveVector lo, hi;
    ObjectiveVector apply(const ObjectiveVector& f) const;
};

RescaleMap rescale_map(const ParetoFront& front);

/// Re-scaled coordinates of every front member, keyed by canonical key.
std::map<std::string, ObjectiveVector> rescale(const ParetoFront& front);

/// Member minimizing the preference; ties break to the lexicographically
/// smallest key.
std::pair<std::string, double> discover(const ParetoFront& front, const PreferenceExpr& pref);

}  // namespace tsarch
