#include "tsarch/pareto.hpp"

#include <algorithm>
#include <cmath>
#include <limits>

#include "tsarch/errors.hpp"

namespace tsarch {

const LabeledPoint* ParetoFront::find(const std::string& key) const {
    for (const LabeledPoint& m : members)
        if (m.key == key) return &m;
    return nullptr;
}

bool dominates(const ObjectiveVector& a, const ObjectiveVector& b) {
    if (a.size() != b.size()) throw DimensionMismatch(a.size(), b.size());
    bool strict = false;
    for (std::size_t i = 0; i < a.size(); ++i) {
        if (a[i] > b[i]) return false;
        if (a[i] < b[i]) strict = true;
    }
    return strict;
}

ParetoFront pareto_front(const std::vector<LabeledPoint>& records) {
    if (records.empty()) throw EmptyInput("pareto_front of zero records");
    const std::size_t dim = records[0].f.size();
    for (const LabeledPoint& r : records) {
        if (r.f.size() != dim) throw DimensionMismatch(r.f.size(), dim);
        for (double v : r.f)
            if (!std::isfinite(v)) throw NumericOverflow("objective vector of " + r.key);
    }

    ParetoFront front;
    for (std::size_t i = 0; i < records.size(); ++i) {
        bool dominated = false;
        for (std::size_t j = 0; j < records.size() && !dominated; ++j)
            if (j != i && dominates(records[j].f, records[i].f)) dominated = true;
        if (!dominated) front.members.push_back(records[i]);
    }
    std::sort(front.members.begin(), front.members.end(),
              [](const LabeledPoint& a, const LabeledPoint& b) { return a.key < b.key; });

    front.lo.assign(dim, std::numeric_limits<double>::infinity());
    front.hi.assign(dim, -std::numeric_limits<double>::infinity());
    for (const LabeledPoint& m : front.members)
        for (std::size_t i = 0; i < dim; ++i) {
            front.lo[i] = std::min(front.lo[i], m.f[i]);
            front.hi[i] = std::max(front.hi[i], m.f[i]);
        }
    return front;
}

ParetoFront pareto_front(const std::vector<PerformanceRecord>& records) {
    std::vector<LabeledPoint> points;
    points.reserve(records.size());
    for (const PerformanceRecord& r : records) points.push_back({r.key, r.objectives()});
    return pareto_front(points);
}

ObjectiveVector RescaleMap::apply(const ObjectiveVector& f) const {
    if (f.size() != lo.size()) throw DimensionMismatch(f.size(), lo.size());
    ObjectiveVector out(f.size());
    for (std::size_t i = 0; i < f.size(); ++i) {
        const double span = hi[i] - lo[i];
        out[i] = span > 0.0 ? (f[i] - lo[i]) / span : 0.0;  // degenerate coordinate maps to 0
    }
    return out;
}

RescaleMap rescale_map(const ParetoFront& front) {
    if (front.members.empty()) throw EmptyInput("rescale of an empty front");
    return RescaleMap{front.lo, front.hi};
}

std::map<std::string, ObjectiveVector> rescale(const ParetoFront& front) {
    const RescaleMap map = rescale_map(front);
    std::map<std::string, ObjectiveVector> out;
    for (const LabeledPoint& m : front.members) out.emplace(m.key, map.apply(m.f));
    return out;
}

std::pair<std::string, double> discover(const ParetoFront& front, const PreferenceExpr& pref) {
    if (front.members.empty()) throw EmptyInput("discover over an empty front");
    const RescaleMap map = rescale_map(front);
    const LabeledPoint* best = nullptr;
    double best_value = 0.0;
    for (const LabeledPoint& m : front.members) {
        const double value = evaluate(pref, m.f, map.apply(m.f));
        if (!best || value < best_value) {  // members sorted by key: ties keep the first
            best = &m;
            best_value = value;
        }
    }
    return {best->key, best_value};
}

}  // namespace tsarch
