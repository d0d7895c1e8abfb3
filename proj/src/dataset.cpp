#include "tsarch/dataset.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <numbers>
#include <sstream>

#include "tsarch/errors.hpp"
#include "tsarch/rng.hpp"

namespace tsarch {

SeriesDataset make_windows(std::vector<double> series, int lookback, int horizon, int shift, double dt) {
    if (lookback < 1 || horizon < 1 || shift < 1) throw ConfigError("window parameters must be positive");
    const std::size_t need = static_cast<std::size_t>(lookback) + static_cast<std::size_t>(horizon);
    if (series.size() < need) throw SeriesTooShort(series.size(), need);
    for (double v : series)
        if (!std::isfinite(v)) throw NumericOverflow("series contains non-finite values");
    SeriesDataset ds;
    ds.values = std::move(series);
    ds.dt = dt;
    ds.lookback = lookback;
    ds.horizon = horizon;
    ds.shift = shift;
    return ds;
}

SeriesDataset split(const SeriesDataset& dataset, double fraction, SplitMode mode, std::uint64_t seed) {
    if (!(fraction > 0.0 && fraction < 1.0)) throw ConfigError("split fraction must lie in (0,1)");
    const int n = dataset.sample_count();
    const int k = static_cast<int>(std::floor(fraction * n));
    if (k == 0 || k == n) throw DegenerateSplit("fraction " + std::to_string(fraction) + " on " +
                                                std::to_string(n) + " samples leaves one side empty");
    SeriesDataset out = dataset;
    out.train_samples.clear();
    out.val_samples.clear();
    if (mode == SplitMode::Chronological) {
        for (int i = 0; i < k; ++i) out.train_samples.push_back(i);
        for (int i = k; i < n; ++i) out.val_samples.push_back(i);
    } else {
        std::vector<int> idx(static_cast<std::size_t>(n));
        for (int i = 0; i < n; ++i) idx[static_cast<std::size_t>(i)] = i;
        Rng rng(seed);
        rng.shuffle(idx);
        out.train_samples.assign(idx.begin(), idx.begin() + k);
        out.val_samples.assign(idx.begin() + k, idx.end());
        std::sort(out.train_samples.begin(), out.train_samples.end());
        std::sort(out.val_samples.begin(), out.val_samples.end());
    }
    return out;
}

std::vector<double> synth_series(std::uint64_t seed, int length, const std::vector<double>& periods,
                                 const std::vector<double>& amplitudes, double noise_sigma) {
    if (length < 1) throw ConfigError("series length must be positive");
    if (periods.size() != amplitudes.size()) throw ConfigError("periods and amplitudes differ in length");
    for (double p : periods)
        if (p <= 0.0) throw ConfigError("periods must be positive");
    Rng rng(seed);
    std::vector<double> phases;
    phases.reserve(periods.size());
    for (std::size_t i = 0; i < periods.size(); ++i) phases.push_back(rng.uniform(0.0, 2.0 * std::numbers::pi));
    std::vector<double> out(static_cast<std::size_t>(length), 0.0);
    for (int t = 0; t < length; ++t) {
        double v = 0.0;
        for (std::size_t i = 0; i < periods.size(); ++i)
            v += amplitudes[i] * std::sin(2.0 * std::numbers::pi * t / periods[i] + phases[i]);
        if (noise_sigma > 0.0) v += noise_sigma * rng.normal();
        out[static_cast<std::size_t>(t)] = v;
    }
    return out;
}

namespace {

std::vector<std::string> tokenize(const std::string& line) {
    std::vector<std::string> tokens;
    std::string cur;
    for (char c : line) {
        if (c == ' ' || c == '\t' || c == ',' || c == ';' || c == '\r') {
            if (!cur.empty()) tokens.push_back(std::move(cur));
            cur.clear();
        } else {
            cur.push_back(c);
        }
    }
    if (!cur.empty()) tokens.push_back(std::move(cur));
    return tokens;
}

}  // namespace

std::vector<double> load_series(const std::filesystem::path& path, int value_column) {
    std::ifstream in(path);
    if (!in) throw ConfigError("cannot open series file: " + path.string());
    std::vector<double> values;
    std::string line;
    bool first_data_line = true;
    std::size_t line_no = 0;
    while (std::getline(in, line)) {
        ++line_no;
        if (line.empty() || line[0] == '#') continue;
        const auto tokens = tokenize(line);
        if (tokens.empty()) continue;
        if (value_column >= static_cast<int>(tokens.size()))
            throw ConfigError("series line " + std::to_string(line_no) + " has no column " +
                              std::to_string(value_column));
        try {
            std::size_t pos = 0;
            const double v = std::stod(tokens[static_cast<std::size_t>(value_column)], &pos);
            if (pos != tokens[static_cast<std::size_t>(value_column)].size()) throw std::invalid_argument("trail");
            if (!std::isfinite(v)) throw NumericOverflow("non-finite value in series file");
            values.push_back(v);
        } catch (const std::invalid_argument&) {
            if (first_data_line) {  // header row
                first_data_line = false;
                continue;
            }
            throw ConfigError("unparseable value at series line " + std::to_string(line_no));
        }
        first_data_line = false;
    }
    if (values.empty()) throw ConfigError("series file holds no data: " + path.string());
    return values;
}

void save_series(const std::filesystem::path& path, const std::vector<double>& values, double dt) {
    std::ofstream out(path, std::ios::trunc);
    if (!out) throw ConfigError("cannot write series file: " + path.string());
    out << "# t\tvalue (dt=" << dt << ")\n";
    out.precision(17);
    for (std::size_t i = 0; i < values.size(); ++i) out << static_cast<double>(i) * dt << '\t' << values[i] << '\n';
}

}  // namespace tsarch
