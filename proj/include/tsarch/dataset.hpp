#pragma once

#include <cstdint>
#include <filesystem>
#include <vector>

namespace tsarch {

/// A univariate series with sliding-window sample structure and a train/validation
/// partition over sample indices. Sample i covers series steps
/// [i*shift, i*shift + lookback + horizon).
struct SeriesDataset {
    std::vector<double> values;
    double dt = 1.0;
    int lookback = 0;
    int horizon = 0;
    int shift = 1;
    std::vector<int> train_samples;  // sorted, disjoint from val_samples
    std::vector<int> val_samples;    // sorted

    int sample_count() const {
        const int span = lookback + horizon;
        if (static_cast<int>(values.size()) < span) return 0;
        return (static_cast<int>(values.size()) - span) / shift + 1;
    }
    int sample_start(int sample) const { return sample * shift; }
};

/// Build the sliding-window view; the partition is left empty until split().
SeriesDataset make_windows(std::vector<double> series, int lookback, int horizon, int shift, double dt = 1.0);

enum class SplitMode { Chronological, Random };

/// Disjoint, exhaustive partition into train (floor(fraction*n) samples) and
/// validation. Random mode shuffles sample indices reproducibly from the seed.
SeriesDataset split(const SeriesDataset& dataset, double fraction, SplitMode mode, std::uint64_t seed = 0);

/// Deterministic sum-of-sinusoids generator:
///   y_t = sum_k amplitudes[k] * sin(2*pi*t/periods[k] + phase_k) + noise_sigma * N(0,1)
/// with phases and noise drawn from the seed.
std::vector<double> synth_series(std::uint64_t seed, int length, const std::vector<double>& periods,
                                 const std::vector<double>& amplitudes, double noise_sigma);

/// Two-column delimited text (whitespace, comma or tab); '#' lines and an optional
/// non-numeric header row are skipped. value_column indexes tokens from 0.
std::vector<double> load_series(const std::filesystem::path& path, int value_column = 1);
void save_series(const std::filesystem::path& path, const std::vector<double>& values, double dt = 1.0);

}  // namespace tsarch
