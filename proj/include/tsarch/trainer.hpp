#pragma once

#include <cstdint>
#include <functional>
#include <string>
#include <vector>

#include "tsarch/arch_space.hpp"
#include "tsarch/dataset.hpp"
#include "tsarch/record_store.hpp"

namespace tsarch {

/// z-score statistics over the series steps covered by training samples only.
struct Normalization {
    double mean = 0.0;
    double std = 1.0;
};
Normalization training_stats(const SeriesDataset& dataset);

struct TrainConfig {
    double learning_rate = 1e-3;
    int batch_size = 50;
    int max_epochs = 100;
    int patience = 10;  // consecutive epochs without validation improvement
    std::uint64_t seed = 0;

    void validate() const;
};

/// Train one architecture and measure f1/f2/f3.
///
/// Training minimizes MSE on z-scored windows with Adam; z-score statistics come
/// from the series steps covered by training samples only. Early stopping tracks
/// validation loss with the configured patience and restores the best epoch's
/// parameters. f1 is the relative L2 error pooled over every validation sample in
/// original units (the final validation sample's error is emitted in metadata as
/// f1_last); f2 is the wall clock of the optimization loop only; f3 is the
/// analytic parameter count.
PerformanceRecord train(const ArchitectureSpec& spec, const SeriesDataset& dataset, const TrainConfig& config,
                        const std::string& dataset_id = "");

using ProgressFn =
    std::function<void(const PerformanceRecord& record, std::size_t done, std::size_t total, bool fresh)>;

/// Benchmark every architecture in the space, skipping keys already present in the
/// store (resumable); each fresh record is appended (fsync) before the next spec
/// starts. Specs run on `jobs` worker threads; per-spec seeds are derived as
/// config.seed ^ fnv1a(key), so f1/f3 do not depend on the schedule. Returns all
/// records for the space in canonical key order.
std::vector<PerformanceRecord> run_space(const SearchSpace& space, const SeriesDataset& dataset,
                                         const TrainConfig& config, RecordStore& store, int jobs = 1,
                                         const ProgressFn& progress = nullptr,
                                         const std::string& dataset_id = "");

}  // namespace tsarch
