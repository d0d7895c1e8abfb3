#include "tsarch/trainer.hpp"

#include <algorithm>
#include <atomic>
#include <chrono>
#include <cmath>
#include <ctime>
#include <limits>
#include <map>
#include <mutex>
#include <thread>

#include <nlohmann/json.hpp>

#include "tsarch/errors.hpp"
#include "tsarch/graph.hpp"
#include "tsarch/model.hpp"
#include "tsarch/rng.hpp"

namespace tsarch {

using nn::Graph;
using nn::Model;
using nn::Tensor;
using nn::Value;

void TrainConfig::validate() const {
    if (!(learning_rate > 0.0)) throw ConfigError("learning_rate must be positive");
    if (batch_size < 1) throw ConfigError("batch_size must be >= 1");
    if (max_epochs < 1) throw ConfigError("max_epochs must be >= 1");
    if (patience < 1) throw ConfigError("patience must be >= 1");
    if (patience > max_epochs) throw ConfigError("patience must not exceed max_epochs");
}

namespace {

// Offsets kept inside a lookback window after temporal downsampling; sampled
// backwards from the most recent step so the final observation is always kept.
std::vector<int> downsample_offsets(int lookback, int stride) {
    std::vector<int> offs;
    for (int o = lookback - 1; o >= 0; o -= stride) offs.push_back(o);
    std::reverse(offs.begin(), offs.end());
    return offs;
}

}  // namespace

Normalization training_stats(const SeriesDataset& ds) {
    std::vector<char> covered(ds.values.size(), 0);
    const int span = ds.lookback + ds.horizon;
    for (int s : ds.train_samples) {
        const int start = ds.sample_start(s);
        for (int i = start; i < start + span; ++i) covered[static_cast<std::size_t>(i)] = 1;
    }
    double sum = 0.0;
    std::size_t n = 0;
    for (std::size_t i = 0; i < ds.values.size(); ++i)
        if (covered[i]) {
            sum += ds.values[i];
            ++n;
        }
    Normalization norm;
    norm.mean = sum / static_cast<double>(n);
    double ss = 0.0;
    for (std::size_t i = 0; i < ds.values.size(); ++i)
        if (covered[i]) ss += (ds.values[i] - norm.mean) * (ds.values[i] - norm.mean);
    norm.std = std::sqrt(ss / static_cast<double>(n));
    if (norm.std == 0.0) norm.std = 1.0;  // constant series: z-scores collapse to zero
    return norm;
}

namespace {

// input [b, T', 1] from downsampled window, target [b, H, 1]; both z-scored
void fill_batch(const SeriesDataset& ds, const std::vector<int>& samples, std::size_t first, std::size_t count,
                const std::vector<int>& offsets, const Normalization& norm, Tensor& input, Tensor& target) {
    const int tin = static_cast<int>(offsets.size());
    const int H = ds.horizon;
    for (std::size_t b = 0; b < count; ++b) {
        const int start = ds.sample_start(samples[first + b]);
        for (int t = 0; t < tin; ++t)
            input.data[b * static_cast<std::size_t>(tin) + t] =
                (ds.values[static_cast<std::size_t>(start + offsets[static_cast<std::size_t>(t)])] - norm.mean) /
                norm.std;
        for (int j = 0; j < H; ++j)
            target.data[b * static_cast<std::size_t>(H) + j] =
                (ds.values[static_cast<std::size_t>(start + ds.lookback + j)] - norm.mean) / norm.std;
    }
}

struct AdamState {
    std::vector<Tensor> m, v;
    std::int64_t step = 0;
};

void adam_step(Model& model, const std::vector<Tensor>& grads, AdamState& state, double lr) {
    constexpr double b1 = 0.9, b2 = 0.999, eps = 1e-8;
    state.step += 1;
    const double c1 = 1.0 - std::pow(b1, static_cast<double>(state.step));
    const double c2 = 1.0 - std::pow(b2, static_cast<double>(state.step));
    for (std::size_t p = 0; p < grads.size(); ++p) {
        auto& theta = model.params()[p].value.data;
        auto& m = state.m[p].data;
        auto& v = state.v[p].data;
        const auto& g = grads[p].data;
        for (std::size_t i = 0; i < theta.size(); ++i) {
            m[i] = b1 * m[i] + (1.0 - b1) * g[i];
            v[i] = b2 * v[i] + (1.0 - b2) * g[i] * g[i];
            theta[i] -= lr * (m[i] / c1) / (std::sqrt(v[i] / c2) + eps);
        }
    }
}

std::string iso_timestamp() {
    const std::time_t now = std::time(nullptr);
    char buf[32];
    std::tm tm_utc{};
    gmtime_r(&now, &tm_utc);
    std::strftime(buf, sizeof buf, "%Y-%m-%dT%H:%M:%SZ", &tm_utc);
    return buf;
}

double validation_loss(const Model& model, const SeriesDataset& ds, const std::vector<int>& offsets,
                       const Normalization& norm, int batch_size) {
    const int tin = static_cast<int>(offsets.size());
    double total = 0.0;
    std::size_t count = 0;
    for (std::size_t first = 0; first < ds.val_samples.size(); first += static_cast<std::size_t>(batch_size)) {
        const std::size_t b = std::min<std::size_t>(static_cast<std::size_t>(batch_size),
                                                    ds.val_samples.size() - first);
        Tensor input = Tensor::zeros({static_cast<int>(b), tin, 1});
        Tensor target = Tensor::zeros({static_cast<int>(b), ds.horizon, 1});
        fill_batch(ds, ds.val_samples, first, b, offsets, norm, input, target);
        const Tensor pred = model.forward(input);
        for (std::size_t i = 0; i < pred.data.size(); ++i) {
            const double d = pred.data[i] - target.data[i];
            total += d * d;
        }
        count += pred.data.size();
    }
    return total / static_cast<double>(count);
}

}  // namespace

PerformanceRecord train(const ArchitectureSpec& spec, const SeriesDataset& dataset, const TrainConfig& config,
                        const std::string& dataset_id) {
    spec.validate();
    config.validate();
    if (dataset.train_samples.empty() || dataset.val_samples.empty())
        throw DegenerateSplit("train() needs a split dataset with both sides non-empty");
    if (dataset.lookback != spec.lookback)
        throw ConfigError("dataset lookback " + std::to_string(dataset.lookback) +
                          " does not match architecture lookback " + std::to_string(spec.lookback));
    if (dataset.horizon != spec.horizon)
        throw ConfigError("dataset horizon does not match architecture horizon");

    const std::vector<int> offsets = downsample_offsets(spec.lookback, spec.downsample_stride);
    const int tin = static_cast<int>(offsets.size());
    const Normalization norm = training_stats(dataset);

    Model model = Model::init(spec, config.seed);
    AdamState adam;
    for (const auto& p : model.params()) {
        adam.m.push_back(Tensor::zeros(p.value.shape));
        adam.v.push_back(Tensor::zeros(p.value.shape));
    }

    Rng shuffle_rng(config.seed ^ 0x9E3779B97F4A7C15ull);
    std::vector<int> order = dataset.train_samples;

    double best_val = std::numeric_limits<double>::infinity();
    std::vector<Tensor> best_params;
    int epochs_without_improvement = 0;
    int epochs_run = 0;

    const auto t0 = std::chrono::steady_clock::now();
    try {
        for (int epoch = 0; epoch < config.max_epochs; ++epoch) {
            epochs_run = epoch + 1;
            shuffle_rng.shuffle(order);
            for (std::size_t first = 0; first < order.size(); first += static_cast<std::size_t>(config.batch_size)) {
                const std::size_t b =
                    std::min<std::size_t>(static_cast<std::size_t>(config.batch_size), order.size() - first);
                Tensor input = Tensor::zeros({static_cast<int>(b), tin, 1});
                Tensor target = Tensor::zeros({static_cast<int>(b), dataset.horizon, 1});
                fill_batch(dataset, order, first, b, offsets, norm, input, target);

                Graph g;
                auto fb = model.build_forward(g, input);
                Value diff = g.sub(fb.output, g.input(std::move(target)));
                Value loss = g.mean_all(g.mul(diff, diff));
                if (!std::isfinite(g.value(loss).data[0])) throw DivergedTraining("non-finite loss");
                g.backward(loss);

                std::vector<Tensor> grads;
                grads.reserve(fb.param_nodes.size());
                for (Value v : fb.param_nodes) grads.push_back(g.grad(v));
                adam_step(model, grads, adam, config.learning_rate);
            }

            const double val = validation_loss(model, dataset, offsets, norm, config.batch_size);
            if (val < best_val) {
                best_val = val;
                best_params.clear();
                for (const auto& p : model.params()) best_params.push_back(p.value);
                epochs_without_improvement = 0;
            } else {
                ++epochs_without_improvement;
                if (epochs_without_improvement >= config.patience) break;
            }
        }
    } catch (const NumericOverflow& e) {
        throw DivergedTraining(e.what());
    }
    const auto t1 = std::chrono::steady_clock::now();

    if (!best_params.empty()) {
        for (std::size_t i = 0; i < best_params.size(); ++i) model.params()[i].value = best_params[i];
    }

    // pooled relative L2 over all validation samples, in original units
    double num = 0.0, den = 0.0;
    double last_num = 0.0, last_den = 0.0;
    const int last_sample = dataset.val_samples.back();
    for (std::size_t first = 0; first < dataset.val_samples.size();
         first += static_cast<std::size_t>(config.batch_size)) {
        const std::size_t b =
            std::min<std::size_t>(static_cast<std::size_t>(config.batch_size), dataset.val_samples.size() - first);
        Tensor input = Tensor::zeros({static_cast<int>(b), tin, 1});
        Tensor target = Tensor::zeros({static_cast<int>(b), dataset.horizon, 1});
        fill_batch(dataset, dataset.val_samples, first, b, offsets, norm, input, target);
        const Tensor pred = model.forward(input);
        for (std::size_t row = 0; row < b; ++row) {
            const bool is_last = dataset.val_samples[first + row] == last_sample;
            for (int j = 0; j < dataset.horizon; ++j) {
                const std::size_t i = row * static_cast<std::size_t>(dataset.horizon) + j;
                const double yhat = pred.data[i] * norm.std + norm.mean;
                const double y = target.data[i] * norm.std + norm.mean;
                num += (yhat - y) * (yhat - y);
                den += y * y;
                if (is_last) {
                    last_num += (yhat - y) * (yhat - y);
                    last_den += y * y;
                }
            }
        }
    }
    const double f1 = den > 0.0 ? std::sqrt(num) / std::sqrt(den) : std::sqrt(num);
    const double f1_last = last_den > 0.0 ? std::sqrt(last_num) / std::sqrt(last_den) : std::sqrt(last_num);

    PerformanceRecord record;
    record.key = canonical_key(spec);
    record.f1 = f1;
    record.f2 = std::max(std::chrono::duration<double>(t1 - t0).count(), 1e-9);
    record.f3 = nn::parameter_count(spec);

    nlohmann::json meta;
    meta["seed"] = config.seed;
    meta["epochs"] = epochs_run;
    meta["dataset"] = dataset_id;
    meta["timestamp"] = iso_timestamp();
    meta["f1_last"] = f1_last;
    meta["train_samples"] = dataset.train_samples.size();
    meta["val_samples"] = dataset.val_samples.size();
    meta["best_val_mse"] = best_val;
    record.metadata = meta.dump();
    return record;
}

std::vector<PerformanceRecord> run_space(const SearchSpace& space, const SeriesDataset& dataset,
                                         const TrainConfig& config, RecordStore& store, int jobs,
                                         const ProgressFn& progress, const std::string& dataset_id) {
    const std::vector<ArchitectureSpec> specs = enumerate_space(space);
    const std::set<std::string> done = store.keys();

    std::vector<const ArchitectureSpec*> todo;
    for (const ArchitectureSpec& s : specs)
        if (!done.count(canonical_key(s))) todo.push_back(&s);

    std::mutex mu;
    std::atomic<std::size_t> next{0};
    std::atomic<std::size_t> completed{specs.size() - todo.size()};
    std::exception_ptr failure;

    auto worker = [&]() {
        while (true) {
            {
                std::lock_guard<std::mutex> lock(mu);
                if (failure) return;
            }
            const std::size_t i = next.fetch_add(1);
            if (i >= todo.size()) return;
            const ArchitectureSpec& spec = *todo[i];
            try {
                TrainConfig per_spec = config;
                per_spec.seed = config.seed ^ fnv1a_hash(canonical_key(spec));
                const PerformanceRecord record = train(spec, dataset, per_spec, dataset_id);
                std::lock_guard<std::mutex> lock(mu);
                store.append(record);
                const std::size_t done_now = completed.fetch_add(1) + 1;
                if (progress) progress(record, done_now, specs.size(), /*fresh=*/true);
            } catch (...) {
                std::lock_guard<std::mutex> lock(mu);
                if (!failure) failure = std::current_exception();
                return;
            }
        }
    };

    const int n_threads = std::max(1, std::min<int>(jobs, static_cast<int>(todo.size()) > 0
                                                              ? static_cast<int>(todo.size())
                                                              : 1));
    if (n_threads == 1) {
        worker();
    } else {
        std::vector<std::thread> threads;
        threads.reserve(static_cast<std::size_t>(n_threads));
        for (int t = 0; t < n_threads; ++t) threads.emplace_back(worker);
        for (auto& t : threads) t.join();
    }
    if (failure) std::rethrow_exception(failure);

    // collect all records for this space, in canonical order
    std::map<std::string, PerformanceRecord> by_key;
    for (PerformanceRecord& r : store.load()) by_key.emplace(r.key, std::move(r));
    std::vector<PerformanceRecord> out;
    out.reserve(specs.size());
    for (const ArchitectureSpec& s : specs) {
        auto it = by_key.find(canonical_key(s));
        if (it != by_key.end()) out.push_back(it->second);
    }
    return out;
}

}  // namespace tsarch
