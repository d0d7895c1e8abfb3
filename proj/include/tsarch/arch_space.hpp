#pragma once

#include <array>
#include <cstdint>
#include <map>
#include <optional>
#include <string>
#include <vector>

namespace tsarch {

/// The four block types a composite architecture is assembled from.
/// The declaration order fixes the canonical total order GRU < LSTM < ATTENTION < SSM.
enum class BlockKind { GRU, LSTM, ATTENTION, SSM };

constexpr int kBlockKindCount = 4;

const char* to_string(BlockKind kind);
BlockKind block_kind_from(const std::string& name);

/// Number of blocks of each kind: [n, m, j, k] = [GRU, LSTM, ATTENTION, SSM].
struct CountVector {
    int gru = 0;
    int lstm = 0;
    int attention = 0;
    int ssm = 0;

    int total() const { return gru + lstm + attention + ssm; }
    int operator[](BlockKind kind) const;
};

using Ordering = std::array<BlockKind, 4>;
using OrderingTable = std::map<int, Ordering>;

/// Built-in block orderings, ids 1..6. All built-in orderings place LSTM last.
/// Extension ids must be supplied through an explicit table.
Ordering ordering_for(int id);
Ordering ordering_for(int id, const OrderingTable& extensions);

/// Expand a count vector along an ordering: each kind repeated count times,
/// same-kind blocks contiguous, zero-count kinds omitted.
std::vector<BlockKind> realize(const CountVector& counts, const Ordering& ordering);
std::vector<BlockKind> realize(const CountVector& counts, int sequence_id);

/// A fully realized candidate architecture.
struct ArchitectureSpec {
    std::vector<BlockKind> blocks;  // realized sequence, non-empty
    int hidden_dim = 16;
    int lookback = 96;
    int horizon = 24;
    int downsample_stride = 1;  // temporal stride on the input window before embedding
    int heads = 4;              // hidden_dim must be divisible by heads
    int ffn_expansion = 4;

    void validate() const;
};

/// Stable, injective textual key: blocks + hidden_dim + lookback + horizon + stride.
/// Example: "GRU|h16|L96|H24|s1"; multi-block lists are comma-joined.
std::string canonical_key(const ArchitectureSpec& spec);

/// Declarative grid of candidate architectures.
struct SearchSpace {
    std::array<std::pair<int, int>, 4> count_range = {{{0, 2}, {0, 2}, {0, 2}, {0, 2}}};  // inclusive, kind order
    std::vector<int> sequence_ids = {1, 2, 3, 4, 5, 6};  // ignored when fixed_order is set
    std::optional<Ordering> fixed_order;
    OrderingTable extra_orderings;  // extension sequence ids beyond the built-in table
    std::vector<int> hidden_dims = {16, 32, 64};
    std::vector<int> lookbacks = {96};
    int horizon = 24;
    int downsample_stride = 1;
    int heads = 4;
    int ffn_expansion = 4;

    void validate() const;
};

/// Size of the raw cartesian product (valid count vectors x orderings x hidden dims x lookbacks)
/// before deduplication by realized sequence.
std::uint64_t raw_combination_count(const SearchSpace& space);

/// Enumerate the space: cartesian product, realized, deduplicated by
/// (realized block list, hidden_dim, lookback), sorted by canonical key.
std::vector<ArchitectureSpec> enumerate_space(const SearchSpace& space);

}  // namespace tsarch
