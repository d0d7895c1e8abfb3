#include "tsarch/arch_space.hpp"

#include <algorithm>
#include <cctype>
#include <set>
#include <sstream>

#include "tsarch/errors.hpp"

namespace tsarch {

const char* to_string(BlockKind kind) {
    switch (kind) {
        case BlockKind::GRU: return "GRU";
        case BlockKind::LSTM: return "LSTM";
        case BlockKind::ATTENTION: return "ATTENTION";
        case BlockKind::SSM: return "SSM";
    }
    throw std::logic_error("bad BlockKind");
}

BlockKind block_kind_from(const std::string& name) {
    std::string up;
    up.reserve(name.size());
    for (char c : name) up.push_back(static_cast<char>(std::toupper(static_cast<unsigned char>(c))));
    if (up == "GRU") return BlockKind::GRU;
    if (up == "LSTM") return BlockKind::LSTM;
    if (up == "ATTENTION" || up == "ATTN") return BlockKind::ATTENTION;
    if (up == "SSM") return BlockKind::SSM;
    throw ConfigError("unknown block kind '" + name + "'");
}

int CountVector::operator[](BlockKind kind) const {
    switch (kind) {
        case BlockKind::GRU: return gru;
        case BlockKind::LSTM: return lstm;
        case BlockKind::ATTENTION: return attention;
        case BlockKind::SSM: return ssm;
    }
    throw std::logic_error("bad BlockKind");
}

namespace {

constexpr BlockKind G = BlockKind::GRU;
constexpr BlockKind L = BlockKind::LSTM;
constexpr BlockKind A = BlockKind::ATTENTION;
constexpr BlockKind S = BlockKind::SSM;

// All six permutations of {SSM, ATTENTION, GRU} with LSTM last.
constexpr std::array<Ordering, 6> kBuiltinOrderings = {{
    {S, A, G, L},  // 1
    {A, S, G, L},  // 2
    {S, G, A, L},  // 3
    {G, A, S, L},  // 4
    {A, G, S, L},  // 5
    {G, S, A, L},  // 6
}};

}  // namespace

Ordering ordering_for(int id) {
    static const OrderingTable empty;
    return ordering_for(id, empty);
}

Ordering ordering_for(int id, const OrderingTable& extensions) {
    if (id >= 1 && id <= 6) return kBuiltinOrderings[static_cast<std::size_t>(id - 1)];
    auto it = extensions.find(id);
    if (it == extensions.end()) throw UnknownSequenceId(id);
    return it->second;
}

std::vector<BlockKind> realize(const CountVector& counts, const Ordering& ordering) {
    std::vector<BlockKind> blocks;
    blocks.reserve(static_cast<std::size_t>(counts.total()));
    for (BlockKind kind : ordering) {
        for (int i = 0; i < counts[kind]; ++i) blocks.push_back(kind);
    }
    return blocks;
}

std::vector<BlockKind> realize(const CountVector& counts, int sequence_id) {
    return realize(counts, ordering_for(sequence_id));
}

void ArchitectureSpec::validate() const {
    if (blocks.empty()) throw ConfigError("architecture has no blocks");
    if (hidden_dim < 1) throw ConfigError("hidden_dim must be positive");
    if (lookback < 1) throw ConfigError("lookback must be positive");
    if (horizon < 1) throw ConfigError("horizon must be positive");
    if (downsample_stride < 1) throw ConfigError("downsample_stride must be positive");
    if (heads < 1) throw ConfigError("heads must be positive");
    if (hidden_dim % heads != 0)
        throw ConfigError("hidden_dim " + std::to_string(hidden_dim) + " not divisible by heads " +
                          std::to_string(heads));
    if (ffn_expansion < 1) throw ConfigError("ffn_expansion must be positive");
}

std::string canonical_key(const ArchitectureSpec& spec) {
    std::ostringstream out;
    for (std::size_t i = 0; i < spec.blocks.size(); ++i) {
        if (i) out << ',';
        out << to_string(spec.blocks[i]);
    }
    out << "|h" << spec.hidden_dim << "|L" << spec.lookback << "|H" << spec.horizon << "|s"
        << spec.downsample_stride;
    return out.str();
}

void SearchSpace::validate() const {
    for (const auto& [lo, hi] : count_range) {
        if (lo < 0) throw ConfigError("count range lower bound must be >= 0");
        if (hi < lo) throw ConfigError("count range upper bound below lower bound");
    }
    if (!fixed_order && sequence_ids.empty()) throw ConfigError("no sequence ids and no fixed order");
    if (hidden_dims.empty()) throw ConfigError("hidden_dims grid is empty");
    if (lookbacks.empty()) throw ConfigError("lookbacks grid is empty");
    if (horizon < 1) throw ConfigError("horizon must be positive");
    if (downsample_stride < 1) throw ConfigError("downsample_stride must be positive");
}

namespace {

std::vector<CountVector> valid_count_vectors(const SearchSpace& space) {
    std::vector<CountVector> out;
    const auto& r = space.count_range;
    for (int n = r[0].first; n <= r[0].second; ++n)
        for (int m = r[1].first; m <= r[1].second; ++m)
            for (int j = r[2].first; j <= r[2].second; ++j)
                for (int k = r[3].first; k <= r[3].second; ++k) {
                    CountVector c{n, m, j, k};
                    if (c.total() >= 1) out.push_back(c);  // the all-zero vector is excluded
                }
    return out;
}

std::vector<Ordering> orderings_of(const SearchSpace& space) {
    if (space.fixed_order) return {*space.fixed_order};
    std::vector<Ordering> out;
    out.reserve(space.sequence_ids.size());
    for (int id : space.sequence_ids) out.push_back(ordering_for(id, space.extra_orderings));
    return out;
}

}  // namespace

std::uint64_t raw_combination_count(const SearchSpace& space) {
    space.validate();
    const std::uint64_t counts = valid_count_vectors(space).size();
    const std::uint64_t orders = space.fixed_order ? 1 : space.sequence_ids.size();
    return counts * orders * space.hidden_dims.size() * space.lookbacks.size();
}

std::vector<ArchitectureSpec> enumerate_space(const SearchSpace& space) {
    space.validate();
    const auto counts = valid_count_vectors(space);
    const auto orderings = orderings_of(space);

    std::set<std::string> seen;
    std::vector<ArchitectureSpec> specs;
    for (const CountVector& c : counts) {
        for (const Ordering& ord : orderings) {
            const std::vector<BlockKind> blocks = realize(c, ord);
            for (int h : space.hidden_dims) {
                for (int lb : space.lookbacks) {
                    ArchitectureSpec spec;
                    spec.blocks = blocks;
                    spec.hidden_dim = h;
                    spec.lookback = lb;
                    spec.horizon = space.horizon;
                    spec.downsample_stride = space.downsample_stride;
                    spec.heads = space.heads;
                    spec.ffn_expansion = space.ffn_expansion;
                    spec.validate();
                    if (seen.insert(canonical_key(spec)).second) specs.push_back(std::move(spec));
                }
            }
        }
    }
    if (specs.empty()) throw EmptySpace("no valid architectures after exclusions");
    std::sort(specs.begin(), specs.end(), [](const ArchitectureSpec& a, const ArchitectureSpec& b) {
        return canonical_key(a) < canonical_key(b);
    });
    return specs;
}

}  // namespace tsarch
