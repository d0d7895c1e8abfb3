#pragma once

#include <cstddef>
#include <stdexcept>
#include <string>

namespace tsarch {

// Domain / search-space errors
struct UnknownSequenceId : std::runtime_error {
    explicit UnknownSequenceId(int id)
        : std::runtime_error("unknown sequence id " + std::to_string(id) +
                             " (built-in table covers 1..6; extensions require explicit config)") {}
};
struct EmptySpace : std::runtime_error {
    explicit EmptySpace(const std::string& what) : std::runtime_error("empty search space: " + what) {}
};

// Numeric / graph errors
struct ShapeMismatch : std::runtime_error {
    explicit ShapeMismatch(const std::string& what) : std::runtime_error("shape mismatch: " + what) {}
};
struct NumericOverflow : std::runtime_error {
    explicit NumericOverflow(const std::string& what) : std::runtime_error("non-finite value: " + what) {}
};
struct GraphReuse : std::runtime_error {
    GraphReuse() : std::runtime_error("backward called on a consumed tape") {}
};

// Dataset / training errors
struct SeriesTooShort : std::runtime_error {
    SeriesTooShort(std::size_t len, std::size_t need)
        : std::runtime_error("series too short: " + std::to_string(len) + " < " + std::to_string(need)) {}
};
struct DegenerateSplit : std::runtime_error {
    explicit DegenerateSplit(const std::string& what) : std::runtime_error("degenerate split: " + what) {}
};
struct DivergedTraining : std::runtime_error {
    explicit DivergedTraining(const std::string& what) : std::runtime_error("training diverged: " + what) {}
};
struct StoreCorrupt : std::runtime_error {
    StoreCorrupt(std::size_t line, const std::string& what)
        : std::runtime_error("record store corrupt at line " + std::to_string(line) + ": " + what) {}
};

// Pareto / preference errors
struct DimensionMismatch : std::runtime_error {
    DimensionMismatch(std::size_t a, std::size_t b)
        : std::runtime_error("objective dimension mismatch: " + std::to_string(a) + " vs " + std::to_string(b)) {}
};
struct EmptyInput : std::runtime_error {
    explicit EmptyInput(const std::string& what) : std::runtime_error("empty input: " + what) {}
};
struct DomainError : std::runtime_error {
    explicit DomainError(const std::string& what) : std::runtime_error("domain error: " + what) {}
};

// Preference DSL errors; position is a 0-based byte offset into the source text.
struct SyntaxError : std::runtime_error {
    std::size_t position;
    std::string expected;
    SyntaxError(std::size_t pos, const std::string& exp)
        : std::runtime_error("syntax error at position " + std::to_string(pos) + ": expected " + exp),
          position(pos),
          expected(exp) {}
};
struct UnknownMetric : std::runtime_error {
    UnknownMetric(std::size_t pos, int index)
        : std::runtime_error("unknown metric f" + std::to_string(index) + " at position " + std::to_string(pos)),
          position(pos) {}
    std::size_t position;
};
struct InvalidNumber : std::runtime_error {
    InvalidNumber(std::size_t pos, const std::string& text)
        : std::runtime_error("invalid number '" + text + "' at position " + std::to_string(pos)), position(pos) {}
    std::size_t position;
};
struct UnknownBuiltin : std::runtime_error {
    explicit UnknownBuiltin(const std::string& name)
        : std::runtime_error("unknown builtin preference '" + name + "' (expected p1..p10)") {}
};

// LP errors
struct KeyNotInFront : std::runtime_error {
    explicit KeyNotInFront(const std::string& key) : std::runtime_error("key not in front: " + key) {}
};
struct NumericInstability : std::runtime_error {
    explicit NumericInstability(const std::string& what) : std::runtime_error("numeric instability: " + what) {}
};

// CLI / config errors
struct ConfigError : std::runtime_error {
    explicit ConfigError(const std::string& what) : std::runtime_error("config error: " + what) {}
};

}  // namespace tsarch
