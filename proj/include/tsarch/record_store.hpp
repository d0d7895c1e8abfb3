#pragma once

#include <cstdint>
#include <filesystem>
#include <set>
#include <string>
#include <vector>

namespace tsarch {

/// One benchmarked architecture: the image f(x) plus provenance metadata.
struct PerformanceRecord {
    std::string key;           // canonical architecture key
    double f1 = 0.0;           // relative L2 error on the validation pool
    double f2 = 0.0;           // training wall-clock seconds
    std::int64_t f3 = 0;       // parameter count
    std::string metadata = "{}";  // JSON object (seed, epochs, dataset id, timestamp, ...)

    std::vector<double> objectives() const { return {f1, f2, static_cast<double>(f3)}; }
};

/// Append-only line store, one record per line:
///   key<TAB>f1<TAB>f2<TAB>f3<TAB>metadata-json
/// Tab-separated because canonical keys contain '|'. Lines starting with '#'
/// are comments; the file opens with a self-describing header. Appends are a
/// single write followed by fsync.
class RecordStore {
public:
    explicit RecordStore(std::filesystem::path path);
    ~RecordStore();
    RecordStore(const RecordStore&) = delete;
    RecordStore& operator=(const RecordStore&) = delete;

    const std::filesystem::path& path() const { return path_; }

    std::vector<PerformanceRecord> load() const;  // throws StoreCorrupt
    std::set<std::string> keys() const;
    void append(const PerformanceRecord& record);

    static std::string serialize(const PerformanceRecord& record);
    static PerformanceRecord parse_line(const std::string& line, std::size_t line_no);

private:
    std::filesystem::path path_;
    int fd_ = -1;
};

}  // namespace tsarch
