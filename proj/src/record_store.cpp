#include "tsarch/record_store.hpp"

#include <fcntl.h>
#include <sys/stat.h>
#include <unistd.h>

#include <cerrno>
#include <cmath>
#include <cstdio>
#include <cstring>
#include <fstream>

#include "tsarch/errors.hpp"

namespace tsarch {

namespace {

constexpr const char* kHeader = "# tsarch-records v1: key\tf1\tf2\tf3\tmetadata-json\n";

std::string format_double(double v) {
    char buf[40];
    std::snprintf(buf, sizeof buf, "%.17g", v);
    return buf;
}

}  // namespace

RecordStore::RecordStore(std::filesystem::path path) : path_(std::move(path)) {
    fd_ = ::open(path_.c_str(), O_WRONLY | O_APPEND | O_CREAT, 0644);
    if (fd_ < 0) throw ConfigError("cannot open record store " + path_.string() + ": " + std::strerror(errno));
    struct ::stat st {};
    if (::fstat(fd_, &st) == 0 && st.st_size == 0) {
        if (::write(fd_, kHeader, std::strlen(kHeader)) < 0 || ::fsync(fd_) < 0)
            throw ConfigError("cannot initialize record store " + path_.string());
    }
}

RecordStore::~RecordStore() {
    if (fd_ >= 0) ::close(fd_);
}

std::string RecordStore::serialize(const PerformanceRecord& r) {
    std::string meta = r.metadata.empty() ? "{}" : r.metadata;
    if (meta.find('\t') != std::string::npos || meta.find('\n') != std::string::npos)
        throw StoreCorrupt(0, "metadata must not contain tabs or newlines");
    if (r.key.find('\t') != std::string::npos || r.key.find('\n') != std::string::npos)
        throw StoreCorrupt(0, "key must not contain tabs or newlines");
    return r.key + '\t' + format_double(r.f1) + '\t' + format_double(r.f2) + '\t' + std::to_string(r.f3) +
           '\t' + meta + '\n';
}

PerformanceRecord RecordStore::parse_line(const std::string& line, std::size_t line_no) {
    std::vector<std::string> fields;
    std::size_t start = 0;
    while (true) {
        const std::size_t tab = line.find('\t', start);
        if (tab == std::string::npos) {
            fields.push_back(line.substr(start));
            break;
        }
        fields.push_back(line.substr(start, tab - start));
        start = tab + 1;
    }
    if (fields.size() != 5) throw StoreCorrupt(line_no, "expected 5 tab-separated fields, found " +
                                                            std::to_string(fields.size()));
    PerformanceRecord r;
    r.key = fields[0];
    if (r.key.empty()) throw StoreCorrupt(line_no, "empty key");
    try {
        std::size_t pos = 0;
        r.f1 = std::stod(fields[1], &pos);
        if (pos != fields[1].size()) throw std::invalid_argument("f1");
        r.f2 = std::stod(fields[2], &pos);
        if (pos != fields[2].size()) throw std::invalid_argument("f2");
        r.f3 = std::stoll(fields[3], &pos);
        if (pos != fields[3].size()) throw std::invalid_argument("f3");
    } catch (const std::exception&) {
        throw StoreCorrupt(line_no, "unparseable numeric field");
    }
    if (!std::isfinite(r.f1) || !std::isfinite(r.f2)) throw StoreCorrupt(line_no, "non-finite objective");
    if (r.f1 < 0.0 || r.f2 <= 0.0 || r.f3 < 1) throw StoreCorrupt(line_no, "objective out of range");
    r.metadata = fields[4];
    if (r.metadata.empty() || r.metadata.front() != '{')
        throw StoreCorrupt(line_no, "metadata is not a JSON object");
    return r;
}

std::vector<PerformanceRecord> RecordStore::load() const {
    std::vector<PerformanceRecord> out;
    std::ifstream in(path_);
    if (!in) return out;
    std::string line;
    std::size_t line_no = 0;
    while (std::getline(in, line)) {
        ++line_no;
        if (line.empty() || line[0] == '#') continue;
        out.push_back(parse_line(line, line_no));
    }
    return out;
}

std::set<std::string> RecordStore::keys() const {
    std::set<std::string> out;
    for (const PerformanceRecord& r : load()) out.insert(r.key);
    return out;
}

void RecordStore::append(const PerformanceRecord& record) {
    const std::string line = serialize(record);
    const char* p = line.data();
    std::size_t left = line.size();
    while (left > 0) {
        const ::ssize_t n = ::write(fd_, p, left);
        if (n < 0) {
            if (errno == EINTR) continue;
            throw ConfigError("record store append failed: " + std::string(std::strerror(errno)));
        }
        p += n;
        left -= static_cast<std::size_t>(n);
    }
    if (::fsync(fd_) < 0) throw ConfigError("record store fsync failed");
}

}  // namespace tsarch
