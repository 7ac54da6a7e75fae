#pragma once

#include <algorithm>
#include <array>
#include <atomic>
#include <bit>
#include <cerrno>
#include <cstdint>
#include <cstring>
#include <filesystem>
#include <fstream>
#include <span>
#include <string>
#include <utility>
#include <vector>

#include <fcntl.h>
#include <unistd.h>

#include "cube.hpp"
#include "error.hpp"
#include "parallel.hpp"
#include "stats.hpp"

namespace pdfcube {

namespace fs = std::filesystem;

/// Run file layout (all integers and floats little-endian):
///   [0, 4)   magic "SPCB"
///   [4, 8)   format version, u32 = 1
///   [8, 12)  slice_count
///   [12, 16) lines_per_slice
///   [16, 20) points_per_line
///   [20, ..) float32 payload in PointId order
inline constexpr std::array<char, 4> kRunMagic{'S', 'P', 'C', 'B'};
inline constexpr std::uint32_t kRunFormatVersion = 1;
inline constexpr std::uint64_t kRunHeaderBytes = 20;
inline constexpr const char* kRunFileExtension = ".spcb";

namespace detail {

inline void put_u32(char* out, std::uint32_t v) {
    for (int i = 0; i < 4; ++i) out[i] = static_cast<char>((v >> (8 * i)) & 0xffu);
}

[[nodiscard]] inline std::uint32_t get_u32(const char* in) {
    std::uint32_t v = 0;
    for (int i = 0; i < 4; ++i) v |= std::uint32_t{static_cast<unsigned char>(in[i])} << (8 * i);
    return v;
}

inline void put_f32(char* out, float f) { put_u32(out, std::bit_cast<std::uint32_t>(f)); }

[[nodiscard]] inline float get_f32(const char* in) { return std::bit_cast<float>(get_u32(in)); }

[[nodiscard]] inline std::string errno_text() { return std::strerror(errno); }

} // namespace detail

/// Writes one run's full volume. `values` is indexed by PointId.
template <class T>
void write_run(const fs::path& path, const CubeGeometry& geom, std::span<const T> values) {
    geom.validate();
    if (values.size() != geom.total_points())
        throw ValidationError("write_run: expected " + std::to_string(geom.total_points()) +
                              " values, got " + std::to_string(values.size()));

    std::vector<char> bytes(kRunHeaderBytes + 4 * values.size());
    std::copy(kRunMagic.begin(), kRunMagic.end(), bytes.begin());
    detail::put_u32(bytes.data() + 4, kRunFormatVersion);
    detail::put_u32(bytes.data() + 8, geom.slice_count);
    detail::put_u32(bytes.data() + 12, geom.lines_per_slice);
    detail::put_u32(bytes.data() + 16, geom.points_per_line);
    char* payload = bytes.data() + kRunHeaderBytes;
    for (std::size_t i = 0; i < values.size(); ++i)
        detail::put_f32(payload + 4 * i, static_cast<float>(values[i]));

    std::ofstream out(path, std::ios::binary | std::ios::trunc);
    if (!out) throw IoError("cannot open '" + path.string() + "' for writing");
    out.write(bytes.data(), static_cast<std::streamsize>(bytes.size()));
    if (!out) throw IoError("write failed for '" + path.string() + "'");
}

template <class T>
void write_run(const fs::path& path, const CubeGeometry& geom, const std::vector<T>& values) {
    write_run(path, geom, std::span<const T>(values));
}

/// Read-only handle on one run file. Reads are positional (pread), so one
/// handle may be shared by concurrent readers.
class RunFile {
public:
    explicit RunFile(fs::path path) : path_(std::move(path)) {
        fd_ = ::open(path_.c_str(), O_RDONLY | O_CLOEXEC);
        if (fd_ < 0)
            throw IoError("cannot open run file '" + path_.string() + "': " + detail::errno_text());
        std::array<char, kRunHeaderBytes> header{};
        read_exact(header.data(), header.size(), 0, "header");
        if (!std::equal(kRunMagic.begin(), kRunMagic.end(), header.begin()))
            throw IoError("corrupt header in '" + path_.string() + "': bad magic");
        const auto version = detail::get_u32(header.data() + 4);
        if (version != kRunFormatVersion)
            throw IoError("corrupt header in '" + path_.string() + "': unsupported version " +
                          std::to_string(version));
        geom_.slice_count = detail::get_u32(header.data() + 8);
        geom_.lines_per_slice = detail::get_u32(header.data() + 12);
        geom_.points_per_line = detail::get_u32(header.data() + 16);
        if (geom_.slice_count == 0 || geom_.lines_per_slice == 0 || geom_.points_per_line == 0)
            throw IoError("corrupt header in '" + path_.string() + "': zero dimension");
    }

    RunFile(const RunFile&) = delete;
    RunFile& operator=(const RunFile&) = delete;
    RunFile(RunFile&& other) noexcept
        : path_(std::move(other.path_)), geom_(other.geom_), fd_(std::exchange(other.fd_, -1)) {}
    RunFile& operator=(RunFile&& other) noexcept {
        if (this != &other) {
            close();
            path_ = std::move(other.path_);
            geom_ = other.geom_;
            fd_ = std::exchange(other.fd_, -1);
        }
        return *this;
    }
    ~RunFile() { close(); }

    [[nodiscard]] const CubeGeometry& geometry() const { return geom_; }
    [[nodiscard]] const fs::path& path() const { return path_; }

    [[nodiscard]] float read_value(PointId id) const {
        float out = 0.0f;
        read_values(id, std::span<float>(&out, 1));
        return out;
    }

    /// Reads out.size() consecutive values starting at `first`.
    void read_values(PointId first, std::span<float> out) const {
        if (first.linear_index + out.size() > geom_.total_points())
            throw BoundsError("read of " + std::to_string(out.size()) + " values at point " +
                              std::to_string(first.linear_index) + " exceeds '" + path_.string() +
                              "'");
        thread_local std::vector<char> buffer;
        buffer.resize(4 * out.size());
        const auto offset = kRunHeaderBytes + 4 * first.linear_index;
        const auto got = read_some(buffer.data(), buffer.size(), offset);
        if (got != buffer.size())
            throw IoError("short read in '" + path_.string() + "' at point " +
                          std::to_string(first.linear_index + got / 4));
        for (std::size_t i = 0; i < out.size(); ++i) out[i] = detail::get_f32(buffer.data() + 4 * i);
    }

private:
    std::size_t read_some(char* dst, std::size_t len, std::uint64_t offset) const {
        std::size_t done = 0;
        while (done < len) {
            const auto r = ::pread(fd_, dst + done, len - done, static_cast<off_t>(offset + done));
            if (r < 0) {
                if (errno == EINTR) continue;
                throw IoError("read error in '" + path_.string() + "': " + detail::errno_text());
            }
            if (r == 0) break;
            done += static_cast<std::size_t>(r);
        }
        return done;
    }

    void read_exact(char* dst, std::size_t len, std::uint64_t offset, const char* what) const {
        if (read_some(dst, len, offset) != len)
            throw IoError("corrupt header in '" + path_.string() + "': short " + what);
    }

    void close() {
        if (fd_ >= 0) ::close(fd_);
        fd_ = -1;
    }

    fs::path path_;
    CubeGeometry geom_;
    int fd_ = -1;
};

/// Observation values and statistics of one point.
struct PointRecord {
    PointId id;
    PointStats stats;
    ObservationSet values;

    friend bool operator==(const PointRecord&, const PointRecord&) = default;
};

/// Records the peak number of points being read concurrently.
struct LoadTrace {
    std::atomic<std::uint64_t> in_flight{0};
    std::atomic<std::uint64_t> peak{0};

    void enter(std::uint64_t points) {
        const auto now = in_flight.fetch_add(points) + points;
        auto prev = peak.load();
        while (now > prev && !peak.compare_exchange_weak(prev, now)) {
        }
    }
    void leave(std::uint64_t points) { in_flight.fetch_sub(points); }
};

struct LoadOptions {
    unsigned threads = 1;
    /// Upper bound on points read concurrently; 0 means unbounded.
    std::uint64_t max_in_flight = 0;
    LoadTrace* trace = nullptr;
};

/// An ensemble of run files sharing one geometry, in run order.
class Dataset {
public:
    explicit Dataset(const std::vector<fs::path>& run_paths) {
        if (run_paths.empty()) throw ValidationError("dataset has no run files");
        runs_.reserve(run_paths.size());
        for (const auto& p : run_paths) {
            runs_.emplace_back(p);
            if (runs_.back().geometry() != runs_.front().geometry())
                throw IoError("run file '" + p.string() + "' geometry differs from '" +
                              run_paths.front().string() + "'");
        }
    }

    /// A directory (run files with the .spcb extension, lexicographic order)
    /// or a list file with one path per line, relative to the list's folder.
    static Dataset open(const fs::path& manifest) {
        return Dataset(discover_runs(manifest));
    }

    static std::vector<fs::path> discover_runs(const fs::path& manifest) {
        std::error_code ec;
        std::vector<fs::path> paths;
        if (fs::is_directory(manifest, ec)) {
            for (const auto& entry : fs::directory_iterator(manifest, ec))
                if (entry.is_regular_file() && entry.path().extension() == kRunFileExtension)
                    paths.push_back(entry.path());
            if (ec) throw IoError("cannot list '" + manifest.string() + "': " + ec.message());
            std::sort(paths.begin(), paths.end(),
                      [](const fs::path& a, const fs::path& b) { return a.filename() < b.filename(); });
        } else if (fs::is_regular_file(manifest, ec)) {
            std::ifstream in(manifest);
            if (!in) throw IoError("cannot read run list '" + manifest.string() + "'");
            std::string line;
            while (std::getline(in, line)) {
                if (!line.empty() && line.back() == '\r') line.pop_back();
                if (line.empty()) continue;
                fs::path p(line);
                if (p.is_relative()) p = manifest.parent_path() / p;
                paths.push_back(p);
            }
        } else {
            throw IoError("dataset '" + manifest.string() + "' does not exist");
        }
        if (paths.empty()) throw IoError("dataset '" + manifest.string() + "' has no run files");
        return paths;
    }

    [[nodiscard]] const CubeGeometry& geometry() const { return runs_.front().geometry(); }
    [[nodiscard]] std::size_t run_count() const { return runs_.size(); }
    [[nodiscard]] const RunFile& run(std::size_t i) const { return runs_.at(i); }

    /// One value per run, in run order, each read by a positional seek.
    [[nodiscard]] ObservationSet read_point(PointId id) const {
        ObservationSet values(runs_.size());
        for (std::size_t r = 0; r < runs_.size(); ++r) values[r] = runs_[r].read_value(id);
        return values;
    }

    [[nodiscard]] PointRecord load_point(PointId id) const {
        require_stats();
        PointRecord rec{id, {}, read_point(id)};
        rec.stats = point_stats(rec.values);
        return rec;
    }

    /// Records of every point in the window, ordered by PointId, with
    /// statistics. Output does not depend on the thread count.
    [[nodiscard]] std::vector<PointRecord> load_window(const WindowSpec& window,
                                                       const LoadOptions& opts = {}) const {
        require_stats();
        const auto& geom = geometry();
        if (window.slice_index >= geom.slice_count || window.line_count == 0 ||
            window.end_line() > geom.lines_per_slice)
            throw BoundsError("window (slice " + std::to_string(window.slice_index) + ", lines " +
                              std::to_string(window.first_line) + "+" +
                              std::to_string(window.line_count) + ") outside the cube");

        const auto first = window.first_point(geom).linear_index;
        const auto count = window.point_count(geom);
        unsigned workers = std::max(1u, opts.threads);
        if (opts.max_in_flight > 0)
            workers = static_cast<unsigned>(std::min<std::uint64_t>(workers, opts.max_in_flight));
        std::uint64_t chunk = (count + 4 * workers - 1) / (4 * workers);
        if (opts.max_in_flight > 0) chunk = std::min(chunk, opts.max_in_flight / workers);
        chunk = std::clamp<std::uint64_t>(chunk, 1, 8192);
        const auto chunks = (count + chunk - 1) / chunk;

        std::vector<PointRecord> records(count);
        parallel_for(chunks, workers, [&](std::size_t c) {
            const auto begin = c * chunk;
            const auto len = std::min(chunk, count - begin);
            if (opts.trace) opts.trace->enter(len);
            std::vector<float> column(len);
            for (std::size_t i = 0; i < len; ++i) {
                records[begin + i].id = PointId{first + begin + i};
                records[begin + i].values.resize(runs_.size());
            }
            try {
                for (std::size_t r = 0; r < runs_.size(); ++r) {
                    runs_[r].read_values(PointId{first + begin}, column);
                    for (std::size_t i = 0; i < len; ++i) records[begin + i].values[r] = column[i];
                }
            } catch (const Error& e) {
                if (opts.trace) opts.trace->leave(len);
                throw IoError(std::string("loading points ") + std::to_string(first + begin) + ".." +
                              std::to_string(first + begin + len - 1) + ": " + e.what());
            }
            for (std::size_t i = 0; i < len; ++i)
                records[begin + i].stats = point_stats(records[begin + i].values);
            if (opts.trace) opts.trace->leave(len);
        });
        return records;
    }

private:
    void require_stats() const {
        if (runs_.size() < 2)
            throw ValidationError("statistics need at least 2 runs, dataset has " +
                                  std::to_string(runs_.size()));
    }

    std::vector<RunFile> runs_;
};

} // namespace pdfcube
