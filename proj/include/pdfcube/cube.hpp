#pragma once

#include <algorithm>
#include <cstdint>
#include <string>
#include <vector>

#include "error.hpp"

namespace pdfcube {

/// Dimensions of the ensemble cube. A slice is one z-plane of
/// points_per_line * lines_per_slice points.
struct CubeGeometry {
    std::uint32_t points_per_line = 1;
    std::uint32_t lines_per_slice = 1;
    std::uint32_t slice_count = 1;

    constexpr CubeGeometry() = default;
    constexpr CubeGeometry(std::uint32_t points, std::uint32_t lines, std::uint32_t slices)
        : points_per_line(points), lines_per_slice(lines), slice_count(slices) {}

    [[nodiscard]] constexpr std::uint64_t points_per_slice() const {
        return std::uint64_t{points_per_line} * lines_per_slice;
    }
    [[nodiscard]] constexpr std::uint64_t total_points() const {
        return points_per_slice() * slice_count;
    }

    void validate() const {
        if (points_per_line == 0 || lines_per_slice == 0 || slice_count == 0)
            throw ValidationError("cube geometry: every dimension must be >= 1");
    }

    friend constexpr bool operator==(const CubeGeometry&, const CubeGeometry&) = default;
};

struct PointCoord {
    std::uint32_t x = 0;
    std::uint32_t y = 0;
    std::uint32_t z = 0;

    friend constexpr bool operator==(const PointCoord&, const PointCoord&) = default;
};

/// Linear point index, slice-major then line then point.
struct PointId {
    std::uint64_t linear_index = 0;

    friend constexpr auto operator<=>(const PointId&, const PointId&) = default;
};

[[nodiscard]] inline PointId point_id(std::uint32_t x, std::uint32_t y, std::uint32_t z,
                                      const CubeGeometry& geom) {
    if (x >= geom.points_per_line)
        throw BoundsError("x coordinate " + std::to_string(x) + " out of bounds [0, " +
                          std::to_string(geom.points_per_line) + ")");
    if (y >= geom.lines_per_slice)
        throw BoundsError("y coordinate " + std::to_string(y) + " out of bounds [0, " +
                          std::to_string(geom.lines_per_slice) + ")");
    if (z >= geom.slice_count)
        throw BoundsError("z coordinate " + std::to_string(z) + " out of bounds [0, " +
                          std::to_string(geom.slice_count) + ")");
    return PointId{(std::uint64_t{z} * geom.lines_per_slice + y) * geom.points_per_line + x};
}

[[nodiscard]] inline PointId point_id(const PointCoord& c, const CubeGeometry& geom) {
    return point_id(c.x, c.y, c.z, geom);
}

[[nodiscard]] inline PointCoord decode(PointId id, const CubeGeometry& geom) {
    if (id.linear_index >= geom.total_points())
        throw BoundsError("point id " + std::to_string(id.linear_index) + " out of bounds [0, " +
                          std::to_string(geom.total_points()) + ")");
    auto rest = id.linear_index;
    PointCoord c;
    c.x = static_cast<std::uint32_t>(rest % geom.points_per_line);
    rest /= geom.points_per_line;
    c.y = static_cast<std::uint32_t>(rest % geom.lines_per_slice);
    c.z = static_cast<std::uint32_t>(rest / geom.lines_per_slice);
    return c;
}

/// A contiguous block of lines within one slice.
struct WindowSpec {
    std::uint32_t slice_index = 0;
    std::uint32_t first_line = 0;
    std::uint32_t line_count = 1;

    [[nodiscard]] constexpr std::uint32_t end_line() const { return first_line + line_count; }

    /// Points of the window are contiguous in the linear index space.
    [[nodiscard]] PointId first_point(const CubeGeometry& geom) const {
        return point_id(0, first_line, slice_index, geom);
    }
    [[nodiscard]] std::uint64_t point_count(const CubeGeometry& geom) const {
        return std::uint64_t{line_count} * geom.points_per_line;
    }

    friend constexpr bool operator==(const WindowSpec&, const WindowSpec&) = default;
};

/// Disjoint windows covering every line of the slice, ascending. The last
/// window is truncated when lines_per_window does not divide the line count.
[[nodiscard]] inline std::vector<WindowSpec> windows_for_slice(const CubeGeometry& geom,
                                                               std::uint32_t slice_index,
                                                               std::uint32_t lines_per_window) {
    geom.validate();
    if (slice_index >= geom.slice_count)
        throw BoundsError("slice " + std::to_string(slice_index) + " out of bounds [0, " +
                          std::to_string(geom.slice_count) + ")");
    if (lines_per_window == 0) throw ValidationError("lines per window must be >= 1");

    std::vector<WindowSpec> windows;
    for (std::uint32_t first = 0; first < geom.lines_per_slice; first += lines_per_window) {
        const auto count = std::min(lines_per_window, geom.lines_per_slice - first);
        windows.push_back(WindowSpec{slice_index, first, count});
        if (geom.lines_per_slice - first <= lines_per_window) break;
    }
    return windows;
}

/// Window covering the whole slice.
[[nodiscard]] inline WindowSpec whole_slice(const CubeGeometry& geom, std::uint32_t slice_index) {
    return WindowSpec{slice_index, 0, geom.lines_per_slice};
}

} // namespace pdfcube
