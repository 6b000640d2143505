#pragma once

// Parcel fixtures for the conflict-mask tests, plus per-pixel brute-force
// oracles that never touch the library's clipping code.

#include <cstdint>
#include <vector>

#include "oracles.hpp"
#include "satseries/rasterizer/rasterize.hpp"

namespace fixtures {

using satseries::geo::Crs;
using satseries::geo::GeoPolygon;
using satseries::geo::Hemisphere;
using satseries::geo::Ring;
using satseries::rasterizer::GridSpec;
using satseries::rasterizer::ParcelRecord;

inline const Crs kUtm32N = Crs::utm(32, Hemisphere::North);
inline constexpr double kOriginX = 600000.0;
inline constexpr double kOriginY = 5400000.0;
inline constexpr std::int64_t kBaseSize = 64;  // 10 m pixels per side

inline GridSpec grid(int scale) {
    return GridSpec::from_base(satseries::geo::GeoTransform::north_up(kOriginX, kOriginY, 10, 10), kBaseSize,
                               kBaseSize, kUtm32N, scale);
}

/// Ring in metres relative to the grid's top-left corner (y grows downwards).
inline Ring local_ring(std::initializer_list<std::pair<double, double>> pts) {
    Ring r;
    for (auto [dx, dy] : pts) {
        r.push_back({kOriginX + dx, kOriginY - dy});
    }
    return r;
}

inline ParcelRecord record(std::uint32_t id, Ring ring, std::uint32_t cls, int year = 2018) {
    return ParcelRecord{id, GeoPolygon{std::move(ring), {}, kUtm32N}, cls, year};
}

/// Two convex parcels sharing a slanted edge that crosses pixels mid-way.
inline std::vector<ParcelRecord> adjacent_parcels() {
    const std::pair<double, double> top{321.7, 103.3};
    const std::pair<double, double> bottom{297.3, 511.9};
    return {
        record(1, local_ring({{83.1, 97.4}, top, bottom, {101.6, 534.2}}), 11),
        record(2, local_ring({top, {548.8, 121.5}, {531.4, 503.7}, bottom}), 22),
    };
}

/// The same convex polygon registered twice under different ids, plus an
/// unrelated neighbour.
inline std::vector<ParcelRecord> duplicated_parcels() {
    const Ring shape = local_ring({{123.4, 88.8}, {401.2, 140.5}, {377.7, 402.9}, {150.3, 361.1}});
    return {
        record(1, shape, 5),
        record(2, shape, 6),
        record(3, local_ring({{441.0, 430.0}, {602.5, 444.4}, {590.0, 611.1}}), 7),
    };
}

inline Ring exterior(const ParcelRecord& r) { return r.geometry.exterior; }

/// Pixel rectangle in map coordinates.
struct PixelBox {
    double x0, y0, x1, y1;
};

inline PixelBox pixel_box(const GridSpec& g, std::int64_t row, std::int64_t col) {
    const double s = g.pixel_size();
    return {kOriginX + col * s, kOriginY - (row + 1) * s, kOriginX + (col + 1) * s, kOriginY - row * s};
}

/// Convex ring covers the pixel entirely: all four corners inside.
inline bool fully_inside(const Ring& convex, const PixelBox& b) {
    return oracle::inside_ring({b.x0, b.y0}, convex) && oracle::inside_ring({b.x1, b.y0}, convex) &&
           oracle::inside_ring({b.x1, b.y1}, convex) && oracle::inside_ring({b.x0, b.y1}, convex);
}

/// Oracle masks for convex records: a claim is a positive-area overlap
/// (separating-axis test), a full claim is all corners inside.
struct OracleMasks {
    std::vector<std::uint8_t> partial;
    std::vector<std::uint8_t> full;
    std::vector<int> claims;
};

inline OracleMasks oracle_masks(const std::vector<ParcelRecord>& records, const GridSpec& g) {
    OracleMasks m;
    const auto n = static_cast<std::size_t>(g.rows * g.cols);
    m.partial.assign(n, 0);
    m.full.assign(n, 0);
    m.claims.assign(n, 0);
    for (std::int64_t r = 0; r < g.rows; ++r) {
        for (std::int64_t c = 0; c < g.cols; ++c) {
            const PixelBox b = pixel_box(g, r, c);
            int claims = 0, full = 0;
            for (const ParcelRecord& rec : records) {
                const Ring ring = exterior(rec);
                claims += oracle::convex_overlaps_box(ring, b.x0, b.y0, b.x1, b.y1);
                full += fully_inside(ring, b);
            }
            const auto k = static_cast<std::size_t>(r * g.cols + c);
            m.claims[k] = claims;
            m.partial[k] = claims >= 2;
            m.full[k] = full >= 2;
        }
    }
    return m;
}

} // namespace fixtures
