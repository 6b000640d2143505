#pragma once

#include <cstdint>
#include <span>
#include <vector>

#include "satseries/geo/geometry.hpp"
#include "satseries/geo/geotransform.hpp"

namespace satseries::geo {

/// Pixel-index window, end-exclusive.
struct PixelWindow {
    std::int64_t col_begin = 0;
    std::int64_t row_begin = 0;
    std::int64_t col_end = 0;
    std::int64_t row_end = 0;

    bool empty() const { return col_end <= col_begin || row_end <= row_begin; }
};

/// A polygon re-expressed in fractional pixel coordinates of one grid, so that
/// pixel (c, r) is exactly the unit square [c, c+1] x [r, r+1]. Working in this
/// frame keeps clipping exact on pixel edges regardless of the CRS offsets.
struct PixelSpacePolygon {
    Ring exterior;
    std::vector<Ring> holes;
    /// Smallest pixel window containing the polygon (unclamped).
    PixelWindow bounds;
};

/// `poly` must already be in the grid's planar CRS.
PixelSpacePolygon to_pixel_space(const GeoPolygon& poly, const GeoTransform& gt);

/// Fraction of the pixel's area covered by the polygon, holes subtracted,
/// clamped to [0, 1].
double pixel_coverage_fraction(const PixelSpacePolygon& poly, PixelIndex pixel);

/// Convenience form taking the polygon in CRS units. Throws ValidationError
/// for a non-planar polygon or a zero-area pixel.
double pixel_coverage_fraction(const GeoPolygon& poly, PixelIndex pixel, const GeoTransform& gt);

/// Coverage of every pixel of `row` in [col_begin, col_begin + out.size()).
/// The polygon is first clipped to the row strip, then per pixel.
void row_coverage(const PixelSpacePolygon& poly, std::int64_t row, std::int64_t col_begin,
                  std::span<double> out);

} // namespace satseries::geo
