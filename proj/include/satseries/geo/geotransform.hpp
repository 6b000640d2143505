#pragma once

#include <array>
#include <cstdint>

#include "satseries/geo/geometry.hpp"

namespace satseries::geo {

/// Integer pixel index into a grid.
struct PixelIndex {
    std::int64_t col = 0;
    std::int64_t row = 0;
};

/// Fractional pixel coordinate; (0,0) is the top-left corner of pixel (0,0).
struct PixelCoord {
    double col = 0.0;
    double row = 0.0;
};

/// North-up affine georeferencing of a grid. Pixel sizes are stored positive;
/// rows increase southward. Rotation terms are always zero.
struct GeoTransform {
    double origin_x = 0.0;
    double origin_y = 0.0;
    double pixel_width = 1.0;
    double pixel_height = 1.0;

    /// Throws ValidationError for non-positive pixel sizes.
    static GeoTransform north_up(double origin_x, double origin_y, double pixel_width,
                                 double pixel_height);

    /// From the six-term `[ox, pw, row_rot, oy, col_rot, -ph]` form. Rotated
    /// or south-up transforms are rejected with ValidationError.
    static GeoTransform from_coefficients(const std::array<double, 6>& c);
    std::array<double, 6> coefficients() const;

    PixelCoord geo_to_pixel(GeoPoint p) const;
    GeoPoint pixel_to_geo(PixelCoord c) const;
    GeoPoint pixel_to_geo(double col, double row) const { return pixel_to_geo(PixelCoord{col, row}); }

    /// The square spanned by one pixel in CRS units.
    Rect pixel_rect(PixelIndex px) const;

    friend bool operator==(const GeoTransform&, const GeoTransform&) = default;
};

} // namespace satseries::geo
