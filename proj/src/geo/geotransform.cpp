#include "satseries/geo/geotransform.hpp"

#include <cmath>

#include "satseries/core/error.hpp"

namespace satseries::geo {

GeoTransform GeoTransform::north_up(double origin_x, double origin_y, double pixel_width,
                                    double pixel_height) {
    if (!(pixel_width > 0.0) || !(pixel_height > 0.0)) {
        throw ValidationError("geotransform pixel sizes must be positive");
    }
    if (!std::isfinite(origin_x) || !std::isfinite(origin_y)) {
        throw ValidationError("geotransform origin must be finite");
    }
    return GeoTransform{origin_x, origin_y, pixel_width, pixel_height};
}

GeoTransform GeoTransform::from_coefficients(const std::array<double, 6>& c) {
    if (c[2] != 0.0 || c[4] != 0.0) {
        throw ValidationError("rotated geotransforms are not supported");
    }
    if (!(c[5] < 0.0)) {
        throw ValidationError("geotransform must be north-up (negative row step)");
    }
    return north_up(c[0], c[3], c[1], -c[5]);
}

std::array<double, 6> GeoTransform::coefficients() const {
    return {origin_x, pixel_width, 0.0, origin_y, 0.0, -pixel_height};
}

PixelCoord GeoTransform::geo_to_pixel(GeoPoint p) const {
    return {(p.x - origin_x) / pixel_width, (origin_y - p.y) / pixel_height};
}

GeoPoint GeoTransform::pixel_to_geo(PixelCoord c) const {
    return {origin_x + c.col * pixel_width, origin_y - c.row * pixel_height};
}

Rect GeoTransform::pixel_rect(PixelIndex px) const {
    const GeoPoint tl = pixel_to_geo(double(px.col), double(px.row));
    const GeoPoint br = pixel_to_geo(double(px.col + 1), double(px.row + 1));
    return Rect{tl.x, br.y, br.x, tl.y};
}

} // namespace satseries::geo
