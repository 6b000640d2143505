#include "satseries/geo/coverage.hpp"

#include <algorithm>
#include <cmath>

#include "satseries/core/error.hpp"

namespace satseries::geo {
namespace {

double clipped_ring_area(std::span<const GeoPoint> ring, const Rect& rect) {
    return std::abs(ring_signed_area(clip_ring_to_rect(ring, rect)));
}

double clamp_fraction(double f) { return std::clamp(f, 0.0, 1.0); }

} // namespace

PixelSpacePolygon to_pixel_space(const GeoPolygon& poly, const GeoTransform& gt) {
    auto convert = [&](const Ring& ring) {
        Ring out;
        out.reserve(ring.size());
        for (const GeoPoint& p : normalized_ring(ring)) {
            const PixelCoord c = gt.geo_to_pixel(p);
            out.push_back({c.col, c.row});
        }
        return out;
    };
    PixelSpacePolygon out;
    out.exterior = convert(poly.exterior);
    for (const Ring& h : poly.holes) {
        out.holes.push_back(convert(h));
    }
    const Rect bb = bounding_box(out.exterior);
    if (out.exterior.size() >= 3) {
        out.bounds = {static_cast<std::int64_t>(std::floor(bb.min_x)),
                      static_cast<std::int64_t>(std::floor(bb.min_y)),
                      static_cast<std::int64_t>(std::ceil(bb.max_x)),
                      static_cast<std::int64_t>(std::ceil(bb.max_y))};
    }
    return out;
}

double pixel_coverage_fraction(const PixelSpacePolygon& poly, PixelIndex pixel) {
    const Rect rect{double(pixel.col), double(pixel.row), double(pixel.col + 1), double(pixel.row + 1)};
    double area = clipped_ring_area(poly.exterior, rect);
    for (const Ring& h : poly.holes) {
        area -= clipped_ring_area(h, rect);
    }
    return clamp_fraction(area);
}

double pixel_coverage_fraction(const GeoPolygon& poly, PixelIndex pixel, const GeoTransform& gt) {
    if (!poly.crs.is_planar()) {
        throw ValidationError("pixel_coverage_fraction requires projected coordinates");
    }
    if (!(gt.pixel_rect(pixel).area() > 0.0)) {
        throw ValidationError("degenerate pixel with zero area");
    }
    return pixel_coverage_fraction(to_pixel_space(poly, gt), pixel);
}

void row_coverage(const PixelSpacePolygon& poly, std::int64_t row, std::int64_t col_begin,
                  std::span<double> out) {
    std::fill(out.begin(), out.end(), 0.0);
    const auto n = static_cast<std::int64_t>(out.size());
    const Rect strip{double(col_begin), double(row), double(col_begin + n), double(row + 1)};

    auto accumulate = [&](std::span<const GeoPoint> ring, double sign) {
        const Ring strip_ring = clip_ring_to_rect(ring, strip);
        if (strip_ring.empty()) {
            return;
        }
        const Rect bb = bounding_box(strip_ring);
        const auto c0 = std::max<std::int64_t>(col_begin, static_cast<std::int64_t>(std::floor(bb.min_x)));
        const auto c1 = std::min<std::int64_t>(col_begin + n, static_cast<std::int64_t>(std::ceil(bb.max_x)));
        for (std::int64_t c = c0; c < c1; ++c) {
            const Rect px{double(c), double(row), double(c + 1), double(row + 1)};
            out[static_cast<std::size_t>(c - col_begin)] += sign * clipped_ring_area(strip_ring, px);
        }
    };
    accumulate(poly.exterior, 1.0);
    for (const Ring& h : poly.holes) {
        accumulate(h, -1.0);
    }
    for (double& f : out) {
        f = clamp_fraction(f);
    }
}

} // namespace satseries::geo
