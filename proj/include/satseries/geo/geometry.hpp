#pragma once

#include <array>
#include <span>
#include <vector>

#include "satseries/geo/crs.hpp"

namespace satseries::geo {

/// A coordinate pair whose meaning (lon/lat degrees or easting/northing
/// meters) is fixed by the Crs of the geometry that owns it.
struct GeoPoint {
    double x = 0.0;
    double y = 0.0;

    friend bool operator==(const GeoPoint&, const GeoPoint&) = default;
};

/// Ordered vertices, closed implicitly. A repeated closing vertex is tolerated
/// by every function here.
using Ring = std::vector<GeoPoint>;

struct GeoPolygon {
    Ring exterior;
    std::vector<Ring> holes;
    Crs crs = Crs::wgs84();
};

/// Axis-aligned rectangle, min corner inclusive.
struct Rect {
    double min_x = 0.0;
    double min_y = 0.0;
    double max_x = 0.0;
    double max_y = 0.0;

    double width() const { return max_x - min_x; }
    double height() const { return max_y - min_y; }
    double area() const { return width() * height(); }
    bool empty() const { return !(max_x > min_x && max_y > min_y); }
};

using Triangle = std::array<GeoPoint, 3>;

/// Shoelace area; positive for counter-clockwise rings (y up).
double ring_signed_area(std::span<const GeoPoint> ring);

/// Exterior area minus hole areas. Throws ValidationError for a geographic
/// polygon ("requires projected coordinates").
double polygon_area(const GeoPolygon& poly);

Rect bounding_box(std::span<const GeoPoint> ring);

/// Even-odd rule; points exactly on an edge may fall either way.
bool point_in_ring(GeoPoint p, std::span<const GeoPoint> ring);
bool point_in_polygon(GeoPoint p, const GeoPolygon& poly);

/// Drops a repeated closing vertex and consecutive duplicates.
Ring normalized_ring(std::span<const GeoPoint> ring);

/// Checks ring sizes, nonzero exterior area, simplicity of every ring and
/// containment of holes. Throws ValidationError describing the first defect.
void validate_polygon(const GeoPolygon& poly);

/// Sutherland-Hodgman clip of one ring against a rectangle. The result may
/// contain zero-width spurs when the input is concave; its shoelace area is
/// still the exact intersection area. Empty when disjoint.
Ring clip_ring_to_rect(std::span<const GeoPoint> ring, const Rect& rect);

/// Sutherland-Hodgman clip against a convex counter-clockwise ring.
Ring clip_ring_to_convex(std::span<const GeoPoint> ring, std::span<const GeoPoint> convex_ccw);

/// Ear-clipping triangulation of a simple ring. Triangles are counter-clockwise.
std::vector<Triangle> triangulate(std::span<const GeoPoint> ring);

/// Exact area of the intersection of two planar polygons in the same CRS.
double intersection_area(const GeoPolygon& a, const GeoPolygon& b);

} // namespace satseries::geo
