#include "satseries/geo/geometry.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <string>

#include "satseries/core/error.hpp"

namespace satseries::geo {
namespace {

double cross(GeoPoint o, GeoPoint a, GeoPoint b) {
    return (a.x - o.x) * (b.y - o.y) - (a.y - o.y) * (b.x - o.x);
}

int sign(double v) { return (v > 0.0) - (v < 0.0); }

bool on_segment(GeoPoint p, GeoPoint a, GeoPoint b) {
    return std::min(a.x, b.x) <= p.x && p.x <= std::max(a.x, b.x) && std::min(a.y, b.y) <= p.y &&
           p.y <= std::max(a.y, b.y);
}

bool segments_intersect(GeoPoint a, GeoPoint b, GeoPoint c, GeoPoint d) {
    const int d1 = sign(cross(c, d, a));
    const int d2 = sign(cross(c, d, b));
    const int d3 = sign(cross(a, b, c));
    const int d4 = sign(cross(a, b, d));
    if (d1 != d2 && d3 != d4 && d1 != 0 && d2 != 0 && d3 != 0 && d4 != 0) {
        return true;
    }
    return (d1 == 0 && on_segment(a, c, d)) || (d2 == 0 && on_segment(b, c, d)) ||
           (d3 == 0 && on_segment(c, a, b)) || (d4 == 0 && on_segment(d, a, b));
}

bool is_simple(const Ring& ring) {
    const std::size_t n = ring.size();
    for (std::size_t i = 0; i < n; ++i) {
        const GeoPoint a = ring[i];
        const GeoPoint b = ring[(i + 1) % n];
        for (std::size_t j = i + 1; j < n; ++j) {
            // adjacent edges share a vertex by construction
            if (j == i + 1 || (i == 0 && j == n - 1)) {
                continue;
            }
            if (segments_intersect(a, b, ring[j], ring[(j + 1) % n])) {
                return false;
            }
        }
    }
    return true;
}

template <class Inside, class Intersect>
Ring clip_half_plane(const Ring& input, Inside inside, Intersect intersect) {
    Ring out;
    if (input.empty()) {
        return out;
    }
    out.reserve(input.size() + 4);
    GeoPoint prev = input.back();
    bool prev_in = inside(prev);
    for (const GeoPoint& cur : input) {
        const bool cur_in = inside(cur);
        if (cur_in) {
            if (!prev_in) {
                out.push_back(intersect(prev, cur));
            }
            out.push_back(cur);
        } else if (prev_in) {
            out.push_back(intersect(prev, cur));
        }
        prev = cur;
        prev_in = cur_in;
    }
    return out;
}

Ring translated(std::span<const GeoPoint> ring, GeoPoint origin) {
    Ring out;
    out.reserve(ring.size());
    for (const GeoPoint& p : ring) {
        out.push_back({p.x - origin.x, p.y - origin.y});
    }
    return out;
}

GeoPolygon translated(const GeoPolygon& poly, GeoPoint origin) {
    GeoPolygon out;
    out.crs = poly.crs;
    out.exterior = translated(poly.exterior, origin);
    for (const Ring& h : poly.holes) {
        out.holes.push_back(translated(h, origin));
    }
    return out;
}

double clipped_area(const GeoPolygon& subject, const Triangle& tri) {
    double area = std::abs(ring_signed_area(clip_ring_to_convex(subject.exterior, tri)));
    for (const Ring& h : subject.holes) {
        area -= std::abs(ring_signed_area(clip_ring_to_convex(h, tri)));
    }
    return area;
}

} // namespace

double ring_signed_area(std::span<const GeoPoint> ring) {
    const std::size_t n = ring.size();
    if (n < 3) {
        return 0.0;
    }
    // relative to the first vertex to keep products small for UTM-sized coordinates
    const GeoPoint o = ring[0];
    double twice = 0.0;
    for (std::size_t i = 1; i + 1 < n; ++i) {
        twice += (ring[i].x - o.x) * (ring[i + 1].y - o.y) - (ring[i + 1].x - o.x) * (ring[i].y - o.y);
    }
    return 0.5 * twice;
}

double polygon_area(const GeoPolygon& poly) {
    if (!poly.crs.is_planar()) {
        throw ValidationError("polygon_area requires projected coordinates");
    }
    double area = std::abs(ring_signed_area(poly.exterior));
    for (const Ring& h : poly.holes) {
        area -= std::abs(ring_signed_area(h));
    }
    return std::max(area, 0.0);
}

Rect bounding_box(std::span<const GeoPoint> ring) {
    Rect r{std::numeric_limits<double>::infinity(), std::numeric_limits<double>::infinity(),
           -std::numeric_limits<double>::infinity(), -std::numeric_limits<double>::infinity()};
    for (const GeoPoint& p : ring) {
        r.min_x = std::min(r.min_x, p.x);
        r.min_y = std::min(r.min_y, p.y);
        r.max_x = std::max(r.max_x, p.x);
        r.max_y = std::max(r.max_y, p.y);
    }
    return r;
}

bool point_in_ring(GeoPoint p, std::span<const GeoPoint> ring) {
    bool inside = false;
    const std::size_t n = ring.size();
    for (std::size_t i = 0, j = n - 1; i < n; j = i++) {
        const GeoPoint a = ring[i];
        const GeoPoint b = ring[j];
        if ((a.y > p.y) != (b.y > p.y) && p.x < (b.x - a.x) * (p.y - a.y) / (b.y - a.y) + a.x) {
            inside = !inside;
        }
    }
    return inside;
}

bool point_in_polygon(GeoPoint p, const GeoPolygon& poly) {
    if (!point_in_ring(p, poly.exterior)) {
        return false;
    }
    return std::none_of(poly.holes.begin(), poly.holes.end(),
                        [&](const Ring& h) { return point_in_ring(p, h); });
}

Ring normalized_ring(std::span<const GeoPoint> ring) {
    Ring out;
    out.reserve(ring.size());
    for (const GeoPoint& p : ring) {
        if (out.empty() || !(out.back() == p)) {
            out.push_back(p);
        }
    }
    while (out.size() > 1 && out.front() == out.back()) {
        out.pop_back();
    }
    return out;
}

void validate_polygon(const GeoPolygon& poly) {
    auto check_ring = [](const Ring& raw, const std::string& what) {
        const Ring ring = normalized_ring(raw);
        if (ring.size() < 3) {
            throw ValidationError(what + " has fewer than 3 distinct vertices");
        }
        for (const GeoPoint& p : ring) {
            if (!std::isfinite(p.x) || !std::isfinite(p.y)) {
                throw ValidationError(what + " has a non-finite coordinate");
            }
        }
        if (!is_simple(ring)) {
            throw ValidationError(what + " is self-intersecting");
        }
        return ring;
    };
    const Ring exterior = check_ring(poly.exterior, "exterior ring");
    if (ring_signed_area(exterior) == 0.0) {
        throw ValidationError("exterior ring has zero area");
    }
    if (!poly.crs.is_planar()) {
        for (const GeoPoint& p : exterior) {
            if (p.y < -90.0 || p.y > 90.0 || p.x < -180.0 || p.x > 180.0) {
                throw ValidationError("geographic coordinate out of range");
            }
        }
    }
    for (std::size_t i = 0; i < poly.holes.size(); ++i) {
        const Ring hole = check_ring(poly.holes[i], "hole " + std::to_string(i));
        for (const GeoPoint& p : hole) {
            if (!point_in_ring(p, exterior)) {
                throw ValidationError("hole " + std::to_string(i) + " is not inside the exterior ring");
            }
        }
    }
}

Ring clip_ring_to_rect(std::span<const GeoPoint> ring, const Rect& rect) {
    Ring r(ring.begin(), ring.end());
    r = clip_half_plane(
        r, [&](GeoPoint p) { return p.x >= rect.min_x; },
        [&](GeoPoint a, GeoPoint b) {
            const double t = (rect.min_x - a.x) / (b.x - a.x);
            return GeoPoint{rect.min_x, a.y + t * (b.y - a.y)};
        });
    r = clip_half_plane(
        r, [&](GeoPoint p) { return p.x <= rect.max_x; },
        [&](GeoPoint a, GeoPoint b) {
            const double t = (rect.max_x - a.x) / (b.x - a.x);
            return GeoPoint{rect.max_x, a.y + t * (b.y - a.y)};
        });
    r = clip_half_plane(
        r, [&](GeoPoint p) { return p.y >= rect.min_y; },
        [&](GeoPoint a, GeoPoint b) {
            const double t = (rect.min_y - a.y) / (b.y - a.y);
            return GeoPoint{a.x + t * (b.x - a.x), rect.min_y};
        });
    r = clip_half_plane(
        r, [&](GeoPoint p) { return p.y <= rect.max_y; },
        [&](GeoPoint a, GeoPoint b) {
            const double t = (rect.max_y - a.y) / (b.y - a.y);
            return GeoPoint{a.x + t * (b.x - a.x), rect.max_y};
        });
    if (r.size() < 3) {
        r.clear();
    }
    return r;
}

Ring clip_ring_to_convex(std::span<const GeoPoint> ring, std::span<const GeoPoint> convex_ccw) {
    Ring r(ring.begin(), ring.end());
    const std::size_t n = convex_ccw.size();
    for (std::size_t i = 0; i < n && !r.empty(); ++i) {
        const GeoPoint e0 = convex_ccw[i];
        const GeoPoint e1 = convex_ccw[(i + 1) % n];
        r = clip_half_plane(
            r, [&](GeoPoint p) { return cross(e0, e1, p) >= 0.0; },
            [&](GeoPoint a, GeoPoint b) {
                const double ca = cross(e0, e1, a);
                const double cb = cross(e0, e1, b);
                const double t = ca / (ca - cb);
                return GeoPoint{a.x + t * (b.x - a.x), a.y + t * (b.y - a.y)};
            });
    }
    if (r.size() < 3) {
        r.clear();
    }
    return r;
}

std::vector<Triangle> triangulate(std::span<const GeoPoint> input) {
    Ring ring = normalized_ring(input);
    std::vector<Triangle> out;
    if (ring.size() < 3) {
        return out;
    }
    if (ring_signed_area(ring) < 0.0) {
        std::reverse(ring.begin(), ring.end());
    }
    std::vector<std::size_t> idx(ring.size());
    for (std::size_t i = 0; i < idx.size(); ++i) {
        idx[i] = i;
    }
    auto point_in_triangle = [](GeoPoint p, GeoPoint a, GeoPoint b, GeoPoint c) {
        return cross(a, b, p) >= 0.0 && cross(b, c, p) >= 0.0 && cross(c, a, p) >= 0.0;
    };
    while (idx.size() > 3) {
        const std::size_t m = idx.size();
        bool clipped = false;
        for (std::size_t i = 0; i < m; ++i) {
            const GeoPoint a = ring[idx[(i + m - 1) % m]];
            const GeoPoint b = ring[idx[i]];
            const GeoPoint c = ring[idx[(i + 1) % m]];
            const double turn = cross(a, b, c);
            if (turn == 0.0) {
                idx.erase(idx.begin() + static_cast<std::ptrdiff_t>(i));
                clipped = true;
                break;
            }
            if (turn < 0.0) {
                continue;
            }
            bool ear = true;
            for (std::size_t j = 0; j < m && ear; ++j) {
                const GeoPoint p = ring[idx[j]];
                if (p == a || p == b || p == c) {
                    continue;
                }
                ear = !point_in_triangle(p, a, b, c);
            }
            if (ear) {
                out.push_back({a, b, c});
                idx.erase(idx.begin() + static_cast<std::ptrdiff_t>(i));
                clipped = true;
                break;
            }
        }
        if (!clipped) {
            throw ValidationError("triangulation failed: ring is not simple");
        }
    }
    const Triangle last{ring[idx[0]], ring[idx[1]], ring[idx[2]]};
    if (cross(last[0], last[1], last[2]) > 0.0) {
        out.push_back(last);
    }
    return out;
}

double intersection_area(const GeoPolygon& a_in, const GeoPolygon& b_in) {
    if (!a_in.crs.is_planar() || !(a_in.crs == b_in.crs)) {
        throw ValidationError("intersection_area requires both polygons in the same projected CRS");
    }
    if (a_in.exterior.empty() || b_in.exterior.empty()) {
        return 0.0;
    }
    const GeoPoint origin = a_in.exterior.front();
    const GeoPolygon a = translated(a_in, origin);
    const GeoPolygon b = translated(b_in, origin);

    double area = 0.0;
    for (const Triangle& t : triangulate(b.exterior)) {
        area += clipped_area(a, t);
    }
    for (const Ring& h : b.holes) {
        for (const Triangle& t : triangulate(h)) {
            area -= clipped_area(a, t);
        }
    }
    return std::max(area, 0.0);
}

} // namespace satseries::geo
