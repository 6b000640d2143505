#pragma once

#include <string>

namespace satseries::geo {

enum class CrsKind { Wgs84, Utm };
enum class Hemisphere { North, South };

/// Either geographic WGS84 (x = longitude, y = latitude, degrees) or one UTM
/// zone on the WGS84 ellipsoid (x = easting, y = northing, meters).
class Crs {
public:
    static Crs wgs84() { return Crs{}; }
    /// Throws ValidationError unless 1 <= zone <= 60.
    static Crs utm(int zone, Hemisphere hemisphere);
    /// 4326 (also CRS84), 326zz or 327zz.
    static Crs from_epsg(int code);
    /// Accepts "EPSG:n", "urn:ogc:def:crs:EPSG::n", "urn:ogc:def:crs:OGC:1.3:CRS84".
    static Crs from_name(const std::string& name);

    CrsKind kind() const { return kind_; }
    bool is_planar() const { return kind_ == CrsKind::Utm; }
    /// Zero for WGS84.
    int zone() const { return zone_; }
    Hemisphere hemisphere() const { return hemisphere_; }
    int epsg() const;
    /// Longitude of the zone's central meridian in degrees.
    double central_meridian() const;
    std::string to_string() const;

    friend bool operator==(const Crs&, const Crs&) = default;

private:
    Crs() = default;

    CrsKind kind_ = CrsKind::Wgs84;
    int zone_ = 0;
    Hemisphere hemisphere_ = Hemisphere::North;
};

} // namespace satseries::geo
