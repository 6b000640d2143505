#pragma once

#include <string>
#include <string_view>
#include <vector>

#include "satseries/geo/geometry.hpp"

namespace satseries::geo {

/// Parses a WKT POLYGON or MULTIPOLYGON into its polygons, all tagged with
/// `crs`. Throws ParseError.
std::vector<GeoPolygon> parse_wkt_polygons(std::string_view wkt, const Crs& crs = Crs::wgs84());

/// POLYGON WKT with explicitly closed rings and shortest round-trip numbers.
std::string to_wkt(const GeoPolygon& poly);

} // namespace satseries::geo
