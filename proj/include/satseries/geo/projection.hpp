#pragma once

#include "satseries/geo/crs.hpp"
#include "satseries/geo/geometry.hpp"

namespace satseries::geo {

/// Converts a point between WGS84 and UTM (or between two UTM zones via
/// WGS84). UTM uses the 6th-order Krüger series on the WGS84 ellipsoid with
/// k0 = 0.9996, false easting 500 km and false northing 0 / 10000 km.
/// The target zone is used as given, even far outside its nominal strip.
///
/// Throws ValidationError "outside UTM validity band" when |lat| > 84.
GeoPoint project(GeoPoint p, const Crs& from, const Crs& to);

/// Projects every vertex of `poly` into `to`.
GeoPolygon project(const GeoPolygon& poly, const Crs& to);

/// The standard 6-degree zone containing `longitude` (no Norway/Svalbard
/// exceptions).
int utm_zone_for_longitude(double longitude);

} // namespace satseries::geo
