#pragma once

#include <cstdint>
#include <filesystem>
#include <span>
#include <string>
#include <string_view>
#include <variant>
#include <vector>

#include "satseries/geo/geometry.hpp"

namespace satseries::rasterizer {

/// Integer class id for classification, or a real value for regression.
using GroundTruth = std::variant<std::uint32_t, double>;

/// One vector ground-truth polygon. parcel_id 0 is reserved for "no parcel".
struct ParcelRecord {
    std::uint32_t parcel_id = 0;
    geo::GeoPolygon geometry;
    GroundTruth ground_truth = std::uint32_t{0};
    int year = 0;

    const geo::Crs& crs() const { return geometry.crs; }
};

struct ParcelCollection {
    geo::Crs crs = geo::Crs::wgs84();
    std::vector<ParcelRecord> records;
};

/// Reads a GeoJSON FeatureCollection. The CRS is declared once at file level
/// (`"crs": {"type": "name", "properties": {"name": "EPSG:..."}}`, WGS84 when
/// absent); every feature needs `parcel_id`, `ground_truth` and `year`
/// properties and a Polygon (or single-part MultiPolygon) geometry.
/// Throws ParseError naming the feature index and field.
ParcelCollection parse_parcels_geojson(std::string_view text, const std::string& context = "parcels");
ParcelCollection read_parcels_geojson(const std::filesystem::path& path);

void write_parcels_geojson(const std::filesystem::path& path, const ParcelCollection& parcels);

std::vector<ParcelRecord> filter_by_year(std::span<const ParcelRecord> records, int year);

} // namespace satseries::rasterizer
