#pragma once

#include <cstdint>
#include <filesystem>
#include <map>
#include <optional>
#include <string>
#include <vector>

#include "satseries/core/time.hpp"
#include "satseries/geo/crs.hpp"
#include "satseries/geo/geotransform.hpp"

namespace satseries::ingest {

/// One band of one product: a geo-referenced grid of unsigned 16-bit samples,
/// row-major, top row first. Zero is nodata.
struct BandGrid {
    std::string band_id;
    int resolution_m = 10;
    std::int64_t rows = 0;
    std::int64_t cols = 0;
    std::vector<std::uint16_t> values;
    std::uint16_t nodata_value = 0;
    geo::GeoTransform geotransform;
    geo::Crs crs = geo::Crs::utm(1, geo::Hemisphere::North);

    std::uint16_t at(std::int64_t row, std::int64_t col) const {
        return values[static_cast<std::size_t>(row * cols + col)];
    }
};

/// A band listed in a manifest, not yet loaded.
struct BandRef {
    std::string band_id;
    int resolution_m = 10;
    std::filesystem::path path;
};

struct ProductBundle {
    std::string product_id;
    std::string tile_id;
    Timestamp sensing_time;
    /// Product-level cloud cover, when the manifest carries it.
    std::optional<double> cloud_cover_pct;
    geo::Crs crs = geo::Crs::utm(1, geo::Hemisphere::North);
    std::vector<BandRef> band_refs;
    std::map<std::string, BandGrid> bands;
};

/// B02,B03,B04,B08 (10 m); B05,B06,B07,B8A,B11,B12 (20 m); B01,B09,B10 (60 m).
const std::vector<std::string>& canonical_band_order();

/// Native resolution of a canonical band id, or nullopt for other ids.
std::optional<int> canonical_resolution(const std::string& band_id);

/// Position in canonical_band_order(); unknown ids sort after, by name.
bool band_order_less(const std::string& a, const std::string& b);

/// Reads `manifest.json`: product_id, tile_id, sensing_time, crs, bands[] with
/// band_id/resolution_m/path (relative to the manifest), optional
/// cloud_cover_pct. Band refs come back in canonical order. Throws ParseError
/// naming the missing or invalid field.
ProductBundle parse_manifest(const std::filesystem::path& manifest_path);

void write_manifest(const std::filesystem::path& manifest_path, const ProductBundle& bundle);

/// Loads and cross-checks one band (sidecar vs payload length, u16le only).
BandGrid load_band(const BandRef& ref);
BandGrid load_band(const std::filesystem::path& payload);

void write_band(const std::filesystem::path& payload, const BandGrid& band);

/// Loads every referenced band, `jobs` at a time, then checks the extent
/// invariant.
void load_bands(ProductBundle& bundle, int jobs = 1);

/// All bands share one CRS and origin, and rows x resolution agree across
/// resolutions within one pixel of the coarsest band. Throws ValidationError.
void validate_bundle_extent(const ProductBundle& bundle);

/// Fraction of samples that differ from nodata. 0 for an empty grid.
double data_coverage_fraction(const BandGrid& band);

} // namespace satseries::ingest
