#pragma once

#include <cstdint>
#include <filesystem>
#include <optional>
#include <string>
#include <string_view>
#include <vector>

#include "satseries/assembler/assembler.hpp"
#include "satseries/catalog/catalog.hpp"
#include "satseries/hub/scheduler.hpp"
#include "satseries/tiler/tiler.hpp"

namespace satseries::cli {

/// `90s`, `30m`, `1h30m`, `24h`, `2d`, `250ms`. Throws ParseError.
hub::Duration parse_duration(std::string_view text);
/// Shortest form that parse_duration reads back to the same value.
std::string format_duration(hub::Duration d);

/// The single configuration file of a pipeline run. Relative paths are taken
/// relative to the directory holding the file.
struct PipelineConfig {
    // aoi: either an inline lon/lat ring or a GeoJSON file
    std::vector<geo::GeoPoint> aoi_polygon;
    std::string aoi_file;

    Timestamp poi_start{};
    Timestamp poi_end{};
    catalog::SelectionConfig selection;

    std::string hub_url;
    /// Name of the environment variable holding the bearer token.
    std::string hub_token_env;
    hub::ThrottlePolicy throttle;
    hub::BackoffPolicy backoff;

    tiler::WindowSpec windows;

    std::string parcels;  // GeoJSON; empty = no labels
    int label_scale = 1;
    std::uint32_t background = 0;
    std::optional<int> label_year;

    std::string output = "output";
    std::uint64_t seed = 0;
    assembler::SplitRatios split;
    std::int64_t min_T = 1;

    /// Directory of the config file; not serialized.
    std::filesystem::path base_dir;

    /// Every field against the owning module's rules. Throws ValidationError.
    void validate() const;

    std::filesystem::path resolve(const std::string& path) const;
    std::filesystem::path output_dir() const { return resolve(output); }
    /// The AOI as a WGS84 polygon, loading aoi_file when set.
    geo::GeoPolygon aoi() const;

    bool operator==(const PipelineConfig& other) const;
};

/// Parses and validates. Errors carry `context:line`.
PipelineConfig parse_config(std::string_view yaml, const std::filesystem::path& base_dir,
                            const std::string& context = "config");
PipelineConfig load_config(const std::filesystem::path& path);
/// Every field, defaults included, in the documented layout.
std::string serialize_config(const PipelineConfig& config);

/// Polygon from a GeoJSON Polygon, Feature or single-feature collection.
geo::GeoPolygon read_aoi_geojson(const std::filesystem::path& path);

} // namespace satseries::cli
