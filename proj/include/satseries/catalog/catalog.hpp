#pragma once

#include <cstdint>
#include <filesystem>
#include <optional>
#include <string>
#include <string_view>
#include <vector>

#include <nlohmann/json.hpp>

#include "satseries/core/time.hpp"
#include "satseries/geo/geometry.hpp"

namespace satseries::catalog {

struct ProductMeta {
    std::string product_id;
    std::string tile_id;
    Timestamp sensing_time{};
    double cloud_cover_pct = 0.0;
    /// WGS84 parts; usually one.
    std::vector<geo::GeoPolygon> footprint;
    std::optional<double> data_coverage_pct;
    bool online = false;
    std::int64_t size_bytes = 0;
    std::optional<std::string> md5;
};

struct Aoi {
    geo::GeoPolygon polygon;

    /// Validates: WGS84, valid polygon, nonzero area.
    static Aoi from_polygon(geo::GeoPolygon polygon);
};

struct Poi {
    Timestamp start{};
    Timestamp end{};

    /// Throws ValidationError unless start < end.
    static Poi make(Timestamp start, Timestamp end);
};

struct SelectionConfig {
    double cloud_max_pct = 5.0;
    double min_aoi_overlap = 0.0;
    double min_data_coverage_pct = 0.0;
    int target_date_count = 1;

    void validate() const;
};

struct QuerySpec {
    double west = 0, south = 0, east = 0, north = 0;
    Timestamp start{};
    Timestamp end{};
    double cloud_max_pct = 100.0;

    /// `/search?bbox=w,s,e,n&start=ISO&end=ISO&cloudmax=pct`
    std::string to_request_path() const;
};

QuerySpec build_query(const Aoi& aoi, const Poi& poi, const SelectionConfig& cfg);

/// One hit of the search response (`id`, `tile`, `sensing_time`, `cloud_pct`,
/// `footprint_wkt`, `online`, `size`, `md5`, optional `data_coverage_pct`).
ProductMeta product_from_json(const nlohmann::json& hit);
nlohmann::json product_to_json(const ProductMeta& p);
std::vector<ProductMeta> parse_search_response(std::string_view body);

/// area(footprint ∩ aoi) / area(aoi), computed in the UTM zone of the AOI centroid.
double aoi_overlap_fraction(const ProductMeta& product, const Aoi& aoi);

struct RankedProduct {
    ProductMeta product;
    double overlap = 0.0;
    double cloud_pct = 0.0;
    /// Unknown coverage is ranked as 100.
    double data_coverage_pct = 100.0;
    int rank = 0;  // 1-based
};

struct RejectedProduct {
    ProductMeta product;
    std::string reason;
};

struct RankResult {
    std::vector<RankedProduct> ranked;
    std::vector<RejectedProduct> rejected;

    bool no_candidates() const { return ranked.empty(); }
};

/// Filters by the thresholds in `cfg` and orders survivors by overlap desc,
/// cloud asc, data coverage desc, sensing time asc, product_id asc.
RankResult rank_products(const std::vector<ProductMeta>& candidates, const Aoi& aoi, const SelectionConfig& cfg);

/// Indices of the k dates closest, in least squares, to an equally spaced grid
/// from the first to the last date. For k = 1 the date nearest `midpoint`
/// (default: halfway between first and last). Ties resolve to the
/// lexicographically smallest index sequence.
std::vector<std::size_t> select_uniform_dates(const std::vector<Timestamp>& dates, std::size_t k,
                                              std::optional<Timestamp> midpoint = std::nullopt);

/// The objective minimized by select_uniform_dates, scaled by (k-1)^2 so it
/// stays integral. Zero for k = 1.
__int128 uniform_spread_cost(const std::vector<Timestamp>& dates, const std::vector<std::size_t>& chosen);

/// Survivors whose sensing time is among the k uniformly selected distinct
/// times, ordered by sensing time then rank.
std::vector<RankedProduct> select_products(const RankResult& ranking, const SelectionConfig& cfg, const Poi& poi);

struct SelectionEntry {
    std::string product_id;
    std::string tile_id;
    Timestamp sensing_time{};

    bool operator==(const SelectionEntry&) const = default;
};

void write_selection_file(const std::filesystem::path& path, const std::vector<SelectionEntry>& entries);
/// Skips blank lines and `#` comments. Throws ParseError with the line number.
std::vector<SelectionEntry> read_selection_file(const std::filesystem::path& path);
std::vector<SelectionEntry> parse_selection(std::string_view text, const std::string& context = "selection");

/// CSV with header product_id,sensing_time,overlap,cloud_pct,data_coverage_pct,rank.
void write_report_csv(const std::filesystem::path& path, const std::vector<RankedProduct>& ranked);

/// Full metadata of the query result, consumed by the download stage.
void write_catalog(const std::filesystem::path& path, const std::vector<ProductMeta>& products);
std::vector<ProductMeta> read_catalog(const std::filesystem::path& path);

} // namespace satseries::catalog
