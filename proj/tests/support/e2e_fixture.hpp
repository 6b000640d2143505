#pragma once

// The end-to-end fixture: a 600x600 mini-tile acquired on three dates (one too
// cloudy to select), three parcels and a pipeline config pointing at them.

#include <filesystem>
#include <fstream>
#include <string>
#include <vector>

#include "synthetic.hpp"
#include "satseries/cli/mock_products.hpp"
#include "satseries/geo/projection.hpp"
#include "satseries/hub/mock_hub.hpp"
#include "satseries/rasterizer/parcel.hpp"

namespace e2e {

namespace fs = std::filesystem;
using namespace satseries;

inline const geo::Crs kCrs = geo::Crs::utm(32, geo::Hemisphere::North);
inline constexpr double kOriginX = 600000.0;
inline constexpr double kOriginY = 5400000.0;
inline constexpr std::int64_t kSize = 600;

inline std::vector<synthetic::ProductSpec> product_specs() {
    std::vector<synthetic::ProductSpec> specs(3);
    specs[0].product_id = "S2A_MSIL1C_20180503T103021_N0206_R108_T32UQD";
    specs[0].sensing_time = "2018-05-03T10:30:21Z";
    specs[0].cloud_cover_pct = 2.0;
    specs[0].seed = 21;
    specs[1].product_id = "S2B_MSIL1C_20180718T103019_N0206_R108_T32UQD";
    specs[1].sensing_time = "2018-07-18T10:30:19Z";
    specs[1].cloud_cover_pct = 4.5;
    specs[1].seed = 22;
    specs[2].product_id = "S2A_MSIL1C_20180612T103021_N0206_R108_T32UQD";
    specs[2].sensing_time = "2018-06-12T10:30:21Z";
    specs[2].cloud_cover_pct = 61.0;
    specs[2].seed = 23;
    for (auto& s : specs) {
        s.tile_id = "32UQD";
        s.crs = kCrs;
        s.origin_x = kOriginX;
        s.origin_y = kOriginY;
        s.size_10m = kSize;
    }
    return specs;
}

inline geo::Ring local_ring(std::initializer_list<std::pair<double, double>> pts) {
    geo::Ring r;
    for (auto [dx, dy] : pts) {
        r.push_back({kOriginX + dx, kOriginY - dy});
    }
    return r;
}

inline rasterizer::ParcelCollection parcels() {
    rasterizer::ParcelCollection c;
    c.crs = kCrs;
    auto add = [&](std::uint32_t id, geo::Ring ring, std::uint32_t cls) {
        c.records.push_back({id, geo::GeoPolygon{std::move(ring), {}, kCrs}, cls, 2018});
    };
    add(1, local_ring({{520.0, 610.0}, {1930.0, 700.0}, {1850.0, 1980.0}, {600.0, 1900.0}}), 11);
    add(2, local_ring({{1930.0, 700.0}, {3300.0, 820.0}, {3250.0, 2100.0}, {1850.0, 1980.0}}), 22);
    add(3, local_ring({{3900.0, 3600.0}, {5200.0, 3700.0}, {5500.0, 4800.0}, {4600.0, 5600.0}, {3800.0, 4700.0}}), 33);
    return c;
}

/// Tile extent in WGS84, shrunk by 100 m so it stays inside the footprint.
inline std::vector<geo::GeoPoint> aoi_lonlat() {
    const double e = kSize * 10.0;
    std::vector<geo::GeoPoint> out;
    for (auto [dx, dy] : {std::pair{100.0, 100.0}, {e - 100.0, 100.0}, {e - 100.0, e - 100.0}, {100.0, e - 100.0}}) {
        out.push_back(geo::project({kOriginX + dx, kOriginY - e + dy}, kCrs, geo::Crs::wgs84()));
    }
    return out;
}

inline std::string config_yaml(const std::string& hub_url, const std::string& extra = "") {
    std::string aoi;
    char buf[96];
    for (const auto& p : aoi_lonlat()) {
        std::snprintf(buf, sizeof(buf), "    - [%.9f, %.9f]\n", p.x, p.y);
        aoi += buf;
    }
    return "aoi:\n  polygon:\n" + aoi +
           "poi:\n  start: 2018-04-01T00:00:00Z\n  end: 2018-10-01T00:00:00Z\n"
           "selection:\n  cloud_max: 20\n  target_date_count: 2\n"
           "hub:\n  url: \"" + hub_url + "\"\n  poll_interval: 1s\n  retry:\n    base: 100ms\n    cap: 1s\n"
           "windows:\n  window_m: 480\n  labeled_only: true\n"
           "labels:\n  parcels: parcels.geojson\n  scale: 2\n  year: 2018\n"
           "output: output\nseed: 7\n" + extra;
}

struct Fixture {
    fs::path root;
    fs::path config;
    std::vector<fs::path> product_dirs;
};

/// Writes products (as the hub holds them), parcels and config under `root`.
inline Fixture write_fixture(const fs::path& root, const std::string& hub_url, const std::string& extra = "") {
    Fixture f;
    f.root = root;
    for (const auto& spec : product_specs()) {
        const fs::path dir = root / "hub" / spec.product_id;
        synthetic::write_product(dir, spec);
        f.product_dirs.push_back(dir);
    }
    rasterizer::write_parcels_geojson(root / "parcels.geojson", parcels());
    f.config = root / "pipeline.yaml";
    std::ofstream(f.config) << config_yaml(hub_url, extra);
    return f;
}

inline void add_products(hub::MockHub& hub, const Fixture& f) {
    for (const auto& dir : f.product_dirs) {
        hub.add_product(cli::mock_product_from_directory(dir, f.root / "hub-archives"));
    }
}

} // namespace e2e
