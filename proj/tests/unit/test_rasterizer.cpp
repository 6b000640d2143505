#include <doctest.h>

#include <algorithm>
#include <cmath>
#include <fstream>
#include <random>

#include "oracles.hpp"
#include "parcel_fixtures.hpp"
#include "temp_dir.hpp"
#include "satseries/core/error.hpp"
#include "satseries/geo/coverage.hpp"
#include "satseries/geo/projection.hpp"
#include "satseries/rasterizer/parcel.hpp"
#include "satseries/rasterizer/rasterize.hpp"

using namespace satseries;
using namespace satseries::rasterizer;
using fixtures::grid;
using fixtures::local_ring;
using fixtures::record;

namespace {

std::size_t count(const std::vector<std::uint8_t>& v) {
    return static_cast<std::size_t>(std::count(v.begin(), v.end(), std::uint8_t{1}));
}

void check_same(const LabelProduct& a, const LabelProduct& b) {
    CHECK(a.class_grid == b.class_grid);
    CHECK(a.parcel_grid == b.parcel_grid);
    CHECK(a.partial_conflict_mask == b.partial_conflict_mask);
    CHECK(a.full_conflict_mask == b.full_conflict_mask);
}

std::vector<ParcelRecord> random_convex_records(std::mt19937_64& rng, int n, double extent) {
    std::uniform_real_distribution<double> pos(0.1 * extent, 0.9 * extent);
    std::uniform_real_distribution<double> rad(0.03 * extent, 0.2 * extent);
    std::uniform_int_distribution<int> verts(3, 8);
    std::uniform_int_distribution<std::uint32_t> cls(1, 9);
    std::vector<ParcelRecord> out;
    for (int i = 0; i < n; ++i) {
        geo::Ring ring = oracle::random_convex_polygon(rng, verts(rng), fixtures::kOriginX + pos(rng),
                                                       fixtures::kOriginY - pos(rng), rad(rng), rad(rng));
        out.push_back(record(static_cast<std::uint32_t>(i + 1), ring, cls(rng)));
    }
    return out;
}

} // namespace

TEST_CASE("aligned square parcel fills its pixels exactly") {
    const std::vector<ParcelRecord> recs{record(7, local_ring({{100, 100}, {200, 100}, {200, 200}, {100, 200}}), 3)};
    const LabelProduct label = rasterize_parcels(recs, grid(1), 0);
    for (std::int64_t r = 0; r < 64; ++r) {
        for (std::int64_t c = 0; c < 64; ++c) {
            const bool in = r >= 10 && r < 20 && c >= 10 && c < 20;
            CHECK(label.class_grid[label.index(r, c)] == (in ? 3u : 0u));
            CHECK(label.parcel_grid[label.index(r, c)] == (in ? 7u : 0u));
        }
    }
    CHECK(count(label.partial_conflict_mask) == 0);
    CHECK(count(label.full_conflict_mask) == 0);
    const ConflictRatio ratio = conflict_ratio(label);
    CHECK(ratio.partial == 0.0);
    CHECK(ratio.full == 0.0);
}

TEST_CASE("adjacent parcels: boundary pixels are partial conflicts only") {
    const auto recs = fixtures::adjacent_parcels();
    const GridSpec g = grid(1);
    const LabelProduct label = rasterize_parcels(recs, g, 0);
    const fixtures::OracleMasks oracle = fixtures::oracle_masks(recs, g);
    CHECK(count(label.full_conflict_mask) == 0);
    CHECK(count(label.partial_conflict_mask) > 0);
    CHECK(label.partial_conflict_mask == oracle.partial);
    CHECK(label.full_conflict_mask == oracle.full);
}

TEST_CASE("duplicated parcel: interior pixels are full conflicts") {
    const auto recs = fixtures::duplicated_parcels();
    const GridSpec g = grid(1);
    const LabelProduct label = rasterize_parcels(recs, g, 0);
    const fixtures::OracleMasks oracle = fixtures::oracle_masks(recs, g);
    CHECK(label.full_conflict_mask == oracle.full);
    CHECK(label.partial_conflict_mask == oracle.partial);

    // full ratio equals the interior-pixel share from the corner test
    std::size_t interior = 0, labeled = 0;
    for (std::size_t k = 0; k < oracle.claims.size(); ++k) {
        interior += oracle.full[k];
        labeled += oracle.claims[k] > 0;
    }
    REQUIRE(interior > 100);
    CHECK(conflict_ratio(label).full == doctest::Approx(double(interior) / double(labeled)).epsilon(1e-15));
    // ties go to the lower parcel_id
    for (std::size_t k = 0; k < oracle.full.size(); ++k) {
        if (oracle.full[k]) {
            CHECK(label.parcel_grid[k] == 1u);
            CHECK(label.class_grid[k] == 5u);
        }
    }
}

TEST_CASE("super-resolution lowers the partial conflict ratio") {
    const auto recs = fixtures::adjacent_parcels();
    const double r1 = conflict_ratio(rasterize_parcels(recs, grid(1), 0)).partial;
    const double r4 = conflict_ratio(rasterize_parcels(recs, grid(4), 0)).partial;
    CHECK(r1 > 0.0);
    CHECK(r4 > 0.0);
    CHECK(r4 < r1);
}

TEST_CASE("partial conflicts per base pixel shrink as scale doubles") {
    std::mt19937_64 rng(42);
    for (int trial = 0; trial < 6; ++trial) {
        // convex tiles of a random line split
        std::uniform_real_distribution<double> u(150, 490);
        const std::pair<double, double> top{u(rng), 60.0 + u(rng) / 10};
        const std::pair<double, double> bottom{u(rng), 580.0 - u(rng) / 10};
        const std::vector<ParcelRecord> recs{
            record(1, local_ring({{40.3, 51.7}, top, bottom, {45.9, 590.1}}), 1),
            record(2, local_ring({top, {603.3, 58.2}, {597.1, 601.9}, bottom}), 2),
        };
        double previous = 1e300;
        for (int scale : {1, 2, 4, 8}) {
            const LabelProduct label = rasterize_parcels(recs, grid(scale), 0);
            const double normalized = double(count(label.partial_conflict_mask)) / double(scale * scale);
            CHECK(normalized <= previous);
            previous = normalized;
        }
    }
}

TEST_CASE("claimant sets match a per-pixel brute-force oracle") {
    std::mt19937_64 rng(7);
    for (int trial = 0; trial < 5; ++trial) {
        const auto recs = random_convex_records(rng, 12, 640);
        const GridSpec g = grid(1);
        const LabelProduct label = rasterize_parcels(recs, g, 99);
        const fixtures::OracleMasks oracle = fixtures::oracle_masks(recs, g);
        CHECK(label.partial_conflict_mask == oracle.partial);
        CHECK(label.full_conflict_mask == oracle.full);
        for (std::int64_t r = 0; r < g.rows; ++r) {
            for (std::int64_t c = 0; c < g.cols; ++c) {
                const std::size_t k = label.index(r, c);
                // winner: greatest per-pixel fraction, lowest id on ties
                double best = 0.0;
                const ParcelRecord* winner = nullptr;
                for (const ParcelRecord& rec : recs) {
                    const double f = geo::pixel_coverage_fraction(rec.geometry, {c, r}, g.geotransform);
                    if (f > kClaimThreshold && (f > best || (f == best && rec.parcel_id < winner->parcel_id))) {
                        best = f;
                        winner = &rec;
                    }
                }
                if (oracle.claims[k] == 0) {
                    CHECK(label.class_grid[k] == 99u);
                    CHECK(label.parcel_grid[k] == 0u);
                } else {
                    REQUIRE(winner != nullptr);
                    CHECK(label.parcel_grid[k] == winner->parcel_id);
                    CHECK(label.class_grid[k] == std::get<std::uint32_t>(winner->ground_truth));
                }
            }
        }
    }
}

TEST_CASE("output is independent of record order, block size and thread count") {
    std::mt19937_64 rng(11);
    auto recs = random_convex_records(rng, 30, 640);
    const LabelProduct reference = rasterize_parcels(recs, grid(2), 0);
    for (int i = 0; i < 4; ++i) {
        std::shuffle(recs.begin(), recs.end(), rng);
        RasterizeOptions opts;
        opts.block_size = std::vector<std::int64_t>{7, 32, 100, 1024}[static_cast<std::size_t>(i)];
        opts.jobs = 1 + i;
        check_same(rasterize_parcels(recs, grid(2), 0, opts), reference);
    }
}

TEST_CASE("full conflicts are a subset of partial conflicts") {
    std::mt19937_64 rng(3);
    for (int trial = 0; trial < 5; ++trial) {
        auto recs = random_convex_records(rng, 20, 640);
        recs.push_back(recs.front());
        recs.back().parcel_id = 1000;
        const LabelProduct label = rasterize_parcels(recs, grid(1 + trial % 3), 0);
        CHECK(count(label.full_conflict_mask) > 0);
        for (std::size_t k = 0; k < label.full_conflict_mask.size(); ++k) {
            if (label.full_conflict_mask[k]) {
                CHECK(label.partial_conflict_mask[k] == 1);
            }
        }
    }
}

TEST_CASE("parcels in WGS84 are projected into the grid CRS") {
    const auto utm = fixtures::duplicated_parcels();
    std::vector<ParcelRecord> geographic = utm;
    for (ParcelRecord& r : geographic) {
        r.geometry = geo::project(r.geometry, geo::Crs::wgs84());
    }
    const LabelProduct a = rasterize_parcels(utm, grid(1), 0);
    const LabelProduct b = rasterize_parcels(geographic, grid(1), 0);
    check_same(a, b);
}

TEST_CASE("records outside the grid contribute nothing") {
    const std::vector<ParcelRecord> recs{record(1, local_ring({{-500, -500}, {-400, -500}, {-400, -400}}), 4)};
    const LabelProduct label = rasterize_parcels(recs, grid(1), 8);
    CHECK(std::all_of(label.class_grid.begin(), label.class_grid.end(), [](auto v) { return v == 8; }));
    CHECK(std::all_of(label.parcel_grid.begin(), label.parcel_grid.end(), [](auto v) { return v == 0; }));
}

TEST_CASE("duplicate parcel ids are rejected") {
    auto recs = fixtures::adjacent_parcels();
    recs[1].parcel_id = recs[0].parcel_id;
    CHECK_THROWS_WITH_AS(rasterize_parcels(recs, grid(1), 0), doctest::Contains("duplicate parcel_id"),
                         ValidationError);
}

TEST_CASE("grid spec validation") {
    CHECK_THROWS_AS(GridSpec::from_base(geo::GeoTransform::north_up(0, 0, 10, 10), 4, 4, fixtures::kUtm32N, 0),
                    ValidationError);
    CHECK_THROWS_AS(GridSpec::from_base(geo::GeoTransform::north_up(0, 0, 10, 10), 4, 4, geo::Crs::wgs84(), 1),
                    ValidationError);
    GridSpec bad = grid(2);
    bad.geotransform = geo::GeoTransform::north_up(0, 0, 10, 10);
    CHECK_THROWS_AS(bad.validate(), ValidationError);
    CHECK(grid(4).pixel_size() == 2.5);
    CHECK(grid(4).rows == 256);
}

TEST_CASE("regression ground truth goes to the value grid") {
    std::vector<ParcelRecord> recs{record(1, local_ring({{100, 100}, {200, 100}, {200, 200}, {100, 200}}), 0)};
    recs[0].ground_truth = 3.25;
    const LabelProduct label = rasterize_parcels(recs, grid(1), 0);
    REQUIRE(label.value_grid.has_value());
    CHECK((*label.value_grid)[label.index(15, 15)] == 3.25f);
    CHECK(std::isnan((*label.value_grid)[label.index(0, 0)]));
    CHECK(label.class_grid[label.index(15, 15)] == 0u);
    CHECK(label.parcel_grid[label.index(15, 15)] == 1u);
}

TEST_CASE("filter_by_year") {
    std::vector<ParcelRecord> recs{record(1, local_ring({{0, 0}, {10, 0}, {10, 10}}), 1, 2017),
                                   record(2, local_ring({{0, 0}, {10, 0}, {10, 10}}), 1, 2018),
                                   record(3, local_ring({{0, 0}, {10, 0}, {10, 10}}), 1, 2018)};
    const auto only2018 = filter_by_year(recs, 2018);
    REQUIRE(only2018.size() == 2);
    CHECK(only2018[0].parcel_id == 2);
    CHECK(only2018[1].parcel_id == 3);
    CHECK(filter_by_year(std::vector<ParcelRecord>{}, 2018).empty());
    recs.erase(recs.begin());
    CHECK(filter_by_year(recs, 2018).size() == recs.size());
}

TEST_CASE("GeoJSON parcels: parse, write, reparse") {
    const std::string text = R"({
      "type": "FeatureCollection",
      "crs": {"type": "name", "properties": {"name": "EPSG:32632"}},
      "features": [
        {"type": "Feature", "properties": {"parcel_id": 4, "ground_truth": 12, "year": 2018},
         "geometry": {"type": "Polygon", "coordinates": [[[600100, 5399900], [600200, 5399900], [600200, 5399800], [600100, 5399900]]]}},
        {"type": "Feature", "properties": {"parcel_id": 5, "ground_truth": 0.5, "year": 2017},
         "geometry": {"type": "MultiPolygon", "coordinates": [[[[600300, 5399900], [600400, 5399900], [600400, 5399800]]]]}}
      ]})";
    const ParcelCollection parsed = parse_parcels_geojson(text);
    CHECK(parsed.crs == fixtures::kUtm32N);
    REQUIRE(parsed.records.size() == 2);
    CHECK(parsed.records[0].parcel_id == 4);
    CHECK(std::get<std::uint32_t>(parsed.records[0].ground_truth) == 12);
    CHECK(std::get<double>(parsed.records[1].ground_truth) == 0.5);
    CHECK(parsed.records[1].year == 2017);
    CHECK(parsed.records[1].geometry.exterior.size() == 3);

    TempDir dir;
    write_parcels_geojson(dir.path() / "p.geojson", parsed);
    const ParcelCollection again = read_parcels_geojson(dir.path() / "p.geojson");
    REQUIRE(again.records.size() == 2);
    CHECK(again.records[0].geometry.exterior == parsed.records[0].geometry.exterior);
    CHECK(again.records[1].ground_truth == parsed.records[1].ground_truth);
}

TEST_CASE("GeoJSON parcels: errors name the feature") {
    auto feature = [](const std::string& props, const std::string& geom) {
        return R"({"type":"FeatureCollection","features":[{"type":"Feature","properties":)" + props +
               R"(,"geometry":)" + geom + "}]}";
    };
    const std::string tri = R"({"type":"Polygon","coordinates":[[[10,50],[11,50],[11,51]]]})";
    CHECK_THROWS_WITH_AS(parse_parcels_geojson(feature(R"({"ground_truth":1,"year":2018})", tri)),
                         doctest::Contains("features[0]"), ParseError);
    CHECK_THROWS_WITH_AS(parse_parcels_geojson(feature(R"({"parcel_id":0,"ground_truth":1,"year":2018})", tri)),
                         doctest::Contains("parcel_id"), ParseError);
    const std::string bowtie = R"({"type":"Polygon","coordinates":[[[10,50],[11,51],[11,50],[10,51]]]})";
    CHECK_THROWS_WITH(parse_parcels_geojson(feature(R"({"parcel_id":1,"ground_truth":1,"year":2018})", bowtie)),
                      doctest::Contains("self-intersecting"));
    const std::string two_parts =
        R"({"type":"MultiPolygon","coordinates":[[[[10,50],[11,50],[11,51]]],[[[12,50],[13,50],[13,51]]]]})";
    CHECK_THROWS(parse_parcels_geojson(feature(R"({"parcel_id":1,"ground_truth":1,"year":2018})", two_parts)));
    CHECK_THROWS_AS(parse_parcels_geojson("{not json"), ParseError);
}

TEST_CASE("label products: streamed directory output equals the in-memory product") {
    std::mt19937_64 rng(5);
    auto recs = random_convex_records(rng, 15, 640);
    const GridSpec g = grid(2);
    const LabelProduct mem = rasterize_parcels(recs, g, 0);
    TempDir dir;
    RasterizeOptions opts;
    opts.block_size = 50;
    opts.jobs = 3;
    rasterize_parcels_to_directory(recs, g, 0, 2018, opts, dir.path() / "streamed");
    write_label_product(dir.path() / "direct", mem);
    CHECK(verify_label_product(dir.path() / "streamed"));
    CHECK(verify_label_product(dir.path() / "direct"));
    const LabelProduct streamed = read_label_product(dir.path() / "streamed");
    check_same(streamed, mem);
    CHECK(streamed.year == 2018);
    CHECK(streamed.grid.scale == 2);
    CHECK(streamed.grid.geotransform == g.geotransform);
    for (const char* layer : kLabelLayers) {
        const std::string name = std::string(layer) + ".grid";
        std::ifstream a(dir.path() / "streamed" / name, std::ios::binary);
        std::ifstream b(dir.path() / "direct" / name, std::ios::binary);
        CHECK(std::string(std::istreambuf_iterator<char>(a), {}) == std::string(std::istreambuf_iterator<char>(b), {}));
    }
    // corrupting one layer fails verification
    {
        std::fstream f(dir.path() / "streamed" / "mask_full.grid", std::ios::in | std::ios::out | std::ios::binary);
        f.seekp(10);
        f.put('\x07');
    }
    CHECK_FALSE(verify_label_product(dir.path() / "streamed"));
}
