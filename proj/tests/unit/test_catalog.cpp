#include <doctest.h>

#include <algorithm>
#include <fstream>
#include <random>
#include <set>

#include "oracles.hpp"
#include "uniform_oracle.hpp"
#include "temp_dir.hpp"
#include "satseries/catalog/catalog.hpp"
#include "satseries/core/error.hpp"
#include "satseries/geo/projection.hpp"

using namespace satseries;
using namespace satseries::catalog;
using geo::GeoPolygon;
using geo::Ring;

namespace {

Ring lonlat_box(double w, double s, double e, double n) { return {{w, s}, {e, s}, {e, n}, {w, n}}; }

Aoi aoi_box(double w, double s, double e, double n) {
    return Aoi::from_polygon(GeoPolygon{lonlat_box(w, s, e, n), {}, geo::Crs::wgs84()});
}

ProductMeta product(std::string id, Ring footprint, double cloud, std::string when = "2018-05-01T10:30:21Z") {
    ProductMeta p;
    p.product_id = std::move(id);
    p.tile_id = "32UQD";
    p.sensing_time = parse_timestamp(when);
    p.cloud_cover_pct = cloud;
    p.footprint = {GeoPolygon{std::move(footprint), {}, geo::Crs::wgs84()}};
    p.size_bytes = 100;
    return p;
}

std::vector<Timestamp> days(std::initializer_list<int> offsets) {
    std::vector<Timestamp> out;
    for (int d : offsets) {
        out.push_back(parse_timestamp("2018-01-01T00:00:00Z") + std::chrono::days(d));
    }
    return out;
}

} // namespace

TEST_CASE("build_query maps fields and serializes deterministically") {
    const Aoi aoi = aoi_box(11.0, 48.0, 11.5, 48.25);
    const Poi poi = Poi::make(parse_timestamp("2018-01-01T00:00:00Z"), parse_timestamp("2019-01-01T00:00:00Z"));
    SelectionConfig cfg;
    cfg.cloud_max_pct = 5;
    const QuerySpec q = build_query(aoi, poi, cfg);
    CHECK(q.cloud_max_pct == 5.0);
    const std::string path = q.to_request_path();
    CHECK(path == "/search?bbox=11,48,11.5,48.25&start=2018-01-01T00:00:00Z&end=2019-01-01T00:00:00Z&cloudmax=5");
    CHECK(build_query(aoi, poi, cfg).to_request_path() == path);
}

TEST_CASE("Poi and config invariants") {
    const Timestamp t = parse_timestamp("2018-01-01T00:00:00Z");
    CHECK_THROWS_AS(Poi::make(t, t), ValidationError);
    SelectionConfig cfg;
    cfg.min_aoi_overlap = 1.5;
    CHECK_THROWS_AS(cfg.validate(), ValidationError);
    cfg = {};
    cfg.target_date_count = 0;
    CHECK_THROWS_AS(cfg.validate(), ValidationError);
    CHECK_THROWS_AS(Aoi::from_polygon(GeoPolygon{lonlat_box(0, 0, 0, 1), {}, geo::Crs::wgs84()}), ValidationError);
}

TEST_CASE("aoi_overlap_fraction: containment, disjoint and half overlap") {
    const Aoi aoi = aoi_box(11.0, 48.0, 11.1, 48.1);
    CHECK(aoi_overlap_fraction(product("a", lonlat_box(10.5, 47.5, 11.5, 48.5), 0), aoi) ==
          doctest::Approx(1.0).epsilon(1e-12));
    CHECK(aoi_overlap_fraction(product("b", lonlat_box(12, 47.5, 12.5, 48.5), 0), aoi) == 0.0);

    // footprint covers the western half of the AOI in projected coordinates
    const geo::Crs utm = geo::Crs::utm(32, geo::Hemisphere::North);
    const GeoPolygon aoi_utm = geo::project(aoi.polygon, utm);
    const geo::Rect b = geo::bounding_box(aoi_utm.exterior);
    const Aoi square = Aoi::from_polygon(geo::project(
        GeoPolygon{{{b.min_x, b.min_y}, {b.min_x + 5000, b.min_y}, {b.min_x + 5000, b.min_y + 5000},
                    {b.min_x, b.min_y + 5000}}, {}, utm},
        geo::Crs::wgs84()));
    const GeoPolygon half = geo::project(
        GeoPolygon{{{b.min_x + 2500, b.min_y - 100}, {b.min_x + 9000, b.min_y - 100},
                    {b.min_x + 9000, b.min_y + 9000}, {b.min_x + 2500, b.min_y + 9000}}, {}, utm},
        geo::Crs::wgs84());
    ProductMeta p = product("c", half.exterior, 0);
    const double overlap = aoi_overlap_fraction(p, square);
    CHECK(overlap == doctest::Approx(0.5).epsilon(1e-6));

    // Monte-Carlo oracle in the same projected frame
    const GeoPolygon sq_utm = geo::project(square.polygon, utm);
    const GeoPolygon half_utm = geo::project(half, utm);
    const geo::Rect sb = geo::bounding_box(sq_utm.exterior);
    const double inside_both = oracle::monte_carlo_area(sb.min_x, sb.min_y, sb.max_x, sb.max_y, 400, [&](geo::GeoPoint q) {
        return oracle::inside_ring(q, sq_utm.exterior) && oracle::inside_ring(q, half_utm.exterior);
    });
    const double inside_aoi = oracle::monte_carlo_area(sb.min_x, sb.min_y, sb.max_x, sb.max_y, 400,
                                                       [&](geo::GeoPoint q) { return oracle::inside_ring(q, sq_utm.exterior); });
    CHECK(overlap == doctest::Approx(inside_both / inside_aoi).epsilon(5e-3));
}

TEST_CASE("aoi_overlap_fraction is bounded and monotone under shrinking footprints") {
    const Aoi aoi = aoi_box(11.0, 48.0, 11.2, 48.2);
    double previous = 2.0;
    for (int i = 0; i < 10; ++i) {
        const double inset = 0.03 * i;
        const double f = aoi_overlap_fraction(product("p", lonlat_box(10.95 + inset, 47.95 + inset, 11.25, 48.25), 0), aoi);
        CHECK(f >= 0.0);
        CHECK(f <= 1.0);
        CHECK(f <= previous + 1e-12);
        previous = f;
    }
}

TEST_CASE("rank_products ordering and filters") {
    const Aoi aoi = aoi_box(11.0, 48.0, 11.1, 48.1);
    SelectionConfig cfg;
    cfg.cloud_max_pct = 20;
    cfg.min_data_coverage_pct = 50;

    SUBCASE("less cloudy first") {
        const auto r = rank_products({product("x8", lonlat_box(10, 47, 12, 49), 8), product("x3", lonlat_box(10, 47, 12, 49), 3)}, aoi, cfg);
        REQUIRE(r.ranked.size() == 2);
        CHECK(r.ranked[0].product.product_id == "x3");
        CHECK(r.ranked[0].rank == 1);
    }
    SUBCASE("overlap dominates cloud") {
        const auto r = rank_products({product("low", lonlat_box(11.06, 47, 12, 49), 1), product("full", lonlat_box(10, 47, 12, 49), 10)}, aoi, cfg);
        REQUIRE(r.ranked.size() == 2);
        CHECK(r.ranked[0].product.product_id == "full");
        CHECK(r.ranked[1].overlap == doctest::Approx(0.4).epsilon(0.02));
    }
    SUBCASE("data coverage threshold and unknown coverage") {
        ProductMeta sparse = product("sparse", lonlat_box(10, 47, 12, 49), 1);
        sparse.data_coverage_pct = 20;
        ProductMeta unknown = product("unknown", lonlat_box(10, 47, 12, 49), 1);
        const auto r = rank_products({sparse, unknown}, aoi, cfg);
        REQUIRE(r.ranked.size() == 1);
        CHECK(r.ranked[0].product.product_id == "unknown");
        CHECK(r.ranked[0].data_coverage_pct == 100.0);
        REQUIRE(r.rejected.size() == 1);
        CHECK(r.rejected[0].reason.find("data coverage") != std::string::npos);
    }
    SUBCASE("no survivors is an outcome, not an error") {
        const auto r = rank_products({product("cloudy", lonlat_box(10, 47, 12, 49), 90)}, aoi, cfg);
        CHECK(r.no_candidates());
        CHECK(r.rejected.size() == 1);
    }
}

TEST_CASE("rank_products is invariant to input permutation") {
    const Aoi aoi = aoi_box(11.0, 48.0, 11.1, 48.1);
    std::mt19937_64 rng(9);
    std::vector<ProductMeta> candidates;
    for (int i = 0; i < 25; ++i) {
        // few distinct values so that ties are common
        const double w = 10.9 + 0.05 * (i % 3);
        char when[32];
        std::snprintf(when, sizeof when, "2018-0%d-01T10:00:00Z", 1 + i % 4);
        candidates.push_back(product("p" + std::to_string(i), lonlat_box(w, 47, 12, 49), double(i % 2), when));
    }
    SelectionConfig cfg;
    cfg.cloud_max_pct = 100;
    const auto reference = rank_products(candidates, aoi, cfg);
    for (int t = 0; t < 10; ++t) {
        std::shuffle(candidates.begin(), candidates.end(), rng);
        const auto r = rank_products(candidates, aoi, cfg);
        REQUIRE(r.ranked.size() == reference.ranked.size());
        for (std::size_t i = 0; i < r.ranked.size(); ++i) {
            CHECK(r.ranked[i].product.product_id == reference.ranked[i].product.product_id);
        }
    }
}

TEST_CASE("select_uniform_dates examples") {
    const auto d = days({0, 10, 11, 20});
    CHECK(select_uniform_dates(d, 3) == std::vector<std::size_t>{0, 1, 3});
    CHECK(select_uniform_dates(d, 4) == std::vector<std::size_t>{0, 1, 2, 3});
    CHECK(select_uniform_dates(d, 1) == std::vector<std::size_t>{1});
    CHECK(select_uniform_dates(d, 1, d[0] + std::chrono::days(12)) == std::vector<std::size_t>{2});
    CHECK_THROWS_AS(select_uniform_dates(d, 5), ValidationError);
    CHECK_THROWS_AS(select_uniform_dates(days({0, 0, 1}), 2), ValidationError);
}

TEST_CASE("select_uniform_dates matches exhaustive search") {
    std::mt19937_64 rng(2024);
    for (int trial = 0; trial < 200; ++trial) {
        const std::size_t n = std::uniform_int_distribution<std::size_t>(2, 15)(rng);
        std::set<long long> secs;
        while (secs.size() < n) {
            // coarse grid in some trials to force ties
            const long long v = trial % 2 ? std::uniform_int_distribution<long long>(0, 30)(rng) * 86400
                                          : std::uniform_int_distribution<long long>(0, 365LL * 86400)(rng);
            secs.insert(v);
        }
        std::vector<Timestamp> dates;
        for (long long s : secs) dates.push_back(Timestamp(std::chrono::seconds(1514764800 + s)));
        for (std::size_t k = 2; k <= std::min<std::size_t>(6, n); ++k) {
            const auto [expected, cost] = oracle::brute_force_uniform(dates, k);
            const auto got = select_uniform_dates(dates, k);
            CHECK(uniform_spread_cost(dates, got) == cost);
            CHECK(got == expected);
        }
    }
}

TEST_CASE("select_products keeps every survivor at the chosen times") {
    const Aoi aoi = aoi_box(11.0, 48.0, 11.1, 48.1);
    std::vector<ProductMeta> candidates;
    for (int m = 1; m <= 9; ++m) {
        char when[32];
        std::snprintf(when, sizeof when, "2018-%02d-10T10:00:00Z", m);
        candidates.push_back(product("a" + std::to_string(m), lonlat_box(10, 47, 12, 49), 1, when));
        candidates.push_back(product("b" + std::to_string(m), lonlat_box(10.5, 47, 12, 49), 2, when));
    }
    SelectionConfig cfg;
    cfg.target_date_count = 3;
    const Poi poi = Poi::make(parse_timestamp("2018-01-01T00:00:00Z"), parse_timestamp("2019-01-01T00:00:00Z"));
    const auto chosen = select_products(rank_products(candidates, aoi, cfg), cfg, poi);
    REQUIRE(chosen.size() == 6);
    CHECK(chosen[0].product.product_id == "a1");
    CHECK(chosen[1].product.product_id == "b1");
    CHECK(chosen[2].product.product_id == "a5");
    CHECK(chosen[4].product.product_id == "a9");
}

TEST_CASE("selection file round trip, comments and errors") {
    TempDir dir;
    const std::vector<SelectionEntry> entries{{"S2A_1", "32UQD", parse_timestamp("2018-05-01T10:30:21Z")},
                                              {"S2B_2", "32UQD", parse_timestamp("2018-06-01T10:30:21Z")}};
    write_selection_file(dir.path() / "sel.tsv", entries);
    CHECK(read_selection_file(dir.path() / "sel.tsv") == entries);
    const auto parsed = parse_selection("# header\n\nS2A_1\t32UQD\t2018-05-01T10:30:21Z\n#S2B_2\t32UQD\t2018-06-01T10:30:21Z\n");
    REQUIRE(parsed.size() == 1);
    CHECK(parsed[0] == entries[0]);
    CHECK_THROWS_WITH_AS(parse_selection("S2A_1\t32UQD\n"), doctest::Contains("selection:1"), ParseError);
    CHECK_THROWS_WITH_AS(parse_selection("# c\nS2A_1\t32UQD\tyesterday\n"), doctest::Contains("selection:2"), ParseError);
}

TEST_CASE("report csv and catalog round trip") {
    TempDir dir;
    const Aoi aoi = aoi_box(11.0, 48.0, 11.1, 48.1);
    ProductMeta p = product("S2A_X", lonlat_box(10, 47, 12, 49), 3.5);
    p.md5 = "0123456789abcdef0123456789abcdef";
    p.online = true;
    const auto ranked = rank_products({p}, aoi, SelectionConfig{}).ranked;
    write_report_csv(dir.path() / "report.csv", ranked);
    std::ifstream in(dir.path() / "report.csv");
    std::string header, row;
    std::getline(in, header);
    std::getline(in, row);
    CHECK(header == "product_id,sensing_time,overlap,cloud_pct,data_coverage_pct,rank");
    CHECK(row == "S2A_X,2018-05-01T10:30:21Z,1.000000,3.50,100.00,1");

    write_catalog(dir.path() / "catalog.json", {p});
    const auto back = read_catalog(dir.path() / "catalog.json");
    REQUIRE(back.size() == 1);
    CHECK(back[0].product_id == p.product_id);
    CHECK(back[0].md5 == p.md5);
    CHECK(back[0].online);
    CHECK(back[0].footprint[0].exterior == p.footprint[0].exterior);
}

TEST_CASE("search response parsing") {
    const auto products = parse_search_response(R"j({"products":[{"id":"A","tile":"32UQD","sensing_time":"2018-05-01T10:30:21Z",
        "cloud_pct":2.5,"footprint_wkt":"POLYGON ((10 47, 12 47, 12 49, 10 49, 10 47))","online":false,"size":1024,"md5":null}]})j");
    REQUIRE(products.size() == 1);
    CHECK(products[0].size_bytes == 1024);
    CHECK_FALSE(products[0].md5.has_value());
    CHECK_THROWS_WITH_AS(parse_search_response(R"j({"products":[{"id":"A"}]})j"), doctest::Contains("product A"), ParseError);
    CHECK_THROWS_AS(parse_search_response(R"j({"products":[{"id":"A","tile":"T","sensing_time":"2018-05-01T10:30:21Z","cloud_pct":120,"footprint_wkt":"POLYGON ((10 47, 12 47, 12 49, 10 47))"}]})j"), ParseError);
}
