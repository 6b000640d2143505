#include <doctest.h>

#include <chrono>
#include <fstream>
#include <random>
#include <set>

#include <nlohmann/json.hpp>

#include "parcel_fixtures.hpp"
#include "synthetic.hpp"
#include "temp_dir.hpp"
#include "satseries/core/error.hpp"
#include "satseries/ingest/grid_file.hpp"
#include "satseries/tiler/tiler.hpp"

using namespace satseries;
using namespace satseries::tiler;

namespace {

TileGrid square_tile(std::int64_t n, const std::string& id = "32UQD") {
    TileGrid t;
    t.tile_id = id;
    t.crs = fixtures::kUtm32N;
    t.origin_x = fixtures::kOriginX;
    t.origin_y = fixtures::kOriginY;
    t.rows = n;
    t.cols = n;
    return t;
}

WindowSpec spec(int window_m, int stride_m = 0, bool labeled_only = false) {
    WindowSpec s;
    s.window_m = window_m;
    s.stride_m = stride_m ? stride_m : window_m;
    s.labeled_only = labeled_only;
    return s;
}

/// 120x120 base grid with two parcels in its upper-left quadrant.
rasterizer::LabelProduct sparse_label(int scale) {
    const auto g = rasterizer::GridSpec::from_base(
        geo::GeoTransform::north_up(fixtures::kOriginX, fixtures::kOriginY, 10, 10), 120, 120, fixtures::kUtm32N,
        scale);
    const std::vector<rasterizer::ParcelRecord> records = {
        fixtures::record(1, fixtures::local_ring({{15.0, 12.0}, {260.0, 30.0}, {235.0, 250.0}, {20.0, 200.0}}), 3),
        fixtures::record(2, fixtures::local_ring({{700.0, 905.0}, {732.5, 905.0}, {732.5, 941.0}}), 4),
    };
    return rasterizer::rasterize_parcels(records, g, 0, {});
}

/// Brute-force: does the parcel grid hold any claimed pixel inside the window?
std::size_t labeled_pixels(const rasterizer::LabelProduct& label, const Window& w) {
    const int s = label.grid.scale;
    std::size_t n = 0;
    for (std::int64_t r = w.row0 * s; r < (w.row0 + w.size10) * s; ++r) {
        for (std::int64_t c = w.col0 * s; c < (w.col0 + w.size10) * s; ++c) {
            n += label.parcel_grid[label.index(r, c)] != 0;
        }
    }
    return n;
}

std::vector<Window> all_windows(const TileGrid& t, std::int64_t w, std::int64_t s) {
    std::vector<Window> out;
    for (std::int64_t r = 0; r + w <= t.rows; r += s) {
        for (std::int64_t c = 0; c + w <= t.cols; c += s) {
            Window win;
            win.col0 = c;
            win.row0 = r;
            win.size10 = w;
            out.push_back(win);
        }
    }
    return out;
}

nlohmann::json read_json(const std::filesystem::path& p) {
    std::ifstream in(p);
    nlohmann::json j;
    in >> j;
    return j;
}

} // namespace

TEST_CASE("window count over a full tile") {
    const auto t0 = std::chrono::steady_clock::now();
    const auto windows = plan_windows(square_tile(10980), spec(240));
    const double seconds = std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
    CHECK(windows.size() == 208849);
    CHECK(seconds < 1.0);
    // independent enumeration
    std::size_t n = 0;
    for (std::int64_t r = 0; r + 24 <= 10980; r += 24) {
        for (std::int64_t c = 0; c + 24 <= 10980; c += 24) {
            ++n;
        }
    }
    CHECK(n == 208849);
    CHECK(windows.front().location_key == "T32UQD_0_0");
    CHECK(windows[1].location_key == "T32UQD_24_0");
    CHECK(windows.back().location_key == "T32UQD_10944_10944");
}

TEST_CASE("degenerate extents and invalid specs") {
    CHECK(plan_windows(square_tile(47), spec(480)).empty());
    TileGrid wide = square_tile(48);
    wide.cols = 1000;
    wide.rows = 47;
    CHECK(plan_windows(wide, spec(480)).empty());
    CHECK(plan_windows(square_tile(48), spec(480)).size() == 1);

    CHECK_THROWS_WITH_AS(spec(250).validate(), "window_m must be divisible by 60", ValidationError);
    CHECK_THROWS_WITH_AS(spec(480, 250).validate(), "stride_m must be divisible by 60", ValidationError);
    CHECK_THROWS_AS(spec(0).validate(), ValidationError);
    CHECK_THROWS_AS(spec(-60).validate(), ValidationError);
    CHECK_THROWS_AS(plan_windows(square_tile(100), spec(480, -480)), ValidationError);
    CHECK_THROWS_AS(plan_windows(square_tile(100), spec(480, 480, true)), ValidationError);
}

TEST_CASE("planned windows tile the extent with the given stride") {
    std::mt19937_64 rng(7);
    for (int trial = 0; trial < 200; ++trial) {
        TileGrid t = square_tile(1 + static_cast<std::int64_t>(rng() % 300));
        t.cols = 1 + static_cast<std::int64_t>(rng() % 300);
        const int w = 60 * (1 + static_cast<int>(rng() % 8));
        const bool overlap = trial % 2;
        const int s = overlap ? 60 * (1 + static_cast<int>(rng() % 8)) : w;
        const auto windows = plan_windows(t, spec(w, s));
        const auto expected = all_windows(t, w / 10, s / 10);
        REQUIRE(windows.size() == expected.size());
        for (std::size_t i = 0; i < windows.size(); ++i) {
            CHECK(windows[i].row0 == expected[i].row0);
            CHECK(windows[i].col0 == expected[i].col0);
            CHECK(windows[i].size10 == w / 10);
            CHECK(windows[i].extent.min_x == t.origin_x + windows[i].col0 * 10.0);
            CHECK(windows[i].extent.max_y == t.origin_y - windows[i].row0 * 10.0);
            CHECK(windows[i].extent.max_x - windows[i].extent.min_x == w);
        }
        if (!overlap) {
            const std::int64_t n = w / 10;
            CHECK(windows.size() == static_cast<std::size_t>((t.cols / n) * (t.rows / n)));
            // windows plus the right/bottom margin partition the grid
            std::vector<int> hits(static_cast<std::size_t>(t.rows * t.cols), 0);
            for (const Window& win : windows) {
                for (std::int64_t r = win.row0; r < win.row0 + n; ++r) {
                    for (std::int64_t c = win.col0; c < win.col0 + n; ++c) {
                        ++hits[static_cast<std::size_t>(r * t.cols + c)];
                    }
                }
            }
            for (std::int64_t r = 0; r < t.rows; ++r) {
                for (std::int64_t c = 0; c < t.cols; ++c) {
                    const bool in_margin = r >= (t.rows / n) * n || c >= (t.cols / n) * n;
                    CHECK(hits[static_cast<std::size_t>(r * t.cols + c)] == (in_margin ? 0 : 1));
                }
            }
            CHECK(t.cols - (t.cols / n) * n < n);
        }
    }
}

TEST_CASE("patch sizes and exact crops across resolutions") {
    TempDir tmp;
    synthetic::ProductSpec ps;
    ps.product_id = "P1";
    ps.size_10m = 600;
    ps.seed = 11;
    auto bundle = ingest::parse_manifest(synthetic::write_product(tmp.path(), ps));
    ingest::load_bands(bundle);
    const TileGrid tile = TileGrid::from_bundle(bundle);
    CHECK(tile.rows == 600);
    const auto windows = plan_windows(tile, spec(480));
    REQUIRE(windows.size() == 144);

    const auto& order = ingest::canonical_band_order();
    for (const Window& win : {windows[0], windows[13], windows.back()}) {
        std::optional<geo::GeoPoint> corner;
        for (std::size_t b = 0; b < order.size(); ++b) {
            const ingest::BandGrid& band = bundle.bands.at(order[b]);
            const Patch p = extract_patch(band, win, bundle.sensing_time);
            const std::int64_t side = 480 / band.resolution_m;
            CHECK(p.rows == side);
            CHECK(p.cols == side);
            CHECK(p.values.size() == static_cast<std::size_t>(side * side));
            if (band.resolution_m == 10) CHECK(side == 48);
            if (band.resolution_m == 20) CHECK(side == 24);
            if (band.resolution_m == 60) CHECK(side == 8);
            // pure crop: compare against the generator directly
            const std::int64_t r0 = win.row0 * 10 / band.resolution_m, c0 = win.col0 * 10 / band.resolution_m;
            bool same = true;
            for (std::int64_t r = 0; r < side; ++r) {
                for (std::int64_t c = 0; c < side; ++c) {
                    same &= p.values[static_cast<std::size_t>(r * side + c)] ==
                            synthetic::sample_value(ps.seed, b, r0 + r, c0 + c);
                }
            }
            CHECK(same);
            const geo::GeoPoint tl = p.geotransform.pixel_to_geo(0.0, 0.0);
            const geo::GeoPoint br = p.geotransform.pixel_to_geo(double(p.cols), double(p.rows));
            CHECK(tl.x == win.extent.min_x);
            CHECK(tl.y == win.extent.max_y);
            CHECK(br.x == win.extent.max_x);
            CHECK(br.y == win.extent.min_y);
            if (corner) {
                CHECK(tl.x == corner->x);
                CHECK(tl.y == corner->y);
            }
            corner = tl;
        }
    }

    Window outside = windows.back();
    outside.col0 += 48;
    CHECK_THROWS_AS(extract_patch(bundle.bands.at("B02"), outside), ValidationError);
    CHECK_THROWS_AS(extract_patch(bundle.bands.at("B01"), outside), ValidationError);
}

TEST_CASE("label patches") {
    for (int scale : {1, 4}) {
        CAPTURE(scale);
        const auto label = sparse_label(scale);
        const auto windows = plan_windows(square_tile(120), spec(480));
        REQUIRE(windows.size() == 4);
        for (const Window& win : windows) {
            const auto p = extract_label_patch(label, win);
            const std::int64_t side = 48 * scale;
            CHECK(p.grid.rows == side);
            CHECK(p.grid.cols == side);
            CHECK(p.grid.scale == scale);
            CHECK(p.class_grid.size() == static_cast<std::size_t>(side * side));
            CHECK(p.parcel_grid.size() == p.class_grid.size());
            CHECK(p.partial_conflict_mask.size() == p.class_grid.size());
            CHECK(p.full_conflict_mask.size() == p.class_grid.size());
            const geo::GeoPoint tl = p.grid.geotransform.pixel_to_geo(0.0, 0.0);
            CHECK(tl.x == win.extent.min_x);
            CHECK(tl.y == win.extent.max_y);
            bool same = true;
            for (std::int64_t r = 0; r < side; ++r) {
                for (std::int64_t c = 0; c < side; ++c) {
                    const auto src = label.index(win.row0 * scale + r, win.col0 * scale + c);
                    const auto dst = static_cast<std::size_t>(r * side + c);
                    same &= p.class_grid[dst] == label.class_grid[src];
                    same &= p.parcel_grid[dst] == label.parcel_grid[src];
                    same &= p.partial_conflict_mask[dst] == label.partial_conflict_mask[src];
                    same &= p.full_conflict_mask[dst] == label.full_conflict_mask[src];
                }
            }
            CHECK(same);
        }
        Window outside = windows.back();
        outside.row0 += 48;
        CHECK_THROWS_AS(extract_label_patch(label, outside), ValidationError);
    }
}

TEST_CASE("labeled-only planning matches a brute-force scan") {
    TempDir tmp;
    for (int scale : {1, 2, 4}) {
        CAPTURE(scale);
        const auto label = sparse_label(scale);
        const auto dir = tmp / ("label" + std::to_string(scale));
        rasterizer::write_label_product(dir, label);
        const LabelSource mem = LabelSource::in_memory(label);
        const LabelSource disk = LabelSource::directory(dir);
        for (auto [w, s] : {std::pair{240, 240}, {120, 60}, {180, 120}, {480, 480}}) {
            CAPTURE(w);
            CAPTURE(s);
            const TileGrid tile = square_tile(120);
            std::vector<std::string> expected;
            for (const Window& win : plan_windows(tile, spec(w, s))) {
                if (labeled_pixels(label, win) > 0) {
                    expected.push_back(win.location_key);
                }
            }
            REQUIRE_FALSE(expected.empty());
            std::vector<std::string> got_mem, got_disk;
            for (const Window& win : plan_windows(tile, spec(w, s, true), &mem)) {
                got_mem.push_back(win.location_key);
            }
            for (const Window& win : plan_windows(tile, spec(w, s, true), &disk)) {
                got_disk.push_back(win.location_key);
            }
            CHECK(got_mem == expected);
            CHECK(got_disk == expected);
        }
    }

    SUBCASE("minimum labeled fraction") {
        const auto label = sparse_label(2);
        const LabelSource src = LabelSource::in_memory(label);
        WindowSpec s = spec(240, 240, true);
        s.min_labeled_fraction = 0.25;
        std::vector<std::string> expected;
        for (const Window& win : plan_windows(square_tile(120), spec(240))) {
            const double f = double(labeled_pixels(label, win)) / double(48 * 48);
            if (f > 0 && f >= 0.25) {
                expected.push_back(win.location_key);
            }
        }
        std::vector<std::string> got;
        for (const Window& win : plan_windows(square_tile(120), s, &src)) {
            got.push_back(win.location_key);
        }
        CHECK(got == expected);
        CHECK(got.size() < plan_windows(square_tile(120), spec(240, 240, true), &src).size());
    }

    SUBCASE("all background") {
        const auto g = rasterizer::GridSpec::from_base(
            geo::GeoTransform::north_up(fixtures::kOriginX, fixtures::kOriginY, 10, 10), 120, 120,
            fixtures::kUtm32N, 1);
        const auto empty = rasterizer::rasterize_parcels({}, g, 0, {});
        const LabelSource src = LabelSource::in_memory(empty);
        CHECK(plan_windows(square_tile(120), spec(240, 240, true), &src).empty());
        CHECK(plan_windows(square_tile(120), spec(240, 240, false), &src).size() == 25);
    }

    SUBCASE("misaligned label grid") {
        const auto label = sparse_label(1);
        const LabelSource src = LabelSource::in_memory(label);
        TileGrid shifted = square_tile(120);
        shifted.origin_x += 10.0;
        CHECK_THROWS_AS(plan_windows(shifted, spec(240, 240, true), &src), ValidationError);
        CHECK_THROWS_AS(plan_windows(square_tile(110), spec(240, 240, true), &src), ValidationError);
    }
}

TEST_CASE("tile_product writes verified patches and is restartable") {
    TempDir tmp;
    synthetic::ProductSpec ps;
    ps.product_id = "S2A_P1";
    ps.size_10m = 240;
    ps.seed = 3;
    ps.zero_left_fraction = 0.25;  // first 60 columns are nodata
    const auto manifest = synthetic::write_product(tmp / "product", ps);
    auto bundle = ingest::parse_manifest(manifest);
    const TileGrid tile = TileGrid::from_bundle(bundle);
    const WindowSpec ws = spec(480);
    const auto windows = plan_windows(tile, ws);
    REQUIRE(windows.size() == 25);

    TileOptions opts;
    opts.jobs = 3;
    const TileReport first = tile_product(bundle, windows, ws, tmp / "out", opts);
    CHECK(first.date_dir == "20180501T103021Z");
    CHECK(first.windows_skipped_empty == 5);  // col0 = 0 lies entirely in the nodata margin
    CHECK(first.windows_written == 20);
    CHECK(first.windows_already_present == 0);
    CHECK_FALSE(first.superseded);

    const auto date_dir = tmp / "out" / "patches" / first.date_dir;
    const auto meta = read_json(date_dir / "product.json");
    CHECK(meta["product_id"] == "S2A_P1");
    CHECK(meta["complete"] == true);
    CHECK(meta["cloud_cover_pct"] == 5.0);
    CHECK(meta["sensing_time"] == "2018-05-01T10:30:21Z");

    ingest::load_bands(bundle);
    for (const Window& win : windows) {
        const bool empty = win.col0 == 0;
        for (const auto& [id, band] : bundle.bands) {
            const auto path = date_dir / win.location_key / (id + ".grid");
            REQUIRE(std::filesystem::exists(path) == !empty);
            if (empty) continue;
            const ingest::BandGrid stored = ingest::load_band(path);
            const Patch expected = extract_patch(band, win);
            CHECK(stored.values == expected.values);
            CHECK(stored.rows == expected.rows);
            CHECK(stored.geotransform.pixel_to_geo(0.0, 0.0).x == win.extent.min_x);
            CHECK(stored.geotransform.pixel_to_geo(0.0, 0.0).y == win.extent.max_y);
            CHECK(ingest::verify_grid(path));
        }
    }

    // restart: everything verifies, nothing is rewritten
    const auto stamp = std::filesystem::last_write_time(date_dir / windows[7].location_key / "B02.grid");
    const TileReport again = tile_product(bundle, windows, ws, tmp / "out");
    CHECK(again.windows_written == 0);
    CHECK(again.windows_already_present == 20);
    CHECK(std::filesystem::last_write_time(date_dir / windows[7].location_key / "B02.grid") == stamp);

    // a corrupted patch is rewritten
    {
        std::fstream f(date_dir / windows[7].location_key / "B11.grid", std::ios::in | std::ios::out | std::ios::binary);
        f.seekp(10);
        f.put('\x7f');
    }
    CHECK_FALSE(ingest::verify_grid(date_dir / windows[7].location_key / "B11.grid"));
    tile_product(bundle, windows, ws, tmp / "out");
    CHECK(ingest::verify_grid(date_dir / windows[7].location_key / "B11.grid"));
}

TEST_CASE("tile_product output does not depend on jobs") {
    TempDir tmp;
    synthetic::ProductSpec ps;
    ps.product_id = "P";
    ps.size_10m = 120;
    const auto bundle = ingest::parse_manifest(synthetic::write_product(tmp / "product", ps));
    const auto windows = plan_windows(TileGrid::from_bundle(bundle), spec(240, 120));
    for (int jobs : {1, 4}) {
        TileOptions o;
        o.jobs = jobs;
        tile_product(bundle, windows, spec(240, 120), tmp / ("out" + std::to_string(jobs)), o);
    }
    std::size_t files = 0;
    for (const auto& e : std::filesystem::recursive_directory_iterator(tmp / "out1")) {
        if (!e.is_regular_file()) continue;
        const auto rel = std::filesystem::relative(e.path(), tmp / "out1");
        std::ifstream a(e.path(), std::ios::binary), b(tmp / "out4" / rel, std::ios::binary);
        const std::string sa((std::istreambuf_iterator<char>(a)), {}), sb((std::istreambuf_iterator<char>(b)), {});
        CHECK_MESSAGE(sa == sb, rel.string());
        ++files;
    }
    CHECK(files == 1 + windows.size() * 13 * 2);
}

TEST_CASE("same-day products resolve to one date directory") {
    TempDir tmp;
    synthetic::ProductSpec a;
    a.product_id = "B_PRODUCT";
    a.size_10m = 96;
    a.cloud_cover_pct = 3.0;
    a.seed = 1;
    synthetic::ProductSpec b = a;
    b.product_id = "A_PRODUCT";
    b.seed = 2;
    const auto ba = ingest::parse_manifest(synthetic::write_product(tmp / "a", a));
    auto bb = ingest::parse_manifest(synthetic::write_product(tmp / "b", b));
    const auto windows = plan_windows(TileGrid::from_bundle(ba), spec(480));

    CHECK_FALSE(tile_product(ba, windows, spec(480), tmp / "out").superseded);
    // equal cloud, smaller id wins
    CHECK_FALSE(tile_product(bb, windows, spec(480), tmp / "out").superseded);
    const auto dir = tmp / "out" / "patches" / "20180501T103021Z";
    CHECK(read_json(dir / "product.json")["product_id"] == "A_PRODUCT");
    CHECK(tile_product(ba, windows, spec(480), tmp / "out").superseded);
    CHECK(read_json(dir / "product.json")["product_id"] == "A_PRODUCT");

    // lower cloud beats the smaller id
    bb.cloud_cover_pct = 9.0;
    synthetic::ProductSpec c = a;
    c.product_id = "C_PRODUCT";
    c.cloud_cover_pct = 1.0;
    const auto bc = ingest::parse_manifest(synthetic::write_product(tmp / "c", c));
    CHECK_FALSE(tile_product(bc, windows, spec(480), tmp / "out").superseded);
    CHECK(read_json(dir / "product.json")["product_id"] == "C_PRODUCT");
    const ingest::BandGrid g = ingest::load_band(dir / windows[0].location_key / "B02.grid");
    CHECK(g.values[0] == synthetic::sample_value(c.seed, 0, 0, 0));
}

TEST_CASE("tile_labels crops every layer from disk") {
    TempDir tmp;
    for (int scale : {1, 4}) {
        const auto label = sparse_label(scale);
        const auto dir = tmp / ("label" + std::to_string(scale));
        rasterizer::write_label_product(dir, label);
        const auto windows = plan_windows(square_tile(120), spec(240));
        const auto out = tmp / ("out" + std::to_string(scale));
        TileOptions o;
        o.jobs = 2;
        tile_labels(dir, windows, out, o);
        for (const Window& win : windows) {
            const auto stored = rasterizer::read_label_product(out / "labels" / win.location_key);
            const auto expected = extract_label_patch(label, win);
            CHECK(stored.grid.rows == 24 * scale);
            CHECK(stored.grid.scale == scale);
            CHECK(stored.class_grid == expected.class_grid);
            CHECK(stored.parcel_grid == expected.parcel_grid);
            CHECK(stored.partial_conflict_mask == expected.partial_conflict_mask);
            CHECK(stored.full_conflict_mask == expected.full_conflict_mask);
            CHECK(stored.grid.geotransform.pixel_to_geo(0.0, 0.0).x == win.extent.min_x);
            CHECK(stored.year == label.year);
        }
        const auto key = windows[3].location_key;
        const auto stamp = std::filesystem::last_write_time(out / "labels" / key / "labels.grid");
        tile_labels(dir, windows, out);
        CHECK(std::filesystem::last_write_time(out / "labels" / key / "labels.grid") == stamp);
    }
}
