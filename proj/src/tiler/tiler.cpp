#include "satseries/tiler/tiler.hpp"

#include <algorithm>
#include <atomic>
#include <fstream>
#include <map>
#include <numeric>

#include <nlohmann/json.hpp>

#include "satseries/core/error.hpp"
#include "satseries/core/log.hpp"
#include "satseries/core/parallel.hpp"
#include "satseries/ingest/grid_file.hpp"

namespace satseries::tiler {
namespace {

const ingest::BandRef& reference_band(const ingest::ProductBundle& bundle) {
    for (const auto& ref : bundle.band_refs) {
        if (ref.band_id == "B02") {
            return ref;
        }
    }
    for (const auto& ref : bundle.band_refs) {
        if (ref.resolution_m == 10) {
            return ref;
        }
    }
    throw ValidationError("product " + bundle.product_id + " has no 10 m band");
}

/// Windows grouped by row0, preserving plan order inside a group.
std::map<std::int64_t, std::vector<std::size_t>> rows_of(const std::vector<Window>& windows) {
    std::map<std::int64_t, std::vector<std::size_t>> groups;
    for (std::size_t i = 0; i < windows.size(); ++i) {
        groups[windows[i].row0].push_back(i);
    }
    return groups;
}

/// Reads the strip of a band covering one window row, restricted to the
/// columns the windows need. Calls fn(window index, patch values).
template <class Fn>
void for_each_patch(const ingest::GridWindowReader& reader, int resolution_m, const std::vector<Window>& windows,
                    const std::vector<std::size_t>& group, Fn&& fn) {
    const Window& first = windows[group.front()];
    const geo::PixelWindow w0 = first.at_resolution(resolution_m);
    std::int64_t col_begin = w0.col_begin, col_end = w0.col_end;
    for (std::size_t i : group) {
        const geo::PixelWindow w = windows[i].at_resolution(resolution_m);
        col_begin = std::min(col_begin, w.col_begin);
        col_end = std::max(col_end, w.col_end);
    }
    const std::int64_t strip_rows = w0.row_end - w0.row_begin;
    const std::int64_t strip_cols = col_end - col_begin;
    const auto strip = reader.read<std::uint16_t>(w0.row_begin, col_begin, strip_rows, strip_cols);
    std::vector<std::uint16_t> patch;
    for (std::size_t i : group) {
        const geo::PixelWindow w = windows[i].at_resolution(resolution_m);
        const std::int64_t pc = w.col_end - w.col_begin;
        patch.resize(static_cast<std::size_t>(strip_rows * pc));
        for (std::int64_t r = 0; r < strip_rows; ++r) {
            std::copy_n(strip.begin() + r * strip_cols + (w.col_begin - col_begin), pc, patch.begin() + r * pc);
        }
        fn(i, patch);
    }
}

void write_json_atomically(const std::filesystem::path& path, const nlohmann::json& j) {
    const auto tmp = path.string() + ".tmp";
    {
        std::ofstream out(tmp);
        out << j.dump(2) << '\n';
        if (!out) {
            throw Error("cannot write " + tmp);
        }
    }
    std::filesystem::rename(tmp, path);
}

std::optional<nlohmann::json> read_json(const std::filesystem::path& path) {
    std::ifstream in(path);
    if (!in) {
        return std::nullopt;
    }
    try {
        nlohmann::json j;
        in >> j;
        return j;
    } catch (const nlohmann::json::exception&) {
        return std::nullopt;
    }
}

template <class T>
std::vector<T> crop(const std::vector<T>& src, std::int64_t src_cols, const geo::PixelWindow& w) {
    const std::int64_t cols = w.col_end - w.col_begin;
    std::vector<T> out(static_cast<std::size_t>((w.row_end - w.row_begin) * cols));
    for (std::int64_t r = w.row_begin; r < w.row_end; ++r) {
        std::copy_n(src.begin() + r * src_cols + w.col_begin, cols, out.begin() + (r - w.row_begin) * cols);
    }
    return out;
}

} // namespace

void WindowSpec::validate() const {
    if (window_m <= 0 || window_m % 60 != 0) {
        throw ValidationError("window_m must be divisible by 60");
    }
    if (stride_m <= 0 || stride_m % 60 != 0) {
        throw ValidationError("stride_m must be divisible by 60");
    }
    if (!(min_labeled_fraction >= 0.0 && min_labeled_fraction <= 1.0)) {
        throw ValidationError("min_labeled_fraction must be within [0, 1]");
    }
}

TileGrid TileGrid::from_bundle(const ingest::ProductBundle& bundle) {
    const ingest::GridHeader h = ingest::read_grid_header(reference_band(bundle).path);
    TileGrid t;
    t.tile_id = bundle.tile_id;
    t.crs = h.crs;
    t.origin_x = h.geotransform.origin_x;
    t.origin_y = h.geotransform.origin_y;
    t.rows = h.rows;
    t.cols = h.cols;
    return t;
}

geo::GeoTransform TileGrid::geotransform(int resolution_m) const {
    return geo::GeoTransform::north_up(origin_x, origin_y, resolution_m, resolution_m);
}

geo::PixelWindow Window::at_resolution(int resolution_m) const {
    const std::int64_t c = col0 * 10 / resolution_m;
    const std::int64_t r = row0 * 10 / resolution_m;
    const std::int64_t n = size10 * 10 / resolution_m;
    return {c, r, c + n, r + n};
}

geo::PixelWindow Window::at_label_scale(int scale) const {
    return {col0 * scale, row0 * scale, (col0 + size10) * scale, (row0 + size10) * scale};
}

bool preferred_product(std::optional<double> cloud_a, const std::string& id_a, std::optional<double> cloud_b,
                       const std::string& id_b) {
    if (cloud_a != cloud_b) {
        // a missing cloud cover ranks after any known value
        return cloud_a && (!cloud_b || *cloud_a < *cloud_b);
    }
    return id_a < id_b;
}

std::string location_key(const std::string& tile_id, std::int64_t col0, std::int64_t row0) {
    return "T" + tile_id + "_" + std::to_string(col0) + "_" + std::to_string(row0);
}

LabelSource LabelSource::in_memory(const rasterizer::LabelProduct& label) {
    return {label.grid, [&label](std::int64_t row0, std::int64_t rows, std::vector<std::uint32_t>& out) {
                const auto begin = label.parcel_grid.begin() + row0 * label.grid.cols;
                out.assign(begin, begin + rows * label.grid.cols);
            }};
}

LabelSource LabelSource::directory(const std::filesystem::path& dir) {
    const rasterizer::LabelMeta meta = rasterizer::read_label_meta(dir);
    auto reader = std::make_shared<ingest::GridWindowReader>(dir / "parcels.grid");
    const ingest::GridHeader& h = reader->header();
    rasterizer::GridSpec grid;
    grid.rows = h.rows;
    grid.cols = h.cols;
    grid.crs = h.crs;
    grid.geotransform = h.geotransform;
    grid.scale = meta.scale;
    grid.validate();
    return {grid, [reader](std::int64_t row0, std::int64_t rows, std::vector<std::uint32_t>& out) {
                out = reader->read<std::uint32_t>(row0, 0, rows, reader->header().cols);
            }};
}

std::vector<Window> plan_windows(const TileGrid& tile, const WindowSpec& spec, const LabelSource* label) {
    spec.validate();
    const std::int64_t w = spec.window_m / 10;
    const std::int64_t s = spec.stride_m / 10;
    std::vector<Window> windows;
    if (tile.rows < w || tile.cols < w) {
        return windows;
    }
    const std::int64_t nr = (tile.rows - w) / s + 1;
    const std::int64_t nc = (tile.cols - w) / s + 1;

    std::vector<std::uint64_t> sat;  // summed-area table over labeled counts per cell
    std::int64_t cell = 0, ncr = 0, ncc = 0;
    std::int64_t scale = 1;
    if (spec.labeled_only) {
        if (!label) {
            throw ValidationError("labeled_only needs a label grid");
        }
        const rasterizer::GridSpec& g = label->grid;
        scale = g.scale;
        if (!(g.crs == tile.crs) || g.geotransform.origin_x != tile.origin_x ||
            g.geotransform.origin_y != tile.origin_y || g.rows != tile.rows * scale || g.cols != tile.cols * scale) {
            throw ValidationError("label grid is not aligned with tile " + tile.tile_id);
        }
        cell = std::gcd(w, s);
        ncr = ((nr - 1) * s + w) / cell;
        ncc = ((nc - 1) * s + w) / cell;
        const std::int64_t cell_l = cell * scale;
        sat.assign(static_cast<std::size_t>((ncr + 1) * (ncc + 1)), 0);
        std::vector<std::uint32_t> strip;
        std::vector<std::uint64_t> row_counts(static_cast<std::size_t>(ncc));
        for (std::int64_t cr = 0; cr < ncr; ++cr) {
            label->read_parcel_rows(cr * cell_l, cell_l, strip);
            std::fill(row_counts.begin(), row_counts.end(), 0);
            for (std::int64_t r = 0; r < cell_l; ++r) {
                const std::uint32_t* row = strip.data() + r * g.cols;
                for (std::int64_t c = 0; c < ncc * cell_l; ++c) {
                    row_counts[static_cast<std::size_t>(c / cell_l)] += row[c] != 0;
                }
            }
            for (std::int64_t cc = 0; cc < ncc; ++cc) {
                const auto k = static_cast<std::size_t>((cr + 1) * (ncc + 1) + cc + 1);
                sat[k] = row_counts[static_cast<std::size_t>(cc)] + sat[k - 1] +
                         sat[k - static_cast<std::size_t>(ncc + 1)] - sat[k - static_cast<std::size_t>(ncc + 2)];
            }
        }
    }
    auto labeled_count = [&](std::int64_t row0, std::int64_t col0) {
        const std::int64_t r0 = row0 / cell, c0 = col0 / cell, r1 = (row0 + w) / cell, c1 = (col0 + w) / cell;
        auto at = [&](std::int64_t r, std::int64_t c) { return sat[static_cast<std::size_t>(r * (ncc + 1) + c)]; };
        return at(r1, c1) - at(r0, c1) - at(r1, c0) + at(r0, c0);
    };
    const double pixels_per_window = double(w * scale) * double(w * scale);

    windows.reserve(spec.labeled_only ? 0 : static_cast<std::size_t>(nr * nc));
    for (std::int64_t i = 0; i < nr; ++i) {
        for (std::int64_t j = 0; j < nc; ++j) {
            const std::int64_t row0 = i * s, col0 = j * s;
            if (spec.labeled_only) {
                const std::uint64_t n = labeled_count(row0, col0);
                if (n == 0 || double(n) / pixels_per_window < spec.min_labeled_fraction) {
                    continue;
                }
            }
            Window win;
            win.location_key = location_key(tile.tile_id, col0, row0);
            win.col0 = col0;
            win.row0 = row0;
            win.size10 = w;
            win.extent.min_x = tile.origin_x + double(col0 * 10);
            win.extent.max_y = tile.origin_y - double(row0 * 10);
            win.extent.max_x = win.extent.min_x + spec.window_m;
            win.extent.min_y = win.extent.max_y - spec.window_m;
            windows.push_back(std::move(win));
        }
    }
    return windows;
}

Patch extract_patch(const ingest::BandGrid& band, const Window& window, Timestamp sensing_time) {
    const geo::PixelWindow w = window.at_resolution(band.resolution_m);
    if (w.col_begin < 0 || w.row_begin < 0 || w.col_end > band.cols || w.row_end > band.rows) {
        throw ValidationError("window " + window.location_key + " outside band " + band.band_id);
    }
    Patch p;
    p.location_key = window.location_key;
    p.band_id = band.band_id;
    p.sensing_time = sensing_time;
    p.resolution_m = band.resolution_m;
    p.rows = w.row_end - w.row_begin;
    p.cols = w.col_end - w.col_begin;
    const geo::GeoPoint corner = band.geotransform.pixel_to_geo({double(w.col_begin), double(w.row_begin)});
    p.geotransform = geo::GeoTransform::north_up(corner.x, corner.y, band.resolution_m, band.resolution_m);
    p.values = crop(band.values, band.cols, w);
    return p;
}

rasterizer::LabelProduct extract_label_patch(const rasterizer::LabelProduct& label, const Window& window) {
    const rasterizer::GridSpec& g = label.grid;
    const geo::PixelWindow w = window.at_label_scale(g.scale);
    if (w.col_begin < 0 || w.row_begin < 0 || w.col_end > g.cols || w.row_end > g.rows) {
        throw ValidationError("label grid does not cover window " + window.location_key);
    }
    rasterizer::LabelProduct out;
    out.grid = g;
    out.grid.rows = w.row_end - w.row_begin;
    out.grid.cols = w.col_end - w.col_begin;
    const geo::GeoPoint corner = g.geotransform.pixel_to_geo({double(w.col_begin), double(w.row_begin)});
    out.grid.geotransform = geo::GeoTransform::north_up(corner.x, corner.y, g.geotransform.pixel_width,
                                                        g.geotransform.pixel_height);
    out.background = label.background;
    out.year = label.year;
    out.class_grid = crop(label.class_grid, g.cols, w);
    out.parcel_grid = crop(label.parcel_grid, g.cols, w);
    out.partial_conflict_mask = crop(label.partial_conflict_mask, g.cols, w);
    out.full_conflict_mask = crop(label.full_conflict_mask, g.cols, w);
    if (label.value_grid) {
        out.value_grid = crop(*label.value_grid, g.cols, w);
    }
    return out;
}

std::filesystem::path date_directory(const std::filesystem::path& out, Timestamp sensing_time) {
    return out / "patches" / format_timestamp_compact(sensing_time);
}

TileReport tile_product(const ingest::ProductBundle& bundle, const std::vector<Window>& windows,
                        const WindowSpec& spec, const std::filesystem::path& out, const TileOptions& options) {
    spec.validate();
    const std::filesystem::path date_dir = date_directory(out, bundle.sensing_time);
    TileReport report;
    report.date_dir = date_dir.filename().string();

    if (const auto existing = read_json(date_dir / "product.json")) {
        const std::string other_id = existing->value("product_id", "");
        if (other_id != bundle.product_id) {
            std::optional<double> other_cloud;
            if (existing->contains("cloud_cover_pct") && (*existing)["cloud_cover_pct"].is_number()) {
                other_cloud = (*existing)["cloud_cover_pct"].get<double>();
            }
            if (preferred_product(other_cloud, other_id, bundle.cloud_cover_pct, bundle.product_id)) {
                log::info("date already tiled from a preferred product",
                          {{"product_id", bundle.product_id}, {"kept", other_id}});
                report.superseded = true;
                return report;
            }
            log::info("replacing patches of a less preferred product",
                      {{"product_id", bundle.product_id}, {"replaced", other_id}});
            std::filesystem::remove_all(date_dir);
        }
    }
    std::filesystem::create_directories(date_dir);
    nlohmann::json meta = {{"product_id", bundle.product_id},
                           {"tile_id", bundle.tile_id},
                           {"sensing_time", format_timestamp(bundle.sensing_time)},
                           {"complete", false}};
    meta["cloud_cover_pct"] = bundle.cloud_cover_pct ? nlohmann::json(*bundle.cloud_cover_pct) : nlohmann::json(nullptr);
    write_json_atomically(date_dir / "product.json", meta);

    const TileGrid tile = TileGrid::from_bundle(bundle);
    for (const ingest::BandRef& ref : bundle.band_refs) {
        const ingest::GridHeader h = ingest::read_grid_header(ref.path);
        if (!(h.crs == tile.crs) || h.geotransform.origin_x != tile.origin_x ||
            h.geotransform.origin_y != tile.origin_y || h.resolution_m != ref.resolution_m ||
            h.rows * ref.resolution_m < tile.rows * 10 - ref.resolution_m) {
            throw ValidationError("band " + ref.band_id + " of " + bundle.product_id + " is not aligned with the tile grid");
        }
        if (spec.window_m % ref.resolution_m != 0) {
            throw ValidationError("window_m must be divisible by " + std::to_string(ref.resolution_m));
        }
    }
    for (const Window& w : windows) {
        if (w.row0 + w.size10 > tile.rows || w.col0 + w.size10 > tile.cols || w.size10 * 10 != spec.window_m) {
            throw ValidationError("window " + w.location_key + " does not fit tile " + tile.tile_id);
        }
    }
    const auto groups = rows_of(windows);

    // pass 1: which windows hold data on the reference band
    const ingest::BandRef& ref = reference_band(bundle);
    std::vector<char> keep(windows.size(), 1);
    if (options.skip_empty) {
        const ingest::GridWindowReader reader(ref.path);
        const auto nodata = static_cast<std::uint16_t>(reader.header().nodata.value_or(0.0));
        for (const auto& [row0, group] : groups) {
            for_each_patch(reader, ref.resolution_m, windows, group, [&](std::size_t i, const auto& values) {
                keep[i] = std::any_of(values.begin(), values.end(), [&](std::uint16_t v) { return v != nodata; });
            });
        }
    }

    // pass 2: every band, in parallel
    std::atomic<std::size_t> present{0};
    parallel_for(bundle.band_refs.size(), options.jobs, [&](std::size_t b) {
        const ingest::BandRef& band = bundle.band_refs[b];
        const ingest::GridWindowReader reader(band.path);
        const ingest::GridHeader& h = reader.header();
        for (const auto& [row0, group] : groups) {
            std::vector<std::size_t> todo;
            for (std::size_t i : group) {
                if (!keep[i]) {
                    continue;
                }
                const auto path = date_dir / windows[i].location_key / (band.band_id + ".grid");
                if (std::filesystem::exists(ingest::sidecar_path(path)) && ingest::verify_grid(path)) {
                    if (&band == &ref) {
                        ++present;
                    }
                    continue;
                }
                todo.push_back(i);
            }
            if (todo.empty()) {
                continue;
            }
            for_each_patch(reader, band.resolution_m, windows, todo, [&](std::size_t i, const auto& values) {
                const Window& win = windows[i];
                const geo::PixelWindow pw = win.at_resolution(band.resolution_m);
                ingest::GridHeader ph;
                ph.band_id = band.band_id;
                ph.resolution_m = band.resolution_m;
                ph.rows = pw.row_end - pw.row_begin;
                ph.cols = pw.col_end - pw.col_begin;
                ph.dtype = ingest::DType::U16;
                ph.nodata = h.nodata;
                ph.crs = h.crs;
                const geo::GeoPoint corner = h.geotransform.pixel_to_geo({double(pw.col_begin), double(pw.row_begin)});
                ph.geotransform = geo::GeoTransform::north_up(corner.x, corner.y, band.resolution_m, band.resolution_m);
                ingest::write_grid_values<std::uint16_t>(date_dir / win.location_key / (band.band_id + ".grid"), ph,
                                                         values);
            });
        }
    });

    for (std::size_t i = 0; i < windows.size(); ++i) {
        report.windows_skipped_empty += !keep[i];
    }
    report.windows_already_present = present;
    report.windows_written = windows.size() - report.windows_skipped_empty - report.windows_already_present;
    meta["complete"] = true;
    write_json_atomically(date_dir / "product.json", meta);
    return report;
}

void tile_labels(const std::filesystem::path& label_dir, const std::vector<Window>& windows,
                 const std::filesystem::path& out, const TileOptions& options) {
    const rasterizer::LabelMeta meta = rasterizer::read_label_meta(label_dir);
    const ingest::GridWindowReader labels(label_dir / "labels.grid");
    const ingest::GridWindowReader parcels(label_dir / "parcels.grid");
    const ingest::GridWindowReader partial(label_dir / "mask_partial.grid");
    const ingest::GridWindowReader full(label_dir / "mask_full.grid");
    std::optional<ingest::GridWindowReader> values;
    if (meta.regression) {
        values.emplace(label_dir / "values.grid");
    }
    const ingest::GridHeader& h = labels.header();
    rasterizer::GridSpec grid;
    grid.rows = h.rows;
    grid.cols = h.cols;
    grid.crs = h.crs;
    grid.geotransform = h.geotransform;
    grid.scale = meta.scale;
    grid.validate();

    parallel_for(windows.size(), options.jobs, [&](std::size_t i) {
        const Window& win = windows[i];
        const auto dest = out / "labels" / win.location_key;
        if (rasterizer::verify_label_product(dest)) {
            return;
        }
        const geo::PixelWindow w = win.at_label_scale(meta.scale);
        if (w.col_end > grid.cols || w.row_end > grid.rows) {
            throw ValidationError("label grid does not cover window " + win.location_key);
        }
        const std::int64_t rows = w.row_end - w.row_begin, cols = w.col_end - w.col_begin;
        rasterizer::LabelProduct patch;
        patch.grid = grid;
        patch.grid.rows = rows;
        patch.grid.cols = cols;
        const geo::GeoPoint corner = h.geotransform.pixel_to_geo({double(w.col_begin), double(w.row_begin)});
        patch.grid.geotransform = geo::GeoTransform::north_up(corner.x, corner.y, h.geotransform.pixel_width,
                                                              h.geotransform.pixel_height);
        patch.background = meta.background;
        patch.year = meta.year;
        patch.class_grid = labels.read<std::uint32_t>(w.row_begin, w.col_begin, rows, cols);
        patch.parcel_grid = parcels.read<std::uint32_t>(w.row_begin, w.col_begin, rows, cols);
        patch.partial_conflict_mask = partial.read<std::uint8_t>(w.row_begin, w.col_begin, rows, cols);
        patch.full_conflict_mask = full.read<std::uint8_t>(w.row_begin, w.col_begin, rows, cols);
        if (values) {
            patch.value_grid = values->read<float>(w.row_begin, w.col_begin, rows, cols);
        }
        rasterizer::write_label_product(dest, patch);
    });
}

} // namespace satseries::tiler
