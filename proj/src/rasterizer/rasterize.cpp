#include "satseries/rasterizer/rasterize.hpp"

#include <algorithm>
#include <atomic>
#include <cmath>
#include <fstream>
#include <limits>
#include <mutex>
#include <set>
#include <thread>

#include <nlohmann/json.hpp>

#include "satseries/core/error.hpp"
#include "satseries/core/log.hpp"
#include "satseries/geo/projection.hpp"
#include "satseries/ingest/grid_file.hpp"

namespace satseries::rasterizer {
namespace {

struct PreparedParcel {
    std::uint32_t parcel_id;
    GroundTruth ground_truth;
    geo::PixelSpacePolygon shape;
    geo::PixelWindow window;  // clamped to the grid
};

geo::PixelWindow intersect(const geo::PixelWindow& a, const geo::PixelWindow& b) {
    return {std::max(a.col_begin, b.col_begin), std::max(a.row_begin, b.row_begin),
            std::min(a.col_end, b.col_end), std::min(a.row_end, b.row_end)};
}

std::vector<PreparedParcel> prepare(std::span<const ParcelRecord> records, const GridSpec& spec) {
    std::vector<const ParcelRecord*> sorted;
    sorted.reserve(records.size());
    for (const ParcelRecord& r : records) {
        sorted.push_back(&r);
    }
    std::sort(sorted.begin(), sorted.end(),
              [](const ParcelRecord* a, const ParcelRecord* b) { return a->parcel_id < b->parcel_id; });
    for (std::size_t i = 1; i < sorted.size(); ++i) {
        if (sorted[i]->parcel_id == sorted[i - 1]->parcel_id) {
            throw ValidationError("duplicate parcel_id " + std::to_string(sorted[i]->parcel_id));
        }
    }
    const geo::PixelWindow grid{0, 0, spec.cols, spec.rows};
    std::vector<PreparedParcel> out;
    out.reserve(sorted.size());
    for (const ParcelRecord* r : sorted) {
        if (r->parcel_id == 0) {
            throw ValidationError("parcel_id 0 is reserved for background");
        }
        const geo::GeoPolygon projected = geo::project(r->geometry, spec.crs);
        PreparedParcel p{r->parcel_id, r->ground_truth, geo::to_pixel_space(projected, spec.geotransform), {}};
        p.window = intersect(p.shape.bounds, grid);
        if (p.window.empty()) {
            log::debug("parcel outside grid", {{"parcel_id", std::to_string(r->parcel_id)}});
            continue;
        }
        out.push_back(std::move(p));
    }
    return out;
}

bool has_real_values(std::span<const ParcelRecord> records) {
    return std::any_of(records.begin(), records.end(),
                       [](const ParcelRecord& r) { return std::holds_alternative<double>(r.ground_truth); });
}

LabelBlock rasterize_block(const geo::PixelWindow& window, std::span<const PreparedParcel> parcels,
                           std::span<const std::size_t> members, std::uint32_t background, bool with_values) {
    const std::int64_t width = window.col_end - window.col_begin;
    const std::int64_t height = window.row_end - window.row_begin;
    const auto n = static_cast<std::size_t>(width * height);

    std::vector<double> best_fraction(n, 0.0);
    std::vector<std::int32_t> best(n, -1);
    std::vector<std::uint16_t> claims(n, 0);
    std::vector<std::uint16_t> full_claims(n, 0);
    std::vector<double> row_fraction;

    for (std::size_t m : members) {
        const PreparedParcel& p = parcels[m];
        const geo::PixelWindow w = intersect(p.window, window);
        if (w.empty()) {
            continue;
        }
        row_fraction.resize(static_cast<std::size_t>(w.col_end - w.col_begin));
        for (std::int64_t row = w.row_begin; row < w.row_end; ++row) {
            geo::row_coverage(p.shape, row, w.col_begin, row_fraction);
            const std::size_t base =
                static_cast<std::size_t>((row - window.row_begin) * width + (w.col_begin - window.col_begin));
            for (std::size_t i = 0; i < row_fraction.size(); ++i) {
                const double f = row_fraction[i];
                if (f <= kClaimThreshold) {
                    continue;
                }
                const std::size_t k = base + i;
                ++claims[k];
                if (f >= kFullThreshold) {
                    ++full_claims[k];
                }
                // members arrive in ascending parcel_id, so ties keep the lower id
                if (f > best_fraction[k]) {
                    best_fraction[k] = f;
                    best[k] = static_cast<std::int32_t>(m);
                }
            }
        }
    }

    LabelBlock block;
    block.window = window;
    block.class_grid.assign(n, background);
    block.parcel_grid.assign(n, 0);
    block.partial_conflict_mask.assign(n, 0);
    block.full_conflict_mask.assign(n, 0);
    if (with_values) {
        block.value_grid.emplace(n, std::numeric_limits<float>::quiet_NaN());
    }
    for (std::size_t k = 0; k < n; ++k) {
        if (best[k] >= 0) {
            const PreparedParcel& p = parcels[static_cast<std::size_t>(best[k])];
            block.parcel_grid[k] = p.parcel_id;
            if (const auto* cls = std::get_if<std::uint32_t>(&p.ground_truth)) {
                block.class_grid[k] = *cls;
            } else if (with_values) {
                (*block.value_grid)[k] = static_cast<float>(std::get<double>(p.ground_truth));
            }
        }
        block.partial_conflict_mask[k] = claims[k] >= 2;
        block.full_conflict_mask[k] = full_claims[k] >= 2;
    }
    return block;
}

ingest::GridHeader layer_header(const GridSpec& spec, const std::string& name, ingest::DType dtype,
                                std::optional<double> nodata) {
    ingest::GridHeader h;
    h.band_id = name;
    h.resolution_m = spec.pixel_size();
    h.rows = spec.rows;
    h.cols = spec.cols;
    h.dtype = dtype;
    h.nodata = nodata;
    h.crs = spec.crs;
    h.geotransform = spec.geotransform;
    return h;
}

void write_label_meta(const std::filesystem::path& dir, std::uint32_t background, int scale,
                      std::optional<int> year, bool regression) {
    nlohmann::json j = {{"background", background}, {"scale", scale}, {"regression", regression}};
    j["year"] = year ? nlohmann::json(*year) : nlohmann::json(nullptr);
    std::ofstream out(dir / "label.json");
    out << j.dump() << "\n";
}

} // namespace

GridSpec GridSpec::from_base(const geo::GeoTransform& base, std::int64_t base_rows, std::int64_t base_cols,
                             const geo::Crs& crs, int scale) {
    if (scale < 1) {
        throw ValidationError("label scale must be a positive integer");
    }
    GridSpec spec;
    spec.rows = base_rows * scale;
    spec.cols = base_cols * scale;
    spec.crs = crs;
    spec.scale = scale;
    spec.geotransform = geo::GeoTransform::north_up(base.origin_x, base.origin_y, base.pixel_width / scale,
                                                    base.pixel_height / scale);
    spec.validate();
    return spec;
}

void GridSpec::validate() const {
    if (scale < 1) {
        throw ValidationError("label scale must be a positive integer");
    }
    if (!crs.is_planar()) {
        throw ValidationError("label grid CRS must be UTM");
    }
    if (rows < 0 || cols < 0) {
        throw ValidationError("label grid dimensions must be non-negative");
    }
    const double expected = 10.0 / scale;
    if (std::abs(geotransform.pixel_width - expected) > 1e-9 ||
        std::abs(geotransform.pixel_height - expected) > 1e-9) {
        throw ValidationError("label grid pixel size must be 10 m / scale");
    }
}

void rasterize_blocks(std::span<const ParcelRecord> records, const GridSpec& spec, std::uint32_t background,
                      const RasterizeOptions& options, const BlockSink& sink) {
    spec.validate();
    const std::vector<PreparedParcel> parcels = prepare(records, spec);
    const bool with_values = has_real_values(records);
    const std::int64_t bs = std::max<std::int64_t>(options.block_size, 1);
    const std::int64_t block_rows = (spec.rows + bs - 1) / bs;
    const std::int64_t block_cols = (spec.cols + bs - 1) / bs;
    const auto block_count = static_cast<std::size_t>(block_rows * block_cols);

    std::vector<std::vector<std::size_t>> buckets(block_count);
    for (std::size_t i = 0; i < parcels.size(); ++i) {
        const geo::PixelWindow& w = parcels[i].window;
        for (std::int64_t br = w.row_begin / bs; br <= (w.row_end - 1) / bs; ++br) {
            for (std::int64_t bc = w.col_begin / bs; bc <= (w.col_end - 1) / bs; ++bc) {
                buckets[static_cast<std::size_t>(br * block_cols + bc)].push_back(i);
            }
        }
    }

    std::mutex sink_mutex;
    std::atomic<std::size_t> next{0};
    std::exception_ptr failure;
    auto worker = [&] {
        for (std::size_t b = next++; b < block_count; b = next++) {
            try {
                const auto br = static_cast<std::int64_t>(b) / block_cols;
                const auto bc = static_cast<std::int64_t>(b) % block_cols;
                const geo::PixelWindow window{bc * bs, br * bs, std::min(spec.cols, (bc + 1) * bs),
                                              std::min(spec.rows, (br + 1) * bs)};
                LabelBlock block = rasterize_block(window, parcels, buckets[b], background, with_values);
                std::lock_guard lock(sink_mutex);
                if (!failure) {
                    sink(block);
                }
            } catch (...) {
                std::lock_guard lock(sink_mutex);
                if (!failure) {
                    failure = std::current_exception();
                }
                next = block_count;
            }
        }
    };
    const int threads = std::clamp(options.jobs, 1, static_cast<int>(std::max<std::size_t>(block_count, 1)));
    std::vector<std::thread> pool;
    for (int t = 1; t < threads; ++t) {
        pool.emplace_back(worker);
    }
    worker();
    for (auto& t : pool) {
        t.join();
    }
    if (failure) {
        std::rethrow_exception(failure);
    }
}

LabelProduct rasterize_parcels(std::span<const ParcelRecord> records, const GridSpec& spec,
                               std::uint32_t background, const RasterizeOptions& options) {
    LabelProduct label;
    label.grid = spec;
    label.background = background;
    const auto n = static_cast<std::size_t>(spec.rows * spec.cols);
    label.class_grid.assign(n, background);
    label.parcel_grid.assign(n, 0);
    label.partial_conflict_mask.assign(n, 0);
    label.full_conflict_mask.assign(n, 0);
    if (has_real_values(records)) {
        label.value_grid.emplace(n, std::numeric_limits<float>::quiet_NaN());
    }
    rasterize_blocks(records, spec, background, options, [&](const LabelBlock& block) {
        const std::int64_t width = block.window.col_end - block.window.col_begin;
        for (std::int64_t r = block.window.row_begin; r < block.window.row_end; ++r) {
            const auto src = static_cast<std::size_t>((r - block.window.row_begin) * width);
            const std::size_t dst = label.index(r, block.window.col_begin);
            const auto w = static_cast<std::size_t>(width);
            std::copy_n(block.class_grid.begin() + src, w, label.class_grid.begin() + dst);
            std::copy_n(block.parcel_grid.begin() + src, w, label.parcel_grid.begin() + dst);
            std::copy_n(block.partial_conflict_mask.begin() + src, w, label.partial_conflict_mask.begin() + dst);
            std::copy_n(block.full_conflict_mask.begin() + src, w, label.full_conflict_mask.begin() + dst);
            if (block.value_grid) {
                std::copy_n(block.value_grid->begin() + src, w, label.value_grid->begin() + dst);
            }
        }
    });
    return label;
}

void rasterize_parcels_to_directory(std::span<const ParcelRecord> records, const GridSpec& spec,
                                    std::uint32_t background, std::optional<int> year,
                                    const RasterizeOptions& options, const std::filesystem::path& dir) {
    spec.validate();
    std::filesystem::create_directories(dir);
    const bool with_values = has_real_values(records);

    struct LayerFile {
        std::string name;
        ingest::GridHeader header;
        std::filesystem::path path;
        std::fstream stream;
    };
    std::vector<LayerFile> layers;
    layers.push_back({"labels", layer_header(spec, "labels", ingest::DType::U32, background), {}, {}});
    layers.push_back({"parcels", layer_header(spec, "parcels", ingest::DType::U32, 0.0), {}, {}});
    layers.push_back({"mask_partial", layer_header(spec, "mask_partial", ingest::DType::U8, std::nullopt), {}, {}});
    layers.push_back({"mask_full", layer_header(spec, "mask_full", ingest::DType::U8, std::nullopt), {}, {}});
    if (with_values) {
        layers.push_back({kValueLayer, layer_header(spec, kValueLayer, ingest::DType::F32, std::nullopt), {}, {}});
    }
    for (LayerFile& layer : layers) {
        layer.path = dir / (layer.name + ".grid");
        std::filesystem::remove(ingest::sidecar_path(layer.path));
        { std::ofstream create(layer.path, std::ios::binary | std::ios::trunc); }
        std::filesystem::resize_file(layer.path, layer.header.payload_bytes());
        layer.stream.open(layer.path, std::ios::in | std::ios::out | std::ios::binary);
        if (!layer.stream) {
            throw Error("cannot open " + layer.path.string());
        }
    }

    auto write_rows = [&](LayerFile& layer, const geo::PixelWindow& w, const void* data, std::size_t elem) {
        const std::int64_t width = w.col_end - w.col_begin;
        const auto* bytes = static_cast<const char*>(data);
        for (std::int64_t r = w.row_begin; r < w.row_end; ++r) {
            layer.stream.seekp(static_cast<std::streamoff>((r * spec.cols + w.col_begin) * std::int64_t(elem)));
            layer.stream.write(bytes + (r - w.row_begin) * width * std::int64_t(elem),
                               static_cast<std::streamsize>(width * std::int64_t(elem)));
        }
    };
    rasterize_blocks(records, spec, background, options, [&](const LabelBlock& block) {
        write_rows(layers[0], block.window, block.class_grid.data(), 4);
        write_rows(layers[1], block.window, block.parcel_grid.data(), 4);
        write_rows(layers[2], block.window, block.partial_conflict_mask.data(), 1);
        write_rows(layers[3], block.window, block.full_conflict_mask.data(), 1);
        if (block.value_grid) {
            write_rows(layers[4], block.window, block.value_grid->data(), 4);
        }
    });
    for (LayerFile& layer : layers) {
        layer.stream.close();
        if (layer.stream.fail()) {
            throw Error("write failed: " + layer.path.string());
        }
        ingest::finalize_grid_file(layer.path, layer.header);
    }
    write_label_meta(dir, background, spec.scale, year, with_values);
}

ConflictRatio conflict_ratio(const LabelProduct& label) {
    std::size_t labeled = 0, partial = 0, full = 0;
    for (std::size_t k = 0; k < label.parcel_grid.size(); ++k) {
        const bool p = label.partial_conflict_mask[k] != 0;
        const bool f = label.full_conflict_mask[k] != 0;
        labeled += label.parcel_grid[k] != 0 || p || f;
        partial += p;
        full += f;
    }
    if (labeled == 0) {
        return {};
    }
    return {double(partial) / double(labeled), double(full) / double(labeled)};
}

void write_label_product(const std::filesystem::path& dir, const LabelProduct& label) {
    std::filesystem::create_directories(dir);
    const GridSpec& s = label.grid;
    ingest::write_grid_values<std::uint32_t>(dir / "labels.grid",
                                             layer_header(s, "labels", ingest::DType::U32, label.background),
                                             label.class_grid);
    ingest::write_grid_values<std::uint32_t>(dir / "parcels.grid",
                                             layer_header(s, "parcels", ingest::DType::U32, 0.0), label.parcel_grid);
    ingest::write_grid_values<std::uint8_t>(dir / "mask_partial.grid",
                                            layer_header(s, "mask_partial", ingest::DType::U8, std::nullopt),
                                            label.partial_conflict_mask);
    ingest::write_grid_values<std::uint8_t>(dir / "mask_full.grid",
                                            layer_header(s, "mask_full", ingest::DType::U8, std::nullopt),
                                            label.full_conflict_mask);
    if (label.value_grid) {
        ingest::write_grid_values<float>(dir / "values.grid",
                                         layer_header(s, kValueLayer, ingest::DType::F32, std::nullopt),
                                         *label.value_grid);
    }
    write_label_meta(dir, label.background, s.scale, label.year, label.value_grid.has_value());
}

LabelMeta read_label_meta(const std::filesystem::path& dir) {
    std::ifstream in(dir / "label.json");
    if (!in) {
        throw ParseError("missing " + (dir / "label.json").string());
    }
    try {
        nlohmann::json j;
        in >> j;
        LabelMeta meta;
        meta.background = j.value("background", 0u);
        meta.scale = j.value("scale", 1);
        if (j.contains("year") && !j["year"].is_null()) {
            meta.year = j["year"].get<int>();
        }
        meta.regression = j.value("regression", false);
        return meta;
    } catch (const nlohmann::json::exception& e) {
        throw ParseError((dir / "label.json").string() + ": " + e.what());
    }
}

LabelProduct read_label_product(const std::filesystem::path& dir) {
    const LabelMeta meta = read_label_meta(dir);
    LabelProduct label;
    ingest::GridHeader h;
    label.class_grid = ingest::read_grid_values<std::uint32_t>(dir / "labels.grid", &h);
    label.grid.rows = h.rows;
    label.grid.cols = h.cols;
    label.grid.crs = h.crs;
    label.grid.geotransform = h.geotransform;
    label.grid.scale = meta.scale;
    label.grid.validate();
    label.background = meta.background;
    label.year = meta.year;
    auto check_shape = [&](const ingest::GridHeader& other, const char* name) {
        if (other.rows != h.rows || other.cols != h.cols || !(other.geotransform == h.geotransform)) {
            throw ParseError((dir / name).string() + ": layer shape differs from labels");
        }
    };
    ingest::GridHeader other;
    label.parcel_grid = ingest::read_grid_values<std::uint32_t>(dir / "parcels.grid", &other);
    check_shape(other, "parcels.grid");
    label.partial_conflict_mask = ingest::read_grid_values<std::uint8_t>(dir / "mask_partial.grid", &other);
    check_shape(other, "mask_partial.grid");
    label.full_conflict_mask = ingest::read_grid_values<std::uint8_t>(dir / "mask_full.grid", &other);
    check_shape(other, "mask_full.grid");
    if (meta.regression) {
        label.value_grid = ingest::read_grid_values<float>(dir / "values.grid", &other);
        check_shape(other, "values.grid");
    }
    return label;
}

bool verify_label_product(const std::filesystem::path& dir) {
    if (!std::filesystem::exists(dir / "label.json")) {
        return false;
    }
    for (const char* layer : kLabelLayers) {
        if (!ingest::verify_grid(dir / (std::string(layer) + ".grid"))) {
            return false;
        }
    }
    return true;
}

} // namespace satseries::rasterizer
