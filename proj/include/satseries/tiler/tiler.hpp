#pragma once

#include <cstdint>
#include <filesystem>
#include <functional>
#include <optional>
#include <string>
#include <vector>

#include "satseries/core/time.hpp"
#include "satseries/geo/coverage.hpp"
#include "satseries/geo/crs.hpp"
#include "satseries/geo/geometry.hpp"
#include "satseries/geo/geotransform.hpp"
#include "satseries/ingest/band.hpp"
#include "satseries/rasterizer/rasterize.hpp"

namespace satseries::tiler {

struct WindowSpec {
    int window_m = 480;
    int stride_m = 480;
    bool labeled_only = false;
    /// Extra filter for labeled_only: share of labeled label pixels per window.
    double min_labeled_fraction = 0.0;

    /// Both sizes positive and divisible by 60, so 10/20/60 m pixels align.
    void validate() const;
    /// Window side in pixels at a resolution (10, 20, 60 m).
    std::int64_t pixels(int resolution_m) const { return window_m / resolution_m; }
};

/// The 10 m pixel grid of one tile.
struct TileGrid {
    std::string tile_id;
    geo::Crs crs = geo::Crs::utm(1, geo::Hemisphere::North);
    double origin_x = 0.0;
    double origin_y = 0.0;
    std::int64_t rows = 0;
    std::int64_t cols = 0;

    /// From the 10 m reference band of a product (B02 or the first 10 m band).
    static TileGrid from_bundle(const ingest::ProductBundle& bundle);
    geo::GeoTransform geotransform(int resolution_m) const;
    bool operator==(const TileGrid&) const = default;
};

struct Window {
    std::string location_key;  // T<tile>_<col0>_<row0>, 10 m pixel units
    std::int64_t col0 = 0;
    std::int64_t row0 = 0;
    std::int64_t size10 = 0;  // side in 10 m pixels
    geo::Rect extent;

    /// Pixel rectangle on a grid of the given resolution sharing the tile origin.
    geo::PixelWindow at_resolution(int resolution_m) const;
    /// Same on a label grid with `scale` pixels per 10 m.
    geo::PixelWindow at_label_scale(int scale) const;
};

/// Same-day rule: lower cloud cover wins, then the smaller product id.
bool preferred_product(std::optional<double> cloud_a, const std::string& id_a, std::optional<double> cloud_b,
                       const std::string& id_b);

std::string location_key(const std::string& tile_id, std::int64_t col0, std::int64_t row0);

/// Reads rows [row0, row0 + rows) of the label parcel layer into `out`.
using LabelRowReader = std::function<void(std::int64_t row0, std::int64_t rows, std::vector<std::uint32_t>& out)>;

struct LabelSource {
    rasterizer::GridSpec grid;
    LabelRowReader read_parcel_rows;

    static LabelSource in_memory(const rasterizer::LabelProduct& label);
    /// Streams `parcels.grid` from a label product directory.
    static LabelSource directory(const std::filesystem::path& dir);
};

/// Windows that fit entirely inside the tile, row-major by (row0, col0).
/// With labeled_only, keeps windows holding at least one labeled pixel
/// (parcel id != 0) and at least min_labeled_fraction labeled pixels.
std::vector<Window> plan_windows(const TileGrid& tile, const WindowSpec& spec,
                                 const LabelSource* label = nullptr);

struct Patch {
    std::string location_key;
    std::string band_id;
    Timestamp sensing_time{};
    int resolution_m = 10;
    std::int64_t rows = 0;
    std::int64_t cols = 0;
    geo::GeoTransform geotransform;
    std::vector<std::uint16_t> values;
};

/// Pure crop of a loaded band. Throws ValidationError outside the band.
Patch extract_patch(const ingest::BandGrid& band, const Window& window, Timestamp sensing_time = {});

/// All label layers cropped to the window; side = size10 × scale.
rasterizer::LabelProduct extract_label_patch(const rasterizer::LabelProduct& label, const Window& window);

struct TileOptions {
    int jobs = 1;
    /// Skip a window for this date when its 10 m reference patch is all nodata.
    bool skip_empty = true;
};

struct TileReport {
    std::string date_dir;
    std::size_t windows_written = 0;
    std::size_t windows_skipped_empty = 0;
    std::size_t windows_already_present = 0;
    bool superseded = false;  // another product already owns this date directory
};

/// `<out>/patches/<compact sensing time>/`
std::filesystem::path date_directory(const std::filesystem::path& out, Timestamp sensing_time);

/// Writes `<out>/patches/<time>/<key>/<band>.grid` for every window and band of
/// one product, plus `<out>/patches/<time>/product.json`. Reads bands strip by
/// strip. Existing patches that verify are kept.
TileReport tile_product(const ingest::ProductBundle& bundle, const std::vector<Window>& windows,
                        const WindowSpec& spec, const std::filesystem::path& out, const TileOptions& options = {});

/// Writes `<out>/labels/<key>/<layer>.grid` and `label.json` for every window.
void tile_labels(const std::filesystem::path& label_dir, const std::vector<Window>& windows,
                 const std::filesystem::path& out, const TileOptions& options = {});

} // namespace satseries::tiler
