#pragma once

#include <cstdint>
#include <filesystem>
#include <functional>
#include <optional>
#include <span>
#include <vector>

#include "satseries/geo/coverage.hpp"
#include "satseries/geo/crs.hpp"
#include "satseries/geo/geotransform.hpp"
#include "satseries/rasterizer/parcel.hpp"

namespace satseries::rasterizer {

/// Minimum coverage fraction for a parcel to claim a pixel.
inline constexpr double kClaimThreshold = 1e-12;
/// Coverage fraction at or above which a claim counts as full.
inline constexpr double kFullThreshold = 1.0 - 1e-9;

/// Label grid geometry. `scale` is the super-resolution factor relative to the
/// 10 m base grid: pixel size is 10 m / scale.
struct GridSpec {
    std::int64_t rows = 0;
    std::int64_t cols = 0;
    geo::GeoTransform geotransform;
    geo::Crs crs = geo::Crs::utm(1, geo::Hemisphere::North);
    int scale = 1;

    /// Super-resolved grid covering the same extent as a 10 m base grid.
    static GridSpec from_base(const geo::GeoTransform& base, std::int64_t base_rows,
                              std::int64_t base_cols, const geo::Crs& crs, int scale);

    double pixel_size() const { return 10.0 / scale; }
    /// Throws ValidationError unless the pixel size is 10 m / scale and the CRS is UTM.
    void validate() const;
};

/// Rasterized ground truth. All layers are row-major rows x cols.
struct LabelProduct {
    GridSpec grid;
    std::uint32_t background = 0;
    std::optional<int> year;
    std::vector<std::uint32_t> class_grid;
    std::vector<std::uint32_t> parcel_grid;
    std::vector<std::uint8_t> partial_conflict_mask;
    std::vector<std::uint8_t> full_conflict_mask;
    /// Present when any record carries a real-valued ground truth; NaN where unclaimed.
    std::optional<std::vector<float>> value_grid;

    std::size_t index(std::int64_t row, std::int64_t col) const {
        return static_cast<std::size_t>(row * grid.cols + col);
    }
};

/// One rasterized block of a larger grid, handed to a block sink.
struct LabelBlock {
    geo::PixelWindow window;
    std::vector<std::uint32_t> class_grid;
    std::vector<std::uint32_t> parcel_grid;
    std::vector<std::uint8_t> partial_conflict_mask;
    std::vector<std::uint8_t> full_conflict_mask;
    std::optional<std::vector<float>> value_grid;
};

struct RasterizeOptions {
    int jobs = 1;
    std::int64_t block_size = 1024;
};

using BlockSink = std::function<void(const LabelBlock&)>;

/// Block-wise rasterization. Records are projected into the grid CRS and
/// processed in ascending parcel_id order; each pixel's claimants are the
/// parcels covering more than kClaimThreshold of it. The pixel takes class and
/// parcel of the largest claimant (lowest parcel_id on ties); the partial mask
/// marks pixels with two or more claimants and the full mask pixels with two or
/// more claimants at or above kFullThreshold.
///
/// Blocks run on `options.jobs` threads; `sink` is called once per block,
/// serialised. Throws ValidationError for duplicate parcel ids. Records that
/// miss the grid contribute nothing.
void rasterize_blocks(std::span<const ParcelRecord> records, const GridSpec& spec,
                      std::uint32_t background, const RasterizeOptions& options, const BlockSink& sink);

LabelProduct rasterize_parcels(std::span<const ParcelRecord> records, const GridSpec& spec,
                               std::uint32_t background, const RasterizeOptions& options = {});

/// Same as rasterize_parcels but streams blocks straight into the layer files
/// under `dir`, so the full grid never has to fit in memory.
void rasterize_parcels_to_directory(std::span<const ParcelRecord> records, const GridSpec& spec,
                                    std::uint32_t background, std::optional<int> year,
                                    const RasterizeOptions& options, const std::filesystem::path& dir);

struct ConflictRatio {
    double partial = 0.0;
    double full = 0.0;
};

/// Mask counts divided by the number of labeled pixels (parcel set or any
/// mask bit). Both zero when nothing is labeled.
ConflictRatio conflict_ratio(const LabelProduct& label);

/// Layer files written by write_label_product, in order.
inline constexpr const char* kLabelLayers[] = {"labels", "parcels", "mask_partial", "mask_full"};
inline constexpr const char* kValueLayer = "values";

/// `labels`/`parcels` as u32le, masks as u8, optional `values` as f32le, plus
/// `label.json` with background, scale and year.
void write_label_product(const std::filesystem::path& dir, const LabelProduct& label);
LabelProduct read_label_product(const std::filesystem::path& dir);

/// Contents of `label.json` next to the layers.
struct LabelMeta {
    std::uint32_t background = 0;
    int scale = 1;
    std::optional<int> year;
    bool regression = false;
};
LabelMeta read_label_meta(const std::filesystem::path& dir);

/// True when every layer file of a label product under `dir` verifies.
bool verify_label_product(const std::filesystem::path& dir);

} // namespace satseries::rasterizer
