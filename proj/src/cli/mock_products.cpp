#include "satseries/cli/mock_products.hpp"

#include <cstring>
#include <fstream>

#include "satseries/core/error.hpp"
#include "satseries/geo/projection.hpp"
#include "satseries/ingest/archive.hpp"
#include "satseries/ingest/band.hpp"
#include "satseries/tiler/tiler.hpp"

namespace satseries::cli {

hub::MockProduct mock_product_from_directory(const std::filesystem::path& product_dir,
                                             const std::filesystem::path& scratch) {
    const auto manifest = ingest::find_manifest(product_dir);
    if (!manifest) {
        throw ValidationError(product_dir.string() + " has no manifest.json");
    }
    const ingest::ProductBundle bundle = ingest::parse_manifest(*manifest);
    const tiler::TileGrid tile = tiler::TileGrid::from_bundle(bundle);

    std::filesystem::create_directories(scratch);
    const auto zip = scratch / (bundle.product_id + ".zip");
    ingest::write_product_archive(zip, manifest->parent_path());
    std::ifstream in(zip, std::ios::binary);
    const std::string bytes((std::istreambuf_iterator<char>(in)), {});

    hub::MockProduct p;
    p.meta.product_id = bundle.product_id;
    p.meta.tile_id = bundle.tile_id;
    p.meta.sensing_time = bundle.sensing_time;
    p.meta.cloud_cover_pct = bundle.cloud_cover_pct.value_or(0.0);
    const double x0 = tile.origin_x, y1 = tile.origin_y;
    const double x1 = x0 + tile.cols * 10.0, y0 = y1 - tile.rows * 10.0;
    geo::GeoPolygon footprint{{{x0, y0}, {x1, y0}, {x1, y1}, {x0, y1}}, {}, tile.crs};
    p.meta.footprint.push_back(geo::project(footprint, geo::Crs::wgs84()));
    p.payload.resize(bytes.size());
    std::memcpy(p.payload.data(), bytes.data(), bytes.size());
    return p;
}

} // namespace satseries::cli
