#pragma once

#include <filesystem>

#include "satseries/hub/mock_hub.hpp"

namespace satseries::cli {

/// Packs an extracted product directory (with manifest.json) into the archive
/// a hub would serve. The footprint is the tile extent in WGS84. `scratch`
/// receives the archive file.
hub::MockProduct mock_product_from_directory(const std::filesystem::path& product_dir,
                                             const std::filesystem::path& scratch);

} // namespace satseries::cli
