#pragma once

#include <cstdint>
#include <filesystem>
#include <optional>
#include <string>
#include <vector>

namespace satseries::ingest {

struct ArchiveEntry {
    std::string name;
    std::uint16_t method = 0;  // 0 stored, 8 deflate
    std::uint32_t crc32 = 0;
    std::uint64_t compressed_size = 0;
    std::uint64_t size = 0;
    std::uint64_t local_header_offset = 0;
};

/// Packs every regular file under `dir` (sorted relative paths) into an
/// uncompressed ZIP with fixed timestamps, so equal inputs give equal bytes.
void write_product_archive(const std::filesystem::path& zip, const std::filesystem::path& dir);

std::vector<ArchiveEntry> list_archive(const std::filesystem::path& zip);

/// Extracts a ZIP (stored or deflate entries) into `dest`, checking CRCs.
/// Entries with absolute paths or `..` components are rejected. The
/// destination appears only once extraction has succeeded.
void extract_archive(const std::filesystem::path& zip, const std::filesystem::path& dest);

/// `dir/manifest.json`, or the single `dir/<sub>/manifest.json`.
std::optional<std::filesystem::path> find_manifest(const std::filesystem::path& dir);

} // namespace satseries::ingest
