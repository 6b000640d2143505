#pragma once

#include <cstdint>
#include <filesystem>
#include <map>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include "satseries/core/time.hpp"
#include "satseries/ingest/grid_file.hpp"

namespace satseries::assembler {

/// One complete date directory of the patch store (`patches/<date>/product.json`).
struct DateEntry {
    std::filesystem::path dir;
    std::string product_id;
    Timestamp sensing_time{};
    std::optional<double> cloud_cover_pct;
};

/// Complete date directories, ordered by sensing time then product id.
/// Incomplete ones (interrupted tiling) are skipped with a warning.
std::vector<DateEntry> scan_patch_store(const std::filesystem::path& store);

/// Lowest cloud cover, then the lexicographically smallest product id.
const DateEntry& dedupe_same_day(std::span<const DateEntry> candidates);

enum class Split { Train, Val, Test };
std::string to_string(Split s);
Split parse_split(const std::string& text);

struct SplitRatios {
    double train = 0.8;
    double val = 0.1;
    double test = 0.1;

    /// Non-negative and summing to 1 (within 1e-9).
    void validate() const;
};

/// Bucket from md5(seed ":" key); depends on nothing else.
Split split_for(const std::string& location_key, const SplitRatios& ratios, std::uint64_t seed);

struct IndexRow {
    std::string location_key;
    std::int64_t T = 0;
    bool labeled = false;
    std::string path;  // relative to the dataset root
    Split split = Split::Train;

    bool operator==(const IndexRow&) const = default;
};

struct DatasetIndex {
    std::vector<IndexRow> rows;  // sorted by location_key
};

void split_assign(DatasetIndex& index, const SplitRatios& ratios, std::uint64_t seed);

/// `index.csv`: header `location_key,T,labeled,path,split`, labeled as 0/1.
void write_index_csv(const std::filesystem::path& path, const DatasetIndex& index);
DatasetIndex read_index_csv(const std::filesystem::path& path);

struct AssembleOptions {
    std::int64_t min_T = 1;
    int jobs = 1;
    SplitRatios ratios;
    std::uint64_t seed = 0;
};

/// Groups `store/patches/*/<key>/` by key, keeps one product per UTC day,
/// sorts by time and writes `out/samples/<key>/` plus `out/index.csv`.
/// Label patches are taken from `labels/<key>/` when `labels` is given.
/// Samples already on disk with identical meta and verified stacks are kept.
DatasetIndex assemble(const std::filesystem::path& store, const std::optional<std::filesystem::path>& labels,
                      const std::filesystem::path& out, const AssembleOptions& options = {});

struct BandStackInfo {
    std::string band_id;
    int resolution_m = 10;
    std::int64_t rows = 0;
    std::int64_t cols = 0;
};

/// `meta.json` of a sample.
struct SampleMeta {
    std::string location_key;
    std::vector<Timestamp> timestamps;
    std::vector<std::string> product_ids;
    std::vector<BandStackInfo> bands;  // canonical order
    bool labeled = false;
    /// Digest of the attached label layers, so relabelling invalidates a sample.
    std::optional<std::string> label_digest;

    std::int64_t T() const { return static_cast<std::int64_t>(timestamps.size()); }
    nlohmann::json to_json() const;
    static SampleMeta from_json(const nlohmann::json& j, const std::string& context);
};

struct BandStack {
    ingest::GridHeader header;  // frames == T
    std::vector<std::uint16_t> values;  // T x rows x cols

    std::span<const std::uint16_t> frame(std::int64_t t) const {
        const auto n = static_cast<std::size_t>(header.rows * header.cols);
        return std::span<const std::uint16_t>(values).subspan(static_cast<std::size_t>(t) * n, n);
    }
};

struct TimeseriesSample {
    SampleMeta meta;
    std::map<std::string, BandStack> bands;
};

SampleMeta read_sample_meta(const std::filesystem::path& sample_dir);
/// md5 over the layer names and sidecar digests of a label product directory.
std::string label_digest(const std::filesystem::path& label_dir);

/// Loads a whole sample and checks the invariants (shared T, ascending times).
TimeseriesSample read_sample(const std::filesystem::path& sample_dir);
/// meta.json parses, every stack verifies and has T frames, labels verify.
bool verify_sample(const std::filesystem::path& sample_dir);

} // namespace satseries::assembler
