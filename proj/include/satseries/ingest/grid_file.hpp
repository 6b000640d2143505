#pragma once

#include <cstddef>
#include <cstdint>
#include <cstring>
#include <filesystem>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include <nlohmann/json.hpp>

#include "satseries/core/error.hpp"
#include "satseries/geo/crs.hpp"
#include "satseries/geo/geotransform.hpp"

namespace satseries::ingest {

/// Sample types of the raw `.grid` payload. All are little-endian.
enum class DType { U8, U16, U32, F32 };

/// "u8", "u16le", "u32le", "f32le"
std::string dtype_name(DType t);
/// Throws ParseError "unsupported byte order" for big-endian names and
/// "unknown dtype" otherwise.
DType parse_dtype(const std::string& name);
std::size_t dtype_size(DType t);

template <class T> constexpr DType dtype_of();
template <> constexpr DType dtype_of<std::uint8_t>() { return DType::U8; }
template <> constexpr DType dtype_of<std::uint16_t>() { return DType::U16; }
template <> constexpr DType dtype_of<std::uint32_t>() { return DType::U32; }
template <> constexpr DType dtype_of<float>() { return DType::F32; }

/// Contents of the `<name>.grid.json` sidecar.
///
/// ```
/// {"band_id","resolution_m","rows","cols","dtype","nodata",
///  "crs":{"kind":"utm","zone":Z,"hemisphere":"N|S"},
///  "geotransform":[ox,pw,0,oy,0,-ph]}
/// ```
/// plus the optional `"frames"` (stacked grids) and `"md5"` (payload digest).
struct GridHeader {
    std::string band_id;
    double resolution_m = 0.0;
    std::int64_t rows = 0;
    std::int64_t cols = 0;
    DType dtype = DType::U16;
    std::optional<double> nodata;
    geo::Crs crs = geo::Crs::wgs84();
    geo::GeoTransform geotransform;
    std::optional<std::int64_t> frames;
    std::optional<std::string> md5;

    std::int64_t frame_count() const { return frames.value_or(1); }
    std::uint64_t payload_bytes() const;

    nlohmann::json to_json() const;
    /// `context` is prefixed to error messages (usually the sidecar path).
    static GridHeader from_json(const nlohmann::json& j, const std::string& context);
};

nlohmann::json crs_to_json(const geo::Crs& crs);
geo::Crs crs_from_json(const nlohmann::json& j, const std::string& context);

std::filesystem::path sidecar_path(const std::filesystem::path& payload);

GridHeader read_grid_header(const std::filesystem::path& payload);

/// Writes payload then sidecar (with the payload md5 filled in), each through a
/// temporary file renamed into place, so a present sidecar implies a complete
/// payload.
void write_grid(const std::filesystem::path& payload, GridHeader header,
                std::span<const std::byte> bytes);

/// Writes the sidecar for a payload that was filled in place (for example
/// block by block). Checks the payload length and records its md5.
void finalize_grid_file(const std::filesystem::path& payload, GridHeader header);

/// Reads and length-checks the payload ("payload length" error on mismatch).
std::vector<std::byte> read_grid_payload(const std::filesystem::path& payload, const GridHeader& header);

/// True when the sidecar parses, the payload has the declared length and,
/// if the sidecar carries an md5, the digest matches.
bool verify_grid(const std::filesystem::path& payload);

template <class T>
void write_grid_values(const std::filesystem::path& payload, GridHeader header, std::span<const T> values) {
    header.dtype = dtype_of<T>();
    write_grid(payload, std::move(header), std::as_bytes(values));
}

template <class T>
std::vector<T> read_grid_values(const std::filesystem::path& payload, GridHeader* header_out = nullptr);

/// Random-access reader for a rectangle of frame 0 of a large grid file.
class GridWindowReader {
public:
    explicit GridWindowReader(std::filesystem::path payload);

    const GridHeader& header() const { return header_; }

    /// Row-major `rows x cols` samples starting at (row0, col0). Throws when
    /// the window leaves the grid or the type does not match.
    template <class T>
    std::vector<T> read(std::int64_t row0, std::int64_t col0, std::int64_t rows, std::int64_t cols) const;

private:
    void read_bytes(std::int64_t row0, std::int64_t col0, std::int64_t rows, std::int64_t cols,
                    std::byte* out) const;

    std::filesystem::path payload_;
    GridHeader header_;
};

template <class T>
std::vector<T> GridWindowReader::read(std::int64_t row0, std::int64_t col0, std::int64_t rows,
                                      std::int64_t cols) const {
    std::vector<T> out(static_cast<std::size_t>(rows * cols));
    if (header_.dtype != dtype_of<T>()) {
        throw ValidationError("grid dtype mismatch for " + payload_.string());
    }
    read_bytes(row0, col0, rows, cols, reinterpret_cast<std::byte*>(out.data()));
    return out;
}

} // namespace satseries::ingest
