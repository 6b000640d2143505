#include "satseries/ingest/grid_file.hpp"

#include <bit>
#include <fstream>

#include "satseries/core/digest.hpp"
#include "satseries/core/error.hpp"

namespace satseries::ingest {

static_assert(std::endian::native == std::endian::little, "grid payloads are little-endian");

namespace {

template <class T>
T require(const nlohmann::json& j, const char* field, const std::string& context) {
    if (!j.contains(field)) {
        throw ParseError(context + ": missing field: " + field);
    }
    try {
        return j.at(field).get<T>();
    } catch (const nlohmann::json::exception&) {
        throw ParseError(context + ": invalid field: " + field);
    }
}

void write_file_atomically(const std::filesystem::path& path, std::span<const std::byte> bytes) {
    std::filesystem::path tmp = path;
    tmp += ".tmp";
    {
        std::ofstream out(tmp, std::ios::binary | std::ios::trunc);
        if (!out) {
            throw Error("cannot write " + tmp.string());
        }
        out.write(reinterpret_cast<const char*>(bytes.data()), static_cast<std::streamsize>(bytes.size()));
        if (!out) {
            throw Error("write failed: " + tmp.string());
        }
    }
    std::filesystem::rename(tmp, path);
}

} // namespace

std::string dtype_name(DType t) {
    switch (t) {
    case DType::U8: return "u8";
    case DType::U16: return "u16le";
    case DType::U32: return "u32le";
    case DType::F32: return "f32le";
    }
    return "u16le";
}

DType parse_dtype(const std::string& name) {
    if (name == "u8") return DType::U8;
    if (name == "u16le") return DType::U16;
    if (name == "u32le") return DType::U32;
    if (name == "f32le") return DType::F32;
    if (name.size() > 2 && name.compare(name.size() - 2, 2, "be") == 0) {
        throw ParseError("unsupported byte order: " + name);
    }
    throw ParseError("unknown dtype: " + name);
}

std::size_t dtype_size(DType t) {
    switch (t) {
    case DType::U8: return 1;
    case DType::U16: return 2;
    case DType::U32: return 4;
    case DType::F32: return 4;
    }
    return 1;
}

std::uint64_t GridHeader::payload_bytes() const {
    return static_cast<std::uint64_t>(rows) * static_cast<std::uint64_t>(cols) *
           static_cast<std::uint64_t>(frame_count()) * dtype_size(dtype);
}

nlohmann::json crs_to_json(const geo::Crs& crs) {
    if (!crs.is_planar()) {
        return {{"kind", "wgs84"}};
    }
    return {{"kind", "utm"},
            {"zone", crs.zone()},
            {"hemisphere", crs.hemisphere() == geo::Hemisphere::North ? "N" : "S"}};
}

geo::Crs crs_from_json(const nlohmann::json& j, const std::string& context) {
    if (!j.is_object()) {
        throw ParseError(context + ": invalid field: crs");
    }
    const auto kind = require<std::string>(j, "kind", context + ": crs");
    if (kind == "wgs84") {
        return geo::Crs::wgs84();
    }
    if (kind != "utm") {
        throw ParseError(context + ": unsupported crs kind: " + kind);
    }
    const int zone = require<int>(j, "zone", context + ": crs");
    const auto hemi = require<std::string>(j, "hemisphere", context + ": crs");
    if (hemi != "N" && hemi != "S") {
        throw ParseError(context + ": invalid field: crs.hemisphere");
    }
    try {
        return geo::Crs::utm(zone, hemi == "N" ? geo::Hemisphere::North : geo::Hemisphere::South);
    } catch (const ValidationError& e) {
        throw ParseError(context + ": " + e.what());
    }
}

nlohmann::json GridHeader::to_json() const {
    nlohmann::json j;
    j["band_id"] = band_id;
    j["resolution_m"] = resolution_m;
    j["rows"] = rows;
    j["cols"] = cols;
    j["dtype"] = dtype_name(dtype);
    j["nodata"] = nodata ? nlohmann::json(*nodata) : nlohmann::json(nullptr);
    j["crs"] = crs_to_json(crs);
    j["geotransform"] = geotransform.coefficients();
    if (frames) {
        j["frames"] = *frames;
    }
    if (md5) {
        j["md5"] = *md5;
    }
    return j;
}

GridHeader GridHeader::from_json(const nlohmann::json& j, const std::string& context) {
    if (!j.is_object()) {
        throw ParseError(context + ": sidecar is not a JSON object");
    }
    GridHeader h;
    h.band_id = require<std::string>(j, "band_id", context);
    h.resolution_m = require<double>(j, "resolution_m", context);
    h.rows = require<std::int64_t>(j, "rows", context);
    h.cols = require<std::int64_t>(j, "cols", context);
    h.dtype = parse_dtype(require<std::string>(j, "dtype", context));
    if (j.contains("nodata") && !j.at("nodata").is_null()) {
        h.nodata = require<double>(j, "nodata", context);
    }
    if (!j.contains("crs")) {
        throw ParseError(context + ": missing field: crs");
    }
    h.crs = crs_from_json(j.at("crs"), context);
    const auto coeffs = require<std::array<double, 6>>(j, "geotransform", context);
    try {
        h.geotransform = geo::GeoTransform::from_coefficients(coeffs);
    } catch (const ValidationError& e) {
        throw ParseError(context + ": " + e.what());
    }
    if (j.contains("frames")) {
        h.frames = require<std::int64_t>(j, "frames", context);
    }
    if (j.contains("md5")) {
        h.md5 = require<std::string>(j, "md5", context);
    }
    if (h.rows < 0 || h.cols < 0 || h.frame_count() < 0) {
        throw ParseError(context + ": negative grid dimensions");
    }
    return h;
}

std::filesystem::path sidecar_path(const std::filesystem::path& payload) {
    std::filesystem::path p = payload;
    p += ".json";
    return p;
}

GridHeader read_grid_header(const std::filesystem::path& payload) {
    const auto sidecar = sidecar_path(payload);
    std::ifstream in(sidecar);
    if (!in) {
        throw ParseError("missing sidecar: " + sidecar.string());
    }
    nlohmann::json j;
    try {
        in >> j;
    } catch (const nlohmann::json::parse_error& e) {
        throw ParseError(sidecar.string() + ": " + e.what());
    }
    return GridHeader::from_json(j, sidecar.string());
}

void write_grid(const std::filesystem::path& payload, GridHeader header, std::span<const std::byte> bytes) {
    if (bytes.size() != header.payload_bytes()) {
        throw ValidationError("grid payload length " + std::to_string(bytes.size()) +
                              " does not match header (" + std::to_string(header.payload_bytes()) + ")");
    }
    if (payload.has_parent_path()) {
        std::filesystem::create_directories(payload.parent_path());
    }
    header.md5 = md5_hex(bytes);
    write_file_atomically(payload, bytes);
    const std::string text = header.to_json().dump() + "\n";
    write_file_atomically(sidecar_path(payload), std::as_bytes(std::span(text.data(), text.size())));
}

void finalize_grid_file(const std::filesystem::path& payload, GridHeader header) {
    std::error_code ec;
    const auto size = std::filesystem::file_size(payload, ec);
    if (ec || size != header.payload_bytes()) {
        throw ValidationError(payload.string() + ": payload length does not match header");
    }
    header.md5 = md5_file(payload);
    const std::string text = header.to_json().dump() + "\n";
    write_file_atomically(sidecar_path(payload), std::as_bytes(std::span(text.data(), text.size())));
}

std::vector<std::byte> read_grid_payload(const std::filesystem::path& payload, const GridHeader& header) {
    std::error_code ec;
    const auto size = std::filesystem::file_size(payload, ec);
    if (ec) {
        throw ParseError("missing payload: " + payload.string());
    }
    if (size != header.payload_bytes()) {
        throw ParseError(payload.string() + ": payload length " + std::to_string(size) + " != expected " +
                         std::to_string(header.payload_bytes()));
    }
    std::vector<std::byte> bytes(size);
    std::ifstream in(payload, std::ios::binary);
    in.read(reinterpret_cast<char*>(bytes.data()), static_cast<std::streamsize>(size));
    if (!in) {
        throw ParseError(payload.string() + ": short read");
    }
    return bytes;
}

bool verify_grid(const std::filesystem::path& payload) {
    try {
        const GridHeader h = read_grid_header(payload);
        std::error_code ec;
        const auto size = std::filesystem::file_size(payload, ec);
        if (ec || size != h.payload_bytes()) {
            return false;
        }
        return !h.md5 || md5_file(payload) == *h.md5;
    } catch (const Error&) {
        return false;
    }
}

template <class T>
std::vector<T> read_grid_values(const std::filesystem::path& payload, GridHeader* header_out) {
    GridHeader h = read_grid_header(payload);
    if (h.dtype != dtype_of<T>()) {
        throw ParseError(payload.string() + ": expected dtype " + dtype_name(dtype_of<T>()) + ", found " +
                         dtype_name(h.dtype));
    }
    const auto bytes = read_grid_payload(payload, h);
    std::vector<T> values(bytes.size() / sizeof(T));
    std::memcpy(values.data(), bytes.data(), bytes.size());
    if (header_out) {
        *header_out = std::move(h);
    }
    return values;
}

template std::vector<std::uint8_t> read_grid_values<std::uint8_t>(const std::filesystem::path&, GridHeader*);
template std::vector<std::uint16_t> read_grid_values<std::uint16_t>(const std::filesystem::path&, GridHeader*);
template std::vector<std::uint32_t> read_grid_values<std::uint32_t>(const std::filesystem::path&, GridHeader*);
template std::vector<float> read_grid_values<float>(const std::filesystem::path&, GridHeader*);

GridWindowReader::GridWindowReader(std::filesystem::path payload)
    : payload_(std::move(payload)), header_(read_grid_header(payload_)) {
    std::error_code ec;
    const auto size = std::filesystem::file_size(payload_, ec);
    if (ec || size != header_.payload_bytes()) {
        throw ParseError(payload_.string() + ": payload length does not match sidecar");
    }
}

void GridWindowReader::read_bytes(std::int64_t row0, std::int64_t col0, std::int64_t rows,
                                  std::int64_t cols, std::byte* out) const {
    if (row0 < 0 || col0 < 0 || rows < 0 || cols < 0 || row0 + rows > header_.rows ||
        col0 + cols > header_.cols) {
        throw ValidationError(payload_.string() + ": window outside grid");
    }
    std::ifstream in(payload_, std::ios::binary);
    if (!in) {
        throw Error("cannot open " + payload_.string());
    }
    const auto elem = static_cast<std::int64_t>(dtype_size(header_.dtype));
    for (std::int64_t r = 0; r < rows; ++r) {
        in.seekg((row0 + r) * header_.cols * elem + col0 * elem);
        in.read(reinterpret_cast<char*>(out + r * cols * elem), cols * elem);
    }
    if (!in) {
        throw Error("short read from " + payload_.string());
    }
}

} // namespace satseries::ingest
