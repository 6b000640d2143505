#include "satseries/ingest/band.hpp"

#include <algorithm>
#include <atomic>
#include <fstream>
#include <set>
#include <thread>

#include <nlohmann/json.hpp>

#include "satseries/core/error.hpp"
#include "satseries/ingest/grid_file.hpp"

namespace satseries::ingest {
namespace {

const std::map<std::string, int>& canonical_table() {
    static const std::map<std::string, int> table = {
        {"B02", 10}, {"B03", 10}, {"B04", 10}, {"B08", 10}, {"B05", 20}, {"B06", 20}, {"B07", 20},
        {"B8A", 20}, {"B11", 20}, {"B12", 20}, {"B01", 60}, {"B09", 60}, {"B10", 60},
    };
    return table;
}

template <class T>
T field(const nlohmann::json& j, const char* name, const std::string& context) {
    if (!j.contains(name)) {
        throw ParseError(context + ": missing field: " + name);
    }
    try {
        return j.at(name).get<T>();
    } catch (const nlohmann::json::exception&) {
        throw ParseError(context + ": invalid field: " + name);
    }
}

bool valid_resolution(int r) { return r == 10 || r == 20 || r == 60; }

} // namespace

const std::vector<std::string>& canonical_band_order() {
    static const std::vector<std::string> order = {"B02", "B03", "B04", "B08", "B05", "B06", "B07",
                                                   "B8A", "B11", "B12", "B01", "B09", "B10"};
    return order;
}

std::optional<int> canonical_resolution(const std::string& band_id) {
    const auto it = canonical_table().find(band_id);
    if (it == canonical_table().end()) {
        return std::nullopt;
    }
    return it->second;
}

bool band_order_less(const std::string& a, const std::string& b) {
    const auto& order = canonical_band_order();
    const auto ia = std::find(order.begin(), order.end(), a) - order.begin();
    const auto ib = std::find(order.begin(), order.end(), b) - order.begin();
    if (ia != ib) {
        return ia < ib;
    }
    return a < b;
}

ProductBundle parse_manifest(const std::filesystem::path& manifest_path) {
    const std::string ctx = manifest_path.string();
    std::ifstream in(manifest_path);
    if (!in) {
        throw ParseError(ctx + ": cannot open manifest");
    }
    nlohmann::json j;
    try {
        in >> j;
    } catch (const nlohmann::json::parse_error& e) {
        throw ParseError(ctx + ": " + e.what());
    }
    if (!j.is_object()) {
        throw ParseError(ctx + ": manifest is not a JSON object");
    }
    ProductBundle bundle;
    bundle.product_id = field<std::string>(j, "product_id", ctx);
    bundle.tile_id = field<std::string>(j, "tile_id", ctx);
    bundle.sensing_time = parse_timestamp(field<std::string>(j, "sensing_time", ctx));
    if (!j.contains("crs")) {
        throw ParseError(ctx + ": missing field: crs");
    }
    bundle.crs = crs_from_json(j.at("crs"), ctx);
    if (!bundle.crs.is_planar()) {
        throw ParseError(ctx + ": crs must be UTM");
    }
    if (j.contains("cloud_cover_pct") && !j.at("cloud_cover_pct").is_null()) {
        const double cc = field<double>(j, "cloud_cover_pct", ctx);
        if (cc < 0.0 || cc > 100.0) {
            throw ParseError(ctx + ": invalid field: cloud_cover_pct");
        }
        bundle.cloud_cover_pct = cc;
    }
    const auto bands = field<nlohmann::json>(j, "bands", ctx);
    if (!bands.is_array()) {
        throw ParseError(ctx + ": invalid field: bands");
    }
    std::set<std::string> seen;
    for (std::size_t i = 0; i < bands.size(); ++i) {
        const std::string bctx = ctx + ": bands[" + std::to_string(i) + "]";
        BandRef ref;
        ref.band_id = field<std::string>(bands[i], "band_id", bctx);
        ref.resolution_m = field<int>(bands[i], "resolution_m", bctx);
        ref.path = manifest_path.parent_path() / field<std::string>(bands[i], "path", bctx);
        if (!seen.insert(ref.band_id).second) {
            throw ParseError(bctx + ": duplicate band: " + ref.band_id);
        }
        if (!valid_resolution(ref.resolution_m)) {
            throw ParseError(bctx + ": invalid field: resolution_m");
        }
        if (const auto expected = canonical_resolution(ref.band_id); expected && *expected != ref.resolution_m) {
            throw ParseError(bctx + ": band " + ref.band_id + " must be " + std::to_string(*expected) + " m");
        }
        bundle.band_refs.push_back(std::move(ref));
    }
    std::stable_sort(bundle.band_refs.begin(), bundle.band_refs.end(),
                     [](const BandRef& a, const BandRef& b) { return band_order_less(a.band_id, b.band_id); });
    return bundle;
}

void write_manifest(const std::filesystem::path& manifest_path, const ProductBundle& bundle) {
    nlohmann::json j;
    j["product_id"] = bundle.product_id;
    j["tile_id"] = bundle.tile_id;
    j["sensing_time"] = format_timestamp(bundle.sensing_time);
    j["crs"] = crs_to_json(bundle.crs);
    if (bundle.cloud_cover_pct) {
        j["cloud_cover_pct"] = *bundle.cloud_cover_pct;
    }
    j["bands"] = nlohmann::json::array();
    for (const BandRef& ref : bundle.band_refs) {
        j["bands"].push_back({{"band_id", ref.band_id},
                              {"resolution_m", ref.resolution_m},
                              {"path", ref.path.lexically_relative(manifest_path.parent_path()).generic_string()}});
    }
    std::filesystem::create_directories(manifest_path.parent_path());
    std::ofstream out(manifest_path);
    out << j.dump(2) << "\n";
}

BandGrid load_band(const std::filesystem::path& payload) {
    GridHeader h;
    std::vector<std::uint16_t> values;
    const GridHeader probe = read_grid_header(payload);
    if (probe.dtype != DType::U16) {
        throw ParseError(payload.string() + ": band dtype must be u16le, found " + dtype_name(probe.dtype));
    }
    values = read_grid_values<std::uint16_t>(payload, &h);
    const int res = static_cast<int>(h.resolution_m);
    if (double(res) != h.resolution_m || !valid_resolution(res)) {
        throw ParseError(payload.string() + ": invalid field: resolution_m");
    }
    if (h.geotransform.pixel_width != h.resolution_m || h.geotransform.pixel_height != h.resolution_m) {
        throw ParseError(payload.string() + ": geotransform pixel size does not match resolution_m");
    }
    if (!h.crs.is_planar()) {
        throw ParseError(payload.string() + ": band crs must be UTM");
    }
    if (h.frame_count() != 1) {
        throw ParseError(payload.string() + ": band grids must have exactly one frame");
    }
    BandGrid band;
    band.band_id = h.band_id;
    band.resolution_m = res;
    band.rows = h.rows;
    band.cols = h.cols;
    band.values = std::move(values);
    band.nodata_value = static_cast<std::uint16_t>(h.nodata.value_or(0.0));
    band.geotransform = h.geotransform;
    band.crs = h.crs;
    return band;
}

BandGrid load_band(const BandRef& ref) {
    BandGrid band = load_band(ref.path);
    if (band.band_id != ref.band_id) {
        throw ParseError(ref.path.string() + ": sidecar band_id " + band.band_id + " does not match manifest " +
                         ref.band_id);
    }
    if (band.resolution_m != ref.resolution_m) {
        throw ParseError(ref.path.string() + ": sidecar resolution does not match manifest");
    }
    return band;
}

void write_band(const std::filesystem::path& payload, const BandGrid& band) {
    if (static_cast<std::int64_t>(band.values.size()) != band.rows * band.cols) {
        throw ValidationError("band " + band.band_id + ": rows x cols != value count");
    }
    GridHeader h;
    h.band_id = band.band_id;
    h.resolution_m = band.resolution_m;
    h.rows = band.rows;
    h.cols = band.cols;
    h.nodata = band.nodata_value;
    h.crs = band.crs;
    h.geotransform = band.geotransform;
    write_grid_values<std::uint16_t>(payload, h, band.values);
}

void load_bands(ProductBundle& bundle, int jobs) {
    const std::size_t n = bundle.band_refs.size();
    std::vector<std::optional<BandGrid>> loaded(n);
    std::vector<std::exception_ptr> errors(n);
    std::atomic<std::size_t> next{0};
    auto worker = [&] {
        for (std::size_t i = next++; i < n; i = next++) {
            try {
                loaded[i] = load_band(bundle.band_refs[i]);
            } catch (...) {
                errors[i] = std::current_exception();
            }
        }
    };
    const int threads = std::clamp(jobs, 1, static_cast<int>(std::max<std::size_t>(n, 1)));
    std::vector<std::thread> pool;
    for (int t = 1; t < threads; ++t) {
        pool.emplace_back(worker);
    }
    worker();
    for (auto& t : pool) {
        t.join();
    }
    for (const auto& e : errors) {
        if (e) {
            std::rethrow_exception(e);
        }
    }
    for (std::size_t i = 0; i < n; ++i) {
        bundle.bands[bundle.band_refs[i].band_id] = std::move(*loaded[i]);
    }
    validate_bundle_extent(bundle);
}

void validate_bundle_extent(const ProductBundle& bundle) {
    if (bundle.bands.empty()) {
        return;
    }
    int coarsest = 0;
    for (const auto& [id, band] : bundle.bands) {
        coarsest = std::max(coarsest, band.resolution_m);
    }
    const BandGrid& ref = bundle.bands.begin()->second;
    const double height = double(ref.rows) * ref.resolution_m;
    const double width = double(ref.cols) * ref.resolution_m;
    for (const auto& [id, band] : bundle.bands) {
        if (!(band.crs == bundle.crs)) {
            throw ValidationError("band " + id + " CRS differs from the product CRS");
        }
        if (band.geotransform.origin_x != ref.geotransform.origin_x ||
            band.geotransform.origin_y != ref.geotransform.origin_y) {
            throw ValidationError("band " + id + " origin differs from band " + ref.band_id);
        }
        if (std::abs(double(band.rows) * band.resolution_m - height) > coarsest ||
            std::abs(double(band.cols) * band.resolution_m - width) > coarsest) {
            throw ValidationError("band " + id + " extent differs from band " + ref.band_id);
        }
    }
}

double data_coverage_fraction(const BandGrid& band) {
    if (band.values.empty()) {
        return 0.0;
    }
    const auto valid = std::count_if(band.values.begin(), band.values.end(),
                                     [&](std::uint16_t v) { return v != band.nodata_value; });
    return double(valid) / double(band.values.size());
}

} // namespace satseries::ingest
