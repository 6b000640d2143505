#include "satseries/rasterizer/parcel.hpp"

#include <fstream>
#include <limits>
#include <sstream>

#include <nlohmann/json.hpp>

#include "satseries/core/error.hpp"

namespace satseries::rasterizer {
namespace {

using nlohmann::json;

geo::Ring parse_ring(const json& coords, const std::string& ctx) {
    if (!coords.is_array()) {
        throw ParseError(ctx + ": ring is not an array");
    }
    geo::Ring ring;
    for (const json& pos : coords) {
        if (!pos.is_array() || pos.size() < 2 || !pos[0].is_number() || !pos[1].is_number()) {
            throw ParseError(ctx + ": invalid position");
        }
        ring.push_back({pos[0].get<double>(), pos[1].get<double>()});
    }
    return geo::normalized_ring(ring);
}

geo::GeoPolygon parse_polygon(const json& rings, const geo::Crs& crs, const std::string& ctx) {
    if (!rings.is_array() || rings.empty()) {
        throw ParseError(ctx + ": polygon has no rings");
    }
    geo::GeoPolygon poly;
    poly.crs = crs;
    poly.exterior = parse_ring(rings[0], ctx);
    for (std::size_t i = 1; i < rings.size(); ++i) {
        poly.holes.push_back(parse_ring(rings[i], ctx));
    }
    return poly;
}

const json& property(const json& props, const char* name, const std::string& ctx) {
    if (!props.is_object() || !props.contains(name) || props.at(name).is_null()) {
        throw ParseError(ctx + ": missing property: " + name);
    }
    return props.at(name);
}

} // namespace

ParcelCollection parse_parcels_geojson(std::string_view text, const std::string& context) {
    json j;
    try {
        j = json::parse(text);
    } catch (const json::parse_error& e) {
        throw ParseError(context + ": " + e.what());
    }
    if (!j.is_object() || j.value("type", "") != "FeatureCollection") {
        throw ParseError(context + ": expected a FeatureCollection");
    }
    ParcelCollection out;
    if (j.contains("crs") && !j["crs"].is_null()) {
        const json& crs = j["crs"];
        try {
            out.crs = geo::Crs::from_name(crs.at("properties").at("name").get<std::string>());
        } catch (const json::exception&) {
            throw ParseError(context + ": invalid field: crs");
        } catch (const ValidationError& e) {
            throw ParseError(context + ": " + e.what());
        }
    }
    if (!j.contains("features") || !j["features"].is_array()) {
        throw ParseError(context + ": missing field: features");
    }
    const json& features = j["features"];
    for (std::size_t i = 0; i < features.size(); ++i) {
        const std::string ctx = context + ": features[" + std::to_string(i) + "]";
        const json& f = features[i];
        const json props = f.value("properties", json::object());
        ParcelRecord rec;

        const json& pid = property(props, "parcel_id", ctx);
        if (!pid.is_number_integer() || pid.get<std::int64_t>() < 1 ||
            pid.get<std::int64_t>() > std::numeric_limits<std::uint32_t>::max()) {
            throw ParseError(ctx + ": invalid property: parcel_id (positive integer required)");
        }
        rec.parcel_id = pid.get<std::uint32_t>();

        const json& gt = property(props, "ground_truth", ctx);
        if (gt.is_number_integer()) {
            if (gt.get<std::int64_t>() < 0 || gt.get<std::int64_t>() > std::numeric_limits<std::uint32_t>::max()) {
                throw ParseError(ctx + ": invalid property: ground_truth (class ids are unsigned 32-bit)");
            }
            rec.ground_truth = gt.get<std::uint32_t>();
        } else if (gt.is_number_float()) {
            rec.ground_truth = gt.get<double>();
        } else {
            throw ParseError(ctx + ": invalid property: ground_truth");
        }

        const json& year = property(props, "year", ctx);
        if (!year.is_number_integer()) {
            throw ParseError(ctx + ": invalid property: year");
        }
        rec.year = year.get<int>();

        if (!f.contains("geometry") || !f["geometry"].is_object()) {
            throw ParseError(ctx + ": missing field: geometry");
        }
        const json& geom = f["geometry"];
        const std::string type = geom.value("type", "");
        if (!geom.contains("coordinates")) {
            throw ParseError(ctx + ": missing field: geometry.coordinates");
        }
        if (type == "Polygon") {
            rec.geometry = parse_polygon(geom["coordinates"], out.crs, ctx);
        } else if (type == "MultiPolygon") {
            if (geom["coordinates"].size() != 1) {
                throw ParseError(ctx + ": multi-part MultiPolygon parcels are not supported");
            }
            rec.geometry = parse_polygon(geom["coordinates"][0], out.crs, ctx);
        } else {
            throw ParseError(ctx + ": unsupported geometry type '" + type + "'");
        }
        try {
            geo::validate_polygon(rec.geometry);
        } catch (const ValidationError& e) {
            throw ParseError(ctx + ": " + e.what());
        }
        out.records.push_back(std::move(rec));
    }
    return out;
}

ParcelCollection read_parcels_geojson(const std::filesystem::path& path) {
    std::ifstream in(path);
    if (!in) {
        throw ParseError("cannot open parcels file " + path.string());
    }
    std::stringstream ss;
    ss << in.rdbuf();
    return parse_parcels_geojson(ss.str(), path.string());
}

void write_parcels_geojson(const std::filesystem::path& path, const ParcelCollection& parcels) {
    auto ring_json = [](const geo::Ring& raw) {
        const geo::Ring ring = geo::normalized_ring(raw);
        json arr = json::array();
        for (std::size_t i = 0; i <= ring.size() && !ring.empty(); ++i) {
            arr.push_back({ring[i % ring.size()].x, ring[i % ring.size()].y});
        }
        return arr;
    };
    json features = json::array();
    for (const ParcelRecord& rec : parcels.records) {
        json coords = json::array({ring_json(rec.geometry.exterior)});
        for (const geo::Ring& h : rec.geometry.holes) {
            coords.push_back(ring_json(h));
        }
        json props = {{"parcel_id", rec.parcel_id}, {"year", rec.year}};
        std::visit([&](auto v) { props["ground_truth"] = v; }, rec.ground_truth);
        features.push_back({{"type", "Feature"},
                            {"properties", props},
                            {"geometry", {{"type", "Polygon"}, {"coordinates", coords}}}});
    }
    const json doc = {{"type", "FeatureCollection"},
                      {"crs", {{"type", "name"}, {"properties", {{"name", parcels.crs.to_string()}}}}},
                      {"features", features}};
    if (path.has_parent_path()) {
        std::filesystem::create_directories(path.parent_path());
    }
    std::ofstream out(path);
    out << doc.dump(1) << "\n";
}

std::vector<ParcelRecord> filter_by_year(std::span<const ParcelRecord> records, int year) {
    std::vector<ParcelRecord> out;
    for (const ParcelRecord& r : records) {
        if (r.year == year) {
            out.push_back(r);
        }
    }
    return out;
}

} // namespace satseries::rasterizer
