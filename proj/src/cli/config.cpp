#include "satseries/cli/config.hpp"

#include <charconv>
#include <fstream>
#include <set>
#include <sstream>

#include <nlohmann/json.hpp>
#include <yaml-cpp/yaml.h>

#include "satseries/core/error.hpp"
#include "satseries/geo/projection.hpp"

namespace satseries::cli {
namespace {

struct Unit {
    const char* suffix;
    long long ms;
};
// longest suffix first so "ms" wins over "m"
constexpr Unit kUnits[] = {{"ms", 1}, {"d", 86400000}, {"h", 3600000}, {"m", 60000}, {"s", 1000}};

std::string number(double v) {
    char buf[32];
    const auto r = std::to_chars(buf, buf + sizeof(buf), v);
    return std::string(buf, r.ptr);
}

std::string quoted(const std::string& s) { return nlohmann::json(s).dump(); }

class Reader {
public:
    explicit Reader(std::string context) : context_(std::move(context)) {}

    [[noreturn]] void fail(const YAML::Node& n, const std::string& what) const {
        const int line = n.Mark().line >= 0 ? n.Mark().line + 1 : 0;
        throw ParseError(context_ + ":" + std::to_string(line) + ": " + what);
    }

    /// Rejects keys outside `allowed`, so typos do not fall back to defaults silently.
    void check_keys(const YAML::Node& map, const std::string& section, std::initializer_list<const char*> allowed) {
        if (!map.IsMap()) {
            fail(map, section + " must be a mapping");
        }
        std::set<std::string> ok(allowed.begin(), allowed.end());
        for (const auto& kv : map) {
            const auto key = kv.first.as<std::string>();
            if (!ok.count(key)) {
                fail(kv.first, "unknown key " + (section.empty() ? key : section + "." + key));
            }
        }
    }

    template <class T>
    void get(const YAML::Node& map, const char* key, T& out, const std::string& section) {
        const YAML::Node n = map[key];
        if (!n) {
            return;
        }
        try {
            out = n.as<T>();
        } catch (const YAML::Exception&) {
            fail(n, "invalid value for " + section + "." + key);
        }
    }

    void get_duration(const YAML::Node& map, const char* key, hub::Duration& out, const std::string& section) {
        const YAML::Node n = map[key];
        if (!n) {
            return;
        }
        try {
            out = parse_duration(n.as<std::string>());
        } catch (const std::exception& e) {
            fail(n, section + "." + key + ": " + e.what());
        }
    }

    void get_time(const YAML::Node& map, const char* key, Timestamp& out, const std::string& section) {
        const YAML::Node n = map[key];
        if (!n) {
            fail(map, "missing " + section + "." + key);
        }
        try {
            out = parse_timestamp(n.as<std::string>());
        } catch (const std::exception& e) {
            fail(n, section + "." + key + ": " + e.what());
        }
    }

private:
    std::string context_;
};

} // namespace

hub::Duration parse_duration(std::string_view text) {
    if (text.empty()) {
        throw ParseError("empty duration");
    }
    long long total = 0;
    std::size_t i = 0;
    while (i < text.size()) {
        long long v = 0;
        const auto r = std::from_chars(text.data() + i, text.data() + text.size(), v);
        if (r.ec != std::errc() || v < 0) {
            throw ParseError("invalid duration \"" + std::string(text) + "\"");
        }
        i = static_cast<std::size_t>(r.ptr - text.data());
        const Unit* unit = nullptr;
        for (const Unit& u : kUnits) {
            if (text.substr(i).starts_with(u.suffix)) {
                unit = &u;
                break;
            }
        }
        if (!unit) {
            throw ParseError("invalid duration \"" + std::string(text) + "\" (units: ms, s, m, h, d)");
        }
        i += std::char_traits<char>::length(unit->suffix);
        total += v * unit->ms;
    }
    return hub::Duration(total);
}

std::string format_duration(hub::Duration d) {
    long long ms = d.count();
    if (ms == 0) {
        return "0s";
    }
    std::string out;
    for (const Unit& u : {kUnits[1], kUnits[2], kUnits[3], kUnits[4], kUnits[0]}) {
        if (ms >= u.ms) {
            out += std::to_string(ms / u.ms) + u.suffix;
            ms %= u.ms;
        }
    }
    return out;
}

void PipelineConfig::validate() const {
    if (aoi_polygon.empty() == aoi_file.empty()) {
        throw ValidationError("aoi needs exactly one of polygon or file");
    }
    if (!aoi_polygon.empty()) {
        catalog::Aoi::from_polygon(geo::GeoPolygon{aoi_polygon, {}, geo::Crs::wgs84()});
    }
    catalog::Poi::make(poi_start, poi_end);
    selection.validate();
    throttle.validate();
    if (backoff.base <= hub::Duration::zero() || backoff.factor < 1 || backoff.cap < backoff.base ||
        backoff.max_attempts < 1) {
        throw ValidationError("hub.retry needs base > 0, factor >= 1, cap >= base and max_attempts >= 1");
    }
    windows.validate();
    if (label_scale < 1) {
        throw ValidationError("label scale must be a positive integer");
    }
    if (output.empty()) {
        throw ValidationError("output must not be empty");
    }
    split.validate();
    if (min_T < 1) {
        throw ValidationError("min_T must be at least 1");
    }
}

std::filesystem::path PipelineConfig::resolve(const std::string& path) const {
    const std::filesystem::path p(path);
    return p.is_absolute() ? p : base_dir / p;
}

geo::GeoPolygon PipelineConfig::aoi() const {
    if (!aoi_file.empty()) {
        return read_aoi_geojson(resolve(aoi_file));
    }
    return geo::GeoPolygon{aoi_polygon, {}, geo::Crs::wgs84()};
}

bool PipelineConfig::operator==(const PipelineConfig& o) const {
    auto throttle_eq = [](const hub::ThrottlePolicy& a, const hub::ThrottlePolicy& b) {
        return a.min_request_interval == b.min_request_interval &&
               a.lta_availability_window == b.lta_availability_window && a.poll_interval == b.poll_interval &&
               a.max_concurrent_downloads == b.max_concurrent_downloads;
    };
    auto backoff_eq = [](const hub::BackoffPolicy& a, const hub::BackoffPolicy& b) {
        return a.base == b.base && a.factor == b.factor && a.cap == b.cap && a.max_attempts == b.max_attempts;
    };
    return aoi_polygon == o.aoi_polygon && aoi_file == o.aoi_file && poi_start == o.poi_start &&
           poi_end == o.poi_end && selection.cloud_max_pct == o.selection.cloud_max_pct &&
           selection.min_aoi_overlap == o.selection.min_aoi_overlap &&
           selection.min_data_coverage_pct == o.selection.min_data_coverage_pct &&
           selection.target_date_count == o.selection.target_date_count && hub_url == o.hub_url &&
           hub_token_env == o.hub_token_env && throttle_eq(throttle, o.throttle) && backoff_eq(backoff, o.backoff) &&
           windows.window_m == o.windows.window_m && windows.stride_m == o.windows.stride_m &&
           windows.labeled_only == o.windows.labeled_only &&
           windows.min_labeled_fraction == o.windows.min_labeled_fraction && parcels == o.parcels &&
           label_scale == o.label_scale && background == o.background && label_year == o.label_year &&
           output == o.output && seed == o.seed && split.train == o.split.train && split.val == o.split.val &&
           split.test == o.split.test && min_T == o.min_T;
}

PipelineConfig parse_config(std::string_view yaml, const std::filesystem::path& base_dir,
                            const std::string& context) {
    YAML::Node root;
    try {
        root = YAML::Load(std::string(yaml));
    } catch (const YAML::ParserException& e) {
        throw ParseError(context + ":" + std::to_string(e.mark.line + 1) + ": " + e.msg);
    }
    Reader r(context);
    if (!root.IsMap()) {
        r.fail(root, "config must be a mapping");
    }
    r.check_keys(root, "",
                 {"aoi", "poi", "selection", "hub", "windows", "labels", "output", "seed", "split", "assemble"});
    PipelineConfig c;
    c.base_dir = base_dir;

    if (const YAML::Node aoi = root["aoi"]) {
        r.check_keys(aoi, "aoi", {"polygon", "file"});
        if (const YAML::Node poly = aoi["polygon"]) {
            if (!poly.IsSequence()) {
                r.fail(poly, "aoi.polygon must be a list of [lon, lat] pairs");
            }
            for (const auto& pt : poly) {
                if (!pt.IsSequence() || pt.size() != 2) {
                    r.fail(pt, "aoi.polygon must be a list of [lon, lat] pairs");
                }
                try {
                    c.aoi_polygon.push_back({pt[0].as<double>(), pt[1].as<double>()});
                } catch (const YAML::Exception&) {
                    r.fail(pt, "aoi.polygon coordinates must be numbers");
                }
            }
        }
        r.get(aoi, "file", c.aoi_file, "aoi");
    } else {
        r.fail(root, "missing aoi");
    }
    if (const YAML::Node poi = root["poi"]) {
        r.check_keys(poi, "poi", {"start", "end"});
        r.get_time(poi, "start", c.poi_start, "poi");
        r.get_time(poi, "end", c.poi_end, "poi");
    } else {
        r.fail(root, "missing poi");
    }
    if (const YAML::Node s = root["selection"]) {
        r.check_keys(s, "selection", {"cloud_max", "min_overlap", "min_data_coverage", "target_date_count"});
        r.get(s, "cloud_max", c.selection.cloud_max_pct, "selection");
        r.get(s, "min_overlap", c.selection.min_aoi_overlap, "selection");
        r.get(s, "min_data_coverage", c.selection.min_data_coverage_pct, "selection");
        r.get(s, "target_date_count", c.selection.target_date_count, "selection");
    }
    if (const YAML::Node h = root["hub"]) {
        r.check_keys(h, "hub",
                     {"url", "token_env", "min_request_interval", "lta_availability_window", "poll_interval",
                      "max_concurrent_downloads", "retry"});
        r.get(h, "url", c.hub_url, "hub");
        r.get(h, "token_env", c.hub_token_env, "hub");
        r.get_duration(h, "min_request_interval", c.throttle.min_request_interval, "hub");
        r.get_duration(h, "lta_availability_window", c.throttle.lta_availability_window, "hub");
        r.get_duration(h, "poll_interval", c.throttle.poll_interval, "hub");
        r.get(h, "max_concurrent_downloads", c.throttle.max_concurrent_downloads, "hub");
        if (const YAML::Node retry = h["retry"]) {
            r.check_keys(retry, "hub.retry", {"base", "factor", "cap", "max_attempts"});
            r.get_duration(retry, "base", c.backoff.base, "hub.retry");
            r.get(retry, "factor", c.backoff.factor, "hub.retry");
            r.get_duration(retry, "cap", c.backoff.cap, "hub.retry");
            r.get(retry, "max_attempts", c.backoff.max_attempts, "hub.retry");
        }
    }
    if (const YAML::Node w = root["windows"]) {
        r.check_keys(w, "windows", {"window_m", "stride_m", "labeled_only", "min_labeled_fraction"});
        r.get(w, "window_m", c.windows.window_m, "windows");
        c.windows.stride_m = c.windows.window_m;
        r.get(w, "stride_m", c.windows.stride_m, "windows");
        r.get(w, "labeled_only", c.windows.labeled_only, "windows");
        r.get(w, "min_labeled_fraction", c.windows.min_labeled_fraction, "windows");
    }
    if (const YAML::Node l = root["labels"]) {
        r.check_keys(l, "labels", {"parcels", "scale", "background", "year"});
        r.get(l, "parcels", c.parcels, "labels");
        r.get(l, "scale", c.label_scale, "labels");
        r.get(l, "background", c.background, "labels");
        if (l["year"] && !l["year"].IsNull()) {
            int year = 0;
            r.get(l, "year", year, "labels");
            c.label_year = year;
        }
    }
    r.get(root, "output", c.output, "");
    r.get(root, "seed", c.seed, "");
    if (const YAML::Node s = root["split"]) {
        r.check_keys(s, "split", {"train", "val", "test"});
        r.get(s, "train", c.split.train, "split");
        r.get(s, "val", c.split.val, "split");
        r.get(s, "test", c.split.test, "split");
    }
    if (const YAML::Node a = root["assemble"]) {
        r.check_keys(a, "assemble", {"min_T"});
        r.get(a, "min_T", c.min_T, "assemble");
    }
    try {
        c.validate();
    } catch (const ValidationError& e) {
        throw ValidationError(context + ": " + e.what());
    }
    return c;
}

PipelineConfig load_config(const std::filesystem::path& path) {
    std::ifstream in(path);
    if (!in) {
        throw ValidationError("cannot open config " + path.string());
    }
    std::stringstream ss;
    ss << in.rdbuf();
    return parse_config(ss.str(), std::filesystem::absolute(path).parent_path(), path.string());
}

std::string serialize_config(const PipelineConfig& c) {
    std::ostringstream o;
    o << "aoi:\n";
    if (!c.aoi_file.empty()) {
        o << "  file: " << quoted(c.aoi_file) << "\n";
    } else {
        o << "  polygon:\n";
        for (const auto& p : c.aoi_polygon) {
            o << "    - [" << number(p.x) << ", " << number(p.y) << "]\n";
        }
    }
    o << "poi:\n"
      << "  start: " << format_timestamp(c.poi_start) << "\n"
      << "  end: " << format_timestamp(c.poi_end) << "\n"
      << "selection:\n"
      << "  cloud_max: " << number(c.selection.cloud_max_pct) << "\n"
      << "  min_overlap: " << number(c.selection.min_aoi_overlap) << "\n"
      << "  min_data_coverage: " << number(c.selection.min_data_coverage_pct) << "\n"
      << "  target_date_count: " << c.selection.target_date_count << "\n"
      << "hub:\n"
      << "  url: " << quoted(c.hub_url) << "\n"
      << "  token_env: " << quoted(c.hub_token_env) << "\n"
      << "  min_request_interval: " << format_duration(c.throttle.min_request_interval) << "\n"
      << "  lta_availability_window: " << format_duration(c.throttle.lta_availability_window) << "\n"
      << "  poll_interval: " << format_duration(c.throttle.poll_interval) << "\n"
      << "  max_concurrent_downloads: " << c.throttle.max_concurrent_downloads << "\n"
      << "  retry:\n"
      << "    base: " << format_duration(c.backoff.base) << "\n"
      << "    factor: " << c.backoff.factor << "\n"
      << "    cap: " << format_duration(c.backoff.cap) << "\n"
      << "    max_attempts: " << c.backoff.max_attempts << "\n"
      << "windows:\n"
      << "  window_m: " << c.windows.window_m << "\n"
      << "  stride_m: " << c.windows.stride_m << "\n"
      << "  labeled_only: " << (c.windows.labeled_only ? "true" : "false") << "\n"
      << "  min_labeled_fraction: " << number(c.windows.min_labeled_fraction) << "\n"
      << "labels:\n"
      << "  parcels: " << quoted(c.parcels) << "\n"
      << "  scale: " << c.label_scale << "\n"
      << "  background: " << c.background << "\n"
      << "  year: " << (c.label_year ? std::to_string(*c.label_year) : "null") << "\n"
      << "output: " << quoted(c.output) << "\n"
      << "seed: " << c.seed << "\n"
      << "split:\n"
      << "  train: " << number(c.split.train) << "\n"
      << "  val: " << number(c.split.val) << "\n"
      << "  test: " << number(c.split.test) << "\n"
      << "assemble:\n"
      << "  min_T: " << c.min_T << "\n";
    return o.str();
}

geo::GeoPolygon read_aoi_geojson(const std::filesystem::path& path) {
    std::ifstream in(path);
    if (!in) {
        throw ValidationError("cannot open aoi file " + path.string());
    }
    nlohmann::json j;
    try {
        in >> j;
    } catch (const nlohmann::json::exception& e) {
        throw ParseError(path.string() + ": " + e.what());
    }
    const std::string context = path.string();
    try {
        if (j.at("type") == "FeatureCollection") {
            if (j.at("features").size() != 1) {
                throw ParseError(context + ": expected exactly one feature");
            }
            j = j["features"][0];
        }
        if (j.at("type") == "Feature") {
            j = j.at("geometry");
        }
        nlohmann::json rings;
        if (j.at("type") == "Polygon") {
            rings = j.at("coordinates");
        } else if (j.at("type") == "MultiPolygon" && j.at("coordinates").size() == 1) {
            rings = j["coordinates"][0];
        } else {
            throw ParseError(context + ": aoi must be a single Polygon");
        }
        geo::GeoPolygon poly;
        for (std::size_t r = 0; r < rings.size(); ++r) {
            geo::Ring ring;
            for (const auto& pt : rings[r]) {
                ring.push_back({pt.at(0).get<double>(), pt.at(1).get<double>()});
            }
            (r == 0 ? poly.exterior : poly.holes.emplace_back()) = std::move(ring);
        }
        return poly;
    } catch (const nlohmann::json::exception& e) {
        throw ParseError(context + ": " + e.what());
    }
}

} // namespace satseries::cli
