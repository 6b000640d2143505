#include "satseries/catalog/catalog.hpp"

#include <algorithm>
#include <charconv>
#include <cmath>
#include <fstream>
#include <limits>
#include <set>
#include <sstream>

#include "satseries/core/error.hpp"
#include "satseries/geo/projection.hpp"
#include "satseries/geo/wkt.hpp"

namespace satseries::catalog {
namespace {

std::string number(double v) {
    char buf[64];
    const auto res = std::to_chars(buf, buf + sizeof buf, v);
    return std::string(buf, res.ptr);
}

std::string fixed(double v, int digits) {
    char buf[64];
    std::snprintf(buf, sizeof buf, "%.*f", digits, v);
    return buf;
}

geo::GeoPoint ring_centroid(const geo::Ring& ring) {
    double a = 0, cx = 0, cy = 0;
    const geo::GeoPoint o = ring.front();
    for (std::size_t i = 0; i < ring.size(); ++i) {
        const double x0 = ring[i].x - o.x, y0 = ring[i].y - o.y;
        const double x1 = ring[(i + 1) % ring.size()].x - o.x, y1 = ring[(i + 1) % ring.size()].y - o.y;
        const double cross = x0 * y1 - x1 * y0;
        a += cross;
        cx += (x0 + x1) * cross;
        cy += (y0 + y1) * cross;
    }
    if (a == 0.0) {
        return o;
    }
    return {o.x + cx / (3 * a), o.y + cy / (3 * a)};
}

template <class T>
T required(const nlohmann::json& j, const char* key) {
    if (!j.contains(key) || j[key].is_null()) {
        throw ParseError(std::string("missing field: ") + key);
    }
    try {
        return j[key].get<T>();
    } catch (const nlohmann::json::exception&) {
        throw ParseError(std::string("wrong type for field: ") + key);
    }
}

void check_pct(double v, const char* what) {
    if (!(v >= 0.0 && v <= 100.0)) {
        throw ValidationError(std::string(what) + " must be within [0, 100]");
    }
}

} // namespace

Aoi Aoi::from_polygon(geo::GeoPolygon polygon) {
    if (polygon.crs.kind() != geo::CrsKind::Wgs84) {
        throw ValidationError("AOI must be given in WGS84");
    }
    geo::validate_polygon(polygon);
    return Aoi{std::move(polygon)};
}

Poi Poi::make(Timestamp start, Timestamp end) {
    if (!(start < end)) {
        throw ValidationError("period of interest must have start < end");
    }
    return Poi{start, end};
}

void SelectionConfig::validate() const {
    check_pct(cloud_max_pct, "cloud_max");
    check_pct(min_data_coverage_pct, "min_data_coverage");
    if (!(min_aoi_overlap >= 0.0 && min_aoi_overlap <= 1.0)) {
        throw ValidationError("min_overlap must be within [0, 1]");
    }
    if (target_date_count < 1) {
        throw ValidationError("target_date_count must be at least 1");
    }
}

std::string QuerySpec::to_request_path() const {
    return "/search?bbox=" + number(west) + "," + number(south) + "," + number(east) + "," + number(north) +
           "&start=" + format_timestamp(start) + "&end=" + format_timestamp(end) +
           "&cloudmax=" + number(cloud_max_pct);
}

QuerySpec build_query(const Aoi& aoi, const Poi& poi, const SelectionConfig& cfg) {
    cfg.validate();
    const geo::Rect box = geo::bounding_box(aoi.polygon.exterior);
    return QuerySpec{box.min_x, box.min_y, box.max_x, box.max_y, poi.start, poi.end, cfg.cloud_max_pct};
}

ProductMeta product_from_json(const nlohmann::json& hit) {
    ProductMeta p;
    p.product_id = required<std::string>(hit, "id");
    try {
        p.tile_id = required<std::string>(hit, "tile");
        p.sensing_time = parse_timestamp(required<std::string>(hit, "sensing_time"));
        p.cloud_cover_pct = required<double>(hit, "cloud_pct");
        check_pct(p.cloud_cover_pct, "cloud_pct");
        p.footprint = geo::parse_wkt_polygons(required<std::string>(hit, "footprint_wkt"));
        for (const auto& part : p.footprint) {
            geo::validate_polygon(part);
        }
        p.online = hit.value("online", false);
        p.size_bytes = hit.value("size", std::int64_t{0});
        if (hit.contains("md5") && !hit["md5"].is_null()) {
            p.md5 = hit["md5"].get<std::string>();
        }
        if (hit.contains("data_coverage_pct") && !hit["data_coverage_pct"].is_null()) {
            p.data_coverage_pct = hit["data_coverage_pct"].get<double>();
            check_pct(*p.data_coverage_pct, "data_coverage_pct");
        }
    } catch (const Error& e) {
        throw ParseError("product " + p.product_id + ": " + e.what());
    }
    return p;
}

nlohmann::json product_to_json(const ProductMeta& p) {
    std::string wkt;
    if (p.footprint.size() == 1) {
        wkt = geo::to_wkt(p.footprint.front());
    } else {
        wkt = "MULTIPOLYGON (";
        for (std::size_t i = 0; i < p.footprint.size(); ++i) {
            std::string part = geo::to_wkt(p.footprint[i]);
            wkt += (i ? ", " : "") + part.substr(part.find('('));
        }
        wkt += ")";
    }
    nlohmann::json j = {{"id", p.product_id},
                        {"tile", p.tile_id},
                        {"sensing_time", format_timestamp(p.sensing_time)},
                        {"cloud_pct", p.cloud_cover_pct},
                        {"footprint_wkt", wkt},
                        {"online", p.online},
                        {"size", p.size_bytes}};
    j["md5"] = p.md5 ? nlohmann::json(*p.md5) : nlohmann::json(nullptr);
    if (p.data_coverage_pct) {
        j["data_coverage_pct"] = *p.data_coverage_pct;
    }
    return j;
}

std::vector<ProductMeta> parse_search_response(std::string_view body) {
    nlohmann::json j;
    try {
        j = nlohmann::json::parse(body);
    } catch (const nlohmann::json::exception& e) {
        throw ParseError(std::string("search response: ") + e.what());
    }
    if (!j.contains("products") || !j["products"].is_array()) {
        throw ParseError("search response: missing field: products");
    }
    std::vector<ProductMeta> out;
    for (const auto& hit : j["products"]) {
        out.push_back(product_from_json(hit));
    }
    return out;
}

double aoi_overlap_fraction(const ProductMeta& product, const Aoi& aoi) {
    const geo::GeoPoint c = ring_centroid(geo::normalized_ring(aoi.polygon.exterior));
    const geo::Crs utm = geo::Crs::utm(geo::utm_zone_for_longitude(c.x),
                                       c.y >= 0 ? geo::Hemisphere::North : geo::Hemisphere::South);
    const geo::GeoPolygon a = geo::project(aoi.polygon, utm);
    const double aoi_area = geo::polygon_area(a);
    if (aoi_area <= 0.0) {
        throw ValidationError("AOI has zero area");
    }
    double covered = 0.0;
    for (const geo::GeoPolygon& part : product.footprint) {
        covered += geo::intersection_area(geo::project(part, utm), a);
    }
    return std::clamp(covered / aoi_area, 0.0, 1.0);
}

RankResult rank_products(const std::vector<ProductMeta>& candidates, const Aoi& aoi, const SelectionConfig& cfg) {
    cfg.validate();
    RankResult result;
    for (const ProductMeta& p : candidates) {
        RankedProduct r{p, aoi_overlap_fraction(p, aoi), p.cloud_cover_pct, p.data_coverage_pct.value_or(100.0), 0};
        if (r.cloud_pct > cfg.cloud_max_pct) {
            result.rejected.push_back({p, "cloud cover " + fixed(r.cloud_pct, 2) + " > " + fixed(cfg.cloud_max_pct, 2)});
        } else if (r.overlap < cfg.min_aoi_overlap) {
            result.rejected.push_back({p, "aoi overlap " + fixed(r.overlap, 4) + " < " + fixed(cfg.min_aoi_overlap, 4)});
        } else if (r.data_coverage_pct < cfg.min_data_coverage_pct) {
            result.rejected.push_back({p, "data coverage " + fixed(r.data_coverage_pct, 2) + " < " +
                                              fixed(cfg.min_data_coverage_pct, 2)});
        } else {
            result.ranked.push_back(std::move(r));
        }
    }
    std::sort(result.ranked.begin(), result.ranked.end(), [](const RankedProduct& a, const RankedProduct& b) {
        if (a.overlap != b.overlap) return a.overlap > b.overlap;
        if (a.cloud_pct != b.cloud_pct) return a.cloud_pct < b.cloud_pct;
        if (a.data_coverage_pct != b.data_coverage_pct) return a.data_coverage_pct > b.data_coverage_pct;
        if (a.product.sensing_time != b.product.sensing_time) return a.product.sensing_time < b.product.sensing_time;
        return a.product.product_id < b.product.product_id;
    });
    for (std::size_t i = 0; i < result.ranked.size(); ++i) {
        result.ranked[i].rank = static_cast<int>(i + 1);
    }
    std::sort(result.rejected.begin(), result.rejected.end(),
              [](const RejectedProduct& a, const RejectedProduct& b) { return a.product.product_id < b.product.product_id; });
    return result;
}

__int128 uniform_spread_cost(const std::vector<Timestamp>& dates, const std::vector<std::size_t>& chosen) {
    const std::size_t k = chosen.size();
    if (k < 2) {
        return 0;
    }
    const __int128 first = dates.front().time_since_epoch().count();
    const __int128 span = dates.back().time_since_epoch().count() - first;
    __int128 cost = 0;
    for (std::size_t i = 0; i < k; ++i) {
        const __int128 d = __int128(k - 1) * dates[chosen[i]].time_since_epoch().count() -
                           (__int128(k - 1) * first + __int128(i) * span);
        cost += d * d;
    }
    return cost;
}

std::vector<std::size_t> select_uniform_dates(const std::vector<Timestamp>& dates, std::size_t k,
                                              std::optional<Timestamp> midpoint) {
    const std::size_t n = dates.size();
    if (n == 0 || k == 0) {
        throw ValidationError("select_uniform_dates needs at least one date and k >= 1");
    }
    if (k > n) {
        throw ValidationError("cannot select " + std::to_string(k) + " dates from " + std::to_string(n));
    }
    for (std::size_t i = 1; i < n; ++i) {
        if (!(dates[i - 1] < dates[i])) {
            throw ValidationError("dates must be strictly increasing");
        }
    }
    if (k == 1) {
        const auto first = dates.front().time_since_epoch().count();
        const auto last = dates.back().time_since_epoch().count();
        // compare doubled distances to stay integral
        const __int128 mid2 = midpoint ? __int128(2) * midpoint->time_since_epoch().count() : __int128(first) + last;
        std::size_t best = 0;
        __int128 best_d = -1;
        for (std::size_t i = 0; i < n; ++i) {
            __int128 d = __int128(2) * dates[i].time_since_epoch().count() - mid2;
            d = d < 0 ? -d : d;
            if (best_d < 0 || d < best_d) {
                best_d = d;
                best = i;
            }
        }
        return {best};
    }

    const __int128 first = dates.front().time_since_epoch().count();
    const __int128 span = dates.back().time_since_epoch().count() - first;
    auto slot_cost = [&](std::size_t slot, std::size_t idx) {
        const __int128 d = __int128(k - 1) * dates[idx].time_since_epoch().count() -
                           (__int128(k - 1) * first + __int128(slot) * span);
        return d * d;
    };
    // best[j][i]: minimal cost of filling slots j..k-1 from indices >= i
    constexpr __int128 kInf = std::numeric_limits<__int128>::max();
    std::vector<std::vector<__int128>> best(k + 1, std::vector<__int128>(n + 1, kInf));
    for (std::size_t i = 0; i <= n; ++i) {
        best[k][i] = 0;
    }
    for (std::size_t j = k; j-- > 0;) {
        for (std::size_t i = n; i-- > 0;) {
            __int128 b = best[j][i + 1];
            if (best[j + 1][i + 1] != kInf) {
                b = std::min(b, slot_cost(j, i) + best[j + 1][i + 1]);
            }
            best[j][i] = b;
        }
    }
    std::vector<std::size_t> chosen;
    std::size_t i = 0;
    for (std::size_t j = 0; j < k; ++j) {
        while (best[j + 1][i + 1] == kInf || slot_cost(j, i) + best[j + 1][i + 1] != best[j][i]) {
            ++i;
        }
        chosen.push_back(i++);
    }
    return chosen;
}

std::vector<RankedProduct> select_products(const RankResult& ranking, const SelectionConfig& cfg, const Poi& poi) {
    std::set<Timestamp> distinct;
    for (const RankedProduct& r : ranking.ranked) {
        distinct.insert(r.product.sensing_time);
    }
    if (distinct.empty()) {
        return {};
    }
    const std::vector<Timestamp> dates(distinct.begin(), distinct.end());
    const std::size_t k = std::min<std::size_t>(static_cast<std::size_t>(cfg.target_date_count), dates.size());
    const Timestamp mid = poi.start + (poi.end - poi.start) / 2;
    std::set<Timestamp> keep;
    for (std::size_t idx : select_uniform_dates(dates, k, mid)) {
        keep.insert(dates[idx]);
    }
    std::vector<RankedProduct> out;
    for (const RankedProduct& r : ranking.ranked) {
        if (keep.count(r.product.sensing_time)) {
            out.push_back(r);
        }
    }
    std::stable_sort(out.begin(), out.end(), [](const RankedProduct& a, const RankedProduct& b) {
        return a.product.sensing_time < b.product.sensing_time;
    });
    return out;
}

void write_selection_file(const std::filesystem::path& path, const std::vector<SelectionEntry>& entries) {
    if (path.has_parent_path()) {
        std::filesystem::create_directories(path.parent_path());
    }
    std::ofstream out(path);
    out << "# product_id\ttile_id\tsensing_time\n";
    out << "# remove or comment out lines to skip products\n";
    for (const SelectionEntry& e : entries) {
        out << e.product_id << '\t' << e.tile_id << '\t' << format_timestamp(e.sensing_time) << '\n';
    }
    if (!out) {
        throw Error("cannot write " + path.string());
    }
}

std::vector<SelectionEntry> parse_selection(std::string_view text, const std::string& context) {
    std::vector<SelectionEntry> out;
    std::istringstream in{std::string(text)};
    std::string line;
    for (int lineno = 1; std::getline(in, line); ++lineno) {
        if (!line.empty() && line.back() == '\r') {
            line.pop_back();
        }
        const auto start = line.find_first_not_of(" \t");
        if (start == std::string::npos || line[start] == '#') {
            continue;
        }
        std::vector<std::string> fields;
        std::istringstream ls(line);
        for (std::string f; std::getline(ls, f, '\t');) {
            fields.push_back(f);
        }
        if (fields.size() != 3 || fields[0].empty() || fields[1].empty()) {
            throw ParseError(context + ":" + std::to_string(lineno) + ": expected 3 tab-separated fields");
        }
        try {
            out.push_back({fields[0], fields[1], parse_timestamp(fields[2])});
        } catch (const Error& e) {
            throw ParseError(context + ":" + std::to_string(lineno) + ": " + e.what());
        }
    }
    return out;
}

std::vector<SelectionEntry> read_selection_file(const std::filesystem::path& path) {
    std::ifstream in(path);
    if (!in) {
        throw ParseError("cannot read " + path.string());
    }
    std::stringstream buf;
    buf << in.rdbuf();
    return parse_selection(buf.str(), path.string());
}

void write_report_csv(const std::filesystem::path& path, const std::vector<RankedProduct>& ranked) {
    if (path.has_parent_path()) {
        std::filesystem::create_directories(path.parent_path());
    }
    std::ofstream out(path);
    out << "product_id,sensing_time,overlap,cloud_pct,data_coverage_pct,rank\n";
    for (const RankedProduct& r : ranked) {
        out << r.product.product_id << ',' << format_timestamp(r.product.sensing_time) << ','
            << fixed(r.overlap, 6) << ',' << fixed(r.cloud_pct, 2) << ',' << fixed(r.data_coverage_pct, 2) << ','
            << r.rank << '\n';
    }
    if (!out) {
        throw Error("cannot write " + path.string());
    }
}

void write_catalog(const std::filesystem::path& path, const std::vector<ProductMeta>& products) {
    nlohmann::json j = {{"products", nlohmann::json::array()}};
    for (const ProductMeta& p : products) {
        j["products"].push_back(product_to_json(p));
    }
    if (path.has_parent_path()) {
        std::filesystem::create_directories(path.parent_path());
    }
    std::ofstream out(path);
    out << j.dump(2) << '\n';
    if (!out) {
        throw Error("cannot write " + path.string());
    }
}

std::vector<ProductMeta> read_catalog(const std::filesystem::path& path) {
    std::ifstream in(path);
    if (!in) {
        throw ParseError("cannot read " + path.string());
    }
    std::stringstream buf;
    buf << in.rdbuf();
    return parse_search_response(buf.str());
}

} // namespace satseries::catalog
