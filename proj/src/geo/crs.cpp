#include "satseries/geo/crs.hpp"

#include <charconv>

#include "satseries/core/error.hpp"

namespace satseries::geo {

Crs Crs::utm(int zone, Hemisphere hemisphere) {
    if (zone < 1 || zone > 60) {
        throw ValidationError("UTM zone out of range 1..60: " + std::to_string(zone));
    }
    Crs crs;
    crs.kind_ = CrsKind::Utm;
    crs.zone_ = zone;
    crs.hemisphere_ = hemisphere;
    return crs;
}

Crs Crs::from_epsg(int code) {
    if (code == 4326) {
        return wgs84();
    }
    if (code > 32600 && code <= 32660) {
        return utm(code - 32600, Hemisphere::North);
    }
    if (code > 32700 && code <= 32760) {
        return utm(code - 32700, Hemisphere::South);
    }
    throw ValidationError("unsupported CRS: EPSG:" + std::to_string(code));
}

Crs Crs::from_name(const std::string& name) {
    if (name == "urn:ogc:def:crs:OGC:1.3:CRS84" || name == "OGC:CRS84" || name == "CRS84") {
        return wgs84();
    }
    const auto pos = name.find_last_of(':');
    if (name.rfind("EPSG:", 0) == 0 || name.rfind("urn:ogc:def:crs:EPSG:", 0) == 0) {
        int code = 0;
        const char* first = name.data() + pos + 1;
        const char* last = name.data() + name.size();
        auto [ptr, ec] = std::from_chars(first, last, code);
        if (ec == std::errc{} && ptr == last) {
            return from_epsg(code);
        }
    }
    throw ValidationError("unsupported CRS: " + name);
}

int Crs::epsg() const {
    if (kind_ == CrsKind::Wgs84) {
        return 4326;
    }
    return (hemisphere_ == Hemisphere::North ? 32600 : 32700) + zone_;
}

double Crs::central_meridian() const { return kind_ == CrsKind::Utm ? 6.0 * zone_ - 183.0 : 0.0; }

std::string Crs::to_string() const { return "EPSG:" + std::to_string(epsg()); }

} // namespace satseries::geo
