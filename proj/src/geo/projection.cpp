#include "satseries/geo/projection.hpp"

#include <algorithm>
#include <array>
#include <cmath>
#include <numbers>

#include "satseries/core/error.hpp"

namespace satseries::geo {
namespace {

constexpr double kSemiMajor = 6378137.0;
constexpr double kFlattening = 1.0 / 298.257223563;
constexpr double kScale = 0.9996;
constexpr double kFalseEasting = 500000.0;
constexpr double kFalseNorthingSouth = 10000000.0;
constexpr double kMaxLatitude = 84.0;
constexpr double kDeg = std::numbers::pi / 180.0;

struct SeriesCoefficients {
    double e;           // first eccentricity
    double rectifying;  // A, radius of the rectifying sphere
    std::array<double, 6> alpha;
    std::array<double, 6> beta;
};

SeriesCoefficients make_coefficients() {
    const double f = kFlattening;
    const double n = f / (2.0 - f);
    const double n2 = n * n, n3 = n2 * n, n4 = n3 * n, n5 = n4 * n, n6 = n5 * n;
    SeriesCoefficients c{};
    c.e = std::sqrt(f * (2.0 - f));
    c.rectifying = kSemiMajor / (1.0 + n) * (1.0 + n2 / 4.0 + n4 / 64.0 + n6 / 256.0);
    c.alpha = {
        n / 2.0 - 2.0 * n2 / 3.0 + 5.0 * n3 / 16.0 + 41.0 * n4 / 180.0 - 127.0 * n5 / 288.0 +
            7891.0 * n6 / 37800.0,
        13.0 * n2 / 48.0 - 3.0 * n3 / 5.0 + 557.0 * n4 / 1440.0 + 281.0 * n5 / 630.0 -
            1983433.0 * n6 / 1935360.0,
        61.0 * n3 / 240.0 - 103.0 * n4 / 140.0 + 15061.0 * n5 / 26880.0 + 167603.0 * n6 / 181440.0,
        49561.0 * n4 / 161280.0 - 179.0 * n5 / 168.0 + 6601661.0 * n6 / 7257600.0,
        34729.0 * n5 / 80640.0 - 3418889.0 * n6 / 1995840.0,
        212378941.0 * n6 / 319334400.0,
    };
    c.beta = {
        n / 2.0 - 2.0 * n2 / 3.0 + 37.0 * n3 / 96.0 - n4 / 360.0 - 81.0 * n5 / 512.0 +
            96199.0 * n6 / 604800.0,
        n2 / 48.0 + n3 / 15.0 - 437.0 * n4 / 1440.0 + 46.0 * n5 / 105.0 - 1118711.0 * n6 / 3870720.0,
        17.0 * n3 / 480.0 - 37.0 * n4 / 840.0 - 209.0 * n5 / 4480.0 + 5569.0 * n6 / 90720.0,
        4397.0 * n4 / 161280.0 - 11.0 * n5 / 504.0 - 830251.0 * n6 / 7257600.0,
        4583.0 * n5 / 161280.0 - 108847.0 * n6 / 3991680.0,
        20648693.0 * n6 / 638668800.0,
    };
    return c;
}

const SeriesCoefficients& coefficients() {
    static const SeriesCoefficients c = make_coefficients();
    return c;
}

/// tan of the conformal latitude for tan of the geodetic latitude.
double conformal_tan(double tau, double e) {
    const double sigma = std::sinh(e * std::atanh(e * tau / std::hypot(1.0, tau)));
    return tau * std::hypot(1.0, sigma) - sigma * std::hypot(1.0, tau);
}

double geodetic_tan(double tau_conformal, double e) {
    const double e2m = 1.0 - e * e;
    double tau = tau_conformal;
    for (int i = 0; i < 8; ++i) {
        const double tau_i = conformal_tan(tau, e);
        const double dtau = (tau_conformal - tau_i) / std::hypot(1.0, tau_i) *
                            (1.0 + e2m * tau * tau) / (e2m * std::hypot(1.0, tau));
        tau += dtau;
        if (std::abs(dtau) <= 1e-15 * std::max(1.0, std::abs(tau))) {
            break;
        }
    }
    return tau;
}

double normalize_longitude(double lon) {
    lon = std::remainder(lon, 360.0);
    return lon == -180.0 ? 180.0 : lon;
}

GeoPoint to_utm(GeoPoint lonlat, const Crs& utm) {
    const double lat = lonlat.y;
    if (!std::isfinite(lat) || !std::isfinite(lonlat.x)) {
        throw ValidationError("non-finite coordinate");
    }
    if (std::abs(lat) > kMaxLatitude) {
        throw ValidationError("latitude " + std::to_string(lat) + " outside UTM validity band");
    }
    const SeriesCoefficients& c = coefficients();
    const double phi = lat * kDeg;
    const double lambda = normalize_longitude(lonlat.x - utm.central_meridian()) * kDeg;

    const double tau_c = conformal_tan(std::tan(phi), c.e);
    const double xi_c = std::atan2(tau_c, std::cos(lambda));
    const double eta_c = std::asinh(std::sin(lambda) / std::hypot(tau_c, std::cos(lambda)));

    double xi = xi_c;
    double eta = eta_c;
    for (int j = 1; j <= 6; ++j) {
        const double a = c.alpha[j - 1];
        xi += a * std::sin(2.0 * j * xi_c) * std::cosh(2.0 * j * eta_c);
        eta += a * std::cos(2.0 * j * xi_c) * std::sinh(2.0 * j * eta_c);
    }
    GeoPoint out{kFalseEasting + kScale * c.rectifying * eta, kScale * c.rectifying * xi};
    if (utm.hemisphere() == Hemisphere::South) {
        out.y += kFalseNorthingSouth;
    }
    return out;
}

GeoPoint from_utm(GeoPoint en, const Crs& utm) {
    if (!std::isfinite(en.x) || !std::isfinite(en.y)) {
        throw ValidationError("non-finite coordinate");
    }
    const SeriesCoefficients& c = coefficients();
    const double northing = utm.hemisphere() == Hemisphere::South ? en.y - kFalseNorthingSouth : en.y;
    const double xi = northing / (kScale * c.rectifying);
    const double eta = (en.x - kFalseEasting) / (kScale * c.rectifying);

    double xi_c = xi;
    double eta_c = eta;
    for (int j = 1; j <= 6; ++j) {
        const double b = c.beta[j - 1];
        xi_c -= b * std::sin(2.0 * j * xi) * std::cosh(2.0 * j * eta);
        eta_c -= b * std::cos(2.0 * j * xi) * std::sinh(2.0 * j * eta);
    }
    const double tau_c = std::sin(xi_c) / std::hypot(std::sinh(eta_c), std::cos(xi_c));
    const double lambda = std::atan2(std::sinh(eta_c), std::cos(xi_c));
    const double phi = std::atan(geodetic_tan(tau_c, c.e));
    return {normalize_longitude(lambda / kDeg + utm.central_meridian()), phi / kDeg};
}

} // namespace

GeoPoint project(GeoPoint p, const Crs& from, const Crs& to) {
    if (from == to) {
        return p;
    }
    const GeoPoint lonlat = from.is_planar() ? from_utm(p, from) : p;
    if (!to.is_planar()) {
        return lonlat;
    }
    return to_utm(lonlat, to);
}

GeoPolygon project(const GeoPolygon& poly, const Crs& to) {
    auto project_ring = [&](const Ring& ring) {
        Ring out;
        out.reserve(ring.size());
        for (const GeoPoint& p : ring) {
            out.push_back(project(p, poly.crs, to));
        }
        return out;
    };
    GeoPolygon out;
    out.crs = to;
    out.exterior = project_ring(poly.exterior);
    for (const Ring& h : poly.holes) {
        out.holes.push_back(project_ring(h));
    }
    return out;
}

int utm_zone_for_longitude(double longitude) {
    double lon = std::remainder(longitude, 360.0);
    if (lon >= 180.0) {
        lon -= 360.0;
    }
    const int zone = static_cast<int>(std::floor((lon + 180.0) / 6.0)) + 1;
    return std::clamp(zone, 1, 60);
}

} // namespace satseries::geo
