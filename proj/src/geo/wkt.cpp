#include "satseries/geo/wkt.hpp"

#include <cctype>
#include <charconv>
#include <string>

#include "satseries/core/error.hpp"

namespace satseries::geo {
namespace {

class WktReader {
public:
    explicit WktReader(std::string_view text) : text_(text) {}

    void skip_ws() {
        while (pos_ < text_.size() && std::isspace(static_cast<unsigned char>(text_[pos_]))) {
            ++pos_;
        }
    }

    bool consume(char c) {
        skip_ws();
        if (pos_ < text_.size() && text_[pos_] == c) {
            ++pos_;
            return true;
        }
        return false;
    }

    void expect(char c) {
        if (!consume(c)) {
            fail(std::string("expected '") + c + "'");
        }
    }

    std::string keyword() {
        skip_ws();
        std::string out;
        while (pos_ < text_.size() && std::isalpha(static_cast<unsigned char>(text_[pos_]))) {
            out.push_back(static_cast<char>(std::toupper(static_cast<unsigned char>(text_[pos_++]))));
        }
        return out;
    }

    double number() {
        skip_ws();
        double value = 0.0;
        auto [ptr, ec] = std::from_chars(text_.data() + pos_, text_.data() + text_.size(), value);
        if (ec != std::errc{}) {
            fail("expected a number");
        }
        pos_ = static_cast<std::size_t>(ptr - text_.data());
        return value;
    }

    Ring ring() {
        expect('(');
        Ring out;
        do {
            const double x = number();
            const double y = number();
            out.push_back({x, y});
        } while (consume(','));
        expect(')');
        return normalized_ring(out);
    }

    GeoPolygon polygon(const Crs& crs) {
        GeoPolygon poly;
        poly.crs = crs;
        expect('(');
        poly.exterior = ring();
        while (consume(',')) {
            poly.holes.push_back(ring());
        }
        expect(')');
        return poly;
    }

    bool at_end() {
        skip_ws();
        return pos_ == text_.size();
    }

    [[noreturn]] void fail(const std::string& what) const {
        throw ParseError("WKT: " + what + " at offset " + std::to_string(pos_));
    }

private:
    std::string_view text_;
    std::size_t pos_ = 0;
};

std::string shortest(double v) {
    char buf[32];
    auto [ptr, ec] = std::to_chars(buf, buf + sizeof buf, v);
    return std::string(buf, ptr);
}

} // namespace

std::vector<GeoPolygon> parse_wkt_polygons(std::string_view wkt, const Crs& crs) {
    WktReader reader(wkt);
    const std::string kind = reader.keyword();
    std::vector<GeoPolygon> out;
    if (kind == "POLYGON") {
        out.push_back(reader.polygon(crs));
    } else if (kind == "MULTIPOLYGON") {
        reader.expect('(');
        do {
            out.push_back(reader.polygon(crs));
        } while (reader.consume(','));
        reader.expect(')');
    } else {
        reader.fail("unsupported geometry type '" + kind + "'");
    }
    if (!reader.at_end()) {
        reader.fail("trailing characters");
    }
    return out;
}

std::string to_wkt(const GeoPolygon& poly) {
    auto write_ring = [](const Ring& raw, std::string& out) {
        const Ring ring = normalized_ring(raw);
        out += '(';
        for (std::size_t i = 0; i <= ring.size() && !ring.empty(); ++i) {
            const GeoPoint& p = ring[i % ring.size()];
            if (i > 0) {
                out += ", ";
            }
            out += shortest(p.x) + ' ' + shortest(p.y);
        }
        out += ')';
    };
    std::string out = "POLYGON (";
    write_ring(poly.exterior, out);
    for (const Ring& h : poly.holes) {
        out += ", ";
        write_ring(h, out);
    }
    out += ')';
    return out;
}

} // namespace satseries::geo
