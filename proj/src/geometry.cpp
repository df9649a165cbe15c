#include "planloc/geometry.hpp"

#include <cmath>
#include <numbers>

#include "planloc/error.hpp"

namespace planloc {

namespace {
constexpr double kPi = std::numbers::pi;
constexpr double kDeg = kPi / 180.0;
}  // namespace

double dot(Vec2 a, Vec2 b) { return a.x * b.x + a.y * b.y; }
double norm(Vec2 a) { return std::hypot(a.x, a.y); }

double normalize_angle(double a) {
    double r = std::remainder(a, 2.0 * kPi);
    if (r <= -kPi) r += 2.0 * kPi;
    if (r > kPi) r -= 2.0 * kPi;
    return r;
}

Vec2 forward(double theta) { return {std::cos(theta), std::sin(theta)}; }
Vec2 right(double theta) { return {std::sin(theta), -std::cos(theta)}; }

Pose2 compose(const Pose2& a, const Pose2& b) {
    const double c = std::cos(a.theta());
    const double s = std::sin(a.theta());
    return {a.x() + c * b.x() - s * b.y(), a.y() + s * b.x() + c * b.y(),
            a.theta() + b.theta()};
}

Pose2 inverse(const Pose2& a) {
    const double c = std::cos(a.theta());
    const double s = std::sin(a.theta());
    return {-(c * a.x() + s * a.y()), -(-s * a.x() + c * a.y()), -a.theta()};
}

Vec2 transform_point(const Pose2& xi, BevPoint p) {
    const double c = std::cos(xi.theta());
    const double s = std::sin(xi.theta());
    return {xi.x() + p.forward * c + p.lateral * s, xi.y() + p.forward * s - p.lateral * c};
}

GridSpec::GridSpec(Vec2 origin, double delta, int width, int height)
    : origin_(origin), delta_(delta), width_(width), height_(height) {
    if (!(delta > 0.0) || !std::isfinite(delta)) throw DomainError("grid delta must be > 0");
    if (width < 1 || height < 1) throw DomainError("grid width and height must be >= 1");
}

GridSpec GridSpec::centered(double delta, int width, int height) {
    return GridSpec({-0.5 * (width - 1) * delta, -0.5 * (height - 1) * delta}, delta, width,
                    height);
}

Vec2 GridSpec::cell_center(std::int64_t row, std::int64_t col) const {
    return {origin_.x + double(col) * delta_, origin_.y + double(row) * delta_};
}

Vec2 GridSpec::continuous_index(Vec2 p) const {
    return {(p.x - origin_.x) / delta_, (p.y - origin_.y) / delta_};
}

CellIndex GridSpec::cell_of(Vec2 p) const {
    Vec2 c = continuous_index(p);
    return {static_cast<std::int64_t>(std::floor(c.y + 0.5)),
            static_cast<std::int64_t>(std::floor(c.x + 0.5))};
}

bool GridSpec::contains(CellIndex c) const {
    return c.row >= 0 && c.col >= 0 && c.row < height_ && c.col < width_;
}

Datum::Datum(double lon0_deg, double lat0_deg) : lon0_(lon0_deg), lat0_(lat0_deg) {
    if (!(lat0_deg > -90.0 && lat0_deg < 90.0)) throw DomainError("datum latitude out of (-90, 90)");
    if (!(lon0_deg >= -180.0 && lon0_deg < 180.0))
        throw DomainError("datum longitude out of [-180, 180)");
}

namespace {
double mercator_y(double lat_rad) { return std::log(std::tan(kPi / 4.0 + lat_rad / 2.0)); }
}  // namespace

Vec2 wgs84_to_local(const Datum& datum, double lon_deg, double lat_deg) {
    if (!(lat_deg > -85.0 && lat_deg < 85.0)) {
        throw DomainError("latitude " + std::to_string(lat_deg) + " outside (-85, 85)");
    }
    const double phi0 = datum.lat0() * kDeg;
    const double scale = std::cos(phi0) * kEarthRadius;
    return {scale * (lon_deg - datum.lon0()) * kDeg,
            scale * (mercator_y(lat_deg * kDeg) - mercator_y(phi0))};
}

Vec2 local_to_wgs84(const Datum& datum, Vec2 p) {
    const double phi0 = datum.lat0() * kDeg;
    const double scale = std::cos(phi0) * kEarthRadius;
    const double lon = datum.lon0() + p.x / scale / kDeg;
    const double my = p.y / scale + mercator_y(phi0);
    const double lat = 2.0 * std::atan(std::exp(my)) - kPi / 2.0;
    return {lon, lat / kDeg};
}

}  // namespace planloc
