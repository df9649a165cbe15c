#pragma once

// SE(2) pose algebra, raster grid conventions and the local scaled-Mercator
// datum.
//
// Conventions used across the library:
//  * map frame: x east, y north, meters;
//  * heading theta is counterclockwise from +x, forward(theta) = (cos, sin),
//    right(theta) = (sin, -cos);
//  * grid rows increase northward, columns eastward; the grid origin is the
//    center of cell (row 0, col 0).

#include <cstdint>
#include <optional>

namespace planloc {

struct Vec2 {
    double x = 0.0;
    double y = 0.0;

    friend Vec2 operator+(Vec2 a, Vec2 b) { return {a.x + b.x, a.y + b.y}; }
    friend Vec2 operator-(Vec2 a, Vec2 b) { return {a.x - b.x, a.y - b.y}; }
    friend Vec2 operator*(double s, Vec2 a) { return {s * a.x, s * a.y}; }
    friend bool operator==(Vec2, Vec2) = default;
};

double dot(Vec2 a, Vec2 b);
double norm(Vec2 a);

// Maps any finite angle to (-pi, pi].
double normalize_angle(double a);

// Point in the camera BEV frame: lateral to the right, forward along the
// optical axis, both in meters.
struct BevPoint {
    double lateral = 0.0;
    double forward = 0.0;
};

class Pose2 {
public:
    Pose2() = default;
    Pose2(double x, double y, double theta) : x_(x), y_(y), theta_(normalize_angle(theta)) {}

    static Pose2 identity() { return {}; }

    double x() const { return x_; }
    double y() const { return y_; }
    double theta() const { return theta_; }
    Vec2 translation() const { return {x_, y_}; }

    friend bool operator==(const Pose2&, const Pose2&) = default;

private:
    double x_ = 0.0;
    double y_ = 0.0;
    double theta_ = 0.0;
};

Vec2 forward(double theta);
Vec2 right(double theta);

// a ⊕ b: translation a.t + R(a.theta) b.t, heading a.theta + b.theta.
Pose2 compose(const Pose2& a, const Pose2& b);
Pose2 inverse(const Pose2& a);

// BEV frame -> map frame for a camera at xi.
Vec2 transform_point(const Pose2& xi, BevPoint p);

struct CellIndex {
    std::int64_t row = 0;
    std::int64_t col = 0;
    friend bool operator==(CellIndex, CellIndex) = default;
};

class GridSpec {
public:
    GridSpec() = default;
    // Throws DomainError unless delta > 0 and both sizes are >= 1.
    GridSpec(Vec2 origin, double delta, int width, int height);

    // Grid of the given size centered on the map-frame origin.
    static GridSpec centered(double delta, int width, int height);

    Vec2 origin() const { return origin_; }
    double delta() const { return delta_; }
    int width() const { return width_; }
    int height() const { return height_; }
    std::int64_t cell_count() const { return std::int64_t(width_) * height_; }

    Vec2 cell_center(std::int64_t row, std::int64_t col) const;
    // Nearest cell, ties rounded half-up; may lie outside the grid.
    CellIndex cell_of(Vec2 p) const;
    // Continuous (row, col) coordinates; cell centers are integral.
    Vec2 continuous_index(Vec2 p) const;  // {col, row}
    bool contains(CellIndex c) const;

    friend bool operator==(const GridSpec&, const GridSpec&) = default;

private:
    Vec2 origin_{};
    double delta_ = 1.0;
    int width_ = 1;
    int height_ = 1;
};

class Datum {
public:
    Datum() = default;
    // Throws DomainError unless lat0 in (-90, 90) and lon0 in [-180, 180).
    Datum(double lon0_deg, double lat0_deg);

    double lon0() const { return lon0_; }
    double lat0() const { return lat0_; }

    friend bool operator==(const Datum&, const Datum&) = default;

private:
    double lon0_ = 0.0;
    double lat0_ = 0.0;
};

inline constexpr double kEarthRadius = 6378137.0;

// Local scaled Mercator: x = s R (lambda - lambda0),
// y = s R (ln tan(pi/4 + phi/2) - ln tan(pi/4 + phi0/2)), s = cos(phi0).
// Throws DomainError for |lat| >= 85 degrees.
Vec2 wgs84_to_local(const Datum& datum, double lon_deg, double lat_deg);

// Inverse of wgs84_to_local; returns {lon, lat} in degrees.
Vec2 local_to_wgs84(const Datum& datum, Vec2 p);

}  // namespace planloc
