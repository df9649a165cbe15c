#pragma once

// Lifting of per-column image features to a Cartesian bird's-eye view.
//
// The image side is abstracted as ColumnFeatures: a U x V feature map X and
// per-pixel scores over S+1 log-spaced scale values. Each image column is a
// polar ray; depth plane d (1-based, depth d * delta) attends over the
// column's pixels with softmax weights taken from the scores interpolated at
// scale f / depth. The polar grid is then resampled onto an L x D Cartesian
// grid with the camera at lateral 0.

#include <cstdint>
#include <filesystem>
#include <functional>
#include <iosfwd>
#include <optional>
#include <vector>

namespace planloc {

class ScaleBins {
public:
    // Throws DomainError unless 0 < sigma_min < sigma_max and S >= 1.
    ScaleBins(double sigma_min, double sigma_max, int S);

    double sigma_min() const { return sigma_min_; }
    double sigma_max() const { return sigma_max_; }
    int S() const { return S_; }
    // Number of scale values, S + 1.
    int count() const { return S_ + 1; }
    double value(int i) const;

private:
    double sigma_min_;
    double sigma_max_;
    int S_;
};

// sigma = f / depth and its inverse; DomainError for non-positive inputs.
double scale_from_depth(double focal_px, double depth_m);
double depth_from_scale(double focal_px, double sigma);

// Continuous bin index S * log(sigma / sigma_min) / log(sigma_max / sigma_min),
// or nullopt outside [sigma_min, sigma_max].
std::optional<double> scale_to_bin(double sigma, const ScaleBins& bins);

struct ColumnFeatures {
    int U = 0;
    int V = 0;
    int N = 0;
    int S = 0;  // scores carry S + 1 values per pixel
    double focal = 0.0;
    double cx = 0.0;
    std::vector<float> features;  // (u * V + v) * N + n
    std::vector<float> scores;    // (u * V + v) * (S + 1) + i

    ColumnFeatures() = default;
    ColumnFeatures(int U, int V, int N, int S, double focal, double cx);

    // Throws DomainError when sizes disagree, f <= 0 or values are not finite.
    void validate() const;
    friend bool operator==(const ColumnFeatures&, const ColumnFeatures&) = default;
};

// U x D x N polar grid; row d holds depth plane d + 1.
struct PolarGrid {
    int U = 0;
    int D = 0;
    int N = 0;
    std::vector<double> features;     // (u * D + d) * N + n
    std::vector<std::uint8_t> valid;  // u * D + d; false when the plane's scale is unrepresentable
};

// Attention weights alpha (u * D + d) * V + v; rows for invalid planes are
// zero.
std::vector<double> polar_attention(const ColumnFeatures& cols, const ScaleBins& bins, double delta, int D);

PolarGrid lift_polar(const ColumnFeatures& cols, const ScaleBins& bins, double delta, int D);

// L x D x N features with L x D confidence. Row r is at forward depth
// (r + 1) * delta; column l is at lateral (l - L / 2) * delta (integer
// division, so the camera axis falls on a cell center).
struct BevGrid {
    int L = 0;
    int D = 0;
    int N = 0;
    double delta = 0.0;
    std::vector<float> features;    // (r * L + l) * N + n
    std::vector<float> confidence;  // r * L + l, in [0, 1]

    BevGrid() = default;
    BevGrid(int L, int D, int N, double delta);

    int center_column() const { return L / 2; }
    double lateral(int l) const { return (l - center_column()) * delta; }
    double forward(int r) const { return (r + 1) * delta; }
    float* cell(int r, int l) { return features.data() + (std::size_t(r) * L + l) * N; }
    const float* cell(int r, int l) const { return features.data() + (std::size_t(r) * L + l) * N; }
    float conf(int r, int l) const { return confidence[std::size_t(r) * L + l]; }
    float& conf(int r, int l) { return confidence[std::size_t(r) * L + l]; }

    friend bool operator==(const BevGrid&, const BevGrid&) = default;
};

// Lateral linear interpolation between the two rays bracketing the source
// column u = cx + f * lateral / forward. C = 1 inside the frustum where both
// rays are valid, otherwise C = 0 with a zero feature.
BevGrid polar_to_cartesian(const PolarGrid& polar, const ColumnFeatures& cols, double delta, int L);

// Post-lift refinement hook (identity when empty).
using BevRefiner = std::function<BevGrid(BevGrid)>;

BevGrid lift_to_bev(const ColumnFeatures& cols, const ScaleBins& bins, double delta, int L, int D,
                    const BevRefiner& refine = {});

inline constexpr std::uint32_t kColumnFeaturesVersion = 1;
inline constexpr std::uint32_t kBevVersion = 1;

// PLCF: "PLCF", u32 version, u32 U, V, N, S, f64 focal, f64 cx, then
// U*V*N f32 features and U*V*(S+1) f32 scores.
void save_columns(const ColumnFeatures& cols, std::ostream& os);
void save_columns(const ColumnFeatures& cols, const std::filesystem::path& path);
ColumnFeatures load_columns(std::istream& is);
ColumnFeatures load_columns(const std::filesystem::path& path);

// PLBV: "PLBV", u32 version, u32 L, D, N, f64 delta, then L*D*N f32
// features and L*D f32 confidences (row r = depth plane r + 1).
void save_bev(const BevGrid& bev, std::ostream& os);
void save_bev(const BevGrid& bev, const std::filesystem::path& path);
BevGrid load_bev(std::istream& is);
BevGrid load_bev(const std::filesystem::path& path);

// Reads either container, dispatching on the magic. Column features are
// lifted with scale bins [sigma_min, sigma_max] and the file's S.
BevGrid load_observation(const std::filesystem::path& path, double sigma_min, double sigma_max, double delta, int L,
                         int D);

}  // namespace planloc
