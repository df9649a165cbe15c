#pragma once

#include <array>
#include <cstdint>
#include <filesystem>
#include <iosfwd>
#include <vector>

#include "planloc/classes.hpp"
#include "planloc/geometry.hpp"
#include "planloc/raster.hpp"

namespace planloc {

// Dense W x H x C grid of 32-bit features, row-major (row 0 south),
// channel-last.
class FeatureGrid {
public:
    FeatureGrid() = default;
    FeatureGrid(int width, int height, int channels)
        : width_(width), height_(height), channels_(channels),
          data_(std::size_t(width) * height * channels, 0.0f) {}

    int width() const { return width_; }
    int height() const { return height_; }
    int channels() const { return channels_; }

    float* cell(int row, int col) { return data_.data() + (std::size_t(row) * width_ + col) * channels_; }
    const float* cell(int row, int col) const {
        return data_.data() + (std::size_t(row) * width_ + col) * channels_;
    }
    std::vector<float>& data() { return data_; }
    const std::vector<float>& data() const { return data_; }

    friend bool operator==(const FeatureGrid&, const FeatureGrid&) = default;

private:
    int width_ = 0;
    int height_ = 0;
    int channels_ = 0;
    std::vector<float> data_;
};

// Per-channel class embedding tables. Row 0 (void) is always zero.
struct Embeddings {
    int dim = 0;
    std::array<std::vector<std::vector<float>>, kChannelCount> tables;

    // Gaussian entries from a fixed seed, sized to the table.
    static Embeddings random(const ClassTable& table, int dim, std::uint64_t seed);
};

// The neural map F and the unary location prior Omega on the same grid.
struct NeuralMap {
    GridSpec spec;
    FeatureGrid features;
    std::vector<float> omega;  // row-major, one score per cell

    int channels() const { return features.channels(); }
    friend bool operator==(const NeuralMap&, const NeuralMap&) = default;
};

// Concatenates the three per-channel embeddings of every cell
// (W x H x 3N). Throws ConfigError when the raster holds an index the
// tables do not cover.
FeatureGrid embed_classes(const MapRaster& raster, const Embeddings& emb);

// (embedded grid, raster) -> NeuralMap. Learned encoders plug in here.
class MapEncoder {
public:
    virtual ~MapEncoder() = default;
    virtual NeuralMap encode(const FeatureGrid& embedded, const MapRaster& raster) const = 0;
};

struct AnalyticParams {
    double radius_m = 4.0;
    int channels = 8;
    std::uint64_t projection_seed = 0x5eed;
    // Use the identity instead of a random projection; requires channels to
    // equal the total class count.
    bool identity_projection = false;
    float prior_penalty = -1.0e4f;
    // Uniform gain on F. Scores grow with its square, so it acts as the
    // inverse temperature of the pose posterior; at 1 the posterior of a
    // 256 x 256 x 64 volume is nearly flat.
    float feature_scale = 16.0f;
};

// Per-class truncated distance fields (1 - d / radius, zero beyond radius)
// projected to `channels` dimensions by a seeded random orthonormal matrix.
// Omega is prior_penalty on building and water area cells, 0 elsewhere.
class AnalyticEncoder final : public MapEncoder {
public:
    AnalyticEncoder(const ClassTable& table, AnalyticParams params = {});
    NeuralMap encode(const FeatureGrid& embedded, const MapRaster& raster) const override;

    // channels x total_classes, row-major.
    const std::vector<double>& projection() const { return projection_; }
    int total_classes() const { return total_classes_; }

private:
    AnalyticParams params_;
    int total_classes_ = 0;
    std::array<int, kChannelCount> channel_offset_{};
    std::vector<int> blocked_area_classes_;
    std::vector<double> projection_;
};

NeuralMap encode_analytic(const MapRaster& raster, const ClassTable& table, const AnalyticParams& params = {});

// Exact Euclidean distance (in cells) from every cell to the nearest cell
// where mask is true; +inf when the mask is empty.
std::vector<double> distance_transform(const std::vector<std::uint8_t>& mask, int width, int height);

// Population standard deviation over every feature value of F.
double feature_std(const FeatureGrid& grid);

inline constexpr std::uint32_t kNeuralMapVersion = 1;

// PLNM container: "PLNM", u32 version, f64 origin.x, f64 origin.y, f64 delta,
// u32 width, u32 height, u32 N, then W*H*N f32 features (row-major, rows
// south to north, channel-last) followed by W*H f32 prior scores.
void save_neural_map(const NeuralMap& map, std::ostream& os);
void save_neural_map(const NeuralMap& map, const std::filesystem::path& path);
NeuralMap load_neural_map(std::istream& is);
NeuralMap load_neural_map(const std::filesystem::path& path);

}  // namespace planloc
