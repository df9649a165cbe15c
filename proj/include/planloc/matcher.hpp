#pragma once

// Exhaustive (x, y, theta) template matching of a BEV against a neural map.

#include <cstdint>
#include <filesystem>
#include <iosfwd>
#include <memory>
#include <optional>
#include <vector>

#include "planloc/bev.hpp"
#include "planloc/geometry.hpp"
#include "planloc/mapenc.hpp"

namespace planloc {

enum class VolumeKind : std::uint8_t { LogScore = 0, Probability = 1 };

// Unnormalized rotation angle of bin k: -pi + 2 pi k / K.
double rotation_angle(int k, int K);

// W x H x K values over map cells and K evenly spaced headings, stored
// k-major: index (k * H + row) * W + col.
class PoseVolume {
public:
    PoseVolume() = default;
    // Throws DomainError for K < 1.
    PoseVolume(GridSpec spec, int K, VolumeKind kind, double fill = 0.0);

    const GridSpec& spec() const { return spec_; }
    int width() const { return spec_.width(); }
    int height() const { return spec_.height(); }
    int rotations() const { return K_; }
    VolumeKind kind() const { return kind_; }
    void set_kind(VolumeKind kind) { kind_ = kind; }
    std::size_t size() const { return values_.size(); }

    std::size_t index(int k, int row, int col) const {
        return (std::size_t(k) * height() + row) * width() + col;
    }
    double& at(int k, int row, int col) { return values_[index(k, row, col)]; }
    double at(int k, int row, int col) const { return values_[index(k, row, col)]; }
    std::vector<double>& values() { return values_; }
    const std::vector<double>& values() const { return values_; }

    double bin_width() const;
    // Heading of bin k normalized to (-pi, pi].
    double theta(int k) const;
    Pose2 pose(int row, int col, int k) const;
    // Continuous heading index of an angle, in [0, K).
    double theta_index(double theta) const;

    double sum() const;
    // Throws DomainError unless the volume is of probability kind.
    void require_probability(const char* op) const;
    bool same_shape(const PoseVolume& other) const;

    friend bool operator==(const PoseVolume&, const PoseVolume&) = default;

private:
    GridSpec spec_;
    int K_ = 1;
    VolumeKind kind_ = VolumeKind::LogScore;
    std::vector<double> values_;
};

// T (x) C and C resampled onto the map grid after rotating the BEV by theta
// about the camera. Canvas cell (a, b) sits at map offset
// (col_offset + b, row_offset + a) cells from the camera cell.
struct RotatedTemplate {
    double theta = 0.0;
    int width = 0;
    int height = 0;
    int channels = 0;
    int col_offset = 0;
    int row_offset = 0;
    std::vector<double> weights;     // (a * width + b) * channels + n
    std::vector<double> confidence;  // a * width + b

    const double* at(int a, int b) const { return weights.data() + (std::size_t(a) * width + b) * channels; }
};

// Throws ConfigError unless bev.delta equals map_delta.
RotatedTemplate rotate_template(const BevGrid& bev, double theta, double map_delta);

// Number of cells with C > 0.
int confident_cells(const BevGrid& bev);

enum class Backend { Naive, Fourier };

struct ScoreOptions {
    int rotations = 64;
    Backend backend = Backend::Fourier;
    int threads = 1;  // 0: hardware concurrency
};

// M[k, i, j] = (1/Z) sum_q F[(i, j) + q] . Trot_k[q] with F zero outside
// the map and Z the number of confident BEV cells (zero volume when Z = 0).
// Throws DomainError when the map is not larger than the template diagonal.
PoseVolume score_volume(const NeuralMap& map, const BevGrid& bev, const ScoreOptions& options = {});

// Fourier-domain scorer that keeps the map spectra for repeated queries
// with templates of the same L x D size.
class FourierMatcher {
public:
    FourierMatcher(const NeuralMap& map, int L, int D, int threads = 1);
    ~FourierMatcher();
    FourierMatcher(const FourierMatcher&) = delete;
    FourierMatcher& operator=(const FourierMatcher&) = delete;

    PoseVolume score(const BevGrid& bev, int K) const;
    int fft_size() const;

private:
    struct Impl;
    std::unique_ptr<Impl> impl_;
};

struct PriorDisk {
    Vec2 center;
    double radius = 0.0;
};

// softmax(M + Omega) jointly over all bins, with Omega broadcast along
// rotations and cells farther than the prior radius set to -inf. Throws
// DegenerateError when no bin remains.
PoseVolume pose_posterior(const PoseVolume& scores, const std::vector<float>& omega,
                          const std::optional<PriorDisk>& prior = std::nullopt);

inline constexpr std::uint32_t kPoseVolumeVersion = 1;

// PLPV: "PLPV", u32 version, u32 W, H, K, f64 origin.x, origin.y, delta,
// u8 kind, then W*H*K f32 values, k-major.
void save_volume(const PoseVolume& v, std::ostream& os);
void save_volume(const PoseVolume& v, const std::filesystem::path& path);
PoseVolume load_volume(std::istream& is);
PoseVolume load_volume(const std::filesystem::path& path);

}  // namespace planloc
