#pragma once

// Multi-view fusion of pose volumes and recursive Markov localization.

#include <filesystem>
#include <string>
#include <vector>

#include "planloc/geometry.hpp"
#include "planloc/matcher.hpp"

namespace planloc {

// out(xi) = P(xi (+) rel) by trilinear interpolation, floored at 1e-12
// (also outside P's extent), then renormalized.
PoseVolume warp_volume(const PoseVolume& P, const Pose2& rel, int threads = 1);

// Renormalized product of the views warped into the reference frame:
// view j is sampled at xi (+) rels[j]. Logs are summed in list order.
PoseVolume fuse_views(const std::vector<PoseVolume>& volumes, const std::vector<Pose2>& rels, int threads = 1);

struct MotionNoise {
    double sigma_xy = 0.5;
    double sigma_theta = 3.14159265358979323846 / 180.0;
};

// Separable Gaussian blur with kernels truncated at 3 sigma; edges use
// normalized convolution, theta is circular. Output is renormalized.
PoseVolume blur_volume(const PoseVolume& P, const MotionNoise& noise);

// predict = blur(warp(prev, inverse(odometry))), then the renormalized
// product with the measurement. Odometry is the current frame relative to
// the previous one, so the mode moves to compose(prev_mode, odometry).
PoseVolume markov_step(const PoseVolume& prev, const Pose2& odometry, const MotionNoise& noise,
                       const PoseVolume& measurement, int threads = 1);

// Trajectory file: one frame per line, "frame_id dx dy dtheta path", where
// (dx, dy, dtheta) is the frame's pose relative to the previous frame
// (ignored for the first) and path names its PLPV measurement volume,
// relative to the file's directory. Blank lines and '#' comments are
// skipped.
struct TrajectoryFrame {
    std::string id;
    Pose2 odometry;
    std::filesystem::path volume;
};

std::vector<TrajectoryFrame> parse_trajectory(const std::string& text, const std::filesystem::path& base = {});
std::vector<TrajectoryFrame> load_trajectory(const std::filesystem::path& path);

// Pose of every frame relative to the last one.
std::vector<Pose2> relative_to_last(const std::vector<TrajectoryFrame>& frames);

enum class FusionMode { Joint, Markov };

// Fuses a trajectory into a posterior over the last frame's pose.
PoseVolume fuse_trajectory(const std::vector<TrajectoryFrame>& frames, FusionMode mode, const MotionNoise& noise,
                           int threads = 1);

}  // namespace planloc
