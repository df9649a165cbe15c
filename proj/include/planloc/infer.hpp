#pragma once

// Point estimates, uncertainty and the localization loss of a pose volume.

#include <array>
#include <optional>
#include <vector>

#include "planloc/geometry.hpp"
#include "planloc/matcher.hpp"

namespace planloc {

struct PoseEstimate {
    Pose2 pose;
    double probability = 0.0;
};

struct BinIndex {
    int row = 0;
    int col = 0;
    int k = 0;
};

// Max bin; ties go to the smallest (row, col, k).
BinIndex max_bin(const PoseVolume& P);

// Cell-center pose of the max bin refined by a 3-point quadratic fit of
// log P along x, y and theta (theta wraps). Each axis moves by at most half
// a bin; border bins are not refined along that axis.
PoseEstimate argmax_pose(const PoseVolume& P);

using Matrix3 = std::array<std::array<double, 3>, 3>;

struct CovarianceWindow {
    double meters = 2.0;
    double radians = 10.0 * 3.14159265358979323846 / 180.0;
};

// Probability-weighted second moment of (dx, dy, dtheta) about the mode
// over bins with |dx|, |dy| <= window.meters and |dtheta| <= window.radians,
// normalized by the window mass. Throws DegenerateError for zero mass.
Matrix3 covariance(const PoseVolume& P, const Pose2& mode, const CovarianceWindow& window = {});

struct Separation {
    double meters = 2.0;
    double radians = 3.14159265358979323846;
};

// Greedy non-maximum suppression: repeatedly take the largest remaining bin
// and suppress bins within `sep` of it (distance <= meters and heading
// difference <= radians), until top_k modes or no positive mass remains.
std::vector<PoseEstimate> local_modes(const PoseVolume& P, int top_k, const Separation& sep = {});

// Trilinear interpolation of P at a continuous pose, circular in theta.
// nullopt when the position lies outside the cell-center extent.
std::optional<double> interpolate(const PoseVolume& P, const Pose2& pose);

inline constexpr double kProbabilityFloor = 1e-12;

// -log(max(interpolate(P, gt), 1e-12)); DomainError when gt lies outside.
double nll_loss(const PoseVolume& P, const Pose2& gt);

}  // namespace planloc
