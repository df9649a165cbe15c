#pragma once

// Localization error metrics, recall tables and the end-to-end localizer
// used by the evaluation harness.

#include <array>
#include <cstdint>
#include <iosfwd>
#include <optional>
#include <string>
#include <vector>

#include "planloc/bev.hpp"
#include "planloc/geometry.hpp"
#include "planloc/infer.hpp"
#include "planloc/matcher.hpp"

namespace planloc {

struct PoseErrors {
    double position = 0.0;     // meters
    double orientation = 0.0;  // degrees
    double lateral = 0.0;      // meters, along right(theta_gt)
    double longitudinal = 0.0; // meters, along forward(theta_gt)
};

PoseErrors pose_errors(const Pose2& est, const Pose2& gt);

struct RecallTable {
    std::vector<double> position_thresholds{1.0, 3.0, 5.0};
    std::vector<double> angle_thresholds{1.0, 3.0, 5.0};
    // Percentages, one per threshold.
    std::vector<double> position;
    std::vector<double> lateral;
    std::vector<double> longitudinal;
    std::vector<double> orientation;
};

// recall@X = percentage of errors <= X. Throws DomainError for an empty list.
RecallTable recall_table(const std::vector<PoseErrors>& errors, const std::vector<double>& pos_thresholds = {1, 3, 5},
                         const std::vector<double>& ang_thresholds = {1, 3, 5});

struct LocalizeOptions {
    ScoreOptions score;
    std::optional<PriorDisk> prior;
    int top_modes = 3;
    Separation mode_separation{};
    CovarianceWindow window{};
};

struct Localization {
    PoseVolume posterior;
    PoseEstimate estimate;
    std::optional<Matrix3> covariance;  // absent when the window holds no mass
    std::vector<PoseEstimate> modes;
};

// score_volume -> pose_posterior -> argmax, covariance and top modes.
Localization localize(const NeuralMap& map, const BevGrid& bev, const LocalizeOptions& options = {});

// One JSON object per line. Trial records:
//   {"type":"trial","id":...,"seed":...,"gt":[x,y,theta],"est":[x,y,theta],
//    "position_m":...,"orientation_deg":...,"lateral_m":...,"longitudinal_m":...}
// followed by one summary record:
//   {"type":"summary","trials":n,"position_thresholds_m":[...],
//    "angle_thresholds_deg":[...],"recall_position":[...],
//    "recall_lateral":[...],"recall_longitudinal":[...],"recall_orientation":[...]}
struct TrialRecord {
    std::string id;
    std::uint64_t seed = 0;
    Pose2 gt;
    Pose2 est;
    PoseErrors errors;
};

std::string trial_json(const TrialRecord& t);
std::string summary_json(const RecallTable& table, std::size_t trials);
std::string localization_json(const Localization& loc);

}  // namespace planloc
