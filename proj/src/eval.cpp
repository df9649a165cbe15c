#include "planloc/eval.hpp"

#include <cmath>
#include <numbers>

#include <json.hpp>

#include "planloc/error.hpp"

namespace planloc {

namespace {

using nlohmann::json;

json pose_json(const Pose2& p) { return json::array({p.x(), p.y(), p.theta()}); }

std::vector<double> recall(const std::vector<double>& values, const std::vector<double>& thresholds) {
    std::vector<double> out;
    for (double t : thresholds) {
        std::size_t hits = 0;
        for (double v : values) hits += v <= t;
        out.push_back(100.0 * double(hits) / double(values.size()));
    }
    return out;
}

}  // namespace

PoseErrors pose_errors(const Pose2& est, const Pose2& gt) {
    const Vec2 e = est.translation() - gt.translation();
    PoseErrors r;
    r.position = norm(e);
    r.orientation = std::abs(normalize_angle(est.theta() - gt.theta())) * 180.0 / std::numbers::pi;
    r.longitudinal = std::abs(dot(e, forward(gt.theta())));
    r.lateral = std::abs(dot(e, right(gt.theta())));
    return r;
}

RecallTable recall_table(const std::vector<PoseErrors>& errors, const std::vector<double>& pos_thresholds,
                         const std::vector<double>& ang_thresholds) {
    if (errors.empty()) throw DomainError("recall needs at least one error record");
    RecallTable t;
    t.position_thresholds = pos_thresholds;
    t.angle_thresholds = ang_thresholds;
    std::vector<double> pos, lat, lon, ang;
    for (const auto& e : errors) {
        pos.push_back(e.position);
        lat.push_back(e.lateral);
        lon.push_back(e.longitudinal);
        ang.push_back(e.orientation);
    }
    t.position = recall(pos, pos_thresholds);
    t.lateral = recall(lat, pos_thresholds);
    t.longitudinal = recall(lon, pos_thresholds);
    t.orientation = recall(ang, ang_thresholds);
    return t;
}

Localization localize(const NeuralMap& map, const BevGrid& bev, const LocalizeOptions& options) {
    Localization out;
    out.posterior = pose_posterior(score_volume(map, bev, options.score), map.omega, options.prior);
    out.estimate = argmax_pose(out.posterior);
    try {
        out.covariance = covariance(out.posterior, out.estimate.pose, options.window);
    } catch (const DegenerateError&) {
        out.covariance.reset();
    }
    out.modes = local_modes(out.posterior, options.top_modes, options.mode_separation);
    return out;
}

std::string trial_json(const TrialRecord& t) {
    json j = {{"type", "trial"},
              {"id", t.id},
              {"seed", t.seed},
              {"gt", pose_json(t.gt)},
              {"est", pose_json(t.est)},
              {"position_m", t.errors.position},
              {"orientation_deg", t.errors.orientation},
              {"lateral_m", t.errors.lateral},
              {"longitudinal_m", t.errors.longitudinal}};
    return j.dump();
}

std::string summary_json(const RecallTable& table, std::size_t trials) {
    json j = {{"type", "summary"},
              {"trials", trials},
              {"position_thresholds_m", table.position_thresholds},
              {"angle_thresholds_deg", table.angle_thresholds},
              {"recall_position", table.position},
              {"recall_lateral", table.lateral},
              {"recall_longitudinal", table.longitudinal},
              {"recall_orientation", table.orientation}};
    return j.dump();
}

std::string localization_json(const Localization& loc) {
    json j = {{"pose", pose_json(loc.estimate.pose)}, {"probability", loc.estimate.probability}};
    if (loc.covariance) {
        json c = json::array();
        for (const auto& row : *loc.covariance) c.push_back(json(row));
        j["covariance"] = c;
    } else {
        j["covariance"] = nullptr;
    }
    json modes = json::array();
    for (const auto& m : loc.modes) modes.push_back({{"pose", pose_json(m.pose)}, {"probability", m.probability}});
    j["modes"] = modes;
    return j.dump();
}

}  // namespace planloc
