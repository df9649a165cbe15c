#include <doctest.h>

#include <json.hpp>

#include <cmath>
#include <numbers>

#include "planloc/error.hpp"
#include "planloc/eval.hpp"
#include "planloc/synth.hpp"

using namespace planloc;
using nlohmann::json;

namespace {
constexpr double kPi = std::numbers::pi;
}

TEST_CASE("pose errors decompose along the ground-truth heading") {
    auto e = pose_errors(Pose2(3.0, 4.0, 0.1), Pose2(0.0, 0.0, 0.0));
    CHECK(e.position == doctest::Approx(5.0));
    CHECK(e.longitudinal == doctest::Approx(3.0));
    CHECK(e.lateral == doctest::Approx(4.0));
    CHECK(e.orientation == doctest::Approx(0.1 * 180.0 / kPi));
    e = pose_errors(Pose2(1.0, 2.0, -kPi + 0.05), Pose2(1.0, 0.0, kPi / 2));
    CHECK(e.longitudinal == doctest::Approx(2.0));
    CHECK(e.lateral == doctest::Approx(0.0).epsilon(1e-12));
    CHECK(e.orientation == doctest::Approx(90.0 + 0.05 * 180.0 / kPi));
    CHECK(pose_errors(Pose2(0, 0, 3.1), Pose2(0, 0, -3.1)).orientation == doctest::Approx((2 * kPi - 6.2) * 180.0 / kPi));
    Rng rng(4);
    for (int t = 0; t < 100; ++t) {
        Pose2 a(rng.uniform(-9, 9), rng.uniform(-9, 9), rng.uniform(-3, 3));
        Pose2 b(rng.uniform(-9, 9), rng.uniform(-9, 9), rng.uniform(-3, 3));
        auto r = pose_errors(a, b);
        CHECK(std::hypot(r.lateral, r.longitudinal) == doctest::Approx(r.position));
        CHECK(r.orientation <= 180.0);
    }
}

TEST_CASE("recall counts thresholds inclusively") {
    std::vector<PoseErrors> errs;
    for (double p : {0.5, 1.0, 2.0, 4.0}) errs.push_back({p, p, p / 2, p});
    auto t = recall_table(errs);
    CHECK(t.position == std::vector<double>{50.0, 75.0, 100.0});
    CHECK(t.lateral == std::vector<double>{75.0, 100.0, 100.0});
    CHECK(t.longitudinal == t.position);
    CHECK(t.orientation == std::vector<double>{50.0, 75.0, 100.0});
    t = recall_table(errs, {0.25}, {10.0});
    CHECK(t.position == std::vector<double>{0.0});
    CHECK(t.orientation == std::vector<double>{100.0});
    CHECK_THROWS_AS(recall_table({}), DomainError);
}

TEST_CASE("json records") {
    TrialRecord r{"view_3", 42, Pose2(1, 2, 0.5), Pose2(1.5, 2, 0.5), pose_errors(Pose2(1.5, 2, 0.5), Pose2(1, 2, 0.5))};
    auto j = json::parse(trial_json(r));
    CHECK(j["type"] == "trial");
    CHECK(j["id"] == "view_3");
    CHECK(j["seed"] == 42);
    CHECK(j["gt"][1] == 2.0);
    CHECK(j["position_m"].get<double>() == doctest::Approx(0.5));
    std::vector<PoseErrors> errs{r.errors};
    auto s = json::parse(summary_json(recall_table(errs), 1));
    CHECK(s["type"] == "summary");
    CHECK(s["trials"] == 1);
    CHECK(s["recall_position"][0] == 100.0);
    CHECK(s["angle_thresholds_deg"].size() == 3);
}

TEST_CASE("end-to-end localization on a synthetic world") {
    auto map = encode_analytic(gen_world(21, WorldSpec{}).raster, ClassTable::builtin());
    Rng rng(5);
    const Pose2 gt = random_grid_pose(map, 16, 16.0, rng);
    auto bev = render_observation(map, gt, {}, {}, 1);
    LocalizeOptions opt;
    opt.score.rotations = 16;
    opt.prior = PriorDisk{gt.translation(), 10.0};
    auto loc = localize(map, bev, opt);
    CHECK(loc.posterior.sum() == doctest::Approx(1.0).epsilon(1e-9));
    CHECK(pose_errors(loc.estimate.pose, gt).position <= 0.5);
    CHECK(pose_errors(loc.estimate.pose, gt).orientation <= 360.0 / 16);
    REQUIRE(loc.covariance);
    CHECK((*loc.covariance)[0][0] >= 0.0);
    CHECK(loc.modes.size() <= 3);
    CHECK(loc.modes.front().probability == loc.estimate.probability);
    auto j = json::parse(localization_json(loc));
    CHECK(j["pose"].size() == 3);
    CHECK(j["covariance"].size() == 3);
    CHECK(j["modes"].size() == loc.modes.size());
}
