#include "planloc/infer.hpp"

#include <algorithm>
#include <cmath>
#include <limits>

#include "planloc/error.hpp"

namespace planloc {

namespace {

constexpr double kEdgeTolerance = 1e-9;

double log_floor(double p) { return std::log(std::max(p, 1e-300)); }

// Vertex offset of the parabola through (-1, lm), (0, l0), (1, lp).
double quadratic_offset(double lm, double l0, double lp) {
    const double denom = lm - 2.0 * l0 + lp;
    if (!(denom < 0.0)) return 0.0;
    return std::clamp(0.5 * (lm - lp) / denom, -0.5, 0.5);
}

}  // namespace

BinIndex max_bin(const PoseVolume& P) {
    const int W = P.width();
    const int H = P.height();
    const int K = P.rotations();
    BinIndex best{0, 0, 0};
    double bv = -std::numeric_limits<double>::infinity();
    bool found = false;
    for (int i = 0; i < H; ++i) {
        for (int j = 0; j < W; ++j) {
            for (int k = 0; k < K; ++k) {
                const double v = P.at(k, i, j);
                if (!found || v > bv) {
                    bv = v;
                    best = {i, j, k};
                    found = true;
                }
            }
        }
    }
    return best;
}

PoseEstimate argmax_pose(const PoseVolume& P) {
    P.require_probability("argmax_pose");
    const auto b = max_bin(P);
    const int W = P.width();
    const int H = P.height();
    const int K = P.rotations();
    const double l0 = log_floor(P.at(b.k, b.row, b.col));
    double dx = 0.0, dy = 0.0, dt = 0.0;
    if (b.col > 0 && b.col + 1 < W) {
        dx = quadratic_offset(log_floor(P.at(b.k, b.row, b.col - 1)), l0, log_floor(P.at(b.k, b.row, b.col + 1)));
    }
    if (b.row > 0 && b.row + 1 < H) {
        dy = quadratic_offset(log_floor(P.at(b.k, b.row - 1, b.col)), l0, log_floor(P.at(b.k, b.row + 1, b.col)));
    }
    if (K >= 3) {
        dt = quadratic_offset(log_floor(P.at((b.k + K - 1) % K, b.row, b.col)), l0,
                              log_floor(P.at((b.k + 1) % K, b.row, b.col)));
    }
    const Vec2 c = P.spec().cell_center(b.row, b.col);
    const double d = P.spec().delta();
    return {Pose2(c.x + dx * d, c.y + dy * d, P.theta(b.k) + dt * P.bin_width()), P.at(b.k, b.row, b.col)};
}

Matrix3 covariance(const PoseVolume& P, const Pose2& mode, const CovarianceWindow& window) {
    P.require_probability("covariance");
    if (!(window.meters >= 0.0) || !(window.radians >= 0.0)) throw DomainError("covariance window must be >= 0");
    const auto& spec = P.spec();
    const double d = spec.delta();
    const Vec2 ci = spec.continuous_index(mode.translation());
    const int r = static_cast<int>(std::ceil(window.meters / d)) + 1;
    const int col_lo = std::max(0, static_cast<int>(std::floor(ci.x)) - r);
    const int col_hi = std::min(P.width() - 1, static_cast<int>(std::ceil(ci.x)) + r);
    const int row_lo = std::max(0, static_cast<int>(std::floor(ci.y)) - r);
    const int row_hi = std::min(P.height() - 1, static_cast<int>(std::ceil(ci.y)) + r);
    double mass = 0.0;
    Matrix3 m{};
    for (int k = 0; k < P.rotations(); ++k) {
        const double e2 = normalize_angle(P.theta(k) - mode.theta());
        if (std::abs(e2) > window.radians) continue;
        for (int i = row_lo; i <= row_hi; ++i) {
            for (int j = col_lo; j <= col_hi; ++j) {
                const Vec2 c = spec.cell_center(i, j);
                const double e0 = c.x - mode.x();
                const double e1 = c.y - mode.y();
                if (std::abs(e0) > window.meters || std::abs(e1) > window.meters) continue;
                const double p = P.at(k, i, j);
                if (p == 0.0) continue;
                const double e[3] = {e0, e1, e2};
                mass += p;
                for (int a = 0; a < 3; ++a) {
                    for (int bb = a; bb < 3; ++bb) m[a][bb] += p * e[a] * e[bb];
                }
            }
        }
    }
    if (!(mass > 0.0)) throw DegenerateError("no probability mass inside the covariance window");
    for (int a = 0; a < 3; ++a) {
        for (int bb = a; bb < 3; ++bb) {
            m[a][bb] /= mass;
            m[bb][a] = m[a][bb];
        }
    }
    return m;
}

std::vector<PoseEstimate> local_modes(const PoseVolume& P, int top_k, const Separation& sep) {
    P.require_probability("local_modes");
    std::vector<PoseEstimate> out;
    if (top_k <= 0) return out;
    const int W = P.width();
    const int H = P.height();
    const int K = P.rotations();
    const double d = P.spec().delta();
    std::vector<std::uint8_t> suppressed(P.size(), 0);
    const int rc = static_cast<int>(std::floor(sep.meters / d + 1e-9));
    while (int(out.size()) < top_k) {
        double bv = 0.0;
        BinIndex best{-1, -1, -1};
        for (int i = 0; i < H; ++i) {
            for (int j = 0; j < W; ++j) {
                for (int k = 0; k < K; ++k) {
                    const std::size_t idx = P.index(k, i, j);
                    if (!suppressed[idx] && P.values()[idx] > bv) {
                        bv = P.values()[idx];
                        best = {i, j, k};
                    }
                }
            }
        }
        if (best.k < 0) break;
        out.push_back({P.pose(best.row, best.col, best.k), bv});
        const Vec2 c0 = P.spec().cell_center(best.row, best.col);
        for (int i = std::max(0, best.row - rc); i <= std::min(H - 1, best.row + rc); ++i) {
            for (int j = std::max(0, best.col - rc); j <= std::min(W - 1, best.col + rc); ++j) {
                if (norm(P.spec().cell_center(i, j) - c0) > sep.meters + 1e-9 * d) continue;
                for (int k = 0; k < K; ++k) {
                    if (std::abs(normalize_angle(P.theta(k) - P.theta(best.k))) <= sep.radians + 1e-12) {
                        suppressed[P.index(k, i, j)] = 1;
                    }
                }
            }
        }
    }
    return out;
}

std::optional<double> interpolate(const PoseVolume& P, const Pose2& pose) {
    const int W = P.width();
    const int H = P.height();
    const int K = P.rotations();
    Vec2 ci = P.spec().continuous_index(pose.translation());
    if (!(ci.x >= -kEdgeTolerance && ci.x <= W - 1 + kEdgeTolerance && ci.y >= -kEdgeTolerance &&
          ci.y <= H - 1 + kEdgeTolerance)) {
        return std::nullopt;
    }
    const double x = std::clamp(ci.x, 0.0, double(W - 1));
    const double y = std::clamp(ci.y, 0.0, double(H - 1));
    const int x0 = std::min(static_cast<int>(std::floor(x)), W - 1);
    const int y0 = std::min(static_cast<int>(std::floor(y)), H - 1);
    const int x1 = std::min(x0 + 1, W - 1);
    const int y1 = std::min(y0 + 1, H - 1);
    const double ax = x - x0;
    const double ay = y - y0;
    const double t = P.theta_index(pose.theta());
    const int k0 = std::min(static_cast<int>(std::floor(t)), K - 1);
    const int k1 = (k0 + 1) % K;
    const double at = t - k0;
    auto bilerp = [&](int k) {
        return (1.0 - ay) * ((1.0 - ax) * P.at(k, y0, x0) + ax * P.at(k, y0, x1)) +
               ay * ((1.0 - ax) * P.at(k, y1, x0) + ax * P.at(k, y1, x1));
    };
    return (1.0 - at) * bilerp(k0) + at * bilerp(k1);
}

double nll_loss(const PoseVolume& P, const Pose2& gt) {
    P.require_probability("nll_loss");
    auto p = interpolate(P, gt);
    if (!p) throw DomainError("ground-truth pose lies outside the volume extent");
    return -std::log(std::max(*p, kProbabilityFloor));
}

}  // namespace planloc
