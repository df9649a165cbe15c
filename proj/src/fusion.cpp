#include "planloc/fusion.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <limits>
#include <sstream>

#include "planloc/error.hpp"
#include "planloc/infer.hpp"
#include "planloc/parallel.hpp"

namespace planloc {

namespace {

void normalize(PoseVolume& P, const char* op) {
    double total = P.sum();
    if (!(total > 0.0) || !std::isfinite(total)) throw DegenerateError(std::string(op) + ": volume has no mass");
    for (double& v : P.values()) v /= total;
    P.set_kind(VolumeKind::Probability);
}

std::vector<double> gaussian_kernel(double sigma_cells) {
    const int r = static_cast<int>(std::ceil(3.0 * sigma_cells));
    std::vector<double> k(2 * r + 1);
    for (int i = -r; i <= r; ++i) k[i + r] = std::exp(-0.5 * (i * i) / (sigma_cells * sigma_cells));
    return k;
}

}  // namespace

PoseVolume warp_volume(const PoseVolume& P, const Pose2& rel, int threads) {
    P.require_probability("warp_volume");
    PoseVolume out(P.spec(), P.rotations(), VolumeKind::Probability);
    const int W = P.width();
    const int H = P.height();
    parallel_for(P.rotations(), threads, [&](int, int k) {
        for (int i = 0; i < H; ++i) {
            for (int j = 0; j < W; ++j) {
                const auto v = interpolate(P, compose(P.pose(i, j, k), rel));
                out.at(k, i, j) = std::max(v.value_or(0.0), kProbabilityFloor);
            }
        }
    });
    normalize(out, "warp_volume");
    return out;
}

PoseVolume fuse_views(const std::vector<PoseVolume>& volumes, const std::vector<Pose2>& rels, int threads) {
    if (volumes.empty()) throw DomainError("fuse_views needs at least one volume");
    if (volumes.size() != rels.size()) throw DomainError("fuse_views needs one relative pose per volume");
    for (const auto& v : volumes) {
        v.require_probability("fuse_views");
        if (!v.same_shape(volumes.front())) throw DomainError("fuse_views needs volumes of equal shape");
    }
    std::vector<PoseVolume> warped(volumes.size());
    parallel_for(int(volumes.size()), threads, [&](int, int i) {
        if (rels[i] == Pose2::identity()) {
            warped[i] = volumes[i];
            for (double& v : warped[i].values()) v = std::max(v, kProbabilityFloor);
        } else {
            warped[i] = warp_volume(volumes[i], rels[i]);
        }
    });
    PoseVolume out(volumes.front().spec(), volumes.front().rotations(), VolumeKind::Probability);
    auto& acc = out.values();
    for (const auto& w : warped) {
        for (std::size_t q = 0; q < acc.size(); ++q) acc[q] += std::log(w.values()[q]);
    }
    const double mx = *std::max_element(acc.begin(), acc.end());
    for (double& v : acc) v = std::exp(v - mx);
    normalize(out, "fuse_views");
    return out;
}

PoseVolume blur_volume(const PoseVolume& P, const MotionNoise& noise) {
    if (!(noise.sigma_xy >= 0.0) || !(noise.sigma_theta >= 0.0)) throw DomainError("motion noise must be >= 0");
    PoseVolume cur = P;
    const int W = P.width();
    const int H = P.height();
    const int K = P.rotations();
    std::vector<double> line;
    auto pass = [&](int n, int count, const std::vector<double>& ker, bool circular, auto&& index) {
        const int r = int(ker.size()) / 2;
        line.resize(n);
        for (int c = 0; c < count; ++c) {
            for (int t = 0; t < n; ++t) line[t] = cur.values()[index(c, t)];
            for (int t = 0; t < n; ++t) {
                double acc = 0.0, wsum = 0.0;
                for (int o = -r; o <= r; ++o) {
                    int s = t + o;
                    if (circular) {
                        s = ((s % n) + n) % n;
                    } else if (s < 0 || s >= n) {
                        continue;
                    }
                    acc += ker[o + r] * line[s];
                    wsum += ker[o + r];
                }
                cur.values()[index(c, t)] = acc / wsum;
            }
        }
    };
    if (noise.sigma_xy > 0.0) {
        const auto ker = gaussian_kernel(noise.sigma_xy / P.spec().delta());
        pass(W, K * H, ker, false, [&](int c, int t) { return std::size_t(c) * W + t; });
        pass(H, K * W, ker, false, [&](int c, int t) {
            return (std::size_t(c / W) * H + t) * W + c % W;
        });
    }
    if (noise.sigma_theta > 0.0 && K > 1) {
        const auto ker = gaussian_kernel(noise.sigma_theta / P.bin_width());
        pass(K, W * H, ker, true, [&](int c, int t) { return std::size_t(t) * W * H + c; });
    }
    normalize(cur, "blur_volume");
    return cur;
}

PoseVolume markov_step(const PoseVolume& prev, const Pose2& odometry, const MotionNoise& noise,
                       const PoseVolume& measurement, int threads) {
    prev.require_probability("markov_step");
    measurement.require_probability("markov_step");
    if (!prev.same_shape(measurement)) throw DomainError("markov_step needs volumes of equal shape");
    PoseVolume pred = odometry == Pose2::identity() ? prev : warp_volume(prev, inverse(odometry), threads);
    pred = blur_volume(pred, noise);
    for (std::size_t q = 0; q < pred.size(); ++q) pred.values()[q] *= measurement.values()[q];
    normalize(pred, "markov_step");
    return pred;
}

std::vector<TrajectoryFrame> parse_trajectory(const std::string& text, const std::filesystem::path& base) {
    std::vector<TrajectoryFrame> frames;
    std::istringstream in(text);
    std::string line;
    int lineno = 0;
    while (std::getline(in, line)) {
        ++lineno;
        auto hash = line.find('#');
        if (hash != std::string::npos) line.erase(hash);
        std::istringstream ls(line);
        TrajectoryFrame f;
        double dx, dy, dt;
        std::string path;
        if (!(ls >> f.id)) continue;
        if (!(ls >> dx >> dy >> dt >> path)) {
            throw ConfigError("trajectory line " + std::to_string(lineno) + ": expected 'frame_id dx dy dtheta path'");
        }
        std::string extra;
        if (ls >> extra) throw ConfigError("trajectory line " + std::to_string(lineno) + ": trailing fields");
        f.odometry = Pose2(dx, dy, dt);
        f.volume = std::filesystem::path(path).is_absolute() ? std::filesystem::path(path) : base / path;
        frames.push_back(std::move(f));
    }
    if (frames.empty()) throw ConfigError("trajectory has no frames");
    return frames;
}

std::vector<TrajectoryFrame> load_trajectory(const std::filesystem::path& path) {
    std::ifstream in(path);
    if (!in) throw Error("cannot open '" + path.string() + "'");
    std::stringstream ss;
    ss << in.rdbuf();
    return parse_trajectory(ss.str(), path.parent_path());
}

std::vector<Pose2> relative_to_last(const std::vector<TrajectoryFrame>& frames) {
    std::vector<Pose2> rels(frames.size());
    for (std::size_t j = frames.size() - 1; j-- > 0;) rels[j] = compose(rels[j + 1], inverse(frames[j + 1].odometry));
    return rels;
}

PoseVolume fuse_trajectory(const std::vector<TrajectoryFrame>& frames, FusionMode mode, const MotionNoise& noise,
                           int threads) {
    if (frames.empty()) throw DomainError("trajectory has no frames");
    if (mode == FusionMode::Joint) {
        std::vector<PoseVolume> vols;
        for (const auto& f : frames) vols.push_back(load_volume(f.volume));
        return fuse_views(vols, relative_to_last(frames), threads);
    }
    PoseVolume belief = load_volume(frames.front().volume);
    belief.require_probability("fuse_trajectory");
    for (std::size_t i = 1; i < frames.size(); ++i) {
        belief = markov_step(belief, frames[i].odometry, noise, load_volume(frames[i].volume), threads);
    }
    return belief;
}

}  // namespace planloc
