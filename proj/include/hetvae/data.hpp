#pragma once

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <fstream>
#include <limits>
#include <numeric>
#include <string>
#include <utility>
#include <vector>

#include <json.hpp>

#include "hetvae/errors.hpp"
#include "hetvae/rng.hpp"

namespace hetvae {

struct Channel {
    std::vector<double> t;
    std::vector<double> x;
};

// One data case: per-dimension observation times and values. Times are kept
// sorted strictly ascending within a channel; channels may be empty.
struct IrregularSeries {
    std::string id;
    std::vector<Channel> channels;

    std::size_t total_observations() const {
        std::size_t n = 0;
        for (const auto& c : channels) n += c.t.size();
        return n;
    }
};

using Dataset = std::vector<IrregularSeries>;

// ---- synthetic benchmark ----

struct SyntheticConfig {
    std::size_t n_trajectories = 2000;
    std::size_t n_points = 50;
    std::size_t n_anchors = 10;
    double bandwidth = 120.0;
    double noise_std = 0.1;
    std::size_t min_obs = 3;
    std::size_t max_obs = 10;
    std::uint64_t seed = 0;
};

// Normalized RBF-weighted combination of anchor values at anchors
// r_k = k/n_anchors (k = 1..n); the weights form a convex combination, so the
// result lies in the hull of the anchor values.
inline double rbf_smooth(double t, const std::vector<double>& anchors, double bandwidth) {
    double num = 0.0, den = 0.0;
    for (std::size_t k = 0; k < anchors.size(); ++k) {
        const double rk = static_cast<double>(k + 1) / static_cast<double>(anchors.size());
        const double w = std::exp(-bandwidth * (t - rk) * (t - rk));
        num += w * anchors[k];
        den += w;
    }
    return num / den;
}

// Dense univariate trajectories: standard-normal anchor draws smoothed over
// the grid t_i = i/n_points (i = 1..n_points) plus observation noise.
inline Dataset generate_synthetic(const SyntheticConfig& cfg) {
    if (cfg.min_obs > cfg.max_obs || cfg.max_obs > cfg.n_points)
        throw config_error("generate_synthetic: need min_obs <= max_obs <= n_points");
    Dataset out;
    out.reserve(cfg.n_trajectories);
    Rng master = Rng(cfg.seed).split(1);  // namespaced: subsampling uses split(2)
    for (std::size_t n = 0; n < cfg.n_trajectories; ++n) {
        Rng rng = master.split(n);
        std::vector<double> anchors(cfg.n_anchors);
        for (auto& z : anchors) z = rng.normal();
        IrregularSeries s;
        s.id = "syn" + std::to_string(n);
        Channel c;
        c.t.resize(cfg.n_points);
        c.x.resize(cfg.n_points);
        for (std::size_t i = 0; i < cfg.n_points; ++i) {
            const double ti = static_cast<double>(i + 1) / static_cast<double>(cfg.n_points);
            c.t[i] = ti;
            c.x[i] = rbf_smooth(ti, anchors, cfg.bandwidth) + cfg.noise_std * rng.normal();
        }
        s.channels.push_back(std::move(c));
        out.push_back(std::move(s));
    }
    return out;
}

// Pick m ~ U[min_obs, max_obs] observations without replacement from a dense
// trajectory; times stay sorted because indices are.
inline IrregularSeries subsample(const IrregularSeries& dense, std::size_t min_obs,
                                 std::size_t max_obs, Rng& rng) {
    IrregularSeries out;
    out.id = dense.id;
    for (const auto& c : dense.channels) {
        if (max_obs > c.t.size())
            throw data_error("subsample: max_obs exceeds available points in case " + dense.id);
        const std::size_t m = min_obs + rng.uniform_int(max_obs - min_obs + 1);
        auto idx = rng.sample_without_replacement(c.t.size(), m);
        Channel sub;
        for (std::size_t i : idx) {
            sub.t.push_back(c.t[i]);
            sub.x.push_back(c.x[i]);
        }
        out.channels.push_back(std::move(sub));
    }
    return out;
}

// ---- preprocessing ----

// Per-dimension z-transform statistics with nearest-rank outlier trimming,
// plus the time range used to rescale onto [0,1]. Trimming only affects the
// statistics; no observation is dropped by apply().
struct Normalizer {
    std::vector<double> mean, stdev;
    double trim = 0.001;
    double t_min = 0.0, t_max = 1.0;

    double norm_value(double x, std::size_t d) const { return (x - mean[d]) / stdev[d]; }
    double denorm_value(double z, std::size_t d) const { return z * stdev[d] + mean[d]; }
    double norm_time(double t) const { return (t - t_min) / (t_max - t_min); }
    double denorm_time(double u) const { return t_min + u * (t_max - t_min); }
};

inline Normalizer fit_normalizer(const Dataset& split, double trim = 0.001) {
    if (split.empty()) throw data_error("fit_normalizer: empty split");
    const std::size_t dims = split[0].channels.size();
    Normalizer nz;
    nz.trim = trim;
    nz.t_min = std::numeric_limits<double>::infinity();
    nz.t_max = -std::numeric_limits<double>::infinity();
    for (std::size_t d = 0; d < dims; ++d) {
        std::vector<double> vals;
        for (const auto& s : split) {
            const auto& c = s.channels.at(d);
            vals.insert(vals.end(), c.x.begin(), c.x.end());
            for (double t : c.t) {
                nz.t_min = std::min(nz.t_min, t);
                nz.t_max = std::max(nz.t_max, t);
            }
        }
        if (vals.empty())
            throw data_error("fit_normalizer: no observations on dimension " + std::to_string(d));
        std::sort(vals.begin(), vals.end());
        // nearest-rank trim: drop floor(trim*n) values from each end
        const std::size_t k = static_cast<std::size_t>(
            std::floor(trim * static_cast<double>(vals.size())));
        const std::size_t lo = k, hi = vals.size() - k;
        double sum = 0.0;
        for (std::size_t i = lo; i < hi; ++i) sum += vals[i];
        const double mean = sum / static_cast<double>(hi - lo);
        double ss = 0.0;
        for (std::size_t i = lo; i < hi; ++i) ss += (vals[i] - mean) * (vals[i] - mean);
        double sd = std::sqrt(ss / static_cast<double>(hi - lo));
        if (sd < 1e-6) sd = 1e-6;
        nz.mean.push_back(mean);
        nz.stdev.push_back(sd);
    }
    if (!(nz.t_max > nz.t_min)) nz.t_max = nz.t_min + 1.0;  // degenerate single-time split
    return nz;
}

inline Dataset apply_normalizer(const Dataset& data, const Normalizer& nz) {
    Dataset out = data;
    for (auto& s : out) {
        for (std::size_t d = 0; d < s.channels.size(); ++d) {
            for (auto& t : s.channels[d].t) t = nz.norm_time(t);
            for (auto& x : s.channels[d].x) x = nz.norm_value(x, d);
        }
    }
    return out;
}

// ---- conditioning / target protocol ----

// Pool all observed (channel, index) pairs, move ceil(fraction*total) of them
// (at least one) into the conditioning series, the rest into the target.
// The union of the two outputs reconstructs the input exactly.
inline std::pair<IrregularSeries, IrregularSeries> split_condition_target(
    const IrregularSeries& s, double fraction, Rng& rng) {
    if (!(fraction > 0.0 && fraction < 1.0))
        throw config_error("split_condition_target: fraction must be in (0,1)");
    std::vector<std::pair<std::size_t, std::size_t>> pool;
    for (std::size_t d = 0; d < s.channels.size(); ++d)
        for (std::size_t i = 0; i < s.channels[d].t.size(); ++i) pool.emplace_back(d, i);
    if (pool.empty()) throw data_error("split_condition_target: series " + s.id + " is empty");
    const std::size_t m = std::max<std::size_t>(
        1, static_cast<std::size_t>(
               std::ceil(fraction * static_cast<double>(pool.size()))));
    rng.shuffle(pool);
    std::vector<std::vector<bool>> cond_mask(s.channels.size());
    for (std::size_t d = 0; d < s.channels.size(); ++d)
        cond_mask[d].assign(s.channels[d].t.size(), false);
    for (std::size_t j = 0; j < m && j < pool.size(); ++j)
        cond_mask[pool[j].first][pool[j].second] = true;
    IrregularSeries cond, target;
    cond.id = s.id;
    target.id = s.id;
    for (std::size_t d = 0; d < s.channels.size(); ++d) {
        Channel cc, tc;
        for (std::size_t i = 0; i < s.channels[d].t.size(); ++i) {
            auto& dst = cond_mask[d][i] ? cc : tc;
            dst.t.push_back(s.channels[d].t[i]);
            dst.x.push_back(s.channels[d].x[i]);
        }
        cond.channels.push_back(std::move(cc));
        target.channels.push_back(std::move(tc));
    }
    return {std::move(cond), std::move(target)};
}

inline std::pair<IrregularSeries, IrregularSeries> split_condition_target(
    const IrregularSeries& s, double fraction, std::uint64_t seed) {
    Rng rng(seed);
    return split_condition_target(s, fraction, rng);
}

// Sorted deduplicated observation times per dimension over a split.
inline std::vector<std::vector<double>> union_times(const Dataset& split) {
    if (split.empty()) return {};
    std::vector<std::vector<double>> u(split[0].channels.size());
    for (const auto& s : split)
        for (std::size_t d = 0; d < s.channels.size(); ++d)
            u[d].insert(u[d].end(), s.channels[d].t.begin(), s.channels[d].t.end());
    for (auto& v : u) {
        std::sort(v.begin(), v.end());
        v.erase(std::unique(v.begin(), v.end()), v.end());
    }
    return u;
}

// ---- train/val/test split ----

// Boundary flooring on the shuffled id sequence: train = floor(0.64*n),
// train+val = floor(0.80*n), test = the rest.  (80/20 split with 20% of the
// training portion held out for validation.)
struct SplitIndices {
    std::vector<std::size_t> train, val, test;
};

inline SplitIndices split_dataset_indices(std::size_t n, std::uint64_t seed) {
    std::vector<std::size_t> idx(n);
    std::iota(idx.begin(), idx.end(), 0);
    Rng rng(seed);
    rng.shuffle(idx);
    const auto n_train = static_cast<std::size_t>(std::floor(0.64 * static_cast<double>(n)));
    const auto n_trval = static_cast<std::size_t>(std::floor(0.80 * static_cast<double>(n)));
    SplitIndices s;
    s.train.assign(idx.begin(), idx.begin() + n_train);
    s.val.assign(idx.begin() + n_train, idx.begin() + n_trval);
    s.test.assign(idx.begin() + n_trval, idx.end());
    return s;
}

// ---- persistence ----

// JSONL, one case per line: {"id": "...", "channels": [{"t": [...], "x": [...]}]}
inline void write_dataset(const Dataset& data, const std::string& path) {
    std::ofstream os(path);
    if (!os) throw data_error("write_dataset: cannot open " + path);
    for (const auto& s : data) {
        nlohmann::json j;
        j["id"] = s.id;
        auto& chs = j["channels"] = nlohmann::json::array();
        for (const auto& c : s.channels) chs.push_back({{"t", c.t}, {"x", c.x}});
        os << j.dump() << '\n';
    }
}

inline Dataset read_dataset(const std::string& path) {
    std::ifstream is(path);
    if (!is) throw data_error("read_dataset: cannot open " + path);
    Dataset out;
    std::string line;
    std::size_t lineno = 0;
    while (std::getline(is, line)) {
        ++lineno;
        if (line.empty()) continue;
        nlohmann::json j;
        try {
            j = nlohmann::json::parse(line);
        } catch (const nlohmann::json::exception& e) {
            throw data_error("read_dataset: " + path + ":" + std::to_string(lineno) + ": " +
                             e.what());
        }
        IrregularSeries s;
        try {
            s.id = j.at("id").get<std::string>();
            for (const auto& jc : j.at("channels")) {
                Channel c;
                c.t = jc.at("t").get<std::vector<double>>();
                c.x = jc.at("x").get<std::vector<double>>();
                s.channels.push_back(std::move(c));
            }
        } catch (const nlohmann::json::exception& e) {
            throw data_error("read_dataset: " + path + ":" + std::to_string(lineno) + ": " +
                             e.what());
        }
        for (const auto& c : s.channels) {
            if (c.t.size() != c.x.size())
                throw data_error("read_dataset: " + path + ":" + std::to_string(lineno) +
                                 ": t/x length mismatch");
            for (std::size_t i = 1; i < c.t.size(); ++i)
                if (!(c.t[i] > c.t[i - 1]))
                    throw data_error("read_dataset: " + path + ":" + std::to_string(lineno) +
                                     ": times not strictly ascending");
        }
        out.push_back(std::move(s));
    }
    return out;
}

inline nlohmann::json normalizer_to_json(const Normalizer& nz) {
    return {{"mean", nz.mean}, {"std", nz.stdev}, {"trim", nz.trim},
            {"t_min", nz.t_min}, {"t_max", nz.t_max}};
}

inline Normalizer normalizer_from_json(const nlohmann::json& j) {
    Normalizer nz;
    nz.mean = j.at("mean").get<std::vector<double>>();
    nz.stdev = j.at("std").get<std::vector<double>>();
    nz.trim = j.at("trim").get<double>();
    nz.t_min = j.at("t_min").get<double>();
    nz.t_max = j.at("t_max").get<double>();
    return nz;
}

}  // namespace hetvae
