#pragma once

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <cstdio>
#include <fstream>
#include <future>
#include <string>
#include <vector>

#include <json.hpp>

#include "hetvae/data.hpp"
#include "hetvae/errors.hpp"
#include "hetvae/model.hpp"
#include "hetvae/objective.hpp"
#include "hetvae/rng.hpp"

namespace hetvae {

namespace detail {

// Per-sample output parameters decoded for one conditioning series at a
// query grid.
struct SampleOutputs {
    std::vector<Array> mu;      // S arrays [Q, D]
    std::vector<Array> sigma2;  // S arrays [Q, D]
};

inline SampleOutputs decode_samples(const HetvaeModel& model, const IrregularSeries& cond,
                                    const std::vector<double>& query_times, std::size_t s_eval,
                                    Rng rng) {
    Tape t(&model.params());
    int h_enc = model.encode(t, cond);
    std::vector<Array> noise;
    if (model.config().prob_path) {
        for (std::size_t s = 0; s < s_eval; ++s) {
            Array n = Array::zeros({model.config().ref_points, model.config().latent_dim});
            for (auto& v : n.data) v = rng.normal();
            noise.push_back(std::move(n));
        }
    }
    LatentState latent = model.encode_latent(t, h_enc, noise);
    auto decoded = model.decode(t, latent.z_cat, query_times);
    SampleOutputs out;
    for (const auto& dn : decoded) {
        out.mu.push_back(t.value(dn.mu));
        out.sigma2.push_back(t.value(dn.sigma2));
    }
    return out;
}

// log(mean_s N(x; mu_s, sigma2_s)) via max-shifted log-sum-exp
inline double log_mixture_density(double x, const SampleOutputs& so, std::size_t row,
                                  std::size_t dim) {
    const std::size_t S = so.mu.size();
    double mx = -std::numeric_limits<double>::infinity();
    std::vector<double> lp(S);
    for (std::size_t s = 0; s < S; ++s) {
        lp[s] = gaussian_logpdf(x, so.mu[s].at(row, dim), so.sigma2[s].at(row, dim));
        mx = std::max(mx, lp[s]);
    }
    double acc = 0.0;
    for (std::size_t s = 0; s < S; ++s) acc += std::exp(lp[s] - mx);
    return mx + std::log(acc) - std::log(static_cast<double>(S));
}

struct CasePrediction {
    std::vector<double> target;    // observed target values
    std::vector<double> mix_mean;  // mixture mean at each target observation
    std::vector<double> log_mix;   // log mixture density at each target observation
};

inline CasePrediction predict_case(const HetvaeModel& model, const IrregularSeries& cond,
                                   const IrregularSeries& target, std::size_t s_eval, Rng rng) {
    const QueryIndex qi = build_query_index(target);
    if (qi.total == 0) return {};
    SampleOutputs so = decode_samples(model, cond, qi.times, s_eval, rng);
    const std::size_t S = so.mu.size();
    CasePrediction pred;
    for (std::size_t d = 0; d < qi.obs.size(); ++d) {
        for (const auto& [row, value] : qi.obs[d]) {
            double mean = 0.0;
            for (std::size_t s = 0; s < S; ++s) mean += so.mu[s].at(row, d);
            mean /= static_cast<double>(S);
            pred.target.push_back(value);
            pred.mix_mean.push_back(mean);
            pred.log_mix.push_back(log_mixture_density(value, so, row, d));
        }
    }
    return pred;
}

}  // namespace detail

// Negative mean log mixture density over the target observations.
inline double mixture_nll(const HetvaeModel& model, const IrregularSeries& cond,
                          const IrregularSeries& target, std::size_t s_eval, Rng rng) {
    if (s_eval == 0) throw config_error("mixture_nll: s_eval must be >= 1");
    auto pred = detail::predict_case(model, cond, target, s_eval, rng);
    if (pred.log_mix.empty()) throw data_error("mixture_nll: no target observations");
    double acc = 0.0;
    for (double lp : pred.log_mix) acc += lp;
    return -acc / static_cast<double>(pred.log_mix.size());
}

// mae = mean |x - mu|, mse = mean (x - mu)^2
inline std::pair<double, double> point_metrics(const std::vector<double>& predictions,
                                               const std::vector<double>& targets) {
    if (predictions.size() != targets.size())
        throw dim_error("point_metrics: length mismatch");
    if (predictions.empty()) throw data_error("point_metrics: empty inputs");
    double mae = 0.0, mse = 0.0;
    for (std::size_t i = 0; i < predictions.size(); ++i) {
        const double r = targets[i] - predictions[i];
        mae += std::abs(r);
        mse += r * r;
    }
    const double n = static_cast<double>(predictions.size());
    return {mae / n, mse / n};
}

struct EvalMetrics {
    double nll = 0.0, mae = 0.0, mse = 0.0;
    std::size_t n_targets = 0;
    std::size_t skipped_cases = 0;
};

// Condition on `fraction` of each test case's pooled observations, score the
// mixture over s_eval latent samples at the remaining points. Aggregates are
// observation-weighted means over the split; per-case work is independent so
// `jobs` only batches it, the reduction order is fixed by case index.
inline EvalMetrics evaluate(const HetvaeModel& model, const Dataset& test, double fraction,
                            std::size_t s_eval, std::uint64_t seed, std::size_t jobs = 1) {
    Rng master(seed);
    std::vector<detail::CasePrediction> preds(test.size());
    auto run_case = [&](std::size_t i) {
        const auto& s = test[i];
        if (s.total_observations() < 2) return;  // cannot split into both sides
        Rng case_rng = master.split(i);
        auto [cond, target] = split_condition_target(s, fraction, case_rng);
        if (target.total_observations() == 0) return;
        preds[i] = detail::predict_case(model, cond, target, s_eval, case_rng.split(1));
    };
    if (jobs <= 1) {
        for (std::size_t i = 0; i < test.size(); ++i) run_case(i);
    } else {
        std::vector<std::future<void>> futs;
        std::size_t next = 0;
        const std::size_t chunk = std::max<std::size_t>(1, test.size() / (jobs * 4));
        while (next < test.size()) {
            const std::size_t lo = next, hi = std::min(next + chunk, test.size());
            next = hi;
            futs.push_back(std::async(std::launch::async, [&, lo, hi] {
                for (std::size_t i = lo; i < hi; ++i) run_case(i);
            }));
            if (futs.size() >= jobs) {
                for (auto& f : futs) f.get();
                futs.clear();
            }
        }
        for (auto& f : futs) f.get();
    }
    EvalMetrics m;
    double nll_acc = 0.0, mae_acc = 0.0, mse_acc = 0.0;
    for (const auto& p : preds) {
        if (p.target.empty()) {
            ++m.skipped_cases;
            continue;
        }
        for (std::size_t i = 0; i < p.target.size(); ++i) {
            nll_acc -= p.log_mix[i];
            const double r = p.target[i] - p.mix_mean[i];
            mae_acc += std::abs(r);
            mse_acc += r * r;
        }
        m.n_targets += p.target.size();
    }
    if (m.n_targets == 0) throw data_error("evaluate: no scoreable target observations");
    m.nll = nll_acc / static_cast<double>(m.n_targets);
    m.mae = mae_acc / static_cast<double>(m.n_targets);
    m.mse = mse_acc / static_cast<double>(m.n_targets);
    return m;
}

struct EvalReport {
    double nll_mean = 0, nll_std = 0;
    double mae_mean = 0, mae_std = 0;
    double mse_mean = 0, mse_std = 0;
    std::size_t n_targets = 0;
    std::size_t skipped_cases = 0;
    double fraction = 0.5;
    std::size_t s_eval = 100;
    std::vector<std::uint64_t> seeds;
};

inline EvalReport evaluate_seeds(const HetvaeModel& model, const Dataset& test, double fraction,
                                 std::size_t s_eval, const std::vector<std::uint64_t>& seeds,
                                 std::size_t jobs = 1) {
    if (seeds.empty()) throw config_error("evaluate_seeds: need at least one seed");
    std::vector<EvalMetrics> runs;
    for (auto s : seeds) runs.push_back(evaluate(model, test, fraction, s_eval, s, jobs));
    auto mean_std = [&](auto get) {
        double mean = 0.0;
        for (const auto& r : runs) mean += get(r);
        mean /= static_cast<double>(runs.size());
        double var = 0.0;
        for (const auto& r : runs) var += (get(r) - mean) * (get(r) - mean);
        var /= static_cast<double>(runs.size());
        return std::make_pair(mean, std::sqrt(var));
    };
    EvalReport rep;
    std::tie(rep.nll_mean, rep.nll_std) = mean_std([](const EvalMetrics& r) { return r.nll; });
    std::tie(rep.mae_mean, rep.mae_std) = mean_std([](const EvalMetrics& r) { return r.mae; });
    std::tie(rep.mse_mean, rep.mse_std) = mean_std([](const EvalMetrics& r) { return r.mse; });
    rep.n_targets = runs[0].n_targets;
    rep.skipped_cases = runs[0].skipped_cases;
    rep.fraction = fraction;
    rep.s_eval = s_eval;
    rep.seeds = seeds;
    return rep;
}

inline nlohmann::json eval_report_to_json(const EvalReport& r) {
    return {{"nll", {{"mean", r.nll_mean}, {"std", r.nll_std}}},
            {"mae", {{"mean", r.mae_mean}, {"std", r.mae_std}}},
            {"mse", {{"mean", r.mse_mean}, {"std", r.mse_std}}},
            {"n_targets", r.n_targets},
            {"skipped_cases", r.skipped_cases},
            {"fraction", r.fraction},
            {"s_eval", r.s_eval},
            {"seeds", r.seeds}};
}

// Mixture mean and standard deviation per grid time and dimension. Values are
// de-normalized into data units when a normalizer is supplied.
struct InterpolationTrace {
    std::vector<double> times;
    Array mean;  // [G, D]
    Array stdev; // [G, D]
};

inline InterpolationTrace interpolation_trace(const HetvaeModel& model,
                                              const IrregularSeries& cond,
                                              const std::vector<double>& grid,
                                              std::size_t s_eval, Rng rng,
                                              const Normalizer* denorm = nullptr) {
    if (grid.empty()) throw config_error("interpolation_trace: empty query grid");
    auto so = detail::decode_samples(model, cond, grid, s_eval, rng);
    const std::size_t S = so.mu.size(), dims = model.config().input_dims;
    InterpolationTrace tr;
    tr.times = grid;
    tr.mean = Array::zeros({grid.size(), dims});
    tr.stdev = Array::zeros({grid.size(), dims});
    for (std::size_t i = 0; i < grid.size(); ++i) {
        for (std::size_t d = 0; d < dims; ++d) {
            double m = 0.0, second = 0.0;
            for (std::size_t s = 0; s < S; ++s) {
                const double mu = so.mu[s].at(i, d);
                m += mu;
                second += so.sigma2[s].at(i, d) + mu * mu;
            }
            m /= static_cast<double>(S);
            const double var = second / static_cast<double>(S) - m * m;
            tr.mean.at(i, d) = m;
            tr.stdev.at(i, d) = std::sqrt(std::max(0.0, var));
        }
    }
    if (denorm) {
        for (auto& t : tr.times) t = denorm->denorm_time(t);
        for (std::size_t i = 0; i < grid.size(); ++i) {
            for (std::size_t d = 0; d < dims; ++d) {
                tr.mean.at(i, d) = denorm->denorm_value(tr.mean.at(i, d), d);
                tr.stdev.at(i, d) *= denorm->stdev[d];
            }
        }
    }
    return tr;
}

// `time,dim,mean,std`
inline void write_trace_csv(const std::string& path, const InterpolationTrace& tr) {
    std::ofstream os(path);
    if (!os) throw data_error("write_trace_csv: cannot open " + path);
    os << "time,dim,mean,std\n";
    char buf[160];
    for (std::size_t i = 0; i < tr.times.size(); ++i) {
        for (std::size_t d = 0; d < tr.mean.shape[1]; ++d) {
            std::snprintf(buf, sizeof(buf), "%.17g,%zu,%.17g,%.17g\n", tr.times[i], d,
                          tr.mean.at(i, d), tr.stdev.at(i, d));
            os << buf;
        }
    }
}

}  // namespace hetvae
