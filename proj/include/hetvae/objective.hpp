#pragma once

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <cstdio>
#include <fstream>
#include <functional>
#include <string>
#include <vector>

#include "hetvae/adam.hpp"
#include "hetvae/data.hpp"
#include "hetvae/errors.hpp"
#include "hetvae/model.hpp"
#include "hetvae/rng.hpp"
#include "hetvae/tape.hpp"

namespace hetvae {

struct TrainConfig {
    double lambda = 1.0;  // augmentation weight; dropped when alo is false
    std::size_t s_train = 1;
    std::size_t batch_size = 128;
    std::size_t iterations = 2000;
    double lr = 1e-4;
    std::uint64_t seed = 0;
    bool alo = true;
    double beta1 = 0.9, beta2 = 0.999, eps = 1e-8;
    std::size_t checkpoint_interval = 0;  // 0: final checkpoint only

    void validate() const {
        if (lambda < 0.0) throw config_error("train config: lambda must be >= 0");
        if (s_train == 0) throw config_error("train config: s_train must be >= 1");
        if (batch_size == 0) throw config_error("train config: batch_size must be >= 1");
        if (!(lr > 0.0)) throw config_error("train config: learning rate must be positive");
    }

    double effective_lambda() const { return alo ? lambda : 0.0; }
};

inline constexpr double kLog2Pi = 1.8378770664093454836;

inline double gaussian_logpdf(double x, double mu, double sigma2) {
    if (!(sigma2 > 0.0)) throw numeric_error("gaussian_logpdf: sigma2 must be positive");
    const double d = x - mu;
    return -0.5 * (kLog2Pi + std::log(sigma2)) - d * d / (2.0 * sigma2);
}

// sum over entries of 0.5 * (mu^2 + sigma^2 - log sigma^2 - 1)
inline double kl_diag_standard(const Array& mu, const Array& sigma2) {
    if (!mu.same_shape(sigma2)) throw dim_error("kl_diag_standard: shape mismatch");
    double kl = 0.0;
    for (std::size_t i = 0; i < mu.size(); ++i) {
        const double s2 = sigma2.data[i];
        if (!(s2 > 0.0)) throw numeric_error("kl_diag_standard: sigma2 must be positive");
        kl += 0.5 * (mu.data[i] * mu.data[i] + s2 - std::log(s2) - 1.0);
    }
    return kl;
}

inline int kl_diag_standard_node(Tape& t, int mu, int sigma2) {
    int inner = t.sub(t.add(t.square(mu), sigma2), t.add_scalar(t.log(sigma2), 1.0));
    return t.scale(t.reduce_sum(inner), 0.5);
}

// Sorted unique decode grid for one case plus, per dimension, the (row,
// value) pairs of its observations. Duplicated observations keep their
// multiplicity through repeated rows.
struct QueryIndex {
    std::vector<double> times;
    std::vector<std::vector<std::pair<std::size_t, double>>> obs;  // per dim: (row, value)
    std::size_t total = 0;
};

inline QueryIndex build_query_index(const IrregularSeries& s) {
    QueryIndex qi;
    for (const auto& c : s.channels) qi.times.insert(qi.times.end(), c.t.begin(), c.t.end());
    std::sort(qi.times.begin(), qi.times.end());
    qi.times.erase(std::unique(qi.times.begin(), qi.times.end()), qi.times.end());
    qi.obs.resize(s.channels.size());
    for (std::size_t d = 0; d < s.channels.size(); ++d) {
        for (std::size_t i = 0; i < s.channels[d].t.size(); ++i) {
            const auto it =
                std::lower_bound(qi.times.begin(), qi.times.end(), s.channels[d].t[i]);
            qi.obs[d].emplace_back(static_cast<std::size_t>(it - qi.times.begin()),
                                   s.channels[d].x[i]);
            ++qi.total;
        }
    }
    return qi;
}

// Tape nodes of the per-case objective pieces, all scalars; kl is -1 when the
// probabilistic path is disabled.
struct CaseLossNodes {
    int nll = -1;
    int kl = -1;
    int mse = -1;
    double normalizer = 0.0;  // sum_d L_dn
};

// Builds -E_q log p(x | z_cat, t) (heteroscedastic or constant-variance per
// config), the KL against the standard normal prior, and the expected squared
// error, averaged over the provided latent samples. The decoder is queried
// exactly at the case's observed (t, d) pairs.
inline CaseLossNodes case_loss(Tape& t, const HetvaeModel& model, const IrregularSeries& s,
                               const std::vector<Array>& noise) {
    const QueryIndex qi = build_query_index(s);
    if (qi.total == 0) throw data_error("case_loss: series " + s.id + " has no observations");

    int h_enc = model.encode(t, s);
    LatentState latent = model.encode_latent(t, h_enc, noise);
    auto decoded = model.decode(t, latent.z_cat, qi.times);

    // observation multiplicity and value grids over [Q, D]
    const std::size_t q = qi.times.size(), dims = model.config().input_dims;
    Array mask = Array::zeros({q, dims});
    Array target = Array::zeros({q, dims});
    for (std::size_t d = 0; d < dims; ++d) {
        for (const auto& [row, value] : qi.obs[d]) {
            mask.at(row, d) += 1.0;
            target.at(row, d) = value;
        }
    }
    int mask_n = t.constant(mask);
    int target_n = t.constant(target);

    const std::size_t S = decoded.size();
    int nll_sum = -1, mse_sum = -1;
    for (const auto& dn : decoded) {
        // 0.5*log(2*pi*sigma2) + (x-mu)^2 / (2*sigma2), per cell
        int sq = t.square(t.sub(target_n, dn.mu));
        int cell = t.add(t.scale(t.add_scalar(t.log(dn.sigma2), kLog2Pi), 0.5),
                         t.div(sq, t.scale(dn.sigma2, 2.0)));
        int nll_s = t.reduce_sum(t.mul(mask_n, cell));
        int mse_s = t.reduce_sum(t.mul(mask_n, sq));
        nll_sum = nll_sum < 0 ? nll_s : t.add(nll_sum, nll_s);
        mse_sum = mse_sum < 0 ? mse_s : t.add(mse_sum, mse_s);
    }
    CaseLossNodes out;
    out.nll = t.scale(nll_sum, 1.0 / static_cast<double>(S));
    out.mse = t.scale(mse_sum, 1.0 / static_cast<double>(S));
    if (model.config().prob_path) out.kl = kl_diag_standard_node(t, latent.mu, latent.sigma2);
    out.normalizer = static_cast<double>(qi.total);
    return out;
}

struct LossReport {
    double total = 0.0;
    double nll_term = 0.0;
    double kl_term = 0.0;
    double mse_term = 0.0;  // unweighted; total adds it scaled by lambda
    std::vector<double> case_normalizers;
    std::size_t skipped_cases = 0;
};

// Sum over the batch of per-case normalized terms; optionally accumulates
// analytic gradients of the minimized loss (case-index order, deterministic).
inline LossReport nvae_loss(const std::vector<const IrregularSeries*>& batch,
                            const HetvaeModel& model,
                            const std::vector<std::vector<Array>>& noise, const TrainConfig& cfg,
                            GradMap* grads = nullptr) {
    if (noise.size() != batch.size())
        throw dim_error("nvae_loss: noise draws do not match batch size");
    LossReport rep;
    const double lam = cfg.effective_lambda();
    for (std::size_t i = 0; i < batch.size(); ++i) {
        const IrregularSeries& s = *batch[i];
        if (s.total_observations() == 0) {
            ++rep.skipped_cases;
            continue;
        }
        Tape t(&model.params());
        CaseLossNodes c = case_loss(t, model, s, noise[i]);
        const double inv_n = 1.0 / c.normalizer;
        int bracket = c.nll;
        if (c.kl >= 0) bracket = t.add(bracket, c.kl);
        if (lam > 0.0) bracket = t.add(bracket, t.scale(c.mse, lam));
        int case_total = t.scale(bracket, inv_n);
        if (grads) accumulate(*grads, t.backward(case_total));
        rep.nll_term += t.scalar(c.nll) * inv_n;
        rep.kl_term += c.kl >= 0 ? t.scalar(c.kl) * inv_n : 0.0;
        rep.mse_term += t.scalar(c.mse) * inv_n;
        rep.case_normalizers.push_back(c.normalizer);
    }
    rep.total = rep.nll_term + rep.kl_term + lam * rep.mse_term;
    return rep;
}

inline std::vector<Array> draw_case_noise(const HetvaeModel& model, const TrainConfig& cfg,
                                          Rng stream) {
    std::vector<Array> noise;
    if (!model.config().prob_path) return noise;
    for (std::size_t s = 0; s < cfg.s_train; ++s) {
        Array n = Array::zeros({model.config().ref_points, model.config().latent_dim});
        for (auto& v : n.data) v = stream.normal();
        noise.push_back(std::move(n));
    }
    return noise;
}

using CheckpointFn =
    std::function<void(std::size_t iteration, const std::vector<LossReport>& history)>;

// Adam over shuffled mini-batches; per-epoch permutations and per-(iteration,
// case) noise streams are derived from the seed by counter splitting, so a
// resumed run continues the exact same sequence.
inline std::vector<LossReport> train(const Dataset& trainset, HetvaeModel& model,
                                     const TrainConfig& cfg, AdamState& opt,
                                     std::size_t start_iter = 0,
                                     const CheckpointFn& on_checkpoint = nullptr) {
    cfg.validate();
    if (trainset.empty()) throw data_error("train: empty training set");
    opt.lr = cfg.lr;
    opt.beta1 = cfg.beta1;
    opt.beta2 = cfg.beta2;
    opt.eps = cfg.eps;

    Rng master(cfg.seed);
    const std::size_t n = trainset.size();
    const std::size_t bsz = std::min(cfg.batch_size, n);
    const std::size_t batches_per_epoch = (n + bsz - 1) / bsz;

    std::vector<LossReport> history;
    history.reserve(cfg.iterations > start_iter ? cfg.iterations - start_iter : 0);
    std::vector<std::size_t> perm(n);
    std::size_t perm_epoch = static_cast<std::size_t>(-1);

    for (std::size_t iter = start_iter; iter < cfg.iterations; ++iter) {
        const std::size_t epoch = iter / batches_per_epoch;
        const std::size_t slot = iter % batches_per_epoch;
        if (epoch != perm_epoch) {
            for (std::size_t i = 0; i < n; ++i) perm[i] = i;
            Rng shuf = master.split(1).split(epoch);
            shuf.shuffle(perm);
            perm_epoch = epoch;
        }
        const std::size_t lo = slot * bsz, hi = std::min(lo + bsz, n);
        std::vector<const IrregularSeries*> batch;
        std::vector<std::vector<Array>> noise;
        for (std::size_t i = lo; i < hi; ++i) {
            batch.push_back(&trainset[perm[i]]);
            noise.push_back(draw_case_noise(model, cfg, master.split(2).split(iter).split(perm[i])));
        }
        GradMap grads;
        LossReport rep = nvae_loss(batch, model, noise, cfg, &grads);
        if (!std::isfinite(rep.nll_term))
            throw numeric_error("train: non-finite nll term at iteration " + std::to_string(iter));
        if (!std::isfinite(rep.kl_term))
            throw numeric_error("train: non-finite kl term at iteration " + std::to_string(iter));
        if (!std::isfinite(rep.mse_term))
            throw numeric_error("train: non-finite mse term at iteration " + std::to_string(iter));
        adam_step(opt, model.params(), grads);
        history.push_back(std::move(rep));
        if (on_checkpoint && cfg.checkpoint_interval > 0 && (iter + 1) % cfg.checkpoint_interval == 0 &&
            iter + 1 < cfg.iterations)
            on_checkpoint(iter + 1, history);
    }
    if (on_checkpoint) on_checkpoint(cfg.iterations, history);
    return history;
}

// `iter,total,nll,kl,mse`, one row per iteration
inline void write_loss_history(const std::string& path, const std::vector<LossReport>& history,
                               std::size_t start_iter = 0, bool append = false) {
    std::ofstream os(path, append ? std::ios::app : std::ios::trunc);
    if (!os) throw data_error("write_loss_history: cannot open " + path);
    if (!append) os << "iter,total,nll,kl,mse\n";
    char buf[160];
    for (std::size_t i = 0; i < history.size(); ++i) {
        const auto& r = history[i];
        std::snprintf(buf, sizeof(buf), "%zu,%.17g,%.17g,%.17g,%.17g\n", start_iter + i, r.total,
                      r.nll_term, r.kl_term, r.mse_term);
        os << buf;
    }
}

}  // namespace hetvae
