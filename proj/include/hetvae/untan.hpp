#pragma once

#include <cmath>
#include <string>
#include <vector>

#include "hetvae/array.hpp"
#include "hetvae/data.hpp"
#include "hetvae/errors.hpp"
#include "hetvae/tape.hpp"

namespace hetvae {

enum class Pooling { max, sum };

inline Pooling pooling_from_string(const std::string& s) {
    if (s == "max") return Pooling::max;
    if (s == "sum") return Pooling::sum;
    throw config_error("unknown pooling: " + s + " (expected max or sum)");
}
inline std::string to_string(Pooling p) { return p == Pooling::max ? "max" : "sum"; }

// ---- weight bundles ----

// phi_h(t) = sin(omega * t + beta)
struct TimeEmbeddingHead {
    Array omega, beta;  // [d_e]
};

// Per-head attention projections; w and v never share storage.
struct AttentionHead {
    TimeEmbeddingHead embedding;
    Array w, v;  // [d_e, d_k]
};

struct UnTANWeights {
    std::vector<AttentionHead> heads;
    Array mixing;  // [2*D*H, J], rows ordered h-major, d-minor, (int, val) within
    Pooling pooling_intensity = Pooling::max;
    Pooling pooling_value = Pooling::sum;
};

// Per input dimension: sorted deduplicated observation times over the whole
// training split (the attention normalizer set).
using UnionTimeSet = std::vector<std::vector<double>>;

// ---- tape builders ----

struct HeadNodes {
    int omega, beta, w, v;
};

inline std::vector<HeadNodes> untan_head_nodes(Tape& t, const std::string& prefix, int heads) {
    std::vector<HeadNodes> out;
    for (int h = 0; h < heads; ++h) {
        const std::string p = prefix + ".h" + std::to_string(h);
        out.push_back(HeadNodes{t.param(p + ".omega"), t.param(p + ".beta"), t.param(p + ".w"),
                                t.param(p + ".v")});
    }
    return out;
}

// [T, d_e] = sin(t ⊗ omega + beta)
inline int embed_time_node(Tape& t, const std::vector<double>& times, int omega, int beta) {
    const std::size_t de = t.value(omega).size();
    Array tcol = Array::zeros({times.size(), 1});
    tcol.data = times;
    int outer = t.matmul(t.constant(std::move(tcol)), t.reshape(omega, {1, de}));
    return t.sin(t.add(outer, beta));
}

// One channel of observations entering a UnTAN evaluation. `values` is a
// [L,1] tape node so decoder-side channels can be latent functions; -1 marks
// an unobserved channel.
struct ChannelInput {
    const std::vector<double>* times = nullptr;
    int values = -1;
};

// exp(s - lse_row(s)), rows sum to one
inline int softmax_rows(Tape& t, int scores) {
    int lse = t.logsumexp(scores, 1, true);
    return t.exp(t.sub(scores, lse));
}

// value pathway from raw scores: softmax-weighted interpolation of values
inline int value_from_scores(Tape& t, int scores, int values) {
    return t.matmul(softmax_rows(t, scores), values);
}

// intensity pathway from raw scores, log domain: exp(pool(s_d) - pool(s_u))
inline int intensity_from_scores(Tape& t, int score_obs, int score_union, Pooling pooling) {
    auto pool = [&](int s) {
        return pooling == Pooling::max ? t.reduce_max(s, 1, true) : t.logsumexp(s, 1, true);
    };
    return t.exp(t.sub(pool(score_obs), pool(score_union)));
}

namespace detail {

struct ScoreEntry {
    const std::vector<double>* key;
    int score = -1;     // [Q, L]
    int softmax = -1;   // exp(score - lse_row)
    int pool_max = -1;  // [Q, 1]
    int pool_lse = -1;  // [Q, 1]
};

// Scores (and derived nodes) for one head against one key-time set, cached so
// decoder channels sharing the reference grid reuse one attention block.
struct HeadScores {
    Tape* tape;
    int q_proj;  // [Q, d_k]
    int v_node;
    double inv_sqrt_de;
    std::vector<ScoreEntry> entries;

    ScoreEntry& at(const std::vector<double>& times) {
        for (auto& e : entries)
            if (e.key == &times || *e.key == times) return e;
        Tape& t = *tape;
        ScoreEntry e;
        e.key = &times;
        int phi = -1;
        // embedding of the key times under this head
        phi = embed_phi(times);
        int k_proj = t.matmul(phi, v_node);
        e.score = t.scale(t.matmul_nt(q_proj, k_proj), inv_sqrt_de);
        entries.push_back(e);
        return entries.back();
    }

    int softmax(const std::vector<double>& times) {
        ScoreEntry& e = at(times);
        if (e.softmax < 0) e.softmax = softmax_rows(*tape, e.score);
        return e.softmax;
    }

    int pool_log(const std::vector<double>& times, Pooling p) {
        ScoreEntry& e = at(times);
        Tape& t = *tape;
        if (p == Pooling::max) {
            if (e.pool_max < 0) e.pool_max = t.reduce_max(e.score, 1, true);
            return e.pool_max;
        }
        if (e.pool_lse < 0) e.pool_lse = t.logsumexp(e.score, 1, true);
        return e.pool_lse;
    }

    int omega_node, beta_node;
    int embed_phi(const std::vector<double>& times) {
        return embed_time_node(*tape, times, omega_node, beta_node);
    }
};

}  // namespace detail

// A UnTAN evaluation bound to one tape, one query grid and one weight set.
// Attention scores, pools and softmaxes are cached per (head, key-time-set),
// so repeated apply() calls (decoder samples) and channels sharing a time
// grid reuse one attention block.
struct UntanOp {
    Tape* tape = nullptr;
    std::vector<detail::HeadScores> heads;
    int mixing = -1;
    const UnionTimeSet* t_union = nullptr;
    Pooling pool_intensity = Pooling::max;
    bool intensity_enabled = true;
    std::size_t q = 0;

    // [Q, J]. Per head and channel the intensity feature is pool(exp score
    // over observed) / pool(exp score over the union set), evaluated in the
    // log domain, and the value feature is the softmax-weighted interpolation
    // of the channel values. Features are concatenated h-major, d-minor,
    // (int, val) within a pair, then mixed by the [2*D*H, J] linear layer.
    int apply(const std::vector<ChannelInput>& channels) {
        Tape& t = *tape;
        if (channels.size() != t_union->size())
            throw dim_error("untand: channel count " + std::to_string(channels.size()) +
                            " does not match union time set count " +
                            std::to_string(t_union->size()));
        if (t.value(mixing).shape[0] != 2 * channels.size() * heads.size())
            throw dim_error("untand: mixing rows " + shape_str(t.value(mixing).shape) +
                            " != 2*D*H = " +
                            std::to_string(2 * channels.size() * heads.size()));
        std::vector<int> features;
        features.reserve(2 * channels.size() * heads.size());
        for (auto& hs : heads) {
            for (std::size_t d = 0; d < channels.size(); ++d) {
                const auto& ch = channels[d];
                const bool observed = ch.times != nullptr && !ch.times->empty();
                int int_feat, val_feat;
                if (!observed) {
                    // defined-absence convention: intensity 0, value 0
                    int_feat = t.constant(Array::zeros({q, 1}));
                    val_feat = t.constant(Array::zeros({q, 1}));
                } else {
                    if (!intensity_enabled) {
                        int_feat = t.constant(Array::full({q, 1}, 1.0));
                    } else if ((*t_union)[d].empty()) {
                        throw data_error("untand: empty union time set for dimension " +
                                         std::to_string(d));
                    } else if (ch.times == &(*t_union)[d] || *ch.times == (*t_union)[d]) {
                        // numerator and denominator pool the same score set
                        int_feat = t.constant(Array::full({q, 1}, 1.0));
                    } else {
                        int num = hs.pool_log(*ch.times, pool_intensity);
                        int den = hs.pool_log((*t_union)[d], pool_intensity);
                        int_feat = t.exp(t.sub(num, den));
                    }
                    val_feat = t.matmul(hs.softmax(*ch.times), ch.values);
                }
                features.push_back(int_feat);
                features.push_back(val_feat);
            }
        }
        return t.matmul(t.concat_cols(features), mixing);
    }
};

inline UntanOp make_untan_op(Tape& t, const std::vector<double>& query_times,
                             const std::vector<HeadNodes>& heads, int mixing,
                             const UnionTimeSet& t_union, Pooling pool_intensity = Pooling::max,
                             bool intensity_enabled = true) {
    if (query_times.empty()) throw dim_error("untand: no query times");
    if (t.value(mixing).rank() != 2)
        throw dim_error("untand: mixing must be rank 2, got " +
                        shape_str(t.value(mixing).shape));
    UntanOp op;
    op.tape = &t;
    op.mixing = mixing;
    op.t_union = &t_union;
    op.pool_intensity = pool_intensity;
    op.intensity_enabled = intensity_enabled;
    op.q = query_times.size();
    for (const auto& head : heads) {
        detail::HeadScores hs;
        hs.tape = &t;
        hs.omega_node = head.omega;
        hs.beta_node = head.beta;
        hs.v_node = head.v;
        hs.inv_sqrt_de = 1.0 / std::sqrt(static_cast<double>(t.value(head.omega).size()));
        hs.q_proj = t.matmul(embed_time_node(t, query_times, head.omega, head.beta), head.w);
        op.heads.push_back(std::move(hs));
    }
    return op;
}

inline int untand_node(Tape& t, const std::vector<double>& query_times,
                       const std::vector<ChannelInput>& channels, const UnionTimeSet& t_union,
                       const std::vector<HeadNodes>& heads, int mixing,
                       Pooling pool_intensity = Pooling::max, bool intensity_enabled = true) {
    UntanOp op =
        make_untan_op(t, query_times, heads, mixing, t_union, pool_intensity, intensity_enabled);
    return op.apply(channels);
}

// ---- standalone (non-tape) surface ----

inline Array embed_time(double time, const TimeEmbeddingHead& head) {
    Array out = Array::zeros(head.omega.shape);
    for (std::size_t i = 0; i < out.size(); ++i)
        out.data[i] = std::sin(head.omega.data[i] * time + head.beta.data[i]);
    return out;
}

namespace detail {

struct LiftedHead {
    HeadNodes nodes;
};

inline HeadNodes lift_head(Tape& t, const AttentionHead& head) {
    return HeadNodes{t.constant(head.embedding.omega), t.constant(head.embedding.beta),
                     t.constant(head.w), t.constant(head.v)};
}

inline HeadScores make_scores(Tape& t, const std::vector<double>& query_times,
                              const AttentionHead& head) {
    HeadNodes n = lift_head(t, head);
    HeadScores hs;
    hs.tape = &t;
    hs.omega_node = n.omega;
    hs.beta_node = n.beta;
    hs.v_node = n.v;
    hs.inv_sqrt_de = 1.0 / std::sqrt(static_cast<double>(head.embedding.omega.size()));
    hs.q_proj = t.matmul(embed_time_node(t, query_times, n.omega, n.beta), n.w);
    return hs;
}

}  // namespace detail

// alpha_h(t_q, t_k) = (phi(t_q) w) (phi(t_k) v)^T / sqrt(d_e)
inline double attention_score(double t_q, double t_k, const AttentionHead& head) {
    Tape t;
    std::vector<double> qs{t_q}, ks{t_k};
    auto hs = detail::make_scores(t, qs, head);
    return t.value(hs.at(ks).score).data[0];
}

// pool(exp alpha over t_d) / pool(exp alpha over t_u), log-domain; exactly 0
// for an unobserved channel.
inline double intensity(double t_q, const std::vector<double>& t_d,
                        const std::vector<double>& t_u, const AttentionHead& head,
                        Pooling pooling) {
    if (t_u.empty()) throw data_error("intensity: empty union time set");
    if (t_d.empty()) return 0.0;
    Tape t;
    std::vector<double> qs{t_q};
    auto hs = detail::make_scores(t, qs, head);
    if (t_d == t_u) return 1.0;
    int num = hs.pool_log(t_d, pooling);
    int den = hs.pool_log(t_u, pooling);
    return t.value(t.exp(t.sub(num, den))).data[0];
}

struct ValueResult {
    double value = 0.0;
    bool observed = false;
};

// Softmax-attention interpolation of the observed values at the query time.
inline ValueResult value_interp(double t_q, const std::vector<double>& t_d,
                                const std::vector<double>& x_d, const AttentionHead& head) {
    if (t_d.size() != x_d.size()) throw dim_error("value_interp: times/values length mismatch");
    if (t_d.empty()) return {0.0, false};
    Tape t;
    std::vector<double> qs{t_q};
    auto hs = detail::make_scores(t, qs, head);
    Array xcol = Array::zeros({x_d.size(), 1});
    xcol.data = x_d;
    int val = t.matmul(hs.softmax(t_d), t.constant(std::move(xcol)));
    return {t.value(val).data[0], true};
}

namespace detail {

// sort a channel by time; inputs may arrive in any order
inline Channel sorted_channel(const Channel& c) {
    std::vector<std::size_t> idx(c.t.size());
    for (std::size_t i = 0; i < idx.size(); ++i) idx[i] = i;
    std::sort(idx.begin(), idx.end(), [&](std::size_t a, std::size_t b) { return c.t[a] < c.t[b]; });
    Channel out;
    out.t.reserve(idx.size());
    out.x.reserve(idx.size());
    for (std::size_t i : idx) {
        out.t.push_back(c.t[i]);
        out.x.push_back(c.x[i]);
    }
    return out;
}

inline Array untand_eval(const std::vector<double>& refs, const std::vector<Channel>& series,
                         const UnTANWeights& w, const UnionTimeSet& t_u) {
    Tape t;
    std::vector<HeadNodes> heads;
    for (const auto& h : w.heads) heads.push_back(lift_head(t, h));
    int mixing = t.constant(w.mixing);
    std::vector<Channel> sorted;
    sorted.reserve(series.size());
    for (const auto& c : series) sorted.push_back(sorted_channel(c));
    std::vector<ChannelInput> chans;
    for (const auto& c : sorted) {
        ChannelInput ci;
        if (!c.t.empty()) {
            ci.times = &c.t;
            Array xcol = Array::zeros({c.x.size(), 1});
            xcol.data = c.x;
            ci.values = t.constant(std::move(xcol));
        }
        chans.push_back(ci);
    }
    int out = untand_node(t, refs, chans, t_u, heads, mixing, w.pooling_intensity, true);
    return t.value(out);
}

}  // namespace detail

// Single-query UnTAN output, [J].
inline Array untan(double t_q, const std::vector<Channel>& series, const UnTANWeights& w,
                   const UnionTimeSet& t_u) {
    Array row = detail::untand_eval({t_q}, series, w, t_u);
    return Array({row.shape[1]}, row.data);
}

// Discretized UnTAN at reference times: row i equals untan(refs[i], ...).
inline Array untand(const std::vector<double>& refs, const std::vector<Channel>& series,
                    const UnTANWeights& w, const UnionTimeSet& t_u) {
    return detail::untand_eval(refs, series, w, t_u);
}

}  // namespace hetvae
