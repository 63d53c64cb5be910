#pragma once

#include <cmath>
#include <string>
#include <utility>
#include <vector>

#include <json.hpp>

#include "hetvae/array.hpp"
#include "hetvae/data.hpp"
#include "hetvae/errors.hpp"
#include "hetvae/params.hpp"
#include "hetvae/rng.hpp"
#include "hetvae/tape.hpp"
#include "hetvae/untan.hpp"

namespace hetvae {

struct HetvaeConfig {
    std::size_t input_dims = 1;   // D
    std::size_t ref_points = 16;  // K
    std::size_t embed_dim = 32;   // d_e
    std::size_t heads = 1;        // H
    std::size_t untan_dim = 32;   // J
    std::size_t latent_dim = 16;
    std::size_t mlp_width = 128;
    bool het = true;        // heteroscedastic output
    bool int_path = true;   // intensity pathway
    bool det_path = true;   // deterministic pathway
    bool prob_path = true;  // probabilistic pathway
    double sigma2_c = 1.0;  // homoscedastic output variance
    Pooling pooling_intensity = Pooling::max;

    void validate() const {
        if (!prob_path && !det_path)
            throw config_error("config: at least one of prob_path/det_path must be enabled");
        if (heads == 0 || embed_dim % heads != 0)
            throw config_error("config: embed_dim must be divisible by heads");
        if (!(sigma2_c > 0.0)) throw config_error("config: sigma2_c must be positive");
        if (input_dims == 0 || ref_points == 0 || untan_dim == 0 || latent_dim == 0 ||
            mlp_width == 0)
            throw config_error("config: dimensions must be positive");
    }

    // latent channels entering the decoder ([z | det] order)
    std::size_t zcat_dim() const {
        return (prob_path ? latent_dim : 0) + (det_path ? latent_dim : 0);
    }
};

inline void to_json(nlohmann::json& j, const HetvaeConfig& c) {
    j = {{"input_dims", c.input_dims},   {"ref_points", c.ref_points},
         {"embed_dim", c.embed_dim},     {"heads", c.heads},
         {"untan_dim", c.untan_dim},     {"latent_dim", c.latent_dim},
         {"mlp_width", c.mlp_width},     {"het", c.het},
         {"int_path", c.int_path},       {"det_path", c.det_path},
         {"prob_path", c.prob_path},     {"sigma2_c", c.sigma2_c},
         {"pooling_intensity", to_string(c.pooling_intensity)}};
}

inline void from_json(const nlohmann::json& j, HetvaeConfig& c) {
    j.at("input_dims").get_to(c.input_dims);
    j.at("ref_points").get_to(c.ref_points);
    j.at("embed_dim").get_to(c.embed_dim);
    j.at("heads").get_to(c.heads);
    j.at("untan_dim").get_to(c.untan_dim);
    j.at("latent_dim").get_to(c.latent_dim);
    j.at("mlp_width").get_to(c.mlp_width);
    j.at("het").get_to(c.het);
    j.at("int_path").get_to(c.int_path);
    j.at("det_path").get_to(c.det_path);
    j.at("prob_path").get_to(c.prob_path);
    j.at("sigma2_c").get_to(c.sigma2_c);
    c.pooling_intensity = pooling_from_string(j.at("pooling_intensity").get<std::string>());
}

// Per-query-time Gaussian output parameters extracted from a decoded sample.
struct OutputDistribution {
    enum class Mode { heteroscedastic, homoscedastic };
    std::vector<double> times;
    Array mu;      // [Q, D]
    Array sigma2;  // [Q, D]
    Mode mode = Mode::heteroscedastic;
};

inline Array sample_output(const OutputDistribution& dist, const Array& noise) {
    if (!noise.same_shape(dist.mu))
        throw dim_error("sample_output: noise shape " + shape_str(noise.shape) +
                        " != mu shape " + shape_str(dist.mu.shape));
    Array out = dist.mu;
    for (std::size_t i = 0; i < out.size(); ++i)
        out.data[i] += std::sqrt(dist.sigma2.data[i]) * noise.data[i];
    return out;
}

// Tape nodes of the latent stage for one data case.
struct LatentState {
    int mu = -1, sigma2 = -1;  // [K, latent]
    std::vector<int> z;        // S nodes, [K, latent]
    int det = -1;              // [K, latent]
    std::vector<int> z_cat;    // S nodes, [K, zcat_dim]
};

// Encoder/decoder assembly around the two UnTAND modules. Parameters live in
// a ParamStore under "untan.enc.*", "untan.dec.*", "enc.*", "dec.*", "det.*";
// the encoder-side union time set is fitted from the training split and
// frozen, the decoder-side union set is the reference grid itself.
class HetvaeModel {
  public:
    explicit HetvaeModel(HetvaeConfig cfg) : cfg_(std::move(cfg)) {
        cfg_.validate();
        refs_.resize(cfg_.ref_points);
        for (std::size_t i = 0; i < cfg_.ref_points; ++i)
            refs_[i] = cfg_.ref_points == 1
                           ? 0.0
                           : static_cast<double>(i) / static_cast<double>(cfg_.ref_points - 1);
        dec_union_.assign(cfg_.zcat_dim(), refs_);
    }

    const HetvaeConfig& config() const { return cfg_; }
    ParamStore& params() { return params_; }
    const ParamStore& params() const { return params_; }
    const std::vector<double>& refs() const { return refs_; }

    void set_union_times(UnionTimeSet u) {
        if (u.size() != cfg_.input_dims)
            throw dim_error("set_union_times: got " + std::to_string(u.size()) +
                            " dimensions, config has " + std::to_string(cfg_.input_dims));
        enc_union_ = std::move(u);
    }
    const UnionTimeSet& union_times() const { return enc_union_; }

    void init_params(Rng rng) {
        const std::size_t dk = cfg_.embed_dim / cfg_.heads;
        auto normal_init = [&](const std::string& name, Shape shape) {
            Array a = Array::zeros(std::move(shape));
            Rng r = rng.split(fnv1a(name));
            for (auto& v : a.data) v = r.normal();
            params_.add(name, std::move(a));
        };
        auto linear_init = [&](const std::string& name, Shape shape, std::size_t fan_in) {
            Array a = Array::zeros(std::move(shape));
            Rng r = rng.split(fnv1a(name));
            const double bound = 1.0 / std::sqrt(static_cast<double>(fan_in));
            for (auto& v : a.data) v = r.uniform(-bound, bound);
            params_.add(name, std::move(a));
        };
        auto zero_init = [&](const std::string& name, Shape shape) {
            params_.add(name, Array::zeros(std::move(shape)));
        };
        auto untan_init = [&](const std::string& prefix, std::size_t channels) {
            for (std::size_t h = 0; h < cfg_.heads; ++h) {
                const std::string p = prefix + ".h" + std::to_string(h);
                normal_init(p + ".omega", {cfg_.embed_dim});
                normal_init(p + ".beta", {cfg_.embed_dim});
                linear_init(p + ".w", {cfg_.embed_dim, dk}, cfg_.embed_dim);
                linear_init(p + ".v", {cfg_.embed_dim, dk}, cfg_.embed_dim);
            }
            const std::size_t rows = 2 * channels * cfg_.heads;
            linear_init(prefix + ".mixing", {rows, cfg_.untan_dim}, rows);
        };
        auto mlp2_init = [&](const std::string& prefix, std::size_t in, std::size_t out) {
            linear_init(prefix + ".w1", {in, cfg_.mlp_width}, in);
            zero_init(prefix + ".b1", {cfg_.mlp_width});
            linear_init(prefix + ".w2", {cfg_.mlp_width, out}, cfg_.mlp_width);
            zero_init(prefix + ".b2", {out});
        };

        untan_init("untan.enc", cfg_.input_dims);
        untan_init("untan.dec", cfg_.zcat_dim());
        if (cfg_.prob_path) {
            mlp2_init("enc.mu", cfg_.untan_dim, cfg_.latent_dim);
            mlp2_init("enc.sigma", cfg_.untan_dim, cfg_.latent_dim);
        }
        if (cfg_.det_path) {
            linear_init("det.w", {cfg_.untan_dim, cfg_.latent_dim}, cfg_.untan_dim);
            zero_init("det.b", {cfg_.latent_dim});
        }
        mlp2_init("dec.mu", cfg_.untan_dim, cfg_.input_dims);
        mlp2_init("dec.sigma", cfg_.untan_dim, cfg_.input_dims);
    }

    // h_enc = UnTAND^enc(r, t, x): [K, J]
    int encode(Tape& t, const IrregularSeries& s) const {
        if (s.channels.size() != cfg_.input_dims)
            throw dim_error("encode: series " + s.id + " has " +
                            std::to_string(s.channels.size()) + " channels, config has " +
                            std::to_string(cfg_.input_dims));
        if (enc_union_.size() != cfg_.input_dims)
            throw config_error("encode: union time set not fitted");
        std::vector<Channel> sorted;
        sorted.reserve(s.channels.size());
        for (const auto& c : s.channels) sorted.push_back(detail::sorted_channel(c));
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
        auto heads = untan_head_nodes(t, "untan.enc", static_cast<int>(cfg_.heads));
        return untand_node(t, refs_, chans, enc_union_, heads, t.param("untan.enc.mixing"),
                           cfg_.pooling_intensity, cfg_.int_path);
    }

    // mu = f^enc_mu(h_enc), sigma2 = exp(f^enc_sigma(h_enc))
    std::pair<int, int> latent_params(Tape& t, int h_enc) const {
        if (!cfg_.prob_path) throw config_error("latent_params: probabilistic path disabled");
        int mu = mlp2(t, h_enc, "enc.mu");
        int sigma2 = t.exp(mlp2(t, h_enc, "enc.sigma"));
        return {mu, sigma2};
    }

    // z = mu + sqrt(sigma2) * noise
    int reparameterize(Tape& t, int mu, int sigma2, const Array& noise) const {
        const Array& s2 = t.value(sigma2);
        for (double v : s2.data)
            if (!(v > 0.0)) throw numeric_error("reparameterize: non-positive sigma2");
        if (!t.value(mu).same_shape(noise))
            throw dim_error("reparameterize: noise shape " + shape_str(noise.shape) +
                            " != mu shape " + shape_str(t.value(mu).shape));
        return t.add(mu, t.mul(t.sqrt(sigma2), t.constant(noise)));
    }

    // one linear layer J -> latent_dim per reference point
    int det_path(Tape& t, int h_enc) const {
        if (!cfg_.det_path) throw config_error("det_path: deterministic path disabled");
        return t.linear(h_enc, t.param("det.w"), t.param("det.b"));
    }

    // z_cat = [z | det]; pass -1 for a disabled pathway's node
    int concat_latent(Tape& t, int z, int det) const {
        if (z < 0 && det < 0) throw config_error("concat_latent: both pathways disabled");
        if (z < 0) return det;
        if (det < 0) return z;
        return t.concat_cols({z, det});
    }

    // Full latent stage; noise has one [K, latent] array per sample.
    LatentState encode_latent(Tape& t, int h_enc, const std::vector<Array>& noise) const {
        LatentState st;
        if (cfg_.det_path) st.det = det_path(t, h_enc);
        if (cfg_.prob_path) {
            auto [mu, sigma2] = latent_params(t, h_enc);
            st.mu = mu;
            st.sigma2 = sigma2;
            for (const auto& n : noise) {
                st.z.push_back(reparameterize(t, mu, sigma2, n));
                st.z_cat.push_back(concat_latent(t, st.z.back(), st.det));
            }
        } else {
            st.z_cat.push_back(concat_latent(t, -1, st.det));
        }
        return st;
    }

    struct DecodeNodes {
        int mu;      // [Q, D]
        int sigma2;  // [Q, D]
    };

    // Decoder-side UnTAND treats each z_cat column as a channel fully observed
    // at the reference grid. One output pair per latent sample; attention is
    // built once and shared across samples.
    std::vector<DecodeNodes> decode(Tape& t, const std::vector<int>& z_cat_samples,
                                    const std::vector<double>& query_times) const {
        if (z_cat_samples.empty()) throw dim_error("decode: no latent samples");
        const std::size_t c_dim = cfg_.zcat_dim();
        auto heads = untan_head_nodes(t, "untan.dec", static_cast<int>(cfg_.heads));
        UntanOp op = make_untan_op(t, query_times, heads, t.param("untan.dec.mixing"),
                                   dec_union_, cfg_.pooling_intensity, true);
        std::vector<DecodeNodes> out;
        out.reserve(z_cat_samples.size());
        for (int z_cat : z_cat_samples) {
            const Array& zv = t.value(z_cat);
            if (zv.rank() != 2 || zv.shape[0] != cfg_.ref_points || zv.shape[1] != c_dim)
                throw dim_error("decode: z_cat shape " + shape_str(zv.shape) + " expected [" +
                                std::to_string(cfg_.ref_points) + "," + std::to_string(c_dim) +
                                "]");
            std::vector<ChannelInput> chans(c_dim);
            for (std::size_t c = 0; c < c_dim; ++c) {
                chans[c].times = &refs_;
                chans[c].values = t.slice_cols(z_cat, c, 1);
            }
            int h_dec = op.apply(chans);
            DecodeNodes dn;
            dn.mu = mlp2(t, h_dec, "dec.mu");
            if (cfg_.het) {
                dn.sigma2 = t.add_scalar(t.softplus(mlp2(t, h_dec, "dec.sigma")), 0.01);
            } else {
                dn.sigma2 =
                    t.constant(Array::full({query_times.size(), cfg_.input_dims}, cfg_.sigma2_c));
            }
            out.push_back(dn);
        }
        return out;
    }

    OutputDistribution extract_distribution(const Tape& t, const DecodeNodes& dn,
                                            const std::vector<double>& query_times) const {
        OutputDistribution d;
        d.times = query_times;
        d.mu = t.value(dn.mu);
        d.sigma2 = t.value(dn.sigma2);
        d.mode = cfg_.het ? OutputDistribution::Mode::heteroscedastic
                          : OutputDistribution::Mode::homoscedastic;
        return d;
    }

  private:
    // two fully connected layers with matching width and relu activation
    int mlp2(Tape& t, int x, const std::string& prefix) const {
        int h = t.relu(t.linear(x, t.param(prefix + ".w1"), t.param(prefix + ".b1")));
        return t.linear(h, t.param(prefix + ".w2"), t.param(prefix + ".b2"));
    }

    HetvaeConfig cfg_;
    ParamStore params_;
    std::vector<double> refs_;
    UnionTimeSet enc_union_;
    UnionTimeSet dec_union_;
};

}  // namespace hetvae
