#include <catch2/catch_amalgamated.hpp>

#include <cmath>
#include <set>

#include "hetvae/gradcheck.hpp"
#include "hetvae/model.hpp"

using namespace hetvae;

namespace {

HetvaeConfig tiny_config() {
    HetvaeConfig cfg;
    cfg.input_dims = 1;
    cfg.ref_points = 4;
    cfg.embed_dim = 8;
    cfg.heads = 1;
    cfg.untan_dim = 8;
    cfg.latent_dim = 4;
    cfg.mlp_width = 8;
    return cfg;
}

HetvaeModel tiny_model(std::uint64_t seed = 42, HetvaeConfig cfg = tiny_config()) {
    HetvaeModel m(cfg);
    m.init_params(Rng(seed));
    m.set_union_times({{0.0, 0.1, 0.3, 0.55, 0.7, 0.9, 1.0}});
    return m;
}

IrregularSeries toy_series() {
    IrregularSeries s;
    s.id = "toy";
    s.channels.push_back(Channel{{0.1, 0.55, 0.9}, {0.4, -1.2, 0.8}});
    return s;
}

void zero_param(HetvaeModel& m, const std::string& name) {
    Array& a = m.params().mutable_at(name);
    std::fill(a.data.begin(), a.data.end(), 0.0);
}

UnTANWeights weights_from_store(const HetvaeModel& m, const std::string& prefix) {
    UnTANWeights w;
    for (std::size_t h = 0; h < m.config().heads; ++h) {
        const std::string p = prefix + ".h" + std::to_string(h);
        AttentionHead head;
        head.embedding.omega = m.params().at(p + ".omega");
        head.embedding.beta = m.params().at(p + ".beta");
        head.w = m.params().at(p + ".w");
        head.v = m.params().at(p + ".v");
        w.heads.push_back(std::move(head));
    }
    w.mixing = m.params().at(prefix + ".mixing");
    w.pooling_intensity = m.config().pooling_intensity;
    return w;
}

std::vector<double> run_mlp(const HetvaeModel& m, const std::string& prefix, const Array& input,
                            std::size_t row) {
    const Array& w1 = m.params().at(prefix + ".w1");
    const Array& b1 = m.params().at(prefix + ".b1");
    const Array& w2 = m.params().at(prefix + ".w2");
    const Array& b2 = m.params().at(prefix + ".b2");
    std::vector<double> hid(w1.shape[1]);
    for (std::size_t j = 0; j < hid.size(); ++j) {
        double acc = b1.data[j];
        for (std::size_t i = 0; i < w1.shape[0]; ++i) acc += input.at(row, i) * w1.at(i, j);
        hid[j] = std::max(0.0, acc);
    }
    std::vector<double> out(w2.shape[1]);
    for (std::size_t j = 0; j < out.size(); ++j) {
        double acc = b2.data[j];
        for (std::size_t i = 0; i < hid.size(); ++i) acc += hid[i] * w2.at(i, j);
        out[j] = acc;
    }
    return out;
}

}  // namespace

TEST_CASE("config validation") {
    HetvaeConfig cfg = tiny_config();
    cfg.prob_path = false;
    cfg.det_path = false;
    REQUIRE_THROWS_AS(cfg.validate(), config_error);
    cfg = tiny_config();
    cfg.heads = 3;  // 8 % 3 != 0
    REQUIRE_THROWS_AS(cfg.validate(), config_error);
    cfg = tiny_config();
    cfg.sigma2_c = 0.0;
    REQUIRE_THROWS_AS(cfg.validate(), config_error);
}

TEST_CASE("reference points are equally spaced on [0,1]") {
    HetvaeModel m = tiny_model();
    REQUIRE(m.refs().size() == 4);
    CHECK(m.refs().front() == 0.0);
    CHECK(m.refs().back() == 1.0);
    CHECK(m.refs()[1] == Catch::Approx(1.0 / 3.0));
}

TEST_CASE("encode shape and zero-mixing case") {
    HetvaeModel m = tiny_model();
    zero_param(m, "untan.enc.mixing");
    Tape t(&m.params());
    int h = m.encode(t, toy_series());
    REQUIRE(t.value(h).shape == (Shape{4, 8}));
    for (double v : t.value(h).data) CHECK(v == 0.0);
}

TEST_CASE("encode delegates to untand bit-exactly") {
    HetvaeModel m = tiny_model();
    Tape t(&m.params());
    int h = m.encode(t, toy_series());
    Array direct = untand(m.refs(), toy_series().channels, weights_from_store(m, "untan.enc"),
                          m.union_times());
    CHECK(t.value(h).data == direct.data);
}

TEST_CASE("encode rejects wrong channel count") {
    HetvaeModel m = tiny_model();
    IrregularSeries s = toy_series();
    s.channels.push_back(Channel{});
    Tape t(&m.params());
    REQUIRE_THROWS_AS(m.encode(t, s), dim_error);
}

TEST_CASE("intensity ablation is a no-op on fully observed input") {
    HetvaeConfig cfg = tiny_config();
    HetvaeModel a(cfg);
    a.init_params(Rng(1));
    cfg.int_path = false;
    HetvaeModel b(cfg);
    b.init_params(Rng(1));
    IrregularSeries s;
    s.id = "full";
    s.channels.push_back(Channel{{0.0, 0.25, 0.5, 0.75, 1.0}, {1.0, 2.0, 3.0, 4.0, 5.0}});
    UnionTimeSet u{{0.0, 0.25, 0.5, 0.75, 1.0}};
    a.set_union_times(u);
    b.set_union_times(u);
    Tape ta(&a.params()), tb(&b.params());
    CHECK(ta.value(a.encode(ta, s)).data == tb.value(b.encode(tb, s)).data);
}

TEST_CASE("latent parameter heads") {
    HetvaeModel m = tiny_model();
    zero_param(m, "enc.sigma.w2");
    zero_param(m, "enc.sigma.b2");
    Tape t(&m.params());
    int h = m.encode(t, toy_series());
    auto [mu, sigma2] = m.latent_params(t, h);
    (void)mu;
    for (double v : t.value(sigma2).data) CHECK(v == 1.0);  // exp(0)

    HetvaeModel m2 = tiny_model();
    zero_param(m2, "enc.mu.w2");
    zero_param(m2, "enc.mu.b2");
    Tape t2(&m2.params());
    auto [mu2, sig2] = m2.latent_params(t2, m2.encode(t2, toy_series()));
    (void)sig2;
    for (double v : t2.value(mu2).data) CHECK(v == 0.0);
}

TEST_CASE("latent params match composed linear/relu/exp oracle") {
    HetvaeModel m = tiny_model();
    Tape t(&m.params());
    int h = m.encode(t, toy_series());
    auto [mu, sigma2] = m.latent_params(t, h);
    const Array hv = t.value(h);
    for (std::size_t k = 0; k < 4; ++k) {
        auto mu_row = run_mlp(m, "enc.mu", hv, k);
        auto sig_row = run_mlp(m, "enc.sigma", hv, k);
        for (std::size_t j = 0; j < 4; ++j) {
            CHECK(t.value(mu).at(k, j) == Catch::Approx(mu_row[j]).margin(1e-12));
            CHECK(t.value(sigma2).at(k, j) == Catch::Approx(std::exp(sig_row[j])).margin(1e-12));
        }
    }
}

TEST_CASE("reparameterize trivial and gradient cases") {
    HetvaeModel m = tiny_model();
    ParamStore ps;
    ps.add("mu", Array::full({2, 2}, 0.0));
    ps.add("sigma2", Array::full({2, 2}, 4.0));
    {
        Tape t(&ps);
        int z = m.reparameterize(t, t.param("mu"), t.param("sigma2"), Array::zeros({2, 2}));
        for (double v : t.value(z).data) CHECK(v == 0.0);  // noise 0 -> mu
        int z1 = m.reparameterize(t, t.param("mu"), t.param("sigma2"), Array::full({2, 2}, 1.0));
        for (double v : t.value(z1).data) CHECK(v == 2.0);  // sqrt(4)*1
    }
    // d(sum z)/d(sigma2) = noise / (2 sqrt(sigma2))
    Array noise = Array::full({2, 2}, 0.7);
    auto objective = [&](const ParamStore& p, GradMap* grads) {
        Tape t(&p);
        int z = m.reparameterize(t, t.param("mu"), t.param("sigma2"), noise);
        int y = t.reduce_sum(z);
        if (grads) *grads = t.backward(y);
        return t.scalar(y);
    };
    GradMap grads;
    objective(ps, &grads);
    for (double g : grads.at("sigma2").data)
        CHECK(g == Catch::Approx(0.7 / (2.0 * 2.0)).epsilon(1e-12));
    auto res = finite_diff_check(objective, ps, 1e-5);
    CHECK(res.max_rel_err < 1e-6);

    Tape t(&ps);
    ps.mutable_at("sigma2").data[0] = -1.0;
    REQUIRE_THROWS_AS(m.reparameterize(t, t.param("mu"), t.param("sigma2"), Array::zeros({2, 2})),
                      numeric_error);
}

TEST_CASE("deterministic path is one linear layer") {
    HetvaeModel m = tiny_model();
    Tape t(&m.params());
    int h = m.encode(t, toy_series());
    int det = m.det_path(t, h);
    const Array& w = m.params().at("det.w");
    const Array& b = m.params().at("det.b");
    const Array hv = t.value(h);
    for (std::size_t k = 0; k < 4; ++k) {
        for (std::size_t j = 0; j < 4; ++j) {
            double acc = b.data[j];
            for (std::size_t i = 0; i < 8; ++i) acc += hv.at(k, i) * w.at(i, j);
            CHECK(t.value(det).at(k, j) == Catch::Approx(acc).margin(1e-12));
        }
    }

    HetvaeConfig cfg = tiny_config();
    cfg.det_path = false;
    HetvaeModel nodet(cfg);
    nodet.init_params(Rng(3));
    Tape t2(&nodet.params());
    REQUIRE_THROWS_AS(nodet.det_path(t2, 0), config_error);
}

TEST_CASE("concat latent layout is [z | det]") {
    HetvaeConfig cfg = tiny_config();
    cfg.latent_dim = 2;
    HetvaeModel m(cfg);
    Tape t;
    int z = t.constant(Array({1, 2}, {10.0, 11.0}));
    int det = t.constant(Array({1, 2}, {20.0, 21.0}));
    CHECK(t.value(m.concat_latent(t, z, det)).data ==
          std::vector<double>{10.0, 11.0, 20.0, 21.0});
    CHECK(m.concat_latent(t, z, -1) == z);
    CHECK(m.concat_latent(t, -1, det) == det);
    REQUIRE_THROWS_AS(m.concat_latent(t, -1, -1), config_error);
}

TEST_CASE("decode variance transforms") {
    HetvaeModel m = tiny_model();
    zero_param(m, "dec.sigma.w2");
    zero_param(m, "dec.sigma.b2");
    Tape t(&m.params());
    int h = m.encode(t, toy_series());
    LatentState latent = m.encode_latent(t, h, {Array::zeros({4, 4})});
    auto decoded = m.decode(t, latent.z_cat, {0.2, 0.5, 0.8});
    REQUIRE(decoded.size() == 1);
    REQUIRE(t.value(decoded[0].sigma2).shape == (Shape{3, 1}));
    for (double v : t.value(decoded[0].sigma2).data)
        CHECK(v == Catch::Approx(0.01 + std::log(2.0)).epsilon(1e-14));

    HetvaeConfig cfg = tiny_config();
    cfg.het = false;
    cfg.sigma2_c = 1.0;
    HetvaeModel homo(cfg);
    homo.init_params(Rng(42));
    homo.set_union_times({{0.0, 0.1, 0.3, 0.55, 0.7, 0.9, 1.0}});
    Tape t2(&homo.params());
    int h2 = homo.encode(t2, toy_series());
    LatentState l2 = homo.encode_latent(t2, h2, {Array::zeros({4, 4})});
    auto dec2 = homo.decode(t2, l2.z_cat, {0.2, 0.5, 0.8});
    for (double v : t2.value(dec2[0].sigma2).data) CHECK(v == 1.0);
}

TEST_CASE("decode matches hand-composed untand plus mlp oracle") {
    HetvaeModel m = tiny_model();
    Tape t(&m.params());
    int h = m.encode(t, toy_series());
    Array noise = Array::zeros({4, 4});
    Rng rng(9);
    for (auto& v : noise.data) v = rng.normal();
    LatentState latent = m.encode_latent(t, h, {noise});
    std::vector<double> queries{0.15, 0.6};
    auto decoded = m.decode(t, latent.z_cat, queries);

    // independent composition: z_cat columns as channels observed at refs
    const Array zc = t.value(latent.z_cat[0]);
    std::vector<Channel> chans;
    for (std::size_t c = 0; c < zc.shape[1]; ++c) {
        Channel ch;
        ch.t = m.refs();
        for (std::size_t k = 0; k < zc.shape[0]; ++k) ch.x.push_back(zc.at(k, c));
        chans.push_back(std::move(ch));
    }
    UnionTimeSet dec_u(zc.shape[1], m.refs());
    Array h_dec = untand(queries, chans, weights_from_store(m, "untan.dec"), dec_u);
    for (std::size_t i = 0; i < queries.size(); ++i) {
        const double mu_expect = run_mlp(m, "dec.mu", h_dec, i)[0];
        const double raw = run_mlp(m, "dec.sigma", h_dec, i)[0];
        const double sig_expect = 0.01 + std::log1p(std::exp(raw));
        CHECK(t.value(decoded[0].mu).at(i, 0) == Catch::Approx(mu_expect).margin(1e-10));
        CHECK(t.value(decoded[0].sigma2).at(i, 0) == Catch::Approx(sig_expect).margin(1e-10));
    }
}

TEST_CASE("decoding is sample-consistent under permutation") {
    HetvaeModel m = tiny_model();
    Rng rng(31);
    std::vector<Array> noise;
    for (int s = 0; s < 3; ++s) {
        Array n = Array::zeros({4, 4});
        for (auto& v : n.data) v = rng.normal();
        noise.push_back(std::move(n));
    }
    std::vector<double> queries{0.25, 0.75};
    auto run = [&](const std::vector<Array>& ns) {
        Tape t(&m.params());
        int h = m.encode(t, toy_series());
        LatentState latent = m.encode_latent(t, h, ns);
        auto decoded = m.decode(t, latent.z_cat, queries);
        std::vector<std::vector<double>> mus;
        for (const auto& d : decoded) mus.push_back(t.value(d.mu).data);
        return mus;
    };
    auto base = run(noise);
    auto permuted = run({noise[2], noise[0], noise[1]});
    CHECK(permuted[0] == base[2]);
    CHECK(permuted[1] == base[0]);
    CHECK(permuted[2] == base[1]);
}

TEST_CASE("heteroscedastic variance respects the floor for random weights") {
    for (std::uint64_t seed : {1ULL, 2ULL, 3ULL}) {
        HetvaeModel m = tiny_model(seed);
        Tape t(&m.params());
        int h = m.encode(t, toy_series());
        LatentState latent = m.encode_latent(t, h, {Array::full({4, 4}, 1.5)});
        auto decoded = m.decode(t, latent.z_cat, {0.1, 0.9});
        for (double v : t.value(decoded[0].sigma2).data) CHECK(v >= 0.01);
    }
}

TEST_CASE("encoder and decoder share no parameter storage") {
    HetvaeModel m = tiny_model();
    std::set<std::string> enc, dec;
    for (const auto& name : m.params().names()) {
        if (name.rfind("untan.enc.", 0) == 0) enc.insert(name.substr(10));
        if (name.rfind("untan.dec.", 0) == 0) dec.insert(name.substr(10));
    }
    CHECK(!enc.empty());
    for (const auto& n : enc)
        if (dec.count(n))
            CHECK(&m.params().at("untan.enc." + n) != &m.params().at("untan.dec." + n));
}

TEST_CASE("sample_output trivial and monte carlo cases") {
    OutputDistribution dist;
    dist.times = {0.1, 0.2};
    dist.mu = Array({2, 1}, {1.0, -1.0});
    dist.sigma2 = Array({2, 1}, {0.01, 0.04});
    CHECK(sample_output(dist, Array::zeros({2, 1})).data == dist.mu.data);
    Array one = sample_output(dist, Array::full({2, 1}, 1.0));
    CHECK(one.data[0] == Catch::Approx(1.1).epsilon(1e-14));
    CHECK(one.data[1] == Catch::Approx(-0.8).epsilon(1e-14));

    Rng rng(55);
    const std::size_t n = 100000;
    double acc = 0.0, acc2 = 0.0;
    for (std::size_t i = 0; i < n; ++i) {
        Array noise = Array::zeros({2, 1});
        noise.data[0] = rng.normal();
        const double v = sample_output(dist, noise).data[0];
        acc += v;
        acc2 += v * v;
    }
    const double mean = acc / n;
    const double sd = std::sqrt(acc2 / n - mean * mean);
    CHECK(sd == Catch::Approx(0.1).epsilon(0.02));
}

TEST_CASE("model config json round-trip") {
    HetvaeConfig cfg = tiny_config();
    cfg.het = false;
    cfg.pooling_intensity = Pooling::sum;
    nlohmann::json j = cfg;
    HetvaeConfig back = j.get<HetvaeConfig>();
    CHECK(back.het == false);
    CHECK(back.pooling_intensity == Pooling::sum);
    CHECK(back.embed_dim == cfg.embed_dim);
}
