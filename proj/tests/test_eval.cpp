#include <catch2/catch_amalgamated.hpp>

#include <cmath>
#include <fstream>

#include "hetvae/eval.hpp"

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

}  // namespace

TEST_CASE("log mixture density matches a direct mixture oracle") {
    Rng rng(3);
    detail::SampleOutputs so;
    for (int s = 0; s < 3; ++s) {
        Array mu = Array::zeros({2, 1}), s2 = Array::zeros({2, 1});
        for (auto& v : mu.data) v = rng.uniform(-2.0, 2.0);
        for (auto& v : s2.data) v = rng.uniform(0.1, 2.0);
        so.mu.push_back(mu);
        so.sigma2.push_back(s2);
    }
    for (double x : {-1.0, 0.0, 1.3}) {
        double direct = 0.0;
        for (int s = 0; s < 3; ++s)
            direct += std::exp(gaussian_logpdf(x, so.mu[s].at(1, 0), so.sigma2[s].at(1, 0)));
        direct = std::log(direct / 3.0);
        CHECK(detail::log_mixture_density(x, so, 1, 0) == Catch::Approx(direct).margin(1e-10));
    }
}

TEST_CASE("mixture nll is invariant to sample order and equal components") {
    Rng rng(4);
    detail::SampleOutputs so;
    for (int s = 0; s < 4; ++s) {
        Array mu = Array::full({1, 1}, rng.uniform(-1.0, 1.0));
        Array s2 = Array::full({1, 1}, rng.uniform(0.2, 1.5));
        so.mu.push_back(mu);
        so.sigma2.push_back(s2);
    }
    detail::SampleOutputs reversed;
    for (int s = 3; s >= 0; --s) {
        reversed.mu.push_back(so.mu[s]);
        reversed.sigma2.push_back(so.sigma2[s]);
    }
    CHECK(detail::log_mixture_density(0.4, so, 0, 0) ==
          Catch::Approx(detail::log_mixture_density(0.4, reversed, 0, 0)).margin(1e-12));

    // identical components collapse to the single-component value
    detail::SampleOutputs twice;
    for (int rep = 0; rep < 2; ++rep) {
        twice.mu.push_back(so.mu[0]);
        twice.sigma2.push_back(so.sigma2[0]);
    }
    const double single = gaussian_logpdf(0.4, so.mu[0].at(0, 0), so.sigma2[0].at(0, 0));
    CHECK(detail::log_mixture_density(0.4, twice, 0, 0) == Catch::Approx(single).margin(1e-12));
}

TEST_CASE("with the probabilistic path disabled every sample is identical") {
    HetvaeConfig cfg = tiny_config();
    cfg.prob_path = false;
    HetvaeModel m(cfg);
    m.init_params(Rng(8));
    m.set_union_times({{0.0, 0.1, 0.3, 0.55, 0.7, 0.9, 1.0}});
    IrregularSeries cond = toy_series();
    IrregularSeries target;
    target.id = "t";
    target.channels.push_back(Channel{{0.3, 0.7}, {0.2, -0.4}});
    const double one = mixture_nll(m, cond, target, 1, Rng(5));
    const double five = mixture_nll(m, cond, target, 5, Rng(6));
    CHECK(one == Catch::Approx(five).margin(1e-12));
}

TEST_CASE("point metrics basics") {
    auto [mae0, mse0] = point_metrics({1.0, 2.0}, {1.0, 2.0});
    CHECK(mae0 == 0.0);
    CHECK(mse0 == 0.0);
    auto [mae1, mse1] = point_metrics({0.0, 0.0}, {1.0, -1.0});
    CHECK(mae1 == 1.0);
    CHECK(mse1 == 1.0);

    Rng rng(9);
    std::vector<double> p(20), t(20);
    for (std::size_t i = 0; i < 20; ++i) {
        p[i] = rng.uniform(-1.0, 1.0);
        t[i] = rng.uniform(-1.0, 1.0);
    }
    auto [mae, mse] = point_metrics(p, t);
    double em = 0.0, es = 0.0;
    for (std::size_t i = 0; i < 20; ++i) {
        em += std::abs(t[i] - p[i]);
        es += (t[i] - p[i]) * (t[i] - p[i]);
    }
    CHECK(mae == Catch::Approx(em / 20.0).margin(1e-15));
    CHECK(mse == Catch::Approx(es / 20.0).margin(1e-15));
    CHECK(mae * mae <= mse + 1e-15);
}

TEST_CASE("perfect homoscedastic model scores the closed-form nll") {
    // all-zero weights predict mu = 0 exactly; data that is identically zero
    // is matched perfectly, so nll = 0.5*log(2*pi) and mse = 0
    HetvaeConfig cfg = tiny_config();
    cfg.het = false;
    cfg.sigma2_c = 1.0;
    HetvaeModel m(cfg);
    m.init_params(Rng(10));
    for (const auto& name : m.params().names()) {
        Array& a = m.params().mutable_at(name);
        std::fill(a.data.begin(), a.data.end(), 0.0);
    }
    m.set_union_times({{0.1, 0.3, 0.5, 0.7, 0.9}});
    Dataset test;
    for (int n = 0; n < 3; ++n) {
        IrregularSeries s;
        s.id = "z" + std::to_string(n);
        s.channels.push_back(Channel{{0.1, 0.3, 0.5, 0.7, 0.9}, {0.0, 0.0, 0.0, 0.0, 0.0}});
        test.push_back(s);
    }
    EvalMetrics met = evaluate(m, test, 0.5, 4, 7);
    CHECK(met.nll == Catch::Approx(0.9189385332046727).margin(1e-12));
    CHECK(met.mse == 0.0);
    CHECK(met.mae == 0.0);
}

TEST_CASE("evaluate aggregates per-case predictions observation-weighted") {
    HetvaeModel m = tiny_model();
    Dataset test;
    Rng rng(21);
    for (int n = 0; n < 5; ++n) {
        IrregularSeries s;
        s.id = "c" + std::to_string(n);
        Channel c;
        double t = 0.02 + 0.01 * n;
        const int count = 4 + n;
        for (int i = 0; i < count; ++i) {
            c.t.push_back(t);
            c.x.push_back(rng.uniform(-1.0, 1.0));
            t += 0.9 / count;
        }
        s.channels.push_back(c);
        test.push_back(s);
    }
    const std::uint64_t seed = 31;
    EvalMetrics got = evaluate(m, test, 0.5, 6, seed);

    // manual aggregation with the same per-case streams
    Rng master(seed);
    double nll = 0.0, mae = 0.0, mse = 0.0;
    std::size_t count = 0;
    for (std::size_t i = 0; i < test.size(); ++i) {
        Rng case_rng = master.split(i);
        auto [cond, target] = split_condition_target(test[i], 0.5, case_rng);
        if (target.total_observations() == 0) continue;
        auto pred = detail::predict_case(m, cond, target, 6, case_rng.split(1));
        for (std::size_t j = 0; j < pred.target.size(); ++j) {
            nll -= pred.log_mix[j];
            mae += std::abs(pred.target[j] - pred.mix_mean[j]);
            mse += (pred.target[j] - pred.mix_mean[j]) * (pred.target[j] - pred.mix_mean[j]);
        }
        count += pred.target.size();
    }
    REQUIRE(count == got.n_targets);
    CHECK(got.nll == Catch::Approx(nll / count).margin(1e-12));
    CHECK(got.mae == Catch::Approx(mae / count).margin(1e-12));
    CHECK(got.mse == Catch::Approx(mse / count).margin(1e-12));
}

TEST_CASE("multi-seed report has zero std for repeated seeds") {
    HetvaeModel m = tiny_model();
    Dataset test{toy_series()};
    test[0].channels[0] = Channel{{0.1, 0.3, 0.5, 0.7}, {0.2, -0.3, 0.4, 0.1}};
    EvalReport single = evaluate_seeds(m, test, 0.5, 3, {5});
    CHECK(single.nll_std == 0.0);
    EvalReport same = evaluate_seeds(m, test, 0.5, 3, {5, 5});
    CHECK(same.nll_std == 0.0);
    CHECK(same.nll_mean == single.nll_mean);
    EvalReport diff = evaluate_seeds(m, test, 0.5, 3, {5, 6, 7});
    CHECK(diff.seeds.size() == 3);
}

TEST_CASE("evaluate is identical with parallel jobs") {
    HetvaeModel m = tiny_model();
    Dataset test;
    Rng rng(41);
    for (int n = 0; n < 12; ++n) {
        IrregularSeries s;
        s.id = "c" + std::to_string(n);
        Channel c;
        double t = 0.03;
        for (int i = 0; i < 5; ++i) {
            c.t.push_back(t + 0.002 * n);
            c.x.push_back(rng.uniform(-1.0, 1.0));
            t += 0.2;
        }
        s.channels.push_back(c);
        test.push_back(s);
    }
    EvalMetrics serial = evaluate(m, test, 0.5, 4, 3, 1);
    EvalMetrics parallel = evaluate(m, test, 0.5, 4, 3, 4);
    CHECK(serial.nll == parallel.nll);
    CHECK(serial.mae == parallel.mae);
    CHECK(serial.mse == parallel.mse);
}

TEST_CASE("interpolation trace matches the moment-matching oracle") {
    HetvaeModel m = tiny_model();
    IrregularSeries cond = toy_series();
    std::vector<double> grid{0.0, 0.25, 0.5, 0.75, 1.0};
    const std::size_t S = 20;
    InterpolationTrace tr = interpolation_trace(m, cond, grid, S, Rng(77));
    auto so = detail::decode_samples(m, cond, grid, S, Rng(77));
    for (std::size_t i = 0; i < grid.size(); ++i) {
        double mean = 0.0, second = 0.0, min_s2 = 1e300;
        for (std::size_t s = 0; s < S; ++s) {
            mean += so.mu[s].at(i, 0);
            second += so.sigma2[s].at(i, 0) + so.mu[s].at(i, 0) * so.mu[s].at(i, 0);
            min_s2 = std::min(min_s2, so.sigma2[s].at(i, 0));
        }
        mean /= S;
        const double var = second / S - mean * mean;
        CHECK(tr.mean.at(i, 0) == Catch::Approx(mean).margin(1e-12));
        CHECK(tr.stdev.at(i, 0) == Catch::Approx(std::sqrt(var)).margin(1e-12));
        // total variance dominates the within-component floor
        CHECK(tr.stdev.at(i, 0) * tr.stdev.at(i, 0) >= min_s2 - 1e-12);
        CHECK(tr.stdev.at(i, 0) >= std::sqrt(0.01) - 1e-12);
    }
}

TEST_CASE("trace with one sample reduces to the per-sample std") {
    HetvaeConfig cfg = tiny_config();
    cfg.prob_path = false;  // deterministic latent: samples coincide
    HetvaeModel m(cfg);
    m.init_params(Rng(9));
    m.set_union_times({{0.0, 0.1, 0.3, 0.55, 0.7, 0.9, 1.0}});
    IrregularSeries cond = toy_series();
    std::vector<double> grid{0.2, 0.6};
    InterpolationTrace tr = interpolation_trace(m, cond, grid, 1, Rng(5));
    auto so = detail::decode_samples(m, cond, grid, 1, Rng(5));
    for (std::size_t i = 0; i < grid.size(); ++i)
        CHECK(tr.stdev.at(i, 0) == Catch::Approx(std::sqrt(so.sigma2[0].at(i, 0))).margin(1e-12));
}

TEST_CASE("trace denormalization restores data units") {
    HetvaeModel m = tiny_model();
    Normalizer nz;
    nz.mean = {3.0};
    nz.stdev = {2.0};
    nz.t_min = 10.0;
    nz.t_max = 20.0;
    IrregularSeries cond = toy_series();
    std::vector<double> grid{0.0, 1.0};
    InterpolationTrace norm = interpolation_trace(m, cond, grid, 4, Rng(3));
    InterpolationTrace data = interpolation_trace(m, cond, grid, 4, Rng(3), &nz);
    CHECK(data.times[0] == 10.0);
    CHECK(data.times[1] == 20.0);
    for (std::size_t i = 0; i < 2; ++i) {
        CHECK(data.mean.at(i, 0) == Catch::Approx(norm.mean.at(i, 0) * 2.0 + 3.0).margin(1e-12));
        CHECK(data.stdev.at(i, 0) == Catch::Approx(norm.stdev.at(i, 0) * 2.0).margin(1e-12));
    }
}

TEST_CASE("trace csv layout") {
    InterpolationTrace tr;
    tr.times = {0.5};
    tr.mean = Array({1, 2}, {1.0, 2.0});
    tr.stdev = Array({1, 2}, {0.25, 0.5});
    const std::string path = "/tmp/hetvae_test_trace.csv";
    write_trace_csv(path, tr);
    std::ifstream is(path);
    std::string line;
    std::getline(is, line);
    CHECK(line == "time,dim,mean,std");
    std::getline(is, line);
    CHECK(line == "0.5,0,1,0.25");
    std::getline(is, line);
    CHECK(line == "0.5,1,2,0.5");
}
