// Command-line entry points: generate / train / evaluate / interpolate /
// ablate. Every emitted artifact embeds the resolved run configuration and
// seed so any output can be reproduced from its own metadata.

#include <cstdint>
#include <filesystem>
#include <fstream>
#include <functional>
#include <iostream>
#include <map>
#include <string>
#include <vector>

#include <CLI11.hpp>
#include <json.hpp>

#include "hetvae/hetvae.hpp"

namespace fs = std::filesystem;
using nlohmann::json;
using namespace hetvae;

namespace {

struct EvalConfig {
    double fraction = 0.5;
    std::size_t s_eval = 100;
    std::size_t n_seeds = 5;
};

struct RunConfig {
    std::uint64_t seed = 0;
    SyntheticConfig synthetic;
    HetvaeConfig model;
    TrainConfig train;
    EvalConfig eval;
};

json to_json_cfg(const RunConfig& rc) {
    json j;
    j["seed"] = rc.seed;
    j["synthetic"] = {{"n_trajectories", rc.synthetic.n_trajectories},
                      {"n_points", rc.synthetic.n_points},
                      {"n_anchors", rc.synthetic.n_anchors},
                      {"bandwidth", rc.synthetic.bandwidth},
                      {"noise_std", rc.synthetic.noise_std},
                      {"min_obs", rc.synthetic.min_obs},
                      {"max_obs", rc.synthetic.max_obs}};
    j["model"] = rc.model;
    j["train"] = {{"lambda", rc.train.lambda},
                  {"s_train", rc.train.s_train},
                  {"batch_size", rc.train.batch_size},
                  {"iterations", rc.train.iterations},
                  {"lr", rc.train.lr},
                  {"alo", rc.train.alo},
                  {"beta1", rc.train.beta1},
                  {"beta2", rc.train.beta2},
                  {"eps", rc.train.eps},
                  {"checkpoint_interval", rc.train.checkpoint_interval}};
    j["eval"] = {{"fraction", rc.eval.fraction},
                 {"s_eval", rc.eval.s_eval},
                 {"n_seeds", rc.eval.n_seeds}};
    return j;
}

template <typename T>
void maybe(const json& j, const char* key, T& into) {
    if (j.contains(key)) j.at(key).get_to(into);
}

void merge_config_file(RunConfig& rc, const std::string& path) {
    std::ifstream is(path);
    if (!is) throw config_error("cannot open config file " + path);
    json j;
    try {
        is >> j;
    } catch (const json::exception& e) {
        throw config_error("config file " + path + ": " + e.what());
    }
    maybe(j, "seed", rc.seed);
    if (j.contains("synthetic")) {
        const json& s = j["synthetic"];
        maybe(s, "n_trajectories", rc.synthetic.n_trajectories);
        maybe(s, "n_points", rc.synthetic.n_points);
        maybe(s, "n_anchors", rc.synthetic.n_anchors);
        maybe(s, "bandwidth", rc.synthetic.bandwidth);
        maybe(s, "noise_std", rc.synthetic.noise_std);
        maybe(s, "min_obs", rc.synthetic.min_obs);
        maybe(s, "max_obs", rc.synthetic.max_obs);
    }
    if (j.contains("model")) {
        json m = rc.model;  // defaults under, file over
        m.update(j["model"]);
        rc.model = m.get<HetvaeConfig>();
    }
    if (j.contains("train")) {
        const json& t = j["train"];
        maybe(t, "lambda", rc.train.lambda);
        maybe(t, "s_train", rc.train.s_train);
        maybe(t, "batch_size", rc.train.batch_size);
        maybe(t, "iterations", rc.train.iterations);
        maybe(t, "lr", rc.train.lr);
        maybe(t, "alo", rc.train.alo);
        maybe(t, "beta1", rc.train.beta1);
        maybe(t, "beta2", rc.train.beta2);
        maybe(t, "eps", rc.train.eps);
        maybe(t, "checkpoint_interval", rc.train.checkpoint_interval);
    }
    if (j.contains("eval")) {
        const json& e = j["eval"];
        maybe(e, "fraction", rc.eval.fraction);
        maybe(e, "s_eval", rc.eval.s_eval);
        maybe(e, "n_seeds", rc.eval.n_seeds);
    }
}

// flag > config file > built-in default: command-line values land in a
// shadow struct and are copied over the merged config only when the option
// was actually passed
struct Overrides {
    std::vector<std::function<void()>> appliers;

    template <typename T>
    void bind(CLI::Option* opt, const T* cli_value, T* target) {
        appliers.push_back([opt, cli_value, target] {
            if (opt->count() > 0) *target = *cli_value;
        });
    }
    void apply() const {
        for (const auto& fn : appliers) fn();
    }
};

void log_resolved(const RunConfig& rc, const std::string& command) {
    std::cerr << "[hetvae] " << command << " resolved config: " << to_json_cfg(rc).dump() << "\n";
}

void ensure_outdir(const std::string& out) {
    std::error_code ec;
    fs::create_directories(out, ec);
    if (ec) throw data_error("cannot create output directory " + out + ": " + ec.message());
}

// ---- generate ----

int cmd_generate(const RunConfig& rc, const std::string& out, bool force) {
    ensure_outdir(out);
    const std::string train_p = out + "/train.jsonl", val_p = out + "/val.jsonl",
                      test_p = out + "/test.jsonl", man_p = out + "/manifest.json";
    if (!force)
        for (const auto& p : {train_p, val_p, test_p, man_p})
            if (fs::exists(p))
                throw config_error("output " + p + " exists; pass --force to overwrite");

    SyntheticConfig scfg = rc.synthetic;
    scfg.seed = rc.seed;
    Dataset dense = generate_synthetic(scfg);
    Rng sub_master = Rng(rc.seed).split(2);
    Dataset sparse;
    sparse.reserve(dense.size());
    for (std::size_t i = 0; i < dense.size(); ++i) {
        Rng stream = sub_master.split(i);
        sparse.push_back(subsample(dense[i], scfg.min_obs, scfg.max_obs, stream));
    }
    const std::uint64_t split_seed = Rng(rc.seed).split(3).next_u64();
    SplitIndices idx = split_dataset_indices(sparse.size(), split_seed);
    auto select = [&](const std::vector<std::size_t>& which) {
        Dataset d;
        d.reserve(which.size());
        for (auto i : which) d.push_back(sparse[i]);
        return d;
    };
    Dataset train_d = select(idx.train), val_d = select(idx.val), test_d = select(idx.test);
    write_dataset(train_d, train_p);
    write_dataset(val_d, val_p);
    write_dataset(test_d, test_p);

    json man;
    man["meta"] = {{"run_config", to_json_cfg(rc)},
                   {"seed", rc.seed},
                   {"split_seed", split_seed},
                   {"rule", "shuffled ids; train = floor(0.64*n), train+val = floor(0.80*n), "
                            "test = rest"}};
    man["counts"] = {{"train", train_d.size()}, {"val", val_d.size()}, {"test", test_d.size()}};
    auto ids = [](const Dataset& d) {
        std::vector<std::string> v;
        for (const auto& s : d) v.push_back(s.id);
        return v;
    };
    man["splits"] = {{"train", ids(train_d)}, {"val", ids(val_d)}, {"test", ids(test_d)}};
    std::ofstream(man_p) << man.dump(2) << '\n';
    std::cout << "wrote " << train_d.size() << "/" << val_d.size() << "/" << test_d.size()
              << " cases to " << out << "\n";
    return 0;
}

// ---- train ----

struct TrainedArtifacts {
    HetvaeModel model;
    AdamState opt;
    Normalizer normalizer;
};

TrainedArtifacts run_training(const RunConfig& rc, const Dataset& raw_train,
                              const std::string& out_dir, bool emit_files,
                              const std::string& resume) {
    TrainConfig tcfg = rc.train;
    tcfg.seed = rc.seed;

    if (!resume.empty()) {
        LoadedCheckpoint ck = load_checkpoint(resume);
        json cfg_j = rc.model;
        if (config_hash(cfg_j) != ck.config_hash)
            throw config_error("resume: checkpoint config hash " + ck.config_hash +
                               " does not match resolved config " + config_hash(cfg_j));
        HetvaeModel model = std::move(ck.model);
        AdamState opt = std::move(ck.opt);
        const std::size_t start = opt.step;
        Dataset normed = apply_normalizer(raw_train, ck.normalizer);
        CheckpointFn on_ck = nullptr;
        if (emit_files) {
            on_ck = [&, out_dir](std::size_t iter, const std::vector<LossReport>&) {
                const std::string p = iter == tcfg.iterations
                                          ? out_dir + "/checkpoint.json"
                                          : out_dir + "/checkpoint_iter" + std::to_string(iter) +
                                                ".json";
                save_checkpoint(p, model, opt, ck.normalizer, rc.seed, to_json_cfg(rc));
            };
        }
        auto history = train(normed, model, tcfg, opt, start, on_ck);
        if (emit_files)
            write_loss_history(out_dir + "/loss.csv", history, start, /*append=*/start > 0);
        return {std::move(model), std::move(opt), ck.normalizer};
    }

    Normalizer nz = fit_normalizer(raw_train);
    Dataset train_d = apply_normalizer(raw_train, nz);
    HetvaeModel model(rc.model);
    model.init_params(Rng(rc.seed));
    model.set_union_times(union_times(train_d));
    AdamState opt;
    CheckpointFn on_ck = nullptr;
    if (emit_files) {
        on_ck = [&, out_dir](std::size_t iter, const std::vector<LossReport>&) {
            const std::string p =
                iter == tcfg.iterations
                    ? out_dir + "/checkpoint.json"
                    : out_dir + "/checkpoint_iter" + std::to_string(iter) + ".json";
            save_checkpoint(p, model, opt, nz, rc.seed, to_json_cfg(rc));
        };
    }
    auto history = train(train_d, model, tcfg, opt, 0, on_ck);
    if (emit_files) {
        write_loss_history(out_dir + "/loss.csv", history);
        std::ofstream(out_dir + "/normalizer.json") << normalizer_to_json(nz).dump(2) << '\n';
    }
    return {std::move(model), std::move(opt), std::move(nz)};
}

int cmd_train(const RunConfig& rc, const std::string& data_dir, const std::string& out,
              const std::string& resume) {
    ensure_outdir(out);
    const std::string train_path = data_dir + "/train.jsonl";
    if (!fs::exists(train_path)) throw data_error("missing dataset file " + train_path);
    Dataset raw = read_dataset(train_path);
    run_training(rc, raw, out, /*emit_files=*/true, resume);
    std::cout << "trained to iteration " << rc.train.iterations << "; checkpoint at " << out
              << "/checkpoint.json\n";
    return 0;
}

// ---- evaluate ----

int cmd_evaluate(const RunConfig& rc, bool model_cfg_given, const std::string& checkpoint,
                 const std::string& data_dir, const std::string& report_path, std::size_t jobs) {
    LoadedCheckpoint ck = load_checkpoint(checkpoint);
    if (model_cfg_given) {
        json cfg_j = rc.model;
        if (config_hash(cfg_j) != ck.config_hash)
            throw config_error("checkpoint config hash " + ck.config_hash +
                               " does not match requested config " + config_hash(cfg_j));
    }
    const std::string test_path = data_dir + "/test.jsonl";
    if (!fs::exists(test_path)) throw data_error("missing dataset file " + test_path);
    Dataset test_d = apply_normalizer(read_dataset(test_path), ck.normalizer);
    std::vector<std::uint64_t> seeds;
    for (std::size_t k = 0; k < rc.eval.n_seeds; ++k) seeds.push_back(rc.seed + k);
    EvalReport rep = evaluate_seeds(ck.model, test_d, rc.eval.fraction, rc.eval.s_eval, seeds,
                                    jobs);
    json j = eval_report_to_json(rep);
    j["meta"] = {{"run_config", to_json_cfg(rc)},
                 {"seed", rc.seed},
                 {"checkpoint", checkpoint},
                 {"config_hash", ck.config_hash}};
    if (!report_path.empty()) {
        std::ofstream os(report_path);
        if (!os) throw data_error("cannot open " + report_path);
        os << j.dump(2) << '\n';
    }
    std::cout << j.dump(2) << "\n";
    return 0;
}

// ---- interpolate ----

int cmd_interpolate(const RunConfig& rc, const std::string& checkpoint,
                    const std::string& data_path, const std::string& out,
                    std::vector<std::string> ids, std::vector<std::size_t> cond_sizes,
                    std::size_t grid_points) {
    LoadedCheckpoint ck = load_checkpoint(checkpoint);
    Dataset normed = apply_normalizer(read_dataset(data_path), ck.normalizer);
    ensure_outdir(out);
    if (ids.empty())
        for (std::size_t i = 0; i < std::min<std::size_t>(3, normed.size()); ++i)
            ids.push_back(normed[i].id);
    if (cond_sizes.empty()) cond_sizes = {3, 10, 20};
    std::vector<double> grid(grid_points);
    for (std::size_t i = 0; i < grid_points; ++i)
        grid[i] = grid_points == 1
                      ? 0.5
                      : static_cast<double>(i) / static_cast<double>(grid_points - 1);
    for (const auto& id : ids) {
        const IrregularSeries* found = nullptr;
        for (const auto& s : normed)
            if (s.id == id) found = &s;
        if (!found) {
            std::string avail;
            for (std::size_t i = 0; i < std::min<std::size_t>(8, normed.size()); ++i)
                avail += (i ? ", " : "") + normed[i].id;
            throw data_error("unknown case id " + id + "; available ids start with: " + avail);
        }
        for (std::size_t m : cond_sizes) {
            Rng rng = Rng(rc.seed).split(fnv1a(id)).split(m);
            IrregularSeries cond;
            cond.id = found->id;
            for (const auto& c : found->channels) {
                Channel cc;
                const std::size_t take = std::min(m, c.t.size());
                auto pick = rng.sample_without_replacement(c.t.size(), take);
                for (auto i : pick) {
                    cc.t.push_back(c.t[i]);
                    cc.x.push_back(c.x[i]);
                }
                cond.channels.push_back(std::move(cc));
            }
            if (cond.total_observations() == 0) continue;
            InterpolationTrace tr = interpolation_trace(ck.model, cond, grid, rc.eval.s_eval,
                                                        rng.split(1), &ck.normalizer);
            write_trace_csv(out + "/trace_" + id + "_cond" + std::to_string(m) + ".csv", tr);
        }
    }
    json meta = {{"run_config", to_json_cfg(rc)}, {"seed", rc.seed},
                 {"checkpoint", checkpoint},     {"ids", ids},
                 {"cond_sizes", cond_sizes},     {"grid_points", grid_points}};
    std::ofstream(out + "/interpolate_meta.json") << meta.dump(2) << '\n';
    std::cout << "wrote traces for " << ids.size() << " case(s) to " << out << "\n";
    return 0;
}

// ---- ablate ----

const std::map<std::string, std::vector<std::string>>& ablation_table() {
    static const std::map<std::string, std::vector<std::string>> table = {
        {"full", {}},
        {"ALO", {"alo"}},
        {"DET", {"det"}},
        {"INT", {"int"}},
        {"HET-ALO", {"het", "alo"}},
        {"DET-ALO", {"det", "alo"}},
        {"PROB-ALO", {"prob", "alo"}},
        {"INT-DET-ALO", {"int", "det", "alo"}},
        {"HET-INT-DET-ALO", {"het", "int", "det", "alo"}},
    };
    return table;
}

RunConfig apply_ablation(RunConfig rc, const std::string& name) {
    std::string key = name;
    while (!key.empty() && key.front() == '-') key.erase(key.begin());
    auto it = ablation_table().find(key);
    if (it == ablation_table().end()) {
        std::string valid;
        for (const auto& [k, v] : ablation_table()) valid += (valid.empty() ? "" : ", ") + k;
        throw config_error("unknown ablation name " + name + "; valid names: " + valid);
    }
    for (const auto& flag : it->second) {
        if (flag == "alo") rc.train.alo = false;
        if (flag == "het") rc.model.het = false;
        if (flag == "int") rc.model.int_path = false;
        if (flag == "det") rc.model.det_path = false;
        if (flag == "prob") rc.model.prob_path = false;
    }
    return rc;
}

int cmd_ablate(const RunConfig& rc, const std::string& data_dir, const std::string& out,
               std::vector<std::string> variants, std::size_t n_seeds, std::size_t jobs) {
    if (variants.empty())
        for (const auto& [k, v] : ablation_table()) variants.push_back(k);
    ensure_outdir(out);
    const std::string train_path = data_dir + "/train.jsonl";
    const std::string test_path = data_dir + "/test.jsonl";
    if (!fs::exists(train_path)) throw data_error("missing dataset file " + train_path);
    if (!fs::exists(test_path)) throw data_error("missing dataset file " + test_path);
    Dataset raw_train = read_dataset(train_path);
    Dataset raw_test = read_dataset(test_path);

    json rows = json::array();
    std::string csv = "model,nll_mean,nll_std,mae_mean,mae_std,mse_mean,mse_std\n";
    for (const auto& name : variants) {
        RunConfig vcfg = apply_ablation(rc, name);
        std::vector<EvalMetrics> runs;
        for (std::size_t k = 0; k < n_seeds; ++k) {
            RunConfig scfg = vcfg;
            scfg.seed = rc.seed + k;
            TrainedArtifacts art = run_training(scfg, raw_train, out, /*emit_files=*/false, "");
            Dataset test_d = apply_normalizer(raw_test, art.normalizer);
            runs.push_back(
                evaluate(art.model, test_d, rc.eval.fraction, rc.eval.s_eval, scfg.seed, jobs));
            std::cerr << "[hetvae] ablate " << name << " seed " << scfg.seed << ": nll "
                      << runs.back().nll << " mae " << runs.back().mae << " mse "
                      << runs.back().mse << "\n";
        }
        auto stat = [&](auto get) {
            double mean = 0.0;
            for (const auto& r : runs) mean += get(r);
            mean /= static_cast<double>(runs.size());
            double var = 0.0;
            for (const auto& r : runs) var += (get(r) - mean) * (get(r) - mean);
            return std::make_pair(mean, std::sqrt(var / static_cast<double>(runs.size())));
        };
        auto [nm, ns] = stat([](const EvalMetrics& r) { return r.nll; });
        auto [am, as] = stat([](const EvalMetrics& r) { return r.mae; });
        auto [sm, ss] = stat([](const EvalMetrics& r) { return r.mse; });
        rows.push_back({{"model", name},
                        {"nll", {{"mean", nm}, {"std", ns}}},
                        {"mae", {{"mean", am}, {"std", as}}},
                        {"mse", {{"mean", sm}, {"std", ss}}}});
        char buf[256];
        std::snprintf(buf, sizeof(buf), "%s,%.17g,%.17g,%.17g,%.17g,%.17g,%.17g\n", name.c_str(),
                      nm, ns, am, as, sm, ss);
        csv += buf;
    }
    json j = {{"rows", rows},
              {"meta",
               {{"run_config", to_json_cfg(rc)}, {"seed", rc.seed}, {"train_seeds", n_seeds}}}};
    std::ofstream(out + "/ablate.json") << j.dump(2) << '\n';
    std::ofstream(out + "/ablate.csv") << csv;
    std::cout << csv;
    return 0;
}

}  // namespace

int main(int argc, char** argv) {
    CLI::App app{"HeTVAE: probabilistic interpolation of sparse irregular time series"};
    app.require_subcommand(1);

    RunConfig rc;
    RunConfig cli = rc;  // shadow struct for command-line values
    std::string config_path, out_dir = "out", data_dir = "data", checkpoint, resume, data_path;
    std::string report_path;
    bool force = false;
    std::size_t jobs = 1;
    std::vector<std::string> ids, variants;
    std::vector<std::size_t> cond_sizes;
    std::size_t grid_points = 100, ablate_seeds = 1;
    std::vector<std::string> disable_flags;  // --no-het etc., applied after merge
    Overrides ov;

    auto add_common = [&](CLI::App* cmd) {
        cmd->add_option("--config", config_path, "JSON config file");
        ov.bind(cmd->add_option("--seed", cli.seed, "master seed"), &cli.seed, &rc.seed);
        cmd->add_option("--out", out_dir, "output directory");
        cmd->add_flag("--force", force, "overwrite existing outputs");
        cmd->add_option("--jobs", jobs, "parallel workers for per-case evaluation");
    };
    auto add_model_train_opts = [&](CLI::App* cmd) {
        ov.bind(cmd->add_option("--iterations", cli.train.iterations, "training iterations"),
                &cli.train.iterations, &rc.train.iterations);
        ov.bind(cmd->add_option("--batch-size", cli.train.batch_size, "mini-batch size"),
                &cli.train.batch_size, &rc.train.batch_size);
        ov.bind(cmd->add_option("--lr", cli.train.lr, "learning rate"), &cli.train.lr,
                &rc.train.lr);
        ov.bind(cmd->add_option("--lambda", cli.train.lambda, "augmented objective weight"),
                &cli.train.lambda, &rc.train.lambda);
        ov.bind(cmd->add_option("--checkpoint-interval", cli.train.checkpoint_interval,
                                "periodic checkpoint interval (0 = end only)"),
                &cli.train.checkpoint_interval, &rc.train.checkpoint_interval);
        ov.bind(cmd->add_option("--ref-points", cli.model.ref_points, "reference point count"),
                &cli.model.ref_points, &rc.model.ref_points);
        ov.bind(cmd->add_option("--embed-dim", cli.model.embed_dim, "time embedding dim"),
                &cli.model.embed_dim, &rc.model.embed_dim);
        ov.bind(cmd->add_option("--heads", cli.model.heads, "attention heads"), &cli.model.heads,
                &rc.model.heads);
        ov.bind(cmd->add_option("--untan-dim", cli.model.untan_dim, "attention output dim"),
                &cli.model.untan_dim, &rc.model.untan_dim);
        ov.bind(cmd->add_option("--latent-dim", cli.model.latent_dim, "latent dim"),
                &cli.model.latent_dim, &rc.model.latent_dim);
        ov.bind(cmd->add_option("--mlp-width", cli.model.mlp_width, "mlp width"),
                &cli.model.mlp_width, &rc.model.mlp_width);
        ov.bind(cmd->add_option("--input-dims", cli.model.input_dims, "data dimensions"),
                &cli.model.input_dims, &rc.model.input_dims);
        ov.bind(cmd->add_option("--sigma2c", cli.model.sigma2_c, "homoscedastic output variance"),
                &cli.model.sigma2_c, &rc.model.sigma2_c);
        cmd->add_flag_callback("--no-het", [&] { disable_flags.push_back("het"); },
                               "homoscedastic output");
        cmd->add_flag_callback("--no-int", [&] { disable_flags.push_back("int"); },
                               "disable the intensity pathway");
        cmd->add_flag_callback("--no-det", [&] { disable_flags.push_back("det"); },
                               "disable the deterministic pathway");
        cmd->add_flag_callback("--no-prob", [&] { disable_flags.push_back("prob"); },
                               "disable the probabilistic pathway");
        cmd->add_flag_callback("--no-alo", [&] { disable_flags.push_back("alo"); },
                               "drop the augmented objective term");
    };

    CLI::App* generate = app.add_subcommand("generate", "synthesize the benchmark dataset");
    add_common(generate);
    ov.bind(generate->add_option("--trajectories", cli.synthetic.n_trajectories,
                                 "trajectory count"),
            &cli.synthetic.n_trajectories, &rc.synthetic.n_trajectories);
    ov.bind(generate->add_option("--points", cli.synthetic.n_points, "dense grid size"),
            &cli.synthetic.n_points, &rc.synthetic.n_points);
    ov.bind(generate->add_option("--min-obs", cli.synthetic.min_obs, "min observations per case"),
            &cli.synthetic.min_obs, &rc.synthetic.min_obs);
    ov.bind(generate->add_option("--max-obs", cli.synthetic.max_obs, "max observations per case"),
            &cli.synthetic.max_obs, &rc.synthetic.max_obs);
    ov.bind(generate->add_option("--noise-std", cli.synthetic.noise_std, "observation noise"),
            &cli.synthetic.noise_std, &rc.synthetic.noise_std);

    CLI::App* train_cmd = app.add_subcommand("train", "fit a model on a dataset directory");
    add_common(train_cmd);
    train_cmd->add_option("--data", data_dir, "dataset directory (train.jsonl)");
    train_cmd->add_option("--resume", resume, "checkpoint to resume from");
    add_model_train_opts(train_cmd);

    CLI::App* eval_cmd = app.add_subcommand("evaluate", "score a checkpoint on the test split");
    add_common(eval_cmd);
    eval_cmd->add_option("--checkpoint", checkpoint, "checkpoint path")->required();
    eval_cmd->add_option("--data", data_dir, "dataset directory (test.jsonl)");
    eval_cmd->add_option("--report", report_path, "write the report JSON here");
    ov.bind(eval_cmd->add_option("--fraction", cli.eval.fraction, "conditioning fraction"),
            &cli.eval.fraction, &rc.eval.fraction);
    ov.bind(eval_cmd->add_option("--s-eval", cli.eval.s_eval, "latent samples per case"),
            &cli.eval.s_eval, &rc.eval.s_eval);
    ov.bind(eval_cmd->add_option("--eval-seeds", cli.eval.n_seeds, "number of evaluation seeds"),
            &cli.eval.n_seeds, &rc.eval.n_seeds);
    add_model_train_opts(eval_cmd);

    CLI::App* interp_cmd = app.add_subcommand("interpolate", "emit interpolation trace CSVs");
    add_common(interp_cmd);
    interp_cmd->add_option("--checkpoint", checkpoint, "checkpoint path")->required();
    interp_cmd->add_option("--data", data_path, "dataset JSONL file")->required();
    interp_cmd->add_option("--ids", ids, "case ids (default: first three)");
    interp_cmd->add_option("--cond-sizes", cond_sizes, "conditioning sizes (default 3 10 20)");
    interp_cmd->add_option("--grid-points", grid_points, "uniform query grid size");
    ov.bind(interp_cmd->add_option("--s-eval", cli.eval.s_eval, "latent samples"),
            &cli.eval.s_eval, &rc.eval.s_eval);

    CLI::App* ablate_cmd = app.add_subcommand("ablate", "train and score ablation variants");
    add_common(ablate_cmd);
    ablate_cmd->add_option("--data", data_dir, "dataset directory");
    ablate_cmd->add_option("--variants", variants, "ablation names (default: all)");
    ablate_cmd->add_option("--train-seeds", ablate_seeds, "training seeds per variant");
    ov.bind(ablate_cmd->add_option("--fraction", cli.eval.fraction, "conditioning fraction"),
            &cli.eval.fraction, &rc.eval.fraction);
    ov.bind(ablate_cmd->add_option("--s-eval", cli.eval.s_eval, "latent samples per case"),
            &cli.eval.s_eval, &rc.eval.s_eval);
    add_model_train_opts(ablate_cmd);

    try {
        app.parse(argc, argv);
    } catch (const CLI::ParseError& e) {
        const int code = app.exit(e);
        return code == 0 ? 0 : 2;
    }

    try {
        if (!config_path.empty()) merge_config_file(rc, config_path);
        ov.apply();
        for (const auto& f : disable_flags) {
            if (f == "het") rc.model.het = false;
            if (f == "int") rc.model.int_path = false;
            if (f == "det") rc.model.det_path = false;
            if (f == "prob") rc.model.prob_path = false;
            if (f == "alo") rc.train.alo = false;
        }
        rc.model.validate();

        if (generate->parsed()) {
            log_resolved(rc, "generate");
            return cmd_generate(rc, out_dir, force);
        }
        if (train_cmd->parsed()) {
            log_resolved(rc, "train");
            return cmd_train(rc, data_dir, out_dir, resume);
        }
        if (eval_cmd->parsed()) {
            log_resolved(rc, "evaluate");
            const bool cfg_given =
                !config_path.empty() || !disable_flags.empty() ||
                eval_cmd->count("--ref-points") || eval_cmd->count("--embed-dim") ||
                eval_cmd->count("--heads") || eval_cmd->count("--untan-dim") ||
                eval_cmd->count("--latent-dim") || eval_cmd->count("--mlp-width") ||
                eval_cmd->count("--input-dims") || eval_cmd->count("--sigma2c");
            return cmd_evaluate(rc, cfg_given, checkpoint, data_dir, report_path, jobs);
        }
        if (interp_cmd->parsed()) {
            log_resolved(rc, "interpolate");
            return cmd_interpolate(rc, checkpoint, data_path, out_dir, ids, cond_sizes,
                                   grid_points);
        }
        if (ablate_cmd->parsed()) {
            log_resolved(rc, "ablate");
            return cmd_ablate(rc, data_dir, out_dir, variants, ablate_seeds, jobs);
        }
    } catch (const config_error& e) {
        std::cerr << "config error: " << e.what() << "\n";
        return 2;
    } catch (const dim_error& e) {
        std::cerr << "config error: " << e.what() << "\n";
        return 2;
    } catch (const data_error& e) {
        std::cerr << "data error: " << e.what() << "\n";
        return 3;
    } catch (const numeric_error& e) {
        std::cerr << "numerical failure: " << e.what() << "\n";
        return 4;
    } catch (const std::exception& e) {
        std::cerr << "error: " << e.what() << "\n";
        return 1;
    }
    return 0;
}
