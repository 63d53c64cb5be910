#pragma once

#include <cstdint>
#include <cstdio>
#include <fstream>
#include <string>

#include <json.hpp>

#include "hetvae/adam.hpp"
#include "hetvae/data.hpp"
#include "hetvae/errors.hpp"
#include "hetvae/model.hpp"
#include "hetvae/params.hpp"
#include "hetvae/rng.hpp"

namespace hetvae {

inline nlohmann::json array_to_json(const Array& a) {
    return {{"shape", a.shape}, {"data", a.data}};
}

inline Array array_from_json(const nlohmann::json& j) {
    return Array(j.at("shape").get<Shape>(), j.at("data").get<std::vector<double>>());
}

inline std::string config_hash(const nlohmann::json& j) {
    char buf[24];
    std::snprintf(buf, sizeof(buf), "%016llx",
                  static_cast<unsigned long long>(fnv1a(j.dump())));
    return buf;
}

// Single JSON document: one entry per parameter path -> {shape, data}, plus a
// "meta" object carrying the config (and its hash), seed, step count,
// optimizer moments, the fitted normalizer, the frozen union time set and the
// resolved run configuration. Doubles round-trip exactly through the shortest
// decimal representation.
inline void save_checkpoint(const std::string& path, const HetvaeModel& model,
                            const AdamState& opt, const Normalizer& nz, std::uint64_t seed,
                            const nlohmann::json& run_config) {
    nlohmann::json j;
    for (const auto& [name, entry] : model.params().entries()) {
        j[name] = array_to_json(entry.value);
        if (!entry.trainable) j[name]["trainable"] = false;
    }
    nlohmann::json opt_j;
    opt_j["step"] = opt.step;
    opt_j["lr"] = opt.lr;
    opt_j["beta1"] = opt.beta1;
    opt_j["beta2"] = opt.beta2;
    opt_j["eps"] = opt.eps;
    for (const auto& [name, m] : opt.m) opt_j["m"][name] = array_to_json(m);
    for (const auto& [name, v] : opt.v) opt_j["v"][name] = array_to_json(v);

    nlohmann::json cfg_j = model.config();
    nlohmann::json meta;
    meta["config"] = cfg_j;
    meta["config_hash"] = config_hash(cfg_j);
    meta["seed"] = seed;
    meta["step"] = opt.step;
    meta["optimizer"] = std::move(opt_j);
    meta["normalizer"] = normalizer_to_json(nz);
    meta["union_times"] = model.union_times();
    meta["run_config"] = run_config;
    j["meta"] = std::move(meta);

    std::ofstream os(path);
    if (!os) throw data_error("save_checkpoint: cannot open " + path);
    os << j.dump(2) << '\n';
}

struct LoadedCheckpoint {
    HetvaeModel model;
    AdamState opt;
    Normalizer normalizer;
    std::uint64_t seed = 0;
    std::string config_hash;
    nlohmann::json run_config;
};

inline LoadedCheckpoint load_checkpoint(const std::string& path) {
    std::ifstream is(path);
    if (!is) throw data_error("load_checkpoint: cannot open " + path);
    nlohmann::json j;
    try {
        is >> j;
    } catch (const nlohmann::json::exception& e) {
        throw data_error("load_checkpoint: " + path + ": " + e.what());
    }
    const auto& meta = j.at("meta");
    HetvaeConfig cfg = meta.at("config").get<HetvaeConfig>();
    LoadedCheckpoint out{HetvaeModel(cfg), AdamState{}, Normalizer{}, 0, "", {}};
    for (auto it = j.begin(); it != j.end(); ++it) {
        if (it.key() == "meta") continue;
        const bool trainable = !it.value().contains("trainable") ||
                               it.value().at("trainable").get<bool>();
        out.model.params().add(it.key(), array_from_json(it.value()), trainable);
    }
    const auto& opt_j = meta.at("optimizer");
    out.opt.step = opt_j.at("step").get<std::uint64_t>();
    out.opt.lr = opt_j.at("lr").get<double>();
    out.opt.beta1 = opt_j.at("beta1").get<double>();
    out.opt.beta2 = opt_j.at("beta2").get<double>();
    out.opt.eps = opt_j.at("eps").get<double>();
    if (opt_j.contains("m"))
        for (auto it = opt_j.at("m").begin(); it != opt_j.at("m").end(); ++it)
            out.opt.m[it.key()] = array_from_json(it.value());
    if (opt_j.contains("v"))
        for (auto it = opt_j.at("v").begin(); it != opt_j.at("v").end(); ++it)
            out.opt.v[it.key()] = array_from_json(it.value());
    out.normalizer = normalizer_from_json(meta.at("normalizer"));
    out.model.set_union_times(meta.at("union_times").get<UnionTimeSet>());
    out.seed = meta.at("seed").get<std::uint64_t>();
    out.config_hash = meta.at("config_hash").get<std::string>();
    if (meta.contains("run_config")) out.run_config = meta.at("run_config");
    return out;
}

}  // namespace hetvae
