#include "seqsense/config.hpp"

#include <fstream>
#include <set>
#include <sstream>

#include "model_json.hpp"

namespace seqsense {

namespace {

using nlohmann::json;

const std::set<std::string> kKnownKeys = {
    "k_users",      "models",   "schemes",           "period",       "targets",
    "snr_db",       "k_grid",   "delay_pairs",       "n_trials",     "horizon",
    "seed",         "constants_samples",             "phi_quantile", "delta_kl"};

[[noreturn]] void fail(const std::string& msg) { throw ConfigError("config: " + msg); }

const json& require(const json& j, const char* key) {
    if (!j.contains(key)) fail(std::string("missing required key '") + key + "'");
    return j.at(key);
}

int64_t require_int(const json& j, const char* key, int64_t lo, int64_t hi) {
    const json& v = require(j, key);
    if (!v.is_number_integer()) fail(std::string("'") + key + "' must be an integer");
    const auto x = v.get<int64_t>();
    if (x < lo || x > hi)
        fail(std::string("'") + key + "' must lie in [" + std::to_string(lo) + ", " +
             std::to_string(hi) + "]");
    return x;
}

double get_probability(const json& v, const char* context) {
    if (!v.is_number()) fail(std::string(context) + " must be a number");
    const double x = v.get<double>();
    if (!(x > 0.0 && x < 1.0)) fail(std::string(context) + " must lie in (0, 1)");
    return x;
}

SchemePoint parse_scheme(const json& js) {
    if (!js.is_object() || !js.contains("scheme")) fail("each schemes entry needs a 'scheme'");
    const auto name = js.at("scheme").get<std::string>();
    const auto scheme = scheme_from_name(name);
    if (!scheme) fail("unknown scheme '" + name + "' (centralized | qsprt | rlt)");
    SchemePoint p{*scheme, 0};
    if (*scheme == Scheme::Centralized) {
        if (js.contains("s_bits")) fail("centralized scheme takes no 's_bits'");
        return p;
    }
    if (!js.contains("s_bits")) fail("scheme '" + name + "' needs 's_bits'");
    const auto s = js.at("s_bits").get<int64_t>();
    if (s < 1 || s > 24) fail("'s_bits' must lie in [1, 24]");
    p.s_bits = static_cast<int>(s);
    return p;
}

}  // namespace

ExperimentConfig parse_experiment_config(const std::string& json_text) {
    json j;
    try {
        j = json::parse(json_text);
    } catch (const json::exception& e) {
        fail(std::string("not valid JSON: ") + e.what());
    }
    if (!j.is_object()) fail("top level must be a JSON object");
    for (const auto& [key, value] : j.items())
        if (!kKnownKeys.contains(key)) fail("unknown key '" + key + "'");

    ExperimentConfig cfg;
    try {
        cfg.k_users = static_cast<int>(require_int(j, "k_users", 1, 1024));
        cfg.period = static_cast<int>(require_int(j, "period", 1, 1 << 20));
        cfg.n_trials = require_int(j, "n_trials", 1, int64_t{1} << 40);
        if (j.contains("horizon")) cfg.horizon = require_int(j, "horizon", 1, int64_t{1} << 40);
        if (j.contains("seed")) {
            if (!j.at("seed").is_number_unsigned() && !j.at("seed").is_number_integer())
                fail("'seed' must be a nonnegative integer");
            cfg.seed = j.at("seed").get<uint64_t>();
        }
        if (j.contains("constants_samples"))
            cfg.constants_samples = require_int(j, "constants_samples", 100000, int64_t{1} << 40);
        if (j.contains("phi_quantile")) {
            cfg.phi_quantile = get_probability(j.at("phi_quantile"), "'phi_quantile'");
        }
        if (j.contains("delta_kl")) {
            const auto s = j.at("delta_kl").get<std::string>();
            if (s == "h0")
                cfg.delta_kl = DeltaKl::H0;
            else if (s == "h1")
                cfg.delta_kl = DeltaKl::H1;
            else if (s == "mean")
                cfg.delta_kl = DeltaKl::Mean;
            else
                fail("'delta_kl' must be one of h0 | h1 | mean");
        }

        const json& jmodels = require(j, "models");
        if (!jmodels.is_array() || jmodels.empty()) fail("'models' must be a non-empty array");
        for (const auto& jm : jmodels) {
            try {
                cfg.models.push_back(detail::model_from_json(jm));
            } catch (const std::exception& e) {
                fail(std::string("bad model entry: ") + e.what());
            }
        }
        if (cfg.models.size() != 1 && static_cast<int>(cfg.models.size()) != cfg.k_users)
            fail("'models' must have one entry or exactly k_users entries");

        const json& jschemes = require(j, "schemes");
        if (!jschemes.is_array() || jschemes.empty())
            fail("'schemes' must be a non-empty array");
        for (const auto& js : jschemes) cfg.schemes.push_back(parse_scheme(js));

        const json& jtargets = require(j, "targets");
        if (!jtargets.is_array()) fail("'targets' must be an array");
        for (const auto& jt : jtargets) {
            if (!jt.is_object()) fail("each targets entry must be {alpha, beta}");
            const double a = get_probability(require(jt, "alpha"), "'targets.alpha'");
            const double b = get_probability(require(jt, "beta"), "'targets.beta'");
            if (a + b >= 1.0) fail("each target must satisfy alpha + beta < 1");
            cfg.targets.emplace_back(a, b);
        }

        if (j.contains("snr_db")) {
            const json& v = j.at("snr_db");
            if (!v.is_array()) fail("'snr_db' must be an array of numbers");
            for (const auto& x : v) cfg.snr_db.push_back(x.get<double>());
        }
        if (j.contains("k_grid")) {
            const json& v = j.at("k_grid");
            if (!v.is_array()) fail("'k_grid' must be an array of integers");
            for (const auto& x : v) {
                const auto k = x.get<int64_t>();
                if (k < 1 || k > 1024) fail("'k_grid' entries must lie in [1, 1024]");
                cfg.k_grid.push_back(static_cast<int>(k));
            }
        }
        if (j.contains("delay_pairs")) {
            const json& v = j.at("delay_pairs");
            if (!v.is_array()) fail("'delay_pairs' must be an array of {h0, h1}");
            for (const auto& jp : v) {
                const double d0 = require(jp, "h0").get<double>();
                const double d1 = require(jp, "h1").get<double>();
                if (!(d0 > 0.0 && d1 > 0.0)) fail("'delay_pairs' entries must be positive");
                cfg.delay_pairs.emplace_back(d0, d1);
            }
        }
    } catch (const json::exception& e) {
        fail(std::string("malformed value: ") + e.what());
    }
    return cfg;
}

ExperimentConfig load_experiment_config(const std::string& path) {
    std::ifstream in(path);
    if (!in) throw ConfigError("config file not found: " + path);
    std::ostringstream buf;
    buf << in.rdbuf();
    try {
        return parse_experiment_config(buf.str());
    } catch (const ConfigError& e) {
        throw ConfigError(std::string(e.what()) + " (file: " + path + ")");
    }
}

}  // namespace seqsense
