#include "cpscal/scenario.hpp"

#include <fstream>
#include <sstream>

#include "json.hpp"

namespace cpscal {

namespace {

using nlohmann::json;

[[noreturn]] void config_fail(const std::string& origin, const std::string& what) {
    fail(ErrorCode::ConfigError, origin + ": " + what);
}

template <typename T>
T get_field(const json& j, const std::string& origin, const std::string& key, const T& fallback,
            bool required) {
    if (!j.contains(key)) {
        if (required) config_fail(origin, "missing field '" + key + "'");
        return fallback;
    }
    try {
        return j.at(key).get<T>();
    } catch (const json::exception& e) {
        config_fail(origin, "field '" + key + "': " + e.what());
    }
}

}  // namespace

Scenario parse_scenario(const std::string& json_text, const std::string& origin) {
    json doc;
    try {
        doc = json::parse(json_text);
    } catch (const json::exception& e) {
        config_fail(origin, std::string("not valid JSON: ") + e.what());
    }

    Scenario sc;
    sc.schema = get_field<int>(doc, origin, "schema", 1, true);
    if (sc.schema != 1) config_fail(origin, "unsupported schema version");

    if (!doc.contains("chain")) config_fail(origin, "missing field 'chain'");
    const json& chain = doc.at("chain");
    sc.chain.ambient_temp_c = get_field<double>(chain, origin, "ambient_temp_c", 20.0, false);
    if (!chain.contains("stages") || !chain.at("stages").is_array() || chain.at("stages").empty()) {
        config_fail(origin, "'chain.stages' must be a non-empty array");
    }
    int label = 1;
    for (const auto& s : chain.at("stages")) {
        const std::string so = origin + " chain.stages[" + std::to_string(label - 1) + "]";
        TopsGroundTruth t;
        t.k = get_field<double>(s, so, "k", 0.0, true);
        t.dtheta = get_field<double>(s, so, "dtheta", 0.0, true);
        t.resistance = get_field<double>(s, so, "resistance", 1.75, false);
        t.dtheta_temp_coeff = get_field<double>(s, so, "dtheta_temp_coeff", 0.0, false);
        t.label = label++;
        sc.chain.stages.push_back(t);
    }
    if (chain.contains("mmis")) {
        int m = 0;
        for (const auto& s : chain.at("mmis")) {
            const std::string so = origin + " chain.mmis[" + std::to_string(m++) + "]";
            MmiParams p;
            p.eta = get_field<double>(s, so, "eta", 0.5, false);
            p.tau = get_field<double>(s, so, "tau", 0.0, false);
            p.kappa = get_field<double>(s, so, "kappa", 0.0, false);
            sc.chain.mmis.push_back(p);
        }
    } else {
        sc.chain.mmis.assign(sc.chain.stages.size() + 1, MmiParams{});
    }

    if (doc.contains("instrument")) {
        const json& inst = doc.at("instrument");
        const std::string io = origin + " instrument";
        sc.instrument.v_min = get_field<double>(inst, io, "v_min", 0.0, false);
        sc.instrument.v_max = get_field<double>(inst, io, "v_max", 10.0, false);
        sc.instrument.v_step = get_field<double>(inst, io, "v_step", 0.01, false);
        sc.instrument.noise_sigma = get_field<double>(inst, io, "noise_sigma", 0.0, false);
        sc.instrument.rng_seed = get_field<std::uint64_t>(inst, io, "rng_seed", 0, false);
    }

    const std::string mode = get_field<std::string>(doc, origin, "mode", "constrained", false);
    if (mode == "constrained") {
        sc.mode = CalibrationMode::Constrained;
    } else if (mode == "non_constraint") {
        sc.mode = CalibrationMode::NonConstraint;
    } else {
        config_fail(origin, "field 'mode' must be 'constrained' or 'non_constraint'");
    }

    if (doc.contains("campaign")) {
        const json& c = doc.at("campaign");
        const std::string co = origin + " campaign";
        sc.campaign.extrema_eps = get_field<double>(c, co, "extrema_eps", 0.02, false);
        sc.campaign.k_prior = get_field<double>(c, co, "k_prior", 0.1, false);
        sc.campaign.refine = get_field<bool>(c, co, "refine", true, false);
        sc.campaign.fidelity_noise_sigma =
            get_field<double>(c, co, "fidelity_noise_sigma", 0.0, false);
        sc.campaign.thresholds =
            get_field<std::vector<double>>(c, co, "thresholds", {0.999}, false);
    }
    sc.output_dir = get_field<std::string>(doc, origin, "output_dir", "", false);

    try {
        sc.chain.validate();
        sc.instrument.validate();
    } catch (const Error& e) {
        config_fail(origin, e.what());
    }
    if (sc.mode == CalibrationMode::NonConstraint && sc.chain.size() < 3) {
        config_fail(origin, "non_constraint mode requires at least 3 stages");
    }
    return sc;
}

Scenario load_scenario(const std::filesystem::path& path) {
    std::ifstream in(path);
    if (!in) fail(ErrorCode::ConfigError, "cannot open scenario file " + path.string());
    std::ostringstream buf;
    buf << in.rdbuf();
    return parse_scenario(buf.str(), path.filename().string());
}

}  // namespace cpscal
