#include <riskshare/config.hpp>

#include <cstdio>
#include <fstream>
#include <sstream>

#include <riskshare/errors.hpp>
#include <riskshare/estimators.hpp>

namespace riskshare {

namespace {

using nlohmann::json;

PreferenceSpec preference_from_json(const json& doc) {
    const std::string kind = doc.is_string() ? doc.get<std::string>() : doc.at("kind").get<std::string>();
    if (kind == "physical") {
        return PhysicalPreference{};
    }
    if (kind == "tail") {
        TailPreference tp;
        const json& level = doc.at("level");
        if (level.is_string()) {
            if (level.get<std::string>() != "theta") {
                throw ConfigError("tail preference level must be a number or \"theta\"");
            }
        } else {
            tp.level = level.get<double>();
            if (!(*tp.level >= 0.0 && *tp.level <= 1.0)) {
                throw ConfigError("tail preference level must lie in [0,1]");
            }
        }
        return tp;
    }
    if (kind == "weight") {
        return table_weight_preference(doc.at("x").get<std::vector<double>>(), doc.at("h").get<std::vector<double>>());
    }
    throw ConfigError("unknown preference kind '" + kind + "'");
}

json preference_to_json(const PreferenceSpec& pref) {
    if (std::holds_alternative<PhysicalPreference>(pref)) {
        return json{{"kind", "physical"}};
    }
    if (const auto* tp = std::get_if<TailPreference>(&pref)) {
        json doc{{"kind", "tail"}};
        if (tp->level) {
            doc["level"] = *tp->level;
        } else {
            doc["level"] = "theta";
        }
        return doc;
    }
    const auto& wp = std::get<WeightPreference>(pref);
    if (wp.table_x.empty()) {
        throw ConfigError("a weight preference given as a function cannot be serialized");
    }
    return json{{"kind", "weight"}, {"x", wp.table_x}, {"h", wp.table_h}};
}

std::vector<PreferenceSpec> prefs_from_json(const json& doc) {
    std::vector<PreferenceSpec> out;
    if (doc.contains("prefs")) {
        for (const auto& p : doc.at("prefs")) {
            out.push_back(preference_from_json(p));
        }
    }
    return out;
}

json prefs_to_json(const std::vector<PreferenceSpec>& prefs) {
    json arr = json::array();
    for (const auto& p : prefs) {
        arr.push_back(preference_to_json(p));
    }
    return arr;
}

std::vector<double> flatten_rows(const json& rows) {
    std::vector<double> out;
    for (const auto& row : rows) {
        const auto r = row.get<std::vector<double>>();
        out.insert(out.end(), r.begin(), r.end());
    }
    return out;
}

std::size_t positive_size(const json& doc, const char* key, std::size_t fallback) {
    if (!doc.contains(key)) {
        return fallback;
    }
    const json& v = doc.at(key);
    if (!v.is_number_integer() || v.get<long long>() <= 0) {
        throw ConfigError(std::string(key) + " must be a positive integer");
    }
    return static_cast<std::size_t>(v.get<long long>());
}

} // namespace

AllocationFamily allocation_from_json(const json& doc) {
    try {
        const std::string kind = doc.at("kind").get<std::string>();
        if (kind == "euler" || kind == "euler_distortion") {
            return EulerDistortion{distortion_from_json(doc.at("family"))};
        }
        if (kind == "opt_squared") {
            OptSquared sq;
            if (doc.contains("beta_table")) {
                const json& t = doc.at("beta_table");
                BetaTable bt;
                bt.theta = t.at("theta").get<std::vector<double>>();
                bt.betas = t.at("betas").get<std::vector<std::vector<double>>>();
                sq.beta_table = std::move(bt);
            } else {
                sq.betas = doc.at("betas").get<std::vector<double>>();
            }
            sq.prefs = prefs_from_json(doc);
            return sq;
        }
        if (kind == "opt_absolute") {
            return OptAbsolute{prefs_from_json(doc)};
        }
        if (kind == "weighted") {
            WeightedRisk w;
            const std::string weight = doc.at("weight").get<std::string>();
            if (weight == "size_biased") {
                w.kind = WeightKind::size_biased;
            } else if (weight == "esscher") {
                w.kind = WeightKind::esscher;
            } else if (weight == "custom") {
                w.kind = WeightKind::custom;
                const json& t = doc.at("table");
                CustomWeightTable table;
                table.theta = t.at("theta").get<std::vector<double>>();
                table.s = t.at("s").get<std::vector<double>>();
                table.values = flatten_rows(t.at("values"));
                w.table = std::move(table);
            } else {
                throw ConfigError("unknown weight kind '" + weight + "'");
            }
            return w;
        }
        if (kind == "holistic") {
            Holistic h{doc.value("gamma", 1.0), doc.at("gammas").get<std::vector<double>>(),
                       distortion_from_json(doc.at("family")), {}};
            if (doc.contains("unit_families")) {
                for (const auto& f : doc.at("unit_families")) {
                    h.units.push_back(distortion_from_json(f));
                }
            }
            return h;
        }
        throw ConfigError("unknown rule kind '" + kind + "'");
    } catch (const json::exception& e) {
        throw ConfigError(std::string("malformed rule document: ") + e.what());
    }
}

json allocation_to_json(const AllocationFamily& family) {
    if (const auto* sq = std::get_if<OptSquared>(&family)) {
        json doc{{"kind", "opt_squared"}};
        if (sq->beta_table) {
            doc["beta_table"] = json{{"theta", sq->beta_table->theta}, {"betas", sq->beta_table->betas}};
        } else {
            doc["betas"] = sq->betas;
        }
        if (!sq->prefs.empty()) {
            doc["prefs"] = prefs_to_json(sq->prefs);
        }
        return doc;
    }
    if (const auto* ab = std::get_if<OptAbsolute>(&family)) {
        json doc{{"kind", "opt_absolute"}};
        if (!ab->prefs.empty()) {
            doc["prefs"] = prefs_to_json(ab->prefs);
        }
        return doc;
    }
    if (const auto* eu = std::get_if<EulerDistortion>(&family)) {
        return json{{"kind", "euler"}, {"family", distortion_to_json(eu->family)}};
    }
    if (const auto* w = std::get_if<WeightedRisk>(&family)) {
        json doc{{"kind", "weighted"}};
        switch (w->kind) {
        case WeightKind::size_biased:
            doc["weight"] = "size_biased";
            break;
        case WeightKind::esscher:
            doc["weight"] = "esscher";
            break;
        case WeightKind::custom: {
            doc["weight"] = "custom";
            const auto& t = *w->table;
            json rows = json::array();
            for (std::size_t r = 0; r < t.theta.size(); ++r) {
                rows.push_back(std::vector<double>(t.values.begin() + static_cast<long>(r * t.s.size()),
                                                   t.values.begin() + static_cast<long>((r + 1) * t.s.size())));
            }
            doc["table"] = json{{"theta", t.theta}, {"s", t.s}, {"values", rows}};
            break;
        }
        }
        return doc;
    }
    const auto& h = std::get<Holistic>(family);
    json doc{{"kind", "holistic"}, {"gamma", h.gamma}, {"gammas", h.gammas}, {"family", distortion_to_json(h.aggregate)}};
    if (!h.units.empty()) {
        json arr = json::array();
        for (const auto& f : h.units) {
            arr.push_back(distortion_to_json(f));
        }
        doc["unit_families"] = arr;
    }
    return doc;
}

RunConfig parse_run_config(const json& doc) {
    if (!doc.is_object()) {
        throw ConfigError("run config must be a JSON object");
    }
    RunConfig cfg;
    try {
        cfg.model = model_from_json(doc.at("model"));
        if (!doc.contains("n_scenarios")) {
            throw ConfigError("run config needs n_scenarios");
        }
        const json& n = doc.at("n_scenarios");
        if (!n.is_number_integer() || n.get<long long>() <= 0) {
            throw ConfigError("n_scenarios must be a positive integer");
        }
        cfg.n_scenarios = static_cast<std::size_t>(n.get<long long>());
        if (doc.contains("seed")) {
            const json& s = doc.at("seed");
            if (!s.is_number_integer()) {
                throw ConfigError("seed must be an integer");
            }
            cfg.seed = s.is_number_unsigned() ? s.get<std::uint64_t>()
                                              : static_cast<std::uint64_t>(s.get<long long>());
        }
        if (doc.contains("rule")) {
            cfg.rule = allocation_from_json(doc.at("rule"));
        } else {
            throw ConfigError("run config needs a rule");
        }
        if (doc.contains("curve")) {
            const json& c = doc.at("curve");
            if (!(c.is_string() && c.get<std::string>() == "endogenous")) {
                cfg.curve_family = distortion_from_json(c);
            }
        }
        cfg.policy = policy_from_string(doc.value("inverse_policy", std::string("inf")));
        cfg.bins = positive_size(doc, "bins", cfg.bins);
        cfg.grid_size = positive_size(doc, "grid_size", cfg.grid_size);
        cfg.outputs = doc.value("outputs", std::string("."));
    } catch (const json::exception& e) {
        throw ConfigError(std::string("malformed run config: ") + e.what());
    }
    const std::size_t n = dimension(cfg.model);
    validate(cfg.rule, n);
    if (is_top_down(cfg.rule)) {
        if (!cfg.curve_family) {
            throw ConfigError(family_name(cfg.rule) + " needs an exogenous curve family");
        }
    } else if (cfg.curve_family) {
        const auto* eu = std::get_if<EulerDistortion>(&cfg.rule);
        if (!eu || eu->family.name() != cfg.curve_family->name()) {
            throw ConfigError(family_name(cfg.rule) + " builds its own curve; set \"curve\" to \"endogenous\"");
        }
        cfg.curve_family.reset();
    }
    if (cfg.grid_size < 200) {
        throw ConfigError("grid_size must be at least 200");
    }
    cfg.fingerprint = fingerprint_text(doc.dump());
    return cfg;
}

json read_json_file(const std::string& path) {
    std::ifstream in(path);
    if (!in) {
        throw IoError("cannot open " + path);
    }
    try {
        return json::parse(in);
    } catch (const json::exception& e) {
        throw ConfigError("cannot parse " + path + ": " + e.what());
    }
}

RunConfig load_run_config(const std::string& path) {
    return parse_run_config(read_json_file(path));
}

std::string hex64(std::uint64_t x) {
    char buf[17];
    std::snprintf(buf, sizeof(buf), "%016llx", static_cast<unsigned long long>(x));
    return buf;
}

PipelineResult run_pipeline(const RunConfig& config, Exec exec) {
    return run_pipeline(config, sample_joint(config.model, config.n_scenarios, config.seed, exec), exec);
}

PipelineResult run_pipeline(const RunConfig& config, ScenarioSet scenarios, Exec exec) {
    std::optional<AggregateCapital> exo;
    if (config.curve_family) {
        exo = distortion_aggregate(*config.curve_family, scenarios);
    }
    BindOptions bopt;
    bopt.bins = config.bins;
    auto model = riskshare::bind(config.rule, scenarios, exo, bopt);
    CurveOptions copt;
    copt.grid_size = config.grid_size;
    copt.exec = exec;
    std::vector<double> grid_alloc;
    CapitalCurve curve = model_curve(*model, copt, grid_alloc);

    const EmpiricalDistribution dist = aggregate_distribution(scenarios);
    const auto* eu = std::get_if<EulerDistortion>(&config.rule);
    const bool var_curve = (config.curve_family && config.curve_family->kind() == DistortionKind::var_indicator) ||
                           (eu && eu->family.kind() == DistortionKind::var_indicator);
    if (var_curve) {
        auto d = std::make_shared<const EmpiricalDistribution>(dist);
        curve.set_cdf([d](double s) { return d->cdf(s); });
    }
    const SurjectivityReport surj = check_surjectivity(curve, dist);
    if (!surj.passes()) {
        std::ostringstream os;
        os.precision(12);
        os << "aggregate capital curve does not cover the sample: curve range [" << surj.k_min << ", " << surj.k_max
           << "], sample range [" << surj.sample_min << ", " << surj.sample_max << "]"
           << (surj.monotone_or_continuous ? "" : ", curve neither monotone nor continuous");
        throw SurjectivityError(os.str());
    }
    SharingOptions sopt;
    sopt.policy = config.policy;
    sopt.exec = exec;
    sopt.grid_allocations = grid_alloc;
    SharingResult sharing = induce_sharing(*model, curve, scenarios, sopt);
    return PipelineResult{std::move(scenarios), std::move(model), std::move(curve), surj, std::move(sharing)};
}

} // namespace riskshare
