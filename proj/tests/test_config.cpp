#include <doctest.h>

#include <algorithm>
#include <cmath>
#include <functional>
#include <filesystem>
#include <fstream>
#include <string>
#include <vector>

#include <json.hpp>

#include <riskshare/config.hpp>
#include <riskshare/errors.hpp>

using namespace riskshare;
using nlohmann::json;

namespace {

json gamma_model() {
    return json::parse(R"({"marginals": [{"kind": "gamma", "shape": 5.0, "scale": 1.0},
                                         {"kind": "gamma", "shape": 0.3, "scale": 8.0}],
                           "copula": {"kind": "clayton", "theta": 2.0}})");
}

json base_run() {
    json doc;
    doc["model"] = gamma_model();
    doc["n_scenarios"] = 500;
    doc["seed"] = 9;
    doc["rule"] = json{{"kind", "euler"}, {"family", "wang"}};
    return doc;
}

std::vector<json> rule_docs() {
    return {
        json::parse(R"({"kind": "euler", "family": "power"})"),
        json::parse(R"({"kind": "euler", "family": {"kind": "var"}})"),
        json::parse(R"({"kind": "opt_squared", "betas": [0.25, 0.75]})"),
        json::parse(R"({"kind": "opt_squared", "beta_table": {"theta": [0.0, 1.0], "betas": [[0.5, 0.5], [0.1, 0.9]]},
                        "prefs": ["physical", {"kind": "tail", "level": 0.9}]})"),
        json::parse(R"({"kind": "opt_squared", "betas": [0.5, 0.5],
                        "prefs": [{"kind": "tail", "level": "theta"}, {"kind": "weight", "x": [0, 10], "h": [1, 3]}]})"),
        json::parse(R"({"kind": "opt_absolute"})"),
        json::parse(R"({"kind": "weighted", "weight": "size_biased"})"),
        json::parse(R"({"kind": "weighted", "weight": "esscher"})"),
        json::parse(R"({"kind": "weighted", "weight": "custom",
                        "table": {"theta": [0, 1], "s": [0, 5, 10], "values": [[1, 1, 1], [1, 2, 4]]}})"),
        json::parse(R"({"kind": "holistic", "gamma": 2.0, "gammas": [1.0, 0.5], "family": "wang"})"),
        json::parse(R"({"kind": "holistic", "gamma": 1.0, "gammas": [1.0, 1.0], "family": "tvar_dual",
                        "unit_families": ["power"]})"),
    };
}

} // namespace

TEST_CASE("allocation documents survive a round trip") {
    for (const json& doc : rule_docs()) {
        CAPTURE(doc.dump());
        const AllocationFamily fam = allocation_from_json(doc);
        const json once = allocation_to_json(fam);
        const json twice = allocation_to_json(allocation_from_json(once));
        CHECK(once == twice);
        CHECK(once.at("kind") == (doc.at("kind") == "euler_distortion" ? json("euler") : doc.at("kind")));
        CHECK(family_name(allocation_from_json(once)) == family_name(fam));
    }
    const AllocationFamily sq = allocation_from_json(rule_docs()[3]);
    const auto& t = std::get<OptSquared>(sq).beta_table;
    REQUIRE(t.has_value());
    CHECK(t->betas[1][1] == 0.9);
    const auto& prefs = std::get<OptSquared>(sq).prefs;
    REQUIRE(prefs.size() == 2);
    CHECK(std::get<TailPreference>(prefs[1]).level == 0.9);

    const AllocationFamily w = allocation_from_json(rule_docs()[8]);
    const auto& table = std::get<WeightedRisk>(w).table;
    REQUIRE(table.has_value());
    CHECK(table->values == std::vector<double>{1, 1, 1, 1, 2, 4});
}

TEST_CASE("malformed rule documents") {
    CHECK_THROWS_AS(allocation_from_json(json::parse(R"({"kind": "chain_ladder"})")), ConfigError);
    CHECK_THROWS_AS(allocation_from_json(json::parse(R"({"family": "wang"})")), ConfigError);
    CHECK_THROWS_AS(allocation_from_json(json::parse(R"({"kind": "weighted", "weight": "exotic"})")), ConfigError);
    CHECK_THROWS_AS(allocation_from_json(json::parse(R"({"kind": "opt_squared", "betas": "half"})")), ConfigError);
    CHECK_THROWS_AS(allocation_from_json(json::parse(
                        R"({"kind": "opt_squared", "betas": [0.5, 0.5], "prefs": [{"kind": "tail", "level": 1.5}]})")),
                    ConfigError);
    CHECK_THROWS_AS(allocation_from_json(json::parse(R"({"kind": "euler", "family": "gumbel"})")), ConfigError);
}

TEST_CASE("run config defaults") {
    const RunConfig cfg = parse_run_config(base_run());
    CHECK(cfg.n_scenarios == 500);
    CHECK(cfg.seed == 9);
    CHECK(cfg.policy == InversePolicy::infimum_preimage);
    CHECK(cfg.bins == 200);
    CHECK(cfg.grid_size == 2048);
    CHECK(cfg.outputs == ".");
    CHECK_FALSE(cfg.curve_family.has_value());
    CHECK(std::holds_alternative<EulerDistortion>(cfg.rule));
    CHECK(dimension(cfg.model) == 2);

    // the same document always hashes the same, and any change moves the hash
    CHECK(parse_run_config(base_run()).fingerprint == cfg.fingerprint);
    json other = base_run();
    other["bins"] = 50;
    CHECK(parse_run_config(other).fingerprint != cfg.fingerprint);
    CHECK(parse_run_config(other).bins == 50);

    json top = base_run();
    top["rule"] = json{{"kind", "opt_squared"}, {"betas", {0.4, 0.6}}};
    top["curve"] = "power";
    top["inverse_policy"] = "sup";
    top["grid_size"] = 512;
    const RunConfig td = parse_run_config(top);
    REQUIRE(td.curve_family.has_value());
    CHECK(td.curve_family->kind() == DistortionKind::power);
    CHECK(td.policy == InversePolicy::supremum_preimage);
    CHECK(td.grid_size == 512);

    // an Euler rule may restate its own family as the curve
    json same = base_run();
    same["curve"] = "wang";
    CHECK_FALSE(parse_run_config(same).curve_family.has_value());

    json big_seed = base_run();
    big_seed["seed"] = 18446744073709551615ull;
    CHECK(parse_run_config(big_seed).seed == 18446744073709551615ull);
}

TEST_CASE("invalid run configs are rejected") {
    auto rejects = [](const std::function<void(json&)>& edit) {
        json doc = base_run();
        edit(doc);
        CHECK_THROWS_AS(parse_run_config(doc), ConfigError);
    };
    rejects([](json& d) { d["n_scenarios"] = 0; });
    rejects([](json& d) { d["n_scenarios"] = -5; });
    rejects([](json& d) { d["n_scenarios"] = 2.5; });
    rejects([](json& d) { d.erase("n_scenarios"); });
    rejects([](json& d) { d.erase("rule"); });
    rejects([](json& d) { d.erase("model"); });
    rejects([](json& d) { d["seed"] = "abc"; });
    rejects([](json& d) { d["rule"] = json{{"kind", "opt_squared"}, {"betas", {0.4, 0.6}}}; });
    rejects([](json& d) { d["rule"] = json{{"kind", "opt_absolute"}}; });
    rejects([](json& d) {
        d["rule"] = json{{"kind", "weighted"}, {"weight", "size_biased"}};
        d["curve"] = "wang";
    });
    rejects([](json& d) { d["curve"] = "power"; });
    rejects([](json& d) { d["grid_size"] = 100; });
    rejects([](json& d) { d["bins"] = 0; });
    rejects([](json& d) { d["inverse_policy"] = "median"; });
    rejects([](json& d) { d["model"]["copula"] = json{{"kind", "frank"}}; });
    CHECK_THROWS_AS(parse_run_config(json::array()), ConfigError);

    // shape errors in the rule itself surface as invalid_argument
    json wrong_n = base_run();
    wrong_n["rule"] = json{{"kind", "opt_squared"}, {"betas", {0.2, 0.3, 0.5}}};
    wrong_n["curve"] = "wang";
    CHECK_THROWS_AS(parse_run_config(wrong_n), std::invalid_argument);
}

TEST_CASE("reading config files") {
    const auto dir = std::filesystem::temp_directory_path() / "riskshare_test_config";
    std::filesystem::create_directories(dir);
    CHECK_THROWS_AS(read_json_file((dir / "absent.json").string()), IoError);

    const auto bad = dir / "bad.json";
    std::ofstream(bad) << "{\"model\": ";
    CHECK_THROWS_AS(read_json_file(bad.string()), ConfigError);

    const auto good = dir / "good.json";
    std::ofstream(good) << base_run().dump(2);
    const RunConfig cfg = load_run_config(good.string());
    CHECK(cfg.n_scenarios == 500);
    CHECK(cfg.fingerprint == parse_run_config(base_run()).fingerprint);
    std::filesystem::remove_all(dir);
}

TEST_CASE("hex64 formatting") {
    CHECK(hex64(0) == "0000000000000000");
    CHECK(hex64(255) == "00000000000000ff");
    CHECK(hex64(0xdeadbeefcafef00dull) == "deadbeefcafef00d");
    CHECK(hex64(~0ull) == "ffffffffffffffff");
}

TEST_CASE("pipeline on a small run") {
    json doc = base_run();
    doc["n_scenarios"] = 3000;
    const RunConfig cfg = parse_run_config(doc);
    const PipelineResult res = run_pipeline(cfg);
    CHECK(res.scenarios.size() == 3000);
    CHECK(res.surjectivity.passes());
    CHECK(res.sharing.max_rel_sum_error() <= 1e-8);

    // the serial reference path gives the same bytes
    const PipelineResult ser = run_pipeline(cfg, Exec::serial);
    const auto a = res.sharing.shares();
    const auto b = ser.sharing.shares();
    const bool same = std::equal(a.begin(), a.end(), b.begin(), b.end());
    CHECK(same);
}
