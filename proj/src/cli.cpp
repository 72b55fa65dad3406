#include <riskshare/cli.hpp>

#include <algorithm>
#include <cmath>
#include <filesystem>
#include <fstream>
#include <functional>
#include <optional>
#include <ostream>
#include <sstream>
#include <string>

#include <CLI11.hpp>
#include <json.hpp>

#include <riskshare/allocation.hpp>
#include <riskshare/config.hpp>
#include <riskshare/distortion.hpp>
#include <riskshare/errors.hpp>

namespace riskshare {

namespace {

using nlohmann::json;

struct CommonFlags {
    std::string config;
    std::string out;
    std::optional<std::uint64_t> seed;
    std::optional<std::size_t> bins;
    std::optional<std::string> policy;
    std::optional<std::size_t> n;
    std::optional<std::size_t> grid;
    std::string family;
    bool serial = false;
};

std::filesystem::path output_dir(const std::string& dir) {
    std::filesystem::path p(dir.empty() ? "." : dir);
    std::error_code ec;
    std::filesystem::create_directories(p, ec);
    if (ec || !std::filesystem::is_directory(p)) {
        throw IoError("cannot create output directory " + p.string());
    }
    return p;
}

void write_file(const std::filesystem::path& path, const std::function<void(std::ostream&)>& body) {
    std::ofstream os(path, std::ios::binary);
    if (!os) {
        throw IoError("cannot write " + path.string());
    }
    body(os);
    os.flush();
    if (!os) {
        throw IoError("write failed for " + path.string());
    }
}

std::string run_comment(std::uint64_t fingerprint, std::uint64_t seed) {
    return "config=" + hex64(fingerprint) + " seed=" + std::to_string(seed);
}

RunConfig load_with_overrides(const CommonFlags& flags) {
    json doc = read_json_file(flags.config);
    if (!doc.is_object()) {
        throw ConfigError("run config must be a JSON object");
    }
    if (flags.n) {
        doc["n_scenarios"] = *flags.n;
    }
    if (flags.grid) {
        doc["grid_size"] = *flags.grid;
    }
    if (flags.bins) {
        doc["bins"] = *flags.bins;
    }
    if (flags.policy) {
        doc["inverse_policy"] = *flags.policy;
    }
    // the seed is reported next to the fingerprint, so it stays out of the hash
    RunConfig cfg = parse_run_config(doc);
    if (flags.seed) {
        cfg.seed = *flags.seed;
    }
    if (!flags.out.empty()) {
        cfg.outputs = flags.out;
    }
    return cfg;
}

void write_scenarios_csv(std::ostream& os, const ScenarioSet& scen, const std::string& comment) {
    os << "# " << comment << '\n';
    os << "scenario";
    for (std::size_t i = 0; i < scen.units(); ++i) {
        os << ",x_" << (i + 1);
    }
    os << ",s\n";
    os.precision(17);
    for (std::size_t k = 0; k < scen.size(); ++k) {
        os << k;
        for (std::size_t i = 0; i < scen.units(); ++i) {
            os << ',' << scen.loss(k, i);
        }
        os << ',' << scen.aggregate()[k] << '\n';
    }
}

int cmd_simulate(const CommonFlags& flags, std::ostream& out) {
    const RunConfig cfg = load_with_overrides(flags);
    const ScenarioSet scen = sample_joint(cfg.model, cfg.n_scenarios, cfg.seed,
                                          flags.serial ? Exec::serial : Exec::parallel);
    const auto dir = output_dir(cfg.outputs);
    const auto path = dir / "scenarios.csv";
    write_file(path, [&](std::ostream& os) { write_scenarios_csv(os, scen, run_comment(cfg.fingerprint, cfg.seed)); });
    out << "wrote " << path.string() << " (" << scen.size() << " scenarios)\n";
    return 0;
}

json diagnostics_json(const RunConfig& cfg, const PipelineResult& res) {
    const SharingResult& sh = res.sharing;
    json doc;
    doc["config_fingerprint"] = hex64(cfg.fingerprint);
    doc["seed"] = cfg.seed;
    doc["rule"] = sh.descriptor();
    doc["n_scenarios"] = sh.size();
    doc["units"] = sh.units();
    doc["inverse_policy"] = to_string(sh.policy());
    doc["path"] = sh.path() == SharingPath::exact ? "exact" : "tabulated";
    doc["sum_error"] = {{"max_abs", sh.max_abs_sum_error()}, {"max_rel", sh.max_rel_sum_error()}};
    const auto& c = res.curve;
    doc["curve"] = {{"k_min", c.k_min()},
                    {"k_max", c.k_max()},
                    {"theta_lo", c.parametrization().theta_lo()},
                    {"theta_hi", c.parametrization().theta_hi()},
                    {"monotone", c.monotone()},
                    {"continuous", c.continuous()},
                    {"max_jump", c.max_jump()},
                    {"grid_size", c.size()}};
    const auto& sj = res.surjectivity;
    doc["surjectivity"] = {{"pass", sj.passes()},
                           {"range_covered", sj.range_covered},
                           {"sample_min", sj.sample_min},
                           {"sample_max", sj.sample_max}};
    if (sh.size() >= 100) {
        const ComonotonicityReport rep = comonotonicity_diagnostic(sh);
        json units = json::array();
        for (std::size_t i = 0; i < sh.units(); ++i) {
            units.push_back({{"unit", i + 1},
                             {"decrease_fraction", rep.decrease_fraction[i]},
                             {"top_decile_slope", rep.top_decile_slope[i]},
                             {"top_decile_decreasing", static_cast<bool>(rep.top_decile_decreasing[i])}});
        }
        doc["comonotonicity"] = {{"comonotonic", rep.comonotonic}, {"bins", rep.bins}, {"units", units}};
        doc["comonotonic"] = rep.comonotonic;
    } else {
        doc["comonotonicity"] = nullptr;
        doc["comonotonic"] = nullptr;
    }
    return doc;
}

int cmd_share(const CommonFlags& flags, std::ostream& out) {
    const RunConfig cfg = load_with_overrides(flags);
    const Exec exec = flags.serial ? Exec::serial : Exec::parallel;
    const PipelineResult res = run_pipeline(cfg, exec);
    const auto dir = output_dir(cfg.outputs);
    const std::string comment = run_comment(cfg.fingerprint, cfg.seed);
    write_file(dir / "sharing.csv", [&](std::ostream& os) { res.sharing.write_csv(os, comment); });
    write_file(dir / "curve.csv", [&](std::ostream& os) { res.curve.write_csv(os, comment); });
    const std::size_t bins = std::min<std::size_t>(cfg.bins, res.sharing.size());
    write_file(dir / "sharing_binned.csv",
               [&](std::ostream& os) { binned_shares(res.sharing, bins).write_csv(os, comment); });
    const json diag = diagnostics_json(cfg, res);
    write_file(dir / "diagnostics.json", [&](std::ostream& os) { os << diag.dump(2) << '\n'; });
    out << "wrote " << (dir / "sharing.csv").string() << ", curve.csv, sharing_binned.csv, diagnostics.json\n";
    out << "max relative sum error " << res.sharing.max_rel_sum_error() << '\n';
    if (!diag["comonotonic"].is_null()) {
        out << "comonotonic " << (diag["comonotonic"].get<bool>() ? "true" : "false") << '\n';
    }
    return 0;
}

void report_line(std::ostream& out, bool pass, const std::string& subject, const std::string& condition,
                 const std::string& detail = "") {
    out << (pass ? "PASS " : "FAIL ") << subject << ' ' << condition;
    if (!detail.empty()) {
        out << " (" << detail << ')';
    }
    out << '\n';
}

bool report_distortion(std::ostream& out, const DistortionFamily& family) {
    const ValidationReport rep = validate_family(family);
    const std::string name = family.name();
    report_line(out, rep.boundary, name, "boundary");
    report_line(out, rep.p_monotone, name, "p_monotone");
    report_line(out, rep.theta_monotone, name, "theta_monotone");
    report_line(out, rep.theta_continuous, name, "theta_continuity");
    report_line(out, rep.limit_a, name, "limit_theta_lo");
    report_line(out, rep.limit_b, name, "limit_theta_hi");
    return rep.all_pass();
}

std::string weight_name(const WeightedRisk& w) {
    switch (w.kind) {
    case WeightKind::size_biased:
        return "size_biased";
    case WeightKind::esscher:
        return "esscher";
    case WeightKind::custom:
        return "custom_weight";
    }
    return "weighted";
}

bool report_weighted(std::ostream& out, const WeightedRisk& w, const json& doc, const CommonFlags& flags) {
    const std::string name = weight_name(w);
    const MlrReport mlr = weighted_mlr_check(w);
    std::ostringstream detail;
    detail << mlr.checked << " minors, " << mlr.violations << " violations";
    report_line(out, mlr.pass, name, "mlr", detail.str());
    bool ok = mlr.pass;
    if (doc.contains("model") && doc.contains("n_scenarios")) {
        json run = doc;
        run["rule"] = allocation_to_json(w);
        RunConfig cfg = parse_run_config(run);
        if (flags.seed) {
            cfg.seed = *flags.seed;
        }
        const ScenarioSet scen = sample_joint(cfg.model, cfg.n_scenarios, cfg.seed);
        auto model = riskshare::bind(cfg.rule, scen);
        CurveOptions copt;
        copt.grid_size = cfg.grid_size;
        const CapitalCurve curve = model_curve(*model, copt);
        report_line(out, curve.monotone(), name, "k_monotone");
        const EmpiricalDistribution dist = aggregate_distribution(scen);
        const auto k = curve.values();
        const double range = std::max(dist.max() - dist.min(), 1e-300);
        // the interior grid ends must already sit close to the sample extremes
        const double gap_lo = std::abs(k[1] - dist.min()) / range;
        const double gap_hi = std::abs(k[k.size() - 2] - dist.max()) / range;
        const bool ends = std::abs(k.front() - dist.min()) <= 1e-9 * range &&
                          std::abs(k.back() - dist.max()) <= 1e-9 * range;
        std::ostringstream d2;
        d2 << "relative gaps " << gap_lo << ", " << gap_hi;
        const bool limits = ends && gap_lo < 1e-2 && gap_hi < 1e-2;
        report_line(out, limits, name, "k_limits", d2.str());
        ok = ok && curve.monotone() && limits;
    }
    return ok;
}

int cmd_validate(const CommonFlags& flags, std::ostream& out) {
    json doc;
    if (!flags.family.empty()) {
        doc["family"] = flags.family;
    } else if (!flags.config.empty()) {
        doc = read_json_file(flags.config);
    } else {
        throw ConfigError("validate needs --config or --family");
    }
    if (!doc.is_object()) {
        throw ConfigError("validation config must be a JSON object");
    }
    bool all = true;
    bool any = false;
    if (doc.contains("family")) {
        all = report_distortion(out, distortion_from_json(doc.at("family"))) && all;
        any = true;
    }
    if (doc.contains("rule")) {
        const AllocationFamily rule = allocation_from_json(doc.at("rule"));
        any = true;
        if (const auto* w = std::get_if<WeightedRisk>(&rule)) {
            all = report_weighted(out, *w, doc, flags) && all;
        } else if (const auto* e = std::get_if<EulerDistortion>(&rule)) {
            all = report_distortion(out, e->family) && all;
        } else if (const auto* h = std::get_if<Holistic>(&rule)) {
            all = report_distortion(out, h->aggregate) && all;
            for (const auto& f : h->units) {
                all = report_distortion(out, f) && all;
            }
            const HolisticWeights hw = holistic_weights(*h, h->gammas.size());
            double total = hw.beta;
            for (double b : hw.betas) {
                total += b;
            }
            std::ostringstream d;
            d << "sum " << total;
            const bool sum_ok = std::abs(total - 1.0) <= 1e-14;
            report_line(out, sum_ok, "holistic", "weights_sum_to_one", d.str());
            all = all && sum_ok;
        } else {
            std::size_t n = 1;
            if (doc.contains("model")) {
                n = dimension(model_from_json(doc.at("model")));
            } else if (const auto* sq = std::get_if<OptSquared>(&rule)) {
                n = sq->beta_table ? sq->beta_table->betas.front().size() : sq->betas.size();
            } else if (const auto* ab = std::get_if<OptAbsolute>(&rule)) {
                n = std::max<std::size_t>(ab->prefs.size(), 1);
            }
            validate(rule, n);
            report_line(out, true, family_name(rule), "parameters");
        }
    }
    if (!any) {
        throw ConfigError("validation config needs a \"family\" or a \"rule\"");
    }
    out << (all ? "all checks passed" : "some checks failed") << '\n';
    return 0;
}

int cmd_figures(const CommonFlags& flags, std::ostream& out) {
    const std::size_t n = flags.n.value_or(200000);
    const std::uint64_t seed = flags.seed.value_or(42);
    const std::size_t bins = flags.bins.value_or(100);
    if (n < 1000) {
        throw ConfigError("figures need at least 1000 scenarios");
    }
    const FigureData data = compute_figure_data(n, seed, bins, flags.serial ? Exec::serial : Exec::parallel);
    const std::string comment =
        run_comment(fingerprint_text("figures n=" + std::to_string(n) + " bins=" + std::to_string(bins)), seed);
    const auto files = write_figure_csvs(data, output_dir(flags.out), comment);
    for (const auto& f : files) {
        out << "wrote " << f << '\n';
    }
    for (std::size_t c = 0; c < data.copulas.size(); ++c) {
        out << "euler-wang " << data.copulas[c] << ": comonotonic "
            << (data.euler_wang[c].comonotonicity.comonotonic ? "true" : "false") << '\n';
        out << "size-biased " << data.copulas[c] << ": comonotonic "
            << (data.size_biased[c].comonotonicity.comonotonic ? "true" : "false") << '\n';
    }
    return 0;
}

void add_common(CLI::App* cmd, CommonFlags& flags, bool config_required) {
    auto* c = cmd->add_option("--config", flags.config, "JSON run configuration");
    if (config_required) {
        c->required();
    }
    cmd->add_option("--out", flags.out, "output directory (overrides the config)");
    cmd->add_option("--seed", flags.seed, "random seed (overrides the config)");
    cmd->add_option("--bins", flags.bins, "number of bins")->check(CLI::PositiveNumber);
    cmd->add_option("--policy", flags.policy, "inverse policy")->check(CLI::IsMember({"inf", "sup", "cdf"}));
    cmd->add_flag("--serial", flags.serial, "use the serial reference kernels");
}

} // namespace

int run_cli(int argc, const char* const* argv, std::ostream& out, std::ostream& err) {
    CLI::App app{"riskshare: risk sharing by randomized capital allocation"};
    app.require_subcommand(1);
    CommonFlags flags;

    auto* simulate = app.add_subcommand("simulate", "draw scenarios and write scenarios.csv");
    add_common(simulate, flags, true);
    simulate->add_option("--n", flags.n, "number of scenarios (overrides the config)");

    auto* share = app.add_subcommand("share", "induce the sharing rule and write sharing.csv and diagnostics");
    add_common(share, flags, true);
    share->add_option("--n", flags.n, "number of scenarios (overrides the config)");
    share->add_option("--grid", flags.grid, "curve grid size (overrides the config)");

    auto* validate_cmd = app.add_subcommand("validate", "check the monotonicity and continuity conditions of a family");
    add_common(validate_cmd, flags, false);
    validate_cmd->add_option("--family", flags.family, "distortion family name (wang, power, tvar_dual, var)");

    auto* figures = app.add_subcommand("figures", "write the figure data of the two-unit Gamma example");
    add_common(figures, flags, false);
    figures->add_option("--n", flags.n, "number of scenarios (default 200000)");

    try {
        app.parse(argc, argv);
    } catch (const CLI::ParseError& e) {
        const int code = app.exit(e, out, err);
        return code == 0 ? 0 : 2;
    }

    try {
        if (simulate->parsed()) {
            return cmd_simulate(flags, out);
        }
        if (share->parsed()) {
            return cmd_share(flags, out);
        }
        if (validate_cmd->parsed()) {
            return cmd_validate(flags, out);
        }
        return cmd_figures(flags, out);
    } catch (const IoError& e) {
        err << "I/O error: " << e.what() << '\n';
        return 4;
    } catch (const SurjectivityError& e) {
        err << "surjectivity failure: " << e.what() << '\n';
        return 3;
    } catch (const std::domain_error& e) {
        err << "domain error: " << e.what() << '\n';
        return 3;
    } catch (const std::invalid_argument& e) {
        err << "config error: " << e.what() << '\n';
        return 2;
    } catch (const std::out_of_range& e) {
        err << "config error: " << e.what() << '\n';
        return 2;
    } catch (const std::exception& e) {
        err << "error: " << e.what() << '\n';
        return 1;
    }
}

} // namespace riskshare
