#include <riskshare/cli.hpp>

#include <filesystem>
#include <fstream>

#include <riskshare/allocation.hpp>
#include <riskshare/config.hpp>
#include <riskshare/errors.hpp>

namespace riskshare {

JointModel figure_model(bool clayton) {
    CopulaModel m;
    m.marginals = {GammaMarginal{5.0, 1.0}, GammaMarginal{0.3, 8.0}};
    if (clayton) {
        m.copula = ClaytonCopula{2.0};
    } else {
        m.copula = CounterMonotonicCopula{};
    }
    return m;
}

namespace {

FigureRun figure_run(const std::string& copula, const JointModel& model, const ScenarioSet& scen,
                     AllocationFamily rule, std::size_t bins, Exec exec) {
    RunConfig cfg;
    cfg.model = model;
    cfg.n_scenarios = scen.size();
    cfg.seed = scen.seed();
    cfg.rule = std::move(rule);
    PipelineResult res = run_pipeline(cfg, scen, exec);
    FigureRun run{copula, std::move(res.sharing), {}, {}};
    run.binned = binned_shares(run.sharing, bins);
    run.comonotonicity = comonotonicity_diagnostic(run.sharing, 100);
    return run;
}

std::ofstream open_csv(const std::filesystem::path& path, const std::string& comment) {
    std::ofstream os(path, std::ios::binary);
    if (!os) {
        throw IoError("cannot write " + path.string());
    }
    os << "# " << comment << '\n';
    os.precision(17);
    return os;
}

void close_csv(std::ofstream& os, const std::filesystem::path& path) {
    os.flush();
    if (!os) {
        throw IoError("write failed for " + path.string());
    }
}

void write_theta(const std::vector<FigureRun>& runs, const std::filesystem::path& path, const std::string& comment) {
    auto os = open_csv(path, comment);
    os << "copula,s_mean,theta_mean,count\n";
    for (const auto& r : runs) {
        for (std::size_t b = 0; b < r.binned.bins(); ++b) {
            os << r.copula << ',' << r.binned.s_mean[b] << ',' << r.binned.theta_mean[b] << ',' << r.binned.count[b]
               << '\n';
        }
    }
    close_csv(os, path);
}

void write_shares(const std::vector<FigureRun>& runs, const std::filesystem::path& path,
                  const std::string& comment) {
    auto os = open_csv(path, comment);
    const std::size_t units = runs.front().binned.units;
    os << "copula,s_mean";
    for (std::size_t i = 0; i < units; ++i) {
        os << ",h" << (i + 1) << "_mean";
    }
    os << ",count\n";
    for (const auto& r : runs) {
        for (std::size_t b = 0; b < r.binned.bins(); ++b) {
            os << r.copula << ',' << r.binned.s_mean[b];
            for (std::size_t i = 0; i < units; ++i) {
                os << ',' << r.binned.h(b, i);
            }
            os << ',' << r.binned.count[b] << '\n';
        }
    }
    close_csv(os, path);
}

void write_cond_mean(const std::string& copula, const BinnedConditionalMean& cm, const std::filesystem::path& path,
                     const std::string& comment) {
    auto os = open_csv(path, comment);
    os << "copula,bin_lo,bin_hi,s_mean";
    for (std::size_t i = 0; i < cm.units(); ++i) {
        os << ",x" << (i + 1) << "_mean";
    }
    os << ",count\n";
    for (std::size_t b = 0; b < cm.bins(); ++b) {
        os << copula << ',' << cm.bin_lo(b) << ',' << cm.bin_hi(b) << ',' << cm.s_mean(b);
        for (std::size_t i = 0; i < cm.units(); ++i) {
            os << ',' << cm.mean(b, i);
        }
        os << ',' << cm.count(b) << '\n';
    }
    close_csv(os, path);
}

} // namespace

FigureData compute_figure_data(std::size_t n_scenarios, std::uint64_t seed, std::size_t bins, Exec exec) {
    FigureData data;
    for (bool clayton : {true, false}) {
        const std::string name = clayton ? "clayton" : "counter_monotonic";
        const JointModel model = figure_model(clayton);
        const ScenarioSet scen = sample_joint(model, n_scenarios, seed, exec);
        data.copulas.push_back(name);
        data.cond_mean.push_back(conditional_mean_given_sum(scen, bins));
        data.euler_wang.push_back(figure_run(name, model, scen, EulerDistortion{DistortionFamily::wang()}, bins, exec));
        data.size_biased.push_back(figure_run(name, model, scen, WeightedRisk{}, bins, exec));
    }
    return data;
}

std::vector<std::string> write_figure_csvs(const FigureData& data, const std::string& dir,
                                           const std::string& comment) {
    const std::filesystem::path root(dir.empty() ? "." : dir);
    std::error_code ec;
    std::filesystem::create_directories(root, ec);
    if (ec || !std::filesystem::is_directory(root)) {
        throw IoError("cannot create output directory " + root.string());
    }
    std::vector<std::string> files;
    const char* cond_names[] = {"figure3a.csv", "figure3b.csv"};
    for (std::size_t c = 0; c < data.copulas.size() && c < 2; ++c) {
        const auto path = root / cond_names[c];
        write_cond_mean(data.copulas[c], data.cond_mean[c], path, comment);
        files.push_back(path.string());
    }
    const auto f4 = root / "figure4.csv";
    const auto f5 = root / "figure5.csv";
    const auto f6 = root / "figure6.csv";
    const auto f7 = root / "figure7.csv";
    write_theta(data.euler_wang, f4, comment);
    write_shares(data.euler_wang, f5, comment);
    write_theta(data.size_biased, f6, comment);
    write_shares(data.size_biased, f7, comment);
    for (const auto& p : {f4, f5, f6, f7}) {
        files.push_back(p.string());
    }
    return files;
}

} // namespace riskshare
