#pragma once

#include <cstddef>
#include <cstdint>
#include <iosfwd>
#include <string>
#include <vector>

#include <riskshare/estimators.hpp>
#include <riskshare/execution.hpp>
#include <riskshare/scenario.hpp>
#include <riskshare/sharing.hpp>

namespace riskshare {

// Exit codes: 0 success, 2 config error, 3 mathematical precondition, 4 I/O.
int run_cli(int argc, const char* const* argv, std::ostream& out, std::ostream& err);

// Two units with Gamma(5,1) and Gamma(0.3,8) marginals under a Clayton(2) or a
// counter-monotonic copula.
JointModel figure_model(bool clayton);

struct FigureRun {
    std::string copula;
    SharingResult sharing;
    BinnedShares binned;
    ComonotonicityReport comonotonicity;
};

struct FigureData {
    std::vector<std::string> copulas;             // clayton, counter_monotonic
    std::vector<BinnedConditionalMean> cond_mean; // per copula
    std::vector<FigureRun> euler_wang;            // per copula
    std::vector<FigureRun> size_biased;           // per copula
};

FigureData compute_figure_data(std::size_t n_scenarios, std::uint64_t seed, std::size_t bins,
                               Exec exec = Exec::parallel);

// figure3a.csv, figure3b.csv (conditional means), figure4.csv / figure5.csv
// (Euler-Wang theta and shares), figure6.csv / figure7.csv (size-biased)
std::vector<std::string> write_figure_csvs(const FigureData& data, const std::string& dir,
                                           const std::string& comment);

} // namespace riskshare
