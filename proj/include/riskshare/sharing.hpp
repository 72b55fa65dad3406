#pragma once

#include <cstddef>
#include <cstdint>
#include <iosfwd>
#include <span>
#include <string>
#include <vector>

#include <riskshare/allocation.hpp>
#include <riskshare/capital_curve.hpp>
#include <riskshare/execution.hpp>
#include <riskshare/scenario.hpp>

namespace riskshare {

// Aggregate-capital curve of a bound rule, on the rule's own coordinates. The curve
// shares ownership of a model held by a shared_ptr (as bind() returns it); a model
// owned any other way must outlive the curve.
CapitalCurve model_curve(const CapitalModel& model, const CurveOptions& options = {});
// Also fills grid_allocations (grid points x units) with K_i on the curve grid, which
// induce_sharing can reuse through SharingOptions::grid_allocations.
CapitalCurve model_curve(const CapitalModel& model, const CurveOptions& options,
                         std::vector<double>& grid_allocations);

enum class SharingPath { automatic, exact, tabulated };

struct SharingOptions {
    InversePolicy policy = InversePolicy::infimum_preimage;
    Exec exec = Exec::parallel;
    // Above this many scenarios an expensive rule is evaluated on the curve grid:
    // allocations are tabulated at the grid points and interpolated with the same
    // weights as K, so each row still adds up to its aggregate loss. Rules whose
    // allocate_given() is cheap only invert on the grid and allocate S itself.
    std::size_t exact_limit = 4096;
    SharingPath path = SharingPath::automatic;
    InverseTolerance tol;
    // allocation table from model_curve; recomputed when empty
    std::span<const double> grid_allocations;
};

class SharingResult {
public:
    std::size_t size() const { return s_.size(); }
    std::size_t units() const { return units_; }
    double s(std::size_t k) const { return s_[k]; }
    double theta(std::size_t k) const { return theta_[k]; }
    double coord(std::size_t k) const { return coord_[k]; }
    double h(std::size_t k, std::size_t i) const { return h_[k * units_ + i]; }
    std::span<const double> row(std::size_t k) const { return {h_.data() + k * units_, units_}; }
    std::span<const double> s_values() const { return s_; }
    std::span<const double> thetas() const { return theta_; }
    std::span<const double> shares() const { return h_; }

    double max_abs_sum_error() const { return max_abs_err_; }
    // |sum_i H_i - S| / (1 + |S|)
    double max_rel_sum_error() const { return max_rel_err_; }
    const std::string& descriptor() const { return descriptor_; }
    std::uint64_t curve_fingerprint() const { return curve_fp_; }
    InversePolicy policy() const { return policy_; }
    SharingPath path() const { return path_; }

    // columns scenario,s,theta,h_1..h_n; comment lines are written first when given
    void write_csv(std::ostream& os, const std::string& comment = "") const;

    // overwrite one share, used to build deliberately non-optimal allocations in checks
    void set_share(std::size_t k, std::size_t i, double value);

    friend SharingResult induce_sharing(const CapitalModel& model, const CapitalCurve& curve,
                                        const ScenarioSet& scen, const SharingOptions& options);

private:
    void finish_errors();

    std::size_t units_ = 0;
    std::vector<double> s_, theta_, coord_, h_;
    double max_abs_err_ = 0.0;
    double max_rel_err_ = 0.0;
    std::string descriptor_;
    std::uint64_t curve_fp_ = 0;
    InversePolicy policy_ = InversePolicy::infimum_preimage;
    SharingPath path_ = SharingPath::exact;
};

// The curve must be the aggregate capital of model (checked on a few grid points).
SharingResult induce_sharing(const CapitalModel& model, const CapitalCurve& curve, const ScenarioSet& scen,
                             const SharingOptions& options = {});

// Scenarios sorted by S and averaged within equal-count bins.
struct BinnedShares {
    std::size_t units = 0;
    std::vector<double> s_mean;
    std::vector<double> theta_mean;
    std::vector<double> h_mean; // bins x units
    std::vector<std::size_t> count;

    std::size_t bins() const { return s_mean.size(); }
    double h(std::size_t b, std::size_t i) const { return h_mean[b * units + i]; }
    // columns s_mean,theta_mean,h1_mean..hn_mean,count
    void write_csv(std::ostream& os, const std::string& comment = "") const;
};

BinnedShares binned_shares(const SharingResult& result, std::size_t bins = 100);

struct ComonotonicityReport {
    std::size_t bins = 0;
    std::vector<double> decrease_fraction; // per unit, over adjacent bins
    std::vector<double> top_decile_slope;  // least-squares slope of binned H_i on s, top tenth of bins
    std::vector<bool> top_decile_decreasing;
    bool comonotonic = false;
};

ComonotonicityReport comonotonicity_diagnostic(const SharingResult& result, std::size_t bins = 100,
                                               double threshold = 0.01);

struct ParetoAtom {
    std::size_t scenario = 0;
    double max_deviation = 0.0; // |H - K*| against the constrained minimiser
    double min_objective_gain = 0.0; // smallest objective increase over the perturbations
    bool pass = false;
};

struct ParetoReport {
    bool pass = false;
    std::vector<ParetoAtom> atoms;
};

// Per scenario: H(omega) must minimise the summed quadratic objective at Theta(omega)
// subject to sum_i K_i = S(omega); random sum-zero perturbations must raise it.
ParetoReport scenario_pareto_check(const AllocationFamily& family, const SharingResult& result,
                                   const ScenarioSet& scen, std::size_t n_perturbations = 1000,
                                   std::uint64_t seed = 1);

} // namespace riskshare
