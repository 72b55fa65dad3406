#pragma once

#include <cstddef>
#include <functional>
#include <memory>
#include <optional>
#include <span>
#include <string>
#include <variant>
#include <vector>

#include <riskshare/axis.hpp>
#include <riskshare/distortion.hpp>
#include <riskshare/estimators.hpp>
#include <riskshare/scenario.hpp>

namespace riskshare {

// Preference measures Q_i for the optimization principle.
struct PhysicalPreference {};

struct TailPreference {
    // nullopt means the tail level follows the allocation parameter theta
    std::optional<double> level;
};

// dQ/dP = h(X_i) / E[h(X_i)]
struct WeightPreference {
    std::function<double(double)> h;
    // the piecewise-linear table h was built from, kept for serialization
    std::vector<double> table_x;
    std::vector<double> table_h;
};

using PreferenceSpec = std::variant<PhysicalPreference, TailPreference, WeightPreference>;

// piecewise linear in x, constant beyond the table ends
WeightPreference table_weight_preference(std::vector<double> x, std::vector<double> h);

// beta_i(theta) interpolated linearly between rows, constant beyond the ends
struct BetaTable {
    std::vector<double> theta;
    std::vector<std::vector<double>> betas;
};

struct OptSquared {
    std::vector<double> betas;
    std::optional<BetaTable> beta_table;
    std::vector<PreferenceSpec> prefs; // empty means physical for every unit
};

struct OptAbsolute {
    std::vector<PreferenceSpec> prefs; // empty means physical for every unit
};

struct EulerDistortion {
    DistortionFamily family;
};

enum class WeightKind { size_biased, esscher, custom };

// w(theta, s) on a theta grid times s grid, row-major, strictly positive;
// log w is bilinear inside the grid and held constant beyond it
struct CustomWeightTable {
    std::vector<double> theta;
    std::vector<double> s;
    std::vector<double> values;
};

struct WeightedRisk {
    WeightKind kind = WeightKind::size_biased;
    std::optional<CustomWeightTable> table;
};

struct Holistic {
    double gamma = 1.0;
    std::vector<double> gammas;
    DistortionFamily aggregate;
    // empty: every unit uses the aggregate family; one entry: shared by all units
    std::vector<DistortionFamily> units;
};

using AllocationFamily = std::variant<OptSquared, OptAbsolute, EulerDistortion, WeightedRisk, Holistic>;

std::string family_name(const AllocationFamily& family);
bool is_top_down(const AllocationFamily& family);
// checks the parameters that do not depend on data; n is the number of units
void validate(const AllocationFamily& family, std::size_t n);

struct Allocation {
    std::vector<double> k;
    double aggregate = 0.0;
};

// Exogenous aggregate capital for the top-down families.
struct AggregateCapital {
    Parametrization param = Parametrization::bounded(0.0, 1.0);
    std::function<double(double)> k_coord;
    std::string name;
    bool cheap = false; // evaluation far cheaper than a pass over the scenarios
};

AggregateCapital distortion_aggregate(const DistortionFamily& family, const ScenarioSet& scen);

struct BindOptions {
    // bins of the conditional-mean estimate used by the Euler family
    std::size_t bins = 200;
    std::size_t min_per_bin = 10;
    // exact discrete joints use one bin per distinct value of S
    bool exact_conditional_mean = true;
    std::optional<BinnedConditionalMean> conditional_mean;
    // axis scale of the weighted families; 0 means chosen from the data
    double weight_axis_scale = 0.0;
};

// An allocation family bound to one scenario set. allocate() writes K_i at a
// working coordinate of parametrization(); the components add up to aggregate().
class CapitalModel : public std::enable_shared_from_this<CapitalModel> {
public:
    virtual ~CapitalModel() = default;

    virtual std::size_t units() const = 0;
    virtual const Parametrization& parametrization() const = 0;
    virtual double aggregate(double coord) const = 0;
    virtual void allocate(double coord, std::span<double> out) const = 0;
    // Top-down families depend on theta through K(theta) only; they take the
    // aggregate value from the caller instead of evaluating it again.
    virtual void allocate_given(double coord, double aggregate_value, std::span<double> out) const {
        (void)aggregate_value;
        allocate(coord, out);
    }
    // K_i and K together; rules that get both from one sweep over the data override it
    virtual double allocate_with_aggregate(double coord, std::span<double> out) const {
        const double k = aggregate(coord);
        allocate_given(coord, k, out);
        return k;
    }
    // true when aggregate() and allocate() cost far less than one pass over the scenarios
    virtual bool cheap() const { return false; }
    // true when allocate_given() alone is that cheap, as for the top-down rules
    virtual bool cheap_given() const { return cheap(); }
    virtual std::string describe() const = 0;

    double theta_of(double coord) const { return parametrization().theta_of(coord); }
    double coord_of(double theta) const { return parametrization().coord_of(theta); }
    Allocation allocate_theta(double theta) const;
};

std::shared_ptr<const CapitalModel> bind(const AllocationFamily& family, const ScenarioSet& scen,
                                         const std::optional<AggregateCapital>& exogenous = std::nullopt,
                                         const BindOptions& options = {});

// E^{Q_i}[X_i] for one unit; theta is used by TailPreference without a fixed level
double preference_mean(const PreferenceSpec& pref, const ScenarioSet& scen, std::size_t i, double theta);
double tail_preference_mean(const ScenarioSet& scen, std::size_t i, double level);

std::vector<double> betas_at(const OptSquared& family, double theta, std::size_t n);

// K_i = E^{Q_i}[X_i] + beta_i (K - sum_j E^{Q_j}[X_j]) with K supplied by the caller
std::vector<double> opt_squared_allocate(const OptSquared& family, double theta, double aggregate,
                                         const ScenarioSet& scen);

// Marginals of X_i under Q_i as empirical distributions over the scenarios.
std::vector<QuantileSource> preference_marginals(const OptAbsolute& family, const ScenarioSet& scen);
// alpha-mixed quantiles of the marginals at the comonotonic level of s
std::vector<double> opt_absolute_allocate(double s, std::span<const QuantileSource> marginals);

std::vector<double> euler_distortion_allocate(const EulerDistortion& family, double theta, const ScenarioSet& scen,
                                              const BinnedConditionalMean& cond);

Allocation weighted_allocate(const WeightedRisk& family, double theta, const ScenarioSet& scen);

struct HolisticWeights {
    double beta = 0.0;
    std::vector<double> betas;
};

HolisticWeights holistic_weights(const Holistic& family, std::size_t n);
Allocation holistic_allocate(const Holistic& family, double theta, const ScenarioSet& scen);

// log w_theta(s); -inf for a zero weight
double weight_log(const WeightedRisk& family, double theta, double s);

struct MlrReport {
    bool pass = true;
    std::size_t checked = 0;
    std::size_t violations = 0;
    double worst = 0.0; // most negative log-minor seen
    std::vector<std::string> messages;
};

// log w(theta2, s2) - log w(theta1, s2) >= log w(theta2, s1) - log w(theta1, s1) over
// adjacent grid pairs; custom tables are checked on their own grid
MlrReport weighted_mlr_check(const WeightedRisk& family, std::span<const double> theta_grid,
                             std::span<const double> s_grid);
MlrReport weighted_mlr_check(const WeightedRisk& family);

// Per-scenario weights of the quadratic objectives at theta: the objective is
// sum_i sum_k unit[i][k] (x_ik - K_i)^2 + sum_k agg[k] (s_k - sum_i K_i)^2.
struct QuadraticWeights {
    std::vector<std::vector<double>> unit;
    std::vector<double> aggregate; // empty for the optimization principle
};

QuadraticWeights quadratic_weights(const AllocationFamily& family, double theta, const ScenarioSet& scen);

} // namespace riskshare
