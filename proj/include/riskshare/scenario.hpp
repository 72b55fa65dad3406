#pragma once

#include <cstddef>
#include <cstdint>
#include <span>
#include <variant>
#include <vector>

#include <Eigen/Dense>
#include <json.hpp>

#include <riskshare/execution.hpp>

namespace riskshare {

struct GammaMarginal {
    double shape = 1.0;
    double scale = 1.0;
};

struct NormalMarginal {
    double mean = 0.0;
    double sd = 1.0;
};

struct UniformMarginal {
    double lo = 0.0;
    double hi = 1.0;
};

struct DiscreteMarginal {
    std::vector<double> atoms;
    std::vector<double> probs;
};

using MarginalSpec = std::variant<GammaMarginal, NormalMarginal, UniformMarginal, DiscreteMarginal>;

void validate(const MarginalSpec& spec);
double marginal_quantile(const MarginalSpec& spec, double p);
// Quantile at 1-p computed without forming 1-p where the backend allows it.
double marginal_upper_quantile(const MarginalSpec& spec, double p);
// Right-continuous inverse sup{x : F(x) <= p}; differs from the left one only on atoms.
double marginal_quantile_right(const MarginalSpec& spec, double p);
double marginal_cdf(const MarginalSpec& spec, double x);
double marginal_mean(const MarginalSpec& spec);

struct ClaytonCopula {
    double theta = 1.0;
};
struct CounterMonotonicCopula {};
struct ComonotonicCopula {};
struct IndependentCopula {};
struct GaussianCopula {
    Eigen::MatrixXd corr;
};

using CopulaSpec = std::variant<ClaytonCopula, CounterMonotonicCopula, ComonotonicCopula,
                                IndependentCopula, GaussianCopula>;

struct CopulaModel {
    std::vector<MarginalSpec> marginals;
    CopulaSpec copula;
};

struct MultivariateNormal {
    Eigen::VectorXd mu;
    Eigen::MatrixXd sigma;
};

using JointModel = std::variant<CopulaModel, MultivariateNormal>;

std::size_t dimension(const JointModel& model);
void validate(const JointModel& model);

nlohmann::json model_to_json(const JointModel& model);
JointModel model_from_json(const nlohmann::json& doc);
std::uint64_t fingerprint(const JointModel& model);
std::uint64_t fingerprint_text(const std::string& text);

class ScenarioSet {
public:
    ScenarioSet() = default;
    // losses are row-major N x n; probabilities empty means equally likely rows
    ScenarioSet(std::size_t units, std::vector<double> losses, std::uint64_t seed,
                std::uint64_t model_fingerprint, std::vector<double> probabilities = {});

    // Exact discrete joint: one row per atom with its probability.
    static ScenarioSet from_atoms(const std::vector<std::vector<double>>& rows,
                                  std::vector<double> probabilities);

    std::size_t size() const { return aggregate_.size(); }
    std::size_t units() const { return units_; }
    double loss(std::size_t k, std::size_t i) const { return losses_[k * units_ + i]; }
    std::span<const double> row(std::size_t k) const {
        return {losses_.data() + k * units_, units_};
    }
    std::span<const double> losses() const { return losses_; }
    std::span<const double> aggregate() const { return aggregate_; }
    std::vector<double> column(std::size_t i) const;

    bool weighted() const { return !probs_.empty(); }
    std::span<const double> probabilities() const { return probs_; }
    double probability(std::size_t k) const {
        return probs_.empty() ? 1.0 / static_cast<double>(aggregate_.size()) : probs_[k];
    }

    std::uint64_t seed() const { return seed_; }
    std::uint64_t model_fingerprint() const { return fingerprint_; }

private:
    std::size_t units_ = 0;
    std::vector<double> losses_;
    std::vector<double> aggregate_;
    std::vector<double> probs_;
    std::uint64_t seed_ = 0;
    std::uint64_t fingerprint_ = 0;
};

ScenarioSet sample_joint(const JointModel& model, std::size_t n_scenarios, std::uint64_t seed,
                         Exec exec = Exec::parallel);

} // namespace riskshare
