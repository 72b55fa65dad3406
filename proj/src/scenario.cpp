#include <riskshare/scenario.hpp>

#include <algorithm>
#include <cmath>
#include <limits>
#include <numeric>
#include <string>

#include <boost/math/special_functions/gamma.hpp>

#include <riskshare/errors.hpp>
#include <riskshare/kernels.hpp>
#include <riskshare/rng.hpp>
#include <riskshare/special.hpp>

namespace riskshare {

namespace {

constexpr double kInf = std::numeric_limits<double>::infinity();

template <class... Ts>
struct overloaded : Ts... {
    using Ts::operator()...;
};
template <class... Ts>
overloaded(Ts...) -> overloaded<Ts...>;

void check_probability(double p, const char* where) {
    if (!(p >= 0.0 && p <= 1.0)) {
        throw std::invalid_argument(std::string(where) + ": probability must lie in [0,1]");
    }
}

// cumulative probabilities with the last entry pinned to 1
std::vector<double> cumulative(const DiscreteMarginal& d) {
    std::vector<double> c(d.probs.size());
    std::partial_sum(d.probs.begin(), d.probs.end(), c.begin());
    c.back() = 1.0;
    return c;
}

double discrete_left(const DiscreteMarginal& d, double p) {
    const auto c = cumulative(d);
    // first atom with F >= p
    std::size_t lo = 0;
    std::size_t hi = c.size() - 1;
    while (lo < hi) {
        const std::size_t mid = (lo + hi) / 2;
        if (c[mid] >= p) {
            hi = mid;
        } else {
            lo = mid + 1;
        }
    }
    return d.atoms[lo];
}

double discrete_right(const DiscreteMarginal& d, double p) {
    const auto c = cumulative(d);
    if (p >= 1.0) {
        return d.atoms.back();
    }
    // first atom with F > p
    std::size_t lo = 0;
    std::size_t hi = c.size() - 1;
    while (lo < hi) {
        const std::size_t mid = (lo + hi) / 2;
        if (c[mid] > p) {
            hi = mid;
        } else {
            lo = mid + 1;
        }
    }
    return d.atoms[lo];
}

double gamma_quantile(const GammaMarginal& g, double p) {
    if (p <= 0.0) {
        return 0.0;
    }
    if (p >= 1.0) {
        return kInf;
    }
    return g.scale * boost::math::gamma_p_inv(g.shape, p);
}

double gamma_upper_quantile(const GammaMarginal& g, double p) {
    if (p <= 0.0) {
        return kInf;
    }
    if (p >= 1.0) {
        return 0.0;
    }
    return g.scale * boost::math::gamma_q_inv(g.shape, p);
}

void require(bool ok, const std::string& message) {
    if (!ok) {
        throw std::invalid_argument(message);
    }
}

bool finite(double x) {
    return std::isfinite(x);
}

std::uint64_t fnv1a(const std::string& text) {
    std::uint64_t h = 0xcbf29ce484222325ULL;
    for (unsigned char ch : text) {
        h ^= ch;
        h *= 0x100000001b3ULL;
    }
    return h;
}

// factor M with M M^T = A for a symmetric positive semidefinite A
Eigen::MatrixXd psd_factor(const Eigen::MatrixXd& a) {
    Eigen::LLT<Eigen::MatrixXd> llt(a);
    if (llt.info() == Eigen::Success) {
        return llt.matrixL();
    }
    Eigen::SelfAdjointEigenSolver<Eigen::MatrixXd> eig(a);
    Eigen::VectorXd root = eig.eigenvalues().cwiseMax(0.0).cwiseSqrt();
    return eig.eigenvectors() * root.asDiagonal();
}

double json_number(const nlohmann::json& doc, const char* key) {
    if (!doc.contains(key) || !doc.at(key).is_number()) {
        throw ConfigError(std::string("missing numeric field '") + key + "'");
    }
    return doc.at(key).get<double>();
}

std::vector<double> json_vector(const nlohmann::json& doc, const char* key) {
    if (!doc.contains(key) || !doc.at(key).is_array()) {
        throw ConfigError(std::string("missing array field '") + key + "'");
    }
    std::vector<double> out;
    for (const auto& v : doc.at(key)) {
        if (!v.is_number()) {
            throw ConfigError(std::string("non-numeric entry in '") + key + "'");
        }
        out.push_back(v.get<double>());
    }
    return out;
}

Eigen::MatrixXd json_matrix(const nlohmann::json& doc, const char* key) {
    if (!doc.contains(key) || !doc.at(key).is_array()) {
        throw ConfigError(std::string("missing matrix field '") + key + "'");
    }
    const auto& rows = doc.at(key);
    const std::size_t n = rows.size();
    Eigen::MatrixXd m(n, n);
    for (std::size_t r = 0; r < n; ++r) {
        if (!rows[r].is_array() || rows[r].size() != n) {
            throw ConfigError(std::string("matrix '") + key + "' must be square");
        }
        for (std::size_t c = 0; c < n; ++c) {
            m(r, c) = rows[r][c].get<double>();
        }
    }
    return m;
}

nlohmann::json matrix_json(const Eigen::MatrixXd& m) {
    nlohmann::json rows = nlohmann::json::array();
    for (Eigen::Index r = 0; r < m.rows(); ++r) {
        nlohmann::json row = nlohmann::json::array();
        for (Eigen::Index c = 0; c < m.cols(); ++c) {
            row.push_back(m(r, c));
        }
        rows.push_back(row);
    }
    return rows;
}

MarginalSpec marginal_from_json(const nlohmann::json& doc) {
    const std::string kind = doc.value("kind", "");
    MarginalSpec spec;
    if (kind == "gamma") {
        spec = GammaMarginal{json_number(doc, "shape"), json_number(doc, "scale")};
    } else if (kind == "normal") {
        spec = NormalMarginal{json_number(doc, "mean"), json_number(doc, "sd")};
    } else if (kind == "uniform") {
        spec = UniformMarginal{json_number(doc, "lo"), json_number(doc, "hi")};
    } else if (kind == "discrete") {
        spec = DiscreteMarginal{json_vector(doc, "atoms"), json_vector(doc, "probs")};
    } else {
        throw ConfigError("unknown marginal kind '" + kind + "'");
    }
    return spec;
}

CopulaSpec copula_from_json(const nlohmann::json& doc) {
    const std::string kind = doc.value("kind", "");
    if (kind == "clayton") {
        return ClaytonCopula{json_number(doc, "theta")};
    }
    if (kind == "counter_monotonic" || kind == "countermonotonic") {
        return CounterMonotonicCopula{};
    }
    if (kind == "comonotonic") {
        return ComonotonicCopula{};
    }
    if (kind == "independent") {
        return IndependentCopula{};
    }
    if (kind == "gaussian") {
        return GaussianCopula{json_matrix(doc, "corr")};
    }
    throw ConfigError("unknown copula kind '" + kind + "'");
}

struct RowSampler {
    const JointModel* model = nullptr;
    CounterRng rng{0};
    Eigen::MatrixXd factor;
    std::size_t n = 0;

    void operator()(std::size_t k, double* out) const {
        if (const auto* mvn = std::get_if<MultivariateNormal>(model)) {
            Eigen::VectorXd z(n);
            for (std::size_t j = 0; j < n; ++j) {
                z[j] = normal_quantile(rng.uniform(j, k));
            }
            Eigen::VectorXd x = mvn->mu + factor * z;
            for (std::size_t j = 0; j < n; ++j) {
                out[j] = x[j];
            }
            return;
        }
        const auto& cm = std::get<CopulaModel>(*model);
        std::visit(overloaded{
                       [&](const IndependentCopula&) {
                           for (std::size_t j = 0; j < n; ++j) {
                               out[j] = marginal_quantile(cm.marginals[j], rng.uniform(j, k));
                           }
                       },
                       [&](const ComonotonicCopula&) {
                           const double u = rng.uniform(0, k);
                           for (std::size_t j = 0; j < n; ++j) {
                               out[j] = marginal_quantile(cm.marginals[j], u);
                           }
                       },
                       [&](const CounterMonotonicCopula&) {
                           const double u = rng.uniform(0, k);
                           out[0] = marginal_quantile(cm.marginals[0], u);
                           out[1] = marginal_upper_quantile(cm.marginals[1], u);
                       },
                       [&](const ClaytonCopula& c) {
                           const double th = c.theta;
                           if (n == 2) {
                               const double u1 = rng.uniform(0, k);
                               const double t = rng.uniform(1, k);
                               const double excess =
                                   std::pow(u1, -th) * std::expm1(-th / (1.0 + th) * std::log(t));
                               const double u2 = std::clamp(std::exp(-std::log1p(excess) / th),
                                                            0x1.0p-60, 1.0 - 0x1.0p-53);
                               out[0] = marginal_quantile(cm.marginals[0], u1);
                               out[1] = marginal_quantile(cm.marginals[1], u2);
                               return;
                           }
                           const double v = boost::math::gamma_p_inv(1.0 / th, rng.uniform(n, k));
                           for (std::size_t j = 0; j < n; ++j) {
                               const double e = -std::log(rng.uniform(j, k));
                               const double u = std::clamp(std::exp(-std::log1p(e / v) / th),
                                                           0x1.0p-60, 1.0 - 0x1.0p-53);
                               out[j] = marginal_quantile(cm.marginals[j], u);
                           }
                       },
                       [&](const GaussianCopula&) {
                           Eigen::VectorXd z(n);
                           for (std::size_t j = 0; j < n; ++j) {
                               z[j] = normal_quantile(rng.uniform(j, k));
                           }
                           Eigen::VectorXd y = factor * z;
                           for (std::size_t j = 0; j < n; ++j) {
                               const double u = std::clamp(normal_cdf(y[j]), 0x1.0p-60, 1.0 - 0x1.0p-53);
                               out[j] = marginal_quantile(cm.marginals[j], u);
                           }
                       },
                   },
                   cm.copula);
    }
};

} // namespace

void validate(const MarginalSpec& spec) {
    std::visit(overloaded{
                   [](const GammaMarginal& g) {
                       require(finite(g.shape) && g.shape > 0.0, "gamma shape must be positive");
                       require(finite(g.scale) && g.scale > 0.0, "gamma scale must be positive");
                   },
                   [](const NormalMarginal& m) {
                       require(finite(m.mean), "normal mean must be finite");
                       require(finite(m.sd) && m.sd > 0.0, "normal sd must be positive");
                   },
                   [](const UniformMarginal& u) {
                       require(finite(u.lo) && finite(u.hi) && u.lo < u.hi, "uniform needs lo < hi");
                   },
                   [](const DiscreteMarginal& d) {
                       require(!d.atoms.empty(), "discrete marginal needs atoms");
                       require(d.atoms.size() == d.probs.size(), "discrete atoms and probs differ in length");
                       require(std::is_sorted(d.atoms.begin(), d.atoms.end()), "discrete atoms must be sorted");
                       double total = 0.0;
                       for (double p : d.probs) {
                           require(finite(p) && p > 0.0, "discrete probs must be positive");
                           total += p;
                       }
                       require(std::abs(total - 1.0) <= 1e-12, "discrete probs must sum to 1");
                   },
               },
               spec);
}

double marginal_quantile(const MarginalSpec& spec, double p) {
    check_probability(p, "marginal_quantile");
    return std::visit(overloaded{
                          [p](const GammaMarginal& g) { return gamma_quantile(g, p); },
                          [p](const NormalMarginal& m) { return m.mean + m.sd * normal_quantile(p); },
                          [p](const UniformMarginal& u) { return u.lo + p * (u.hi - u.lo); },
                          [p](const DiscreteMarginal& d) { return discrete_left(d, p); },
                      },
                      spec);
}

double marginal_upper_quantile(const MarginalSpec& spec, double p) {
    check_probability(p, "marginal_upper_quantile");
    return std::visit(overloaded{
                          [p](const GammaMarginal& g) { return gamma_upper_quantile(g, p); },
                          [p](const NormalMarginal& m) { return m.mean - m.sd * normal_quantile(p); },
                          [p](const UniformMarginal& u) { return u.hi - p * (u.hi - u.lo); },
                          [p](const DiscreteMarginal& d) { return discrete_left(d, 1.0 - p); },
                      },
                      spec);
}

double marginal_quantile_right(const MarginalSpec& spec, double p) {
    check_probability(p, "marginal_quantile_right");
    if (const auto* d = std::get_if<DiscreteMarginal>(&spec)) {
        return discrete_right(*d, p);
    }
    if (p == 0.0) {
        // essential infimum
        return std::visit(overloaded{
                              [](const GammaMarginal&) { return 0.0; },
                              [](const NormalMarginal&) { return -kInf; },
                              [](const UniformMarginal& u) { return u.lo; },
                              [](const DiscreteMarginal& d) { return d.atoms.front(); },
                          },
                          spec);
    }
    return marginal_quantile(spec, p);
}

double marginal_cdf(const MarginalSpec& spec, double x) {
    return std::visit(overloaded{
                          [x](const GammaMarginal& g) {
                              return x <= 0.0 ? 0.0 : boost::math::gamma_p(g.shape, x / g.scale);
                          },
                          [x](const NormalMarginal& m) { return normal_cdf((x - m.mean) / m.sd); },
                          [x](const UniformMarginal& u) {
                              return std::clamp((x - u.lo) / (u.hi - u.lo), 0.0, 1.0);
                          },
                          [x](const DiscreteMarginal& d) {
                              double c = 0.0;
                              for (std::size_t j = 0; j < d.atoms.size() && d.atoms[j] <= x; ++j) {
                                  c += d.probs[j];
                              }
                              return std::min(c, 1.0);
                          },
                      },
                      spec);
}

double marginal_mean(const MarginalSpec& spec) {
    return std::visit(overloaded{
                          [](const GammaMarginal& g) { return g.shape * g.scale; },
                          [](const NormalMarginal& m) { return m.mean; },
                          [](const UniformMarginal& u) { return 0.5 * (u.lo + u.hi); },
                          [](const DiscreteMarginal& d) {
                              double m = 0.0;
                              for (std::size_t j = 0; j < d.atoms.size(); ++j) {
                                  m += d.atoms[j] * d.probs[j];
                              }
                              return m;
                          },
                      },
                      spec);
}

std::size_t dimension(const JointModel& model) {
    return std::visit(overloaded{
                          [](const CopulaModel& m) { return m.marginals.size(); },
                          [](const MultivariateNormal& m) { return static_cast<std::size_t>(m.mu.size()); },
                      },
                      model);
}

void validate(const JointModel& model) {
    if (const auto* mvn = std::get_if<MultivariateNormal>(&model)) {
        const auto n = mvn->mu.size();
        require(n >= 1, "multivariate normal needs at least one component");
        require(mvn->sigma.rows() == n && mvn->sigma.cols() == n, "sigma dimension mismatch");
        require(mvn->mu.allFinite() && mvn->sigma.allFinite(), "mvn parameters must be finite");
        require((mvn->sigma - mvn->sigma.transpose()).cwiseAbs().maxCoeff() <= 1e-12 * (1.0 + mvn->sigma.cwiseAbs().maxCoeff()),
                "sigma must be symmetric");
        Eigen::LLT<Eigen::MatrixXd> llt(mvn->sigma);
        require(llt.info() == Eigen::Success, "sigma must be positive definite");
        return;
    }
    const auto& cm = std::get<CopulaModel>(model);
    const std::size_t n = cm.marginals.size();
    require(n >= 1, "model needs at least one marginal");
    for (const auto& m : cm.marginals) {
        validate(m);
    }
    std::visit(overloaded{
                   [](const ClaytonCopula& c) {
                       require(finite(c.theta) && c.theta > 0.0, "clayton theta must be positive");
                   },
                   [n](const CounterMonotonicCopula&) {
                       require(n == 2, "counter-monotonic copula requires exactly two marginals");
                   },
                   [](const ComonotonicCopula&) {},
                   [](const IndependentCopula&) {},
                   [n](const GaussianCopula& g) {
                       const auto dim = static_cast<Eigen::Index>(n);
                       require(g.corr.rows() == dim && g.corr.cols() == dim, "correlation dimension mismatch");
                       require((g.corr - g.corr.transpose()).cwiseAbs().maxCoeff() <= 1e-12,
                               "correlation must be symmetric");
                       for (Eigen::Index j = 0; j < dim; ++j) {
                           require(std::abs(g.corr(j, j) - 1.0) <= 1e-12, "correlation needs a unit diagonal");
                       }
                       Eigen::SelfAdjointEigenSolver<Eigen::MatrixXd> eig(g.corr);
                       require(eig.eigenvalues().minCoeff() >= -1e-10, "correlation must be positive semidefinite");
                   },
               },
               cm.copula);
}

nlohmann::json model_to_json(const JointModel& model) {
    nlohmann::json doc;
    if (const auto* mvn = std::get_if<MultivariateNormal>(&model)) {
        doc["mvn"]["mu"] = std::vector<double>(mvn->mu.data(), mvn->mu.data() + mvn->mu.size());
        doc["mvn"]["sigma"] = matrix_json(mvn->sigma);
        return doc;
    }
    const auto& cm = std::get<CopulaModel>(model);
    doc["marginals"] = nlohmann::json::array();
    for (const auto& m : cm.marginals) {
        nlohmann::json j = std::visit(overloaded{
                                          [](const GammaMarginal& g) {
                                              return nlohmann::json{{"kind", "gamma"}, {"shape", g.shape}, {"scale", g.scale}};
                                          },
                                          [](const NormalMarginal& g) {
                                              return nlohmann::json{{"kind", "normal"}, {"mean", g.mean}, {"sd", g.sd}};
                                          },
                                          [](const UniformMarginal& g) {
                                              return nlohmann::json{{"kind", "uniform"}, {"lo", g.lo}, {"hi", g.hi}};
                                          },
                                          [](const DiscreteMarginal& g) {
                                              return nlohmann::json{{"kind", "discrete"}, {"atoms", g.atoms}, {"probs", g.probs}};
                                          },
                                      },
                                      m);
        doc["marginals"].push_back(j);
    }
    doc["copula"] = std::visit(overloaded{
                                   [](const ClaytonCopula& c) { return nlohmann::json{{"kind", "clayton"}, {"theta", c.theta}}; },
                                   [](const CounterMonotonicCopula&) { return nlohmann::json{{"kind", "counter_monotonic"}}; },
                                   [](const ComonotonicCopula&) { return nlohmann::json{{"kind", "comonotonic"}}; },
                                   [](const IndependentCopula&) { return nlohmann::json{{"kind", "independent"}}; },
                                   [](const GaussianCopula& g) {
                                       return nlohmann::json{{"kind", "gaussian"}, {"corr", matrix_json(g.corr)}};
                                   },
                               },
                               cm.copula);
    return doc;
}

JointModel model_from_json(const nlohmann::json& doc) {
    try {
        if (!doc.is_object()) {
            throw ConfigError("model must be a JSON object");
        }
        if (doc.contains("mvn")) {
            const auto& m = doc.at("mvn");
            const auto mu = json_vector(m, "mu");
            MultivariateNormal mvn;
            mvn.mu = Eigen::Map<const Eigen::VectorXd>(mu.data(), static_cast<Eigen::Index>(mu.size()));
            mvn.sigma = json_matrix(m, "sigma");
            return mvn;
        }
        if (!doc.contains("marginals") || !doc.at("marginals").is_array()) {
            throw ConfigError("model needs 'marginals' or 'mvn'");
        }
        CopulaModel cm;
        for (const auto& m : doc.at("marginals")) {
            cm.marginals.push_back(marginal_from_json(m));
        }
        cm.copula = doc.contains("copula") ? copula_from_json(doc.at("copula")) : CopulaSpec{IndependentCopula{}};
        return cm;
    } catch (const nlohmann::json::exception& e) {
        throw ConfigError(std::string("malformed model document: ") + e.what());
    }
}

std::uint64_t fingerprint_text(const std::string& text) {
    return fnv1a(text);
}

std::uint64_t fingerprint(const JointModel& model) {
    return fnv1a(model_to_json(model).dump());
}

ScenarioSet::ScenarioSet(std::size_t units, std::vector<double> losses, std::uint64_t seed,
                         std::uint64_t model_fingerprint, std::vector<double> probabilities)
    : units_(units), losses_(std::move(losses)), probs_(std::move(probabilities)), seed_(seed),
      fingerprint_(model_fingerprint) {
    if (units_ == 0) {
        throw std::invalid_argument("scenario set needs at least one unit");
    }
    if (losses_.empty() || losses_.size() % units_ != 0) {
        throw std::invalid_argument("loss matrix size must be a positive multiple of the unit count");
    }
    const std::size_t n = losses_.size() / units_;
    aggregate_.resize(n);
    for (std::size_t k = 0; k < n; ++k) {
        double s = 0.0;
        for (std::size_t i = 0; i < units_; ++i) {
            const double x = losses_[k * units_ + i];
            if (!std::isfinite(x)) {
                throw std::invalid_argument("scenario losses must be finite");
            }
            s += x;
        }
        aggregate_[k] = s;
    }
    if (!probs_.empty()) {
        if (probs_.size() != n) {
            throw std::invalid_argument("probability vector length must match the scenario count");
        }
        double total = 0.0;
        for (double p : probs_) {
            if (!(p > 0.0) || !std::isfinite(p)) {
                throw std::invalid_argument("scenario probabilities must be positive");
            }
            total += p;
        }
        if (std::abs(total - 1.0) > 1e-12) {
            throw std::invalid_argument("scenario probabilities must sum to 1");
        }
    }
}

ScenarioSet ScenarioSet::from_atoms(const std::vector<std::vector<double>>& rows,
                                    std::vector<double> probabilities) {
    if (rows.empty()) {
        throw std::invalid_argument("from_atoms: no atoms");
    }
    const std::size_t n = rows.front().size();
    std::vector<double> losses;
    losses.reserve(rows.size() * n);
    for (const auto& r : rows) {
        if (r.size() != n) {
            throw std::invalid_argument("from_atoms: ragged rows");
        }
        losses.insert(losses.end(), r.begin(), r.end());
    }
    std::string text;
    for (double x : losses) {
        text += std::to_string(x) + ",";
    }
    for (double p : probabilities) {
        text += std::to_string(p) + ";";
    }
    return ScenarioSet(n, std::move(losses), 0, fnv1a(text), std::move(probabilities));
}

std::vector<double> ScenarioSet::column(std::size_t i) const {
    std::vector<double> out(size());
    for (std::size_t k = 0; k < size(); ++k) {
        out[k] = loss(k, i);
    }
    return out;
}

ScenarioSet sample_joint(const JointModel& model, std::size_t n_scenarios, std::uint64_t seed, Exec exec) {
    if (n_scenarios == 0) {
        throw std::invalid_argument("sample_joint: n_scenarios must be at least 1");
    }
    validate(model);
    RowSampler sampler;
    sampler.model = &model;
    sampler.rng = CounterRng(seed);
    sampler.n = dimension(model);
    if (const auto* mvn = std::get_if<MultivariateNormal>(&model)) {
        sampler.factor = psd_factor(mvn->sigma);
    } else if (const auto* g = std::get_if<GaussianCopula>(&std::get<CopulaModel>(model).copula)) {
        sampler.factor = psd_factor(g->corr);
    }
    const std::size_t n = sampler.n;
    std::vector<double> losses(n_scenarios * n);
    parallel_for(
        n_scenarios, [&](std::size_t k) { sampler(k, losses.data() + k * n); }, exec);
    return ScenarioSet(n, std::move(losses), seed, fingerprint(model));
}

} // namespace riskshare
