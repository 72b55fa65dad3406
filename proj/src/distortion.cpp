#include <riskshare/distortion.hpp>

#include <algorithm>
#include <cmath>
#include <fstream>
#include <istream>
#include <limits>
#include <sstream>

#include <riskshare/errors.hpp>
#include <riskshare/special.hpp>

namespace riskshare {

namespace {

constexpr double kInf = std::numeric_limits<double>::infinity();

double tvar_dual_value(double theta, double p) {
    if (theta <= 0.0) {
        return 0.0;
    }
    if (theta >= 1.0) {
        return 1.0;
    }
    if (theta <= 0.5) {
        return std::max(p - (1.0 - 2.0 * theta), 0.0) / (2.0 * theta);
    }
    return std::min(p / (2.0 * (1.0 - theta)), 1.0);
}

std::vector<double> split_csv_line(const std::string& line) {
    std::vector<double> out;
    std::stringstream ss(line);
    std::string cell;
    while (std::getline(ss, cell, ',')) {
        const auto first = cell.find_first_not_of(" \t\r");
        if (first == std::string::npos) {
            out.push_back(std::numeric_limits<double>::quiet_NaN());
            continue;
        }
        try {
            out.push_back(std::stod(cell.substr(first)));
        } catch (const std::exception&) {
            out.push_back(std::numeric_limits<double>::quiet_NaN());
        }
    }
    return out;
}

double d_at_theta(const DistortionFamily& f, double theta, double p) {
    return f.eval_coord(f.parametrization().coord_of(theta), p);
}

} // namespace

DistortionFamily DistortionFamily::wang() {
    return DistortionFamily(DistortionKind::wang, Parametrization::probit(3.0));
}

DistortionFamily DistortionFamily::power() {
    return DistortionFamily(DistortionKind::power, Parametrization::logit(3.0));
}

DistortionFamily DistortionFamily::tvar_dual() {
    return DistortionFamily(DistortionKind::tvar_dual, Parametrization::bounded(0.0, 1.0));
}

DistortionFamily DistortionFamily::var_indicator() {
    return DistortionFamily(DistortionKind::var_indicator, Parametrization::bounded(0.0, 1.0));
}

DistortionFamily DistortionFamily::user_table(std::vector<double> theta_grid, std::vector<double> p_grid,
                                              std::vector<double> values) {
    const std::size_t nt = theta_grid.size();
    const std::size_t np = p_grid.size();
    if (nt < 2 || np < 2) {
        throw ConfigError("user distortion table needs at least two theta rows and two p columns");
    }
    if (values.size() != nt * np) {
        throw ConfigError("user distortion table body does not match its grids");
    }
    for (std::size_t j = 0; j + 1 < nt; ++j) {
        if (!(theta_grid[j] < theta_grid[j + 1])) {
            throw ConfigError("user distortion theta grid must be strictly increasing");
        }
    }
    for (std::size_t j = 0; j + 1 < np; ++j) {
        if (!(p_grid[j] < p_grid[j + 1])) {
            throw ConfigError("user distortion p grid must be strictly increasing");
        }
    }
    if (p_grid.front() != 0.0 || p_grid.back() != 1.0) {
        throw ConfigError("user distortion p grid must start at 0 and end at 1");
    }
    for (std::size_t r = 0; r < nt; ++r) {
        for (std::size_t c = 0; c < np; ++c) {
            const double v = values[r * np + c];
            if (!(v >= 0.0 && v <= 1.0)) {
                throw ConfigError("user distortion values must lie in [0,1]");
            }
            if (c > 0 && v < values[r * np + c - 1]) {
                throw ConfigError("user distortion rows must be non-decreasing in p");
            }
            if (r > 0 && v < values[(r - 1) * np + c]) {
                throw ConfigError("user distortion columns must be non-decreasing in theta");
            }
        }
        if (values[r * np] != 0.0 || values[r * np + np - 1] != 1.0) {
            throw ConfigError("user distortion rows must satisfy D(0)=0 and D(1)=1");
        }
    }
    DistortionFamily f(DistortionKind::user_table, Parametrization::bounded(theta_grid.front(), theta_grid.back()));
    f.table_theta_ = std::move(theta_grid);
    f.table_p_ = std::move(p_grid);
    f.table_values_ = std::move(values);
    return f;
}

std::string DistortionFamily::name() const {
    switch (kind_) {
    case DistortionKind::wang:
        return "wang";
    case DistortionKind::power:
        return "power";
    case DistortionKind::tvar_dual:
        return "tvar_dual";
    case DistortionKind::var_indicator:
        return "var";
    case DistortionKind::user_table:
        return "user_table";
    }
    return "";
}

double DistortionFamily::eval_table(double theta, double p) const {
    const std::size_t np = table_p_.size();
    auto row_value = [&](std::size_t r) {
        auto it = std::upper_bound(table_p_.begin(), table_p_.end(), p);
        std::size_t c = static_cast<std::size_t>(it - table_p_.begin());
        if (c >= np) {
            return table_values_[r * np + np - 1];
        }
        c = std::max<std::size_t>(c, 1);
        const double w = (p - table_p_[c - 1]) / (table_p_[c] - table_p_[c - 1]);
        return (1.0 - w) * table_values_[r * np + c - 1] + w * table_values_[r * np + c];
    };
    const double th = std::clamp(theta, table_theta_.front(), table_theta_.back());
    auto it = std::upper_bound(table_theta_.begin(), table_theta_.end(), th);
    std::size_t r = static_cast<std::size_t>(it - table_theta_.begin());
    if (r >= table_theta_.size()) {
        return row_value(table_theta_.size() - 1);
    }
    r = std::max<std::size_t>(r, 1);
    const double w = (th - table_theta_[r - 1]) / (table_theta_[r] - table_theta_[r - 1]);
    return (1.0 - w) * row_value(r - 1) + w * row_value(r);
}

double DistortionFamily::eval_coord(double coord, double p) const {
    if (p <= 0.0) {
        return 0.0;
    }
    if (p >= 1.0) {
        return 1.0;
    }
    switch (kind_) {
    case DistortionKind::wang:
        return normal_cdf(normal_quantile(p) + coord);
    case DistortionKind::power:
        if (coord == kInf) {
            return 1.0;
        }
        if (coord == -kInf) {
            return 0.0;
        }
        return std::exp(std::exp(-coord) * std::log(p));
    case DistortionKind::tvar_dual:
        return tvar_dual_value(coord, p);
    case DistortionKind::var_indicator:
        return p > 1.0 - coord ? 1.0 : 0.0;
    case DistortionKind::user_table:
        return eval_table(coord, p);
    }
    return 0.0;
}

double distortion_eval(const DistortionFamily& family, double theta, double p) {
    if (!(p >= 0.0 && p <= 1.0)) {
        throw std::invalid_argument("distortion_eval: p must lie in [0,1]");
    }
    const bool closed = family.kind() == DistortionKind::var_indicator;
    const bool inside = closed ? (theta >= family.theta_lo() && theta <= family.theta_hi())
                               : (theta > family.theta_lo() && theta < family.theta_hi());
    if (!inside) {
        throw std::invalid_argument("distortion_eval: theta outside the parameter interval");
    }
    return family.eval_coord(family.parametrization().coord_of(theta), p);
}

double distortion_risk_measure_coord(const DistortionFamily& family, double coord, const EmpiricalDistribution& dist) {
    if (dist.empty()) {
        throw std::invalid_argument("distortion_risk_measure: empty distribution");
    }
    if (std::isnan(coord)) {
        throw std::invalid_argument("distortion_risk_measure: parameter is NaN");
    }
    if (coord <= family.parametrization().coord_lo()) {
        return dist.min();
    }
    if (coord >= family.parametrization().coord_hi()) {
        return dist.max();
    }
    double acc = 0.0;
    double d_prev = 1.0;
    for (std::size_t k = 0; k < dist.size(); ++k) {
        const double d = family.eval_coord(coord, dist.survival_after(k));
        acc += dist.value(k) * (d_prev - d);
        d_prev = d;
    }
    return acc;
}

double distortion_risk_measure(const DistortionFamily& family, double theta, const EmpiricalDistribution& dist) {
    if (std::isnan(theta)) {
        throw std::invalid_argument("distortion_risk_measure: theta is NaN");
    }
    if (theta <= family.theta_lo()) {
        return dist.min();
    }
    if (theta >= family.theta_hi()) {
        return dist.max();
    }
    return distortion_risk_measure_coord(family, family.parametrization().coord_of(theta), dist);
}

double distortion_risk_measure_survival_form(const DistortionFamily& family, double theta,
                                             const EmpiricalDistribution& dist) {
    if (dist.empty()) {
        throw std::invalid_argument("distortion_risk_measure: empty distribution");
    }
    if (theta <= family.theta_lo()) {
        return dist.min();
    }
    if (theta >= family.theta_hi()) {
        return dist.max();
    }
    // distinct atoms and the survival probability just above each
    std::vector<double> v;
    std::vector<double> g;
    for (std::size_t k = 0; k < dist.size(); ++k) {
        if (k + 1 < dist.size() && dist.value(k + 1) == dist.value(k)) {
            continue;
        }
        v.push_back(dist.value(k));
        g.push_back(dist.survival_after(k));
    }
    // rho = int_0^inf D(S(x)) dx - int_-inf^0 (1 - D(S(x))) dx, S piecewise constant
    auto piece = [&](double lo, double hi, double dval) {
        double total = 0.0;
        const double pos_lo = std::max(lo, 0.0);
        if (hi > pos_lo) {
            total += (hi - pos_lo) * dval;
        }
        const double neg_hi = std::min(hi, 0.0);
        if (neg_hi > lo) {
            total -= (neg_hi - lo) * (1.0 - dval);
        }
        return total;
    };
    double rho = 0.0;
    // below the first atom the survival is 1 and D(1) = 1
    if (v.front() > 0.0) {
        rho += v.front();
    }
    for (std::size_t j = 0; j + 1 < v.size(); ++j) {
        rho += piece(v[j], v[j + 1], d_at_theta(family, theta, g[j]));
    }
    // above the last atom the survival is 0 and D(0) = 0
    if (v.back() < 0.0) {
        rho += v.back();
    }
    return rho;
}

ValidationReport validate_family(const DistortionFamily& family, std::span<const double> theta_grid,
                                 std::span<const double> p_grid) {
    ValidationReport rep;
    if (theta_grid.size() < 50 || p_grid.size() < 50) {
        rep.messages.push_back("grids need at least 50 points each");
        rep.boundary = rep.p_monotone = rep.theta_monotone = rep.theta_continuous = false;
        rep.limit_a = rep.limit_b = false;
        return rep;
    }
    const std::size_t nt = theta_grid.size();
    const std::size_t np = p_grid.size();
    std::vector<double> d(nt * np);
    for (std::size_t r = 0; r < nt; ++r) {
        for (std::size_t c = 0; c < np; ++c) {
            d[r * np + c] = d_at_theta(family, theta_grid[r], p_grid[c]);
        }
    }
    constexpr double tol = 1e-12;
    for (std::size_t r = 0; r < nt; ++r) {
        if (std::abs(d_at_theta(family, theta_grid[r], 0.0)) > tol ||
            std::abs(d_at_theta(family, theta_grid[r], 1.0) - 1.0) > tol) {
            if (rep.boundary) {
                rep.messages.push_back("boundary values D(0)=0, D(1)=1 violated at theta=" + std::to_string(theta_grid[r]));
            }
            rep.boundary = false;
        }
        for (std::size_t c = 0; c + 1 < np; ++c) {
            if (d[r * np + c + 1] < d[r * np + c] - tol) {
                if (rep.p_monotone) {
                    rep.messages.push_back("not monotone in p at theta=" + std::to_string(theta_grid[r]));
                }
                rep.p_monotone = false;
            }
        }
    }
    for (std::size_t c = 0; c < np; ++c) {
        for (std::size_t r = 0; r + 1 < nt; ++r) {
            if (d[(r + 1) * np + c] < d[r * np + c] - tol) {
                if (rep.theta_monotone) {
                    rep.messages.push_back("not monotone in theta at p=" + std::to_string(p_grid[c]));
                }
                rep.theta_monotone = false;
            }
        }
    }
    // screen adjacent jumps, then localise each suspicious one by repeated halving
    for (std::size_t r = 0; r + 1 < nt && rep.theta_continuous; ++r) {
        const double h = theta_grid[r + 1] - theta_grid[r];
        for (std::size_t c = 0; c < np; ++c) {
            const double jump = std::abs(d[(r + 1) * np + c] - d[r * np + c]);
            if (jump <= 10.0 * h) {
                continue;
            }
            double lo = theta_grid[r];
            double hi = theta_grid[r + 1];
            double d_lo = d[r * np + c];
            double d_hi = d[(r + 1) * np + c];
            for (int it = 0; it < 40; ++it) {
                const double mid = 0.5 * (lo + hi);
                const double d_mid = d_at_theta(family, mid, p_grid[c]);
                if (std::abs(d_mid - d_lo) >= std::abs(d_hi - d_mid)) {
                    hi = mid;
                    d_hi = d_mid;
                } else {
                    lo = mid;
                    d_lo = d_mid;
                }
            }
            if (std::abs(d_hi - d_lo) > 1e-6) {
                rep.theta_continuous = false;
                rep.messages.push_back("jump of " + std::to_string(std::abs(d_hi - d_lo)) + " in theta near " +
                                       std::to_string(lo) + " at p=" + std::to_string(p_grid[c]));
                break;
            }
        }
    }
    const double c_lo = family.parametrization().coord_lo();
    const double c_hi = family.parametrization().coord_hi();
    for (std::size_t c = 0; c < np; ++c) {
        const double p = p_grid[c];
        const double want_a = p >= 1.0 ? 1.0 : 0.0;
        const double want_b = p > 0.0 ? 1.0 : 0.0;
        if (std::abs(family.eval_coord(c_lo, p) - want_a) > tol) {
            if (rep.limit_a) {
                rep.messages.push_back("limit at the lower end differs from 1{p=1} at p=" + std::to_string(p));
            }
            rep.limit_a = false;
        }
        if (std::abs(family.eval_coord(c_hi, p) - want_b) > tol) {
            if (rep.limit_b) {
                rep.messages.push_back("limit at the upper end differs from 1{p>0} at p=" + std::to_string(p));
            }
            rep.limit_b = false;
        }
    }
    return rep;
}

ValidationReport validate_family(const DistortionFamily& family) {
    const double lo = std::isfinite(family.theta_lo()) ? family.theta_lo() : -50.0;
    const double hi = std::isfinite(family.theta_hi()) ? family.theta_hi() : 50.0;
    std::vector<double> theta(200);
    for (std::size_t j = 0; j < theta.size(); ++j) {
        theta[j] = lo + (hi - lo) * (static_cast<double>(j) + 0.5) / static_cast<double>(theta.size());
    }
    std::vector<double> p(201);
    for (std::size_t j = 0; j < p.size(); ++j) {
        p[j] = static_cast<double>(j) / 200.0;
    }
    return validate_family(family, theta, p);
}

DistortionFamily load_user_table_csv(std::istream& in) {
    std::string line;
    std::vector<std::vector<double>> rows;
    while (std::getline(in, line)) {
        if (line.empty() || line[0] == '#') {
            continue;
        }
        rows.push_back(split_csv_line(line));
    }
    if (rows.size() < 3) {
        throw ConfigError("user distortion CSV needs a p header row and at least two theta rows");
    }
    std::vector<double> p(rows[0].begin() + 1, rows[0].end());
    std::vector<double> theta;
    std::vector<double> values;
    for (std::size_t r = 1; r < rows.size(); ++r) {
        if (rows[r].size() != p.size() + 1) {
            throw ConfigError("user distortion CSV row " + std::to_string(r) + " has the wrong width");
        }
        theta.push_back(rows[r][0]);
        values.insert(values.end(), rows[r].begin() + 1, rows[r].end());
    }
    for (double v : p) {
        if (std::isnan(v)) {
            throw ConfigError("user distortion CSV header has a non-numeric p value");
        }
    }
    for (double v : values) {
        if (std::isnan(v)) {
            throw ConfigError("user distortion CSV body has a non-numeric value");
        }
    }
    return DistortionFamily::user_table(std::move(theta), std::move(p), std::move(values));
}

DistortionFamily distortion_from_json(const nlohmann::json& doc) {
    try {
        const std::string kind = doc.is_string() ? doc.get<std::string>() : doc.value("kind", "");
        if (kind == "wang") {
            return DistortionFamily::wang();
        }
        if (kind == "power") {
            return DistortionFamily::power();
        }
        if (kind == "tvar_dual") {
            return DistortionFamily::tvar_dual();
        }
        if (kind == "var" || kind == "var_indicator") {
            return DistortionFamily::var_indicator();
        }
        if (kind == "user_table") {
            if (doc.contains("csv")) {
                std::ifstream in(doc.at("csv").get<std::string>());
                if (!in) {
                    throw IoError("cannot open distortion table " + doc.at("csv").get<std::string>());
                }
                return load_user_table_csv(in);
            }
            std::vector<double> theta = doc.at("theta").get<std::vector<double>>();
            std::vector<double> p = doc.at("p").get<std::vector<double>>();
            std::vector<double> values;
            for (const auto& row : doc.at("values")) {
                const auto r = row.get<std::vector<double>>();
                values.insert(values.end(), r.begin(), r.end());
            }
            return DistortionFamily::user_table(std::move(theta), std::move(p), std::move(values));
        }
        throw ConfigError("unknown distortion kind '" + kind + "'");
    } catch (const nlohmann::json::exception& e) {
        throw ConfigError(std::string("malformed distortion document: ") + e.what());
    }
}

nlohmann::json distortion_to_json(const DistortionFamily& family) {
    nlohmann::json doc{{"kind", family.name()}};
    if (family.kind() == DistortionKind::user_table) {
        doc["theta"] = family.table_theta();
        doc["p"] = family.table_p();
        const std::size_t np = family.table_p().size();
        nlohmann::json rows = nlohmann::json::array();
        for (std::size_t r = 0; r < family.table_theta().size(); ++r) {
            rows.push_back(std::vector<double>(family.table_values().begin() + static_cast<long>(r * np),
                                               family.table_values().begin() + static_cast<long>((r + 1) * np)));
        }
        doc["values"] = rows;
    }
    return doc;
}

StieltjesKernel::StieltjesKernel(DistortionFamily family, EmpiricalDistribution dist)
    : family_(std::move(family)), dist_(std::move(dist)) {
    if (dist_.empty()) {
        throw std::invalid_argument("StieltjesKernel: empty distribution");
    }
    const std::size_t n = dist_.size();
    level_.resize(n + 1);
    level_[0] = 1.0;
    for (std::size_t k = 0; k < n; ++k) {
        level_[k + 1] = dist_.survival_after(k);
    }
    transformed_.resize(n + 1);
    for (std::size_t j = 0; j <= n; ++j) {
        const double q = level_[j];
        switch (family_.kind()) {
        case DistortionKind::wang:
            transformed_[j] = (q > 0.0 && q < 1.0) ? normal_quantile(q) : 0.0;
            break;
        case DistortionKind::power:
            transformed_[j] = q > 0.0 ? std::log(q) : -kInf;
            break;
        default:
            transformed_[j] = q;
        }
    }
}

double StieltjesKernel::level_value(std::size_t j, double coord) const {
    const double q = level_[j];
    if (q >= 1.0) {
        return 1.0;
    }
    if (q <= 0.0) {
        return 0.0;
    }
    switch (family_.kind()) {
    case DistortionKind::wang:
        return normal_cdf(transformed_[j] + coord);
    case DistortionKind::power:
        if (coord == kInf) {
            return 1.0;
        }
        if (coord == -kInf) {
            return 0.0;
        }
        return std::exp(std::exp(-coord) * transformed_[j]);
    default:
        return family_.eval_coord(coord, q);
    }
}

void StieltjesKernel::increments(double coord, std::span<double> out) const {
    const std::size_t n = dist_.size();
    if (auto k = single_atom(coord)) {
        std::fill(out.begin(), out.begin() + static_cast<long>(n), 0.0);
        out[*k] = 1.0;
        return;
    }
    const bool saturates = family_.kind() == DistortionKind::wang || family_.kind() == DistortionKind::power;
    double prev = 1.0;
    for (std::size_t k = 0; k < n; ++k) {
        const double d = level_value(k + 1, coord);
        out[k] = prev - d;
        prev = d;
        if (d == 0.0 && saturates) {
            // levels only decrease from here, so every later increment is zero
            std::fill(out.begin() + static_cast<long>(k + 1), out.begin() + static_cast<long>(n), 0.0);
            return;
        }
    }
}

std::optional<std::size_t> StieltjesKernel::single_atom(double coord) const {
    const std::size_t n = dist_.size();
    // a user table is evaluated as given at its ends; its limits are not assumed
    if (family_.kind() == DistortionKind::user_table) {
        return std::nullopt;
    }
    if (coord <= family_.parametrization().coord_lo()) {
        return 0;
    }
    if (coord >= family_.parametrization().coord_hi()) {
        return n - 1;
    }
    if (family_.kind() != DistortionKind::var_indicator) {
        return std::nullopt;
    }
    // first k whose survival level satisfies level <= 1 - theta; the slack absorbs
    // rounding between 1 - F(x) and the stored survival levels
    const double tau = 1.0 - coord + 1e-13;
    std::size_t lo = 0;
    std::size_t hi = n - 1;
    while (lo < hi) {
        const std::size_t mid = (lo + hi) / 2;
        if (level_[mid + 1] <= tau) {
            hi = mid;
        } else {
            lo = mid + 1;
        }
    }
    return lo;
}

double StieltjesKernel::risk_measure(double coord) const {
    if (auto k = single_atom(coord)) {
        return dist_.value(*k);
    }
    const bool saturates = family_.kind() == DistortionKind::wang || family_.kind() == DistortionKind::power;
    double acc = 0.0;
    double prev = 1.0;
    for (std::size_t k = 0; k < dist_.size(); ++k) {
        const double d = level_value(k + 1, coord);
        acc += dist_.value(k) * (prev - d);
        prev = d;
        if (d == 0.0 && saturates) {
            break;
        }
    }
    return acc;
}

} // namespace riskshare
