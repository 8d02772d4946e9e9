#include "cooc_atlas/kde.hpp"

#include "cooc_atlas/errors.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <numbers>
#include <sstream>

namespace cooc_atlas {

namespace {

constexpr double kNegInf = -std::numeric_limits<double>::infinity();

double log_sum_exp(const std::vector<double>& xs) {
    double mx = kNegInf;
    for (double x : xs) {
        mx = std::max(mx, x);
    }
    if (mx == kNegInf) {
        return kNegInf;
    }
    double s = 0;
    for (double x : xs) {
        s += std::exp(x - mx);
    }
    return mx + std::log(s);
}

std::string describe(const std::vector<GivenPoint>& given) {
    std::ostringstream os;
    for (std::size_t g = 0; g < given.size(); ++g) {
        os << (g ? ", " : "") << "domain " << given[g].domain << " at (";
        for (std::size_t a = 0; a < given[g].point.size(); ++a) {
            os << (a ? ", " : "") << given[g].point[a];
        }
        os << ")";
    }
    return os.str();
}

}

double log_gaussian_kernel(std::span<const double> x, std::span<const double> center, double sigma) {
    if (x.size() != center.size()) {
        throw UsageError("kernel: dimension mismatch (" + std::to_string(x.size()) + " vs " + std::to_string(center.size()) + ")");
    }
    if (!(sigma > 0)) {
        throw UsageError("kernel: sigma must be positive");
    }
    double d2 = 0;
    for (std::size_t a = 0; a < x.size(); ++a) {
        const double diff = x[a] - center[a];
        d2 += diff * diff;
    }
    const double d = static_cast<double>(x.size());
    return -0.5 * d * std::log(2 * std::numbers::pi * sigma * sigma) - d2 / (2 * sigma * sigma);
}

double gaussian_kernel(std::span<const double> x, std::span<const double> center, double sigma) {
    return std::exp(log_gaussian_kernel(x, center, sigma));
}

double embedding_spread(const Eigen::MatrixXd& coords) {
    if (coords.rows() == 0 || coords.cols() == 0) {
        return 0;
    }
    const Eigen::RowVectorXd mean = coords.colwise().mean();
    const double ss = (coords.rowwise() - mean).squaredNorm();
    return std::sqrt(ss / static_cast<double>(coords.rows() * coords.cols()));
}

double rule_of_thumb_bandwidth(double sigma_emp, int d, std::size_t n) {
    if (!std::isfinite(sigma_emp)) {
        throw NumericalError("rule-of-thumb bandwidth: non-finite spread");
    }
    if (d < 1 || n < 2) {
        throw UsageError("rule-of-thumb bandwidth needs d >= 1 and n >= 2");
    }
    const double dd = d;
    return sigma_emp * std::pow(4.0 / (dd + 2.0), 1.0 / (dd + 4.0)) * std::pow(static_cast<double>(n), -1.0 / (dd + 4.0));
}

double neighbor_floor_bandwidth(const Eigen::MatrixXd& coords, double sigma_emp, int n_min) {
    const Eigen::Index n = coords.rows();
    if (n < 2 || n_min <= 0) {
        return 0;
    }
    std::vector<double> dist;
    dist.reserve(static_cast<std::size_t>(n * (n - 1) / 2));
    for (Eigen::Index i = 0; i < n; ++i) {
        for (Eigen::Index j = i + 1; j < n; ++j) {
            dist.push_back((coords.row(i) - coords.row(j)).norm());
        }
    }
    std::sort(dist.begin(), dist.end());
    // Each pair within h contributes one neighbour to both endpoints.
    auto mean_neighbors = [&](double h) {
        const auto cnt = std::upper_bound(dist.begin(), dist.end(), h) - dist.begin();
        return 2.0 * static_cast<double>(cnt) / static_cast<double>(n);
    };
    double lo = 1e-6 * sigma_emp;
    double hi = 10 * sigma_emp;
    if (mean_neighbors(lo) >= n_min) {
        return lo;
    }
    if (mean_neighbors(hi) < n_min) {
        return hi;
    }
    for (int it = 0; it < 40; ++it) {
        const double mid = 0.5 * (lo + hi);
        if (mean_neighbors(mid) >= n_min) {
            hi = mid;
        } else {
            lo = mid;
        }
    }
    return hi;
}

double rule_of_thumb_bandwidth(const Eigen::MatrixXd& coords, int n_min) {
    const double s = embedding_spread(coords);
    const double h_rot = rule_of_thumb_bandwidth(s, static_cast<int>(coords.cols()), static_cast<std::size_t>(coords.rows()));
    return std::max(h_rot, neighbor_floor_bandwidth(coords, s, n_min));
}

double GridSpec::x(int c) const {
    return nx == 1 ? x_range[0] : x_range[0] + c * ((x_range[1] - x_range[0]) / (nx - 1));
}

double GridSpec::y(int r) const {
    return ny == 1 ? y_range[0] : y_range[0] + r * ((y_range[1] - y_range[0]) / (ny - 1));
}

double GridSpec::cell_area() const {
    double a = nx > 1 ? (x_range[1] - x_range[0]) / (nx - 1) : 1.0;
    if (axes == 2) {
        a *= ny > 1 ? (y_range[1] - y_range[0]) / (ny - 1) : 1.0;
    }
    return a;
}

GridSpec grid_for_domain(const Eigen::MatrixXd& coords, double pad, int resolution) {
    GridSpec g;
    g.axes = coords.cols() >= 2 ? 2 : 1;
    g.x_range = {coords.col(0).minCoeff() - pad, coords.col(0).maxCoeff() + pad};
    g.nx = resolution;
    if (g.axes == 2) {
        g.y_range = {coords.col(1).minCoeff() - pad, coords.col(1).maxCoeff() + pad};
        g.ny = resolution;
    } else {
        g.y_range = {0, 0};
        g.ny = 1;
    }
    return g;
}

DensityEvaluator::DensityEvaluator(const EmbeddingModel& model, const CoocTable& table, WeightForm form)
    : DensityEvaluator(model.coords, model.bandwidths, table, form) {
    check_alignment(model, table);
}

DensityEvaluator::DensityEvaluator(std::vector<Eigen::MatrixXd> coords, std::vector<double> bandwidths, const CoocTable& table,
                                   WeightForm form)
    : coords_(std::move(coords)), bandwidths_(std::move(bandwidths)), shape_(table.shape()), form_(form) {
    if (coords_.size() != static_cast<std::size_t>(table.order()) || bandwidths_.size() != coords_.size()) {
        throw DataError("density evaluator: model and table have different domain counts");
    }
    for (int d = 0; d < table.order(); ++d) {
        if (static_cast<std::size_t>(coords_[d].rows()) != shape_[d]) {
            throw DataError("density evaluator: coordinate count does not match domain " + table.domain(d).name());
        }
        if (!(bandwidths_[d] > 0)) {
            throw UsageError("density evaluator: bandwidths must be positive");
        }
    }
    if (form_ == WeightForm::Positive) {
        Slice s;
        for (const auto& e : table.entries()) {
            s.keys.push_back(e.key);
            s.log_weights.push_back(std::log(e.count / table.total_count()));
        }
        slices_.push_back(std::move(s));
    } else {
        const auto p1 = table.dense_cooc_prob();
        Slice s0, s1;
        for (std::uint64_t key = 0; key < p1.size(); ++key) {
            const auto idx = table.unkey(key);
            double lp = 0;
            for (int d = 0; d < table.order(); ++d) {
                lp += std::log(table.marginal(d)[idx[d]]);
            }
            s0.keys.push_back(key);
            s0.log_weights.push_back(lp + std::log1p(-p1[key]));
            s1.keys.push_back(key);
            s1.log_weights.push_back(lp + std::log(p1[key]));
        }
        slices_.push_back(std::move(s0));
        slices_.push_back(std::move(s1));
    }
    for (int d = 0; d < order(); ++d) {
        marginals_.push_back(slice_marginal(d, std::nullopt));
    }
}

double DensityEvaluator::total_weight() const {
    double s = 0;
    for (const auto& sl : slices_) {
        for (double lw : sl.log_weights) {
            s += std::exp(lw);
        }
    }
    return s;
}

std::vector<const DensityEvaluator::Slice*> DensityEvaluator::slices_for(std::optional<int> c) const {
    if (!c) {
        std::vector<const Slice*> out;
        for (const auto& s : slices_) {
            out.push_back(&s);
        }
        return out;
    }
    if (form_ != WeightForm::WithC) {
        throw UsageError("density evaluator: c given but the weights have no c component");
    }
    if (*c != 0 && *c != 1) {
        throw UsageError("density evaluator: c must be 0 or 1");
    }
    return {&slices_[*c]};
}

std::vector<double> DensityEvaluator::slice_marginal(int domain, std::optional<int> c) const {
    std::vector<double> out(shape_[domain], 0.0);
    for (const Slice* s : slices_for(c)) {
        for (std::size_t e = 0; e < s->keys.size(); ++e) {
            const std::uint64_t key = s->keys[e];
            std::size_t idx;
            if (domain == 0) {
                idx = key / (shape_[1] * shape_[2]);
            } else if (domain == 1) {
                idx = (key / shape_[2]) % shape_[1];
            } else {
                idx = key % shape_[2];
            }
            out[idx] += std::exp(s->log_weights[e]);
        }
    }
    return out;
}

void DensityEvaluator::check_point(int domain, std::size_t size) const {
    if (domain < 0 || domain >= order()) {
        throw UsageError("density evaluator: no domain " + std::to_string(domain));
    }
    if (size != static_cast<std::size_t>(dim(domain))) {
        throw UsageError("density evaluator: point of dimension " + std::to_string(size) + " for a " + std::to_string(dim(domain)) +
                         "-dimensional domain");
    }
}

std::vector<double> DensityEvaluator::log_kernels(int domain, std::span<const double> point, int axes) const {
    const auto& X = coords_[domain];
    const double s = bandwidths_[domain];
    const double norm = -0.5 * axes * std::log(2 * std::numbers::pi * s * s);
    std::vector<double> out(static_cast<std::size_t>(X.rows()));
    for (Eigen::Index i = 0; i < X.rows(); ++i) {
        double d2 = 0;
        for (int a = 0; a < axes; ++a) {
            const double diff = point[a] - X(i, a);
            d2 += diff * diff;
        }
        out[static_cast<std::size_t>(i)] = norm - d2 / (2 * s * s);
    }
    return out;
}

double DensityEvaluator::log_joint_density(const std::vector<std::vector<double>>& points, std::optional<int> c) const {
    if (points.size() != static_cast<std::size_t>(order())) {
        throw UsageError("density evaluator: expected one point per domain");
    }
    std::vector<std::vector<double>> lk;
    for (int d = 0; d < order(); ++d) {
        check_point(d, points[d].size());
        lk.push_back(log_kernels(d, points[d], dim(d)));
    }
    std::vector<double> terms;
    for (const Slice* s : slices_for(c)) {
        for (std::size_t e = 0; e < s->keys.size(); ++e) {
            const std::uint64_t key = s->keys[e];
            const std::size_t k = key % shape_[2];
            const std::size_t j = (key / shape_[2]) % shape_[1];
            const std::size_t i = key / (shape_[1] * shape_[2]);
            double v = s->log_weights[e] + lk[0][i] + lk[1][j];
            if (order() == 3) {
                v += lk[2][k];
            }
            terms.push_back(v);
        }
    }
    return log_sum_exp(terms);
}

double DensityEvaluator::joint_density(const std::vector<std::vector<double>>& points, std::optional<int> c) const {
    return std::exp(log_joint_density(points, c));
}

double DensityEvaluator::log_marginal_density(int domain, std::span<const double> point) const {
    check_point(domain, point.size());
    const auto lk = log_kernels(domain, point, dim(domain));
    std::vector<double> terms(lk.size());
    for (std::size_t i = 0; i < lk.size(); ++i) {
        terms[i] = std::log(marginals_[domain][i]) + lk[i];
    }
    return log_sum_exp(terms);
}

double DensityEvaluator::marginal_density(int domain, std::span<const double> point) const {
    return std::exp(log_marginal_density(domain, point));
}

std::vector<double> DensityEvaluator::log_conditional_weights(int target, const std::vector<GivenPoint>& given,
                                                              std::optional<int> c) const {
    if (target < 0 || target >= order()) {
        throw UsageError("conditional: no target domain " + std::to_string(target));
    }
    if (given.empty()) {
        throw UsageError("conditional: at least one given point is required");
    }
    std::array<std::vector<double>, 3> lk;
    std::array<bool, 3> is_given{false, false, false};
    for (const auto& g : given) {
        check_point(g.domain, g.point.size());
        if (g.domain == target) {
            throw UsageError("conditional: given point in the target domain");
        }
        if (is_given[g.domain]) {
            throw UsageError("conditional: two given points in one domain");
        }
        is_given[g.domain] = true;
        lk[g.domain] = log_kernels(g.domain, g.point, dim(g.domain));
    }

    const std::size_t n = shape_[target];
    std::vector<double> mx(n, kNegInf);
    std::vector<double> vals;
    std::vector<std::size_t> owner;
    for (const Slice* s : slices_for(c)) {
        for (std::size_t e = 0; e < s->keys.size(); ++e) {
            const std::uint64_t key = s->keys[e];
            const std::array<std::size_t, 3> idx{key / (shape_[1] * shape_[2]), (key / shape_[2]) % shape_[1], key % shape_[2]};
            double v = s->log_weights[e];
            for (int d = 0; d < order(); ++d) {
                if (is_given[d]) {
                    v += lk[d][idx[d]];
                }
            }
            vals.push_back(v);
            owner.push_back(idx[target]);
            mx[idx[target]] = std::max(mx[idx[target]], v);
        }
    }
    std::vector<double> sum(n, 0.0);
    for (std::size_t e = 0; e < vals.size(); ++e) {
        const std::size_t i = owner[e];
        if (mx[i] != kNegInf) {
            sum[i] += std::exp(vals[e] - mx[i]);
        }
    }
    std::vector<double> out(n);
    for (std::size_t i = 0; i < n; ++i) {
        out[i] = mx[i] == kNegInf ? kNegInf : mx[i] + std::log(sum[i]);
    }
    return out;
}

double DensityEvaluator::log_conditional_normalizer(const std::vector<double>& log_r, const std::vector<GivenPoint>& given) const {
    const double lz = log_sum_exp(log_r);
    if (!(lz >= kLogUnderflow)) {
        throw NumericalError("conditional: density of the given point underflows (" + describe(given) + ")");
    }
    return lz;
}

double DensityEvaluator::conditional_density(int target, std::span<const double> x, const std::vector<GivenPoint>& given,
                                             std::optional<int> c) const {
    if (x.empty() || x.size() > static_cast<std::size_t>(dim(target))) {
        throw UsageError("conditional: query point has the wrong dimension");
    }
    const auto log_r = log_conditional_weights(target, given, c);
    const double lz = log_conditional_normalizer(log_r, given);
    const auto lk = log_kernels(target, x, static_cast<int>(x.size()));
    std::vector<double> terms(log_r.size());
    for (std::size_t i = 0; i < terms.size(); ++i) {
        terms[i] = log_r[i] + lk[i];
    }
    return std::exp(log_sum_exp(terms) - lz);
}

HeatmapGrid DensityEvaluator::conditional_grid(int target, const GridSpec& grid, const std::vector<GivenPoint>& given,
                                               std::optional<int> c) const {
    const int axes = grid.axes;
    if (axes < 1 || axes > 2 || axes > dim(target)) {
        throw UsageError("conditional grid: axes must be 1 or 2 and at most the domain dimension");
    }
    if (grid.nx < 2 || (axes == 2 && grid.ny < 2)) {
        throw UsageError("conditional grid: resolution must be at least 2");
    }
    const auto log_r = log_conditional_weights(target, given, c);
    const double lz = log_conditional_normalizer(log_r, given);

    HeatmapGrid out;
    out.target_domain = target;
    out.grid = grid;
    if (axes == 1) {
        out.grid.ny = 1;
    }
    const int ny = out.grid.ny;
    out.values.assign(static_cast<std::size_t>(grid.nx) * ny, 0.0);
    std::vector<double> terms(log_r.size());
    for (int r = 0; r < ny; ++r) {
        for (int col = 0; col < grid.nx; ++col) {
            const double p[2] = {out.grid.x(col), out.grid.y(r)};
            const auto lk = log_kernels(target, std::span<const double>(p, static_cast<std::size_t>(axes)), axes);
            for (std::size_t i = 0; i < terms.size(); ++i) {
                terms[i] = log_r[i] + lk[i];
            }
            out.values[static_cast<std::size_t>(r) * grid.nx + col] = std::exp(log_sum_exp(terms) - lz);
        }
    }
    out.argmax = static_cast<std::size_t>(std::max_element(out.values.begin(), out.values.end()) - out.values.begin());
    out.max_value = out.values[out.argmax];
    out.min_value = *std::min_element(out.values.begin(), out.values.end());
    const auto& X = coords_[target];
    for (Eigen::Index i = 0; i < X.rows(); ++i) {
        out.item_positions.push_back({X(i, 0), X.cols() > 1 ? X(i, 1) : 0.0});
    }
    return out;
}

}
