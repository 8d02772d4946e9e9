#include "cooc_atlas/multiway.hpp"

#include "cooc_atlas/errors.hpp"

#include <cmath>

namespace cooc_atlas {

namespace {

void require3(const CoocTable& t, const char* what) {
    if (t.order() != 3) {
        throw UsageError(std::string(what) + ": expected a three-domain table");
    }
}

}

Eigen::MatrixXd unfold(const CoocTable& table3, int mode) {
    require3(table3, "unfold");
    if (mode < 0 || mode > 2) {
        throw UsageError("unfold: mode must be 0, 1 or 2");
    }
    const auto sh = table3.shape();
    const auto rows = static_cast<Eigen::Index>(sh[mode]);
    Eigen::MatrixXd M = Eigen::MatrixXd::Zero(rows, static_cast<Eigen::Index>(table3.num_cells() / sh[mode]));
    for (const auto& e : table3.entries()) {
        const auto idx = table3.unkey(e.key);
        std::size_t col = 0;
        for (int m = 0; m < 3; ++m) {
            if (m != mode) {
                col = col * sh[m] + idx[m];
            }
        }
        M(static_cast<Eigen::Index>(idx[mode]), static_cast<Eigen::Index>(col)) = e.count / table3.total_count();
    }
    return M;
}

TensorView make_tensor_view(const CoocTable& table3) {
    require3(table3, "tensor view");
    TensorView v;
    for (int d = 0; d < 3; ++d) {
        v.unfoldings[d] = unfold(table3, d);
    }
    const auto sh = table3.shape();
    const auto n = [&](int d) { return static_cast<Eigen::Index>(sh[d]); };
    v.p_ab = Eigen::MatrixXd::Zero(n(0), n(1));
    v.p_bc = Eigen::MatrixXd::Zero(n(1), n(2));
    v.p_ac = Eigen::MatrixXd::Zero(n(0), n(2));
    for (const auto& e : table3.entries()) {
        const auto idx = table3.unkey(e.key);
        const double p = e.count / table3.total_count();
        const auto i = static_cast<Eigen::Index>(idx[0]);
        const auto j = static_cast<Eigen::Index>(idx[1]);
        const auto k = static_cast<Eigen::Index>(idx[2]);
        v.p_ab(i, j) += p;
        v.p_bc(j, k) += p;
        v.p_ac(i, k) += p;
    }
    return v;
}

CoocTable pair_table(const CoocTable& table3, int drop) {
    require3(table3, "pair table");
    if (drop < 0 || drop > 2) {
        throw UsageError("pair table: mode must be 0, 1 or 2");
    }
    std::vector<int> keep;
    for (int d = 0; d < 3; ++d) {
        if (d != drop) {
            keep.push_back(d);
        }
    }
    const auto sh = table3.shape();
    std::vector<CoocEntry> entries;
    entries.reserve(table3.entries().size());
    for (const auto& e : table3.entries()) {
        const auto idx = table3.unkey(e.key);
        entries.push_back({idx[keep[0]] * sh[keep[1]] + idx[keep[1]], e.count});
    }
    return CoocTable({table3.domain(keep[0]), table3.domain(keep[1])}, std::move(entries), 1);
}

double total_correlation(const CoocTable& table) {
    double s = 0;
    for (const auto& e : table.entries()) {
        const auto idx = table.unkey(e.key);
        const double p = e.count / table.total_count();
        double denom = 1;
        for (int d = 0; d < table.order(); ++d) {
            denom *= table.marginal(d)[idx[d]];
        }
        s += p * std::log(p / denom);
    }
    return s;
}

}
