#include "cooc_atlas/diffusion.hpp"

#include "cooc_atlas/errors.hpp"

#include <Eigen/Dense>

namespace cooc_atlas {

CoocTable markov_diffuse(const CoocTable& table, int steps) {
    if (steps < 1) {
        throw UsageError("diffusion steps must be >= 1");
    }
    const auto& shape = table.shape();
    const Eigen::Index na = static_cast<Eigen::Index>(shape[0]);
    const Eigen::Index nr = static_cast<Eigen::Index>(shape[1] * shape[2]);

    // Rows are A items, columns the flattened (B, C) label.
    Eigen::MatrixXd P = Eigen::MatrixXd::Zero(na, nr);
    for (const auto& e : table.entries()) {
        P(static_cast<Eigen::Index>(e.key / nr), static_cast<Eigen::Index>(e.key % nr)) = e.count / table.total_count();
    }
    const Eigen::VectorXd rows = P.rowwise().sum();
    const Eigen::VectorXd cols = P.colwise().sum().transpose();
    for (Eigen::Index i = 0; i < na; ++i) {
        if (!(rows(i) > 0)) {
            throw DataError("diffusion: item '" + table.domain(0).items()[i] + "' has zero mass");
        }
    }
    for (Eigen::Index c = 0; c < nr; ++c) {
        if (!(cols(c) > 0)) {
            if (table.order() == 2) {
                throw DataError("diffusion: item '" + table.domain(1).items()[c] + "' has zero mass");
            }
            // Unobserved (b, c) pairs are isolated nodes of the walk and simply carry no mass.
        }
    }
    if (steps == 1) {
        return table.without_pu();
    }

    const Eigen::MatrixXd Tab = rows.cwiseInverse().asDiagonal() * P;
    Eigen::MatrixXd Tba(nr, na);
    for (Eigen::Index c = 0; c < nr; ++c) {
        Tba.row(c) = cols(c) > 0 ? Eigen::RowVectorXd(P.col(c).transpose() / cols(c)) : Eigen::RowVectorXd::Zero(na);
    }
    const Eigen::MatrixXd R = Tab * Tba;
    Eigen::MatrixXd walk = Eigen::MatrixXd::Identity(na, na);
    for (int s = 1; s < steps; ++s) {
        walk = walk * R;
    }
    const Eigen::MatrixXd Pm = rows.asDiagonal() * (walk * Tab);

    std::vector<CoocEntry> entries;
    for (Eigen::Index i = 0; i < na; ++i) {
        for (Eigen::Index c = 0; c < nr; ++c) {
            const double v = Pm(i, c);
            if (v > 0) {
                entries.push_back({static_cast<std::uint64_t>(i) * nr + c, v * table.total_count()});
            }
        }
    }
    return CoocTable(table.domains(), std::move(entries), 1);
}

}
