#ifndef COOC_ATLAS_MULTIWAY_HPP
#define COOC_ATLAS_MULTIWAY_HPP

#include "cooc_atlas/cooc_table.hpp"

#include <Eigen/Dense>

#include <array>

namespace cooc_atlas {

// Mode unfoldings and pair marginals of a three-domain joint.
struct TensorView {
    // unfoldings[d]: rows are domain d's items, columns the remaining two
    // modes flattened in index order (the later mode varies fastest).
    std::array<Eigen::MatrixXd, 3> unfoldings;
    Eigen::MatrixXd p_ab;
    Eigen::MatrixXd p_bc;
    Eigen::MatrixXd p_ac;
};

// Throws UsageError for two-domain tables.
Eigen::MatrixXd unfold(const CoocTable& table3, int mode);
TensorView make_tensor_view(const CoocTable& table3);

// Two-domain table of the pair left after summing out `drop`.
CoocTable pair_table(const CoocTable& table3, int drop);

// sum P log P / (P_a P_b P_c); equals empirical_mi for two domains.
double total_correlation(const CoocTable& table);

}

#endif
