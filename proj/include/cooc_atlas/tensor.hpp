#ifndef COOC_ATLAS_TENSOR_HPP
#define COOC_ATLAS_TENSOR_HPP

#include <Eigen/Dense>

#include <array>
#include <cstddef>
#include <vector>

namespace cooc_atlas {

// Dense three-mode tensor, row-major: index (i * n1 + j) * n2 + k. Two-domain
// data uses n2 = 1.
struct Tensor3 {
    std::array<std::size_t, 3> shape{0, 0, 0};
    std::vector<double> data;

    Tensor3() = default;
    explicit Tensor3(std::array<std::size_t, 3> s, double fill = 0.0) : shape(s), data(s[0] * s[1] * s[2], fill) {}

    std::size_t size() const { return data.size(); }
};

// out = in x_mode K, i.e. out[.., a, ..] = sum_b K(a, b) in[.., b, ..].
void mode_product(const Tensor3& in, int mode, const Eigen::MatrixXd& K, Tensor3& out);

// S += unfold_mode(R) * unfold_mode(W)^T.
void unfold_contract(const Tensor3& R, const Tensor3& W, int mode, Eigen::MatrixXd& S);

// Sums over every mode except `mode`.
std::vector<double> mode_marginal(const Tensor3& T, int mode);

}

#endif
