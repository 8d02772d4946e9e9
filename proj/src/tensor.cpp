#include "cooc_atlas/tensor.hpp"

namespace cooc_atlas {

namespace {

using RowMat = Eigen::Matrix<double, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>;
using MapR = Eigen::Map<RowMat>;
using CMapR = Eigen::Map<const RowMat>;

Eigen::Index ix(std::size_t n) {
    return static_cast<Eigen::Index>(n);
}

}

void mode_product(const Tensor3& in, int mode, const Eigen::MatrixXd& K, Tensor3& out) {
    const auto [n0, n1, n2] = in.shape;
    out.shape = in.shape;
    out.data.resize(in.data.size());
    if (mode == 0) {
        CMapR a(in.data.data(), ix(n0), ix(n1 * n2));
        MapR b(out.data.data(), ix(n0), ix(n1 * n2));
        b.noalias() = K * a;
    } else if (mode == 2 || (mode == 1 && n2 == 1)) {
        const std::size_t last = mode == 2 ? n2 : n1;
        CMapR a(in.data.data(), ix(in.size() / last), ix(last));
        MapR b(out.data.data(), ix(in.size() / last), ix(last));
        b.noalias() = a * K.transpose();
    } else {
        for (std::size_t i = 0; i < n0; ++i) {
            CMapR a(in.data.data() + i * n1 * n2, ix(n1), ix(n2));
            MapR b(out.data.data() + i * n1 * n2, ix(n1), ix(n2));
            b.noalias() = K * a;
        }
    }
}

void unfold_contract(const Tensor3& R, const Tensor3& W, int mode, Eigen::MatrixXd& S) {
    const auto [n0, n1, n2] = R.shape;
    if (mode == 0) {
        CMapR r(R.data.data(), ix(n0), ix(n1 * n2));
        CMapR w(W.data.data(), ix(n0), ix(n1 * n2));
        S.noalias() += r * w.transpose();
    } else if (mode == 2 || (mode == 1 && n2 == 1)) {
        const std::size_t last = mode == 2 ? n2 : n1;
        CMapR r(R.data.data(), ix(R.size() / last), ix(last));
        CMapR w(W.data.data(), ix(W.size() / last), ix(last));
        S.noalias() += r.transpose() * w;
    } else {
        for (std::size_t i = 0; i < n0; ++i) {
            CMapR r(R.data.data() + i * n1 * n2, ix(n1), ix(n2));
            CMapR w(W.data.data() + i * n1 * n2, ix(n1), ix(n2));
            S.noalias() += r * w.transpose();
        }
    }
}

std::vector<double> mode_marginal(const Tensor3& T, int mode) {
    const auto [n0, n1, n2] = T.shape;
    std::vector<double> out(T.shape[mode], 0.0);
    std::size_t t = 0;
    for (std::size_t i = 0; i < n0; ++i) {
        for (std::size_t j = 0; j < n1; ++j) {
            for (std::size_t k = 0; k < n2; ++k, ++t) {
                out[mode == 0 ? i : mode == 1 ? j : k] += T.data[t];
            }
        }
    }
    return out;
}

}
