#include "cooc_atlas/objective.hpp"

#include "cooc_atlas/errors.hpp"

#include <cmath>
#include <optional>
#include <string>

namespace cooc_atlas {

namespace {

std::vector<double> matvec(const Eigen::MatrixXd& K, const std::vector<double>& m) {
    Eigen::Map<const Eigen::VectorXd> v(m.data(), static_cast<Eigen::Index>(m.size()));
    Eigen::VectorXd r = K * v;
    return std::vector<double>(r.data(), r.data() + r.size());
}

double xlogy_sum(const std::vector<double>& x, const std::vector<double>& y) {
    double s = 0;
    for (std::size_t i = 0; i < x.size(); ++i) {
        if (x[i] > 0) {
            s += x[i] * std::log(y[i]);
        }
    }
    return s;
}

// Entropy-like term sum M log M of the joint over the non-latent modes.
double label_joint_xlogx(const TrainingWeights& w, const std::array<bool, 3>& latent) {
    const auto [n0, n1, n2] = w.shape;
    std::array<std::size_t, 3> ext{latent[0] ? 1 : n0, latent[1] ? 1 : n1, latent[2] ? 1 : n2};
    std::vector<double> joint(ext[0] * ext[1] * ext[2], 0.0);
    for (const auto& s : w.slices) {
        std::size_t t = 0;
        for (std::size_t i = 0; i < n0; ++i) {
            for (std::size_t j = 0; j < n1; ++j) {
                for (std::size_t k = 0; k < n2; ++k, ++t) {
                    const std::size_t a = latent[0] ? 0 : i;
                    const std::size_t b = latent[1] ? 0 : j;
                    const std::size_t c = latent[2] ? 0 : k;
                    joint[(a * ext[1] + b) * ext[2] + c] += s.data[t];
                }
            }
        }
    }
    return xlogy_sum(joint, joint);
}

void fill_label_cache(TrainingWeights& w) {
    w.aux_label_xlogx.clear();
    for (int d = 0; d < w.order; ++d) {
        std::array<bool, 3> latent{false, false, false};
        latent[d] = true;
        w.aux_label_xlogx.push_back(label_joint_xlogx(w, latent));
    }
}

struct Engine {
    const TrainingWeights& w;
    int order;
    std::array<bool, 3> latent{false, false, false};
    std::vector<int> active{};
    std::array<Eigen::MatrixXd, 3> K{};
    // K m for latent modes, m for label modes, {1} for the padding mode.
    std::array<std::vector<double>, 3> M{};

    Tensor3 apply_kernels(const Tensor3& W) const {
        Tensor3 cur = W;
        Tensor3 next;
        for (int d : active) {
            mode_product(cur, d, K[d], next);
            std::swap(cur, next);
        }
        return cur;
    }

    // Q = W x_d K_d over all latent d. When L is given, also fills the
    // leave-one-out products L[d] = W x_{latent e != d} K_e; with symmetric K
    // the gradient contraction is S^d += unfold_d(G) unfold_d(L[d])^T.
    Tensor3 forward(const Tensor3& W, std::array<Tensor3, 3>* L) const {
        if (L == nullptr || active.size() == 1) {
            if (L != nullptr) {
                (*L)[active[0]] = W;
            }
            return apply_kernels(W);
        }
        Tensor3 Q;
        if (active.size() == 2) {
            const int a = active[0], b = active[1];
            mode_product(W, b, K[b], (*L)[a]);
            mode_product(W, a, K[a], (*L)[b]);
            mode_product((*L)[a], a, K[a], Q);
            return Q;
        }
        Tensor3 e;
        mode_product(W, 0, K[0], e);
        mode_product(e, 2, K[2], (*L)[1]);
        mode_product(e, 1, K[1], (*L)[2]);
        mode_product(W, 2, K[2], e);
        mode_product(e, 1, K[1], (*L)[0]);
        mode_product((*L)[0], 0, K[0], Q);
        return Q;
    }

    void contract(const Tensor3& G, const std::array<Tensor3, 3>& L, std::array<Eigen::MatrixXd, 3>& S) const {
        for (int d : active) {
            unfold_contract(G, L[d], d, S[d]);
        }
    }
};

}

Eigen::MatrixXd kernel_matrix(const Eigen::MatrixXd& X, double sigma) {
    const Eigen::Index n = X.rows();
    Eigen::MatrixXd K(n, n);
    const double inv = 1.0 / (2 * sigma * sigma);
    for (Eigen::Index a = 0; a < n; ++a) {
        K(a, a) = 1.0;
        for (Eigen::Index b = a + 1; b < n; ++b) {
            const double v = std::exp(-(X.row(a) - X.row(b)).squaredNorm() * inv);
            K(a, b) = v;
            K(b, a) = v;
        }
    }
    return K;
}

TrainingWeights make_training_weights(const CoocTable& table, bool use_c) {
    TrainingWeights w;
    w.order = table.order();
    w.shape = table.shape();
    w.use_c = use_c;
    for (int d = 0; d < table.order(); ++d) {
        w.marginals.push_back(table.marginal(d));
    }
    if (!use_c) {
        Tensor3 s(w.shape);
        s.data = table.dense_joint();
        w.slices.push_back(std::move(s));
        w.slice_mass = {1.0};
        fill_label_cache(w);
        return w;
    }
    if (!table.has_pu()) {
        throw UsageError("c-augmented objective needs PU-estimated co-occurrence probabilities");
    }
    const auto p1 = table.dense_cooc_prob();
    Tensor3 s0(w.shape), s1(w.shape);
    const auto& mA = table.marginal(0);
    const auto& mB = table.marginal(1);
    const std::vector<double> one{1.0};
    const auto& mC = table.order() == 3 ? table.marginal(2) : one;
    std::size_t t = 0;
    for (std::size_t i = 0; i < w.shape[0]; ++i) {
        for (std::size_t j = 0; j < w.shape[1]; ++j) {
            for (std::size_t k = 0; k < w.shape[2]; ++k, ++t) {
                const double p = mA[i] * mB[j] * mC[k];
                s1.data[t] = p1[t] * p;
                s0.data[t] = (1 - p1[t]) * p;
            }
        }
    }
    double m0 = 0, m1 = 0;
    for (std::size_t u = 0; u < t; ++u) {
        m0 += s0.data[u];
        m1 += s1.data[u];
    }
    w.slices.push_back(std::move(s0));
    w.slices.push_back(std::move(s1));
    w.slice_mass = {m0, m1};
    fill_label_cache(w);
    return w;
}

Evaluation evaluate_objective(const std::vector<Eigen::MatrixXd>& coords, const std::vector<double>& sigmas,
                              const TrainingWeights& weights, ObjectiveSpec spec, double lambda, RegNorm reg,
                              const ObjectiveOptions& opts) {
    const int D = weights.order;
    if (coords.size() != static_cast<std::size_t>(D) || sigmas.size() != coords.size()) {
        throw DataError("objective: expected coordinates and bandwidths for " + std::to_string(D) + " domains");
    }
    for (int d = 0; d < D; ++d) {
        if (static_cast<std::size_t>(coords[d].rows()) != weights.shape[d]) {
            throw DataError("objective: domain " + std::to_string(d) + " has " + std::to_string(coords[d].rows()) +
                            " coordinates for " + std::to_string(weights.shape[d]) + " items");
        }
        if (!(sigmas[d] > 0)) {
            throw UsageError("objective: bandwidths must be positive");
        }
    }
    if (spec.kind == ObjectiveSpec::Kind::Aux && (spec.domain < 0 || spec.domain >= D)) {
        throw UsageError("objective: no domain " + std::to_string(spec.domain) + " for the auxiliary objective");
    }
    if (lambda < 0) {
        throw UsageError("objective: lambda must be >= 0");
    }

    Engine eng{weights, D, {false, false, false}, {}, {}, {}};
    for (int d = 0; d < D; ++d) {
        eng.latent[d] = spec.kind == ObjectiveSpec::Kind::Main || spec.domain == d;
        if (eng.latent[d]) {
            eng.active.push_back(d);
            eng.K[d] = kernel_matrix(coords[d], sigmas[d]);
            eng.M[d] = matvec(eng.K[d], weights.marginals[d]);
        } else {
            eng.M[d] = weights.marginals[d];
        }
    }
    if (D == 2) {
        eng.M[2] = {1.0};
    }

    const std::size_t ns = weights.slices.size();
    const bool comp = opts.complement && weights.use_c && ns == 2;
    std::vector<Tensor3> Q(ns);
    // sum_t W log Q per slice, when already known.
    std::vector<std::optional<double>> slice_log(ns);
    std::vector<std::array<Tensor3, 3>> L(opts.with_gradient ? ns : 0);
    auto leaveouts = [&](std::size_t s) { return opts.with_gradient ? &L[s] : nullptr; };
    bool complement_ok = false;
    if (comp) {
        Q[1] = eng.forward(weights.slices[1], leaveouts(1));
        Q[0] = Tensor3(weights.shape);
        complement_ok = true;
        // The log terms are accumulated in the same pass.
        const auto& W0 = weights.slices[0].data;
        const auto& W1 = weights.slices[1].data;
        double acc0 = 0, acc1 = 0;
        std::size_t t = 0;
        for (std::size_t i = 0; i < weights.shape[0] && complement_ok; ++i) {
            for (std::size_t j = 0; j < weights.shape[1] && complement_ok; ++j) {
                const double mij = eng.M[0][i] * eng.M[1][j];
                for (std::size_t k = 0; k < weights.shape[2]; ++k, ++t) {
                    const double tot = mij * eng.M[2][k];
                    const double q1 = Q[1].data[t];
                    const double q0 = tot - q1;
                    if (!(q0 > 1e-9 * tot)) {
                        complement_ok = false;
                        break;
                    }
                    Q[0].data[t] = q0;
                    if (W0[t] > 0) {
                        acc0 += W0[t] * std::log(q0);
                    }
                    if (W1[t] > 0) {
                        acc1 += W1[t] * std::log(q1);
                    }
                }
            }
        }
        if (complement_ok) {
            slice_log[0] = acc0;
            slice_log[1] = acc1;
        } else {
            Q[0] = eng.forward(weights.slices[0], leaveouts(0));
        }
    } else {
        for (std::size_t s = 0; s < ns; ++s) {
            Q[s] = eng.forward(weights.slices[s], leaveouts(s));
        }
    }

    double mi = 0;
    for (std::size_t s = 0; s < ns; ++s) {
        if (slice_log[s]) {
            mi += *slice_log[s];
            continue;
        }
        const auto& W = weights.slices[s].data;
        const auto& q = Q[s].data;
        double acc = 0;
        for (std::size_t t = 0; t < W.size(); ++t) {
            if (W[t] > 0) {
                acc += W[t] * std::log(q[t]);
            }
        }
        mi += acc;
    }
    for (int d : eng.active) {
        mi -= xlogy_sum(weights.marginals[d], eng.M[d]);
    }
    if (eng.active.size() < static_cast<std::size_t>(D)) {
        const bool cached = spec.kind == ObjectiveSpec::Kind::Aux &&
                            weights.aux_label_xlogx.size() == static_cast<std::size_t>(D);
        mi -= cached ? weights.aux_label_xlogx[spec.domain] : label_joint_xlogx(weights, eng.latent);
    }
    if (weights.use_c) {
        mi -= xlogy_sum(weights.slice_mass, weights.slice_mass);
    }
    if (!std::isfinite(mi)) {
        throw NumericalError("objective: non-finite mutual information term");
    }

    Evaluation out;
    auto& val = out.value;
    val.mi_term = mi;
    if (reg == RegNorm::L2) {
        for (int d : eng.active) {
            val.reg_term += coords[d].squaredNorm();
        }
    }
    val.total = val.mi_term - lambda * val.reg_term;

    if (opts.with_breakdown && weights.use_c && spec.kind == ObjectiveSpec::Kind::Main) {
        CBreakdown br;
        br.label_mi.assign(D, 0.0);
        for (std::size_t c = 0; c < ns; ++c) {
            const auto& W = weights.slices[c].data;
            const double wc = weights.slice_mass[c];
            double acc = 0;
            for (std::size_t t = 0; t < W.size(); ++t) {
                if (W[t] > 0) {
                    acc += W[t] * std::log(Q[c].data[t]);
                }
            }
            acc += (D - 1) * wc * std::log(wc);
            for (int d = 0; d < D; ++d) {
                const auto mdc = mode_marginal(weights.slices[c], d);
                const auto kmdc = matvec(eng.K[d], mdc);
                acc -= xlogy_sum(mdc, kmdc);
                for (std::size_t a = 0; a < mdc.size(); ++a) {
                    if (mdc[a] > 0) {
                        br.label_mi[d] += mdc[a] * std::log(kmdc[a] / (wc * eng.M[d][a]));
                    }
                }
            }
            br.conditional_mi += acc;
        }
        val.breakdown = br;
    }

    if (!opts.with_gradient) {
        return out;
    }

    std::array<Eigen::MatrixXd, 3> S;
    for (int d : eng.active) {
        S[d] = Eigen::MatrixXd::Zero(coords[d].rows(), coords[d].rows());
    }
    if (comp && complement_ok) {
        // sum_t G0 d(prod M) + (G1 - G0) dQ1
        const auto& W0 = weights.slices[0].data;
        const auto& W1 = weights.slices[1].data;
        Tensor3 Gd(weights.shape);
        std::array<std::vector<double>, 3> h;
        for (int d : eng.active) {
            h[d].assign(weights.shape[d], 0.0);
        }
        std::size_t t = 0;
        for (std::size_t i = 0; i < weights.shape[0]; ++i) {
            for (std::size_t j = 0; j < weights.shape[1]; ++j) {
                for (std::size_t k = 0; k < weights.shape[2]; ++k, ++t) {
                    const double g0 = W0[t] > 0 ? W0[t] / Q[0].data[t] : 0.0;
                    const double g1 = W1[t] > 0 ? W1[t] / Q[1].data[t] : 0.0;
                    Gd.data[t] = g1 - g0;
                    if (eng.latent[0]) {
                        h[0][i] += g0 * eng.M[1][j] * eng.M[2][k];
                    }
                    if (eng.latent[1]) {
                        h[1][j] += g0 * eng.M[0][i] * eng.M[2][k];
                    }
                    if (eng.latent[2]) {
                        h[2][k] += g0 * eng.M[0][i] * eng.M[1][j];
                    }
                }
            }
        }
        Q.clear();
        eng.contract(Gd, L[1], S);
        for (int d : eng.active) {
            const auto& m = weights.marginals[d];
            for (std::size_t a = 0; a < h[d].size(); ++a) {
                for (std::size_t b = 0; b < m.size(); ++b) {
                    S[d](static_cast<Eigen::Index>(a), static_cast<Eigen::Index>(b)) += h[d][a] * m[b];
                }
            }
        }
    } else {
        for (std::size_t s = 0; s < ns; ++s) {
            const auto& W = weights.slices[s].data;
            Tensor3 G(weights.shape);
            for (std::size_t t = 0; t < W.size(); ++t) {
                G.data[t] = W[t] > 0 ? W[t] / Q[s].data[t] : 0.0;
            }
            eng.contract(G, L[s], S);
        }
    }

    out.gradient.grads.resize(D);
    for (int d = 0; d < D; ++d) {
        out.gradient.grads[d] = Eigen::MatrixXd::Zero(coords[d].rows(), coords[d].cols());
    }
    for (int d : eng.active) {
        const auto& m = weights.marginals[d];
        const auto& Md = eng.M[d];
        for (std::size_t a = 0; a < m.size(); ++a) {
            const double r = m[a] / Md[a];
            for (std::size_t b = 0; b < m.size(); ++b) {
                S[d](static_cast<Eigen::Index>(a), static_cast<Eigen::Index>(b)) -= r * m[b];
            }
        }
        const Eigen::MatrixXd C = (S[d] + S[d].transpose()).cwiseProduct(eng.K[d]);
        const Eigen::VectorXd rowsum = C.rowwise().sum();
        const auto& X = coords[d];
        Eigen::MatrixXd g = (C * X - rowsum.asDiagonal() * X) / (sigmas[d] * sigmas[d]);
        if (reg == RegNorm::L2) {
            g -= 2 * lambda * X;
        }
        if (!g.allFinite()) {
            throw NumericalError("objective: non-finite gradient");
        }
        out.gradient.grads[d] = std::move(g);
    }
    return out;
}

namespace {

TrainingWeights weights_checked(const EmbeddingModel& model, const CoocTable& table, bool use_c) {
    check_alignment(model, table);
    return make_training_weights(table, use_c);
}

}

ObjectiveValue main_objective(const EmbeddingModel& model, const CoocTable& table, double lambda, RegNorm reg, bool use_c) {
    const auto w = weights_checked(model, table, use_c);
    ObjectiveOptions opts;
    opts.with_gradient = false;
    opts.with_breakdown = use_c;
    return evaluate_objective(model.coords, model.bandwidths, w, ObjectiveSpec::main(), lambda, reg, opts).value;
}

std::vector<double> aux_objectives(const EmbeddingModel& model, const CoocTable& table, bool use_c) {
    const auto w = weights_checked(model, table, use_c);
    ObjectiveOptions opts;
    opts.with_gradient = false;
    std::vector<double> out;
    for (int d = 0; d < w.order; ++d) {
        out.push_back(evaluate_objective(model.coords, model.bandwidths, w, ObjectiveSpec::aux(d), 0.0, RegNorm::L2, opts).value.mi_term);
    }
    return out;
}

GradientSet gradient(const EmbeddingModel& model, const CoocTable& table, ObjectiveSpec which, double lambda, RegNorm reg,
                     bool use_c) {
    const auto w = weights_checked(model, table, use_c);
    return evaluate_objective(model.coords, model.bandwidths, w, which, lambda, reg).gradient;
}

double mi_inequality_gap(const std::vector<Eigen::MatrixXd>& coords, const std::vector<double>& sigmas,
                         const TrainingWeights& weights) {
    ObjectiveOptions opts;
    opts.with_gradient = false;
    const double iq = evaluate_objective(coords, sigmas, weights, ObjectiveSpec::main(), 0.0, RegNorm::L2, opts).value.mi_term;
    double aux = 0;
    for (int d = 0; d < weights.order; ++d) {
        aux += evaluate_objective(coords, sigmas, weights, ObjectiveSpec::aux(d), 0.0, RegNorm::L2, opts).value.mi_term;
    }
    return iq - (aux - (weights.order - 1) * empirical_mi(weights));
}

double mi_inequality_gap(const EmbeddingModel& model, const CoocTable& table, bool use_c) {
    return mi_inequality_gap(model.coords, model.bandwidths, weights_checked(model, table, use_c));
}

double empirical_mi(const CoocTable& table) {
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

double empirical_mi(const TrainingWeights& weights) {
    const std::vector<double> one{1.0};
    const auto& mC = weights.order == 3 ? weights.marginals[2] : one;
    double s = 0;
    for (std::size_t c = 0; c < weights.slices.size(); ++c) {
        const auto& W = weights.slices[c].data;
        const double wc = weights.use_c ? weights.slice_mass[c] : 1.0;
        std::size_t t = 0;
        for (std::size_t i = 0; i < weights.shape[0]; ++i) {
            for (std::size_t j = 0; j < weights.shape[1]; ++j) {
                for (std::size_t k = 0; k < weights.shape[2]; ++k, ++t) {
                    if (W[t] > 0) {
                        s += W[t] * std::log(W[t] / (wc * weights.marginals[0][i] * weights.marginals[1][j] * mC[k]));
                    }
                }
            }
        }
    }
    return s;
}

double empirical_mi_c(const CoocTable& table) {
    return empirical_mi(make_training_weights(table, true));
}

}
