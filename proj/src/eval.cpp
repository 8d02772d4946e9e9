#include "cooc_atlas/eval.hpp"

#include "cooc_atlas/errors.hpp"
#include "cooc_atlas/kde.hpp"
#include "cooc_atlas/objective.hpp"
#include "cooc_atlas/tensor.hpp"

#include <chrono>
#include <cmath>
#include <cstdio>
#include <numbers>

namespace cooc_atlas {

namespace {

void require_pu(const CoocTable& weights) {
    if (!weights.has_pu()) {
        throw UsageError("evaluation needs a table with co-occurrence probabilities (PU state)");
    }
}

std::string cell_name(const CoocTable& t, std::uint64_t key) {
    const auto idx = t.unkey(key);
    std::string s;
    for (int d = 0; d < t.order(); ++d) {
        s += (d ? ", " : "") + t.domain(d).items()[idx[d]];
    }
    return "(" + s + ")";
}

double log_sum_exp(const double* v, std::size_t n) {
    double m = -INFINITY;
    for (std::size_t i = 0; i < n; ++i) {
        m = std::max(m, v[i]);
    }
    if (!std::isfinite(m)) {
        return m;
    }
    double s = 0;
    for (std::size_t i = 0; i < n; ++i) {
        s += std::exp(v[i] - m);
    }
    return m + std::log(s);
}

// Lattice over a domain's bounding box (+- pad), d = 1 or 2 axes.
struct Quadrature {
    Eigen::MatrixXd points;
    double weight = 0;
};

Quadrature lattice(const Eigen::MatrixXd& X, double pad, int g) {
    const auto d = X.cols();
    Quadrature q;
    std::vector<double> lo(static_cast<std::size_t>(d)), step(static_cast<std::size_t>(d));
    q.weight = 1;
    for (Eigen::Index c = 0; c < d; ++c) {
        lo[c] = X.col(c).minCoeff() - pad;
        step[c] = (X.col(c).maxCoeff() + pad - lo[c]) / (g - 1);
        q.weight *= step[c];
    }
    const Eigen::Index total = d == 1 ? g : static_cast<Eigen::Index>(g) * g;
    q.points.resize(total, d);
    for (Eigen::Index p = 0; p < total; ++p) {
        q.points(p, 0) = lo[0] + static_cast<double>(p % g) * step[0];
        if (d == 2) {
            q.points(p, 1) = lo[1] + static_cast<double>(p / g) * step[1];
        }
    }
    return q;
}

// Normalized log kernels, rows = grid points, cols = items.
Eigen::MatrixXd log_kernel_table(const Eigen::MatrixXd& grid, const Eigen::MatrixXd& X, double sigma) {
    const double d = static_cast<double>(X.cols());
    const double lnorm = -0.5 * d * std::log(2 * std::numbers::pi * sigma * sigma);
    Eigen::MatrixXd L(grid.rows(), X.rows());
    for (Eigen::Index g = 0; g < grid.rows(); ++g) {
        for (Eigen::Index i = 0; i < X.rows(); ++i) {
            L(g, i) = lnorm - (grid.row(g) - X.row(i)).squaredNorm() / (2 * sigma * sigma);
        }
    }
    return L;
}

struct DomainQuad {
    Quadrature quad;
    Eigen::MatrixXd log_k;
    Eigen::VectorXd log_p;
    // A(i, i') = int k_i k_i' / p
    Eigen::MatrixXd A;
    double mass = 0;
};

DomainQuad domain_quadrature(const Eigen::MatrixXd& X, double sigma, const std::vector<double>& marginal, const BoundOptions& opts) {
    DomainQuad dq;
    dq.quad = lattice(X, opts.pad_sigmas * sigma, opts.points_per_axis);
    dq.log_k = log_kernel_table(dq.quad.points, X, sigma);
    const auto G = dq.log_k.rows();
    const auto n = dq.log_k.cols();
    dq.log_p.resize(G);
    std::vector<double> terms(static_cast<std::size_t>(n));
    for (Eigen::Index g = 0; g < G; ++g) {
        for (Eigen::Index i = 0; i < n; ++i) {
            terms[i] = std::log(marginal[i]) + dq.log_k(g, i);
        }
        dq.log_p[g] = log_sum_exp(terms.data(), terms.size());
        dq.mass += std::exp(dq.log_p[g]) * dq.quad.weight;
    }
    dq.A = Eigen::MatrixXd::Zero(n, n);
    for (Eigen::Index g = 0; g < G; ++g) {
        if (!std::isfinite(dq.log_p[g])) {
            continue;
        }
        for (Eigen::Index i = 0; i < n; ++i) {
            for (Eigen::Index j = i; j < n; ++j) {
                const double v = std::exp(dq.log_k(g, i) + dq.log_k(g, j) - dq.log_p[g]) * dq.quad.weight;
                dq.A(i, j) += v;
                if (j != i) {
                    dq.A(j, i) += v;
                }
            }
        }
    }
    return dq;
}

}

std::vector<double> model_cooc_prob(const std::vector<Eigen::MatrixXd>& coords, const std::vector<double>& bandwidths,
                                    const CoocTable& weights) {
    require_pu(weights);
    const auto w = make_training_weights(weights, true);
    std::array<Tensor3, 2> Q;
    for (int c = 0; c < 2; ++c) {
        Tensor3 cur = w.slices[c];
        Tensor3 next;
        for (int d = 0; d < w.order; ++d) {
            mode_product(cur, d, kernel_matrix(coords[d], bandwidths[d]), next);
            std::swap(cur, next);
        }
        Q[c] = std::move(cur);
    }
    std::vector<double> out(Q[0].size());
    for (std::size_t t = 0; t < out.size(); ++t) {
        const double z = Q[0].data[t] + Q[1].data[t];
        if (!(z > 0)) {
            throw NumericalError("model co-occurrence probability underflows at " + cell_name(weights, t));
        }
        out[t] = Q[1].data[t] / z;
    }
    return out;
}

double model_cooc_prob(const EmbeddingModel& model, const CoocTable& weights, std::size_t i, std::size_t j, std::size_t k) {
    check_alignment(model, weights);
    require_pu(weights);
    const auto sh = weights.shape();
    if (i >= sh[0] || j >= sh[1] || k >= sh[2]) {
        throw UsageError("model co-occurrence probability: index out of range");
    }
    const std::array<std::size_t, 3> at{i, j, k};
    // Kernel rows of the queried items only.
    std::array<Eigen::VectorXd, 3> krow;
    for (int d = 0; d < model.order(); ++d) {
        const auto& X = model.coords[d];
        const double s = model.bandwidths[d];
        krow[d].resize(X.rows());
        for (Eigen::Index b = 0; b < X.rows(); ++b) {
            krow[d][b] = std::exp(-(X.row(static_cast<Eigen::Index>(at[d])) - X.row(b)).squaredNorm() / (2 * s * s));
        }
    }
    double q[2] = {0, 0};
    for (std::size_t a = 0; a < sh[0]; ++a) {
        for (std::size_t b = 0; b < sh[1]; ++b) {
            for (std::size_t c = 0; c < sh[2]; ++c) {
                const auto key = weights.key(a, b, c);
                double kk = krow[0][static_cast<Eigen::Index>(a)] * krow[1][static_cast<Eigen::Index>(b)];
                if (model.order() == 3) {
                    kk *= krow[2][static_cast<Eigen::Index>(c)];
                }
                q[0] += weights.joint_with_c(0, key) * kk;
                q[1] += weights.joint_with_c(1, key) * kk;
            }
        }
    }
    if (!(q[0] + q[1] > 0)) {
        throw NumericalError("model co-occurrence probability underflows at " + cell_name(weights, weights.key(i, j, k)));
    }
    return q[1] / (q[0] + q[1]);
}

double kl_from_readout(const CoocTable& weights, const std::vector<double>& q1, OuterMeasure measure) {
    require_pu(weights);
    if (q1.size() != weights.num_cells()) {
        throw UsageError("KL: read-out has the wrong number of cells");
    }
    const auto sh = weights.shape();
    const double uniform = 1.0 / static_cast<double>(weights.num_cells());
    double kl = 0;
    std::size_t t = 0;
    for (std::size_t i = 0; i < sh[0]; ++i) {
        for (std::size_t j = 0; j < sh[1]; ++j) {
            for (std::size_t k = 0; k < sh[2]; ++k, ++t) {
                double mu = uniform;
                if (measure == OuterMeasure::Marginals) {
                    mu = weights.marginal(0)[i] * weights.marginal(1)[j] * (weights.order() == 3 ? weights.marginal(2)[k] : 1.0);
                }
                const double p1 = weights.cooc_prob(t);
                const double p0 = 1 - p1;
                const double q = q1[t];
                double cell = 0;
                if (p1 > 0) {
                    cell += p1 * std::log(p1 / q);
                }
                if (p0 > 0) {
                    cell += p0 * std::log(p0 / (1 - q));
                }
                kl += mu * cell;
            }
        }
    }
    return kl;
}

std::vector<double> evaluation_bandwidths(const EmbeddingModel& model, const EvalOptions& opts) {
    if (opts.policy == BandwidthPolicy::Training) {
        return model.bandwidths;
    }
    std::vector<double> out;
    for (int d = 0; d < model.order(); ++d) {
        const double h = rule_of_thumb_bandwidth(model.coords[d], opts.n_min);
        // A collapsed embedding has no spread to scale; keep its training bandwidth.
        out.push_back(h > 0 ? h : model.bandwidths[d]);
    }
    return out;
}

EvalRow kl_eval(const EmbeddingModel& model, const CoocTable& weights, const EvalOptions& opts) {
    const auto t0 = std::chrono::steady_clock::now();
    check_alignment(model, weights);
    if (!model.use_c) {
        throw UsageError("KL evaluation needs a model trained with c-augmented weights");
    }
    require_pu(weights);
    EvalRow row;
    row.dim = model.dim(0);
    row.bandwidths = evaluation_bandwidths(model, opts);
    row.kl = kl_from_readout(weights, model_cooc_prob(model.coords, row.bandwidths, weights), opts.measure);
    const auto w = make_training_weights(weights, true);
    row.i_p = empirical_mi(w);
    ObjectiveOptions vo;
    vo.with_gradient = false;
    row.i_q = evaluate_objective(model.coords, row.bandwidths, w, ObjectiveSpec::main(), 0.0, RegNorm::L2, vo).value.mi_term;

    bool small = model.order() == 2;
    for (int d = 0; d < model.order() && small; ++d) {
        small = model.coords[d].rows() <= 8 && model.dim(d) <= 2;
    }
    if (small) {
        EmbeddingModel at_eval = model;
        at_eval.bandwidths = row.bandwidths;
        BoundOptions bo;
        bo.points_per_axis = std::max(model.dim(0), model.dim(1)) == 1 ? 512 : 64;
        try {
            row.slack = jensen_bound_check(at_eval, weights, bo).slack;
        } catch (const NumericalError&) {
            // Grid failed its normalization check; the slack is left unreported.
        }
    }
    row.seconds = std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
    return row;
}

std::string format_eval_report(const EvalReport& report) {
    std::string out = "# dim\tkl\tbandwidths\ti_p\ti_q\tslack\tseconds\n";
    for (const auto& r : report.rows) {
        std::string bw;
        for (std::size_t i = 0; i < r.bandwidths.size(); ++i) {
            bw += (i ? "," : "") + format_double(r.bandwidths[i]);
        }
        char secs[32];
        std::snprintf(secs, sizeof secs, "%.3f", r.seconds);
        out += std::to_string(r.dim) + "\t" + format_double(r.kl) + "\t" + bw + "\t" + format_double(r.i_p) + "\t" +
               format_double(r.i_q) + "\t" + (r.slack ? format_double(*r.slack) : std::string("-")) + "\t" + secs + "\n";
    }
    return out;
}

BoundCheck jensen_bound_check(const EmbeddingModel& model, const CoocTable& weights, const BoundOptions& opts) {
    check_alignment(model, weights);
    if (model.order() != 2) {
        throw UsageError("bound check: two-domain models only");
    }
    for (int d = 0; d < 2; ++d) {
        if (model.coords[d].rows() > 8 || model.dim(d) > 2) {
            throw UsageError("bound check: at most 8 items and 2 dimensions per domain");
        }
    }
    if (opts.points_per_axis < 16) {
        throw UsageError("bound check: at least 16 grid points per axis");
    }
    if (model.use_c) {
        require_pu(weights);
    }
    const auto w = make_training_weights(weights, model.use_c);
    const auto n0 = static_cast<Eigen::Index>(w.shape[0]);
    const auto n1 = static_cast<Eigen::Index>(w.shape[1]);

    const auto qa = domain_quadrature(model.coords[0], model.bandwidths[0], w.marginals[0], opts);
    const auto qb = domain_quadrature(model.coords[1], model.bandwidths[1], w.marginals[1], opts);
    const double gu = static_cast<double>(qa.log_k.rows());
    const double gv = static_cast<double>(qb.log_k.rows());
    if (gu * gv > 5e8) {
        throw UsageError("bound check: quadrature grid too large; lower points_per_axis");
    }

    BoundCheck out;
    out.normalization_error = std::max(std::abs(qa.mass - 1), std::abs(qb.mass - 1));

    const Eigen::MatrixXd Ka = qa.log_k.array().exp().matrix();
    const Eigen::MatrixXd Kb = qb.log_k.array().exp().matrix();

    double q_total = 0;
    for (std::size_t c = 0; c < w.slices.size(); ++c) {
        const Eigen::MatrixXd W = Eigen::Map<const Eigen::Matrix<double, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>>(
            w.slices[c].data.data(), n0, n1);
        const double pc = w.use_c ? w.slice_mass[c] : 1.0;

        // Q(c, i, j) = P_i P_j (A W B^T)_ij
        const Eigen::MatrixXd AWB = qa.A * W * qb.A.transpose();
        for (Eigen::Index i = 0; i < n0; ++i) {
            for (Eigen::Index j = 0; j < n1; ++j) {
                const double q = w.marginals[0][i] * w.marginals[1][j] * AWB(i, j);
                q_total += q;
                const double p = W(i, j);
                if (p > 0) {
                    out.divergence += p * std::log(p / q);
                    out.i_p += p * std::log(p / (pc * w.marginals[0][i] * w.marginals[1][j]));
                }
            }
        }

        // I_q: sum over the product grid of q log q / (P(c) p(u) p(v)).
        const Eigen::MatrixXd KaW = Ka * W;
        for (Eigen::Index g = 0; g < KaW.rows(); ++g) {
            const Eigen::VectorXd row = Kb * KaW.row(g).transpose();
            double acc = 0;
            for (Eigen::Index h = 0; h < row.size(); ++h) {
                const double q = row[h];
                if (q > 0) {
                    acc += q * (std::log(q) - std::log(pc) - qa.log_p[g] - qb.log_p[h]);
                }
            }
            out.i_q += acc * qa.quad.weight * qb.quad.weight;
        }
    }
    out.normalization_error = std::max(out.normalization_error, std::abs(q_total - 1));
    if (!(out.normalization_error <= opts.normalization_tol)) {
        throw NumericalError("bound check: quadrature normalization off by " + format_double(out.normalization_error) +
                             "; widen or refine the grid");
    }
    out.bound = out.i_p - out.i_q;
    out.slack = out.bound - out.divergence;
    return out;
}

}
