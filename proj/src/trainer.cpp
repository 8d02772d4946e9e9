#include "cooc_atlas/trainer.hpp"

#include "cooc_atlas/errors.hpp"
#include "cooc_atlas/rng.hpp"

#include <Eigen/Eigenvalues>
#include <Eigen/SVD>

#include <algorithm>
#include <chrono>
#include <cstdio>
#include <cmath>
#include <string>

namespace cooc_atlas {

namespace {

// Singular values below this fraction of the raw joint norm count as zero.
constexpr double kRankTol = 1e-10;

// Index of the largest-magnitude entry (first one on ties).
Eigen::Index argmax_abs(const Eigen::VectorXd& v) {
    Eigen::Index best = 0;
    for (Eigen::Index i = 1; i < v.size(); ++i) {
        if (std::abs(v[i]) > std::abs(v[best])) {
            best = i;
        }
    }
    return best;
}

Eigen::MatrixXd centred_joint(const CoocTable& table, double& raw_norm) {
    const auto n0 = static_cast<Eigen::Index>(table.shape()[0]);
    const auto n1 = static_cast<Eigen::Index>(table.shape()[1]);
    const auto p = table.dense_joint();
    Eigen::MatrixXd P = Eigen::Map<const Eigen::Matrix<double, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>>(p.data(), n0, n1);
    raw_norm = P.norm();
    P.rowwise() -= P.colwise().mean();
    P.colwise() -= P.rowwise().mean();
    return P;
}

InitResult pca2(const CoocTable& table, const std::vector<int>& dims) {
    double raw_norm = 0;
    const Eigen::MatrixXd P = centred_joint(table, raw_norm);
    Eigen::BDCSVD<Eigen::MatrixXd> svd(P, Eigen::ComputeThinU | Eigen::ComputeThinV);
    const Eigen::VectorXd& s = svd.singularValues();
    const Eigen::MatrixXd& U = svd.matrixU();
    const Eigen::MatrixXd& V = svd.matrixV();

    InitResult out;
    out.coords = {Eigen::MatrixXd::Zero(P.rows(), dims[0]), Eigen::MatrixXd::Zero(P.cols(), dims[1])};
    out.rescued_axes = {0, 0};
    const int kmax = std::max(dims[0], dims[1]);
    for (int k = 0; k < kmax; ++k) {
        const bool usable = k < s.size() && s[k] > kRankTol * raw_norm;
        if (!usable) {
            for (int d = 0; d < 2; ++d) {
                if (k < dims[d]) {
                    ++out.rescued_axes[d];
                }
            }
            continue;
        }
        Eigen::VectorXd u = U.col(k) * s[k];
        Eigen::VectorXd v = V.col(k) * s[k];
        Eigen::VectorXd both((k < dims[0] ? u.size() : 0) + (k < dims[1] ? v.size() : 0));
        if (k < dims[0]) {
            both.head(u.size()) = u;
        }
        if (k < dims[1]) {
            both.tail(v.size()) = v;
        }
        const double sign = both[argmax_abs(both)] < 0 ? -1.0 : 1.0;
        if (k < dims[0]) {
            out.coords[0].col(k) = sign * u;
        }
        if (k < dims[1]) {
            out.coords[1].col(k) = sign * v;
        }
    }
    return out;
}

// Double-centred mode-d unfoldings, via the eigen-decomposition of C C^T.
InitResult pca3(const CoocTable& table, const std::vector<int>& dims) {
    const auto sh = table.shape();
    const auto T = table.dense_joint();
    double raw_norm = 0;
    for (double x : T) {
        raw_norm += x * x;
    }
    raw_norm = std::sqrt(raw_norm);

    InitResult out;
    out.rescued_axes.assign(3, 0);
    for (int mode = 0; mode < 3; ++mode) {
        const auto n = static_cast<Eigen::Index>(sh[mode]);
        Eigen::MatrixXd C = Eigen::MatrixXd::Zero(n, static_cast<Eigen::Index>(T.size()) / n);
        std::size_t t = 0;
        for (std::size_t i = 0; i < sh[0]; ++i) {
            for (std::size_t j = 0; j < sh[1]; ++j) {
                for (std::size_t k = 0; k < sh[2]; ++k, ++t) {
                    const std::array<std::size_t, 3> idx{i, j, k};
                    const std::size_t row = idx[mode];
                    std::size_t col = 0;
                    for (int m = 0; m < 3; ++m) {
                        if (m != mode) {
                            col = col * sh[m] + idx[m];
                        }
                    }
                    C(static_cast<Eigen::Index>(row), static_cast<Eigen::Index>(col)) = T[t];
                }
            }
        }
        C.rowwise() -= C.colwise().mean();
        C.colwise() -= C.rowwise().mean();
        Eigen::SelfAdjointEigenSolver<Eigen::MatrixXd> eig(C * C.transpose());
        const Eigen::VectorXd& ev = eig.eigenvalues();
        const Eigen::MatrixXd& vec = eig.eigenvectors();
        Eigen::MatrixXd X = Eigen::MatrixXd::Zero(n, dims[mode]);
        for (int k = 0; k < dims[mode]; ++k) {
            const Eigen::Index col = n - 1 - k;
            const double sk = col >= 0 ? std::sqrt(std::max(0.0, ev[col])) : 0.0;
            if (col < 0 || sk <= kRankTol * raw_norm) {
                ++out.rescued_axes[mode];
                continue;
            }
            Eigen::VectorXd u = vec.col(col) * sk;
            if (u[argmax_abs(u)] < 0) {
                u = -u;
            }
            X.col(k) = u;
        }
        out.coords.push_back(std::move(X));
    }
    return out;
}

double column_std(const Eigen::MatrixXd& X, int c) {
    const double mean = X.col(c).mean();
    return std::sqrt((X.col(c).array() - mean).square().mean());
}

double mean_axis_variance(const Eigen::MatrixXd& X) {
    double v = 0;
    for (int c = 0; c < X.cols(); ++c) {
        const double s = column_std(X, c);
        v += s * s;
    }
    return v / static_cast<double>(X.cols());
}

std::vector<double> derive_sigmas(const SigmaPolicy& policy, const std::vector<Eigen::MatrixXd>& coords, int epoch) {
    std::vector<double> out(coords.size(), policy.initial);
    if (policy.kind == SigmaPolicy::Kind::Fixed || epoch == 0) {
        return out;
    }
    for (std::size_t d = 0; d < coords.size(); ++d) {
        out[d] = std::max(policy.fraction * mean_axis_variance(coords[d]), policy.floor());
    }
    return out;
}

double sum_squares(const std::vector<Eigen::MatrixXd>& coords) {
    double s = 0;
    for (const auto& X : coords) {
        s += X.squaredNorm();
    }
    return s;
}

void check_finite(const ObjectiveValue& v, int epoch) {
    if (!std::isfinite(v.total) || !std::isfinite(v.mi_term)) {
        throw NumericalError("train: non-finite objective at epoch " + std::to_string(epoch));
    }
}

std::string phase_name(Phase p) {
    return p == Phase::Aux ? "aux" : "main";
}

}

InitResult pca_coordinates(const CoocTable& table, const std::vector<int>& dims) {
    if (static_cast<int>(dims.size()) != table.order()) {
        throw UsageError("pca: one dimension per domain required");
    }
    return table.order() == 2 ? pca2(table, dims) : pca3(table, dims);
}

InitResult init_embeddings(const CoocTable& table, const TrainConfig& cfg) {
    cfg.validate();
    const int D = table.order();
    if (cfg.dims.size() != 1 && static_cast<int>(cfg.dims.size()) != D) {
        throw UsageError("train: dims lists " + std::to_string(cfg.dims.size()) + " entries for " + std::to_string(D) +
                         " domains");
    }
    std::vector<int> dims;
    for (int d = 0; d < D; ++d) {
        dims.push_back(cfg.dim(d));
    }
    const double spread = cfg.init_scale_frac * cfg.sigma.initial;
    Rng rng(cfg.seed);

    if (cfg.init == InitMethod::Gaussian) {
        InitResult out;
        out.rescued_axes.assign(D, 0);
        for (int d = 0; d < D; ++d) {
            Eigen::MatrixXd X(static_cast<Eigen::Index>(table.shape()[d]), dims[d]);
            for (Eigen::Index i = 0; i < X.rows(); ++i) {
                for (Eigen::Index c = 0; c < X.cols(); ++c) {
                    X(i, c) = spread * rng.normal();
                }
            }
            out.coords.push_back(std::move(X));
        }
        return out;
    }

    InitResult out = pca_coordinates(table, dims);
    for (int d = 0; d < D; ++d) {
        auto& X = out.coords[d];
        const int live = dims[d] - out.rescued_axes[d];
        if (live > 0) {
            X *= spread / column_std(X, 0);
        }
        for (int c = live; c < dims[d]; ++c) {
            for (Eigen::Index i = 0; i < X.rows(); ++i) {
                X(i, c) = spread * rng.normal();
            }
        }
    }
    return out;
}

std::pair<EmbeddingModel, TrainReport> train(const CoocTable& table, const TrainConfig& cfg, const EpochCallback& on_epoch) {
    cfg.validate();
    const auto t_start = std::chrono::steady_clock::now();
    const CoocTable prepared = prepare_table(table, cfg.diffusion_steps, cfg.use_c, cfg.pu);
    const TrainingWeights weights = make_training_weights(prepared, cfg.use_c);
    const int D = table.order();

    TrainReport report;
    InitResult init = init_embeddings(prepared, cfg);
    std::vector<Eigen::MatrixXd> X = std::move(init.coords);
    report.rescued_axes = init.rescued_axes;
    report.pca_rank_deficient = cfg.init == InitMethod::Pca &&
                                std::any_of(report.rescued_axes.begin(), report.rescued_axes.end(), [](int r) { return r > 0; });

    const double i_p = empirical_mi(weights);
    Rng noise_rng(cfg.seed ^ 0x9e3779b97f4a7c15ULL);
    ObjectiveOptions value_only;
    value_only.with_gradient = false;

    const int T = cfg.total_iters();
    int drops = 0;
    double prev_main = 0;
    bool have_prev = false;
    for (int t = 0; t < T; ++t) {
        const Phase phase = t < cfg.warmup_iters ? Phase::Aux : Phase::Main;
        EpochRecord rec;
        rec.epoch = t;
        rec.phase = phase;
        rec.sigmas = derive_sigmas(cfg.sigma, X, t);
        rec.noise = cfg.noise_amplitude(t);

        std::vector<Eigen::MatrixXd> grads(D);
        double main_mi = 0;
        bool have_main_mi = false;
        if (phase == Phase::Aux) {
            double sum = 0;
            for (int d = 0; d < D; ++d) {
                auto ev = evaluate_objective(X, rec.sigmas, weights, ObjectiveSpec::aux(d), cfg.lambda, cfg.reg);
                rec.aux_terms.push_back(ev.value.mi_term);
                sum += ev.value.mi_term;
                grads[d] = std::move(ev.gradient.grads[d]);
            }
            rec.value.mi_term = sum;
            rec.value.reg_term = cfg.reg == RegNorm::L2 ? sum_squares(X) : 0.0;
            rec.value.total = sum - cfg.lambda * rec.value.reg_term;
        } else {
            auto ev = evaluate_objective(X, rec.sigmas, weights, ObjectiveSpec::main(), cfg.lambda, cfg.reg);
            rec.value = ev.value;
            grads = std::move(ev.gradient.grads);
            main_mi = rec.value.mi_term;
            have_main_mi = true;
            if (cfg.log_gap) {
                for (int d = 0; d < D; ++d) {
                    rec.aux_terms.push_back(
                        evaluate_objective(X, rec.sigmas, weights, ObjectiveSpec::aux(d), 0.0, cfg.reg, value_only).value.mi_term);
                }
            }
        }
        check_finite(rec.value, t);
        if (cfg.log_gap) {
            if (!have_main_mi) {
                main_mi = evaluate_objective(X, rec.sigmas, weights, ObjectiveSpec::main(), 0.0, cfg.reg, value_only).value.mi_term;
            }
            double aux = 0;
            for (double a : rec.aux_terms) {
                aux += a;
            }
            rec.gap = main_mi - (aux - (D - 1) * i_p);
        }
        if (t == cfg.warmup_iters) {
            report.initial_main = rec.value;
        }

        if (phase == Phase::Main) {
            const double cur = rec.value.total;
            if (have_prev && prev_main != 0 && prev_main - cur > 0.5 * std::abs(prev_main)) {
                ++drops;
            } else {
                drops = 0;
            }
            prev_main = cur;
            have_prev = true;
        }
        report.trace.push_back(rec);
        if (on_epoch) {
            on_epoch(rec);
        }
        if (drops >= 5) {
            throw NumericalError("train: main objective fell by more than half for 5 consecutive epochs (epoch " +
                                 std::to_string(t) + "); lower step_size");
        }

        for (int d = 0; d < D; ++d) {
            const auto& m = weights.marginals[d];
            const double s2 = rec.sigmas[d] * rec.sigmas[d];
            auto& Xd = X[d];
            for (Eigen::Index a = 0; a < Xd.rows(); ++a) {
                const double mass = m[static_cast<std::size_t>(a)];
                if (mass > 0) {
                    Xd.row(a) += cfg.step_size * s2 / mass * grads[d].row(a);
                }
            }
            if (rec.noise > 0) {
                for (Eigen::Index a = 0; a < Xd.rows(); ++a) {
                    for (Eigen::Index c = 0; c < Xd.cols(); ++c) {
                        Xd(a, c) += rec.noise * noise_rng.normal();
                    }
                }
            }
            if (cfg.reg == RegNorm::Linf) {
                Xd = Xd.cwiseMax(-1.0).cwiseMin(1.0);
            }
            if (!Xd.allFinite()) {
                throw NumericalError("train: non-finite coordinates after epoch " + std::to_string(t));
            }
        }
    }

    const auto final_sigmas = derive_sigmas(cfg.sigma, X, T);
    ObjectiveOptions final_opts = value_only;
    final_opts.with_breakdown = cfg.use_c;
    report.final_main = evaluate_objective(X, final_sigmas, weights, ObjectiveSpec::main(), cfg.lambda, cfg.reg, final_opts).value;
    check_finite(report.final_main, T);
    if (cfg.main_iters == 0) {
        report.initial_main = report.final_main;
    }
    report.final_bandwidths = final_sigmas;

    EmbeddingModel model;
    model.domains = table.domains();
    model.coords = std::move(X);
    model.bandwidths = final_sigmas;
    model.table_hash = table_hash(table);
    model.use_c = cfg.use_c;
    model.pu = cfg.pu;
    model.diffusion_steps = cfg.diffusion_steps;
    model.config = config_to_kv(cfg);
    model.validate();

    report.seconds = std::chrono::duration<double>(std::chrono::steady_clock::now() - t_start).count();
    return {std::move(model), std::move(report)};
}

std::pair<EmbeddingModel, TrainReport> train_multiway(const CoocTable& table3, const TrainConfig& cfg, const EpochCallback& on_epoch) {
    if (table3.order() != 3) {
        throw UsageError("train_multiway: expected a three-domain table");
    }
    return train(table3, cfg, on_epoch);
}

std::string format_log_header() {
    return "# epoch\tphase\tmi_term\treg_term\tgap\n";
}

std::string format_epoch(const EpochRecord& rec) {
    return std::to_string(rec.epoch) + "\t" + phase_name(rec.phase) + "\t" + format_double(rec.value.mi_term) + "\t" +
           format_double(rec.value.reg_term) + "\t" + format_double(rec.gap) + "\n";
}

std::string format_report(const TrainReport& report) {
    std::string out = format_log_header();
    for (const auto& rec : report.trace) {
        out += format_epoch(rec);
    }
    auto join = [](const auto& xs, auto fmt) {
        std::string s;
        for (std::size_t i = 0; i < xs.size(); ++i) {
            s += (i ? "," : "") + fmt(xs[i]);
        }
        return s;
    };
    out += "# initial_main\t" + format_double(report.initial_main.mi_term) + "\n";
    out += "# final_main\t" + format_double(report.final_main.mi_term) + "\n";
    if (report.final_main.breakdown) {
        const auto& b = *report.final_main.breakdown;
        out += "# conditional_mi\t" + format_double(b.conditional_mi) + "\n";
        out += "# label_mi\t" + join(b.label_mi, [](double x) { return format_double(x); }) + "\n";
    }
    out += "# bandwidths\t" + join(report.final_bandwidths, [](double x) { return format_double(x); }) + "\n";
    out += "# rescued_axes\t" + join(report.rescued_axes, [](int x) { return std::to_string(x); }) + "\n";
    out += "# early_stopped\t" + std::string(report.early_stopped ? "true" : "false") + "\n";
    char buf[32];
    std::snprintf(buf, sizeof buf, "%.3f", report.seconds);
    out += "# seconds\t" + std::string(buf) + "\n";
    return out;
}

}
