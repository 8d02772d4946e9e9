#ifndef COOC_ATLAS_EVAL_HPP
#define COOC_ATLAS_EVAL_HPP

#include "cooc_atlas/cooc_table.hpp"
#include "cooc_atlas/model.hpp"

#include <Eigen/Dense>

#include <optional>
#include <string>
#include <vector>

namespace cooc_atlas {

enum class BandwidthPolicy { Training, RuleOfThumb };
// Pair weighting of the KL sum: P_i P_j (P_k) or uniform over cells.
enum class OuterMeasure { Marginals, Uniform };

struct EvalOptions {
    BandwidthPolicy policy = BandwidthPolicy::RuleOfThumb;
    OuterMeasure measure = OuterMeasure::Marginals;
    int n_min = 3;
};

// Delta-method Q(c=1 | t) for every cell (index = cell key), from
// q(c, x_t) = sum_t' P(c, t') prod_d k(x_td | x_t'd). `weights` needs PU state.
// Throws NumericalError naming the cell when both c-components underflow.
std::vector<double> model_cooc_prob(const std::vector<Eigen::MatrixXd>& coords, const std::vector<double>& bandwidths,
                                    const CoocTable& weights);
double model_cooc_prob(const EmbeddingModel& model, const CoocTable& weights, std::size_t i, std::size_t j, std::size_t k = 0);

// sum_t mu(t) sum_c P(c|t) log P(c|t) / Q(c|t) for a dense read-out Q(c=1|t).
double kl_from_readout(const CoocTable& weights, const std::vector<double>& q1, OuterMeasure measure = OuterMeasure::Marginals);

// Evaluation bandwidths: rule of thumb with neighbor floor, or the model's own.
std::vector<double> evaluation_bandwidths(const EmbeddingModel& model, const EvalOptions& opts);

struct EvalRow {
    int dim = 0;
    double kl = 0;
    std::vector<double> bandwidths;
    double i_p = 0;
    // Plug-in objective at the evaluation bandwidths.
    double i_q = 0;
    std::optional<double> slack;
    double seconds = 0;
};

struct EvalReport {
    std::vector<EvalRow> rows;
};

// Requires a c-augmented model and its weight table.
EvalRow kl_eval(const EmbeddingModel& model, const CoocTable& weights, const EvalOptions& opts = {});

// Tab-separated, one row per dimension, `#` header.
std::string format_eval_report(const EvalReport& report);

struct BoundCheck {
    // D_KL[P || Q] with Q by quadrature of the kernel integral.
    double divergence = 0;
    // I_P - I_q, I_q by quadrature.
    double bound = 0;
    double slack = 0;
    double i_p = 0;
    double i_q = 0;
    // Largest deviation of a quadrature mass from 1.
    double normalization_error = 0;
};

struct BoundOptions {
    int points_per_axis = 512;
    // Grid covers all coordinates +- pad_sigmas * sigma.
    double pad_sigmas = 6.0;
    double normalization_tol = 1e-3;
};

// Two-domain models with n <= 8 items per domain and d <= 2. Uses the
// c-augmented joint when the model is c-augmented. Throws NumericalError when
// the grid fails the normalization check.
BoundCheck jensen_bound_check(const EmbeddingModel& model, const CoocTable& weights, const BoundOptions& opts = {});

}

#endif
