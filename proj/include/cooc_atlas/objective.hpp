#ifndef COOC_ATLAS_OBJECTIVE_HPP
#define COOC_ATLAS_OBJECTIVE_HPP

#include "cooc_atlas/cooc_table.hpp"
#include "cooc_atlas/model.hpp"
#include "cooc_atlas/tensor.hpp"

#include <Eigen/Dense>

#include <optional>
#include <vector>

namespace cooc_atlas {

enum class RegNorm { L2, Linf };

// Main: all latent domains. Aux: only `domain` is latent, the other domains
// enter through their (joint) labels.
struct ObjectiveSpec {
    enum class Kind { Main, Aux } kind = Kind::Main;
    int domain = 0;

    static ObjectiveSpec main() { return {}; }
    static ObjectiveSpec aux(int d) { return {Kind::Aux, d}; }
};

// Dense mixture weights for training. One slice P(t) for the positive form,
// two slices P(c=0, t), P(c=1, t) for the c-augmented form.
struct TrainingWeights {
    int order = 2;
    std::array<std::size_t, 3> shape{0, 0, 1};
    bool use_c = false;
    std::vector<Tensor3> slices;
    std::vector<double> slice_mass;
    std::vector<std::vector<double>> marginals;
    // Per domain d: sum M log M of the label joint when only d is latent.
    std::vector<double> aux_label_xlogx;
};

TrainingWeights make_training_weights(const CoocTable& table, bool use_c);

struct CBreakdown {
    // sum_c P(c) I[u; v (; w) | c]
    double conditional_mi = 0;
    // I[c; u_d] per domain
    std::vector<double> label_mi;
};

struct ObjectiveValue {
    double total = 0;
    double mi_term = 0;
    double reg_term = 0;
    std::optional<CBreakdown> breakdown;
};

struct GradientSet {
    std::vector<Eigen::MatrixXd> grads;
};

struct ObjectiveOptions {
    bool with_gradient = true;
    bool with_breakdown = false;
    // c-augmented weights: get q(c=0, .) as the rank-one total minus q(c=1, .)
    // instead of a second pass of mode products.
    bool complement = true;
};

struct Evaluation {
    ObjectiveValue value;
    GradientSet gradient;
};

// Plug-in objective sum_t W(t) log [q(t) / prod q(marginals)] - lambda R and
// its analytic gradient. Kernels are unnormalized; every ratio is invariant to
// the normalizing constants. Gradient entries for non-latent domains are zero.
Evaluation evaluate_objective(const std::vector<Eigen::MatrixXd>& coords, const std::vector<double>& sigmas,
                              const TrainingWeights& weights, ObjectiveSpec spec, double lambda, RegNorm reg,
                              const ObjectiveOptions& opts = {});

ObjectiveValue main_objective(const EmbeddingModel& model, const CoocTable& table, double lambda, RegNorm reg, bool use_c);
std::vector<double> aux_objectives(const EmbeddingModel& model, const CoocTable& table, bool use_c = false);
GradientSet gradient(const EmbeddingModel& model, const CoocTable& table, ObjectiveSpec which, double lambda, RegNorm reg,
                     bool use_c);

// I_q - (sum of aux objectives - (D - 1) I_P); diagnostic only.
double mi_inequality_gap(const EmbeddingModel& model, const CoocTable& table, bool use_c = false);
double mi_inequality_gap(const std::vector<Eigen::MatrixXd>& coords, const std::vector<double>& sigmas,
                         const TrainingWeights& weights);

// Discrete I_P[a; b] (total correlation for three domains).
double empirical_mi(const CoocTable& table);
// I_P[c; a; b] of the c-augmented joint; needs PU state.
double empirical_mi_c(const CoocTable& table);
// Same quantity from dense training weights.
double empirical_mi(const TrainingWeights& weights);

// exp(-|x_a - x_b|^2 / (2 sigma^2))
Eigen::MatrixXd kernel_matrix(const Eigen::MatrixXd& X, double sigma);

}

#endif
