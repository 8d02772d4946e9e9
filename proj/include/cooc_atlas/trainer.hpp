#ifndef COOC_ATLAS_TRAINER_HPP
#define COOC_ATLAS_TRAINER_HPP

#include "cooc_atlas/cooc_table.hpp"
#include "cooc_atlas/model.hpp"
#include "cooc_atlas/objective.hpp"

#include <cstdint>
#include <functional>
#include <string>
#include <utility>
#include <vector>

namespace cooc_atlas {

enum class InitMethod { Pca, Gaussian };

// Training bandwidth. Fixed: sigma = initial throughout. VarianceFraction:
// sigma = initial at epoch 0, then max(fraction * mean per-axis variance,
// initial / 10) recomputed at every epoch.
struct SigmaPolicy {
    enum class Kind { Fixed, VarianceFraction } kind = Kind::VarianceFraction;
    double initial = 0.2;
    double fraction = 0.05;

    double floor() const { return kind == Kind::Fixed ? initial : initial / 10; }
};

struct TrainConfig {
    // One entry applies to every domain; otherwise one per domain.
    std::vector<int> dims{2};
    double lambda = 0.01;
    RegNorm reg = RegNorm::L2;
    PuConfig pu;
    int diffusion_steps = 1;
    bool use_c = true;
    InitMethod init = InitMethod::Pca;
    // Initial spread as a fraction of the initial bandwidth.
    double init_scale_frac = 0.05;
    SigmaPolicy sigma;
    int warmup_iters = 100;
    int main_iters = 100;
    // Update: x_a += step_size * sigma^2 / P(a) * dF/dx_a.
    double step_size = 3.0;
    // Gaussian init only: noise amplitude a_t = noise_frac * sigma floor * (1 - t / T).
    double noise_frac = 0.5;
    std::uint64_t seed = 0;
    // Per-epoch inequality gap in the trace (costs one extra objective pass).
    bool log_gap = true;

    int dim(int domain) const;
    int total_iters() const { return warmup_iters + main_iters; }
    double noise_amplitude(int epoch) const;
    void validate() const;
};

// Flat key=value form. Unknown keys and malformed values raise UsageError.
std::vector<std::pair<std::string, std::string>> config_to_kv(const TrainConfig& cfg);
void apply_config_kv(TrainConfig& cfg, const std::string& key, const std::string& value);
TrainConfig config_from_kv(const std::vector<std::pair<std::string, std::string>>& kv, TrainConfig base = {});
std::string format_config(const TrainConfig& cfg);
TrainConfig parse_config(const std::string& text, TrainConfig base = {});
std::vector<std::string> config_keys();

enum class Phase { Aux, Main };

struct EpochRecord {
    int epoch = 0;
    Phase phase = Phase::Aux;
    // Aux epochs: mi_term is the sum of the auxiliary objectives, reg_term
    // the L2 norm of all coordinates. Values are taken before the update.
    ObjectiveValue value;
    std::vector<double> aux_terms;
    double gap = 0;
    std::vector<double> sigmas;
    double noise = 0;
};

struct TrainReport {
    std::vector<EpochRecord> trace;
    ObjectiveValue initial_main;
    ObjectiveValue final_main;
    std::vector<double> final_bandwidths;
    double seconds = 0;
    bool early_stopped = false;
    // Per domain: PCA directions replaced by gaussian noise.
    std::vector<int> rescued_axes;
    bool pca_rank_deficient = false;
};

struct InitResult {
    std::vector<Eigen::MatrixXd> coords;
    std::vector<int> rescued_axes;
};

// Raw PCA coordinates (before rescaling and rescue): top singular directions
// of the double-centred joint matrix (two domains) or of each mode unfolding
// (three domains), scaled by the singular values. Deficient directions are 0.
InitResult pca_coordinates(const CoocTable& table, const std::vector<int>& dims);

// Initial coordinates with spread init_scale_frac * sigma.initial.
InitResult init_embeddings(const CoocTable& table, const TrainConfig& cfg);

using EpochCallback = std::function<void(const EpochRecord&)>;

// Applies diffusion and PU per cfg to `table`, then runs the warm-up and
// main phases. Throws NumericalError on non-finite objectives or divergence.
std::pair<EmbeddingModel, TrainReport> train(const CoocTable& table, const TrainConfig& cfg, const EpochCallback& on_epoch = {});
std::pair<EmbeddingModel, TrainReport> train_multiway(const CoocTable& table3, const TrainConfig& cfg,
                                                      const EpochCallback& on_epoch = {});

// Tab-separated log: one line per epoch (epoch, phase, mi_term, reg_term,
// gap), then a `#` summary footer.
std::string format_log_header();
std::string format_epoch(const EpochRecord& rec);
std::string format_report(const TrainReport& report);

}

#endif
