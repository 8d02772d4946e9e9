#ifndef COOC_ATLAS_MODEL_HPP
#define COOC_ATLAS_MODEL_HPP

#include "cooc_atlas/cooc_table.hpp"

#include <Eigen/Dense>

#include <string>
#include <string_view>
#include <utility>
#include <vector>

namespace cooc_atlas {

inline constexpr int kModelFormatVersion = 1;

// Trained artifact: per-domain coordinates (n x d, one row per item) and
// kernel bandwidths, plus what is needed to rebuild the mixture weights from
// the raw table (hash of the raw table, diffusion steps, PU prior, weight form).
struct EmbeddingModel {
    std::vector<DomainSpec> domains;
    std::vector<Eigen::MatrixXd> coords;
    std::vector<double> bandwidths;
    std::string table_hash;
    bool use_c = true;
    PuConfig pu;
    int diffusion_steps = 1;
    // Flat key=value copy of the training configuration.
    std::vector<std::pair<std::string, std::string>> config;

    int order() const { return static_cast<int>(domains.size()); }
    int dim(int d) const { return static_cast<int>(coords[d].cols()); }
    int domain_index(std::string_view name) const;

    // Throws DataError on size mismatch, non-positive bandwidths or
    // non-finite coordinates.
    void validate() const;
};

// JSON text with full-precision coordinates; save(load(text)) == text.
std::string format_model(const EmbeddingModel& model);
EmbeddingModel parse_model(std::string_view text);
void save_model(const EmbeddingModel& model, const std::string& path);
EmbeddingModel load_model(const std::string& path);
std::string model_hash(const EmbeddingModel& model);

// Diffusion then PU (when use_c) applied to a raw table.
CoocTable prepare_table(const CoocTable& raw, int diffusion_steps, bool use_c, const PuConfig& pu);

// Rebuilds the weight table a model was trained on. Throws DataError when the
// raw table's hash or vocabulary does not match the model.
CoocTable weights_for_model(const EmbeddingModel& model, const CoocTable& raw);

// Domain names and item lists must agree.
void check_alignment(const EmbeddingModel& model, const CoocTable& table);

}

#endif
