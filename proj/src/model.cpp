#include "cooc_atlas/model.hpp"

#include "cooc_atlas/diffusion.hpp"
#include "cooc_atlas/errors.hpp"
#include "cooc_atlas/pu.hpp"

#include <json.hpp>

#include <cmath>

namespace cooc_atlas {

using ojson = nlohmann::ordered_json;

int EmbeddingModel::domain_index(std::string_view name) const {
    for (std::size_t d = 0; d < domains.size(); ++d) {
        if (domains[d].name() == name) {
            return static_cast<int>(d);
        }
    }
    return -1;
}

void EmbeddingModel::validate() const {
    if (domains.size() != 2 && domains.size() != 3) {
        throw DataError("model: expected 2 or 3 domains");
    }
    if (coords.size() != domains.size() || bandwidths.size() != domains.size()) {
        throw DataError("model: coordinate/bandwidth count does not match domains");
    }
    for (std::size_t d = 0; d < domains.size(); ++d) {
        if (static_cast<std::size_t>(coords[d].rows()) != domains[d].size()) {
            throw DataError("model: domain " + domains[d].name() + " has " + std::to_string(coords[d].rows()) +
                            " coordinates for " + std::to_string(domains[d].size()) + " items");
        }
        if (coords[d].cols() < 1) {
            throw DataError("model: domain " + domains[d].name() + " has dimension 0");
        }
        if (!coords[d].allFinite()) {
            throw DataError("model: non-finite coordinates in domain " + domains[d].name());
        }
        if (!(bandwidths[d] > 0) || !std::isfinite(bandwidths[d])) {
            throw DataError("model: bandwidth of domain " + domains[d].name() + " must be positive");
        }
    }
}

std::string format_model(const EmbeddingModel& model) {
    model.validate();
    ojson j;
    j["format"] = "cooc-atlas-model";
    j["version"] = kModelFormatVersion;
    j["table_hash"] = model.table_hash;
    j["use_c"] = model.use_c;
    j["pu_alpha"] = model.pu.alpha;
    j["pu_beta"] = model.pu.beta;
    j["diffusion_steps"] = model.diffusion_steps;
    ojson cfg = ojson::object();
    for (const auto& [k, v] : model.config) {
        cfg[k] = v;
    }
    j["config"] = cfg;
    ojson doms = ojson::array();
    for (int d = 0; d < model.order(); ++d) {
        ojson dom;
        dom["name"] = model.domains[d].name();
        dom["dim"] = model.dim(d);
        dom["bandwidth"] = model.bandwidths[d];
        dom["items"] = model.domains[d].items();
        ojson rows = ojson::array();
        const auto& X = model.coords[d];
        for (Eigen::Index i = 0; i < X.rows(); ++i) {
            ojson row = ojson::array();
            for (Eigen::Index a = 0; a < X.cols(); ++a) {
                row.push_back(X(i, a));
            }
            rows.push_back(std::move(row));
        }
        dom["coords"] = std::move(rows);
        doms.push_back(std::move(dom));
    }
    j["domains"] = std::move(doms);
    return j.dump(1) + "\n";
}

EmbeddingModel parse_model(std::string_view text) {
    ojson j;
    try {
        j = ojson::parse(text.begin(), text.end());
    } catch (const std::exception& e) {
        throw DataError(std::string("model: not valid JSON: ") + e.what());
    }
    try {
        if (j.at("format").get<std::string>() != "cooc-atlas-model") {
            throw DataError("model: unknown format tag");
        }
        const int version = j.at("version").get<int>();
        if (version != kModelFormatVersion) {
            throw DataError("model: unsupported format version " + std::to_string(version));
        }
        EmbeddingModel m;
        m.table_hash = j.at("table_hash").get<std::string>();
        m.use_c = j.at("use_c").get<bool>();
        m.pu.alpha = j.at("pu_alpha").get<double>();
        m.pu.beta = j.at("pu_beta").get<double>();
        m.diffusion_steps = j.at("diffusion_steps").get<int>();
        for (const auto& [k, v] : j.at("config").items()) {
            m.config.emplace_back(k, v.get<std::string>());
        }
        for (const auto& dom : j.at("domains")) {
            m.domains.emplace_back(dom.at("name").get<std::string>(), dom.at("items").get<std::vector<std::string>>());
            const int dim = dom.at("dim").get<int>();
            const auto& rows = dom.at("coords");
            Eigen::MatrixXd X(static_cast<Eigen::Index>(rows.size()), dim);
            for (std::size_t i = 0; i < rows.size(); ++i) {
                if (rows[i].size() != static_cast<std::size_t>(dim)) {
                    throw DataError("model: coordinate row of wrong length in domain " + m.domains.back().name());
                }
                for (int a = 0; a < dim; ++a) {
                    X(static_cast<Eigen::Index>(i), a) = rows[i][a].get<double>();
                }
            }
            m.coords.push_back(std::move(X));
            m.bandwidths.push_back(dom.at("bandwidth").get<double>());
        }
        m.validate();
        return m;
    } catch (const nlohmann::json::exception& e) {
        throw DataError(std::string("model: ") + e.what());
    }
}

void save_model(const EmbeddingModel& model, const std::string& path) {
    write_file_atomic(path, format_model(model));
}

EmbeddingModel load_model(const std::string& path) {
    return parse_model(read_file(path));
}

std::string model_hash(const EmbeddingModel& model) {
    return fnv1a_hex(format_model(model));
}

CoocTable prepare_table(const CoocTable& raw, int diffusion_steps, bool use_c, const PuConfig& pu) {
    CoocTable t = diffusion_steps > 1 ? markov_diffuse(raw, diffusion_steps) : raw.without_pu();
    if (use_c) {
        t = estimate_pu(t, pu);
    }
    return t;
}

void check_alignment(const EmbeddingModel& model, const CoocTable& table) {
    if (model.order() != table.order()) {
        throw DataError("model has " + std::to_string(model.order()) + " domains, table has " + std::to_string(table.order()));
    }
    for (int d = 0; d < model.order(); ++d) {
        if (model.domains[d].items() != table.domain(d).items()) {
            throw DataError("model and table disagree on the items of domain " + model.domains[d].name());
        }
    }
}

CoocTable weights_for_model(const EmbeddingModel& model, const CoocTable& raw) {
    check_alignment(model, raw);
    const auto h = table_hash(raw);
    if (!model.table_hash.empty() && h != model.table_hash) {
        throw DataError("table hash " + h + " does not match the model's training table " + model.table_hash);
    }
    return prepare_table(raw, model.diffusion_steps, model.use_c, model.pu);
}

}
