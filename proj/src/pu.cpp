#include "cooc_atlas/pu.hpp"

namespace cooc_atlas {

NegativeCounts::NegativeCounts(const CoocTable& table, const PuConfig& cfg) : table_(&table) {
    cfg.validate();
    scale_ = cfg.beta / cfg.alpha * table.total_count();
}

double NegativeCounts::operator()(std::uint64_t key) const {
    const auto idx = table_->unkey(key);
    double p = scale_;
    for (int d = 0; d < table_->order(); ++d) {
        p *= table_->marginal(d)[idx[d]];
    }
    return p;
}

std::vector<double> NegativeCounts::dense() const {
    std::vector<double> out(table_->num_cells());
    for (std::uint64_t key = 0; key < out.size(); ++key) {
        out[key] = (*this)(key);
    }
    return out;
}

NegativeCounts estimate_negative_counts(const CoocTable& table, const PuConfig& cfg) {
    return NegativeCounts(table, cfg);
}

double pu_posterior(double n1, double n0, const PuConfig& cfg) {
    return (n1 + cfg.alpha) / (n1 + n0 + cfg.alpha + cfg.beta);
}

CoocTable estimate_pu(const CoocTable& table, const PuConfig& cfg) {
    return table.with_pu(cfg);
}

}
