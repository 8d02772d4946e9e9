#ifndef COOC_ATLAS_PU_HPP
#define COOC_ATLAS_PU_HPP

#include "cooc_atlas/cooc_table.hpp"

#include <vector>

namespace cooc_atlas {

// Negative (unlabeled-as-non-co-occurring) counts under the independence
// model: N0(t) = (beta / alpha) * N1 * prod_d P_d(t_d). Evaluated on demand.
class NegativeCounts {
public:
    NegativeCounts(const CoocTable& table, const PuConfig& cfg);

    double operator()(std::uint64_t key) const;
    std::vector<double> dense() const;

private:
    const CoocTable* table_;
    double scale_;
};

NegativeCounts estimate_negative_counts(const CoocTable& table, const PuConfig& cfg);

// MAP estimate P(c=1|t) = (N1 + alpha) / (N1 + N0 + alpha + beta).
double pu_posterior(double n1, double n0, const PuConfig& cfg);

// Returns a copy of the table with the PU state attached; cooc_prob() and
// joint_with_c() become available.
CoocTable estimate_pu(const CoocTable& table, const PuConfig& cfg = {});

}

#endif
