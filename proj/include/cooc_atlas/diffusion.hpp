#ifndef COOC_ATLAS_DIFFUSION_HPP
#define COOC_ATLAS_DIFFUSION_HPP

#include "cooc_atlas/cooc_table.hpp"

namespace cooc_atlas {

// m-step alternating random walk on the bipartite co-occurrence graph:
// P^(m) = diag(P_A) (T_ab T_ba)^(m-1) T_ab with T_ab = P(b|a), T_ba = P(a|b).
// Three-domain tables walk between A and the joint (B, C) label. The result
// keeps the input total count (counts = N1 * P^(m)) and carries no PU state.
CoocTable markov_diffuse(const CoocTable& table, int steps);

}

#endif
