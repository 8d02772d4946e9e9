#ifndef COOC_ATLAS_TEST_FIXTURES_HPP
#define COOC_ATLAS_TEST_FIXTURES_HPP

// Small table builders shared by the tests.

#include "cooc_atlas/cooc_table.hpp"

#include <string>
#include <vector>

namespace fixture {

using cooc_atlas::CoocEntry;
using cooc_atlas::CoocTable;
using cooc_atlas::DomainSpec;

inline std::vector<std::string> names(const std::string& prefix, std::size_t n) {
    std::vector<std::string> out;
    for (std::size_t i = 0; i < n; ++i) {
        out.push_back(prefix + std::to_string(i));
    }
    return out;
}

inline CoocTable table2(const std::vector<std::vector<double>>& P, std::size_t min_items = 2) {
    std::vector<CoocEntry> e;
    for (std::size_t i = 0; i < P.size(); ++i) {
        for (std::size_t j = 0; j < P[0].size(); ++j) {
            e.push_back({i * P[0].size() + j, P[i][j]});
        }
    }
    return CoocTable({DomainSpec("A", names("a", P.size())), DomainSpec("B", names("b", P[0].size()))}, e, min_items);
}

// T[i][j][k]
inline CoocTable table3(const std::vector<std::vector<std::vector<double>>>& T, std::size_t min_items = 2) {
    const std::size_t n0 = T.size(), n1 = T[0].size(), n2 = T[0][0].size();
    std::vector<CoocEntry> e;
    for (std::size_t i = 0; i < n0; ++i) {
        for (std::size_t j = 0; j < n1; ++j) {
            for (std::size_t k = 0; k < n2; ++k) {
                e.push_back({(i * n1 + j) * n2 + k, T[i][j][k]});
            }
        }
    }
    return CoocTable({DomainSpec("A", names("a", n0)), DomainSpec("B", names("b", n1)), DomainSpec("C", names("c", n2))}, e,
                     min_items);
}

// Two-domain table with the domains swapped.
inline CoocTable transpose(const CoocTable& t) {
    std::vector<CoocEntry> e;
    for (const auto& x : t.entries()) {
        const auto idx = t.unkey(x.key);
        e.push_back({idx[1] * t.shape()[0] + idx[0], x.count});
    }
    return CoocTable({t.domain(1), t.domain(0)}, e);
}

}

#endif
