#ifndef COOC_ATLAS_COOC_TABLE_HPP
#define COOC_ATLAS_COOC_TABLE_HPP

#include <array>
#include <cstddef>
#include <cstdint>
#include <optional>
#include <string>
#include <string_view>
#include <unordered_map>
#include <vector>

namespace cooc_atlas {

class DomainSpec {
public:
    DomainSpec() = default;
    DomainSpec(std::string name, std::vector<std::string> items);

    const std::string& name() const { return name_; }
    const std::vector<std::string>& items() const { return items_; }
    std::size_t size() const { return items_.size(); }
    std::optional<std::size_t> find(const std::string& id) const;

private:
    std::string name_;
    std::vector<std::string> items_;
    std::unordered_map<std::string, std::size_t> index_;
};

struct PuConfig {
    double alpha = 1.0;
    double beta = 10.0;

    void validate() const;
};

struct CoocEntry {
    std::uint64_t key;
    double count;
};

// Co-occurrence counts over 2 or 3 domains. Cells are addressed by a linear key
// (i * n_b + j) * n_c + k, with n_c = 1 for two domains. Counts are sparse and
// sorted by key; everything derived from them is computed on construction.
class CoocTable {
public:
    CoocTable() = default;

    // Duplicate keys are summed, zero counts dropped. Throws DataError on
    // negative or non-finite counts, empty tables, zero-mass items and domains
    // smaller than min_items.
    CoocTable(std::vector<DomainSpec> domains, std::vector<CoocEntry> entries, std::size_t min_items = 2);

    int order() const { return static_cast<int>(domains_.size()); }
    const std::vector<DomainSpec>& domains() const { return domains_; }
    const DomainSpec& domain(int d) const { return domains_[d]; }
    int domain_index(std::string_view name) const;

    // Shape padded to three modes (trailing 1 for two domains).
    const std::array<std::size_t, 3>& shape() const { return shape_; }
    std::size_t num_cells() const { return shape_[0] * shape_[1] * shape_[2]; }

    std::uint64_t key(std::size_t i, std::size_t j, std::size_t k = 0) const {
        return (static_cast<std::uint64_t>(i) * shape_[1] + j) * shape_[2] + k;
    }
    std::array<std::size_t, 3> unkey(std::uint64_t key) const;

    const std::vector<CoocEntry>& entries() const { return entries_; }
    double total_count() const { return total_; }
    double count(std::uint64_t key) const;
    double joint_prob(std::uint64_t key) const { return count(key) / total_; }
    const std::vector<double>& marginal(int d) const { return marginals_[d]; }

    // Dense P(t), index = key.
    std::vector<double> dense_joint() const;

    // PU state. The negative counts and P(c=1|t) are evaluated lazily from the
    // rank-one independence model and are never stored.
    bool has_pu() const { return pu_.has_value(); }
    const PuConfig& pu() const;
    double negative_count(std::uint64_t key) const;
    double cooc_prob(std::uint64_t key) const;
    double joint_with_c(int c, std::uint64_t key) const;
    std::vector<double> dense_cooc_prob() const;

    CoocTable with_pu(const PuConfig& cfg) const;
    CoocTable without_pu() const;

private:
    double independence_product(std::uint64_t key) const;

    std::vector<DomainSpec> domains_;
    std::array<std::size_t, 3> shape_{0, 0, 0};
    std::vector<CoocEntry> entries_;
    double total_ = 0;
    std::vector<std::vector<double>> marginals_;
    std::optional<PuConfig> pu_;
};

// Text format: one record per line, `itemA<TAB>itemB[<TAB>itemC]<TAB>count`.
// Lines starting with `#` are comments, except `#!domain<TAB>name<TAB>items...`
// which declares a domain's name and item order.
CoocTable parse_cooc_table(std::string_view text, int order, const std::string& source = "<input>", std::size_t min_items = 2);
CoocTable load_cooc_table(const std::string& path, int order, std::size_t min_items = 2);

// Canonical form: domain directives, then entries in key order with counts in
// shortest round-trip notation.
std::string format_cooc_table(const CoocTable& table);
void save_cooc_table(const CoocTable& table, const std::string& path);

// FNV-1a 64 of the canonical text, as 16 hex digits.
std::string table_hash(const CoocTable& table);

// Shared helpers.
std::string format_double(double x);
std::string fnv1a_hex(std::string_view bytes);
void write_file_atomic(const std::string& path, std::string_view contents);
std::string read_file(const std::string& path);

}

#endif
