#include "cooc_atlas/cooc_table.hpp"

#include "cooc_atlas/errors.hpp"

#include <algorithm>
#include <charconv>
#include <cmath>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <sstream>
#include <unistd.h>

namespace cooc_atlas {

DomainSpec::DomainSpec(std::string name, std::vector<std::string> items)
    : name_(std::move(name)), items_(std::move(items)) {
    index_.reserve(items_.size());
    for (std::size_t i = 0; i < items_.size(); ++i) {
        if (!index_.emplace(items_[i], i).second) {
            throw DataError("domain " + name_ + ": duplicate item '" + items_[i] + "'");
        }
    }
}

std::optional<std::size_t> DomainSpec::find(const std::string& id) const {
    auto it = index_.find(id);
    if (it == index_.end()) {
        return std::nullopt;
    }
    return it->second;
}

void PuConfig::validate() const {
    if (!(alpha > 0) || !std::isfinite(alpha)) {
        throw UsageError("pu: alpha must be positive");
    }
    if (!(beta > 0) || !std::isfinite(beta)) {
        throw UsageError("pu: beta must be positive");
    }
}

CoocTable::CoocTable(std::vector<DomainSpec> domains, std::vector<CoocEntry> entries, std::size_t min_items)
    : domains_(std::move(domains)) {
    if (domains_.size() != 2 && domains_.size() != 3) {
        throw DataError("co-occurrence tables need 2 or 3 domains");
    }
    for (std::size_t d = 0; d < domains_.size(); ++d) {
        shape_[d] = domains_[d].size();
        if (shape_[d] < std::max<std::size_t>(min_items, 1)) {
            throw DataError("domain " + domains_[d].name() + " has fewer than " + std::to_string(min_items) + " items");
        }
    }
    if (domains_.size() == 2) {
        shape_[2] = 1;
    }

    const std::uint64_t ncell = num_cells();
    for (const auto& e : entries) {
        if (!std::isfinite(e.count) || e.count < 0) {
            throw DataError("negative or non-finite count");
        }
        if (e.key >= ncell) {
            throw DataError("cell index out of range");
        }
    }
    std::stable_sort(entries.begin(), entries.end(), [](const CoocEntry& a, const CoocEntry& b) { return a.key < b.key; });
    entries_.reserve(entries.size());
    for (const auto& e : entries) {
        if (!entries_.empty() && entries_.back().key == e.key) {
            entries_.back().count += e.count;
        } else {
            entries_.push_back(e);
        }
    }
    std::erase_if(entries_, [](const CoocEntry& e) { return e.count == 0; });
    if (entries_.empty()) {
        throw DataError("co-occurrence table is empty");
    }

    for (const auto& e : entries_) {
        total_ += e.count;
    }
    marginals_.assign(domains_.size(), {});
    for (std::size_t d = 0; d < domains_.size(); ++d) {
        marginals_[d].assign(shape_[d], 0.0);
    }
    for (const auto& e : entries_) {
        const auto idx = unkey(e.key);
        const double p = e.count / total_;
        for (std::size_t d = 0; d < domains_.size(); ++d) {
            marginals_[d][idx[d]] += p;
        }
    }
    for (std::size_t d = 0; d < domains_.size(); ++d) {
        for (std::size_t i = 0; i < shape_[d]; ++i) {
            if (marginals_[d][i] == 0) {
                throw DataError("item '" + domains_[d].items()[i] + "' in domain " + domains_[d].name() + " has zero mass");
            }
        }
    }
}

int CoocTable::domain_index(std::string_view name) const {
    for (std::size_t d = 0; d < domains_.size(); ++d) {
        if (domains_[d].name() == name) {
            return static_cast<int>(d);
        }
    }
    return -1;
}

std::array<std::size_t, 3> CoocTable::unkey(std::uint64_t key) const {
    std::array<std::size_t, 3> out;
    out[2] = key % shape_[2];
    key /= shape_[2];
    out[1] = key % shape_[1];
    out[0] = key / shape_[1];
    return out;
}

double CoocTable::count(std::uint64_t key) const {
    auto it = std::lower_bound(entries_.begin(), entries_.end(), key, [](const CoocEntry& e, std::uint64_t k) { return e.key < k; });
    if (it == entries_.end() || it->key != key) {
        return 0;
    }
    return it->count;
}

std::vector<double> CoocTable::dense_joint() const {
    std::vector<double> out(num_cells(), 0.0);
    for (const auto& e : entries_) {
        out[e.key] = e.count / total_;
    }
    return out;
}

const PuConfig& CoocTable::pu() const {
    if (!pu_) {
        throw UsageError("co-occurrence probabilities not estimated (run PU estimation first)");
    }
    return *pu_;
}

double CoocTable::independence_product(std::uint64_t key) const {
    const auto idx = unkey(key);
    double p = 1;
    for (std::size_t d = 0; d < domains_.size(); ++d) {
        p *= marginals_[d][idx[d]];
    }
    return p;
}

double CoocTable::negative_count(std::uint64_t key) const {
    const auto& cfg = pu();
    return cfg.beta / cfg.alpha * total_ * independence_product(key);
}

double CoocTable::cooc_prob(std::uint64_t key) const {
    const auto& cfg = pu();
    const double n1 = count(key);
    const double n0 = negative_count(key);
    return (n1 + cfg.alpha) / (n1 + n0 + cfg.alpha + cfg.beta);
}

double CoocTable::joint_with_c(int c, std::uint64_t key) const {
    const double p1 = cooc_prob(key);
    return (c == 1 ? p1 : 1 - p1) * independence_product(key);
}

std::vector<double> CoocTable::dense_cooc_prob() const {
    const auto& cfg = pu();
    const std::size_t n = num_cells();
    std::vector<double> out(n);
    const double scale = cfg.beta / cfg.alpha * total_;
    std::size_t e = 0;
    const auto& mA = marginals_[0];
    const auto& mB = marginals_[1];
    const std::vector<double> ones(1, 1.0);
    const auto& mC = domains_.size() == 3 ? marginals_[2] : ones;
    std::uint64_t key = 0;
    for (std::size_t i = 0; i < shape_[0]; ++i) {
        for (std::size_t j = 0; j < shape_[1]; ++j) {
            const double pij = mA[i] * mB[j];
            for (std::size_t k = 0; k < shape_[2]; ++k, ++key) {
                double n1 = 0;
                if (e < entries_.size() && entries_[e].key == key) {
                    n1 = entries_[e].count;
                    ++e;
                }
                const double n0 = scale * pij * mC[k];
                out[key] = (n1 + cfg.alpha) / (n1 + n0 + cfg.alpha + cfg.beta);
            }
        }
    }
    return out;
}

CoocTable CoocTable::with_pu(const PuConfig& cfg) const {
    cfg.validate();
    CoocTable out = *this;
    out.pu_ = cfg;
    return out;
}

CoocTable CoocTable::without_pu() const {
    CoocTable out = *this;
    out.pu_.reset();
    return out;
}

namespace {

std::vector<std::string_view> split_fields(std::string_view line) {
    std::vector<std::string_view> out;
    if (line.find('\t') != std::string_view::npos) {
        std::size_t start = 0;
        while (true) {
            const auto pos = line.find('\t', start);
            out.push_back(line.substr(start, pos == std::string_view::npos ? std::string_view::npos : pos - start));
            if (pos == std::string_view::npos) {
                break;
            }
            start = pos + 1;
        }
        return out;
    }
    std::size_t i = 0;
    while (i < line.size()) {
        while (i < line.size() && (line[i] == ' ' || line[i] == '\r')) {
            ++i;
        }
        if (i >= line.size()) {
            break;
        }
        std::size_t j = i;
        while (j < line.size() && line[j] != ' ' && line[j] != '\r') {
            ++j;
        }
        out.push_back(line.substr(i, j - i));
        i = j;
    }
    return out;
}

struct Vocabulary {
    std::vector<std::string> items;
    std::unordered_map<std::string, std::size_t> index;
    bool declared = false;
};

}

CoocTable parse_cooc_table(std::string_view text, int order, const std::string& source, std::size_t min_items) {
    if (order != 2 && order != 3) {
        throw UsageError("order must be 2 or 3");
    }
    std::vector<Vocabulary> vocab(order);
    std::vector<std::string> names;
    struct Raw {
        std::array<std::size_t, 3> idx;
        double count;
    };
    std::vector<Raw> raw;

    std::size_t lineno = 0;
    std::size_t pos = 0;
    while (pos <= text.size()) {
        auto nl = text.find('\n', pos);
        std::string_view line = text.substr(pos, nl == std::string_view::npos ? std::string_view::npos : nl - pos);
        pos = (nl == std::string_view::npos) ? text.size() + 1 : nl + 1;
        ++lineno;
        if (!line.empty() && line.back() == '\r') {
            line.remove_suffix(1);
        }
        if (line.empty()) {
            continue;
        }
        const auto where = source + ":" + std::to_string(lineno);
        if (line.rfind("#!domain", 0) == 0) {
            auto f = split_fields(line);
            if (f.size() < 3 || f[0] != "#!domain") {
                throw DataError(where + ": malformed domain directive");
            }
            if (names.size() >= static_cast<std::size_t>(order) || !raw.empty()) {
                throw DataError(where + ": unexpected domain directive");
            }
            auto& v = vocab[names.size()];
            names.emplace_back(f[1]);
            for (std::size_t i = 2; i < f.size(); ++i) {
                std::string id(f[i]);
                if (!v.index.emplace(id, v.items.size()).second) {
                    throw DataError(where + ": duplicate item '" + id + "'");
                }
                v.items.push_back(std::move(id));
            }
            v.declared = true;
            continue;
        }
        if (line[0] == '#') {
            continue;
        }
        auto f = split_fields(line);
        if (f.size() != static_cast<std::size_t>(order) + 1) {
            throw DataError(where + ": expected " + std::to_string(order) + " item columns and a count");
        }
        double count = 0;
        auto cf = f.back();
        auto res = std::from_chars(cf.data(), cf.data() + cf.size(), count);
        if (res.ec != std::errc() || res.ptr != cf.data() + cf.size() || !std::isfinite(count)) {
            throw DataError(where + ": malformed count '" + std::string(cf) + "'");
        }
        if (count < 0) {
            throw DataError(where + ": negative count");
        }
        Raw r{{0, 0, 0}, count};
        for (int d = 0; d < order; ++d) {
            if (f[d].empty()) {
                throw DataError(where + ": empty item identifier");
            }
            std::string id(f[d]);
            auto& v = vocab[d];
            auto it = v.index.find(id);
            if (it == v.index.end()) {
                if (v.declared) {
                    throw DataError(where + ": item '" + id + "' not declared for its domain");
                }
                it = v.index.emplace(id, v.items.size()).first;
                v.items.push_back(id);
            }
            r.idx[d] = it->second;
        }
        raw.push_back(r);
    }
    if (raw.empty()) {
        throw DataError(source + ": no co-occurrence records");
    }
    if (!names.empty() && names.size() != static_cast<std::size_t>(order)) {
        throw DataError(source + ": domain directives must declare every domain");
    }

    static const char* default_names[] = {"A", "B", "C"};
    std::vector<DomainSpec> domains;
    for (int d = 0; d < order; ++d) {
        if (vocab[d].items.size() < min_items) {
            throw DataError(source + ": column " + std::to_string(d + 1) + " has fewer than " + std::to_string(min_items) + " distinct items");
        }
        domains.emplace_back(names.empty() ? default_names[d] : names[d], std::move(vocab[d].items));
    }
    const std::size_t nB = domains[1].size();
    const std::size_t nC = order == 3 ? domains[2].size() : 1;
    std::vector<CoocEntry> entries;
    entries.reserve(raw.size());
    for (const auto& r : raw) {
        entries.push_back({(static_cast<std::uint64_t>(r.idx[0]) * nB + r.idx[1]) * nC + r.idx[2], r.count});
    }
    return CoocTable(std::move(domains), std::move(entries), min_items);
}

CoocTable load_cooc_table(const std::string& path, int order, std::size_t min_items) {
    return parse_cooc_table(read_file(path), order, path, min_items);
}

std::string format_double(double x) {
    char buf[64];
    auto res = std::to_chars(buf, buf + sizeof(buf), x);
    return std::string(buf, res.ptr);
}

std::string format_cooc_table(const CoocTable& table) {
    std::string out;
    out.reserve(table.entries().size() * 24);
    for (const auto& dom : table.domains()) {
        out += "#!domain\t";
        out += dom.name();
        for (const auto& id : dom.items()) {
            out += '\t';
            out += id;
        }
        out += '\n';
    }
    for (const auto& e : table.entries()) {
        const auto idx = table.unkey(e.key);
        for (int d = 0; d < table.order(); ++d) {
            out += table.domain(d).items()[idx[d]];
            out += '\t';
        }
        out += format_double(e.count);
        out += '\n';
    }
    return out;
}

void save_cooc_table(const CoocTable& table, const std::string& path) {
    write_file_atomic(path, format_cooc_table(table));
}

std::string fnv1a_hex(std::string_view bytes) {
    std::uint64_t h = 0xcbf29ce484222325ULL;
    for (unsigned char c : bytes) {
        h ^= c;
        h *= 0x100000001b3ULL;
    }
    char buf[17];
    std::snprintf(buf, sizeof(buf), "%016llx", static_cast<unsigned long long>(h));
    return buf;
}

std::string table_hash(const CoocTable& table) {
    return fnv1a_hex(format_cooc_table(table));
}

void write_file_atomic(const std::string& path, std::string_view contents) {
    namespace fs = std::filesystem;
    const fs::path target(path);
    fs::path tmp = target;
    tmp += ".tmp." + std::to_string(::getpid());
    {
        std::ofstream out(tmp, std::ios::binary | std::ios::trunc);
        if (!out) {
            throw DataError("cannot write " + tmp.string());
        }
        out.write(contents.data(), static_cast<std::streamsize>(contents.size()));
        out.flush();
        if (!out) {
            throw DataError("write failed for " + tmp.string());
        }
    }
    std::error_code ec;
    fs::rename(tmp, target, ec);
    if (ec) {
        fs::remove(tmp);
        throw DataError("cannot rename into " + path + ": " + ec.message());
    }
}

std::string read_file(const std::string& path) {
    std::ifstream in(path, std::ios::binary);
    if (!in) {
        throw DataError("cannot open " + path);
    }
    std::ostringstream ss;
    ss << in.rdbuf();
    return ss.str();
}

}
