#include "cooc_atlas/query.hpp"

#include "cooc_atlas/errors.hpp"
#include "cooc_atlas/wire.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <set>
#include <sstream>

namespace cooc_atlas {

namespace {

constexpr int kMinResolution = 16;
constexpr int kMaxResolution = 1024;

int find_domain(const EmbeddingModel& model, const std::string& name) {
    for (int d = 0; d < model.order(); ++d) {
        if (model.domains[d].name() == name) {
            return d;
        }
    }
    throw NotFoundError("unknown domain '" + name + "'");
}

double log_sum_exp(const std::vector<double>& v) {
    double m = -INFINITY;
    for (double x : v) {
        m = std::max(m, x);
    }
    if (!std::isfinite(m)) {
        return m;
    }
    double s = 0;
    for (double x : v) {
        s += std::exp(x - m);
    }
    return m + std::log(s);
}

}

QueryEngine::QueryEngine(EmbeddingModel model, const CoocTable& weights)
    : model_(std::move(model)),
      eval_(model_, weights, model_.use_c ? WeightForm::WithC : WeightForm::Positive),
      slice_(model_.use_c ? std::optional<int>(1) : std::nullopt) {}

void QueryEngine::validate(const ToiQuery& q) const {
    if (q.grid_resolution < kMinResolution || q.grid_resolution > kMaxResolution) {
        throw UsageError("query: grid_resolution must lie in [16, 1024]");
    }
    if (q.top_k < 1) {
        throw UsageError("query: top_k must be >= 1");
    }
    const int target = find_domain(model_, q.target_domain);
    if (q.given.empty()) {
        throw UsageError("query: at least one given point is required");
    }
    if (q.given.size() > static_cast<std::size_t>(model_.order() - 1)) {
        throw UsageError("query: at most " + std::to_string(model_.order() - 1) + " given points for this model");
    }
    std::set<int> seen;
    for (const auto& g : q.given) {
        const int d = find_domain(model_, g.domain);
        if (d == target) {
            throw UsageError("query: the target domain cannot also be given");
        }
        if (!seen.insert(d).second) {
            throw UsageError("query: domain '" + g.domain + "' is given twice");
        }
        if (g.item.has_value() == g.point.has_value()) {
            throw UsageError("query: each given entry needs exactly one of item or point");
        }
        if (g.item) {
            if (!model_.domains[d].find(*g.item)) {
                throw NotFoundError("unknown item '" + *g.item + "' in domain '" + g.domain + "'");
            }
        } else {
            if (g.point->size() != static_cast<std::size_t>(model_.dim(d))) {
                throw UsageError("query: point for domain '" + g.domain + "' needs " + std::to_string(model_.dim(d)) +
                                 " coordinates");
            }
            for (double x : *g.point) {
                if (!std::isfinite(x)) {
                    throw UsageError("query: non-finite coordinate");
                }
            }
        }
    }
}

std::vector<GivenPoint> QueryEngine::resolve(const ToiQuery& q) const {
    validate(q);
    std::vector<GivenPoint> out;
    for (const auto& g : q.given) {
        const int d = find_domain(model_, g.domain);
        if (g.item) {
            const auto row = static_cast<Eigen::Index>(*model_.domains[d].find(*g.item));
            const auto& X = model_.coords[d];
            std::vector<double> p(static_cast<std::size_t>(X.cols()));
            for (Eigen::Index c = 0; c < X.cols(); ++c) {
                p[static_cast<std::size_t>(c)] = X(row, c);
            }
            out.push_back({d, std::move(p)});
        } else {
            out.push_back({d, *g.point});
        }
    }
    return out;
}

HeatmapGrid QueryEngine::heatmap(const ToiQuery& q) const {
    const auto given = resolve(q);
    const int target = find_domain(model_, q.target_domain);
    const auto grid = grid_for_domain(model_.coords[target], 4 * model_.bandwidths[target], q.grid_resolution);
    return eval_.conditional_grid(target, grid, given, slice_);
}

std::vector<RankedItem> QueryEngine::rank_items(const ToiQuery& q) const {
    const auto given = resolve(q);
    const int target = find_domain(model_, q.target_domain);
    const auto log_r = eval_.log_conditional_weights(target, given, slice_);
    const auto& X = model_.coords[target];
    const double sigma = model_.bandwidths[target];
    const auto n = static_cast<std::size_t>(X.rows());

    std::vector<double> log_score(n);
    std::vector<double> terms(n);
    std::vector<double> xj(static_cast<std::size_t>(X.cols())), xi(xj.size());
    for (std::size_t j = 0; j < n; ++j) {
        for (Eigen::Index c = 0; c < X.cols(); ++c) {
            xj[static_cast<std::size_t>(c)] = X(static_cast<Eigen::Index>(j), c);
        }
        for (std::size_t i = 0; i < n; ++i) {
            for (Eigen::Index c = 0; c < X.cols(); ++c) {
                xi[static_cast<std::size_t>(c)] = X(static_cast<Eigen::Index>(i), c);
            }
            terms[i] = log_r[i] + log_gaussian_kernel(xj, xi, sigma);
        }
        log_score[j] = log_sum_exp(terms);
    }
    const double lz = log_sum_exp(log_score);
    if (!std::isfinite(lz)) {
        throw NumericalError("query: conditional scores underflow for every target item");
    }
    std::vector<RankedItem> out(n);
    for (std::size_t j = 0; j < n; ++j) {
        out[j] = {model_.domains[target].items()[j], j, std::exp(log_score[j] - lz)};
    }
    std::stable_sort(out.begin(), out.end(), [](const RankedItem& a, const RankedItem& b) { return a.score > b.score; });
    return out;
}

std::vector<RankedItem> truncate(std::vector<RankedItem> ranked, int top_k) {
    if (top_k >= 0 && static_cast<std::size_t>(top_k) < ranked.size()) {
        ranked.resize(static_cast<std::size_t>(top_k));
    }
    return ranked;
}

HeatmapGrid cbcp_heatmap(const EmbeddingModel& model, const CoocTable& weights, const ToiQuery& q) {
    return QueryEngine(model, weights).heatmap(q);
}

std::vector<RankedItem> cbcp_rank_items(const EmbeddingModel& model, const CoocTable& weights, const ToiQuery& q) {
    return truncate(QueryEngine(model, weights).rank_items(q), q.top_k);
}

std::string heatmap_hash(const HeatmapGrid& grid) {
    std::string s = std::to_string(grid.target_domain) + "|" + std::to_string(grid.grid.axes) + "|" +
                    format_double(grid.grid.x_range[0]) + "," + format_double(grid.grid.x_range[1]) + "|" +
                    format_double(grid.grid.y_range[0]) + "," + format_double(grid.grid.y_range[1]) + "|" +
                    std::to_string(grid.grid.nx) + "x" + std::to_string(grid.grid.ny) + "|";
    for (double v : grid.values) {
        s += format_double(v);
        s += ',';
    }
    return fnv1a_hex(s);
}

ExplorationTrail trail_step(ExplorationTrail trail, const TrailStep& next, const QueryEngine& engine) {
    engine.validate(next.query);
    if (next.chosen) {
        const int target = find_domain(engine.model(), next.query.target_domain);
        if (!engine.model().domains[target].find(*next.chosen)) {
            throw NotFoundError("trail: chosen item '" + *next.chosen + "' is not in domain '" + next.query.target_domain + "'");
        }
    }
    trail.steps.push_back(next);
    return trail;
}

std::vector<HeatmapGrid> replay(const ExplorationTrail& trail, const QueryEngine& engine) {
    std::vector<HeatmapGrid> out;
    for (const auto& s : trail.steps) {
        out.push_back(engine.heatmap(s.query));
    }
    return out;
}

namespace {

std::string step_line(const std::string& id, std::size_t index, const TrailStep& step) {
    wire_json j;
    j["session"] = id;
    j["step"] = index;
    const auto w = to_wire(step);
    j["query"] = w["query"];
    j["chosen"] = w["chosen"];
    return j.dump() + "\n";
}

}

std::string format_trail(const ExplorationTrail& trail) {
    std::string out;
    for (std::size_t i = 0; i < trail.steps.size(); ++i) {
        out += step_line(trail.id, i, trail.steps[i]);
    }
    return out;
}

ExplorationTrail parse_trail(const std::string& text) {
    ExplorationTrail trail;
    std::istringstream in(text);
    std::string line;
    int lineno = 0;
    while (std::getline(in, line)) {
        ++lineno;
        if (line.empty()) {
            continue;
        }
        try {
            const auto j = wire_json::parse(line);
            const auto id = j.at("session").get<std::string>();
            if (!trail.id.empty() && id != trail.id) {
                throw DataError("trail line " + std::to_string(lineno) + ": mixed sessions");
            }
            trail.id = id;
            if (j.at("step").get<std::size_t>() != trail.steps.size()) {
                throw DataError("trail line " + std::to_string(lineno) + ": steps out of order");
            }
            trail.steps.push_back(step_from_wire(j));
        } catch (const nlohmann::json::exception& e) {
            throw DataError("trail line " + std::to_string(lineno) + ": " + e.what());
        } catch (const UsageError& e) {
            throw DataError("trail line " + std::to_string(lineno) + ": " + e.what());
        }
    }
    return trail;
}

TrailStore::TrailStore(std::string path) : path_(std::move(path)) {
    std::ifstream in(path_);
    if (!in) {
        return;
    }
    std::string line;
    int lineno = 0;
    while (std::getline(in, line)) {
        ++lineno;
        if (line.empty()) {
            continue;
        }
        try {
            const auto j = wire_json::parse(line);
            const auto id = j.at("session").get<std::string>();
            if (j.contains("created")) {
                trails_[id] = ExplorationTrail{id, {}};
            } else if (j.contains("deleted")) {
                trails_.erase(id);
            } else {
                auto it = trails_.find(id);
                if (it == trails_.end()) {
                    throw DataError("step for unknown session");
                }
                it->second.steps.push_back(step_from_wire(j));
            }
            if (id.size() > 1 && id[0] == 't') {
                next_id_ = std::max(next_id_, static_cast<std::size_t>(std::stoull(id.substr(1))) + 1);
            }
        } catch (const std::exception& e) {
            throw DataError(path_ + ":" + std::to_string(lineno) + ": bad trail record: " + e.what());
        }
    }
}

void TrailStore::log(const std::string& line) {
    if (path_.empty()) {
        return;
    }
    std::ofstream out(path_, std::ios::app);
    out << line;
    if (!out) {
        throw DataError("cannot append to trail file " + path_);
    }
}

std::string TrailStore::create() {
    std::lock_guard lock(mutex_);
    const std::string id = "t" + std::to_string(next_id_++);
    trails_[id] = ExplorationTrail{id, {}};
    wire_json j;
    j["session"] = id;
    j["created"] = true;
    log(j.dump() + "\n");
    return id;
}

ExplorationTrail TrailStore::append(const std::string& id, const TrailStep& step, const QueryEngine& engine) {
    std::lock_guard lock(mutex_);
    auto it = trails_.find(id);
    if (it == trails_.end()) {
        throw NotFoundError("unknown trail session '" + id + "'");
    }
    auto next = trail_step(it->second, step, engine);
    log(step_line(id, it->second.steps.size(), step));
    it->second = std::move(next);
    return it->second;
}

ExplorationTrail TrailStore::get(const std::string& id) const {
    std::lock_guard lock(mutex_);
    auto it = trails_.find(id);
    if (it == trails_.end()) {
        throw NotFoundError("unknown trail session '" + id + "'");
    }
    return it->second;
}

void TrailStore::remove(const std::string& id) {
    std::lock_guard lock(mutex_);
    if (trails_.erase(id) == 0) {
        throw NotFoundError("unknown trail session '" + id + "'");
    }
    wire_json j;
    j["session"] = id;
    j["deleted"] = true;
    log(j.dump() + "\n");
}

bool TrailStore::contains(const std::string& id) const {
    std::lock_guard lock(mutex_);
    return trails_.count(id) > 0;
}

}
