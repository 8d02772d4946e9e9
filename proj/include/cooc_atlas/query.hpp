#ifndef COOC_ATLAS_QUERY_HPP
#define COOC_ATLAS_QUERY_HPP

#include "cooc_atlas/cooc_table.hpp"
#include "cooc_atlas/kde.hpp"
#include "cooc_atlas/model.hpp"

#include <map>
#include <mutex>
#include <optional>
#include <string>
#include <vector>

namespace cooc_atlas {

// A conditioning point: an item of a domain or a free latent point in it.
struct ToiGiven {
    std::string domain;
    std::optional<std::string> item;
    std::optional<std::vector<double>> point;
};

struct ToiQuery {
    std::vector<ToiGiven> given;
    std::string target_domain;
    int grid_resolution = 128;
    int top_k = 10;
};

struct RankedItem {
    std::string item;
    std::size_t index = 0;
    double score = 0;
};

// Read-only CbCP engine over a model and the weight table it was trained on.
// c-augmented models are conditioned on the c = 1 slice.
class QueryEngine {
public:
    // `weights` must be the prepared table (see weights_for_model).
    QueryEngine(EmbeddingModel model, const CoocTable& weights);

    const EmbeddingModel& model() const { return model_; }
    const DensityEvaluator& evaluator() const { return eval_; }
    std::optional<int> slice() const { return slice_; }

    // Throws UsageError for structurally invalid queries (bad resolution, top_k,
    // repeated or target domains, wrong point dimension) and NotFoundError for
    // unknown domains or items.
    void validate(const ToiQuery& q) const;
    std::vector<GivenPoint> resolve(const ToiQuery& q) const;

    // Grid over the target domain's coordinates +- 4 sigma.
    HeatmapGrid heatmap(const ToiQuery& q) const;
    // Conditional density at each target item's coordinate, normalized over
    // items; descending, ties by index. Returns all items, top_k is applied by
    // the caller via truncate().
    std::vector<RankedItem> rank_items(const ToiQuery& q) const;

private:
    EmbeddingModel model_;
    DensityEvaluator eval_;
    std::optional<int> slice_;
};

std::vector<RankedItem> truncate(std::vector<RankedItem> ranked, int top_k);

HeatmapGrid cbcp_heatmap(const EmbeddingModel& model, const CoocTable& weights, const ToiQuery& q);
std::vector<RankedItem> cbcp_rank_items(const EmbeddingModel& model, const CoocTable& weights, const ToiQuery& q);

// FNV-1a of the heatmap's canonical JSON.
std::string heatmap_hash(const HeatmapGrid& grid);

struct TrailStep {
    ToiQuery query;
    std::optional<std::string> chosen;
};

struct ExplorationTrail {
    std::string id;
    std::vector<TrailStep> steps;
};

// Validates `next` against the engine, then appends it.
ExplorationTrail trail_step(ExplorationTrail trail, const TrailStep& next, const QueryEngine& engine);
std::vector<HeatmapGrid> replay(const ExplorationTrail& trail, const QueryEngine& engine);

// One JSON object per line: {"session", "step", "query", "chosen"}.
std::string format_trail(const ExplorationTrail& trail);
ExplorationTrail parse_trail(const std::string& text);

// Sessions keyed by id. With a path, every change is appended to a
// line-delimited log (creations, steps, deletions) that is replayed on open.
class TrailStore {
public:
    TrailStore() = default;
    explicit TrailStore(std::string path);

    std::string create();
    ExplorationTrail append(const std::string& id, const TrailStep& step, const QueryEngine& engine);
    ExplorationTrail get(const std::string& id) const;
    void remove(const std::string& id);
    bool contains(const std::string& id) const;

private:
    void log(const std::string& line);

    std::string path_;
    mutable std::mutex mutex_;
    std::map<std::string, ExplorationTrail> trails_;
    std::size_t next_id_ = 1;
};

}

#endif
