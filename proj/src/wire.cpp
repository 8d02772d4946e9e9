#include "cooc_atlas/wire.hpp"

#include "cooc_atlas/errors.hpp"

namespace cooc_atlas {

namespace {

template <typename T>
T field(const wire_json& j, const char* key) {
    if (!j.contains(key)) {
        throw UsageError(std::string("missing field '") + key + "'");
    }
    try {
        return j.at(key).get<T>();
    } catch (const nlohmann::json::exception&) {
        throw UsageError(std::string("field '") + key + "' has the wrong type");
    }
}

}

wire_json to_wire(const ToiQuery& q) {
    wire_json given = wire_json::array();
    for (const auto& g : q.given) {
        wire_json e;
        e["domain"] = g.domain;
        if (g.item) {
            e["item"] = *g.item;
        }
        if (g.point) {
            e["point"] = *g.point;
        }
        given.push_back(std::move(e));
    }
    wire_json j;
    j["given"] = std::move(given);
    j["target_domain"] = q.target_domain;
    j["grid_resolution"] = q.grid_resolution;
    j["top_k"] = q.top_k;
    return j;
}

ToiQuery query_from_wire(const wire_json& j) {
    if (!j.is_object()) {
        throw UsageError("query must be a JSON object");
    }
    ToiQuery q;
    q.target_domain = field<std::string>(j, "target_domain");
    if (j.contains("grid_resolution")) {
        q.grid_resolution = field<int>(j, "grid_resolution");
    }
    if (j.contains("top_k")) {
        q.top_k = field<int>(j, "top_k");
    }
    const auto& given = j.contains("given") ? j.at("given") : throw UsageError("missing field 'given'");
    if (!given.is_array()) {
        throw UsageError("field 'given' must be an array");
    }
    for (const auto& e : given) {
        if (!e.is_object()) {
            throw UsageError("given entries must be objects");
        }
        ToiGiven g;
        g.domain = field<std::string>(e, "domain");
        if (e.contains("item")) {
            g.item = field<std::string>(e, "item");
        }
        if (e.contains("point")) {
            g.point = field<std::vector<double>>(e, "point");
        }
        q.given.push_back(std::move(g));
    }
    return q;
}

wire_json to_wire(const HeatmapGrid& grid, const EmbeddingModel& model) {
    wire_json j;
    j["target_domain"] = model.domains.at(static_cast<std::size_t>(grid.target_domain)).name();
    j["axes"] = grid.grid.axes;
    j["x_range"] = grid.grid.x_range;
    j["y_range"] = grid.grid.y_range;
    j["nx"] = grid.grid.nx;
    j["ny"] = grid.grid.ny;
    j["min"] = grid.min_value;
    j["max"] = grid.max_value;
    j["argmax"] = grid.argmax;
    j["values"] = grid.values;
    wire_json items = wire_json::array();
    const auto& ids = model.domains[static_cast<std::size_t>(grid.target_domain)].items();
    for (std::size_t i = 0; i < grid.item_positions.size(); ++i) {
        wire_json e;
        e["id"] = ids[i];
        e["x"] = grid.item_positions[i][0];
        e["y"] = grid.item_positions[i][1];
        items.push_back(std::move(e));
    }
    j["items"] = std::move(items);
    return j;
}

wire_json to_wire(const std::vector<RankedItem>& ranked) {
    wire_json out = wire_json::array();
    for (const auto& r : ranked) {
        wire_json e;
        e["item"] = r.item;
        e["index"] = r.index;
        e["score"] = r.score;
        out.push_back(std::move(e));
    }
    return out;
}

wire_json to_wire(const TrailStep& step) {
    wire_json j;
    j["query"] = to_wire(step.query);
    j["chosen"] = step.chosen ? wire_json(*step.chosen) : wire_json(nullptr);
    return j;
}

TrailStep step_from_wire(const wire_json& j) {
    if (!j.is_object()) {
        throw UsageError("trail step must be a JSON object");
    }
    TrailStep s;
    if (!j.contains("query")) {
        throw UsageError("missing field 'query'");
    }
    s.query = query_from_wire(j.at("query"));
    if (j.contains("chosen") && !j.at("chosen").is_null()) {
        s.chosen = field<std::string>(j, "chosen");
    }
    return s;
}

}
