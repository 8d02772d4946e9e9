#ifndef COOC_ATLAS_WIRE_HPP
#define COOC_ATLAS_WIRE_HPP

// JSON forms of the query objects, shared by the server, the CLI and the
// trail files. Field order is fixed so equal objects serialize to equal bytes.

#include "cooc_atlas/query.hpp"

#include <json.hpp>

namespace cooc_atlas {

using wire_json = nlohmann::ordered_json;

wire_json to_wire(const ToiQuery& q);
// Throws UsageError on missing or mistyped fields.
ToiQuery query_from_wire(const wire_json& j);

wire_json to_wire(const HeatmapGrid& grid, const EmbeddingModel& model);
wire_json to_wire(const std::vector<RankedItem>& ranked);
wire_json to_wire(const TrailStep& step);
TrailStep step_from_wire(const wire_json& j);

}

#endif
