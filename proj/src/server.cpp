#include "cooc_atlas/server.hpp"

#include "cooc_atlas/errors.hpp"
#include "cooc_atlas/wire.hpp"

#include <httplib.h>

#include <cmath>
#include <iostream>
#include <chrono>
#include <thread>

namespace cooc_atlas {

namespace {

std::array<double, 4> display_bounds(const Eigen::MatrixXd& coords) {
    std::array<double, 4> b{0, 0, 0, 0};
    if (coords.rows() == 0) {
        return b;
    }
    b[0] = coords.col(0).minCoeff();
    b[1] = coords.col(0).maxCoeff();
    if (coords.cols() > 1) {
        b[2] = coords.col(1).minCoeff();
        b[3] = coords.col(1).maxCoeff();
    }
    return b;
}

HttpResponse json_response(int status, const wire_json& j) {
    return {status, j.dump(), "application/json"};
}

HttpResponse error_response(int status, const std::string& message) {
    wire_json err;
    err["status"] = status;
    err["message"] = message;
    wire_json j;
    j["error"] = std::move(err);
    return json_response(status, j);
}

wire_json parse_body(const std::string& body) {
    try {
        return wire_json::parse(body);
    } catch (const nlohmann::json::exception& e) {
        throw UsageError(std::string("malformed JSON body: ") + e.what());
    }
}

wire_json trail_wire(const ExplorationTrail& trail) {
    wire_json steps = wire_json::array();
    for (const auto& s : trail.steps) {
        steps.push_back(to_wire(s));
    }
    wire_json j;
    j["session"] = trail.id;
    j["steps"] = std::move(steps);
    return j;
}

bool starts_with(const std::string& s, const std::string& prefix) {
    return s.size() >= prefix.size() && s.compare(0, prefix.size(), prefix) == 0;
}

}

ModelSnapshot::ModelSnapshot(EmbeddingModel model, const CoocTable& weights)
    : engine(std::move(model), weights), hash(model_hash(engine.model())) {
    for (const auto& c : engine.model().coords) {
        bounds.push_back(display_bounds(c));
    }
}

std::shared_ptr<const ModelSnapshot> load_snapshot(const std::string& model_path, const std::string& data_path) {
    EmbeddingModel model = load_model(model_path);
    const CoocTable raw = load_cooc_table(data_path, model.order());
    const CoocTable weights = weights_for_model(model, raw);
    return std::make_shared<const ModelSnapshot>(std::move(model), weights);
}

AtlasServer::AtlasServer(ServerOptions opts) : opts_(std::move(opts)) {
    trails_ = opts_.trail_path.empty() ? std::make_unique<TrailStore>() : std::make_unique<TrailStore>(opts_.trail_path);
    http_ = std::make_unique<httplib::Server>();
}

AtlasServer::~AtlasServer() { stop(); }

void AtlasServer::set_snapshot(std::shared_ptr<const ModelSnapshot> snap) {
    std::lock_guard lock(snap_mutex_);
    snap_ = std::move(snap);
}

std::shared_ptr<const ModelSnapshot> AtlasServer::snapshot() const {
    std::lock_guard lock(snap_mutex_);
    return snap_;
}

HttpResponse AtlasServer::handle(const std::string& method, const std::string& path, const std::string& body) const {
    const auto snap = snapshot();
    try {
        if (method == "GET" && path.rfind("/trail/", 0) == 0) {
            return get_trail(path.substr(7));
        }
        const bool known = path == "/model/meta" || path == "/cbcp" || path == "/trail" || starts_with(path, "/map/");
        if (!known) {
            return error_response(404, "no route for " + path);
        }
        if (!snap) {
            return error_response(503, "model snapshot is loading");
        }
        if (path == "/model/meta" && method == "GET") {
            return meta(*snap);
        }
        if (starts_with(path, "/map/") && method == "GET") {
            return map(*snap, path.substr(5));
        }
        if (path == "/cbcp" && method == "POST") {
            return cbcp(*snap, body);
        }
        if (path == "/trail" && method == "POST") {
            return post_trail(*snap, body);
        }
        return error_response(405, "method " + method + " not allowed on " + path);
    } catch (const NotFoundError& e) {
        return error_response(404, e.what());
    } catch (const UsageError& e) {
        return error_response(400, e.what());
    } catch (const DataError& e) {
        return error_response(400, e.what());
    } catch (const NumericalError& e) {
        return error_response(422, e.what());
    }
}

HttpResponse AtlasServer::meta(const ModelSnapshot& snap) const {
    const auto& m = snap.model();
    wire_json domains = wire_json::array();
    for (int d = 0; d < m.order(); ++d) {
        wire_json e;
        e["name"] = m.domains[d].name();
        e["size"] = m.domains[d].size();
        e["dim"] = m.dim(d);
        e["bandwidth"] = m.bandwidths[d];
        e["projection"] = m.dim(d) > 2 ? "first two axes of " + std::to_string(m.dim(d))
                                       : std::string("identity");
        domains.push_back(std::move(e));
    }
    wire_json j;
    j["hash"] = snap.hash;
    j["order"] = m.order();
    j["use_c"] = m.use_c;
    j["domains"] = std::move(domains);
    return json_response(200, j);
}

HttpResponse AtlasServer::map(const ModelSnapshot& snap, const std::string& domain) const {
    const auto& m = snap.model();
    const int d = m.domain_index(domain);
    if (d < 0) {
        throw NotFoundError("unknown domain '" + domain + "'");
    }
    const auto& coords = m.coords[d];
    wire_json items = wire_json::array();
    const auto& ids = m.domains[d].items();
    for (std::size_t i = 0; i < ids.size(); ++i) {
        wire_json e;
        e["id"] = ids[i];
        e["x"] = coords(static_cast<Eigen::Index>(i), 0);
        e["y"] = coords.cols() > 1 ? coords(static_cast<Eigen::Index>(i), 1) : 0.0;
        items.push_back(std::move(e));
    }
    const auto& b = snap.bounds[d];
    wire_json j;
    j["domain"] = domain;
    j["hash"] = snap.hash;
    j["dim"] = m.dim(d);
    j["bounds"] = {{"x_min", b[0]}, {"x_max", b[1]}, {"y_min", b[2]}, {"y_max", b[3]}};
    j["items"] = std::move(items);
    return json_response(200, j);
}

HttpResponse AtlasServer::cbcp(const ModelSnapshot& snap, const std::string& body) const {
    const auto req = parse_body(body);
    if (req.is_object() && req.contains("model_hash")) {
        if (!req.at("model_hash").is_string() || req.at("model_hash").get<std::string>() != snap.hash) {
            return error_response(409, "model_hash does not match the served model " + snap.hash);
        }
    }
    const ToiQuery q = query_from_wire(req);
    snap.engine.validate(q);
    const HeatmapGrid grid = snap.engine.heatmap(q);
    const auto ranked = truncate(snap.engine.rank_items(q), q.top_k);
    wire_json j;
    j["hash"] = snap.hash;
    j["query"] = to_wire(q);
    j["heatmap"] = to_wire(grid, snap.model());
    j["ranked"] = to_wire(ranked);
    return json_response(200, j);
}

HttpResponse AtlasServer::post_trail(const ModelSnapshot& snap, const std::string& body) const {
    const auto req = body.empty() ? wire_json::object() : parse_body(body);
    if (!req.is_object()) {
        throw UsageError("trail request must be a JSON object");
    }
    std::lock_guard lock(trail_mutex_);
    std::string id;
    if (req.contains("session")) {
        if (!req.at("session").is_string()) {
            throw UsageError("field 'session' has the wrong type");
        }
        id = req.at("session").get<std::string>();
        if (!trails_->contains(id)) {
            throw NotFoundError("unknown session '" + id + "'");
        }
    }
    std::optional<TrailStep> step;
    if (req.contains("step")) {
        step = step_from_wire(req.at("step"));
        // Validate before creating a session so a bad step leaves no trace.
        snap.engine.validate(step->query);
    }
    const bool created = id.empty();
    if (created) {
        id = trails_->create();
    }
    const ExplorationTrail trail = step ? trails_->append(id, *step, snap.engine) : trails_->get(id);
    return json_response(created ? 201 : 200, trail_wire(trail));
}

HttpResponse AtlasServer::get_trail(const std::string& id) const {
    std::lock_guard lock(trail_mutex_);
    return json_response(200, trail_wire(trails_->get(id)));
}

void AtlasServer::listen() {
    auto& srv = *http_;
    const std::string origin = opts_.cors_origin;
    srv.set_default_headers({{"Access-Control-Allow-Origin", origin},
                             {"Access-Control-Allow-Methods", "GET, POST, OPTIONS"},
                             {"Access-Control-Allow-Headers", "Content-Type"}});
    auto forward = [this](const httplib::Request& req, httplib::Response& res) {
        const HttpResponse r = handle(req.method, req.path, req.body);
        res.status = r.status;
        res.set_content(r.body, r.content_type);
    };
    srv.Get(R"(/.*)", forward);
    srv.Post(R"(/.*)", forward);
    srv.Options(R"(/.*)", [](const httplib::Request&, httplib::Response& res) { res.status = 204; });
    int port = opts_.port;
    if (port == 0) {
        port = srv.bind_to_any_port(opts_.host);
    } else if (!srv.bind_to_port(opts_.host, port)) {
        port = -1;
    }
    if (port < 0) {
        throw UsageError("cannot bind " + opts_.host + ":" + std::to_string(opts_.port));
    }
    bound_port_ = port;
    srv.listen_after_bind();
}

void AtlasServer::stop() { http_->stop(); }

bool AtlasServer::ready() const { return bound_port_.load() > 0 && http_->is_running(); }

int serve(const std::string& model_path, const std::string& data_path, ServerOptions opts) {
    AtlasServer server(std::move(opts));
    // The socket is opened first so clients see 503 rather than a refused
    // connection while the snapshot loads.
    std::exception_ptr load_error;
    std::thread loader([&] {
        try {
            server.set_snapshot(load_snapshot(model_path, data_path));
            std::cerr << "serving model " << server.snapshot()->hash << "\n";
        } catch (...) {
            load_error = std::current_exception();
            // stop() only takes effect once the listener runs.
            for (int i = 0; i < 500 && !server.ready(); ++i) {
                std::this_thread::sleep_for(std::chrono::milliseconds(10));
            }
            server.stop();
        }
    });
    try {
        server.listen();
    } catch (...) {
        loader.join();
        throw;
    }
    loader.join();
    if (load_error) {
        std::rethrow_exception(load_error);
    }
    return 0;
}

}
