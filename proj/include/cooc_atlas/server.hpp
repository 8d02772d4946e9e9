#ifndef COOC_ATLAS_SERVER_HPP
#define COOC_ATLAS_SERVER_HPP

// HTTP front end over a frozen model. Endpoints (JSON bodies, fixed field order):
//   GET  /model/meta       domains, sizes, dims, bandwidths, hash, display projection
//   GET  /map/{domain}     item ids, display coordinates and bounding box
//   POST /cbcp             ToiQuery (+ optional "model_hash") -> heatmap + ranked items
//   POST /trail            {"session"?: id, "step"?: TrailStep} -> trail
//   GET  /trail/{id}       trail
// Errors are {"error": {"status", "message"}} with 400 for malformed queries,
// 404 for unknown items, domains, sessions or routes, 409 when "model_hash"
// does not match the served model and 503 while no snapshot is loaded.

#include "cooc_atlas/model.hpp"
#include "cooc_atlas/query.hpp"

#include <array>
#include <atomic>
#include <map>
#include <memory>
#include <mutex>
#include <string>
#include <vector>

namespace httplib {
class Server;
}

namespace cooc_atlas {

// Immutable after construction.
struct ModelSnapshot {
    QueryEngine engine;
    std::string hash;
    // Per domain: {x_min, x_max, y_min, y_max} of the display coordinates.
    std::vector<std::array<double, 4>> bounds;

    ModelSnapshot(EmbeddingModel model, const CoocTable& weights);
    const EmbeddingModel& model() const { return engine.model(); }
};

// Rebuilds the weights from the raw table, which must match the model.
std::shared_ptr<const ModelSnapshot> load_snapshot(const std::string& model_path, const std::string& data_path);

struct HttpResponse {
    int status = 200;
    std::string body;
    std::string content_type = "application/json";
};

struct ServerOptions {
    std::string host = "127.0.0.1";
    int port = 8080;
    // Empty keeps trails in memory only.
    std::string trail_path;
    std::string cors_origin = "*";
};

class AtlasServer {
public:
    explicit AtlasServer(ServerOptions opts = {});
    ~AtlasServer();

    // Atomic swap; requests in flight keep the snapshot they started with.
    void set_snapshot(std::shared_ptr<const ModelSnapshot> snap);
    std::shared_ptr<const ModelSnapshot> snapshot() const;

    // Routing without a socket; the HTTP layer delegates here.
    HttpResponse handle(const std::string& method, const std::string& path, const std::string& body) const;

    // Binds and serves until stop(). With port 0 an ephemeral port is chosen;
    // bound_port() reports it once ready() is true.
    void listen();
    void stop();
    bool ready() const;
    int bound_port() const { return bound_port_.load(); }

private:
    HttpResponse meta(const ModelSnapshot& snap) const;
    HttpResponse map(const ModelSnapshot& snap, const std::string& domain) const;
    HttpResponse cbcp(const ModelSnapshot& snap, const std::string& body) const;
    HttpResponse post_trail(const ModelSnapshot& snap, const std::string& body) const;
    HttpResponse get_trail(const std::string& id) const;

    ServerOptions opts_;
    mutable std::mutex snap_mutex_;
    std::shared_ptr<const ModelSnapshot> snap_;
    std::unique_ptr<TrailStore> trails_;
    // Serializes trail writers.
    mutable std::mutex trail_mutex_;
    std::unique_ptr<httplib::Server> http_;
    std::atomic<int> bound_port_{0};
};

// Blocks serving until the process is stopped.
int serve(const std::string& model_path, const std::string& data_path, ServerOptions opts);

}

#endif
