#include "cooc_atlas/cli.hpp"

#include "cooc_atlas/errors.hpp"
#include "cooc_atlas/eval.hpp"
#include "cooc_atlas/model.hpp"
#include "cooc_atlas/query.hpp"
#include "cooc_atlas/server.hpp"
#include "cooc_atlas/synthetic.hpp"
#include "cooc_atlas/trainer.hpp"
#include "cooc_atlas/wire.hpp"

#include <CLI11.hpp>
#include <Eigen/Core>

#include <algorithm>
#include <cstdlib>
#include <filesystem>
#include <iostream>
#include <optional>
#include <sstream>

namespace cooc_atlas {

namespace {

constexpr const char* kProgram = "cooc-atlas";

std::vector<int> parse_int_list(const std::string& text, const char* what) {
    std::vector<int> out;
    std::stringstream ss(text);
    std::string tok;
    while (std::getline(ss, tok, ',')) {
        try {
            std::size_t used = 0;
            const int v = std::stoi(tok, &used);
            if (used != tok.size()) {
                throw std::invalid_argument(tok);
            }
            out.push_back(v);
        } catch (const std::exception&) {
            throw UsageError(std::string(what) + ": '" + text + "' is not a comma-separated integer list");
        }
    }
    if (out.empty()) {
        throw UsageError(std::string(what) + ": empty list");
    }
    return out;
}

void apply_thread_cap() {
    if (const char* env = std::getenv("COOC_ATLAS_THREADS")) {
        const int n = std::atoi(env);
        if (n < 1) {
            throw UsageError("COOC_ATLAS_THREADS must be a positive integer");
        }
        Eigen::setNbThreads(n);
    }
}

struct GenerateArgs {
    int n_a = 50;
    int n_b = 50;
    int n_c = 0;
    std::uint64_t seed = 7;
    int samples = 100;
    std::string out;
    std::string meta;
};

// Training flags. Values reach the config only when given on the command line,
// so a config file supplies everything else.
struct TrainArgs {
    std::string config;
    std::string data;
    int order = 2;
    std::string out;
    std::string log;
    std::vector<std::string> overrides;
    TrainConfig flags;
    std::string dims = "2";
    std::string init = "pca";
    std::string reg = "l2";
};

struct EvalArgs {
    std::string model;
    std::string data;
    std::string dims;
    std::string bandwidth = "rule";
    std::string measure = "marginals";
    std::string out;
};

struct QueryArgs {
    std::string model;
    std::string data;
    std::string query;
    std::vector<std::string> given;
    std::string target;
    int resolution = 128;
    int top_k = 10;
    std::string out;
};

struct ServeArgs {
    std::string model;
    std::string data;
    std::string host = "127.0.0.1";
    int port = 8080;
    std::string trails;
};

void add_train_flags(CLI::App* sub, TrainArgs& a, std::vector<std::pair<CLI::Option*, std::string>>& keyed) {
    auto& f = a.flags;
    auto key = [&](CLI::Option* o, const char* k) { keyed.emplace_back(o, k); };
    sub->add_option("--config", a.config, "key=value config file; flags override it");
    sub->add_option("--data", a.data, "co-occurrence table (tab-separated counts)")->required();
    sub->add_option("--order", a.order, "number of domains")->check(CLI::IsMember({2, 3}));
    sub->add_option("--out", a.out, "model file to write")->required();
    sub->add_option("--log", a.log, "per-epoch training log to write");
    key(sub->add_option("--dims", a.dims, "latent dimension, one value or one per domain"), "dims");
    key(sub->add_option("--lambda", f.lambda, "regularization weight"), "lambda");
    key(sub->add_option("--reg", a.reg, "regularization norm")->check(CLI::IsMember({"l2", "linf"})), "reg");
    key(sub->add_option("--alpha", f.pu.alpha, "PU prior alpha"), "alpha");
    key(sub->add_option("--beta", f.pu.beta, "PU prior beta"), "beta");
    key(sub->add_option("--diffusion-steps", f.diffusion_steps, "Markov diffusion steps (1 = none)"), "diffusion_steps");
    key(sub->add_option("--init", a.init, "initialization")->check(CLI::IsMember({"pca", "gaussian"})), "init");
    key(sub->add_option("--seed", f.seed, "random seed"), "seed");
    key(sub->add_option("--warmup-iters", f.warmup_iters, "auxiliary-phase iterations"), "warmup_iters");
    key(sub->add_option("--main-iters", f.main_iters, "main-phase iterations"), "main_iters");
    key(sub->add_option("--step-size", f.step_size, "gradient step size"), "step_size");
    sub->add_option("--set", a.overrides, "extra config override key=value (repeatable)");
}

TrainConfig resolve_config(const TrainArgs& a, const std::vector<std::pair<CLI::Option*, std::string>>& keyed) {
    TrainConfig cfg;
    if (!a.config.empty()) {
        cfg = parse_config(read_file(a.config), cfg);
    }
    const auto flag_kv = config_to_kv(a.flags);
    auto lookup = [&](const std::string& k) {
        if (k == "dims") {
            return a.dims;
        }
        if (k == "init") {
            return a.init;
        }
        if (k == "reg") {
            return a.reg;
        }
        for (const auto& [fk, fv] : flag_kv) {
            if (fk == k) {
                return fv;
            }
        }
        throw UsageError("internal: no flag for key " + k);
    };
    for (const auto& [opt, k] : keyed) {
        if (opt->count() > 0) {
            apply_config_kv(cfg, k, lookup(k));
        }
    }
    for (const auto& kv : a.overrides) {
        const auto eq = kv.find('=');
        if (eq == std::string::npos) {
            throw UsageError("--set expects key=value, got '" + kv + "'");
        }
        apply_config_kv(cfg, kv.substr(0, eq), kv.substr(eq + 1));
    }
    cfg.validate();
    return cfg;
}

std::pair<EmbeddingModel, TrainReport> run_training(const CoocTable& table, const TrainConfig& cfg, std::string* log) {
    EpochCallback cb;
    if (log != nullptr) {
        *log = format_log_header();
        cb = [log](const EpochRecord& r) { *log += format_epoch(r); };
    }
    auto result = table.order() == 3 ? train_multiway(table, cfg, cb) : train(table, cfg, cb);
    if (log != nullptr) {
        *log += format_report(result.second);
    }
    return result;
}

int cmd_generate(const GenerateArgs& a, std::ostream& out) {
    if (a.out.empty()) {
        throw UsageError("generate: --out is required");
    }
    const std::string meta = a.meta.empty() ? sidecar_path_for(a.out) : a.meta;
    if (a.n_c > 0) {
        const auto syn = generate_synthetic3(a.n_a, a.n_b, a.n_c, a.seed, a.samples);
        save_cooc_table(syn.table, a.out);
        write_file_atomic(meta, format_sidecar(syn));
    } else {
        const auto syn = generate_synthetic(a.n_a, a.n_b, a.seed, a.samples);
        save_cooc_table(syn.table, a.out);
        write_file_atomic(meta, format_sidecar(syn));
    }
    out << "wrote " << a.out << " and " << meta << "\n";
    return kExitOk;
}

int cmd_train(const TrainConfig& cfg, const TrainArgs& a, std::ostream& out, std::ostream& err) {
    err << "# resolved config\n" << format_config(cfg);
    const CoocTable table = load_cooc_table(a.data, a.order);
    std::string log;
    auto [model, report] = run_training(table, cfg, a.log.empty() ? nullptr : &log);
    save_model(model, a.out);
    if (!a.log.empty()) {
        write_file_atomic(a.log, log);
    }
    out << "wrote " << a.out << " (main mi_term " << format_double(report.final_main.mi_term) << ", "
        << report.trace.size() << " epochs)\n";
    return kExitOk;
}

int cmd_eval(const EvalArgs& a, std::ostream& out, std::ostream& err) {
    const EmbeddingModel model = load_model(a.model);
    const CoocTable raw = load_cooc_table(a.data, model.order());
    const CoocTable weights = weights_for_model(model, raw);
    EvalOptions opts;
    opts.policy = a.bandwidth == "training" ? BandwidthPolicy::Training : BandwidthPolicy::RuleOfThumb;
    opts.measure = a.measure == "uniform" ? OuterMeasure::Uniform : OuterMeasure::Marginals;
    EvalReport report;
    if (a.dims.empty()) {
        report.rows.push_back(kl_eval(model, weights, opts));
    } else {
        // Other dimensions are trained afresh with the model's own configuration.
        const TrainConfig base = config_from_kv(model.config);
        for (int d : parse_int_list(a.dims, "--dims")) {
            bool same = true;
            for (int k = 0; k < model.order(); ++k) {
                same = same && model.dim(k) == d;
            }
            if (same) {
                report.rows.push_back(kl_eval(model, weights, opts));
                continue;
            }
            TrainConfig cfg = base;
            cfg.dims = {d};
            err << "training d=" << d << "\n";
            const auto trained = run_training(raw, cfg, nullptr);
            report.rows.push_back(kl_eval(trained.first, weights, opts));
        }
    }
    const std::string text = format_eval_report(report);
    if (a.out.empty()) {
        out << text;
    } else {
        write_file_atomic(a.out, text);
        out << "wrote " << a.out << "\n";
    }
    return kExitOk;
}

ToiQuery query_from_args(const QueryArgs& a) {
    if (!a.query.empty()) {
        if (!a.given.empty() || !a.target.empty()) {
            throw UsageError("query: use either --query or --given/--target");
        }
        try {
            return query_from_wire(wire_json::parse(read_file(a.query)));
        } catch (const nlohmann::json::exception& e) {
            throw UsageError("query: " + a.query + ": " + e.what());
        }
    }
    if (a.given.empty() || a.target.empty()) {
        throw UsageError("query: --given and --target are required without --query");
    }
    ToiQuery q;
    q.target_domain = a.target;
    q.grid_resolution = a.resolution;
    q.top_k = a.top_k;
    for (const auto& g : a.given) {
        const auto eq = g.find('=');
        if (eq == std::string::npos) {
            throw UsageError("--given expects domain=item, got '" + g + "'");
        }
        q.given.push_back({g.substr(0, eq), g.substr(eq + 1), std::nullopt});
    }
    return q;
}

int cmd_query(const QueryArgs& a, std::ostream& out) {
    const ToiQuery q = query_from_args(a);
    const EmbeddingModel model = load_model(a.model);
    const CoocTable raw = load_cooc_table(a.data, model.order());
    const QueryEngine engine(model, weights_for_model(model, raw));
    engine.validate(q);
    wire_json j;
    j["hash"] = model_hash(engine.model());
    j["query"] = to_wire(q);
    j["heatmap"] = to_wire(engine.heatmap(q), engine.model());
    j["ranked"] = to_wire(truncate(engine.rank_items(q), q.top_k));
    const std::string text = j.dump() + "\n";
    if (a.out.empty()) {
        out << text;
    } else {
        write_file_atomic(a.out, text);
        out << "wrote " << a.out << "\n";
    }
    return kExitOk;
}

int cmd_serve(const ServeArgs& a, std::ostream& err) {
    ServerOptions opts;
    opts.host = a.host;
    opts.port = a.port;
    opts.trail_path = a.trails;
    err << "listening on " << a.host << ":" << a.port << "\n";
    return serve(a.model, a.data, opts);
}

}

std::string sidecar_path_for(const std::string& table_path) {
    std::filesystem::path p(table_path);
    p.replace_extension(".meta");
    return p.string();
}

int run_cli(const std::vector<std::string>& args, std::ostream& out, std::ostream& err) {
    CLI::App app{"Mutual-information embeddings of co-occurrence data", kProgram};
    app.option_defaults()->always_capture_default();
    app.require_subcommand(1);
    app.set_version_flag("--version", "cooc-atlas 1.0");

    GenerateArgs ga;
    auto* gen = app.add_subcommand("generate", "write a synthetic co-occurrence table and its sidecar");
    gen->add_option("--n-a", ga.n_a, "items in domain A")->check(CLI::PositiveNumber);
    gen->add_option("--n-b", ga.n_b, "items in domain B")->check(CLI::PositiveNumber);
    gen->add_option("--n-c", ga.n_c, "items in domain C (0 = two domains)")->check(CLI::NonNegativeNumber);
    gen->add_option("--seed", ga.seed, "random seed");
    gen->add_option("--samples", ga.samples, "Bernoulli draws per cell")->check(CLI::PositiveNumber);
    gen->add_option("--out", ga.out, "table file to write")->required();
    gen->add_option("--meta", ga.meta, "sidecar file (default: --out with extension .meta)");

    TrainArgs ta;
    std::vector<std::pair<CLI::Option*, std::string>> keyed;
    auto* tr = app.add_subcommand("train", "train an embedding");
    add_train_flags(tr, ta, keyed);

    EvalArgs ea;
    auto* ev = app.add_subcommand("eval", "KL evaluation of a model, or of fresh trainings per dimension");
    ev->add_option("--model", ea.model, "model file")->required();
    ev->add_option("--data", ea.data, "raw table the model was trained on")->required();
    ev->add_option("--dims", ea.dims, "retrain at each listed dimension and evaluate (e.g. 2,3,4)");
    ev->add_option("--bandwidth", ea.bandwidth, "evaluation bandwidths")->check(CLI::IsMember({"rule", "training"}));
    ev->add_option("--measure", ea.measure, "outer measure of the KL sum")
        ->check(CLI::IsMember({"marginals", "uniform"}));
    ev->add_option("--out", ea.out, "report file (default: standard output)");

    QueryArgs qa;
    auto* qu = app.add_subcommand("query", "one conditional (CbCP) query to JSON");
    qu->add_option("--model", qa.model, "model file")->required();
    qu->add_option("--data", qa.data, "raw table the model was trained on")->required();
    qu->add_option("--query", qa.query, "query JSON file");
    qu->add_option("--given", qa.given, "conditioning item domain=item (repeatable)");
    qu->add_option("--target", qa.target, "target domain");
    qu->add_option("--resolution", qa.resolution, "heatmap cells per axis");
    qu->add_option("--top-k", qa.top_k, "ranked items to return");
    qu->add_option("--out", qa.out, "output file (default: standard output)");

    ServeArgs sa;
    auto* sv = app.add_subcommand("serve", "serve a model over HTTP");
    sv->add_option("--model", sa.model, "model file")->required();
    sv->add_option("--data", sa.data, "raw table the model was trained on")->required();
    sv->add_option("--host", sa.host, "bind address");
    sv->add_option("--port", sa.port, "TCP port")->check(CLI::Range(0, 65535));
    sv->add_option("--trails", sa.trails, "trail session log (default: in memory)");

    std::vector<std::string> reversed(args.rbegin(), args.rend());
    try {
        app.parse(reversed);
    } catch (const CLI::ParseError& e) {
        const int code = app.exit(e, out, err);
        return code == 0 ? kExitOk : kExitUsage;
    }

    try {
        apply_thread_cap();
        if (gen->parsed()) {
            return cmd_generate(ga, out);
        }
        if (tr->parsed()) {
            return cmd_train(resolve_config(ta, keyed), ta, out, err);
        }
        if (ev->parsed()) {
            return cmd_eval(ea, out, err);
        }
        if (qu->parsed()) {
            return cmd_query(qa, out);
        }
        return cmd_serve(sa, err);
    } catch (const UsageError& e) {
        err << "error: " << e.what() << "\n";
        return kExitUsage;
    } catch (const DataError& e) {
        err << "error: " << e.what() << "\n";
        return kExitData;
    } catch (const NumericalError& e) {
        err << "error: " << e.what() << "\n";
        return kExitNumerical;
    }
}

int run_cli(int argc, const char* const* argv) {
    std::vector<std::string> args(argv + 1, argv + argc);
    return run_cli(args, std::cout, std::cerr);
}

}
