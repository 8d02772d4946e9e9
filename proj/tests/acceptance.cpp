// End-to-end acceptance checks. Prints one PASS/FAIL line per criterion and
// exits non-zero when any fails. Arguments select criteria by name.
//
// COOC_ATLAS_CI=1 doubles the wall-clock limit of the scale run.

#include "cooc_atlas/cli.hpp"
#include "cooc_atlas/diffusion.hpp"
#include "cooc_atlas/eval.hpp"
#include "cooc_atlas/objective.hpp"
#include "cooc_atlas/pu.hpp"
#include "cooc_atlas/query.hpp"
#include "cooc_atlas/rng.hpp"
#include "cooc_atlas/synthetic.hpp"
#include "cooc_atlas/trainer.hpp"
#include "fixtures.hpp"
#include "oracles.hpp"

#include <algorithm>
#include <chrono>
#include <cmath>
#include <cstdio>
#include <cstdlib>
#include <filesystem>
#include <functional>
#include <optional>
#include <sstream>
#include <string>
#include <vector>

using namespace cooc_atlas;

namespace {

struct Outcome {
    bool pass = true;
    std::string detail;

    void require(bool ok, const std::string& what) {
        if (!ok) {
            pass = false;
            detail += (detail.empty() ? "" : "; ") + ("failed: " + what);
        }
    }
    void note(const std::string& s) { detail += (detail.empty() ? "" : "; ") + s; }
};

std::string fmt(const char* f, double v) {
    char buf[64];
    std::snprintf(buf, sizeof buf, f, v);
    return buf;
}

double seconds_since(std::chrono::steady_clock::time_point t0) {
    return std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
}

// ---- gradient correctness ----

double objective_value(const std::vector<Eigen::MatrixXd>& X, const std::vector<double>& s, const TrainingWeights& w,
                       ObjectiveSpec spec, double lambda) {
    ObjectiveOptions o;
    o.with_gradient = false;
    return evaluate_objective(X, s, w, spec, lambda, RegNorm::L2, o).value.total;
}

// Largest |fd - analytic| relative to the largest analytic entry.
double gradient_error(const std::vector<Eigen::MatrixXd>& X0, const std::vector<double>& s, const TrainingWeights& w,
                      ObjectiveSpec spec, double lambda) {
    const auto g = evaluate_objective(X0, s, w, spec, lambda, RegNorm::L2).gradient;
    double scale = 0;
    for (const auto& G : g.grads) {
        scale = std::max(scale, G.cwiseAbs().maxCoeff());
    }
    double worst = 0;
    for (std::size_t d = 0; d < X0.size(); ++d) {
        const double h = 1e-5 * s[d];
        for (long i = 0; i < X0[d].rows(); ++i) {
            for (long a = 0; a < X0[d].cols(); ++a) {
                auto Xp = X0, Xm = X0;
                Xp[d](i, a) += h;
                Xm[d](i, a) -= h;
                const double fd = (objective_value(Xp, s, w, spec, lambda) - objective_value(Xm, s, w, spec, lambda)) / (2 * h);
                worst = std::max(worst, std::abs(fd - g.grads[d](i, a)) / std::max(scale, 1e-300));
            }
        }
    }
    return worst;
}

Outcome gradients() {
    Outcome out;
    Rng rng(2024);
    double worst = 0;
    for (int n = 0; n < 20; ++n) {
        const int order = n % 4 == 3 ? 3 : 2;
        const bool use_c = n % 2 == 1;
        const int dim = 1 + n % 3;
        std::array<std::size_t, 3> shape{3 + rng.next() % 6, 3 + rng.next() % 6, order == 3 ? 3 + rng.next() % 6 : 1};
        auto t = oracle::random_table(rng, shape, order, 0.6);
        if (use_c) {
            t = estimate_pu(t);
        }
        std::vector<Eigen::MatrixXd> X;
        std::vector<double> s;
        for (int d = 0; d < order; ++d) {
            X.push_back(oracle::random_coords(rng, static_cast<long>(shape[d]), dim, 0.5));
            s.push_back(0.2 + 0.1 * rng.uniform());
        }
        const auto w = make_training_weights(t, use_c);
        worst = std::max(worst, gradient_error(X, s, w, ObjectiveSpec::main(), 0.01));
        worst = std::max(worst, gradient_error(X, s, w, ObjectiveSpec::aux(n % order), 0.01));
    }
    out.require(worst < 1e-4, "max relative error < 1e-4");
    out.note("20 instances, max rel err " + fmt("%.2e", worst));
    return out;
}

// ---- inequality (Jensen) check ----

EmbeddingModel make_model(const CoocTable& t, std::vector<Eigen::MatrixXd> X, std::vector<double> s) {
    EmbeddingModel m;
    m.domains = t.domains();
    m.coords = std::move(X);
    m.bandwidths = std::move(s);
    m.use_c = true;
    m.table_hash = table_hash(t);
    m.validate();
    return m;
}

Outcome jensen() {
    Outcome out;
    Rng rng(5);
    double min_slack = 1e300;
    for (int n = 0; n < 10; ++n) {
        const std::size_t na = 2 + rng.next() % 3, nb = 2 + rng.next() % 3;
        const auto t = estimate_pu(oracle::random_table(rng, {na, nb, 1}, 2, 0.6));
        const double s = 0.2 + 0.1 * (n % 4);
        const auto m = make_model(t,
                                  {oracle::random_coords(rng, static_cast<long>(na), 1, 1.0),
                                   oracle::random_coords(rng, static_cast<long>(nb), 1, 1.0)},
                                  {s, s});
        BoundOptions o;
        o.points_per_axis = 512;
        const auto bc = jensen_bound_check(m, t, o);
        min_slack = std::min(min_slack, bc.slack);
    }
    out.require(min_slack >= -1e-3, "slack >= -1e-3 on all instances");
    const auto t = estimate_pu(oracle::random_table(rng, {4, 4, 1}, 2, 0.6));
    const auto coincident = make_model(t, {Eigen::MatrixXd::Zero(4, 1), Eigen::MatrixXd::Zero(4, 1)}, {0.5, 0.5});
    const double cs = jensen_bound_check(coincident, t).slack;
    out.require(std::abs(cs) <= 1e-3, "coincident |slack| <= 1e-3");
    out.note("min slack " + fmt("%.3e", min_slack) + ", coincident slack " + fmt("%.1e", cs));
    return out;
}

// ---- PU estimator ----

Outcome pu() {
    Outcome out;
    const PuConfig defaults;
    out.require(defaults.alpha == 1.0 && defaults.beta == 10.0, "defaults alpha = 1, beta = 10");
    struct Row {
        double n1, n0, alpha, beta, want;
    };
    const Row rows[] = {{5, 5, 1, 10, 6.0 / 21}, {0, 0, 1, 10, 1.0 / 11}, {10, 0, 1, 1, 11.0 / 12},
                        {0, 10, 2, 3, 2.0 / 15}, {3, 7, 1, 1, 4.0 / 12}};
    for (const auto& r : rows) {
        const double got = pu_posterior(r.n1, r.n0, PuConfig{r.alpha, r.beta});
        out.require(std::abs(got - r.want) <= 1e-15, "MAP (" + fmt("%g", r.n1) + ", " + fmt("%g", r.n0) + ")");
    }
    const auto uniform = fixture::table2({{1, 1}, {1, 1}});
    const auto n0 = estimate_negative_counts(uniform, defaults);
    for (std::uint64_t key = 0; key < 4; ++key) {
        out.require(std::abs(n0(key) - 10.0) <= 1e-12, "uniform 2x2 N0 = 10");
    }
    const auto withpu = estimate_pu(uniform);
    out.require(std::abs(withpu.cooc_prob(0) - (1 + 1.0) / (1 + 10 + 1 + 10)) <= 1e-15, "uniform 2x2 P(c=1|t)");
    out.note("P(c=1 | 5, 5) = " + fmt("%.6f", pu_posterior(5, 5, defaults)));
    return out;
}

// ---- Markov diffusion ----

std::vector<std::vector<double>> diffuse2_oracle(const std::vector<std::vector<double>>& P) {
    const std::size_t na = P.size(), nb = P[0].size();
    std::vector<double> pa(na, 0.0), pb(nb, 0.0);
    for (std::size_t i = 0; i < na; ++i) {
        for (std::size_t j = 0; j < nb; ++j) {
            pa[i] += P[i][j];
            pb[j] += P[i][j];
        }
    }
    std::vector<std::vector<double>> out(na, std::vector<double>(nb, 0.0));
    for (std::size_t i = 0; i < na; ++i) {
        for (std::size_t j = 0; j < nb; ++j) {
            for (std::size_t i2 = 0; i2 < na; ++i2) {
                for (std::size_t j2 = 0; j2 < nb; ++j2) {
                    out[i][j] += (P[i2][j] / pa[i2]) * (P[i2][j2] / pb[j2]) * (P[i][j2] / pa[i]) * pa[i];
                }
            }
        }
    }
    return out;
}

Outcome diffusion() {
    Outcome out;
    Rng rng(17);
    const auto t = oracle::random_table(rng, {5, 4, 1}, 2, 0.7);
    out.require(format_cooc_table(markov_diffuse(t, 1)) == format_cooc_table(t), "m = 1 is the identity");

    const auto uniform = fixture::table2({{1, 1, 1}, {1, 1, 1}});
    const auto u3 = markov_diffuse(uniform, 3);
    for (std::uint64_t key = 0; key < 6; ++key) {
        out.require(std::abs(u3.joint_prob(key) - 1.0 / 6) <= 1e-15, "uniform fixed point");
    }

    const std::vector<std::vector<double>> P{{3, 1, 0, 0}, {2, 2, 0, 0}, {0, 0, 1, 4}, {0, 0, 2, 1}};
    std::vector<std::vector<double>> Pn = P;
    double total = 0;
    for (const auto& r : P) {
        for (double v : r) {
            total += v;
        }
    }
    for (auto& r : Pn) {
        for (double& v : r) {
            v /= total;
        }
    }
    const auto want = diffuse2_oracle(Pn);
    const auto d = markov_diffuse(fixture::table2(P), 2);
    double err = 0, cross = 0, block = 0, block_in = 0;
    for (std::size_t i = 0; i < 4; ++i) {
        for (std::size_t j = 0; j < 4; ++j) {
            const double got = d.joint_prob(d.key(i, j));
            err = std::max(err, std::abs(got - want[i][j]));
            if ((i < 2) != (j < 2)) {
                cross += got;
            }
            if (i < 2 && j < 2) {
                block += got;
                block_in += Pn[i][j];
            }
        }
    }
    out.require(err <= 1e-14, "block-diagonal matches the quadruple-sum oracle");
    out.require(cross == 0.0 && std::abs(block - block_in) <= 1e-14, "block mass conserved");

    double worst = 0;
    for (int n = 0; n < 50; ++n) {
        const int order = n % 5 == 4 ? 3 : 2;
        const std::size_t na = 2 + rng.next() % 7, nb = 2 + rng.next() % 7, nc = order == 3 ? 2 + rng.next() % 3 : 1;
        const auto r = oracle::random_table(rng, {na, nb, nc}, order, 0.5);
        const auto rd = markov_diffuse(r, 2 + n % 3);
        worst = std::max(worst, std::abs(rd.total_count() - r.total_count()) / r.total_count());
    }
    out.require(worst <= 1e-9, "mass conserved to 1e-9 on 50 random tables");
    out.note("oracle err " + fmt("%.1e", err) + ", worst mass drift " + fmt("%.1e", worst));
    return out;
}

// ---- synthetic recovery, dimension trend, ascent ----

double pearson(const std::vector<double>& x, const std::vector<double>& y) {
    const double n = static_cast<double>(x.size());
    double sx = 0, sy = 0;
    for (std::size_t i = 0; i < x.size(); ++i) {
        sx += x[i];
        sy += y[i];
    }
    const double mx = sx / n, my = sy / n;
    double sxy = 0, sxx = 0, syy = 0;
    for (std::size_t i = 0; i < x.size(); ++i) {
        sxy += (x[i] - mx) * (y[i] - my);
        sxx += (x[i] - mx) * (x[i] - mx);
        syy += (y[i] - my) * (y[i] - my);
    }
    return sxy / std::sqrt(sxx * syy);
}

// Interior local maxima whose topographic prominence is at least `frac` of the
// profile's range.
int prominent_peaks(const std::vector<double>& p, double frac) {
    const double lo = *std::min_element(p.begin(), p.end()), hi = *std::max_element(p.begin(), p.end());
    const double need = frac * (hi - lo);
    int peaks = 0;
    for (std::size_t b = 1; b + 1 < p.size(); ++b) {
        if (!(p[b] > p[b - 1] && p[b] >= p[b + 1])) {
            continue;
        }
        double left = p[b], right = p[b];
        for (std::size_t k = b; k-- > 0 && p[k] <= p[b];) {
            left = std::min(left, p[k]);
        }
        for (std::size_t k = b + 1; k < p.size() && p[k] <= p[b]; ++k) {
            right = std::min(right, p[k]);
        }
        if (p[b] - std::max(left, right) >= need) {
            ++peaks;
        }
    }
    return peaks;
}

struct SyntheticRun {
    SyntheticData syn = generate_synthetic(50, 50, 7, 100);
    std::optional<std::pair<EmbeddingModel, TrainReport>> d2;
    double d2_seconds = 0;

    const std::pair<EmbeddingModel, TrainReport>& trained() {
        if (!d2) {
            const auto t0 = std::chrono::steady_clock::now();
            d2 = train(syn.table, TrainConfig{});
            d2_seconds = seconds_since(t0);
        }
        return *d2;
    }
};

SyntheticRun& synthetic_run() {
    static SyntheticRun run;
    return run;
}

Outcome recovery() {
    Outcome out;
    auto& run = synthetic_run();
    const auto t0 = std::chrono::steady_clock::now();
    const auto& model = run.trained().first;
    const auto weights = weights_for_model(model, run.syn.table);
    const auto q1 = model_cooc_prob(model.coords, model.bandwidths, weights);
    std::vector<double> truth, got;
    for (std::size_t i = 0; i < 50; ++i) {
        for (std::size_t j = 0; j < 50; ++j) {
            truth.push_back(run.syn.truth(i, j));
            got.push_back(q1[weights.key(i, j)]);
        }
    }
    const double corr = pearson(truth, got);
    out.require(corr >= 0.8, "correlation >= 0.8");

    // Band column nearest the spot's v; its conditional over A should show
    // both the ridge (u ~ v) and the spot (u ~ spot_u).
    const auto& prm = run.syn.params;
    std::size_t col = 0;
    double best = 1e300;
    for (std::size_t j = 0; j < 50; ++j) {
        const double v = run.syn.latent_b[j];
        if (v >= prm.band_lo && v <= prm.band_hi && std::abs(v - prm.spot_v) < best) {
            best = std::abs(v - prm.spot_v);
            col = j;
        }
    }
    const QueryEngine engine(model, weights);
    ToiQuery q;
    q.given.push_back({"B", model.domains[1].items()[col], std::nullopt});
    q.target_domain = "A";
    q.grid_resolution = 16;
    const auto ranked = engine.rank_items(q);
    std::vector<double> sum(10, 0.0), cnt(10, 0.0);
    for (const auto& r : ranked) {
        const int bin = std::min(9, static_cast<int>(run.syn.latent_a[r.index] * 10));
        sum[bin] += r.score;
        cnt[bin] += 1;
    }
    std::vector<double> profile;
    for (int b = 0; b < 10; ++b) {
        if (cnt[b] > 0) {
            profile.push_back(sum[b] / cnt[b]);
        }
    }
    const int peaks = prominent_peaks(profile, 0.25);
    out.require(peaks >= 2, "conditional of a band column is non-unimodal");
    const double secs = run.d2_seconds + seconds_since(t0);
    out.require(secs < 300, "runtime < 5 min");
    out.note("corr " + fmt("%.4f", corr) + ", peaks " + std::to_string(peaks) + " (column v=" +
             fmt("%.3f", run.syn.latent_b[col]) + ")");
    out.note(fmt("%.1fs", secs));
    return out;
}

Outcome dimension_trend() {
    Outcome out;
    auto& run = synthetic_run();
    const auto t0 = std::chrono::steady_clock::now();
    const auto& m2 = run.trained().first;
    TrainConfig c4;
    c4.dims = {4};
    const auto m4 = train(run.syn.table, c4).first;
    const auto w = weights_for_model(m2, run.syn.table);
    const double kl2 = kl_eval(m2, w).kl, kl4 = kl_eval(m4, w).kl;
    out.require(kl4 <= kl2, "KL(d=4) <= KL(d=2)");
    const double secs = run.d2_seconds + seconds_since(t0);
    out.require(secs < 900, "runtime < 15 min");
    out.note("KL d=2 " + fmt("%.5f", kl2) + ", d=4 " + fmt("%.5f", kl4) + ", " + fmt("%.1fs", secs));
    return out;
}

Outcome ascent() {
    Outcome out;
    auto& run = synthetic_run();
    const auto& [model, report] = run.trained();
    out.require(report.final_main.mi_term >= report.initial_main.mi_term, "main-phase mi_term final >= initial");
    const auto again = train(run.syn.table, TrainConfig{});
    out.require(format_model(again.first) == format_model(model), "two pca runs are byte-identical");
    out.note("mi_term " + fmt("%.5f", report.initial_main.mi_term) + " -> " + fmt("%.5f", report.final_main.mi_term));
    return out;
}

// ---- scale ----

Outcome scale() {
    Outcome out;
    const double limit = std::getenv("COOC_ATLAS_CI") ? 960 : 480;
    const auto t0 = std::chrono::steady_clock::now();
    // Three Bernoulli draws per cell: with one draw the ridge is too sparse to
    // move the embedding away from its initialization.
    const auto syn = generate_synthetic3(200, 200, 200, 7, 3);
    TrainConfig cfg;
    cfg.warmup_iters = 100;
    cfg.main_iters = 100;
    const auto [model, report] = train_multiway(syn.table, cfg);
    const double secs = seconds_since(t0);
    out.require(static_cast<int>(report.trace.size()) == 200, "200 iterations");
    out.require(secs < limit, "runtime < " + fmt("%.0f", limit) + " s");
    out.note("200x200x200, " + std::to_string(syn.table.entries().size()) + " nonzeros, " + fmt("%.1fs", secs) +
             " (train " + fmt("%.1fs", report.seconds) + "), main mi_term " +
             fmt("%.3e", report.initial_main.mi_term) + " -> " + fmt("%.3e", report.final_main.mi_term) + ", total " +
             fmt("%.3e", report.initial_main.total) + " -> " + fmt("%.3e", report.final_main.total));
    return out;
}

// ---- round trips ----

Outcome round_trips() {
    Outcome out;
    namespace fs = std::filesystem;
    const fs::path dir = fs::temp_directory_path() / "cooc_atlas_acceptance";
    fs::remove_all(dir);
    fs::create_directories(dir);
    auto p = [&](const char* name) { return (dir / name).string(); };

    for (const auto& t : {generate_synthetic(30, 20, 3, 5).table, generate_synthetic3(10, 11, 12, 3, 2).table}) {
        const std::string text = format_cooc_table(t);
        save_cooc_table(t, p("t.tsv"));
        const auto back = load_cooc_table(p("t.tsv"), t.order());
        out.require(read_file(p("t.tsv")) == text && format_cooc_table(back) == text, "table text round trip");
    }

    const auto& model = synthetic_run().trained().first;
    save_model(model, p("m.emb"));
    const std::string mtext = read_file(p("m.emb"));
    out.require(format_model(load_model(p("m.emb"))) == mtext, "model file round trip");

    std::ostringstream sink;
    auto cli = [&](std::vector<std::string> args) { return run_cli(args, sink, sink); };
    bool ok = cli({"generate", "--n-a", "50", "--n-b", "50", "--seed", "7", "--out", p("syn.tsv")}) == 0;
    write_file_atomic(p("train.cfg"), "init=pca\n");
    ok = ok && cli({"train", "--config", p("train.cfg"), "--data", p("syn.tsv"), "--out", p("a.emb")}) == 0;
    ok = ok && cli({"train", "--config", p("train.cfg"), "--data", p("syn.tsv"), "--out", p("b.emb")}) == 0;
    out.require(ok, "cli runs exit 0");
    out.require(ok && read_file(p("a.emb")) == read_file(p("b.emb")), "cli train twice gives byte-identical models");
    fs::remove_all(dir);
    out.note("tables (2 and 3 domains), model file, cli determinism");
    return out;
}

}

int main(int argc, char** argv) {
    const std::vector<std::pair<std::string, std::function<Outcome()>>> criteria = {
        {"gradients", gradients},   {"jensen", jensen},   {"pu", pu},         {"diffusion", diffusion},
        {"recovery", recovery},     {"dim-trend", dimension_trend}, {"ascent", ascent},
        {"scale", scale},           {"round-trips", round_trips},
    };
    std::vector<std::string> only(argv + 1, argv + argc);
    bool all = true;
    for (const auto& [name, fn] : criteria) {
        if (!only.empty() && std::find(only.begin(), only.end(), name) == only.end()) {
            continue;
        }
        const auto t0 = std::chrono::steady_clock::now();
        Outcome o;
        try {
            o = fn();
        } catch (const std::exception& e) {
            o.pass = false;
            o.note(std::string("exception: ") + e.what());
        }
        all = all && o.pass;
        std::printf("%s %s: %s [%.1fs]\n", o.pass ? "PASS" : "FAIL", name.c_str(), o.detail.c_str(), seconds_since(t0));
        std::fflush(stdout);
    }
    return all ? 0 : 1;
}
