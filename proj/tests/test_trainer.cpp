#include <doctest.h>

#include "cooc_atlas/errors.hpp"
#include "cooc_atlas/synthetic.hpp"
#include "cooc_atlas/trainer.hpp"
#include "fixtures.hpp"
#include "oracles.hpp"

#include <cmath>

using namespace cooc_atlas;

namespace {

TrainConfig quick(int warmup = 20, int main = 20) {
    TrainConfig cfg;
    cfg.warmup_iters = warmup;
    cfg.main_iters = main;
    return cfg;
}

double sample_std(const Eigen::VectorXd& x) {
    const double mean = x.mean();
    return std::sqrt((x.array() - mean).square().sum() / static_cast<double>(x.size() - 1));
}

}

TEST_CASE("config key=value round trip") {
    TrainConfig cfg;
    cfg.dims = {2, 3};
    cfg.lambda = 0.125;
    cfg.reg = RegNorm::Linf;
    cfg.pu = {2.0, 7.5};
    cfg.diffusion_steps = 3;
    cfg.use_c = false;
    cfg.init = InitMethod::Gaussian;
    cfg.init_scale_frac = 0.02;
    cfg.sigma.kind = SigmaPolicy::Kind::Fixed;
    cfg.sigma.initial = 0.3;
    cfg.sigma.fraction = 0.1;
    cfg.warmup_iters = 7;
    cfg.main_iters = 9;
    cfg.step_size = 0.1;
    cfg.noise_frac = 0.25;
    cfg.seed = 42;
    cfg.log_gap = false;
    const auto text = format_config(cfg);
    const auto back = parse_config(text);
    CHECK(format_config(back) == text);
    CHECK(back.dims == std::vector<int>{2, 3});
    CHECK(back.reg == RegNorm::Linf);
    CHECK(back.pu.beta == 7.5);
    CHECK(back.seed == 42);
    CHECK(config_keys().size() == config_to_kv(cfg).size());
}

TEST_CASE("config rejects unknown keys and bad values") {
    CHECK_THROWS_AS(parse_config("nope=1\n"), UsageError);
    CHECK_THROWS_AS(parse_config("lambda=abc\n"), UsageError);
    CHECK_THROWS_AS(parse_config("use_c=maybe\n"), UsageError);
    CHECK_THROWS_AS(parse_config("just text\n"), UsageError);
    TrainConfig cfg;
    cfg.init_scale_frac = 0.2;
    CHECK_THROWS_AS(cfg.validate(), UsageError);
    cfg.init_scale_frac = 0.01;
    CHECK_NOTHROW(cfg.validate());
    cfg.lambda = -1;
    CHECK_THROWS_AS(cfg.validate(), UsageError);
    // Comments and blank lines are fine.
    CHECK(parse_config("# c\n\n lambda = 0.5 \n").lambda == 0.5);
}

TEST_CASE("noise amplitude follows the linear schedule exactly") {
    TrainConfig cfg;
    cfg.init = InitMethod::Gaussian;
    cfg.warmup_iters = 30;
    cfg.main_iters = 70;
    const double a0 = cfg.noise_frac * cfg.sigma.initial / 10;
    CHECK(cfg.noise_amplitude(0) == a0);
    CHECK(cfg.noise_amplitude(50) == a0 * 0.5);
    CHECK(cfg.noise_amplitude(100) == 0.0);
    cfg.init = InitMethod::Pca;
    CHECK(cfg.noise_amplitude(0) == 0.0);

    const auto syn = generate_synthetic(12, 12, 3, 20);
    cfg.init = InitMethod::Gaussian;
    cfg.warmup_iters = 4;
    cfg.main_iters = 4;
    const auto [m, rep] = train(syn.table, cfg);
    for (const auto& rec : rep.trace) {
        CHECK(rec.noise == cfg.noise_amplitude(rec.epoch));
    }
}

TEST_CASE("gaussian init: deterministic, spread within 20 percent") {
    const auto syn = generate_synthetic(200, 220, 11, 5);
    TrainConfig cfg;
    cfg.init = InitMethod::Gaussian;
    cfg.seed = 5;
    const auto a = init_embeddings(syn.table, cfg);
    const auto b = init_embeddings(syn.table, cfg);
    const double target = cfg.init_scale_frac * cfg.sigma.initial;
    for (int d = 0; d < 2; ++d) {
        CHECK(a.coords[d] == b.coords[d]);
        for (int c = 0; c < 2; ++c) {
            const double s = sample_std(a.coords[d].col(c));
            CHECK(s > 0.8 * target);
            CHECK(s < 1.2 * target);
        }
    }
    cfg.seed = 6;
    CHECK(init_embeddings(syn.table, cfg).coords[0] != a.coords[0]);
}

TEST_CASE("pca init: rank-one table leaves the second axis at zero") {
    // x y^T has rank one, and so does its double-centred version.
    const std::vector<double> x{1, 2, 3, 4}, y{1, 5, 2, 2, 1};
    std::vector<std::vector<double>> P(4, std::vector<double>(5));
    std::vector<std::vector<double>> Q = P;
    for (int i = 0; i < 4; ++i) {
        for (int j = 0; j < 5; ++j) {
            P[i][j] = x[i] * y[j];
            // Rank one after centring: independent part plus a rank-one interaction.
            Q[i][j] = x[i] * y[j] + (i - 1.5) * (j - 2.0) * 0.3 + 3;
        }
    }
    const auto outer = pca_coordinates(fixture::table2(P), {2, 2});
    CHECK(outer.rescued_axes == std::vector<int>{1, 1});
    CHECK(outer.coords[0].col(1).isZero(0));
    CHECK(outer.coords[1].col(1).isZero(0));
    // Constant table: the centred matrix vanishes and every axis is rescued.
    const auto flat = pca_coordinates(fixture::table2({{1, 1, 1}, {1, 1, 1}}), {2, 2});
    CHECK(flat.rescued_axes == std::vector<int>{2, 2});
    CHECK(flat.coords[0].isZero(0));

    const auto t = fixture::table2(Q);
    const auto r = pca_coordinates(t, {2, 2});
    CHECK(r.rescued_axes == std::vector<int>{1, 1});
    CHECK(r.coords[0].col(1).isZero(0));
    CHECK(r.coords[1].col(1).isZero(0));
    CHECK(r.coords[0].col(0).norm() > 0);

    TrainConfig cfg;
    const auto init = init_embeddings(t, cfg);
    CHECK(init.rescued_axes == std::vector<int>{1, 1});
    CHECK(init.coords[0].col(1).norm() > 0);
    // First axis rescaled to the configured spread (population std).
    const auto& c0 = init.coords[0].col(0);
    const double pop = std::sqrt((c0.array() - c0.mean()).square().mean());
    CHECK(pop == doctest::Approx(cfg.init_scale_frac * cfg.sigma.initial).epsilon(1e-12));

    cfg.warmup_iters = 1;
    cfg.main_iters = 1;
    CHECK(train(t, cfg).second.pca_rank_deficient);
}

TEST_CASE("pca init, three domains: rank-one unfolding") {
    // a-mode unfolding of T_ijk = x_i y_jk + const has rank one after centring.
    std::vector<std::vector<std::vector<double>>> T(3, std::vector<std::vector<double>>(3, std::vector<double>(4)));
    for (int i = 0; i < 3; ++i) {
        for (int j = 0; j < 3; ++j) {
            for (int k = 0; k < 4; ++k) {
                T[i][j][k] = 1 + (i == 0 ? 1.0 : 0.0) * (j + 2 * k);
            }
        }
    }
    const auto r = pca_coordinates(fixture::table3(T), {2, 2, 2});
    CHECK(r.rescued_axes[0] == 1);
    CHECK(r.coords[0].col(1).isZero(0));
}

TEST_CASE("phase ordering and trace length") {
    const auto syn = generate_synthetic(15, 12, 2, 20);
    auto cfg = quick(7, 5);
    int calls = 0;
    const auto [m, rep] = train(syn.table, cfg, [&](const EpochRecord&) { ++calls; });
    REQUIRE(rep.trace.size() == 12);
    CHECK(calls == 12);
    for (int t = 0; t < 12; ++t) {
        CHECK(rep.trace[t].epoch == t);
        CHECK(rep.trace[t].phase == (t < 7 ? Phase::Aux : Phase::Main));
        CHECK(std::isfinite(rep.trace[t].gap));
    }
    CHECK(rep.trace[0].aux_terms.size() == 2);
    CHECK_FALSE(rep.early_stopped);
    CHECK(m.coords[0].rows() == 15);
    CHECK(m.coords[1].rows() == 12);
    CHECK(m.bandwidths == rep.final_bandwidths);
    // The report text has one line per epoch after the header.
    const auto log = format_report(rep);
    CHECK(log.rfind(format_log_header(), 0) == 0);
    CHECK(log.find("7\tmain\t") != std::string::npos);
}

TEST_CASE("sigma policy: initial at epoch 0, variance fraction with floor afterwards") {
    const auto syn = generate_synthetic(20, 20, 4, 30);
    auto cfg = quick(3, 3);
    const auto [m, rep] = train(syn.table, cfg);
    CHECK(rep.trace[0].sigmas == std::vector<double>{0.2, 0.2});
    for (std::size_t t = 1; t < rep.trace.size(); ++t) {
        for (double s : rep.trace[t].sigmas) {
            CHECK(s >= cfg.sigma.floor());
        }
    }
    cfg.sigma.kind = SigmaPolicy::Kind::Fixed;
    const auto fixed = train(syn.table, cfg).second;
    for (const auto& rec : fixed.trace) {
        CHECK(rec.sigmas == std::vector<double>{0.2, 0.2});
    }
}

TEST_CASE("pca training is bit-for-bit deterministic") {
    const auto syn = generate_synthetic(20, 18, 9, 30);
    const auto cfg = quick(10, 10);
    const auto a = train(syn.table, cfg).first;
    const auto b = train(syn.table, cfg).first;
    CHECK(format_model(a) == format_model(b));
    auto g = cfg;
    g.init = InitMethod::Gaussian;
    g.seed = 3;
    CHECK(format_model(train(syn.table, g).first) == format_model(train(syn.table, g).first));
}

TEST_CASE("domain swap equivariance on the pca path") {
    const auto syn = generate_synthetic(14, 11, 21, 40);
    auto cfg = quick(15, 15);
    cfg.dims = {2, 3};
    const auto a = train(syn.table, cfg).first;
    auto swapped = cfg;
    swapped.dims = {3, 2};
    const auto b = train(fixture::transpose(syn.table), swapped).first;
    CHECK((a.coords[0] - b.coords[1]).cwiseAbs().maxCoeff() < 1e-9);
    CHECK((a.coords[1] - b.coords[0]).cwiseAbs().maxCoeff() < 1e-9);
}

TEST_CASE("ascent and bounded coordinates on the synthetic benchmark") {
    const auto syn = generate_synthetic(50, 50, 7, 100);
    const auto [m, rep] = train(syn.table, TrainConfig{});
    CHECK(rep.final_main.mi_term >= rep.initial_main.mi_term);
    for (int d = 0; d < 2; ++d) {
        CHECK(m.coords[d].rowwise().norm().maxCoeff() < 100 * m.bandwidths[d]);
    }
    REQUIRE(rep.final_main.breakdown.has_value());
    const auto& b = *rep.final_main.breakdown;
    CHECK(b.conditional_mi + b.label_mi[0] + b.label_mi[1] == doctest::Approx(rep.final_main.mi_term).epsilon(1e-9));
}

TEST_CASE("linf regularization clips to the unit box") {
    const auto syn = generate_synthetic(15, 15, 1, 30);
    auto cfg = quick(10, 10);
    cfg.reg = RegNorm::Linf;
    cfg.sigma.kind = SigmaPolicy::Kind::Fixed;
    cfg.sigma.initial = 2.0;
    cfg.step_size = 50;
    const auto [m, rep] = train(syn.table, cfg);
    for (const auto& X : m.coords) {
        CHECK(X.cwiseAbs().maxCoeff() <= 1.0);
    }
    CHECK(rep.trace.back().value.reg_term == 0.0);
}

TEST_CASE("dims mismatch is a usage error") {
    const auto syn = generate_synthetic(10, 10, 1, 40);
    auto cfg = quick(1, 1);
    cfg.dims = {2, 2, 2};
    CHECK_THROWS_AS(train(syn.table, cfg), UsageError);
    CHECK_THROWS_AS(train_multiway(syn.table, quick(1, 1)), UsageError);
}

TEST_CASE("multiway: single atom gives zero objective") {
    const auto t = fixture::table3({{{5.0}}}, 1);
    auto cfg = quick(5, 5);
    cfg.use_c = false;
    const auto [m, rep] = train_multiway(t, cfg);
    CHECK(rep.final_main.mi_term == doctest::Approx(0.0).scale(1.0).epsilon(1e-12));
    CHECK(m.coords.size() == 3);
}

TEST_CASE("multiway: separable tensor matches the two-domain run") {
    Rng rng(17);
    const auto pair = oracle::random_table(rng, {6, 5, 1}, 2, 0.5);
    const std::vector<double> pk{0.1, 0.3, 0.2, 0.4};
    std::vector<std::vector<std::vector<double>>> T(6, std::vector<std::vector<double>>(5, std::vector<double>(4)));
    for (std::size_t i = 0; i < 6; ++i) {
        for (std::size_t j = 0; j < 5; ++j) {
            for (std::size_t k = 0; k < 4; ++k) {
                T[i][j][k] = pair.joint_prob(pair.key(i, j)) * pk[k];
            }
        }
    }
    auto cfg = quick(40, 40);
    cfg.use_c = false;
    const auto two = train(pair, cfg).second.final_main.mi_term;
    const auto three = train_multiway(fixture::table3(T), cfg).second.final_main.mi_term;
    CHECK(two > 0.05);
    CHECK(std::abs(three - two) <= 0.1 * two);
}
