#include <doctest.h>

#include "cooc_atlas/errors.hpp"
#include "cooc_atlas/kde.hpp"
#include "cooc_atlas/pu.hpp"
#include "cooc_atlas/rng.hpp"
#include "fixtures.hpp"
#include "oracles.hpp"

#include <cmath>
#include <numbers>

using namespace cooc_atlas;

namespace {

std::vector<double> row(const Eigen::MatrixXd& X, long i) {
    std::vector<double> out(static_cast<std::size_t>(X.cols()));
    for (long a = 0; a < X.cols(); ++a) {
        out[static_cast<std::size_t>(a)] = X(i, a);
    }
    return out;
}

std::vector<double> random_point(Rng& rng, long d, double scale) {
    std::vector<double> p(static_cast<std::size_t>(d));
    for (auto& x : p) {
        x = scale * rng.normal();
    }
    return p;
}

// Direct mixture sum with normalized kernels and no log-space tricks.
double naive_joint(const std::vector<Eigen::MatrixXd>& X, const std::vector<double>& s, const CoocTable& t,
                   const std::vector<std::vector<double>>& pts) {
    double q = 0;
    for (std::size_t key = 0; key < t.num_cells(); ++key) {
        const auto idx = t.unkey(key);
        double k = t.joint_prob(key);
        for (int d = 0; d < t.order(); ++d) {
            double d2 = 0;
            for (long a = 0; a < X[d].cols(); ++a) {
                const double diff = pts[d][a] - X[d](idx[d], a);
                d2 += diff * diff;
            }
            k *= std::pow(2 * std::numbers::pi * s[d] * s[d], -0.5 * X[d].cols()) * std::exp(-d2 / (2 * s[d] * s[d]));
        }
        q += k;
    }
    return q;
}

CoocTable single_pair() {
    return CoocTable({DomainSpec("A", {"a"}), DomainSpec("B", {"b"})}, {{0, 1}}, 1);
}

}

TEST_CASE("gaussian kernel values") {
    const std::vector<double> z{0, 0};
    CHECK(gaussian_kernel(z, z, 1.0) == doctest::Approx(1 / (2 * std::numbers::pi)).epsilon(1e-14));
    const std::vector<double> far{10, 0};
    CHECK(gaussian_kernel(far, z, 1.0) < 1e-22);
    CHECK(gaussian_kernel(far, z, 1.0) == doctest::Approx(std::exp(-50.0) / (2 * std::numbers::pi)).epsilon(1e-12));
    Rng rng(1);
    for (int n = 0; n < 20; ++n) {
        const auto x = random_point(rng, 3, 1), y = random_point(rng, 3, 1);
        CHECK(gaussian_kernel(x, y, 0.7) == gaussian_kernel(y, x, 0.7));
    }
    const std::vector<double> one{1};
    CHECK_THROWS_AS(gaussian_kernel(one, z, 1.0), UsageError);
    CHECK_THROWS_AS(gaussian_kernel(z, z, 0.0), UsageError);
}

TEST_CASE("joint and marginal density of a single pair") {
    const auto t = single_pair();
    std::vector<Eigen::MatrixXd> X{Eigen::MatrixXd::Zero(1, 2), Eigen::MatrixXd::Constant(1, 2, 3.0)};
    const DensityEvaluator ev(X, {1.0, 1.0}, t, WeightForm::Positive);
    const double peak = 1 / (2 * std::numbers::pi);
    CHECK(ev.joint_density({row(X[0], 0), row(X[1], 0)}) == doctest::Approx(peak * peak).epsilon(1e-13));
    CHECK(ev.joint_density({{20, 0}, {3, 23}}) < 1e-40);
    CHECK(ev.marginal_density(0, row(X[0], 0)) == doctest::Approx(peak).epsilon(1e-13));
    CHECK_THROWS_AS(ev.joint_density({{0, 0}}), UsageError);
    CHECK_THROWS_AS(ev.joint_density({{0, 0}, {1, 2, 3}}), UsageError);
}

TEST_CASE("summing the c-components recovers the c-free density") {
    Rng rng(2);
    const auto t = estimate_pu(oracle::random_table(rng, {4, 5, 1}, 2));
    std::vector<Eigen::MatrixXd> X{oracle::random_coords(rng, 4, 2, 1.0), oracle::random_coords(rng, 5, 2, 1.0)};
    const DensityEvaluator ev(X, {0.6, 0.8}, t, WeightForm::WithC);
    for (int n = 0; n < 100; ++n) {
        const std::vector<std::vector<double>> p{random_point(rng, 2, 1.5), random_point(rng, 2, 1.5)};
        const double all = ev.joint_density(p);
        CHECK(ev.joint_density(p, 0) + ev.joint_density(p, 1) == doctest::Approx(all).epsilon(1e-12));
    }
    const DensityEvaluator pos(X, {0.6, 0.8}, t, WeightForm::Positive);
    CHECK_THROWS_AS(pos.joint_density({{0, 0}, {0, 0}}, 1), UsageError);
}

TEST_CASE("mixture collapse and marginal normalization") {
    const auto t = fixture::table2({{1, 1}, {1, 1}});
    std::vector<Eigen::MatrixXd> X{Eigen::MatrixXd::Zero(2, 2), Eigen::MatrixXd::Zero(2, 2)};
    X[1](1, 0) = 1.0;
    const DensityEvaluator ev(X, {1.0, 1.0}, t, WeightForm::Positive);
    CHECK(ev.marginal_density(0, std::vector<double>{0, 0}) == doctest::Approx(1 / (2 * std::numbers::pi)).epsilon(1e-14));

    const double s = 0.5;
    const DensityEvaluator ev2(X, {s, s}, t, WeightForm::Positive);
    const int n = 201;
    const double lo = -5 * s, hi = 1 + 5 * s;
    const double h = (hi - lo) / (n - 1);
    double sum = 0;
    for (int i = 0; i < n; ++i) {
        for (int j = 0; j < n; ++j) {
            const double w = (i == 0 || i == n - 1 ? 0.5 : 1.0) * (j == 0 || j == n - 1 ? 0.5 : 1.0);
            sum += w * ev2.marginal_density(1, std::vector<double>{lo + i * h, lo + j * h});
        }
    }
    CHECK(std::abs(sum * h * h - 1) < 0.01);
}

TEST_CASE("log-space evaluation matches naive summation") {
    Rng rng(3);
    for (int order : {2, 3}) {
        const auto t = oracle::random_table(rng, {4, 3, 3}, order);
        std::vector<Eigen::MatrixXd> X;
        std::vector<double> s;
        for (int d = 0; d < order; ++d) {
            X.push_back(oracle::random_coords(rng, static_cast<long>(t.domain(d).size()), 1 + d % 2, 1.0));
            s.push_back(0.5 + 0.2 * d);
        }
        const DensityEvaluator ev(X, s, t, WeightForm::Positive);
        for (int n = 0; n < 30; ++n) {
            std::vector<std::vector<double>> p;
            for (int d = 0; d < order; ++d) {
                p.push_back(random_point(rng, X[d].cols(), 1.0));
            }
            CHECK(ev.joint_density(p) == doctest::Approx(naive_joint(X, s, t, p)).epsilon(1e-10));
        }
    }
}

TEST_CASE("storage permutation and scaling") {
    Rng rng(4);
    const auto t = oracle::random_table(rng, {5, 4, 1}, 2);
    std::vector<Eigen::MatrixXd> X{oracle::random_coords(rng, 5, 2, 1.0), oracle::random_coords(rng, 4, 1, 1.0)};
    const std::vector<double> s{0.4, 0.3};
    const DensityEvaluator ev(X, s, t, WeightForm::Positive);

    // Reverse the order of domain A.
    std::vector<std::string> items(t.domain(0).items().rbegin(), t.domain(0).items().rend());
    std::vector<CoocEntry> e;
    for (const auto& x : t.entries()) {
        const auto idx = t.unkey(x.key);
        e.push_back({(4 - idx[0]) * 4 + idx[1], x.count});
    }
    const CoocTable tp({DomainSpec("A", items), t.domain(1)}, e);
    std::vector<Eigen::MatrixXd> Xp = X;
    Xp[0] = X[0].colwise().reverse();
    const DensityEvaluator evp(Xp, s, tp, WeightForm::Positive);

    const double k = 2.5;
    std::vector<Eigen::MatrixXd> Xs{X[0] * k, X[1] * k};
    const DensityEvaluator evs(Xs, {s[0] * k, s[1] * k}, t, WeightForm::Positive);
    for (int n = 0; n < 20; ++n) {
        const std::vector<std::vector<double>> p{random_point(rng, 2, 1.0), random_point(rng, 1, 1.0)};
        const double q = ev.joint_density(p);
        CHECK(evp.joint_density(p) == doctest::Approx(q).epsilon(1e-12));
        const std::vector<std::vector<double>> ps{{p[0][0] * k, p[0][1] * k}, {p[1][0] * k}};
        CHECK(evs.joint_density(ps) == doctest::Approx(q * std::pow(k, -3.0)).epsilon(1e-9));
    }
}

TEST_CASE("conditional density: single pair, independence, Bayes form") {
    const auto t = single_pair();
    std::vector<Eigen::MatrixXd> X{Eigen::MatrixXd::Zero(1, 2), Eigen::MatrixXd::Zero(1, 2)};
    X[0](0, 0) = 0.3;
    X[0](0, 1) = -0.2;
    X[1](0, 0) = 2.0;
    const DensityEvaluator ev(X, {0.5, 0.5}, t, WeightForm::Positive);
    const auto grid = ev.conditional_grid(0, grid_for_domain(X[0], 2.0, 41), {{1, row(X[1], 0)}});
    const int c = static_cast<int>(grid.argmax % grid.grid.nx), r = static_cast<int>(grid.argmax / grid.grid.nx);
    const double hx = (grid.grid.x_range[1] - grid.grid.x_range[0]) / 40;
    CHECK(std::abs(grid.grid.x(c) - 0.3) <= hx / 2 + 1e-12);
    CHECK(std::abs(grid.grid.y(r) + 0.2) <= hx / 2 + 1e-12);

    // Factorized weights: conditional equals the target marginal.
    Rng rng(5);
    const auto ind = fixture::table2({{2, 4, 6}, {1, 2, 3}});
    std::vector<Eigen::MatrixXd> Y{oracle::random_coords(rng, 2, 2, 1.0), oracle::random_coords(rng, 3, 2, 1.0)};
    const DensityEvaluator evi(Y, {0.4, 0.6}, ind, WeightForm::Positive);
    for (int n = 0; n < 20; ++n) {
        const auto x = random_point(rng, 2, 1.0);
        const auto given = random_point(rng, 2, 1.0);
        const double cond = evi.conditional_density(0, x, {{1, given}});
        CHECK(std::abs(cond - evi.marginal_density(0, x)) <= 1e-9 * evi.marginal_density(0, x));
        // Single given point: joint / marginal computed independently.
        const double direct = naive_joint(Y, {0.4, 0.6}, ind, {x, given}) / evi.marginal_density(1, given);
        CHECK(cond == doctest::Approx(direct).epsilon(1e-12));
    }
}

TEST_CASE("conditional grid normalization and three-domain peak") {
    Rng rng(6);
    const auto t = oracle::random_table(rng, {4, 4, 4}, 3);
    std::vector<Eigen::MatrixXd> X{oracle::random_coords(rng, 4, 2, 1.0), oracle::random_coords(rng, 4, 2, 1.0),
                                   oracle::random_coords(rng, 4, 2, 1.0)};
    const std::vector<double> s{0.5, 0.5, 0.5};
    const DensityEvaluator ev(X, s, t, WeightForm::Positive);
    const auto g = ev.conditional_grid(2, grid_for_domain(X[2], 4 * s[2], 128), {{0, row(X[0], 1)}, {1, row(X[1], 2)}});
    double mass = 0;
    for (double v : g.values) {
        CHECK(v >= 0);
        mass += v;
    }
    mass *= g.grid.cell_area();
    CHECK(mass >= 0.95);
    CHECK(mass <= 1.05);
    CHECK(g.max_value == g.values[g.argmax]);

    // All mass on one triple: the peak sits at w_1.
    const auto one = CoocTable({DomainSpec("A", {"a"}), DomainSpec("B", {"b"}), DomainSpec("C", {"c"})}, {{0, 1}}, 1);
    std::vector<Eigen::MatrixXd> Z{Eigen::MatrixXd::Zero(1, 2), Eigen::MatrixXd::Ones(1, 2), Eigen::MatrixXd::Constant(1, 2, -0.7)};
    const DensityEvaluator ev1(Z, {0.3, 0.3, 0.3}, one, WeightForm::Positive);
    const auto g1 = ev1.conditional_grid(2, grid_for_domain(Z[2], 1.2, 33), {{0, row(Z[0], 0)}, {1, row(Z[1], 0)}});
    CHECK(std::abs(g1.grid.x(static_cast<int>(g1.argmax % 33)) + 0.7) < 1e-12);
    CHECK(std::abs(g1.grid.y(static_cast<int>(g1.argmax / 33)) + 0.7) < 1e-12);

    // Underflowing denominator names the given point.
    try {
        ev1.conditional_density(2, std::vector<double>{0, 0}, {{0, {1e3, 0}}});
        FAIL("expected a NumericalError");
    } catch (const NumericalError& e) {
        CHECK(std::string(e.what()).find("1000") != std::string::npos);
    }
    CHECK_THROWS_AS(ev.conditional_density(0, std::vector<double>{0, 0}, {}), UsageError);
    CHECK_THROWS_AS(ev.conditional_density(0, std::vector<double>{0, 0}, {{0, {0, 0}}}), UsageError);
}

TEST_CASE("rule-of-thumb bandwidth") {
    CHECK(rule_of_thumb_bandwidth(1.0, 2, 200) == doctest::Approx(std::pow(200.0, -1.0 / 6)).epsilon(1e-14));
    CHECK(rule_of_thumb_bandwidth(1.0, 2, 200) == doctest::Approx(0.4135).epsilon(1e-4));
    CHECK(rule_of_thumb_bandwidth(2.0, 2, 200) == 2 * rule_of_thumb_bandwidth(1.0, 2, 200));
    CHECK(rule_of_thumb_bandwidth(1.0, 4, 200) == doctest::Approx(std::pow(4.0 / 6, 0.125) * std::pow(200.0, -0.125)).epsilon(1e-14));
    CHECK(rule_of_thumb_bandwidth(1.0, 4, 200) == doctest::Approx(0.4903).epsilon(2e-4));
    CHECK_THROWS_AS(rule_of_thumb_bandwidth(NAN, 2, 200), NumericalError);

    // Neighbour floor: mean count of other points within h is >= n_min.
    Rng rng(7);
    Eigen::MatrixXd X = oracle::random_coords(rng, 60, 2, 1.0);
    X.topRows(30) *= 1e-3;
    const double h = rule_of_thumb_bandwidth(X, 3);
    CHECK(h >= rule_of_thumb_bandwidth(embedding_spread(X), 2, 60));
    const double floor = neighbor_floor_bandwidth(X, embedding_spread(X), 10);
    auto mean_neighbours = [&](double r) {
        double cnt = 0;
        for (long i = 0; i < X.rows(); ++i) {
            for (long j = 0; j < X.rows(); ++j) {
                if (i != j && (X.row(i) - X.row(j)).norm() <= r) {
                    ++cnt;
                }
            }
        }
        return cnt / static_cast<double>(X.rows());
    };
    CHECK(mean_neighbours(floor) >= 10);
    CHECK(mean_neighbours(floor * 0.99) < 10);
}
