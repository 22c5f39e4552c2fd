#include <signmf/dispersion.hpp>
#include <signmf/simulation.hpp>

#include "support/oracles.hpp"

#include <catch2/catch_amalgamated.hpp>

#include <cmath>
#include <random>

using namespace signmf;

namespace {

// NB row with means drawn around mu_center
void nb_row(Vector& v, Vector& mu, Eigen::Index m, double mu_center, double alpha, std::mt19937_64& rng) {
    std::uniform_real_distribution<double> spread(0.5 * mu_center, 1.5 * mu_center);
    v.resize(m);
    mu.resize(m);
    for (Eigen::Index j = 0; j < m; ++j) {
        mu(j) = spread(rng);
        v(j) = static_cast<double>(sample_nb(mu(j), alpha, rng));
    }
}

}  // namespace

TEST_CASE("score and curvature match finite differences of the log-likelihood") {
    // the curvature is differenced from the score, not twice from the
    // log-likelihood: a second difference of lgamma sums drowns in roundoff
    std::mt19937_64 rng(71);
    for (int t = 0; t < 20; ++t) {
        Vector v, mu;
        nb_row(v, mu, 60, 40.0, 5.0 + t, rng);
        const double alpha = 0.5 + 3.0 * t;
        const double h = 1e-5 * alpha;
        const double ll_plus = oracles::grid_loglik(v, mu, alpha + h);
        const double ll_minus = oracles::grid_loglik(v, mu, alpha - h);
        const AlphaScore s = nb_alpha_score(v, mu, alpha);
        CHECK(s.score == Catch::Approx((ll_plus - ll_minus) / (2.0 * h)).epsilon(1e-5).margin(1e-7));
        const double s_plus = nb_alpha_score(v, mu, alpha + h).score;
        const double s_minus = nb_alpha_score(v, mu, alpha - h).score;
        CHECK(s.curvature == Catch::Approx((s_plus - s_minus) / (2.0 * h)).epsilon(1e-5).margin(1e-9));
    }
}

TEST_CASE("newton estimate reaches the grid-search optimum (spot sample)") {
    std::mt19937_64 rng(72);
    for (int t = 0; t < 10; ++t) {
        Vector v, mu;
        const double alpha_true = (t % 2 == 0) ? 8.0 : 120.0;
        nb_row(v, mu, 150, 80.0, alpha_true, rng);
        const double alpha_hat = estimate_row_dispersion(v, mu);
        REQUIRE(std::isfinite(alpha_hat));
        const double ll_hat = oracles::grid_loglik(v, mu, alpha_hat);
        const double alpha_grid = oracles::grid_alpha(v, mu, 1e-3, 1e7, 2000);
        const double ll_grid = oracles::grid_loglik(v, mu, alpha_grid);
        CHECK(ll_hat >= ll_grid - 1e-6);
        // near-zero score at an interior optimum
        CHECK(std::abs(nb_alpha_score(v, mu, alpha_hat).score) < 1e-6 * std::abs(ll_hat));
    }
}

TEST_CASE("dispersion recovery around the true value") {
    std::mt19937_64 rng(73);
    int hits = 0;
    const int reps = 12;
    for (int t = 0; t < reps; ++t) {
        Vector v, mu;
        nb_row(v, mu, 200, 100.0, 10.0, rng);
        const double alpha_hat = estimate_row_dispersion(v, mu);
        if (alpha_hat >= 8.0 && alpha_hat <= 13.0) ++hits;
    }
    CHECK(hits >= reps - 2);
}

TEST_CASE("underdispersed rows hit the poisson-limit sentinel") {
    // counts equal to their means exactly: zero excess variance
    Vector v(50), mu(50);
    for (Eigen::Index j = 0; j < 50; ++j) v(j) = mu(j) = 20.0 + static_cast<double>(j % 7);
    CHECK(std::isinf(estimate_row_dispersion(v, mu)));

    // a flat profile (all cells 0 with mean 0) carries no information at all
    Vector z0 = Vector::Zero(8), m0 = Vector::Zero(8);
    CHECK(std::isinf(estimate_row_dispersion(z0, m0)));

    // an all-zero row against positive means is the opposite extreme: the NB
    // zero probability (1+mu/alpha)^-alpha grows as alpha falls, so the
    // profile tops out at the lower bound
    Vector z = Vector::Zero(30), mz = Vector::Constant(30, 4.0);
    CHECK(estimate_row_dispersion(z, mz) == DispersionConfig{}.alpha_min);
}

TEST_CASE("profile falling at the lower bound returns the bound") {
    // grossly overdispersed data: optimum below alpha_min = 1
    Vector v(6), mu(6);
    v << 0, 0, 0, 0, 0, 15000;
    mu << 2500, 2500, 2500, 2500, 2500, 2500;
    DispersionConfig cfg;
    cfg.alpha_min = 1.0;
    CHECK(estimate_row_dispersion(v, mu, cfg) == 1.0);
}

TEST_CASE("matrix estimation is row-wise") {
    std::mt19937_64 rng(74);
    Matrix v(3, 120), mu(3, 120);
    const double alphas_true[] = {5.0, 50.0, 500.0};
    for (int i = 0; i < 3; ++i) {
        Vector vr, mr;
        nb_row(vr, mr, 120, 60.0, alphas_true[i], rng);
        v.row(i) = vr.transpose();
        mu.row(i) = mr.transpose();
    }
    const DispersionVector d = estimate_dispersion(v, mu);
    REQUIRE(d.size() == 3);
    for (int i = 0; i < 3; ++i) {
        const double row_est = estimate_row_dispersion(v.row(i).transpose(), mu.row(i).transpose());
        if (std::isinf(row_est))
            CHECK(std::isinf(d[i]));
        else
            CHECK(d[i] == Catch::Approx(row_est).epsilon(1e-12));
    }
}

TEST_CASE("shared estimation pools all cells") {
    std::mt19937_64 rng(75);
    Matrix v(2, 80), mu(2, 80);
    for (int i = 0; i < 2; ++i) {
        Vector vr, mr;
        nb_row(vr, mr, 80, 70.0, 15.0, rng);
        v.row(i) = vr.transpose();
        mu.row(i) = mr.transpose();
    }
    // flattening into one long row must give the same estimate
    Matrix vf(1, 160), mf(1, 160);
    Eigen::Index t = 0;
    for (Eigen::Index j = 0; j < 80; ++j)
        for (Eigen::Index i = 0; i < 2; ++i, ++t) {
            vf(0, t) = v(i, j);
            mf(0, t) = mu(i, j);
        }
    const double shared = estimate_shared_dispersion(v, mu);
    const double flat = estimate_row_dispersion(vf.row(0).transpose(), mf.row(0).transpose());
    CHECK(shared == Catch::Approx(flat).epsilon(1e-10));
}

TEST_CASE("dispersion validation errors") {
    Vector v(3), mu(2);
    v.setOnes();
    mu.setOnes();
    CHECK_THROWS_AS(estimate_row_dispersion(v, mu), validation_error);
    CHECK_THROWS_AS(estimate_row_dispersion(Vector(), Vector()), validation_error);
    CHECK_THROWS_AS(nb_alpha_score(v, v, 0.0), validation_error);
    CHECK_THROWS_AS(nb_alpha_score(v, v, kAlphaPoisson), validation_error);

    DispersionConfig bad;
    bad.alpha_min = -1.0;
    Vector ok = Vector::Ones(3);
    CHECK_THROWS_AS(estimate_row_dispersion(ok, ok, bad), validation_error);
    bad = DispersionConfig{};
    bad.max_iters = 0;
    CHECK_THROWS_AS(estimate_row_dispersion(ok, ok, bad), validation_error);

    // positive count at zero mean cannot be scored
    Vector vz(2), mz(2);
    vz << 1, 0;
    mz << 0, 1;
    CHECK_THROWS_AS(nb_alpha_score(vz, mz, 2.0), numerical_error);
}
