#include "doctest.h"

#include <cmath>
#include <cstdlib>

#include "fairclust/oracle.hpp"
#include "fairclust/prob.hpp"
#include "fairclust/scm.hpp"
#include "support/testutil.hpp"

using namespace fairclust;

namespace {

scm::ScmSpec reference() { return testutil::load_fixture_scm("reference_scm.json"); }

scm::ClusterMap by_w_map(const scm::ScmSpec& spec) {
    for (const auto& a : spec.assignments)
        if (a.name == "by_w") return scm::make_cluster_map(spec, a);
    throw std::runtime_error("fixture misses by_w");
}

scm::ClusterMap majority_map(const scm::ScmSpec& spec) {
    for (const auto& a : spec.assignments)
        if (a.name == "majority") return scm::make_cluster_map(spec, a);
    throw std::runtime_error("fixture misses majority");
}

}  // namespace

TEST_CASE("sampling is deterministic and matches enumerated marginals") {
    const auto spec = reference();
    const Dataset a = scm::sample(spec, 2000, 7);
    const Dataset b = scm::sample(spec, 2000, 7);
    for (size_t r = 0; r < a.n(); ++r) {
        CHECK(a.column("x").codes[r] == b.column("x").codes[r]);
        CHECK(a.column("z").codes[r] == b.column("z").codes[r]);
        CHECK(a.column("w").codes[r] == b.column("w").codes[r]);
    }

    // P(x1) = 0.5 exactly by construction; 3 sigma binomial band
    const Dataset big = scm::sample(spec, 100000, 7);
    const double p_x1 = static_cast<double>(big.group_size(1)) / static_cast<double>(big.n());
    CHECK(std::abs(p_x1 - 0.5) <= 3.0 * std::sqrt(0.25 / 100000.0));

    CHECK(scm::sample(spec, 0, 7).n() == 0);
}

TEST_CASE("potential response: consistency and composition per unit") {
    const auto spec = reference();
    scm::for_each_unit(spec, [&](const scm::Unit& u, double) {
        const auto natural = scm::evaluate(spec, u);
        // consistency: forcing X to its natural value changes nothing
        const auto forced =
            scm::potential_response(spec, u, {{"x", natural[0]}});
        CHECK(forced == natural);
        // composition: forcing W to its natural value changes nothing
        const auto forced_w =
            scm::potential_response(spec, u, {{"w", natural[2]}});
        CHECK(forced_w == natural);
    });
}

TEST_CASE("nested counterfactual evaluation on a hand-checked unit") {
    const auto spec = reference();
    scm::Unit u;
    u.u = {3, 5};  // x natural 1, z = 1, u_w = 5
    const auto natural = scm::evaluate(spec, u);
    CHECK(natural == std::vector<int>{1, 1, 1});  // P(w1|x1,z1)=0.875: 5 >= 2

    // W_{x0}(u): P(w1|x0,z1) = 0.5, threshold 8, u_w = 5 -> w0
    const auto w_x0 = scm::potential_response(spec, u, {{"x", 0}});
    CHECK(w_x0 == std::vector<int>{0, 1, 0});

    // the f_C input for P((c_k)_{x1, W_{x0}}): x forced to x1, W held at W_{x0}
    const auto nested = scm::potential_response(spec, u, {{"x", 1}, {"w", w_x0[2]}});
    CHECK(nested == std::vector<int>{1, 1, 0});
}

TEST_CASE("interventions with non-level values are rejected") {
    const auto spec = reference();
    scm::Unit u;
    u.u = {0, 0};
    CHECK_THROWS_AS(scm::potential_response(spec, u, {{"x", 5}}), ValidationError);
    CHECK_THROWS_AS(scm::potential_response(spec, u, {{"nope", 0}}), ValidationError);
}

TEST_CASE("ground truth matches hand enumeration of the reference fixture") {
    const auto spec = reference();
    const auto gt = oracle::ground_truth_effects(spec, by_w_map(spec), 2);
    const auto& c2 = gt.clusters[1];  // cluster of w = w1
    CHECK(std::abs(c2.tv - 0.475) <= 1e-12);
    CHECK(c2.nde == 0.0);
    CHECK(std::abs(c2.nie_x0x1 - 0.375) <= 1e-12);
    CHECK(std::abs(c2.nie_x1x0 + 0.375) <= 1e-12);
    CHECK(std::abs(c2.exp_se - 0.1) <= 1e-12);
}

TEST_CASE("constant assignment has all effects exactly zero") {
    const auto spec = reference();
    const auto gt = oracle::ground_truth_effects(
        spec, [](const std::vector<int>&) { return 0; }, 2);
    for (const auto& c : gt.clusters) {
        CHECK(c.tv == 0.0);
        CHECK(c.nde == 0.0);
        CHECK(c.nie_x0x1 == 0.0);
        CHECK(c.nie_x1x0 == 0.0);
        CHECK(c.exp_se == 0.0);
    }
}

TEST_CASE("x-free maps have exactly zero oracle NDE") {
    for (uint64_t seed = 1; seed <= 5; ++seed) {
        const auto spec = testutil::random_scm(seed);
        const auto map = testutil::random_cluster_map(spec, seed, 2, /*x_free=*/true);
        const auto gt = oracle::ground_truth_effects(spec, map, 2);
        for (const auto& c : gt.clusters) CHECK(c.nde == 0.0);
    }
}

TEST_CASE("decomposition pins the reversed NIE convention") {
    const auto spec = reference();
    const auto checks = oracle::decomposition_check(spec, by_w_map(spec), 2);
    for (const auto& c : checks) {
        CHECK(c.pinned == "x1x0");
        CHECK(std::abs(c.residual_x1x0) <= 1e-12);
        CHECK(std::abs(c.residual_x0x1) > 1e-6);
    }
    // with an x-dependent map both effects move but the identity still holds
    const auto checks_maj = oracle::decomposition_check(spec, majority_map(spec), 2);
    for (const auto& c : checks_maj) CHECK(std::abs(c.residual_x1x0) <= 1e-12);
}

TEST_CASE("empty mediator set forces NIE to zero and TV = NDE + ExpSE") {
    for (uint64_t seed = 1; seed <= 30; ++seed) {
        const auto spec = testutil::random_scm(seed);
        if (!spec.schema().w_indices().empty()) continue;
        const auto map = testutil::random_cluster_map(spec, seed + 7, 2, false);
        const auto gt = oracle::ground_truth_effects(spec, map, 2);
        for (const auto& c : gt.clusters) {
            CHECK(c.nie_x0x1 == 0.0);
            CHECK(c.nie_x1x0 == 0.0);
            CHECK(std::abs(c.tv - (c.nde + c.exp_se)) <= 1e-12);
        }
    }
}

TEST_CASE("enumeration cap directs large supports to Monte Carlo") {
    auto spec = reference();
    CHECK_THROWS_WITH_AS(
        oracle::ground_truth_effects(spec, by_w_map(spec), 2, /*cap=*/8),
        doctest::Contains("ground_truth_effects_mc"), ValidationError);
}

TEST_CASE("Monte Carlo ground truth converges to enumeration") {
    const auto spec = reference();
    const auto map = majority_map(spec);
    const auto exact = oracle::ground_truth_effects(spec, map, 2);
    const auto mc = oracle::ground_truth_effects_mc(spec, map, 2, 200000, 11);
    for (size_t c = 0; c < 2; ++c) {
        CHECK(std::abs(mc.clusters[c].tv - exact.clusters[c].tv) <= 0.02);
        CHECK(std::abs(mc.clusters[c].exp_se - exact.clusters[c].exp_se) <= 0.02);
    }

    // doubling samples twice halves the RMSE of P((c_k)_x1) within tolerance
    double rmse_small = 0.0, rmse_large = 0.0;
    const int reps = 24;
    for (int r = 0; r < reps; ++r) {
        const auto small = oracle::ground_truth_effects_mc(spec, map, 2, 2048,
                                                           1000 + static_cast<uint64_t>(r));
        const auto large = oracle::ground_truth_effects_mc(spec, map, 2, 4 * 2048,
                                                           2000 + static_cast<uint64_t>(r));
        const double es = small.clusters[1].p_do_x1 - exact.clusters[1].p_do_x1;
        const double el = large.clusters[1].p_do_x1 - exact.clusters[1].p_do_x1;
        rmse_small += es * es;
        rmse_large += el * el;
    }
    rmse_small = std::sqrt(rmse_small / reps);
    rmse_large = std::sqrt(rmse_large / reps);
    const double ratio = rmse_small / rmse_large;
    CHECK(ratio >= 1.2);
    CHECK(ratio <= 3.4);
}

TEST_CASE("Monte Carlo reduction is worker-count invariant") {
    const auto spec = reference();
    const auto map = majority_map(spec);
    setenv("FAIRCLUST_WORKERS", "1", 1);
    const auto one = oracle::ground_truth_effects_mc(spec, map, 2, 50000, 13);
    setenv("FAIRCLUST_WORKERS", "4", 1);
    const auto four = oracle::ground_truth_effects_mc(spec, map, 2, 50000, 13);
    unsetenv("FAIRCLUST_WORKERS");
    for (size_t c = 0; c < 2; ++c) {
        CHECK(one.clusters[c].tv == four.clusters[c].tv);
        CHECK(one.clusters[c].nde == four.clusters[c].nde);
        CHECK(one.clusters[c].exp_se == four.clusters[c].exp_se);
    }
}

TEST_CASE("scm validation enforces the SFM shape") {
    // a mediator feeding a confounder is rejected
    const std::string bad = R"({
      "name": "bad",
      "exogenous": [{"name": "u", "card": 4}],
      "variables": [
        {"name": "x", "role": "protected", "kind": "categorical",
         "levels": ["x0", "x1"], "expr": ["in", ["var", "u"], [2, 3]]},
        {"name": "w", "role": "mediator", "kind": "categorical",
         "levels": ["a", "b"], "expr": ["var", "x"]},
        {"name": "z", "role": "confounder", "kind": "categorical",
         "levels": ["a", "b"], "expr": ["var", "w"]}
      ]
    })";
    CHECK_THROWS_AS(scm::scm_from_json(bad), SchemaError);

    // zero-probability exogenous mass violates strict positivity
    const std::string zero_mass = R"({
      "name": "bad2",
      "exogenous": [{"name": "u", "probs": [0.5, 0.5, 0.0, 0.0]}],
      "variables": [
        {"name": "x", "role": "protected", "kind": "categorical",
         "levels": ["x0", "x1"], "expr": ["in", ["var", "u"], [2, 3]]}
      ]
    })";
    CHECK_THROWS_AS(scm::scm_from_json(zero_mass), SchemaError);
}
