#include "fairclust/oracle.hpp"

#include <algorithm>
#include <cmath>
#include <map>

#include "fairclust/common.hpp"
#include "fairclust/parallel.hpp"
#include "fairclust/rng.hpp"

namespace fairclust::oracle {

namespace {

struct Accumulator {
    double mass_x[2] = {0.0, 0.0};
    std::vector<double> obs_x0, obs_x1;  // P(c_k = k, X = x)
    std::vector<double> do_x0, do_x1;    // P((c_k)_x = k)
    std::vector<double> x1_w0, x0_w1;    // nested interventions

    explicit Accumulator(int k)
        : obs_x0(static_cast<size_t>(k), 0.0),
          obs_x1(static_cast<size_t>(k), 0.0),
          do_x0(static_cast<size_t>(k), 0.0),
          do_x1(static_cast<size_t>(k), 0.0),
          x1_w0(static_cast<size_t>(k), 0.0),
          x0_w1(static_cast<size_t>(k), 0.0) {}

    void merge(const Accumulator& other) {
        mass_x[0] += other.mass_x[0];
        mass_x[1] += other.mass_x[1];
        for (size_t i = 0; i < obs_x0.size(); ++i) {
            obs_x0[i] += other.obs_x0[i];
            obs_x1[i] += other.obs_x1[i];
            do_x0[i] += other.do_x0[i];
            do_x1[i] += other.do_x1[i];
            x1_w0[i] += other.x1_w0[i];
            x0_w1[i] += other.x0_w1[i];
        }
    }
};

// Per-unit counterfactual evaluation: all five worlds needed by the effect
// definitions. `assign` sees the full endogenous level vector.
void tally_unit(const scm::ScmSpec& spec, const scm::ClusterMap& assign,
                int x_var, const scm::Unit& unit, double p, Accumulator* acc) {
    const std::map<int, int> do_x0{{x_var, 0}};
    const std::map<int, int> do_x1{{x_var, 1}};

    const std::vector<int> natural = scm::evaluate(spec, unit);
    std::vector<int> v_x0 = scm::evaluate(spec, unit, do_x0);
    std::vector<int> v_x1 = scm::evaluate(spec, unit, do_x1);

    const int c_obs = assign(natural);
    const int c_x0 = assign(v_x0);
    const int c_x1 = assign(v_x1);

    // hybrids: flip only the X coordinate, keeping Z and the counterfactual W
    v_x0[static_cast<size_t>(x_var)] = 1;
    const int c_x1_w0 = assign(v_x0);
    v_x1[static_cast<size_t>(x_var)] = 0;
    const int c_x0_w1 = assign(v_x1);

    const int x_nat = natural[static_cast<size_t>(x_var)];
    acc->mass_x[x_nat] += p;
    if (x_nat == 0)
        acc->obs_x0[static_cast<size_t>(c_obs)] += p;
    else
        acc->obs_x1[static_cast<size_t>(c_obs)] += p;
    acc->do_x0[static_cast<size_t>(c_x0)] += p;
    acc->do_x1[static_cast<size_t>(c_x1)] += p;
    acc->x1_w0[static_cast<size_t>(c_x1_w0)] += p;
    acc->x0_w1[static_cast<size_t>(c_x0_w1)] += p;
}

GroundTruthEffects effects_from(const Accumulator& acc, int k) {
    if (acc.mass_x[0] <= 0.0 || acc.mass_x[1] <= 0.0)
        throw ValidationError("oracle: a protected group has zero probability mass");
    GroundTruthEffects out;
    out.k = k;
    out.clusters.resize(static_cast<size_t>(k));
    for (size_t i = 0; i < out.clusters.size(); ++i) {
        ClusterEffects& e = out.clusters[i];
        e.p_obs_x0 = acc.obs_x0[i] / acc.mass_x[0];
        e.p_obs_x1 = acc.obs_x1[i] / acc.mass_x[1];
        e.p_do_x0 = acc.do_x0[i];
        e.p_do_x1 = acc.do_x1[i];
        e.p_x1_w0 = acc.x1_w0[i];
        e.p_x0_w1 = acc.x0_w1[i];
        e.tv = e.p_obs_x1 - e.p_obs_x0;
        e.nde = e.p_x1_w0 - e.p_do_x0;
        e.nie_x0x1 = e.p_x0_w1 - e.p_do_x0;
        e.nie_x1x0 = e.p_x1_w0 - e.p_do_x1;
        e.exp_se = (e.p_obs_x1 - e.p_do_x1) - (e.p_obs_x0 - e.p_do_x0);
    }
    return out;
}

}  // namespace

GroundTruthEffects ground_truth_effects(const scm::ScmSpec& spec,
                                        const scm::ClusterMap& assign, int k,
                                        int64_t enumeration_cap) {
    spec.validate();
    if (k < 1) throw ValidationError("oracle: k must be >= 1");
    if (spec.joint_support() > enumeration_cap)
        throw ValidationError(
            "oracle: joint exogenous support " + std::to_string(spec.joint_support()) +
            " exceeds the enumeration cap " + std::to_string(enumeration_cap) +
            "; use ground_truth_effects_mc");
    const int x_var = spec.protected_var();
    Accumulator acc(k);
    scm::for_each_unit(spec, [&](const scm::Unit& unit, double p) {
        tally_unit(spec, assign, x_var, unit, p, &acc);
    });
    return effects_from(acc, k);
}

GroundTruthEffects ground_truth_effects_mc(const scm::ScmSpec& spec,
                                           const scm::ClusterMap& assign, int k,
                                           size_t n_units, uint64_t seed) {
    spec.validate();
    if (k < 1) throw ValidationError("oracle: k must be >= 1");
    if (n_units == 0) throw ValidationError("oracle: n_units must be positive");
    const int x_var = spec.protected_var();

    std::vector<std::vector<double>> cum(spec.exogenous.size());
    for (size_t e = 0; e < spec.exogenous.size(); ++e) {
        double c = 0.0;
        for (double p : spec.exogenous[e].probs) {
            c += p;
            cum[e].push_back(c);
        }
        cum[e].back() = 1.0;
    }

    // Fixed-size chunks with per-chunk derived seeds keep the result
    // independent of the worker count.
    constexpr size_t kChunk = 16384;
    const int n_chunks = static_cast<int>((n_units + kChunk - 1) / kChunk);
    std::vector<Accumulator> partial(static_cast<size_t>(n_chunks), Accumulator(k));
    parallel_tasks(n_chunks, [&](int chunk) {
        const size_t begin = static_cast<size_t>(chunk) * kChunk;
        const size_t end = std::min(begin + kChunk, n_units);
        Rng rng(derive_seed(seed, 0x9c75 /* mc units */, static_cast<uint64_t>(chunk)));
        scm::Unit unit;
        unit.u.resize(spec.exogenous.size());
        Accumulator& acc = partial[static_cast<size_t>(chunk)];
        const double w = 1.0 / static_cast<double>(n_units);
        for (size_t i = begin; i < end; ++i) {
            for (size_t e = 0; e < spec.exogenous.size(); ++e) {
                const double x = rng.uniform();
                const auto& c = cum[e];
                unit.u[e] = static_cast<int>(std::lower_bound(c.begin(), c.end(), x) -
                                             c.begin());
                if (unit.u[e] >= static_cast<int>(c.size()))
                    unit.u[e] = static_cast<int>(c.size()) - 1;
            }
            tally_unit(spec, assign, x_var, unit, w, &acc);
        }
    });
    Accumulator total(k);
    for (const auto& p : partial) total.merge(p);
    return effects_from(total, k);
}

std::vector<DecompositionCheck> decomposition_check(const scm::ScmSpec& spec,
                                                    const scm::ClusterMap& assign,
                                                    int k, int64_t enumeration_cap) {
    const GroundTruthEffects gt = ground_truth_effects(spec, assign, k, enumeration_cap);
    std::vector<DecompositionCheck> out;
    for (size_t i = 0; i < gt.clusters.size(); ++i) {
        const ClusterEffects& e = gt.clusters[i];
        DecompositionCheck c;
        c.cluster = static_cast<int>(i) + 1;
        c.tv = e.tv;
        c.nde = e.nde;
        c.nie_x0x1 = e.nie_x0x1;
        c.nie_x1x0 = e.nie_x1x0;
        c.exp_se = e.exp_se;
        c.residual_x0x1 = e.tv - (e.nde - e.nie_x0x1 + e.exp_se);
        c.residual_x1x0 = e.tv - (e.nde - e.nie_x1x0 + e.exp_se);
        const bool a = std::abs(c.residual_x0x1) <= 1e-12;
        const bool b = std::abs(c.residual_x1x0) <= 1e-12;
        c.pinned = a && b ? "both" : a ? "x0x1" : b ? "x1x0" : "neither";
        out.push_back(c);
    }
    return out;
}

}  // namespace fairclust::oracle
