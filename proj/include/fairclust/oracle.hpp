#pragma once

#include <cstdint>
#include <string>
#include <vector>

#include "fairclust/scm.hpp"

namespace fairclust::oracle {

// Above this joint exogenous support, exhaustive enumeration is refused and
// the Monte Carlo variant must be used instead.
inline constexpr int64_t kDefaultEnumerationCap = 10'000'000;

// Exact counterfactual quantities for one cluster of a deterministic map,
// computed by (weighted) evaluation of the submodels per unit.
struct ClusterEffects {
    double tv = 0.0;
    double nde = 0.0;        // NDE_{x0,x1}
    double nie_x0x1 = 0.0;   // P((c_k)_{x0,W_{x1}}) - P((c_k)_{x0})
    double nie_x1x0 = 0.0;   // P((c_k)_{x1,W_{x0}}) - P((c_k)_{x1})
    double exp_se = 0.0;     // Exp-SE_{x1} - Exp-SE_{x0}

    // Underlying distributions, kept for sidecar transparency.
    double p_obs_x0 = 0.0, p_obs_x1 = 0.0;  // P(c_k | x)
    double p_do_x0 = 0.0, p_do_x1 = 0.0;    // P((c_k)_x)
    double p_x1_w0 = 0.0;                   // P((c_k)_{x1, W_{x0}})
    double p_x0_w1 = 0.0;                   // P((c_k)_{x0, W_{x1}})
};

struct GroundTruthEffects {
    int k = 0;
    std::vector<ClusterEffects> clusters;
};

GroundTruthEffects ground_truth_effects(
    const scm::ScmSpec& spec, const scm::ClusterMap& assign, int k,
    int64_t enumeration_cap = kDefaultEnumerationCap);

// Same quantities by seeded Monte Carlo over units; deterministic for a
// given seed and invariant to worker count (fixed-size chunks, ordered
// reduction).
GroundTruthEffects ground_truth_effects_mc(const scm::ScmSpec& spec,
                                           const scm::ClusterMap& assign, int k,
                                           size_t n_units, uint64_t seed);

// TV - (NDE - NIE + Exp-SE) under both NIE subscript conventions; `pinned`
// names the convention whose residual vanishes.
struct DecompositionCheck {
    int cluster = 0;  // 1-based
    double tv = 0.0, nde = 0.0, nie_x0x1 = 0.0, nie_x1x0 = 0.0, exp_se = 0.0;
    double residual_x0x1 = 0.0;
    double residual_x1x0 = 0.0;
    std::string pinned;  // "x1x0" | "x0x1" | "both" | "neither"
};

std::vector<DecompositionCheck> decomposition_check(
    const scm::ScmSpec& spec, const scm::ClusterMap& assign, int k,
    int64_t enumeration_cap = kDefaultEnumerationCap);

}  // namespace fairclust::oracle
