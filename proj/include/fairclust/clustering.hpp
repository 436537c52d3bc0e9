#pragma once

#include <cstdint>
#include <string>
#include <vector>

#include "fairclust/dataset.hpp"

namespace fairclust::cluster {

struct Assignment {
    std::vector<int32_t> labels;  // 0-based cluster index per row
    int k = 0;
    bool ftu = false;  // protected attribute excluded from the feature set
};

struct Prototype {
    std::vector<double> numeric;  // means, one per numeric feature
    std::vector<int32_t> modes;   // one per categorical feature
};

// K prototypes over a mixed feature set plus the deterministic assignment
// rule: nearest prototype under squared numeric distance + gamma * number of
// categorical mismatches, ties broken by lowest cluster index. Categorical
// codes are bound to the fit dataset's level vocabularies; an unseen level
// simply counts as a mismatch.
struct KPrototypesModel {
    int k = 0;
    double gamma = 1.0;
    bool ftu = false;
    uint64_t seed = 0;
    std::vector<std::string> feature_set;  // ordered column names actually used
    std::vector<int> numeric_cols;         // schema indices
    std::vector<int> categorical_cols;
    std::vector<Prototype> prototypes;
    double cost = 0.0;                     // final objective on the fit data
    std::vector<double> cost_history;      // objective after each assignment pass
    int iterations = 0;

    double distance(const Dataset& d, size_t row, const Prototype& p) const;
    int assign_row(const Dataset& d, size_t row) const;
};

struct FitResult {
    KPrototypesModel model;
    Assignment assignment;
};

// Half the mean per-column variance of the numeric features; the standard
// prototype weighting heuristic. 1.0 when there are no numeric features.
double auto_gamma(const Dataset& d, const std::vector<int>& numeric_cols);

// Lloyd-style alternation; deterministic. Initialisation is content-based
// (lexicographically smallest row, then greedy farthest-point with
// content-based tie-breaks), so permuting input rows permutes labels
// identically. Empty clusters are reseeded from the farthest point.
FitResult kprototypes_fit(const Dataset& d, int k, double gamma, bool ftu,
                          uint64_t seed);

Assignment assign_all(const KPrototypesModel& model, const Dataset& d);

// Balance baseline: greedy fairlet pairing (each x1 row with its nearest
// unmatched x0 row; leftovers pooled into their nearest fairlet), then
// k-prototypes on the fairlet centroids with labels propagated to members.
FitResult balanced_fit(const Dataset& d, int k, double gamma, uint64_t seed);

std::string model_to_json(const KPrototypesModel& model, const Dataset& fit_data);

}  // namespace fairclust::cluster
