#include "fairclust/clustering.hpp"

#include <algorithm>
#include <cmath>
#include <limits>

#include "json.hpp"

#include "fairclust/common.hpp"

namespace fairclust::cluster {

namespace {

// Feature columns in schema order, protected column excluded under FTU.
void select_features(const Dataset& d, bool ftu, std::vector<int>* numeric_cols,
                     std::vector<int>* categorical_cols,
                     std::vector<std::string>* names) {
    const auto& schema = d.schema();
    for (size_t i = 0; i < schema.columns.size(); ++i) {
        const auto& col = schema.columns[i];
        if (col.role == Role::ignored) continue;
        if (col.role == Role::protected_attr && ftu) continue;
        if (col.kind == Kind::continuous)
            numeric_cols->push_back(static_cast<int>(i));
        else
            categorical_cols->push_back(static_cast<int>(i));
        names->push_back(col.name);
    }
}

// Lightweight row view used by both the dataset fit and the fairlet
// centroid fit.
struct FeatureMatrix {
    size_t n = 0;
    std::vector<std::vector<double>> numeric;   // [feature][row]
    std::vector<std::vector<int32_t>> cat;      // [feature][row]
    std::vector<int32_t> cat_cardinality;
};

FeatureMatrix matrix_from_dataset(const Dataset& d, const std::vector<int>& numeric_cols,
                                  const std::vector<int>& categorical_cols) {
    FeatureMatrix m;
    m.n = d.n();
    for (int col : numeric_cols) m.numeric.push_back(d.column(col).values);
    for (int col : categorical_cols) {
        m.cat.push_back(d.column(col).codes);
        m.cat_cardinality.push_back(static_cast<int32_t>(d.column(col).levels.size()));
    }
    return m;
}

double row_distance(const FeatureMatrix& m, size_t row, const Prototype& p, double gamma) {
    double dist = 0.0;
    for (size_t f = 0; f < m.numeric.size(); ++f) {
        const double diff = m.numeric[f][row] - p.numeric[f];
        dist += diff * diff;
    }
    if (gamma > 0.0)
        for (size_t f = 0; f < m.cat.size(); ++f)
            dist += gamma * (m.cat[f][row] != p.modes[f] ? 1.0 : 0.0);
    return dist;
}

// Lexicographic comparison of feature vectors; the content-based tie-break
// that keeps fits invariant under row permutation.
bool row_less(const FeatureMatrix& m, size_t a, size_t b) {
    for (size_t f = 0; f < m.numeric.size(); ++f) {
        if (m.numeric[f][a] != m.numeric[f][b]) return m.numeric[f][a] < m.numeric[f][b];
    }
    for (size_t f = 0; f < m.cat.size(); ++f) {
        if (m.cat[f][a] != m.cat[f][b]) return m.cat[f][a] < m.cat[f][b];
    }
    return false;
}

Prototype prototype_from_row(const FeatureMatrix& m, size_t row) {
    Prototype p;
    for (const auto& col : m.numeric) p.numeric.push_back(col[row]);
    for (const auto& col : m.cat) p.modes.push_back(col[row]);
    return p;
}

struct CoreResult {
    std::vector<Prototype> prototypes;
    std::vector<int32_t> labels;
    double cost = 0.0;
    std::vector<double> cost_history;
    int iterations = 0;
};

CoreResult kprototypes_core(const FeatureMatrix& m, int k, double gamma) {
    if (k < 1) throw ValidationError("clustering: K must be >= 1");
    if (m.n == 0) throw ValidationError("clustering: empty dataset");
    if (static_cast<size_t>(k) > m.n)
        throw ValidationError("clustering: K exceeds the number of rows");

    // Farthest-point initialisation from the lexicographically smallest row.
    std::vector<size_t> chosen;
    size_t first = 0;
    for (size_t r = 1; r < m.n; ++r)
        if (row_less(m, r, first)) first = r;
    chosen.push_back(first);
    std::vector<Prototype> prototypes{prototype_from_row(m, first)};
    std::vector<double> min_dist(m.n, 0.0);
    for (size_t r = 0; r < m.n; ++r) min_dist[r] = row_distance(m, r, prototypes[0], gamma);
    while (static_cast<int>(chosen.size()) < k) {
        size_t best = 0;
        bool have = false;
        for (size_t r = 0; r < m.n; ++r) {
            if (!have || min_dist[r] > min_dist[best] ||
                (min_dist[r] == min_dist[best] && row_less(m, r, best))) {
                best = r;
                have = true;
            }
        }
        chosen.push_back(best);
        prototypes.push_back(prototype_from_row(m, best));
        for (size_t r = 0; r < m.n; ++r)
            min_dist[r] = std::min(min_dist[r], row_distance(m, r, prototypes.back(), gamma));
    }

    CoreResult res;
    res.prototypes = std::move(prototypes);
    res.labels.assign(m.n, 0);

    const int max_iterations = 100;
    std::vector<int64_t> sizes(static_cast<size_t>(k), 0);
    for (int iter = 0; iter < max_iterations; ++iter) {
        bool changed = false;
        double cost = 0.0;
        std::fill(sizes.begin(), sizes.end(), 0);
        std::vector<double> assigned_dist(m.n, 0.0);
        for (size_t r = 0; r < m.n; ++r) {
            int best = 0;
            double best_dist = row_distance(m, r, res.prototypes[0], gamma);
            for (int c = 1; c < k; ++c) {
                const double dist = row_distance(m, r, res.prototypes[static_cast<size_t>(c)], gamma);
                if (dist < best_dist) {
                    best_dist = dist;
                    best = c;
                }
            }
            if (res.labels[r] != best) {
                res.labels[r] = best;
                changed = true;
            }
            assigned_dist[r] = best_dist;
            cost += best_dist;
            ++sizes[static_cast<size_t>(best)];
        }

        // Reseed any empty cluster from the row farthest from its prototype.
        bool reseeded = false;
        for (int c = 0; c < k; ++c) {
            if (sizes[static_cast<size_t>(c)] > 0) continue;
            size_t far = 0;
            bool have = false;
            for (size_t r = 0; r < m.n; ++r) {
                if (!have || assigned_dist[r] > assigned_dist[far] ||
                    (assigned_dist[r] == assigned_dist[far] && row_less(m, r, far))) {
                    far = r;
                    have = true;
                }
            }
            res.prototypes[static_cast<size_t>(c)] = prototype_from_row(m, far);
            assigned_dist[far] = 0.0;
            reseeded = true;
        }
        if (reseeded) continue;  // rerun the assignment pass against the new prototype

        res.cost_history.push_back(cost);
        res.cost = cost;
        res.iterations = iter + 1;
        if (!changed && iter > 0) break;

        // Update step: numeric means and categorical modes per cluster.
        for (int c = 0; c < k; ++c) {
            auto& proto = res.prototypes[static_cast<size_t>(c)];
            for (size_t f = 0; f < m.numeric.size(); ++f) {
                double sum = 0.0;
                int64_t count = 0;
                for (size_t r = 0; r < m.n; ++r) {
                    if (res.labels[r] != c) continue;
                    sum += m.numeric[f][r];
                    ++count;
                }
                if (count > 0) proto.numeric[f] = sum / static_cast<double>(count);
            }
            for (size_t f = 0; f < m.cat.size(); ++f) {
                std::vector<int64_t> counts(static_cast<size_t>(m.cat_cardinality[f]), 0);
                for (size_t r = 0; r < m.n; ++r)
                    if (res.labels[r] == c) ++counts[static_cast<size_t>(m.cat[f][r])];
                int32_t mode = 0;
                for (size_t l = 1; l < counts.size(); ++l)
                    if (counts[l] > counts[static_cast<size_t>(mode)]) mode = static_cast<int32_t>(l);
                proto.modes[f] = mode;
            }
        }
    }
    return res;
}

}  // namespace

double auto_gamma(const Dataset& d, const std::vector<int>& numeric_cols) {
    if (numeric_cols.empty() || d.n() == 0) return 1.0;
    double total = 0.0;
    for (int col : numeric_cols) {
        const auto& values = d.column(col).values;
        double mean = 0.0;
        for (double v : values) mean += v;
        mean /= static_cast<double>(values.size());
        double var = 0.0;
        for (double v : values) var += (v - mean) * (v - mean);
        var /= static_cast<double>(values.size());
        total += var;
    }
    return 0.5 * total / static_cast<double>(numeric_cols.size());
}

double KPrototypesModel::distance(const Dataset& d, size_t row, const Prototype& p) const {
    double dist = 0.0;
    for (size_t f = 0; f < numeric_cols.size(); ++f) {
        const double diff = d.column(numeric_cols[f]).values[row] - p.numeric[f];
        dist += diff * diff;
    }
    if (gamma > 0.0)
        for (size_t f = 0; f < categorical_cols.size(); ++f)
            dist += gamma * (d.column(categorical_cols[f]).codes[row] != p.modes[f] ? 1.0 : 0.0);
    return dist;
}

int KPrototypesModel::assign_row(const Dataset& d, size_t row) const {
    int best = 0;
    double best_dist = distance(d, row, prototypes[0]);
    for (int c = 1; c < k; ++c) {
        const double dist = distance(d, row, prototypes[static_cast<size_t>(c)]);
        if (dist < best_dist) {
            best_dist = dist;
            best = c;
        }
    }
    return best;
}

FitResult kprototypes_fit(const Dataset& d, int k, double gamma, bool ftu,
                          uint64_t seed) {
    KPrototypesModel model;
    model.k = k;
    model.ftu = ftu;
    model.seed = seed;
    select_features(d, ftu, &model.numeric_cols, &model.categorical_cols,
                    &model.feature_set);
    if (model.numeric_cols.empty() && model.categorical_cols.empty())
        throw ValidationError("clustering: feature set is empty");
    model.gamma = gamma >= 0.0 ? gamma : auto_gamma(d, model.numeric_cols);

    const FeatureMatrix m = matrix_from_dataset(d, model.numeric_cols, model.categorical_cols);
    CoreResult core = kprototypes_core(m, k, model.gamma);
    model.prototypes = std::move(core.prototypes);
    model.cost = core.cost;
    model.cost_history = std::move(core.cost_history);
    model.iterations = core.iterations;

    FitResult out;
    out.assignment.labels = std::move(core.labels);
    out.assignment.k = k;
    out.assignment.ftu = ftu;
    out.model = std::move(model);
    return out;
}

Assignment assign_all(const KPrototypesModel& model, const Dataset& d) {
    Assignment a;
    a.k = model.k;
    a.ftu = model.ftu;
    a.labels.resize(d.n());
    for (size_t r = 0; r < d.n(); ++r)
        a.labels[r] = static_cast<int32_t>(model.assign_row(d, r));
    return a;
}

FitResult balanced_fit(const Dataset& d, int k, double gamma, uint64_t seed) {
    if (d.group_size(0) == 0 || d.group_size(1) == 0)
        throw ValidationError("balanced clustering: a protected group is empty");

    std::vector<int> numeric_cols, categorical_cols;
    std::vector<std::string> names;
    select_features(d, /*ftu=*/true, &numeric_cols, &categorical_cols, &names);
    if (numeric_cols.empty() && categorical_cols.empty())
        throw ValidationError("balanced clustering: feature set is empty");
    const double g = gamma >= 0.0 ? gamma : auto_gamma(d, numeric_cols);
    const FeatureMatrix m = matrix_from_dataset(d, numeric_cols, categorical_cols);

    // Greedy fairlet pairing: x1 rows in row order each grab their nearest
    // unmatched x0 row.
    const auto rows1 = d.group_rows(1);
    const auto rows0 = d.group_rows(0);
    std::vector<bool> matched0(rows0.size(), false);
    struct Fairlet {
        std::vector<uint32_t> members;
    };
    std::vector<Fairlet> fairlets;
    std::vector<uint32_t> leftover;
    size_t unmatched = rows0.size();
    for (uint32_t r1 : rows1) {
        if (unmatched == 0) {
            leftover.push_back(r1);
            continue;
        }
        size_t best = rows0.size();
        double best_dist = std::numeric_limits<double>::infinity();
        for (size_t i = 0; i < rows0.size(); ++i) {
            if (matched0[i]) continue;
            double dist = 0.0;
            for (size_t f = 0; f < m.numeric.size(); ++f) {
                const double diff = m.numeric[f][r1] - m.numeric[f][rows0[i]];
                dist += diff * diff;
            }
            for (size_t f = 0; f < m.cat.size(); ++f)
                dist += g * (m.cat[f][r1] != m.cat[f][rows0[i]] ? 1.0 : 0.0);
            if (dist < best_dist) {
                best_dist = dist;
                best = i;
            }
        }
        matched0[best] = true;
        --unmatched;
        fairlets.push_back({{r1, rows0[best]}});
    }
    for (size_t i = 0; i < rows0.size(); ++i)
        if (!matched0[i]) leftover.push_back(rows0[i]);
    if (fairlets.empty())
        throw ValidationError("balanced clustering: no fairlets could be formed");

    // Fairlet centroids: numeric means, categorical modes (lowest level wins
    // ties).
    FeatureMatrix centroids;
    centroids.n = fairlets.size();
    centroids.numeric.assign(m.numeric.size(), {});
    centroids.cat.assign(m.cat.size(), {});
    centroids.cat_cardinality = m.cat_cardinality;
    auto append_centroid = [&](const Fairlet& f) {
        for (size_t fn = 0; fn < m.numeric.size(); ++fn) {
            double sum = 0.0;
            for (uint32_t r : f.members) sum += m.numeric[fn][r];
            centroids.numeric[fn].push_back(sum / static_cast<double>(f.members.size()));
        }
        for (size_t fc = 0; fc < m.cat.size(); ++fc) {
            std::vector<int> counts(static_cast<size_t>(m.cat_cardinality[fc]), 0);
            for (uint32_t r : f.members) ++counts[static_cast<size_t>(m.cat[fc][r])];
            int32_t mode = 0;
            for (size_t l = 1; l < counts.size(); ++l)
                if (counts[l] > counts[static_cast<size_t>(mode)]) mode = static_cast<int32_t>(l);
            centroids.cat[fc].push_back(mode);
        }
    };

    // Pool leftovers into their nearest fairlet before computing centroids.
    for (uint32_t r : leftover) {
        size_t best = 0;
        double best_dist = std::numeric_limits<double>::infinity();
        for (size_t f = 0; f < fairlets.size(); ++f) {
            // distance to the fairlet's first member keeps pooling cheap and
            // deterministic
            const uint32_t anchor = fairlets[f].members[0];
            double dist = 0.0;
            for (size_t fn = 0; fn < m.numeric.size(); ++fn) {
                const double diff = m.numeric[fn][r] - m.numeric[fn][anchor];
                dist += diff * diff;
            }
            for (size_t fc = 0; fc < m.cat.size(); ++fc)
                dist += g * (m.cat[fc][r] != m.cat[fc][anchor] ? 1.0 : 0.0);
            if (dist < best_dist) {
                best_dist = dist;
                best = f;
            }
        }
        fairlets[best].members.push_back(r);
    }
    for (const auto& f : fairlets) append_centroid(f);

    CoreResult core = kprototypes_core(centroids, k, g);

    FitResult out;
    out.assignment.k = k;
    out.assignment.ftu = true;
    out.assignment.labels.assign(d.n(), 0);
    for (size_t f = 0; f < fairlets.size(); ++f)
        for (uint32_t r : fairlets[f].members)
            out.assignment.labels[r] = core.labels[f];

    out.model.k = k;
    out.model.gamma = g;
    out.model.ftu = true;
    out.model.seed = seed;
    out.model.feature_set = names;
    out.model.numeric_cols = numeric_cols;
    out.model.categorical_cols = categorical_cols;
    out.model.prototypes = std::move(core.prototypes);
    out.model.cost = core.cost;
    out.model.cost_history = std::move(core.cost_history);
    out.model.iterations = core.iterations;
    return out;
}

std::string model_to_json(const KPrototypesModel& model, const Dataset& fit_data) {
    nlohmann::ordered_json j;
    j["k"] = model.k;
    j["gamma"] = model.gamma;
    j["ftu"] = model.ftu;
    j["seed"] = model.seed;
    j["feature_set"] = model.feature_set;
    j["iterations"] = model.iterations;
    j["cost"] = model.cost;
    j["prototypes"] = nlohmann::ordered_json::array();
    for (const auto& p : model.prototypes) {
        nlohmann::ordered_json jp;
        jp["numeric"] = p.numeric;
        nlohmann::ordered_json modes = nlohmann::ordered_json::array();
        for (size_t f = 0; f < model.categorical_cols.size(); ++f) {
            const auto& col = fit_data.column(model.categorical_cols[f]);
            modes.push_back(col.levels[static_cast<size_t>(p.modes[f])]);
        }
        jp["modes"] = modes;
        j["prototypes"].push_back(jp);
    }
    return j.dump(2) + "\n";
}

}  // namespace fairclust::cluster
