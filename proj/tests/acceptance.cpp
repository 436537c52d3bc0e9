// Acceptance suite: every gate below runs end-to-end against the committed
// fixtures (or user-supplied CSVs via FAIRCLUST_ADULT_CSV / _SCHEMA and
// FAIRCLUST_COMPAS_CSV / _SCHEMA) and prints one pass/fail line. The process
// exits with the number of failed gates.

#include <chrono>
#include <cmath>
#include <cstdio>
#include <cstdlib>
#include <string>
#include <vector>

#include "fairclust/metrics.hpp"
#include "fairclust/oracle.hpp"
#include "fairclust/pipeline.hpp"
#include "fairclust/rng.hpp"
#include "fairclust/scm.hpp"
#include "fairclust/transport.hpp"
#include "support/testutil.hpp"

using namespace fairclust;

namespace {

struct Gate {
    std::string name;
    bool pass = false;
    std::string detail;
    double seconds = 0.0;
};

std::vector<Gate> gates;

class Timer {
public:
    Timer() : start_(std::chrono::steady_clock::now()) {}
    double seconds() const {
        return std::chrono::duration<double>(std::chrono::steady_clock::now() - start_)
            .count();
    }

private:
    std::chrono::steady_clock::time_point start_;
};

void record(const std::string& name, bool pass, const std::string& detail,
            double seconds) {
    gates.push_back({name, pass, detail, seconds});
    std::printf("[%zu] %-28s %s  (%s; %.1fs)\n", gates.size(), name.c_str(),
                pass ? "PASS" : "FAIL", detail.c_str(), seconds);
    std::fflush(stdout);
}

std::string fmt(double v) {
    char buf[64];
    std::snprintf(buf, sizeof(buf), "%.4g", v);
    return buf;
}

const scm::AssignmentSpec& named_assignment(const scm::ScmSpec& spec,
                                            const std::string& name) {
    for (const auto& a : spec.assignments)
        if (a.name == name) return a;
    throw std::runtime_error("missing assignment " + name);
}

metrics::PointEffects points_for(const Dataset& d, const cluster::Assignment& a) {
    const auto& schema = d.schema();
    return metrics::point_effects(metrics::build_tables(
        d, a.labels, a.k, CellSpace::build(d, schema.z_indices(), schema.bins),
        CellSpace::build(d, schema.w_indices(), schema.bins)));
}

// ------------------------------------------------------------------
// 1. Oracle equivalence: plug-in estimates within 0.02 of enumeration.
// ------------------------------------------------------------------
void criterion_oracle_equivalence() {
    Timer timer;
    const auto spec = testutil::load_fixture_scm("reference_scm.json");
    const Dataset d = scm::sample(spec, 100000, 7);
    double max_err = 0.0;
    for (const char* name : {"by_w", "majority"}) {
        const auto& aspec = named_assignment(spec, name);
        const auto map = scm::make_cluster_map(spec, aspec);
        const auto gt = oracle::ground_truth_effects(spec, map, aspec.k);
        const auto a = testutil::labels_from_map(spec, d, map, aspec.k, false);
        const auto points = points_for(d, a);
        for (size_t c = 0; c < static_cast<size_t>(aspec.k); ++c) {
            max_err = std::max(max_err, std::abs(points.tv[c] - gt.clusters[c].tv));
            max_err = std::max(max_err, std::abs(points.nde[c] - gt.clusters[c].nde));
            max_err = std::max(max_err, std::abs(points.nie[c] - gt.clusters[c].nie_x0x1));
            max_err = std::max(max_err, std::abs(points.exp_se[c] - gt.clusters[c].exp_se));
        }
    }
    const double elapsed = timer.seconds();
    record("oracle-equivalence", max_err <= 0.02 && elapsed < 60.0,
           "max |estimate - oracle| = " + fmt(max_err) + " <= 0.02, n=100000",
           elapsed);
}

// ------------------------------------------------------------------
// 2. Lemma 1 exactness: FTU assignments have exactly zero NDE, both for
//    the plug-in on populated discrete cells and for the oracle.
// ------------------------------------------------------------------
void criterion_lemma1() {
    Timer timer;
    double worst_plugin = 0.0;
    double worst_oracle = 0.0;
    bool populated_ok = true;
    for (uint64_t seed = 1; seed <= 20; ++seed) {
        const auto spec = testutil::random_scm(seed);
        const auto map = testutil::random_cluster_map(spec, seed, 2, /*x_free=*/true);

        const auto gt = oracle::ground_truth_effects(spec, map, 2);
        for (const auto& c : gt.clusters)
            worst_oracle = std::max(worst_oracle, std::abs(c.nde));

        const size_t n = testutil::populated_sample_size(spec);
        const Dataset d = scm::sample(spec, n, 100 + seed);
        const auto a = testutil::labels_from_map(spec, d, map, 2, true);
        const auto& schema = d.schema();
        const auto tables = metrics::build_tables(
            d, a.labels, 2, CellSpace::build(d, schema.z_indices(), schema.bins),
            CellSpace::build(d, schema.w_indices(), schema.bins));
        for (const auto& [key, cell] : tables.zw) {
            (void)key;
            if (cell.n[0] < kSmoothingMinCount || cell.n[1] < kSmoothingMinCount)
                populated_ok = false;
        }
        const auto points = metrics::point_effects(tables);
        for (double v : points.nde) worst_plugin = std::max(worst_plugin, std::abs(v));
    }
    record("lemma1-nde-exactness",
           worst_plugin <= 1e-12 && worst_oracle == 0.0 && populated_ok,
           "plug-in max |NDE| = " + fmt(worst_plugin) + ", oracle max = " +
               fmt(worst_oracle) + ", 20 specs",
           timer.seconds());
}

// ------------------------------------------------------------------
// 3. Proposition 2: decomposition residual vanishes under the pinned
//    convention, at the oracle (1e-12) and plug-in (1e-10) levels.
// ------------------------------------------------------------------
void criterion_decomposition() {
    Timer timer;
    double worst_oracle = 0.0;
    double worst_plugin = 0.0;
    int empty_w_specs = 0;
    for (uint64_t seed = 1; seed <= 20; ++seed) {
        const auto spec = testutil::random_scm(seed);
        if (spec.schema().w_indices().empty()) ++empty_w_specs;
        const auto map = testutil::random_cluster_map(spec, seed + 500, 2, false);
        const auto checks = oracle::decomposition_check(spec, map, 2);
        for (const auto& c : checks)
            worst_oracle = std::max(worst_oracle, std::abs(c.residual_x1x0));

        const size_t n = testutil::populated_sample_size(spec);
        const Dataset d = scm::sample(spec, n, 300 + seed);
        const auto a = testutil::labels_from_map(spec, d, map, 2, false);
        const auto points = points_for(d, a);
        for (size_t c = 0; c < 2; ++c) {
            const double residual =
                points.tv[c] - (points.nde[c] - points.nie_reversed[c] + points.exp_se[c]);
            worst_plugin = std::max(worst_plugin, std::abs(residual));
        }
    }
    record("prop2-decomposition",
           worst_oracle <= 1e-12 && worst_plugin <= 1e-10,
           "oracle residual = " + fmt(worst_oracle) + " <= 1e-12, plug-in = " +
               fmt(worst_plugin) + " <= 1e-10 (" + std::to_string(empty_w_specs) +
               " empty-W specs)",
           timer.seconds());
}

// ------------------------------------------------------------------
// 4. Lemma 2 / Lemma 3 bounds dominate the estimates on 50 seeded runs.
// ------------------------------------------------------------------
void criterion_bounds() {
    Timer timer;
    const auto spec = testutil::load_fixture_scm("reference_scm.json");
    int violations = 0;
    double min_margin = 1e9;
    for (uint64_t seed = 1; seed <= 50; ++seed) {
        const Dataset d = scm::sample(spec, 5000, 1000 + seed);
        pipeline::RunConfig cfg;
        cfg.k = 2;
        cfg.seed = seed;
        cfg.flags = EffectFlags{true, true, true};
        cfg.bootstrap = {1, 1};
        const auto res = pipeline::run_algorithm1(d, cfg);
        for (const auto& c : res.report.clusters) {
            if (!c.nie_bound || !c.exp_se_bound) {
                ++violations;
                continue;
            }
            const double nie_margin = *c.nie_bound - std::abs(c.nie.point);
            const double se_margin = *c.exp_se_bound - std::abs(c.exp_se.point);
            min_margin = std::min({min_margin, nie_margin, se_margin});
            if (nie_margin < 0.0 || se_margin < 0.0) ++violations;
        }
    }
    record("lemma-bounds-dominance", violations == 0,
           std::to_string(violations) + " violations in 50 runs, min margin = " +
               fmt(min_margin),
           timer.seconds());
}

// ------------------------------------------------------------------
// 5. Theorem 1 end to end at n = 100 000.
// ------------------------------------------------------------------
void criterion_theorem1() {
    Timer timer;
    const auto spec = testutil::load_fixture_scm("reference_scm.json");
    const Dataset d = scm::sample(spec, 100000, 7);

    pipeline::RunConfig cfg;
    cfg.k = 2;
    cfg.seed = 7;
    cfg.bootstrap = {1, 1};

    cfg.flags = EffectFlags{true, true, true};
    const auto full = pipeline::run_algorithm1(d, cfg);
    bool pass = true;
    double full_max = 0.0;
    for (const auto& c : full.report.clusters) {
        pass &= std::abs(c.nde.point) <= 1e-12;
        full_max = std::max({full_max, std::abs(c.nie.point), std::abs(c.exp_se.point),
                             std::abs(c.tv.point)});
    }
    pass &= full_max <= 0.03;

    cfg.flags = EffectFlags{true, true, false};
    const auto no_se = pipeline::run_algorithm1(d, cfg);
    double exp_se_min = 1e9;
    for (const auto& c : no_se.report.clusters) {
        pass &= std::abs(c.nde.point) <= 0.03;
        pass &= std::abs(c.nie.point) <= 0.03;
        exp_se_min = std::min(exp_se_min, std::abs(c.exp_se.point));
    }
    pass &= exp_se_min >= 0.05;

    record("theorem1-end-to-end", pass,
           "(1,1,1): |NDE| <= 1e-12, others <= " + fmt(full_max) +
               "; (1,1,0): |Exp-SE| >= " + fmt(exp_se_min),
           timer.seconds());
}

// ------------------------------------------------------------------
// 6. Example 2: balance induces a direct effect, Algorithm 1 does not.
// ------------------------------------------------------------------
void criterion_example2() {
    Timer timer;
    const auto spec = testutil::load_fixture_scm("example2_scm.json");
    const Dataset d = scm::sample(spec, 10000, 7);

    const auto balanced = cluster::balanced_fit(d, 2, -1.0, 7);
    const auto balanced_map = pipeline::cluster_map_from_labels(spec, d, balanced.assignment);
    const auto gt_balanced = oracle::ground_truth_effects(spec, balanced_map, 2);
    double balanced_nde = 0.0;
    for (const auto& c : gt_balanced.clusters)
        balanced_nde = std::max(balanced_nde, std::abs(c.nde));

    pipeline::RunConfig cfg;
    cfg.k = 2;
    cfg.seed = 7;
    cfg.flags = EffectFlags{true, true, true};
    cfg.bootstrap = {1, 1};
    const auto res = pipeline::run_algorithm1(d, cfg);
    const auto causal_map = pipeline::cluster_map_from_model(spec, res.fit.model);
    const auto gt_causal = oracle::ground_truth_effects(spec, causal_map, 2);
    double causal_nde = 0.0;
    for (const auto& c : gt_causal.clusters)
        causal_nde = std::max(causal_nde, std::abs(c.nde));

    record("example2-balance-vs-causal",
           balanced_nde > 0.05 && causal_nde == 0.0,
           "balanced oracle |NDE| = " + fmt(balanced_nde) + " > 0.05, causal = " +
               fmt(causal_nde),
           timer.seconds());
}

// ------------------------------------------------------------------
// 7. Qualitative benchmark reproduction on Adult/COMPAS-shaped data.
// ------------------------------------------------------------------
struct MethodSummary {
    double max_abs_nde = 0.0;
    double max_abs_tv = 0.0;
    double max_abs_all = 0.0;
};

MethodSummary summarize(const pipeline::MethodRun& run) {
    MethodSummary s;
    for (const auto& c : run.report.clusters) {
        s.max_abs_nde = std::max(s.max_abs_nde, std::abs(c.nde.point));
        s.max_abs_tv = std::max(s.max_abs_tv, std::abs(c.tv.point));
        s.max_abs_all = std::max({s.max_abs_all, std::abs(c.tv.point),
                                  std::abs(c.nde.point), std::abs(c.nie.point),
                                  std::abs(c.exp_se.point)});
    }
    return s;
}

bool benchmark_dataset(const std::string& label, const Dataset& d, std::string* detail) {
    pipeline::RunConfig cfg;
    cfg.k = 2;
    cfg.seed = 7;
    cfg.bins = d.schema().bins;  // the schema's declared discretization
    cfg.bootstrap = {100, 5};
    Timer timer;
    const auto result = pipeline::run_benchmark(d, cfg);
    const double elapsed = timer.seconds();

    MethodSummary unadjusted, ftu, balanced, causal_se;
    double smallest_other = 1e9;
    for (const auto& run : result.methods) {
        if (run.skipped) return false;
        const MethodSummary s = summarize(run);
        if (run.method == "unadjusted") unadjusted = s;
        else if (run.method == "ftu") ftu = s;
        else if (run.method == "balanced") balanced = s;
        if (run.method == "causal_nde_nie_se") causal_se = s;
        else smallest_other = std::min(smallest_other, s.max_abs_all);
    }
    const bool pass = ftu.max_abs_nde < unadjusted.max_abs_nde &&
                      balanced.max_abs_tv < unadjusted.max_abs_tv &&
                      causal_se.max_abs_all < smallest_other && elapsed < 600.0;
    *detail += label + ": NDE " + fmt(ftu.max_abs_nde) + "<" + fmt(unadjusted.max_abs_nde) +
               ", TV " + fmt(balanced.max_abs_tv) + "<" + fmt(unadjusted.max_abs_tv) +
               ", causal max " + fmt(causal_se.max_abs_all) + "<" + fmt(smallest_other) +
               " (" + fmt(elapsed) + "s) ";
    return pass;
}

Dataset load_or_synthesize(const char* csv_env, const char* schema_env,
                           const std::string& fixture, std::string* detail) {
    const char* csv = std::getenv(csv_env);
    const char* schema_path = std::getenv(schema_env);
    if (csv && schema_path) {
        *detail += std::string("(user csv) ");
        auto [d, report] = load_dataset(csv, load_schema(schema_path));
        return d;
    }
    const auto spec = testutil::load_fixture_scm(fixture);
    return scm::sample(spec, 20000, 7);
}

void criterion_benchmark() {
    Timer timer;
    std::string detail;
    bool pass = true;
    {
        const Dataset adult = load_or_synthesize("FAIRCLUST_ADULT_CSV",
                                                 "FAIRCLUST_ADULT_SCHEMA",
                                                 "adult_like_scm.json", &detail);
        pass &= benchmark_dataset("adult", adult, &detail);
    }
    {
        const Dataset compas = load_or_synthesize("FAIRCLUST_COMPAS_CSV",
                                                  "FAIRCLUST_COMPAS_SCHEMA",
                                                  "compas_like_scm.json", &detail);
        pass &= benchmark_dataset("compas", compas, &detail);
    }
    record("benchmark-qualitative", pass, detail, timer.seconds());
}

// ------------------------------------------------------------------
// 8. Bootstrap coverage of the oracle TV.
// ------------------------------------------------------------------
void criterion_coverage() {
    Timer timer;
    const auto spec = testutil::load_fixture_scm("reference_scm.json");
    const auto& aspec = named_assignment(spec, "by_w");
    const auto map = scm::make_cluster_map(spec, aspec);
    const auto gt = oracle::ground_truth_effects(spec, map, aspec.k);

    const int reps = 200;
    int covered = 0;
    for (int r = 0; r < reps; ++r) {
        const Dataset d = scm::sample(spec, 5000, 3000 + static_cast<uint64_t>(r));
        const auto a = testutil::labels_from_map(spec, d, map, aspec.k, true);
        const auto report = metrics::full_report(d, d, a, nullptr, aspec.k, {100, 5},
                                                 derive_seed(9000, static_cast<uint64_t>(r)));
        const auto& tv = report.clusters[1].tv;
        const double oracle_tv = gt.clusters[1].tv;
        if (tv.ci_low <= oracle_tv && oracle_tv <= tv.ci_high) ++covered;
    }
    const double rate = static_cast<double>(covered) / reps;
    record("bootstrap-coverage", rate >= 0.88,
           "TV coverage " + std::to_string(covered) + "/200 = " + fmt(rate) + " >= 0.88",
           timer.seconds());
}

// ------------------------------------------------------------------
// 9. Byte-identical outputs across worker counts.
// ------------------------------------------------------------------
void criterion_determinism() {
    Timer timer;
    const auto spec = testutil::load_fixture_scm("reference_scm.json");
    const Dataset d = scm::sample(spec, 3000, 7);
    pipeline::RunConfig cfg;
    cfg.k = 2;
    cfg.seed = 7;
    cfg.bootstrap = {25, 3};
    setenv("FAIRCLUST_WORKERS", "1", 1);
    const std::string one = pipeline::benchmark_csv(pipeline::run_benchmark(d, cfg));
    setenv("FAIRCLUST_WORKERS", "4", 1);
    const std::string four = pipeline::benchmark_csv(pipeline::run_benchmark(d, cfg));
    const std::string again = pipeline::benchmark_csv(pipeline::run_benchmark(d, cfg));
    unsetenv("FAIRCLUST_WORKERS");
    record("determinism-workers", one == four && four == again,
           "metrics.csv bytes identical across 1 and 4 workers and reruns",
           timer.seconds());
}

}  // namespace

int main() {
    std::printf("fairclust acceptance suite\n");
    criterion_oracle_equivalence();
    criterion_lemma1();
    criterion_decomposition();
    criterion_bounds();
    criterion_theorem1();
    criterion_example2();
    criterion_benchmark();
    criterion_coverage();
    criterion_determinism();

    int failures = 0;
    for (const auto& g : gates)
        if (!g.pass) ++failures;
    std::printf("%d/%zu criteria passed\n", static_cast<int>(gates.size()) - failures,
                gates.size());
    return failures;
}
