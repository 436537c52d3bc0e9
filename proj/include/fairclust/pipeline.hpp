#pragma once

#include <optional>
#include <string>
#include <vector>

#include "fairclust/clustering.hpp"
#include "fairclust/common.hpp"
#include "fairclust/dataset.hpp"
#include "fairclust/metrics.hpp"
#include "fairclust/oracle.hpp"
#include "fairclust/scm.hpp"
#include "fairclust/transport.hpp"

namespace fairclust::pipeline {

// Resolved run parameters; serialized alongside every report so outputs are
// reproducible from the echo alone.
struct RunConfig {
    std::string dataset_path;
    std::string schema_path;
    EffectFlags flags;
    int k = 2;
    double gamma = -1.0;  // negative = auto heuristic
    uint64_t seed = 0;
    metrics::BootstrapParams bootstrap;
    int bins = 10;
    std::string out_dir;
};

std::string config_to_json(const RunConfig& cfg);

struct Algorithm1Result {
    transport::TransportPlan plan;
    Dataset adapted;
    cluster::FitResult fit;
    metrics::EffectReport report;
};

// Lines 1-19 in order: fit/apply tau^z per the SE flag, fit/apply tau^w per
// the NIE flag, cluster with or without X per the NDE flag; then the effect
// report. Errors are re-raised with the module and algorithm stage attached.
Algorithm1Result run_algorithm1(const Dataset& d, const RunConfig& cfg);

struct MethodRun {
    std::string method;
    cluster::Assignment assignment;
    metrics::EffectReport report;
    std::optional<transport::TransportPlan> plan;
    Dataset measured;  // the dataset the clustering consumed (adapted or original)
    bool skipped = false;
    std::string skip_reason;
};

struct BenchmarkResult {
    std::vector<MethodRun> methods;
};

// The five-method comparison: unadjusted, ftu, balanced, causal_nde_nie,
// causal_nde_nie_se, all with the same seed. The balanced baseline is
// skipped with a warning when a protected group is empty.
BenchmarkResult run_benchmark(const Dataset& d, const RunConfig& cfg);

// Tidy plot-data format: method,cluster,metric,point,lo,hi.
std::string benchmark_csv(const BenchmarkResult& result);
std::string benchmark_report_json(const BenchmarkResult& result);

void write_benchmark_outputs(const BenchmarkResult& result, const RunConfig& cfg);

struct SimulateResult {
    Dataset data;
    std::string ground_truth_json;  // both NIE conventions + residuals
};

SimulateResult run_simulate(const scm::ScmSpec& spec, size_t n, uint64_t seed);

// Oracle adapters: deterministic f_C maps for fitted models and for
// row-label assignments (per-cell majority vote).
scm::ClusterMap cluster_map_from_model(const scm::ScmSpec& spec,
                                       const cluster::KPrototypesModel& model);
scm::ClusterMap cluster_map_from_labels(const scm::ScmSpec& spec, const Dataset& d,
                                        const cluster::Assignment& a);

void write_assignment_csv(const std::string& path, const cluster::Assignment& a);
cluster::Assignment read_assignment_csv(const std::string& path, size_t expected_rows,
                                        bool ftu);

}  // namespace fairclust::pipeline
