#include "fairclust/pipeline.hpp"

#include <filesystem>
#include <fstream>
#include <unordered_map>

#include "json.hpp"

#include "fairclust/csv.hpp"
#include "fairclust/rng.hpp"

namespace fairclust::pipeline {

using nlohmann::ordered_json;

std::string config_to_json(const RunConfig& cfg) {
    ordered_json j;
    j["dataset"] = cfg.dataset_path;
    j["schema"] = cfg.schema_path;
    j["flags"] = {{"nde", cfg.flags.nde}, {"nie", cfg.flags.nie}, {"se", cfg.flags.se}};
    j["k"] = cfg.k;
    if (cfg.gamma >= 0.0)
        j["gamma"] = cfg.gamma;
    else
        j["gamma"] = "auto";
    j["seed"] = cfg.seed;
    j["bootstrap"] = {{"n_inner", cfg.bootstrap.n_inner}, {"n_outer", cfg.bootstrap.n_outer}};
    j["bins"] = cfg.bins;
    j["out_dir"] = cfg.out_dir;
    return j.dump(2) + "\n";
}

namespace {

[[noreturn]] void rethrow_with_stage(const std::exception& e, const std::string& module,
                                     const std::string& stage) {
    const std::string msg = "[" + module + "] " + stage + ": " + e.what();
    if (dynamic_cast<const SchemaError*>(&e)) throw SchemaError(msg);
    if (dynamic_cast<const HypothesisViolation*>(&e)) throw HypothesisViolation(msg);
    throw ValidationError(msg);
}

}  // namespace

Algorithm1Result run_algorithm1(const Dataset& d_in, const RunConfig& cfg) {
    const Dataset d = d_in.schema().bins == cfg.bins ? d_in : d_in.with_bins(cfg.bins);

    transport::TransportPlan plan;
    try {
        plan = transport::fit_plan(d, cfg.flags, cfg.seed);
    } catch (const std::exception& e) {
        rethrow_with_stage(e, "transport", "algorithm lines 1-13 (optimal transport)");
    }

    Dataset adapted = d;
    try {
        adapted = transport::apply_plan(d, plan);
    } catch (const std::exception& e) {
        rethrow_with_stage(e, "transport", "algorithm lines 1-13 (data adaptation)");
    }

    cluster::FitResult fit;
    try {
        fit = cluster::kprototypes_fit(adapted, cfg.k, cfg.gamma, /*ftu=*/cfg.flags.nde,
                                       cfg.seed);
    } catch (const std::exception& e) {
        rethrow_with_stage(e, "clustering", "algorithm lines 14-19 (cluster step)");
    }

    metrics::EffectReport report;
    try {
        report = metrics::full_report(d, adapted, fit.assignment, &plan, cfg.k,
                                      cfg.bootstrap, derive_seed(cfg.seed, 0x4e9u));
    } catch (const std::exception& e) {
        rethrow_with_stage(e, "causal_metrics", "effect report");
    }

    Algorithm1Result out{std::move(plan), std::move(adapted), std::move(fit),
                         std::move(report)};
    return out;
}

BenchmarkResult run_benchmark(const Dataset& d_in, const RunConfig& cfg) {
    const Dataset d = d_in.schema().bins == cfg.bins ? d_in : d_in.with_bins(cfg.bins);
    BenchmarkResult out;

    auto flag_method = [&](const std::string& name, EffectFlags flags) {
        RunConfig sub = cfg;
        sub.flags = flags;
        Algorithm1Result res = run_algorithm1(d, sub);
        MethodRun run{name,
                      std::move(res.fit.assignment),
                      std::move(res.report),
                      std::move(res.plan),
                      std::move(res.adapted),
                      false,
                      {}};
        out.methods.push_back(std::move(run));
    };

    flag_method("unadjusted", EffectFlags{false, false, false});
    flag_method("ftu", EffectFlags{true, false, false});

    // Balanced baseline: fairlet construction; no transport plan, audited on
    // the original covariates it clustered.
    if (d.group_size(0) == 0 || d.group_size(1) == 0) {
        out.methods.push_back(MethodRun{"balanced",
                                        {},
                                        {},
                                        std::nullopt,
                                        d,
                                        true,
                                        "a protected group is empty; balance is undefined"});
    } else {
        cluster::FitResult fit = cluster::balanced_fit(d, cfg.k, cfg.gamma, cfg.seed);
        metrics::EffectReport report =
            metrics::full_report(d, d, fit.assignment, nullptr, cfg.k, cfg.bootstrap,
                                 derive_seed(cfg.seed, 0x4e9u));
        out.methods.push_back(
            MethodRun{"balanced", std::move(fit.assignment), std::move(report),
                      std::nullopt, d, false, {}});
    }

    flag_method("causal_nde_nie", EffectFlags{true, true, false});
    flag_method("causal_nde_nie_se", EffectFlags{true, true, true});
    return out;
}

std::string benchmark_csv(const BenchmarkResult& result) {
    std::string csv = "method,cluster,metric,point,lo,hi\n";
    for (const auto& run : result.methods) {
        if (run.skipped) continue;
        for (const auto& c : run.report.clusters) {
            const std::pair<const char*, const metrics::EffectEstimate*> rows[] = {
                {"tv", &c.tv}, {"nde", &c.nde}, {"nie", &c.nie}, {"exp_se", &c.exp_se}};
            for (const auto& [metric, estimate] : rows) {
                csv += run.method;
                csv += ',';
                csv += std::to_string(c.cluster);
                csv += ',';
                csv += metric;
                csv += ',';
                csv += fmt_double(estimate->point);
                csv += ',';
                csv += fmt_double(estimate->ci_low);
                csv += ',';
                csv += fmt_double(estimate->ci_high);
                csv += '\n';
            }
        }
    }
    return csv;
}

std::string benchmark_report_json(const BenchmarkResult& result) {
    ordered_json j;
    j["methods"] = ordered_json::object();
    for (const auto& run : result.methods) {
        if (run.skipped) {
            j["methods"][run.method] = {{"skipped", true}, {"reason", run.skip_reason}};
            continue;
        }
        ordered_json jm = nlohmann::json::parse(metrics::report_to_json(run.report));
        if (run.method == "balanced")
            jm["method_detail"] = "balanced (fairlet construction)";
        j["methods"][run.method] = jm;
    }
    return j.dump(2) + "\n";
}

void write_benchmark_outputs(const BenchmarkResult& result, const RunConfig& cfg) {
    namespace fs = std::filesystem;
    fs::create_directories(cfg.out_dir);
    auto write = [&](const std::string& name, const std::string& content) {
        std::ofstream out(fs::path(cfg.out_dir) / name, std::ios::binary);
        if (!out) throw ValidationError("cannot write " + name + " in " + cfg.out_dir);
        out << content;
    };
    write("metrics.csv", benchmark_csv(result));
    write("report.json", benchmark_report_json(result));
    write("config.json", config_to_json(cfg));
    for (const auto& run : result.methods) {
        if (run.skipped) continue;
        write_assignment_csv((fs::path(cfg.out_dir) / ("assignment_" + run.method + ".csv")).string(),
                             run.assignment);
        if (run.plan)
            write("plan_" + run.method + ".json",
                  transport::plan_to_json(*run.plan, run.measured));
    }
}

SimulateResult run_simulate(const scm::ScmSpec& spec, size_t n, uint64_t seed) {
    if (n == 0) throw ValidationError("simulate: n must be positive");
    SimulateResult out{scm::sample(spec, n, seed), {}};

    ordered_json j;
    j["scm"] = spec.name;
    j["n"] = n;
    j["seed"] = seed;
    j["joint_support"] = spec.joint_support();
    j["assignments"] = ordered_json::object();
    std::string pinned_overall;
    bool pinned_consistent = true;
    for (const auto& aspec : spec.assignments) {
        const auto map = scm::make_cluster_map(spec, aspec);
        const auto checks = oracle::decomposition_check(spec, map, aspec.k);
        const auto gt = oracle::ground_truth_effects(spec, map, aspec.k);
        ordered_json ja;
        ja["k"] = aspec.k;
        ja["clusters"] = ordered_json::array();
        for (size_t c = 0; c < gt.clusters.size(); ++c) {
            const auto& e = gt.clusters[c];
            const auto& chk = checks[c];
            ordered_json jc;
            jc["cluster"] = static_cast<int>(c) + 1;
            jc["tv"] = e.tv;
            jc["nde"] = e.nde;
            jc["nie_x0x1"] = e.nie_x0x1;
            jc["nie_x1x0"] = e.nie_x1x0;
            jc["exp_se"] = e.exp_se;
            jc["p_obs_x0"] = e.p_obs_x0;
            jc["p_obs_x1"] = e.p_obs_x1;
            jc["p_do_x0"] = e.p_do_x0;
            jc["p_do_x1"] = e.p_do_x1;
            jc["p_x1_w0"] = e.p_x1_w0;
            jc["p_x0_w1"] = e.p_x0_w1;
            jc["residual_x0x1"] = chk.residual_x0x1;
            jc["residual_x1x0"] = chk.residual_x1x0;
            jc["pinned"] = chk.pinned;
            ja["clusters"].push_back(jc);
            if (chk.pinned != "both") {
                if (pinned_overall.empty()) pinned_overall = chk.pinned;
                else if (pinned_overall != chk.pinned) pinned_consistent = false;
            }
        }
        j["assignments"][aspec.name] = ja;
    }
    j["pinned_nie_convention"] =
        pinned_overall.empty() ? "both" : (pinned_consistent ? pinned_overall : "mixed");
    out.ground_truth_json = j.dump(2) + "\n";
    return out;
}

scm::ClusterMap cluster_map_from_model(const scm::ScmSpec& spec,
                                       const cluster::KPrototypesModel& model) {
    // Dataset columns sampled from a spec are its variables in order, so the
    // model's column indices address spec.variables directly.
    auto value_of = [&spec](const std::vector<int>& levels, int var) {
        const auto& v = spec.variables[static_cast<size_t>(var)];
        return v.kind == Kind::continuous
                   ? v.numeric_levels[static_cast<size_t>(levels[static_cast<size_t>(var)])]
                   : static_cast<double>(levels[static_cast<size_t>(var)]);
    };
    const cluster::KPrototypesModel m = model;
    return [m, value_of](const std::vector<int>& levels) {
        int best = 0;
        double best_dist = -1.0;
        for (int c = 0; c < m.k; ++c) {
            const auto& p = m.prototypes[static_cast<size_t>(c)];
            double dist = 0.0;
            for (size_t f = 0; f < m.numeric_cols.size(); ++f) {
                const double diff = value_of(levels, m.numeric_cols[f]) - p.numeric[f];
                dist += diff * diff;
            }
            for (size_t f = 0; f < m.categorical_cols.size(); ++f) {
                const auto code = static_cast<int32_t>(
                    levels[static_cast<size_t>(m.categorical_cols[f])]);
                if (code != p.modes[f]) dist += m.gamma;
            }
            if (best_dist < 0.0 || dist < best_dist) {
                best_dist = dist;
                best = c;
            }
        }
        return best;
    };
}

scm::ClusterMap cluster_map_from_labels(const scm::ScmSpec& spec, const Dataset& d,
                                        const cluster::Assignment& a) {
    // Majority label per endogenous cell; rows realise cells, so the vote is
    // the empirical deterministic summary of the fitted assignment.
    std::vector<int64_t> radix(spec.variables.size());
    int64_t card = 1;
    for (size_t i = spec.variables.size(); i-- > 0;) {
        radix[i] = card;
        card *= spec.variables[i].cardinality();
    }
    auto key_of_levels = [radix](const std::vector<int>& levels) {
        int64_t key = 0;
        for (size_t i = 0; i < levels.size(); ++i) key += radix[i] * levels[i];
        return key;
    };

    std::unordered_map<int64_t, std::vector<int64_t>> votes;
    std::vector<int64_t> global(static_cast<size_t>(a.k), 0);
    for (size_t r = 0; r < d.n(); ++r) {
        int64_t key = 0;
        for (size_t i = 0; i < spec.variables.size(); ++i) {
            const auto& v = spec.variables[i];
            int level;
            if (v.kind == Kind::categorical) {
                level = d.column(static_cast<int>(i)).codes[r];
            } else {
                // map the numeric value back to its support index
                const double value = d.column(static_cast<int>(i)).values[r];
                level = 0;
                for (size_t l = 0; l < v.numeric_levels.size(); ++l)
                    if (v.numeric_levels[l] == value) { level = static_cast<int>(l); break; }
            }
            key += radix[i] * level;
        }
        auto& cell = votes[key];
        if (cell.empty()) cell.assign(static_cast<size_t>(a.k), 0);
        ++cell[static_cast<size_t>(a.labels[r])];
        ++global[static_cast<size_t>(a.labels[r])];
    }
    int global_majority = 0;
    for (size_t c = 1; c < global.size(); ++c)
        if (global[c] > global[static_cast<size_t>(global_majority)])
            global_majority = static_cast<int>(c);

    return [votes = std::move(votes), key_of_levels, global_majority](
               const std::vector<int>& levels) {
        auto it = votes.find(key_of_levels(levels));
        if (it == votes.end()) return global_majority;
        int best = 0;
        for (size_t c = 1; c < it->second.size(); ++c)
            if (it->second[c] > it->second[static_cast<size_t>(best)])
                best = static_cast<int>(c);
        return best;
    };
}

void write_assignment_csv(const std::string& path, const cluster::Assignment& a) {
    csv::Table table;
    table.header = {"cluster"};
    table.rows.reserve(a.labels.size());
    for (int32_t label : a.labels)
        table.rows.push_back({std::to_string(label + 1)});
    csv::write_file(path, table);
}

cluster::Assignment read_assignment_csv(const std::string& path, size_t expected_rows,
                                        bool ftu) {
    const csv::Table table = csv::read_file(path);
    if (table.header.size() != 1 || table.header[0] != "cluster")
        throw ValidationError("assignment csv must have a single 'cluster' column");
    if (table.rows.size() != expected_rows)
        throw ValidationError("assignment csv has " + std::to_string(table.rows.size()) +
                              " rows, dataset has " + std::to_string(expected_rows));
    cluster::Assignment a;
    a.ftu = ftu;
    a.labels.reserve(table.rows.size());
    int32_t max_label = 0;
    for (const auto& row : table.rows) {
        const int32_t label = static_cast<int32_t>(std::stol(row[0])) - 1;
        if (label < 0) throw ValidationError("assignment csv: cluster indices are 1-based");
        a.labels.push_back(label);
        max_label = std::max(max_label, label);
    }
    a.k = max_label + 1;
    return a;
}

}  // namespace fairclust::pipeline
