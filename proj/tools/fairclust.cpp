// fairclust — causally fair clustering toolkit.
//
// Subcommands:
//   simulate   sample a synthetic SCM and write its exact ground truth
//   adapt      fit and apply the optimal-transport adaptation
//   cluster    k-prototypes clustering (optionally FTU)
//   evaluate   audit an externally supplied assignment
//   benchmark  run the five-method comparison and emit tidy metrics

#include <filesystem>
#include <fstream>
#include <iostream>
#include <sstream>

#include "CLI11.hpp"

#include "fairclust/pipeline.hpp"
#include "fairclust/rng.hpp"

namespace fs = std::filesystem;
using namespace fairclust;

namespace {

void write_text(const fs::path& path, const std::string& content) {
    fs::create_directories(path.parent_path().empty() ? "." : path.parent_path());
    std::ofstream out(path, std::ios::binary);
    if (!out) throw ValidationError("cannot write " + path.string());
    out << content;
}

EffectFlags parse_flags(const std::string& s) {
    // accepted forms: "1,1,0" or "110"
    std::string digits;
    for (char c : s)
        if (c == '0' || c == '1') digits += c;
    if (digits.size() != 3)
        throw ValidationError("--flags must be three binary digits (NDE,NIE,SE)");
    return EffectFlags{digits[0] == '1', digits[1] == '1', digits[2] == '1'};
}

struct CommonOpts {
    std::string data_path;
    std::string schema_path;
    std::string out_dir = "out";
    uint64_t seed = 0;
    int bins = 10;
};

void add_common(CLI::App* cmd, CommonOpts* opts) {
    cmd->add_option("--data", opts->data_path, "input CSV")->required();
    cmd->add_option("--schema", opts->schema_path, "schema JSON")->required();
    cmd->add_option("--out", opts->out_dir, "output directory");
    cmd->add_option("--seed", opts->seed, "random seed");
    cmd->add_option("--bins", opts->bins, "equal-frequency bins for continuous columns");
}

Dataset load_with_report(const CommonOpts& opts) {
    const SfmSchema schema = load_schema(opts.schema_path);
    auto [dataset, report] = load_dataset(opts.data_path, schema);
    if (report.rows_dropped > 0) {
        std::cerr << "warning: dropped " << report.rows_dropped << " of "
                  << report.rows_read << " rows\n";
        for (const auto& w : report.warnings) std::cerr << "  " << w << "\n";
    }
    return dataset.with_bins(opts.bins);
}

int run(int argc, char** argv) {
    CLI::App app{"causally fair clustering and effect auditing"};
    app.require_subcommand(1);

    // simulate
    auto* sim = app.add_subcommand("simulate", "sample an SCM and write ground truth");
    std::string scm_path;
    size_t sim_n = 10000;
    uint64_t sim_seed = 7;
    std::string sim_out = "out";
    sim->add_option("--scm", scm_path, "SCM spec JSON")->required();
    sim->add_option("--n", sim_n, "rows to sample");
    sim->add_option("--seed", sim_seed, "random seed");
    sim->add_option("--out", sim_out, "output directory");

    // adapt
    auto* adapt = app.add_subcommand("adapt", "fit and apply the transport adaptation");
    CommonOpts adapt_opts;
    std::string adapt_flags = "1,1,1";
    add_common(adapt, &adapt_opts);
    adapt->add_option("--flags", adapt_flags, "NDE,NIE,SE bits");

    // cluster
    auto* clus = app.add_subcommand("cluster", "k-prototypes clustering");
    CommonOpts clus_opts;
    int clus_k = 2;
    double clus_gamma = -1.0;
    bool clus_ftu = false;
    add_common(clus, &clus_opts);
    clus->add_option("--k", clus_k, "cluster count");
    clus->add_option("--gamma", clus_gamma, "categorical mismatch weight (default auto)");
    clus->add_flag("--ftu", clus_ftu, "exclude the protected attribute");

    // evaluate
    auto* eval = app.add_subcommand("evaluate", "audit an external assignment");
    CommonOpts eval_opts;
    std::string eval_assignment;
    std::string eval_plan;
    bool eval_ftu = false;
    int eval_inner = 100, eval_outer = 5;
    add_common(eval, &eval_opts);
    eval->add_option("--assignment", eval_assignment, "assignment CSV (1-based)")->required();
    eval->add_option("--plan", eval_plan, "transport plan JSON for bound evaluation");
    eval->add_flag("--ftu", eval_ftu, "assignment was produced without the protected attribute");
    eval->add_option("--inner", eval_inner, "inner bootstrap repetitions");
    eval->add_option("--outer", eval_outer, "outer bootstrap repetitions");

    // benchmark
    auto* bench = app.add_subcommand("benchmark", "five-method comparison");
    CommonOpts bench_opts;
    int bench_k = 2;
    double bench_gamma = -1.0;
    int bench_inner = 100, bench_outer = 5;
    add_common(bench, &bench_opts);
    bench->add_option("--k", bench_k, "cluster count");
    bench->add_option("--gamma", bench_gamma, "categorical mismatch weight (default auto)");
    bench->add_option("--inner", bench_inner, "inner bootstrap repetitions");
    bench->add_option("--outer", bench_outer, "outer bootstrap repetitions");

    CLI11_PARSE(app, argc, argv);

    if (sim->parsed()) {
        const scm::ScmSpec spec = scm::load_scm(scm_path);
        const pipeline::SimulateResult result = pipeline::run_simulate(spec, sim_n, sim_seed);
        fs::create_directories(sim_out);
        export_csv(result.data, (fs::path(sim_out) / "dataset.csv").string());
        write_text(fs::path(sim_out) / "schema.json", schema_to_json(result.data.schema()));
        write_text(fs::path(sim_out) / "ground_truth.json", result.ground_truth_json);
        std::cout << "simulated " << result.data.n() << " rows from '" << spec.name
                  << "' into " << sim_out << "\n";
        return 0;
    }

    if (adapt->parsed()) {
        const Dataset d = load_with_report(adapt_opts);
        pipeline::RunConfig cfg;
        cfg.dataset_path = adapt_opts.data_path;
        cfg.schema_path = adapt_opts.schema_path;
        cfg.flags = parse_flags(adapt_flags);
        cfg.seed = adapt_opts.seed;
        cfg.bins = adapt_opts.bins;
        cfg.out_dir = adapt_opts.out_dir;
        const auto plan = transport::fit_plan(d, cfg.flags, cfg.seed);
        const Dataset adapted = transport::apply_plan(d, plan);
        fs::create_directories(cfg.out_dir);
        export_csv(adapted, (fs::path(cfg.out_dir) / "adapted.csv").string());
        write_text(fs::path(cfg.out_dir) / "plan.json", transport::plan_to_json(plan, d));
        write_text(fs::path(cfg.out_dir) / "config.json", pipeline::config_to_json(cfg));
        for (const auto& w : plan.warnings) std::cerr << "warning: " << w << "\n";
        std::cout << "adapted dataset written to " << cfg.out_dir << "\n";
        return 0;
    }

    if (clus->parsed()) {
        const Dataset d = load_with_report(clus_opts);
        pipeline::RunConfig cfg;
        cfg.dataset_path = clus_opts.data_path;
        cfg.schema_path = clus_opts.schema_path;
        cfg.k = clus_k;
        cfg.gamma = clus_gamma;
        cfg.seed = clus_opts.seed;
        cfg.bins = clus_opts.bins;
        cfg.out_dir = clus_opts.out_dir;
        const auto fit = cluster::kprototypes_fit(d, clus_k, clus_gamma, clus_ftu,
                                                  clus_opts.seed);
        fs::create_directories(cfg.out_dir);
        pipeline::write_assignment_csv((fs::path(cfg.out_dir) / "assignment.csv").string(),
                                       fit.assignment);
        write_text(fs::path(cfg.out_dir) / "model.json", cluster::model_to_json(fit.model, d));
        write_text(fs::path(cfg.out_dir) / "config.json", pipeline::config_to_json(cfg));
        std::cout << "clustered " << d.n() << " rows into " << clus_k << " clusters (cost "
                  << fit.model.cost << ")\n";
        return 0;
    }

    if (eval->parsed()) {
        const Dataset d = load_with_report(eval_opts);
        const cluster::Assignment a =
            pipeline::read_assignment_csv(eval_assignment, d.n(), eval_ftu);
        std::optional<transport::TransportPlan> plan;
        if (!eval_plan.empty()) {
            std::ifstream in(eval_plan);
            if (!in) throw ValidationError("cannot open plan " + eval_plan);
            std::ostringstream buf;
            buf << in.rdbuf();
            plan = transport::plan_from_json(buf.str(), d);
        }
        pipeline::RunConfig cfg;
        cfg.dataset_path = eval_opts.data_path;
        cfg.schema_path = eval_opts.schema_path;
        cfg.k = a.k;
        cfg.seed = eval_opts.seed;
        cfg.bins = eval_opts.bins;
        cfg.bootstrap = {eval_inner, eval_outer};
        cfg.out_dir = eval_opts.out_dir;
        const auto report = metrics::full_report(d, d, a, plan ? &*plan : nullptr, a.k,
                                                 cfg.bootstrap, derive_seed(cfg.seed, 0x4e9u));
        fs::create_directories(cfg.out_dir);
        write_text(fs::path(cfg.out_dir) / "report.json", metrics::report_to_json(report));
        write_text(fs::path(cfg.out_dir) / "config.json", pipeline::config_to_json(cfg));
        std::cout << "audit written to " << cfg.out_dir << "\n";
        return 0;
    }

    if (bench->parsed()) {
        const Dataset d = load_with_report(bench_opts);
        pipeline::RunConfig cfg;
        cfg.dataset_path = bench_opts.data_path;
        cfg.schema_path = bench_opts.schema_path;
        cfg.k = bench_k;
        cfg.gamma = bench_gamma;
        cfg.seed = bench_opts.seed;
        cfg.bins = bench_opts.bins;
        cfg.bootstrap = {bench_inner, bench_outer};
        cfg.out_dir = bench_opts.out_dir;
        const auto result = pipeline::run_benchmark(d, cfg);
        pipeline::write_benchmark_outputs(result, cfg);
        for (const auto& run : result.methods)
            if (run.skipped)
                std::cerr << "warning: " << run.method << " skipped: " << run.skip_reason << "\n";
        std::cout << "benchmark written to " << cfg.out_dir << "\n";
        return 0;
    }
    return 0;
}

}  // namespace

int main(int argc, char** argv) {
    try {
        return run(argc, argv);
    } catch (const SchemaError& e) {
        std::cerr << "error: " << e.what() << "\n";
        return 1;
    } catch (const ValidationError& e) {
        std::cerr << "error: " << e.what() << "\n";
        return 1;
    } catch (const HypothesisViolation& e) {
        std::cerr << "error: " << e.what() << "\n";
        return 1;
    } catch (const std::exception& e) {
        std::cerr << "runtime error: " << e.what() << "\n";
        return 2;
    }
}
