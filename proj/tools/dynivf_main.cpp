#include <cstdio>
#include <fstream>
#include <iostream>
#include <sstream>

#include <CLI11.hpp>

#include "dynivf/bench.hpp"
#include "dynivf/io.hpp"
#include "dynivf/snapshot.hpp"

using namespace dynivf;

namespace {

std::string slurp(const std::string& path) {
  std::ifstream in(path);
  if (!in.is_open()) throw ConfigError("cannot open config file: " + path);
  std::stringstream ss;
  ss << in.rdbuf();
  return ss.str();
}

void add_index_flags(CLI::App* cmd, IndexConfig& cfg, std::string& metric) {
  cmd->add_option("--n-c", cfg.n_c, "initial partition count (0 = live/target)");
  cmd->add_option("--n-p", cfg.n_p, "default probe count");
  cmd->add_option("--metric", metric, "distance metric: l2 or ip");
  cmd->add_option("--target-size", cfg.target_partition_size, "target partition size");
  cmd->add_option("--delta-capacity", cfg.delta_capacity, "delta store capacity");
  cmd->add_option("--build-iterations", cfg.build_iterations, "k-means iterations for builds");
  cmd->add_option("--slack", cfg.balance_slack, "balanced k-means capacity slack");
}

void add_policy_flags(CLI::App* cmd, AdaIvfParams& p) {
  cmd->add_option("--alpha", p.alpha, "temperature scale");
  cmd->add_option("--beta", p.beta, "imbalance vs drift weight");
  cmd->add_option("--tau-f", p.tau_f, "local indicator threshold");
  cmd->add_option("--tau-s", p.tau_s, "target partition size for reindexing");
  cmd->add_option("--radius", p.radius, "reclustering radius");
  cmd->add_option("--iota", p.iota, "local k-means iterations");
  cmd->add_option("--gamma", p.gamma, "imbalance vs error weight");
  cmd->add_option("--tau-g", p.tau_g, "global indicator threshold");
  cmd->add_option("--eta", p.eta, "temperature heating factor");
  cmd->add_option("--nu", p.nu, "temperature cooling factor");
  cmd->add_option("--min-size", p.min_size, "LIRE minimum partition size");
  cmd->add_option("--max-size", p.max_size, "LIRE maximum partition size");
  cmd->add_option("--rebuild-fraction", p.rebuild_fraction, "periodic rebuild trigger fraction");
  cmd->add_option("--dedrift-k1", p.dedrift_k1, "DeDrift largest/smallest count");
  cmd->add_option("--dedrift-epoch", p.dedrift_epoch, "DeDrift cadence in update batches");
}

void add_workload_flags(CLI::App* cmd, WorkloadSpec& spec, std::string& ratio) {
  cmd->add_option("--s0", spec.s0_count, "initial set size (absolute)");
  cmd->add_option("--s0-fraction", spec.s0_fraction, "initial set fraction of the dataset");
  cmd->add_option("--update-size", spec.update_size, "vectors per update batch");
  cmd->add_option("--insert-delete-ratio", ratio, "insert/delete batch ratio or 'inf'");
  cmd->add_option("--update-csf", spec.update_csf, "update cluster sample fraction (0,1]");
  cmd->add_option("--read-write-ratio", spec.read_write_ratio, "search/update operation ratio");
  cmd->add_flag("--rw-by-vectors", spec.rw_ratio_by_vectors,
                "interpret the read/write ratio as queries per updated vector");
  cmd->add_option("--query-csf", spec.query_csf, "query cluster sample fraction (0 = off)");
  cmd->add_option("--query-pool", spec.query_cluster_pool_fraction,
                  "fraction of clusters eligible for queries");
  cmd->add_option("--query-batch", spec.query_batch_size, "queries per search batch");
  cmd->add_option("--gen-clusters", spec.n_gen_clusters, "generator clustering granularity");
  cmd->add_option("--ops", spec.total_ops, "scheduled operations after the initial insert");
  cmd->add_option("--k", spec.k, "neighbors per query");
  cmd->add_option("--seed", spec.seed, "generator seed");
}

int run_cli(int argc, char** argv) {
  CLI::App app{"dynivf: dynamic IVF index benchmark harness"};
  app.require_subcommand(1);

  // build
  auto* build_cmd = app.add_subcommand("build", "build an index from an fvecs/bvecs dataset");
  std::string build_dataset, build_out, build_metric = "l2";
  std::uint64_t build_seed = 0;
  IndexConfig build_cfg;
  build_cmd->add_option("--dataset", build_dataset, "fvecs/bvecs dataset")->required();
  build_cmd->add_option("--out", build_out, "output snapshot path")->required();
  build_cmd->add_option("--seed", build_seed, "build seed");
  add_index_flags(build_cmd, build_cfg, build_metric);

  // gen-workload
  auto* gen_cmd = app.add_subcommand("gen-workload", "generate a workload trace");
  std::string gen_dataset, gen_queries, gen_out, gen_config, gen_ratio;
  WorkloadSpec gen_spec;
  gen_cmd->add_option("--dataset", gen_dataset, "fvecs/bvecs dataset")->required();
  gen_cmd->add_option("--queries", gen_queries, "optional fvecs query file");
  gen_cmd->add_option("--out", gen_out, "output trace path")->required();
  gen_cmd->add_option("--config", gen_config, "JSON workload spec (overrides flags)");
  add_workload_flags(gen_cmd, gen_spec, gen_ratio);

  // run
  auto* run_cmd = app.add_subcommand("run", "replay a trace under a maintenance policy");
  RunConfig run_cfg;
  std::string run_metric = "l2", run_policy = "adaivf", run_config_path;
  run_cmd->add_option("--trace", run_cfg.trace_path, "trace file to replay");
  run_cmd->add_option("--dataset", run_cfg.dataset_path, "dataset for inline generation");
  run_cmd->add_option("--queries", run_cfg.query_path, "query file for inline generation");
  run_cmd->add_option("--out", run_cfg.output_prefix, "output prefix (.csv/.json)");
  run_cmd->add_option("--policy", run_policy, "frozen|update|rebuild|dedrift|lire|adaivf");
  run_cmd->add_option("--recall-target", run_cfg.recall_target, "recall target for tuning");
  run_cmd->add_option("--k", run_cfg.k, "neighbors per query fallback");
  run_cmd->add_option("--cadence", run_cfg.measure_cadence, "measure every Nth search batch");
  run_cmd->add_option("--seed", run_cfg.seed, "run seed");
  run_cmd->add_option("--threads", run_cfg.threads, "search fan-out threads");
  run_cmd->add_flag("--deterministic-timing", run_cfg.deterministic_timing,
                    "use operation-count virtual timing (byte-identical CSVs)");
  bool no_audit = false;
  run_cmd->add_flag("--no-audit", no_audit, "skip per-operation invariant audits");
  bool temp_per_batch = false;
  run_cmd->add_flag("--temp-per-batch", temp_per_batch,
                    "apply the temperature rule once per search batch instead of per query");
  run_cmd->add_option("--config", run_config_path, "JSON run config (overrides flags)");
  add_index_flags(run_cmd, run_cfg.index, run_metric);
  add_policy_flags(run_cmd, run_cfg.policy.params);

  // ground-truth
  auto* gt_cmd = app.add_subcommand("ground-truth", "exact neighbors by linear scan");
  std::string gt_dataset, gt_queries, gt_out, gt_metric = "l2";
  std::size_t gt_k = 10;
  gt_cmd->add_option("--dataset", gt_dataset, "fvecs/bvecs dataset")->required();
  gt_cmd->add_option("--queries", gt_queries, "fvecs query file")->required();
  gt_cmd->add_option("--out", gt_out, "output ivecs path")->required();
  gt_cmd->add_option("--k", gt_k, "neighbors per query");
  gt_cmd->add_option("--metric", gt_metric, "distance metric: l2 or ip");

  // report
  auto* report_cmd = app.add_subcommand("report", "normalized comparison across run summaries");
  std::vector<std::string> report_inputs;
  std::string report_out, report_mode = "max";
  report_cmd->add_option("summaries", report_inputs, "summary JSON files (or one CSV with --timeline)")
      ->required();
  report_cmd->add_option("--out", report_out, "output CSV (stdout when omitted)");
  report_cmd->add_option("--normalize", report_mode, "normalization: max or rebuild");
  bool report_timeline = false;
  report_cmd->add_flag("--timeline", report_timeline,
                       "normalize one run's metrics CSV column-by-column instead");

  CLI11_PARSE(app, argc, argv);

  if (build_cmd->parsed()) {
    build_cfg.metric = metric_from_name(build_metric);
    build_cfg.seed = build_seed;
    VectorDataset dataset = build_dataset.ends_with(".bvecs") ? read_bvecs(build_dataset)
                                                              : read_fvecs(build_dataset);
    IvfIndex index = IvfIndex::build(dataset, build_cfg);
    save_index(index, build_out);
    std::printf("built %zu partitions over %llu vectors -> %s\n", index.partition_count(),
                static_cast<unsigned long long>(index.live_count()), build_out.c_str());
    return 0;
  }

  if (gen_cmd->parsed()) {
    if (gen_ratio == "inf" || gen_ratio == "INF")
      gen_spec.insert_delete_ratio = std::numeric_limits<double>::infinity();
    else if (!gen_ratio.empty())
      gen_spec.insert_delete_ratio = std::stod(gen_ratio);
    if (!gen_config.empty()) apply_workload_spec_json(slurp(gen_config), gen_spec);
    VectorDataset dataset =
        gen_dataset.ends_with(".bvecs") ? read_bvecs(gen_dataset) : read_fvecs(gen_dataset);
    std::optional<VectorDataset> queries;
    if (!gen_queries.empty()) queries = read_fvecs(gen_queries);
    Trace trace = generate(dataset, gen_spec, queries ? &*queries : nullptr);
    trace.dataset_ref = gen_dataset;
    save_trace(trace, gen_out);
    std::printf("trace with %zu operations -> %s\n", trace.ops.size(), gen_out.c_str());
    return 0;
  }

  if (run_cmd->parsed()) {
    run_cfg.index.metric = metric_from_name(run_metric);
    run_cfg.policy.kind = policy_from_name(run_policy);
    run_cfg.audit = !no_audit;
    run_cfg.temperature_per_query = !temp_per_batch;
    if (!run_config_path.empty()) apply_run_config_json(slurp(run_config_path), run_cfg);
    RunSummary summary = run(run_cfg);
    std::printf("policy=%s rows=%zu mean_qps=%.1f update_s=%.3f maintenance_s=%.3f partitions=%zu\n",
                summary.policy.c_str(), summary.rows.size(), summary.mean_qps_at_target,
                summary.total_update_seconds, summary.total_maintenance_seconds,
                summary.final_partition_count);
    return 0;
  }

  if (gt_cmd->parsed()) {
    VectorDataset dataset =
        gt_dataset.ends_with(".bvecs") ? read_bvecs(gt_dataset) : read_fvecs(gt_dataset);
    VectorDataset queries = read_fvecs(gt_queries);
    LiveSet live(dataset.dim());
    for (std::size_t i = 0; i < dataset.size(); ++i)
      live.insert(dataset.ids()[i], dataset.row(i).data());
    bool truncated = false;
    auto truth = ground_truth(live, queries.data(), queries.size(), gt_k,
                              metric_from_name(gt_metric), &truncated);
    if (truncated) std::fprintf(stderr, "warning: k exceeds live count, lists truncated\n");
    std::vector<std::vector<std::int32_t>> rows(truth.size());
    for (std::size_t i = 0; i < truth.size(); ++i)
      for (VectorId id : truth[i]) rows[i].push_back(static_cast<std::int32_t>(id));
    write_ivecs(gt_out, rows);
    std::printf("ground truth for %zu queries -> %s\n", truth.size(), gt_out.c_str());
    return 0;
  }

  if (report_cmd->parsed()) {
    std::vector<std::filesystem::path> paths(report_inputs.begin(), report_inputs.end());
    std::string table;
    if (report_timeline) {
      if (paths.size() != 1) throw ConfigError("report --timeline takes exactly one CSV");
      table = normalized_timeline(paths[0]);
    } else {
      table = report_table(paths, report_mode);
    }
    if (report_out.empty()) {
      std::fputs(table.c_str(), stdout);
    } else {
      std::ofstream out(report_out);
      out << table;
      if (!out.good()) throw FormatError("write failed: " + report_out);
    }
    return 0;
  }
  return 0;
}

}  // namespace

int main(int argc, char** argv) {
  try {
    return run_cli(argc, argv);
  } catch (const ConfigError& e) {
    std::fprintf(stderr, "config error: %s\n", e.what());
    return 2;
  } catch (const SpecError& e) {
    std::fprintf(stderr, "config error: %s\n", e.what());
    return 2;
  } catch (const InvariantError& e) {
    std::fprintf(stderr, "invariant violation: %s\n", e.what());
    return 3;
  } catch (const Error& e) {
    std::fprintf(stderr, "error: %s\n", e.what());
    return 1;
  }
}
