#include "dynivf/bench.hpp"

#include <algorithm>
#include <chrono>
#include <cmath>
#include <cstdio>
#include <fstream>
#include <set>
#include <thread>

#include <json.hpp>

#include "dynivf/io.hpp"

namespace dynivf {

using nlohmann::json;

namespace {

using Clock = std::chrono::steady_clock;

// Virtual cost constants for deterministic-timing mode: one distance
// evaluation is one work unit, converted to pseudo-seconds.
constexpr double kWorkUnitSeconds = 1e-8;

std::string fmt_double(double v) {
  char buf[64];
  std::snprintf(buf, sizeof(buf), "%.9g", v);
  return buf;
}

// Runs one query batch at a fixed n_p, optionally fanned out across threads.
// Results are ordered by query regardless of the thread count.
void run_batch(const IvfIndex& index, const float* queries, std::size_t query_count,
               std::size_t k, std::size_t n_p, std::size_t threads,
               std::vector<SearchResult>& out) {
  out.resize(query_count);
  const std::size_t dim = index.dim();
  if (threads <= 1 || query_count < 2 * threads) {
    for (std::size_t q = 0; q < query_count; ++q)
      out[q] = index.search({queries + q * dim, dim}, k, n_p);
    return;
  }
  std::vector<std::thread> pool;
  const std::size_t chunk = (query_count + threads - 1) / threads;
  for (std::size_t t = 0; t < threads; ++t) {
    const std::size_t begin = t * chunk;
    const std::size_t end = std::min(begin + chunk, query_count);
    if (begin >= end) break;
    pool.emplace_back([&, begin, end] {
      for (std::size_t q = begin; q < end; ++q)
        out[q] = index.search({queries + q * dim, dim}, k, n_p);
    });
  }
  for (auto& th : pool) th.join();
}

double batch_recall(const std::vector<SearchResult>& results,
                    const std::vector<std::vector<VectorId>>& truth, std::size_t k) {
  double sum = 0.0;
  for (std::size_t q = 0; q < results.size(); ++q) {
    std::vector<VectorId> returned;
    returned.reserve(results[q].hits.size());
    for (const auto& [id, d] : results[q].hits) returned.push_back(id);
    sum += recall(returned, truth[q], k);
  }
  return results.empty() ? 0.0 : sum / static_cast<double>(results.size());
}

}  // namespace

std::vector<std::vector<VectorId>> ground_truth(const LiveSet& live, const float* queries,
                                                std::size_t query_count, std::size_t k,
                                                DistanceMetric metric, bool* truncated) {
  if (live.size() == 0) throw EmptyIndex("ground_truth: live set is empty");
  if (truncated) *truncated = k > live.size();
  const std::size_t dim = live.dim();
  const std::size_t take = std::min(k, live.size());
  std::vector<std::vector<VectorId>> out(query_count);
  std::vector<std::pair<float, VectorId>> scored(live.size());
  for (std::size_t q = 0; q < query_count; ++q) {
    const float* query = queries + q * dim;
    for (std::size_t i = 0; i < live.size(); ++i)
      scored[i] = {distance(query, live.data().data() + i * dim, dim, metric), live.ids()[i]};
    std::partial_sort(scored.begin(), scored.begin() + static_cast<std::ptrdiff_t>(take),
                      scored.end());
    out[q].reserve(take);
    for (std::size_t i = 0; i < take; ++i) out[q].push_back(scored[i].second);
  }
  return out;
}

double recall(std::span<const VectorId> returned, std::span<const VectorId> truth, std::size_t k) {
  if (k == 0) throw InvalidK("recall: k must be positive");
  std::set<VectorId> truth_set(truth.begin(), truth.end());
  std::size_t hits = 0;
  for (VectorId id : returned) hits += truth_set.count(id);
  return static_cast<double>(hits) / static_cast<double>(k);
}

TuneResult tune_nprobe(const IvfIndex& index, const float* queries, std::size_t query_count,
                       std::size_t k, const std::vector<std::vector<VectorId>>& truth,
                       double recall_target, std::size_t threads, bool deterministic_timing) {
  TuneResult result;
  const std::size_t count = std::max<std::size_t>(1, index.partition_count());
  std::vector<SearchResult> batch;

  auto eval = [&](std::size_t n_p) {
    run_batch(index, queries, query_count, k, n_p, threads, batch);
    return batch_recall(batch, truth, k);
  };

  std::size_t chosen;
  double chosen_recall;
  if ((chosen_recall = eval(1)) >= recall_target) {
    chosen = 1;
  } else {
    std::size_t lo = 1, hi = 1;
    double hi_recall = chosen_recall;
    while (hi < count && hi_recall < recall_target) {
      lo = hi;
      hi = std::min(hi * 2, count);
      hi_recall = eval(hi);
    }
    if (hi_recall < recall_target) {
      // Target unreachable even probing everything; report recall at max.
      chosen = count;
      chosen_recall = hi_recall;
      result.target_reached = false;
    } else {
      while (lo + 1 < hi) {
        const std::size_t mid = lo + (hi - lo) / 2;
        if (eval(mid) >= recall_target)
          hi = mid;
        else
          lo = mid;
      }
      chosen = hi;
      chosen_recall = eval(chosen);
    }
  }

  // Timed serving run at the chosen n_p; this is the only measured region.
  const auto start = Clock::now();
  run_batch(index, queries, query_count, k, chosen, threads, batch);
  const double elapsed = std::chrono::duration<double>(Clock::now() - start).count();

  result.n_p = chosen;
  result.mean_recall = chosen_recall;
  for (const auto& r : batch) result.scanned += r.scanned;
  if (deterministic_timing) {
    result.qps = static_cast<double>(query_count) /
                 (static_cast<double>(std::max<std::size_t>(1, result.scanned)) * kWorkUnitSeconds);
  } else {
    result.qps = elapsed > 0.0 ? static_cast<double>(query_count) / elapsed : 0.0;
  }
  result.probed.reserve(batch.size());
  result.probed_dists.reserve(batch.size());
  for (auto& r : batch) {
    result.probed.push_back(std::move(r.probed));
    result.probed_dists.push_back(std::move(r.probed_dists));
  }
  return result;
}

RunSummary run(const RunConfig& config) {
  Trace trace;
  try {
    if (!config.trace_path.empty()) {
      trace = load_trace(config.trace_path);
    } else if (config.gen_spec.has_value()) {
      if (config.dataset_path.empty()) throw ConfigError("run: inline generation needs a dataset");
      VectorDataset dataset = read_fvecs(config.dataset_path);
      std::optional<VectorDataset> queries;
      if (!config.query_path.empty()) queries = read_fvecs(config.query_path);
      trace = generate(dataset, *config.gen_spec, queries ? &*queries : nullptr);
    } else {
      throw ConfigError("run: need a trace path or an inline generator spec");
    }
  } catch (const FormatError& e) {
    throw ConfigError(std::string("run: ") + e.what());
  }
  if (trace.ops.empty() || trace.ops[0].kind != TraceOpKind::kInsert)
    throw ConfigError("run: trace must start with the initial insert batch");

  // Build the index from the initial set.
  VectorDataset initial(trace.dim);
  {
    const TraceOp& op = trace.ops[0];
    for (std::size_t i = 0; i < op.ids.size(); ++i)
      initial.insert(op.ids[i], {op.vectors.data() + i * trace.dim, trace.dim});
  }
  IvfIndex index = IvfIndex::build(initial, config.index);
  index.set_centroid_tracking(config.policy.kind != PolicyKind::kFrozen);

  LiveSet live(trace.dim);
  {
    const TraceOp& op = trace.ops[0];
    for (std::size_t i = 0; i < op.ids.size(); ++i)
      live.insert(op.ids[i], op.vectors.data() + i * trace.dim);
  }

  RunSummary summary;
  summary.policy = policy_name(config.policy.kind);
  MaintenanceState state;

  double cum_update = 0.0;
  double cum_maintenance = 0.0;
  std::size_t violators_accum = 0;
  std::size_t search_batches = 0;
  std::size_t n_p_current = std::max<std::size_t>(1, config.index.n_p);
  double qps_sum = 0.0;
  std::size_t qps_points = 0;

  auto check_audit = [&](std::size_t op_index) {
    if (index.live_count() != live.size())
      throw InvariantError("run: live-count drift at op " + std::to_string(op_index) + " (index " +
                           std::to_string(index.live_count()) + ", trace " +
                           std::to_string(live.size()) + ")");
    if (config.audit) index.audit();
  };

  for (std::size_t op_index = 1; op_index < trace.ops.size(); ++op_index) {
    const TraceOp& op = trace.ops[op_index];
    switch (op.kind) {
      case TraceOpKind::kInsert:
      case TraceOpKind::kDelete: {
        UpdateReport update;
        update.modified_vectors = op.ids.size();
        const auto start = Clock::now();
        if (op.kind == TraceOpKind::kInsert) {
          auto report = index.insert(op.ids, op.vectors.data());
          update.modified_partitions = std::move(report.modified);
        } else {
          auto report = index.remove(op.ids);
          update.modified_partitions = std::move(report.modified);
        }
        const double elapsed = std::chrono::duration<double>(Clock::now() - start).count();
        cum_update += config.deterministic_timing
                          ? static_cast<double>(op.ids.size()) *
                                static_cast<double>(std::max<std::size_t>(1, index.partition_count())) *
                                kWorkUnitSeconds
                          : elapsed;
        summary.total_updated_vectors += op.ids.size();

        if (op.kind == TraceOpKind::kInsert) {
          for (std::size_t i = 0; i < op.ids.size(); ++i)
            live.insert(op.ids[i], op.vectors.data() + i * trace.dim);
        } else {
          for (VectorId id : op.ids) live.remove(id);
        }

        auto report = apply_policy_on_update(index, state, config.policy, update);
        cum_maintenance += config.deterministic_timing
                               ? static_cast<double>(report.work_items) * kWorkUnitSeconds
                               : report.wall_seconds;
        violators_accum += report.violators.size();
        if (report.rebuild_triggered) ++summary.rebuilds;
        check_audit(op_index);
        break;
      }
      case TraceOpKind::kSearch: {
        const bool measure = (search_batches % std::max<std::size_t>(1, config.measure_cadence)) == 0;
        ++search_batches;
        const std::size_t k = op.k != 0 ? op.k : config.k;
        if (measure) {
          auto truth =
              ground_truth(live, op.vectors.data(), op.query_count, k, config.index.metric);
          auto tuned = tune_nprobe(index, op.vectors.data(), op.query_count, k, truth,
                                   config.recall_target, config.threads,
                                   config.deterministic_timing);
          n_p_current = std::max<std::size_t>(1, tuned.n_p);
          if (config.temperature_per_query) {
            for (std::size_t q = 0; q < tuned.probed.size(); ++q) {
              if (tuned.probed[q].empty()) continue;
              update_temperature(index.meta(), tuned.probed[q], tuned.probed_dists[q],
                                 config.policy.params.eta, config.policy.params.nu);
            }
          } else if (!tuned.probed.empty() && !tuned.probed[0].empty()) {
            update_temperature_batch(index.meta(), tuned.probed, tuned.probed_dists,
                                     config.policy.params.eta, config.policy.params.nu);
          }
          const GlobalStats stats = index.stats();
          MetricsRow row;
          row.op_index = op_index;
          row.live_count = live.size();
          row.partition_count = index.partition_count();
          row.sigma = stats.sigma;
          row.eps = stats.eps;
          row.eps_prime = stats.n > 0 && stats.n0 > 0 ? estimate_ideal_error(stats) : 0.0;
          row.qps_at_target = tuned.qps;
          row.mean_recall = tuned.mean_recall;
          row.n_p_used = tuned.n_p;
          row.cum_update_seconds = cum_update;
          row.cum_maintenance_seconds = cum_maintenance;
          row.violators_this_step = violators_accum;
          summary.rows.push_back(row);
          violators_accum = 0;
          qps_sum += tuned.qps;
          ++qps_points;
        } else {
          std::vector<SearchResult> batch;
          run_batch(index, op.vectors.data(), op.query_count, k, n_p_current, config.threads,
                    batch);
          if (config.temperature_per_query) {
            for (const auto& r : batch) {
              if (r.probed.empty()) continue;
              update_temperature(index.meta(), r.probed, r.probed_dists,
                                 config.policy.params.eta, config.policy.params.nu);
            }
          } else if (!batch.empty() && !batch[0].probed.empty()) {
            std::vector<std::vector<PartitionId>> probed;
            std::vector<std::vector<float>> dists;
            for (auto& r : batch) {
              probed.push_back(std::move(r.probed));
              dists.push_back(std::move(r.probed_dists));
            }
            update_temperature_batch(index.meta(), probed, dists, config.policy.params.eta,
                                     config.policy.params.nu);
          }
        }
        break;
      }
    }
  }

  summary.total_update_seconds = cum_update;
  summary.total_maintenance_seconds = cum_maintenance;
  summary.mean_qps_at_target = qps_points ? qps_sum / static_cast<double>(qps_points) : 0.0;
  summary.final_partition_count = index.partition_count();
  summary.final_live_count = index.live_count();

  auto track_max = [&](const std::string& name, double value) {
    auto [it, inserted] = summary.normalization.emplace(name, value);
    if (!inserted) it->second = std::max(it->second, value);
  };
  for (const MetricsRow& row : summary.rows) {
    track_max("live_count", static_cast<double>(row.live_count));
    track_max("partition_count", static_cast<double>(row.partition_count));
    track_max("sigma", row.sigma);
    track_max("eps", row.eps);
    track_max("eps_prime", row.eps_prime);
    track_max("qps_at_target", row.qps_at_target);
    track_max("mean_recall", row.mean_recall);
    track_max("n_p_used", static_cast<double>(row.n_p_used));
    track_max("cum_update_seconds", row.cum_update_seconds);
    track_max("cum_maintenance_seconds", row.cum_maintenance_seconds);
  }

  if (!config.output_prefix.empty()) {
    write_metrics_csv(config.output_prefix + ".csv", summary.rows);
    write_summary_json(config.output_prefix + ".json", summary, config);
  }
  return summary;
}

void write_metrics_csv(const std::filesystem::path& path, const std::vector<MetricsRow>& rows) {
  std::ofstream out(path);
  if (!out.is_open()) throw FormatError("cannot open " + path.string());
  out << "op_index,live_count,partition_count,sigma,eps,eps_prime,qps_at_target,mean_recall,"
         "n_p_used,cum_update_seconds,cum_maintenance_seconds,violators_this_step\n";
  for (const MetricsRow& r : rows) {
    out << r.op_index << ',' << r.live_count << ',' << r.partition_count << ','
        << fmt_double(r.sigma) << ',' << fmt_double(r.eps) << ',' << fmt_double(r.eps_prime) << ','
        << fmt_double(r.qps_at_target) << ',' << fmt_double(r.mean_recall) << ',' << r.n_p_used
        << ',' << fmt_double(r.cum_update_seconds) << ',' << fmt_double(r.cum_maintenance_seconds)
        << ',' << r.violators_this_step << '\n';
  }
  if (!out.good()) throw FormatError("write failed: " + path.string());
}

void write_summary_json(const std::filesystem::path& path, const RunSummary& summary,
                        const RunConfig& config) {
  json j;
  j["policy"] = summary.policy;
  j["total_update_seconds"] = summary.total_update_seconds;
  j["total_maintenance_seconds"] = summary.total_maintenance_seconds;
  j["mean_qps_at_target"] = summary.mean_qps_at_target;
  j["final_partition_count"] = summary.final_partition_count;
  j["final_live_count"] = summary.final_live_count;
  j["total_updated_vectors"] = summary.total_updated_vectors;
  j["rebuilds"] = summary.rebuilds;
  j["recall_target"] = config.recall_target;
  j["deterministic_timing"] = config.deterministic_timing;
  j["normalization"] = summary.normalization;
  std::ofstream out(path);
  if (!out.is_open()) throw FormatError("cannot open " + path.string());
  out << j.dump(2) << "\n";
  if (!out.good()) throw FormatError("write failed: " + path.string());
}

std::string normalized_timeline(const std::filesystem::path& csv_path) {
  std::filesystem::path summary_path = csv_path;
  summary_path.replace_extension(".json");
  std::ifstream jin(summary_path);
  if (!jin.is_open())
    throw ConfigError("report: summary " + summary_path.string() + " not found next to the CSV");
  const json summary = json::parse(jin);
  std::map<std::string, double> maxima;
  if (summary.contains("normalization"))
    maxima = summary["normalization"].get<std::map<std::string, double>>();

  std::ifstream in(csv_path);
  if (!in.is_open()) throw ConfigError("report: cannot open " + csv_path.string());
  std::string line;
  if (!std::getline(in, line)) throw FormatError("report: empty CSV " + csv_path.string());

  auto split = [](const std::string& s) {
    std::vector<std::string> out;
    std::size_t start = 0;
    while (true) {
      const std::size_t comma = s.find(',', start);
      out.push_back(s.substr(start, comma - start));
      if (comma == std::string::npos) break;
      start = comma + 1;
    }
    return out;
  };

  const std::vector<std::string> header = split(line);
  std::string out = line + "\n";
  while (std::getline(in, line)) {
    if (line.empty()) continue;
    const std::vector<std::string> cells = split(line);
    std::string row;
    for (std::size_t i = 0; i < cells.size(); ++i) {
      if (i) row += ',';
      auto it = i < header.size() ? maxima.find(header[i]) : maxima.end();
      if (it != maxima.end() && it->second > 0.0) {
        row += fmt_double(std::stod(cells[i]) / it->second);
      } else {
        row += cells[i];
      }
    }
    out += row + "\n";
  }
  return out;
}

void apply_run_config_json(const std::string& text, RunConfig& config) {
  json j;
  try {
    j = json::parse(text);
  } catch (const json::exception& e) {
    throw ConfigError(std::string("run config: ") + e.what());
  }
  config.trace_path = j.value("trace", config.trace_path);
  config.dataset_path = j.value("dataset", config.dataset_path);
  config.query_path = j.value("queries", config.query_path);
  if (j.contains("workload")) {
    WorkloadSpec spec = config.gen_spec.value_or(WorkloadSpec{});
    apply_workload_spec_json(j["workload"].dump(), spec);
    config.gen_spec = spec;
  }
  if (j.contains("index")) {
    const json& ji = j["index"];
    IndexConfig& ic = config.index;
    ic.n_c = ji.value("n_c", ic.n_c);
    ic.n_p = ji.value("n_p", ic.n_p);
    if (ji.contains("metric")) ic.metric = metric_from_name(ji["metric"].get<std::string>());
    ic.target_partition_size = ji.value("target_partition_size", ic.target_partition_size);
    ic.delta_capacity = ji.value("delta_capacity", ic.delta_capacity);
    ic.seed = ji.value("seed", ic.seed);
    ic.build_iterations = ji.value("build_iterations", ic.build_iterations);
    ic.balance_slack = ji.value("balance_slack", ic.balance_slack);
  }
  if (j.contains("policy")) {
    const json& jp = j["policy"];
    if (jp.contains("kind")) config.policy.kind = policy_from_name(jp["kind"].get<std::string>());
    if (jp.contains("params")) {
      const json& pp = jp["params"];
      AdaIvfParams& p = config.policy.params;
      p.alpha = pp.value("alpha", p.alpha);
      p.beta = pp.value("beta", p.beta);
      p.tau_f = pp.value("tau_f", p.tau_f);
      p.tau_s = pp.value("tau_s", p.tau_s);
      p.radius = pp.value("radius", p.radius);
      p.iota = pp.value("iota", p.iota);
      p.gamma = pp.value("gamma", p.gamma);
      p.tau_g = pp.value("tau_g", p.tau_g);
      p.eta = pp.value("eta", p.eta);
      p.nu = pp.value("nu", p.nu);
      p.min_size = pp.value("min_size", p.min_size);
      p.max_size = pp.value("max_size", p.max_size);
      p.rebuild_fraction = pp.value("rebuild_fraction", p.rebuild_fraction);
      p.dedrift_k1 = pp.value("dedrift_k1", p.dedrift_k1);
      p.dedrift_epoch = pp.value("dedrift_epoch", p.dedrift_epoch);
    }
  }
  config.recall_target = j.value("recall_target", config.recall_target);
  config.k = j.value("k", config.k);
  config.measure_cadence = j.value("measure_cadence", config.measure_cadence);
  config.output_prefix = j.value("output", config.output_prefix);
  config.seed = j.value("seed", config.seed);
  config.deterministic_timing = j.value("deterministic_timing", config.deterministic_timing);
  config.threads = j.value("threads", config.threads);
  config.audit = j.value("audit", config.audit);
  config.temperature_per_query = j.value("temperature_per_query", config.temperature_per_query);
}

std::string report_table(const std::vector<std::filesystem::path>& summary_paths,
                         const std::string& normalize_mode) {
  if (normalize_mode != "max" && normalize_mode != "rebuild")
    throw ConfigError("report: normalize mode must be 'max' or 'rebuild'");

  struct Entry {
    std::string policy;
    double qps;
    double update_throughput;
    std::size_t partitions;
  };
  std::vector<Entry> entries;
  for (const auto& path : summary_paths) {
    std::ifstream in(path);
    if (!in.is_open()) throw ConfigError("report: cannot open " + path.string());
    json j = json::parse(in);
    Entry e;
    e.policy = j.value("policy", "?");
    e.qps = j.value("mean_qps_at_target", 0.0);
    const double updated = j.value("total_updated_vectors", 0.0);
    const double seconds =
        j.value("total_update_seconds", 0.0) + j.value("total_maintenance_seconds", 0.0);
    e.update_throughput = seconds > 0.0 ? updated / seconds : 0.0;
    e.partitions = j.value("final_partition_count", std::size_t{0});
    entries.push_back(e);
  }

  double qps_base = 0.0, upd_base = 0.0;
  if (normalize_mode == "max") {
    for (const Entry& e : entries) {
      qps_base = std::max(qps_base, e.qps);
      upd_base = std::max(upd_base, e.update_throughput);
    }
  } else {
    bool found = false;
    for (const Entry& e : entries) {
      if (e.policy == "rebuild") {
        qps_base = e.qps;
        upd_base = e.update_throughput;
        found = true;
      }
    }
    if (!found) throw ConfigError("report: rebuild normalization needs a rebuild-policy run");
  }

  std::string out = "# normalized_to=" + normalize_mode + "\n";
  out += "policy,norm_search_throughput,norm_update_throughput,final_partition_count\n";
  for (const Entry& e : entries) {
    out += e.policy + ',' + fmt_double(qps_base > 0 ? e.qps / qps_base : 0.0) + ',' +
           fmt_double(upd_base > 0 ? e.update_throughput / upd_base : 0.0) + ',' +
           std::to_string(e.partitions) + '\n';
  }
  return out;
}

}  // namespace dynivf
