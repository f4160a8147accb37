// tship: command-line front end for studies, single-instance solves and data export.

#include <fmt/format.h>

#include <CLI11.hpp>
#include <cmath>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <memory>

#include "tship/config.hpp"
#include "tship/errors.hpp"
#include "tship/experiments.hpp"
#include "tship/heuristic.hpp"
#include "tship/loss.hpp"
#include "tship/lp1.hpp"
#include "tship/sdp.hpp"

using namespace tship;

namespace {

// stdout when path is empty or "-"
class Output {
 public:
  explicit Output(const std::string& path) {
    if (!path.empty() && path != "-") {
      file_ = std::make_unique<std::ofstream>(path);
      if (!*file_) throw ConfigError(fmt::format("cannot write {}", path));
    }
  }
  std::ostream& operator*() { return file_ ? *file_ : std::cout; }

 private:
  std::unique_ptr<std::ofstream> file_;
};

Lp1Encoding parse_encoding(const std::string& s) {
  if (s == "segments") return Lp1Encoding::Segments;
  if (s == "minorants") return Lp1Encoding::Minorants;
  throw ConfigError(fmt::format("unknown encoding '{}'", s));
}

std::vector<State> openings_for(const Instance& inst, const std::vector<int>& state, const std::vector<double>& factors) {
  if (!state.empty()) return {State{state[0], state[1]}};
  std::array<double, 2> mean{};
  for (std::size_t j = 0; j < 2; ++j) {
    double sum = 0.0;
    for (double m : inst.demand[j].means) sum += m;
    if (!inst.demand[j].means.empty()) mean[j] = sum / static_cast<double>(inst.demand[j].means.size());
  }
  std::vector<State> out;
  for (double f1 : factors)
    for (double f2 : factors) out.push_back({static_cast<int>(std::lround(f1 * mean[0])), static_cast<int>(std::lround(f2 * mean[1]))});
  return out;
}

void write_plan(std::ostream& out, const StaticPlan& plan) {
  out << "period,W,Q1,Q2,W_rounded,Q1_rounded,Q2_rounded,x1,x2,H1,H2,B1,B2\n";
  for (std::size_t k = 0; k < plan.periods.size(); ++k) {
    const PlanPeriod& p = plan.periods[k];
    out << fmt::format("{},{},{},{},{},{},{},{},{},{},{},{},{}\n", plan.start + static_cast<int>(k), format_number(p.W),
                       format_number(p.Q1), format_number(p.Q2), p.rounded.W, p.rounded.Q1, p.rounded.Q2,
                       format_number(p.inventory[0]), format_number(p.inventory[1]), format_number(p.overage[0]),
                       format_number(p.overage[1]), format_number(p.shortage[0]), format_number(p.shortage[1]));
  }
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Proactive transshipment: SDP, LP-1 heuristic and gap studies"};
  app.require_subcommand(1);
  app.fallthrough();

  std::string out_path;
  int workers = 0;
  app.add_option("--workers", workers, "Worker threads (default: TSHIP_WORKERS or hardware concurrency)");

  // run
  auto* run = app.add_subcommand("run", "Run a study: records.csv and pivots.csv in the output directory");
  std::string study_path;
  std::string out_dir = ".";
  bool quiet = false;
  run->add_option("study", study_path, "Study YAML file")->required()->check(CLI::ExistingFile);
  run->add_option("-o,--out-dir", out_dir, "Output directory");
  run->add_flag("-q,--quiet", quiet, "No per-record progress on stderr");

  // solve
  auto* solve = app.add_subcommand("solve", "Solve one instance with one solver");
  std::string inst_path;
  std::string solver = "sdp2";
  std::vector<int> state;
  int start = 1;
  int regions = kDefaultRegions;
  std::string encoding = "segments";
  std::uint64_t seed = 1;
  std::string trace_path;
  EstimateOptions eopts;
  solve->add_option("instance", inst_path, "Instance YAML file")->required()->check(CLI::ExistingFile);
  solve->add_option("-s,--solver", solver, "sdp1, sdp2, lp1 or heuristic")
      ->check(CLI::IsMember({"sdp1", "sdp2", "lp1", "heuristic"}));
  solve->add_option("--state", state, "Opening state i1 i2 (lp1, heuristic)")->expected(2);
  solve->add_option("--start", start, "First period of the LP-1 plan");
  solve->add_option("--regions", regions, "Partition regions for LP-1");
  solve->add_option("--encoding", encoding, "segments or minorants");
  solve->add_option("--seed", seed, "Heuristic seed");
  solve->add_option("--confidence", eopts.confidence, "Heuristic CI level");
  solve->add_option("--rel-halfwidth", eopts.rel_halfwidth, "Target half-width relative to the mean");
  solve->add_option("--max-replications", eopts.max_replications, "Replication cap");
  solve->add_option("--trace", trace_path, "Write every heuristic step to this CSV");
  solve->add_option("-o,--out", out_path, "Output CSV (default stdout)");

  // gap
  auto* gap = app.add_subcommand("gap", "Gap between two solvers on one instance");
  std::string pair = "sdp1-sdp2";
  std::vector<double> factors{-0.5, 0.0, 0.5};
  gap->add_option("instance", inst_path, "Instance YAML file")->required()->check(CLI::ExistingFile);
  gap->add_option("-p,--pair", pair, "sdp1-sdp2 or sdp2-heuristic");
  gap->add_option("--state", state, "Single opening state i1 i2")->expected(2);
  gap->add_option("--opening-factors", factors, "Opening grid as multiples of mean demand");
  gap->add_option("--seed", seed, "Heuristic seed");
  gap->add_option("--rel-halfwidth", eopts.rel_halfwidth, "Target half-width relative to the mean");
  gap->add_option("-o,--out", out_path, "Output CSV (default stdout)");

  // export-lp
  auto* export_lp = app.add_subcommand("export-lp", "Write the LP-1 model in CPLEX LP format");
  export_lp->add_option("instance", inst_path, "Instance YAML file")->required()->check(CLI::ExistingFile);
  export_lp->add_option("--state", state, "Opening state i1 i2")->expected(2)->required();
  export_lp->add_option("--start", start, "First period of the plan");
  export_lp->add_option("--regions", regions, "Partition regions");
  export_lp->add_option("--encoding", encoding, "segments or minorants");
  export_lp->add_option("-o,--out", out_path, "Output file (default stdout)");

  // plot-data
  auto* plot = app.add_subcommand("plot-data", "Boxplot statistics of gaps from a records CSV");
  std::string records_path;
  std::vector<std::string> pivots{"p1", "K", "R", "b", "all"};
  plot->add_option("records", records_path, "records.csv from run")->required()->check(CLI::ExistingFile);
  plot->add_option("--pivot", pivots, "p1, p2, K, R, b, all");
  plot->add_option("-o,--out", out_path, "Output CSV (default stdout)");

  // partition
  auto* partition = app.add_subcommand("partition", "Dump a demand partition and its bound coefficients");
  std::string family = "normal";
  double mean = 10.0;
  double cv = 0.1;
  partition->add_option("--family", family, "normal or poisson")->check(CLI::IsMember({"normal", "poisson"}));
  partition->add_option("--mean", mean, "Mean demand");
  partition->add_option("--cv", cv, "Coefficient of variation (normal)");
  partition->add_option("--regions", regions, "Number of regions");
  partition->add_option("-o,--out", out_path, "Output CSV (default stdout)");

  CLI11_PARSE(app, argc, argv);
  if (workers > 0) eopts.workers = workers;

  try {
    if (*run) {
      const StudySpec spec = load_study(study_path);
      std::filesystem::create_directories(out_dir);
      StudyRunOptions opts;
      opts.workers = workers;
      opts.store = std::filesystem::path(out_dir) / "records.csv";
      if (!quiet) {
        opts.on_record = [](const GapRecord& r) {
          std::cerr << fmt::format("{} gap={} {}\n", r.id, format_number(r.gap), r.ok ? "" : "FAILED: " + r.message);
        };
      }
      const StudyResult result = run_study(spec, opts);
      std::ofstream pv(std::filesystem::path(out_dir) / "pivots.csv");
      write_pivots_csv(pv, result.pivots);
      std::cerr << fmt::format("{} records ({} computed)\n", result.records.size(), result.computed);
    } else if (*solve) {
      const Instance inst = load_instance(inst_path);
      Output out(out_path);
      if (solver == "sdp1" || solver == "sdp2") {
        SdpOptions so;
        so.workers = workers;
        const SdpResult r = solver == "sdp1" ? solve_sdp1(inst, so) : solve_sdp2(inst, so);
        r.table.write_csv(*out);
      } else {
        if (state.empty()) throw ConfigError("--state i1 i2 is required for this solver");
        const State s{state[0], state[1]};
        if (solver == "lp1") {
          Lp1Solver lp(inst, regions, parse_encoding(encoding));
          const StaticPlan& plan = lp.solve(start, s);
          if (!plan.ok()) throw DomainError(fmt::format("LP-1 ended with status {}", to_string(plan.status)));
          write_plan(*out, plan);
          std::cerr << fmt::format("objective {} nodes {}\n", format_number(plan.objective), plan.nodes);
        } else {
          HeuristicOptions ho;
          ho.n_regions = regions;
          ho.encoding = parse_encoding(encoding);
          std::unique_ptr<std::ofstream> trace;
          if (!trace_path.empty()) trace = std::make_unique<std::ofstream>(trace_path);
          const Estimate e = estimate(inst, s, seed, eopts, ho, trace.get());
          *out << "i1,i2,seed,mean,half_width,stddev,replications,converged\n";
          *out << fmt::format("{},{},{},{},{},{},{},{}\n", s.i1, s.i2, seed, format_number(e.mean), format_number(e.half_width),
                              format_number(e.stddev), e.n, e.converged ? 1 : 0);
        }
      }
    } else if (*gap) {
      StudySpec spec = StudySpec::four_period();
      spec.gap = parse_gap_pair(pair);
      spec.seed = seed;
      spec.estimate = eopts;
      StudyInstance si;
      si.id = std::filesystem::path(inst_path).stem().string();
      si.instance = load_instance(inst_path);
      si.openings = openings_for(si.instance, state, factors);
      const GapRecord r = evaluate_instance(spec, si, workers > 0 ? workers : 1);
      if (!r.ok) throw DomainError(r.message);
      Output out(out_path);
      *out << "instance,pair,openings,etc1,etc2,gap,half_width,replications,message\n";
      *out << fmt::format("{},{},{},{},{},{},{},{},{}\n", si.id, pair, si.openings.size(), format_number(r.etc1),
                          format_number(r.etc2), format_number(r.gap), format_number(r.half_width), r.replications, r.message);
    } else if (*export_lp) {
      const Instance inst = load_instance(inst_path);
      const StaticModel m = build_lp1(inst, {state[0], state[1]}, make_lp1_partitions(inst, start, regions), parse_encoding(encoding));
      Output out(out_path);
      m.model.write_lp(*out);
    } else if (*plot) {
      std::ifstream in(records_path);
      const auto records = read_records_csv(in);
      std::vector<BoxplotRow> rows;
      for (const auto& p : pivots) {
        auto part = boxplot_data(records, p);
        rows.insert(rows.end(), part.begin(), part.end());
      }
      Output out(out_path);
      write_boxplot_csv(*out, rows);
    } else if (*partition) {
      const Distribution d = family == "normal" ? Distribution{NormalDist{mean, cv * mean}}
                                                : Distribution{discretize(DemandSpec::poisson({mean}), 1)};
      const Partition part = build_partition(d, regions);
      const PiecewiseBounds pb = piecewise_lower_bounds(part, mean_of(d));
      Output out(out_path);
      *out << "index,region_prob,cond_mean,complement_slope,complement_intercept,loss_slope,loss_intercept\n";
      for (std::size_t i = 0; i < pb.loss.size(); ++i) {
        const bool region = i < part.n_regions();
        *out << fmt::format("{},{},{},{},{},{},{}\n", i, region ? format_number(part.region_probs[i]) : "",
                            region ? format_number(part.cond_means[i]) : "", format_number(pb.complement[i].slope),
                            format_number(pb.complement[i].intercept), format_number(pb.loss[i].slope),
                            format_number(pb.loss[i].intercept));
      }
    }
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << '\n';
    return 1;
  }
  return 0;
}
