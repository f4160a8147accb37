// Acceptance checks. Usage: acceptance [criterion...] [--workers N] [--store-dir DIR]
// Prints one PASS/FAIL line per criterion; exit status is nonzero if any fails.

#include <fmt/format.h>

#include <CLI11.hpp>
#include <algorithm>
#include <chrono>
#include <cmath>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <sstream>

#include "milp_oracle.hpp"
#include "sdp_oracle.hpp"
#include "tship/experiments.hpp"
#include "tship/heuristic.hpp"
#include "tship/loss.hpp"
#include "tship/lp1.hpp"
#include "tship/sdp.hpp"
#include "tship/stats.hpp"

using namespace tship;

namespace {

struct Outcome {
  bool pass = false;
  std::string detail;
};

int g_workers = 0;
std::string g_store_dir;

double uniform(Rng& rng, double lo, double hi) { return lo + (hi - lo) * rng.uniform(); }

CostParams random_costs(Rng& rng) {
  return {uniform(rng, 0, 20), uniform(rng, 0, 3), uniform(rng, 0, 10), uniform(rng, 0, 2), uniform(rng, 0.5, 2),
          uniform(rng, 1, 8)};
}

DemandSpec random_pmfs(Rng& rng, int T, int max_values) {
  std::vector<DiscreteDist> pmfs;
  for (int t = 0; t < T; ++t) {
    DiscreteDist d{static_cast<int>(rng.uniform() * 3), {}};
    const int len = 1 + static_cast<int>(rng.uniform() * max_values);
    for (int k = 0; k < len; ++k) d.pmf.push_back(0.05 + rng.uniform());
    const double s = d.total_mass();
    for (auto& p : d.pmf) p /= s;
    pmfs.push_back(std::move(d));
  }
  return DemandSpec::from_pmfs(std::move(pmfs));
}

Instance make_instance(int T, const CostParams& c, DemandSpec d1, DemandSpec d2, StateBounds bounds) {
  Instance inst;
  inst.horizon = T;
  inst.costs = c;
  inst.demand = {std::move(d1), std::move(d2)};
  inst.bounds = bounds;
  inst.validate();
  return inst;
}

Outcome oracle_equivalence() {
  Rng rng(101);
  double worst = 0.0;
  long states = 0;
  for (int trial = 0; trial < 50; ++trial) {
    const int q_max = 2 + static_cast<int>(rng.uniform() * 5);
    const Instance inst =
        make_instance(2, random_costs(rng), random_pmfs(rng, 2, 5), random_pmfs(rng, 2, 5), StateBounds{-8, 14, q_max});
    const DemandTable demand(inst);
    SdpOptions opts;
    opts.workers = g_workers;
    const SdpResult r = solve_sdp1(inst, opts);
    oracle::MemoTree tree(inst, demand);
    for (std::size_t k = 0; k < r.table.n_states(); ++k) {
      const State s = r.table.state_at(k);
      worst = std::max(worst, std::abs(r.table.cost(1, s) - tree.cost(1, s)));
      ++states;
    }
  }
  return {worst <= 1e-9, fmt::format("50 instances, {} states, max |SDP-1 - tree| = {:.3g} (tol 1e-9)", states, worst)};
}

Outcome decoupling() {
  Rng rng(202);
  double worst = 0.0;
  long states = 0;
  for (int trial = 0; trial < 50; ++trial) {
    const DemandSpec d1 = trial % 2 ? DemandSpec::poisson({uniform(rng, 0.5, 6)}) : random_pmfs(rng, 1, 5);
    const DemandSpec d2 = trial % 3 ? DemandSpec::poisson({uniform(rng, 0.5, 6)}) : random_pmfs(rng, 1, 5);
    const Instance inst = make_instance(1, random_costs(rng), d1, d2, StateBounds{-8, 14, 4 + trial % 7});
    SdpOptions opts;
    opts.workers = g_workers;
    const SdpResult a = solve_sdp1(inst, opts);
    const SdpResult b = solve_sdp2(inst, opts);
    for (std::size_t k = 0; k < a.table.n_states(); ++k) {
      const State s = a.table.state_at(k);
      worst = std::max(worst, std::abs(a.table.cost(1, s) - b.table.cost(1, s)));
      ++states;
    }
  }
  return {worst <= 1e-9, fmt::format("50 instances, {} states, max |C1 - C~1| = {:.3g} (tol 1e-9)", states, worst)};
}

StudyResult run(const StudySpec& spec, const std::string& label) {
  StudyRunOptions opts;
  opts.workers = g_workers;
  if (!g_store_dir.empty()) {
    std::filesystem::create_directories(g_store_dir);
    opts.store = std::filesystem::path(g_store_dir) / (label + ".csv");
  }
  long done = 0;
  opts.on_record = [&](const GapRecord& r) {
    std::cerr << fmt::format("  [{}] {} gap={:.4f}%{}\n", ++done, r.id, r.gap, r.ok ? "" : " FAILED " + r.message);
  };
  return run_study(spec, opts);
}

Outcome two_stage_band() {
  const StudySpec spec = StudySpec::four_period();
  const StudyResult res = run(spec, "four-period");
  double sum = 0.0;
  double max_gap = -kInf;
  double min_gap = kInf;
  long failures = 0;
  for (const auto& r : res.records) {
    if (!r.ok) {
      ++failures;
      continue;
    }
    sum += r.gap;
    max_gap = std::max(max_gap, r.gap);
    min_gap = std::min(min_gap, r.gap);
  }
  const auto n = static_cast<long>(res.records.size());
  const double avg = n > failures ? sum / static_cast<double>(n - failures) : kInf;
  // gaps are percentages; -1e-9 absorbs rounding in the ratio of two equal doubles
  const bool pass = n >= 40 && failures == 0 && min_gap >= -1e-9 && avg <= 1.0 && max_gap <= 3.0;
  return {pass, fmt::format("{} instances, {} failed, min gap {:.4g}% (>= 0), average {:.4g}% (<= 1%), max {:.4g}% (<= 3%)", n,
                            failures, min_gap, avg, max_gap)};
}

Outcome loss_sandwich() {
  double worst_violation = 0.0;  // largest bound - exact
  bool monotone = true;
  std::vector<std::string> gaps;
  for (double mu : {2.0, 5.0, 10.0, 20.0}) {
    for (int fam = 0; fam < 2; ++fam) {
      const Distribution d = fam == 0 ? Distribution{NormalDist{mu, 0.1 * mu}}
                                      : Distribution{discretize(DemandSpec::poisson({mu}), 1)};
      const double lo = fam == 0 ? mu - 6 * 0.1 * mu : 0.0;
      const double hi = fam == 0 ? mu + 6 * 0.1 * mu : mu + 6 * std::sqrt(mu);
      std::array<double, 2> max_gap{};
      for (int n : {2, 10}) {
        const Partition part = build_partition(d, n);
        const PiecewiseBounds pb = piecewise_lower_bounds(part, mean_of(d));
        double gap = 0.0;
        for (int k = 0; k < 1000; ++k) {
          const double x = lo + (hi - lo) * k / 999.0;
          const LossEval e = loss_exact(x, d);
          for (const auto& m : pb.complement) worst_violation = std::max(worst_violation, m(x) - e.complement);
          for (const auto& m : pb.loss) worst_violation = std::max(worst_violation, m(x) - e.loss);
          gap = std::max({gap, e.complement - pb.complement_bound(x), e.loss - pb.loss_bound(x)});
        }
        max_gap[n == 2 ? 0 : 1] = gap;
      }
      if (max_gap[1] > max_gap[0]) monotone = false;
      gaps.push_back(fmt::format("{}({:g}) {:.3g}/{:.3g}", fam == 0 ? "N" : "P", mu, max_gap[0], max_gap[1]));
    }
  }
  std::string listing;
  for (const auto& g : gaps) listing += (listing.empty() ? "" : ", ") + g;
  return {worst_violation <= 1e-9 && monotone,
          fmt::format("max(minorant - exact) = {:.3g} (tol 1e-9); max gap N=2/N=10: {}", worst_violation, listing)};
}

Outcome milp_correctness() {
  Rng rng(505);
  double worst = 0.0;
  int bins = 0;
  for (int trial = 0; trial < 20; ++trial) {
    std::vector<double> m1;
    std::vector<double> m2;
    for (int t = 0; t < 3; ++t) {
      m1.push_back(uniform(rng, 0.5, 4));
      m2.push_back(uniform(rng, 0.5, 4));
    }
    Instance inst;
    inst.horizon = 3;
    inst.costs = {uniform(rng, 5, 25), uniform(rng, 0, 2), uniform(rng, 2, 10), uniform(rng, 0, 1.5), 1, uniform(rng, 2, 6)};
    inst.demand = {DemandSpec::poisson(m1), DemandSpec::poisson(m2)};
    inst.bounds = Instance::default_bounds(inst.demand, 3, inst.truncation_eps);
    inst.validate();
    const State opening{static_cast<int>(rng.uniform() * 9) - 3, static_cast<int>(rng.uniform() * 9) - 3};
    const auto parts = make_lp1_partitions(inst, 1);
    const StaticModel sm = build_lp1(inst, opening, parts, trial % 2 ? Lp1Encoding::Segments : Lp1Encoding::Minorants);
    bins = std::max(bins, static_cast<int>(sm.model.binaries().size()));
    const MilpSolution s = branch_and_bound(sm.model);
    const double ref = oracle::enumerate_binaries(sm.model);
    if (s.status != SolveStatus::Optimal) return {false, fmt::format("instance {} ended with {}", trial, to_string(s.status))};
    worst = std::max(worst, std::abs(s.objective - ref) / std::max(1.0, std::abs(ref)));
  }
  return {worst <= 1e-6, fmt::format("20 instances, {} binaries, max relative |B&B - enumeration| = {:.3g} (tol 1e-6)", bins, worst)};
}

Outcome heuristic_band() {
  StudySpec spec = StudySpec::ten_period(7);
  spec.name = "ten-period-t7";
  spec.design = Design::LhsPatterns;
  spec.samples = 10;
  const StudyResult res = run(spec, "ten-period-t7");
  long failures = 0;
  long below = 0;
  long wide = 0;
  long significant = 0;
  double sum = 0.0;
  double max_rel_hw = 0.0;
  for (const auto& r : res.records) {
    if (!r.ok || !r.message.empty()) {
      ++failures;
      continue;
    }
    sum += r.gap;
    if (r.etc2 < r.etc1 - r.half_width) ++below;
    const double rel = r.half_width / r.etc2;
    max_rel_hw = std::max(max_rel_hw, rel);
    if (rel > 1e-3) ++wide;
    if (r.etc2 - r.etc1 > r.half_width) ++significant;
  }
  const auto n = static_cast<long>(res.records.size());
  const double avg = n > failures ? sum / static_cast<double>(n - failures) : kInf;
  const bool pass = n == 80 && failures == 0 && below == 0 && wide == 0 && avg <= 2.5;
  return {pass, fmt::format("{} instances, {} failed or capped, {} below C~1 - hw, average gap {:.4g}% (<= 2.5%), "
                            "max hw/mean {:.3g}% (<= 0.1%), {} gaps significant",
                            n, failures, below, avg, 100.0 * max_rel_hw, significant)};
}

Outcome stopping_rule() {
  const double z = stats::normal_quantile(0.975);
  const double n_closed = std::pow(z * 1.0 / (0.001 * 100.0), 2);
  auto stopped_at = [&](std::uint64_t seed) {
    const auto stream = [seed](long i) {
      Rng r(mix_seed(seed, static_cast<std::uint64_t>(i)));
      return 100.0 + r.standard_normal();
    };
    EstimateOptions opt;
    opt.workers = g_workers;
    const Estimate e = estimate_stream(stream, opt);
    return e.converged ? static_cast<double>(e.n) : kInf;
  };
  // one pinned stream, plus the stopping time averaged over independent streams
  const double pinned = stopped_at(1);
  const int streams = 400;
  double sum = 0.0;
  int within = 0;
  for (int s = 1; s <= streams; ++s) {
    const double n = stopped_at(1000 + static_cast<std::uint64_t>(s));
    sum += n;
    if (std::abs(n - n_closed) <= 0.15 * n_closed) ++within;
  }
  const double mean_n = sum / streams;
  const bool pass = std::abs(pinned - n_closed) <= 0.15 * n_closed && std::abs(mean_n - n_closed) <= 0.15 * n_closed;
  return {pass, fmt::format("closed-form n = {:.1f}; pinned stream stopped at {:g}; mean over {} streams {:.1f} (tol +-15%); "
                            "{} of {} single streams within +-15%",
                            n_closed, pinned, streams, mean_n, within, streams)};
}

// Every CSV-producing operation, run once; compared byte for byte across runs.
std::vector<std::pair<std::string, std::string>> csv_outputs(int workers) {
  std::vector<std::pair<std::string, std::string>> out;
  auto add = [&](std::string name, auto&& write) {
    std::ostringstream ss;
    write(ss);
    out.emplace_back(std::move(name), ss.str());
  };
  Instance inst;
  inst.horizon = 3;
  inst.costs = {10, 1, 5, 0.5, 1, 4};
  inst.demand = {DemandSpec::poisson({2, 4, 3}), DemandSpec::normal({3, 3, 5}, 0.2)};
  inst.bounds = Instance::default_bounds(inst.demand, 3, inst.truncation_eps);
  inst.validate();
  SdpOptions so;
  so.workers = workers;
  add("sdp1", [&](std::ostream& o) { solve_sdp1(inst, so).table.write_csv(o); });
  add("sdp2", [&](std::ostream& o) { solve_sdp2(inst, so).table.write_csv(o); });
  add("lp1", [&](std::ostream& o) {
    build_lp1(inst, {1, -1}, make_lp1_partitions(inst, 1), Lp1Encoding::Segments).model.write_lp(o);
  });
  add("estimate-trace", [&](std::ostream& o) {
    EstimateOptions eo;
    eo.workers = workers;
    eo.rel_halfwidth = 0.01;
    const Estimate e = estimate(inst, {1, -1}, 77, eo, {}, &o);
    o << format_number(e.mean) << ',' << format_number(e.half_width) << ',' << e.n << '\n';
  });
  for (GapPair pair : {GapPair::Sdp1VsSdp2, GapPair::Sdp2VsHeuristic}) {
    StudySpec spec = StudySpec::ten_period(3);
    spec.name = "det";
    spec.scale = 3.0;
    spec.patterns = {PatternId::STAT, PatternId::SIN, PatternId::EMP};
    spec.design = Design::LhsPatterns;
    spec.samples = 2;
    spec.R = {5};
    spec.gap = pair;
    spec.estimate.rel_halfwidth = 0.01;
    StudyRunOptions ro;
    ro.workers = workers;
    const StudyResult res = run_study(spec, ro);
    const std::string tag(to_string(pair));
    add("records-" + tag, [&](std::ostream& o) { write_records_csv(o, res.records); });
    add("pivots-" + tag, [&](std::ostream& o) { write_pivots_csv(o, res.pivots); });
    add("boxplot-" + tag, [&](std::ostream& o) {
      for (const char* p : {"p1", "p2", "K", "R", "b", "all"}) write_boxplot_csv(o, boxplot_data(res.records, p));
    });
  }
  return out;
}

Outcome determinism() {
  const auto a = csv_outputs(1);
  const auto b = csv_outputs(1);
  const auto c = csv_outputs(std::max(2, g_workers));
  std::vector<std::string> differing;
  std::size_t bytes = 0;
  for (std::size_t i = 0; i < a.size(); ++i) {
    bytes += a[i].second.size();
    if (a[i].second != b[i].second || a[i].second != c[i].second) differing.push_back(a[i].first);
  }
  std::string names;
  for (const auto& [name, text] : a) names += (names.empty() ? "" : " ") + name;
  std::string diff;
  for (const auto& d : differing) diff += " " + d;
  return {differing.empty() && a.size() == b.size(),
          fmt::format("{} outputs ({} bytes) x 3 runs with 1, 1 and {} workers: {}{}", a.size(), bytes, std::max(2, g_workers),
                      differing.empty() ? "identical" : "differ:", diff)};
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Acceptance criteria"};
  std::vector<int> which;
  app.add_option("criteria", which, "Criteria to run (default: all)")->check(CLI::Range(1, 8));
  app.add_option("--workers", g_workers, "Worker threads (0: default)");
  app.add_option("--store-dir", g_store_dir, "Keep study records here so interrupted runs resume");
  CLI11_PARSE(app, argc, argv);
  if (which.empty()) which = {1, 2, 3, 4, 5, 6, 7, 8};

  const std::vector<std::pair<std::string, Outcome (*)()>> criteria{
      {"oracle equivalence", oracle_equivalence}, {"T=1 decoupling", decoupling},
      {"two-stage gap band", two_stage_band},     {"loss sandwich", loss_sandwich},
      {"MILP correctness", milp_correctness},     {"heuristic gap band", heuristic_band},
      {"stopping rule", stopping_rule},           {"determinism", determinism},
  };
  bool all = true;
  for (int k : which) {
    const auto& [name, fn] = criteria[static_cast<std::size_t>(k - 1)];
    const auto t0 = std::chrono::steady_clock::now();
    Outcome o;
    try {
      o = fn();
    } catch (const std::exception& e) {
      o = {false, fmt::format("exception: {}", e.what())};
    }
    const double secs = std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
    std::cout << fmt::format("criterion {} {}: {} ({}; {:.1f} s)\n", k, o.pass ? "PASS" : "FAIL", name, o.detail, secs) << std::flush;
    all = all && o.pass;
  }
  return all ? 0 : 1;
}
