#include "tship/experiments.hpp"

#include <fmt/format.h>

#include <algorithm>
#include <cmath>
#include <fstream>
#include <map>
#include <mutex>
#include <numeric>
#include <set>
#include <sstream>

#include "tship/errors.hpp"
#include "tship/parallel.hpp"
#include "tship/sdp.hpp"

namespace tship {

namespace {

template <class E>
struct Named {
  E value;
  std::string_view name;
};

constexpr Named<StudyFamily> kFamilies[] = {{StudyFamily::FourPeriod, "four-period"}, {StudyFamily::TenPeriod, "ten-period"}};
constexpr Named<GapPair> kGaps[] = {{GapPair::Sdp1VsSdp2, "sdp1-sdp2"}, {GapPair::Sdp2VsHeuristic, "sdp2-heuristic"}};
constexpr Named<Design> kDesigns[] = {{Design::Full, "full"}, {Design::Lhs, "lhs"}, {Design::LhsPatterns, "lhs-patterns"}};

template <class E, std::size_t N>
std::string_view name_of(const Named<E> (&table)[N], E v) {
  for (const auto& n : table)
    if (n.value == v) return n.name;
  return "?";
}

template <class E, std::size_t N>
E parse_named(const Named<E> (&table)[N], std::string_view s, std::string_view what) {
  for (const auto& n : table)
    if (n.name == s) return n.value;
  throw ConfigError(fmt::format("unknown {} '{}'", what, s));
}

// FNV-1a, for seeds derived from instance ids
std::uint64_t hash_id(std::string_view s) {
  std::uint64_t h = 1469598103934665603ULL;
  for (unsigned char c : s) {
    h ^= c;
    h *= 1099511628211ULL;
  }
  return h;
}

double average(const std::vector<double>& xs) {
  return xs.empty() ? 0.0 : std::accumulate(xs.begin(), xs.end(), 0.0) / static_cast<double>(xs.size());
}

std::vector<std::string> split_csv(const std::string& line) {
  std::vector<std::string> out;
  std::string cur;
  bool quoted = false;
  for (std::size_t i = 0; i < line.size(); ++i) {
    const char c = line[i];
    if (quoted) {
      if (c == '"' && i + 1 < line.size() && line[i + 1] == '"') {
        cur += '"';
        ++i;
      } else if (c == '"') {
        quoted = false;
      } else {
        cur += c;
      }
    } else if (c == '"') {
      quoted = true;
    } else if (c == ',') {
      out.push_back(std::move(cur));
      cur.clear();
    } else {
      cur += c;
    }
  }
  out.push_back(std::move(cur));
  return out;
}

std::string csv_field(const std::string& s) {
  if (s.find_first_of(",\"\n") == std::string::npos) return s;
  std::string out = "\"";
  for (char c : s) {
    if (c == '"') out += '"';
    out += c == '\n' ? ' ' : c;
  }
  return out + "\"";
}

constexpr std::string_view kRecordHeader = "id,p1,p2,K,z,R,v,h,b,etc1,etc2,gap,half_width,replications,ok,message";

std::string record_line(const GapRecord& r) {
  const CostParams& c = r.costs;
  return fmt::format("{},{},{},{},{},{},{},{},{},{},{},{},{},{},{},{}\n", csv_field(r.id), to_string(r.p1), to_string(r.p2),
                     format_number(c.K), format_number(c.z), format_number(c.R), format_number(c.v), format_number(c.h),
                     format_number(c.b), format_number(r.etc1), format_number(r.etc2), format_number(r.gap),
                     format_number(r.half_width), r.replications, r.ok ? 1 : 0, csv_field(r.message));
}

}  // namespace

std::string_view to_string(StudyFamily f) { return name_of(kFamilies, f); }
std::string_view to_string(GapPair g) { return name_of(kGaps, g); }
std::string_view to_string(Design d) { return name_of(kDesigns, d); }
StudyFamily parse_study_family(std::string_view s) { return parse_named(kFamilies, s, "study family"); }
GapPair parse_gap_pair(std::string_view s) { return parse_named(kGaps, s, "gap pair"); }
Design parse_design(std::string_view s) { return parse_named(kDesigns, s, "design"); }

StudySpec StudySpec::four_period() {
  StudySpec s;
  s.name = "four-period";
  s.family = StudyFamily::FourPeriod;
  s.horizon = 4;
  s.demand = DemandFamily::Poisson;
  s.patterns = four_period_patterns();
  s.K = {10, 20, 30};
  s.R = {5, 10, 20};
  s.b = {3, 5};
  s.zv = {{2, 1}, {1, 0.5}};
  s.design = Design::Lhs;
  s.samples = 60;
  s.gap = GapPair::Sdp1VsSdp2;
  return s;
}

StudySpec StudySpec::ten_period(int horizon) {
  StudySpec s;
  s.name = "ten-period";
  s.family = StudyFamily::TenPeriod;
  s.horizon = horizon;
  s.demand = DemandFamily::Normal;
  s.cv = 0.1;
  s.patterns = ten_period_patterns();
  s.K = {10, 20};
  s.R = {5, 10};
  s.b = {3, 5};
  s.zv = {{0.5, 1}};
  s.design = Design::Full;
  s.samples = 25;
  s.gap = GapPair::Sdp2VsHeuristic;
  return s;
}

void StudySpec::validate() const {
  if (horizon < 1) throw ConfigError("study horizon must be at least 1");
  if (patterns.empty() || K.empty() || R.empty() || b.empty() || zv.empty()) throw ConfigError("study grids must be nonempty");
  if (!(scale > 0.0)) throw ConfigError("demand scale must be positive");
  if (demand == DemandFamily::Empirical) throw ConfigError("studies use Poisson or Normal demand");
  if (design != Design::Full && samples < 1) throw ConfigError("LHS designs need at least one sample");
  if (opening_factors.empty()) throw ConfigError("at least one opening factor is required");
  for (auto p : patterns) make_pattern(p, horizon, scale, tables);
}

bool StudySpec::matches_family() const {
  auto same = [](std::vector<double> a, std::vector<double> b) {
    std::sort(a.begin(), a.end());
    std::sort(b.begin(), b.end());
    return a == b;
  };
  const StudySpec ref = family == StudyFamily::FourPeriod ? four_period() : ten_period(horizon);
  auto zs = zv;
  auto rzs = ref.zv;
  std::sort(zs.begin(), zs.end());
  std::sort(rzs.begin(), rzs.end());
  auto pats = patterns;
  auto rpats = ref.patterns;
  std::sort(pats.begin(), pats.end());
  std::sort(rpats.begin(), rpats.end());
  return same(K, ref.K) && same(R, ref.R) && same(b, ref.b) && zs == rzs && h == ref.h && pats == rpats &&
         demand == ref.demand && (family == StudyFamily::FourPeriod || cv == ref.cv);
}

std::vector<std::vector<int>> lhs_sample(const std::vector<int>& levels, int n, std::uint64_t seed) {
  if (n < 1) throw ConfigError("LHS sample size must be at least 1");
  if (levels.empty()) throw ConfigError("LHS needs at least one dimension");
  for (int l : levels)
    if (l < 1) throw ConfigError("every LHS dimension needs at least one level");
  Rng rng(seed);
  std::vector<std::vector<int>> out(static_cast<std::size_t>(n), std::vector<int>(levels.size()));
  std::vector<int> perm(static_cast<std::size_t>(n));
  for (std::size_t d = 0; d < levels.size(); ++d) {
    std::iota(perm.begin(), perm.end(), 0);
    for (int i = n - 1; i > 0; --i) {
      const auto j = static_cast<int>(rng.next() % static_cast<std::uint64_t>(i + 1));
      std::swap(perm[static_cast<std::size_t>(i)], perm[static_cast<std::size_t>(j)]);
    }
    // stratum s maps to level floor(s * L / n): each level is hit floor or ceil of n / L times
    for (int s = 0; s < n; ++s) {
      const auto level = static_cast<int>(static_cast<long>(perm[static_cast<std::size_t>(s)]) * levels[d] / n);
      out[static_cast<std::size_t>(s)][d] = level;
    }
  }
  return out;
}

std::vector<StudyInstance> make_study_instances(const StudySpec& spec) {
  spec.validate();
  const auto np = static_cast<int>(spec.patterns.size());
  const std::vector<int> cost_levels{static_cast<int>(spec.K.size()), static_cast<int>(spec.R.size()),
                                     static_cast<int>(spec.b.size()), static_cast<int>(spec.zv.size())};
  std::vector<std::vector<int>> tuples;  // p1, p2, K, R, b, zv
  auto all_costs = [&] {
    std::vector<std::vector<int>> out;
    for (int k = 0; k < cost_levels[0]; ++k)
      for (int r = 0; r < cost_levels[1]; ++r)
        for (int bb = 0; bb < cost_levels[2]; ++bb)
          for (int z = 0; z < cost_levels[3]; ++z) out.push_back({k, r, bb, z});
    return out;
  };
  // LHS draws may repeat a tuple; redraw with derived seeds until all are distinct
  auto distinct_lhs = [&](const std::vector<int>& levels) {
    long total = 1;
    for (int l : levels) total *= l;
    if (spec.samples > total) throw ConfigError(fmt::format("{} samples exceed the {} distinct design points", spec.samples, total));
    for (std::uint64_t attempt = 0; attempt < 1000; ++attempt) {
      auto s = lhs_sample(levels, spec.samples, mix_seed(spec.seed, attempt));
      if (std::set<std::vector<int>>(s.begin(), s.end()).size() == s.size()) return s;
    }
    throw ConfigError("could not draw a Latin hypercube sample without repeated points");
  };
  switch (spec.design) {
    case Design::Full:
      for (int a = 0; a < np; ++a)
        for (int c = 0; c < np; ++c)
          for (const auto& cost : all_costs()) tuples.push_back({a, c, cost[0], cost[1], cost[2], cost[3]});
      break;
    case Design::Lhs: {
      std::vector<int> levels{np, np};
      levels.insert(levels.end(), cost_levels.begin(), cost_levels.end());
      tuples = distinct_lhs(levels);
      break;
    }
    case Design::LhsPatterns:
      for (const auto& pp : distinct_lhs({np, np}))
        for (const auto& cost : all_costs()) tuples.push_back({pp[0], pp[1], cost[0], cost[1], cost[2], cost[3]});
      break;
  }

  std::vector<StudyInstance> out;
  for (const auto& t : tuples) {
    StudyInstance si;
    si.p1 = spec.patterns[static_cast<std::size_t>(t[0])];
    si.p2 = spec.patterns[static_cast<std::size_t>(t[1])];
    Instance& inst = si.instance;
    inst.horizon = spec.horizon;
    const auto [z, v] = spec.zv[static_cast<std::size_t>(t[5])];
    inst.costs = {spec.K[static_cast<std::size_t>(t[2])], z, spec.R[static_cast<std::size_t>(t[3])], v, spec.h,
                  spec.b[static_cast<std::size_t>(t[4])]};
    inst.truncation_eps = spec.truncation_eps;
    for (int j = 0; j < 2; ++j) {
      auto means = make_pattern(j == 0 ? si.p1 : si.p2, spec.horizon, spec.scale, spec.tables);
      inst.demand[static_cast<std::size_t>(j)] =
          spec.demand == DemandFamily::Normal ? DemandSpec::normal(std::move(means), spec.cv) : DemandSpec::poisson(std::move(means));
    }
    inst.bounds = spec.bounds ? *spec.bounds : Instance::default_bounds(inst.demand, inst.horizon, inst.truncation_eps);
    inst.validate();
    const CostParams& c = inst.costs;
    si.id = fmt::format("{}-{}-{}-K{}-R{}-b{}-z{}-v{}", spec.name, to_string(si.p1), to_string(si.p2), format_number(c.K),
                        format_number(c.R), format_number(c.b), format_number(c.z), format_number(c.v));
    std::array<double, 2> mean{};
    for (int j = 0; j < 2; ++j) {
      const auto& d = inst.demand[static_cast<std::size_t>(j)];
      mean[static_cast<std::size_t>(j)] = average(d.means);
    }
    for (double f1 : spec.opening_factors)
      for (double f2 : spec.opening_factors) {
        const State s{static_cast<int>(std::lround(f1 * mean[0])), static_cast<int>(std::lround(f2 * mean[1]))};
        if (!inst.bounds.contains(s)) throw ConfigError(fmt::format("opening state ({}, {}) lies outside the lattice of {}", s.i1, s.i2, si.id));
        si.openings.push_back(s);
      }
    out.push_back(std::move(si));
  }
  std::set<std::string> ids;
  for (const auto& si : out)
    if (!ids.insert(si.id).second) throw ConfigError(fmt::format("duplicate study instance {}", si.id));
  return out;
}

GapRecord evaluate_instance(const StudySpec& spec, const StudyInstance& si, int workers) {
  GapRecord r;
  r.id = si.id;
  r.p1 = si.p1;
  r.p2 = si.p2;
  r.costs = si.instance.costs;
  try {
    SdpOptions sdp;
    sdp.initial_states = si.openings;
    sdp.workers = workers;
    const SdpResult two_stage = solve_sdp2(si.instance, sdp);
    std::vector<std::string> notes;
    if (two_stage.diagnostic.too_tight) notes.push_back(two_stage.diagnostic.message);
    std::vector<double> etc1;
    std::vector<double> etc2;
    if (spec.gap == GapPair::Sdp1VsSdp2) {
      const SdpResult joint = solve_sdp1(si.instance, sdp);
      if (joint.diagnostic.too_tight) notes.push_back(joint.diagnostic.message);
      for (const auto& s : si.openings) {
        etc1.push_back(joint.table.cost(1, s));
        etc2.push_back(two_stage.table.cost(1, s));
      }
    } else {
      double var = 0.0;
      EstimateOptions eo = spec.estimate;
      eo.workers = workers;
      for (std::size_t k = 0; k < si.openings.size(); ++k) {
        const State& s = si.openings[k];
        etc1.push_back(two_stage.table.cost(1, s));
        const Estimate e = estimate(si.instance, s, mix_seed(spec.seed ^ hash_id(si.id), k), eo, spec.heuristic);
        etc2.push_back(e.mean);
        var += e.half_width * e.half_width;
        r.replications += e.n;
        if (!e.converged) notes.push_back(fmt::format("estimate from ({}, {}) hit the replication cap", s.i1, s.i2));
      }
      // independent estimates: half-widths add in quadrature for the average
      r.half_width = std::sqrt(var) / static_cast<double>(si.openings.size());
    }
    r.etc1 = average(etc1);
    r.etc2 = average(etc2);
    if (!(r.etc1 > 0.0)) throw DomainError("ETC1 must be positive");
    r.gap = 100.0 * (r.etc2 - r.etc1) / r.etc1;
    if (!std::isfinite(r.gap)) throw DomainError("gap is not finite");
    for (std::size_t i = 0; i < notes.size(); ++i) r.message += (i ? "; " : "") + notes[i];
  } catch (const std::exception& ex) {
    r.ok = false;
    r.message = ex.what();
  }
  return r;
}

std::vector<PivotRow> pivot_tables(const std::vector<GapRecord>& records) {
  std::vector<PivotRow> out;
  auto group = [&](std::string_view pivot, auto key_of) {
    std::map<std::string, std::vector<const GapRecord*>> groups;
    std::vector<std::string> order;
    for (const auto& r : records) {
      std::string key = key_of(r);
      if (!groups.count(key)) order.push_back(key);
      groups[key].push_back(&r);
    }
    if (pivot != "p1") std::sort(order.begin(), order.end(), [](const std::string& a, const std::string& b) {
      return std::stod(a) < std::stod(b);
    });
    for (const auto& key : order) {
      PivotRow row;
      row.pivot = pivot;
      row.level = key;
      double gap = 0.0;
      double hw = 0.0;
      for (const GapRecord* r : groups[key]) {
        ++row.instances;
        if (!r->ok) {
          ++row.failures;
          continue;
        }
        gap += r->gap;
        hw += r->half_width;
      }
      const long n = row.instances - row.failures;
      row.mean_gap = n > 0 ? gap / static_cast<double>(n) : std::nan("");
      row.mean_half_width = n > 0 ? hw / static_cast<double>(n) : std::nan("");
      out.push_back(row);
    }
  };
  // pattern rows keep the order in which patterns first appear
  group("p1", [](const GapRecord& r) { return std::string(to_string(r.p1)); });
  group("K", [](const GapRecord& r) { return format_number(r.costs.K); });
  group("R", [](const GapRecord& r) { return format_number(r.costs.R); });
  group("b", [](const GapRecord& r) { return format_number(r.costs.b); });
  if (!records.empty()) {
    group("all", [](const GapRecord&) { return std::string("0"); });
    out.back().level = "all";
  }
  return out;
}

std::string format_number(double x) {
  if (std::isnan(x)) return "nan";
  return fmt::format("{:.12g}", x);
}

void write_records_csv(std::ostream& out, const std::vector<GapRecord>& records) {
  out << kRecordHeader << '\n';
  for (const auto& r : records) out << record_line(r);
}

std::vector<GapRecord> read_records_csv(std::istream& in) {
  std::vector<GapRecord> out;
  std::string line;
  if (!std::getline(in, line)) return out;
  if (line != kRecordHeader) throw ConfigError("record file has an unexpected header");
  while (std::getline(in, line)) {
    if (line.empty()) continue;
    const auto f = split_csv(line);
    if (f.size() != 16) throw ConfigError(fmt::format("record line has {} fields: {}", f.size(), line));
    GapRecord r;
    r.id = f[0];
    r.p1 = parse_pattern(f[1]);
    r.p2 = parse_pattern(f[2]);
    r.costs = {std::stod(f[3]), std::stod(f[4]), std::stod(f[5]), std::stod(f[6]), std::stod(f[7]), std::stod(f[8])};
    r.etc1 = std::stod(f[9]);
    r.etc2 = std::stod(f[10]);
    r.gap = std::stod(f[11]);
    r.half_width = std::stod(f[12]);
    r.replications = std::stol(f[13]);
    r.ok = f[14] == "1";
    r.message = f[15];
    out.push_back(std::move(r));
  }
  return out;
}

void write_pivots_csv(std::ostream& out, const std::vector<PivotRow>& rows) {
  out << "pivot,level,instances,failures,mean_gap,mean_half_width\n";
  for (const auto& r : rows) {
    out << fmt::format("{},{},{},{},{},{}\n", r.pivot, r.level, r.instances, r.failures, format_number(r.mean_gap),
                       format_number(r.mean_half_width));
  }
}

StudyResult run_study(const StudySpec& spec, const StudyRunOptions& options) {
  const std::vector<StudyInstance> instances = make_study_instances(spec);
  const int workers = options.workers > 0 ? options.workers : default_workers();
  std::map<std::string, GapRecord> done;
  if (options.store && std::filesystem::exists(*options.store)) {
    std::ifstream in(*options.store);
    for (auto& r : read_records_csv(in)) done[r.id] = std::move(r);
  }
  std::vector<std::size_t> todo;
  for (std::size_t i = 0; i < instances.size(); ++i)
    if (!done.count(instances[i].id)) todo.push_back(i);

  std::ofstream store;
  if (options.store) {
    const bool fresh = !std::filesystem::exists(*options.store) || std::filesystem::file_size(*options.store) == 0;
    store.open(*options.store, std::ios::app);
    if (!store) throw ConfigError(fmt::format("cannot open record store {}", options.store->string()));
    if (fresh) store << kRecordHeader << '\n' << std::flush;
  }
  std::mutex mutex;
  std::vector<GapRecord> fresh_records(todo.size());
  // instances run in parallel; each solver inside is single-threaded
  parallel_for(
      todo.size(),
      [&](std::size_t begin, std::size_t end) {
        for (std::size_t k = begin; k < end; ++k) {
          GapRecord r = evaluate_instance(spec, instances[todo[k]], 1);
          std::lock_guard lock(mutex);
          if (store.is_open()) store << record_line(r) << std::flush;
          if (options.on_record) options.on_record(r);
          fresh_records[k] = std::move(r);
        }
      },
      std::min<int>(workers, static_cast<int>(std::max<std::size_t>(todo.size(), 1))));
  for (auto& r : fresh_records) done[r.id] = std::move(r);

  StudyResult result;
  result.computed = static_cast<long>(todo.size());
  for (const auto& si : instances) result.records.push_back(done.at(si.id));
  result.pivots = pivot_tables(result.records);
  if (options.store) {
    // rewrite in instance order so the store is byte-identical however it was filled
    store.close();
    const auto tmp = std::filesystem::path(options.store->string() + ".tmp");
    {
      std::ofstream out(tmp);
      write_records_csv(out, result.records);
    }
    std::filesystem::rename(tmp, *options.store);
  }
  return result;
}

double quantile_type7(std::vector<double> xs, double p) {
  if (xs.empty()) throw DomainError("quantile of an empty sample");
  if (!(p >= 0.0 && p <= 1.0)) throw DomainError(fmt::format("quantile level {} outside [0, 1]", p));
  std::sort(xs.begin(), xs.end());
  const double h = (static_cast<double>(xs.size()) - 1.0) * p;
  const auto lo = static_cast<std::size_t>(std::floor(h));
  const std::size_t hi = std::min(lo + 1, xs.size() - 1);
  return xs[lo] + (h - static_cast<double>(lo)) * (xs[hi] - xs[lo]);
}

std::vector<BoxplotRow> boxplot_data(const std::vector<GapRecord>& records, std::string_view pivot) {
  std::function<std::string(const GapRecord&)> key_of;
  if (pivot == "p1") {
    key_of = [](const GapRecord& r) { return std::string(to_string(r.p1)); };
  } else if (pivot == "p2") {
    key_of = [](const GapRecord& r) { return std::string(to_string(r.p2)); };
  } else if (pivot == "K") {
    key_of = [](const GapRecord& r) { return format_number(r.costs.K); };
  } else if (pivot == "R") {
    key_of = [](const GapRecord& r) { return format_number(r.costs.R); };
  } else if (pivot == "b") {
    key_of = [](const GapRecord& r) { return format_number(r.costs.b); };
  } else if (pivot == "all") {
    key_of = [](const GapRecord&) { return std::string("all"); };
  } else {
    throw ConfigError(fmt::format("unknown pivot '{}'", pivot));
  }
  std::vector<std::string> order;
  std::map<std::string, std::vector<double>> groups;
  for (const auto& r : records) {
    if (!r.ok) continue;
    const std::string key = key_of(r);
    if (!groups.count(key)) order.push_back(key);
    groups[key].push_back(r.gap);
  }
  std::vector<BoxplotRow> out;
  for (const auto& key : order) {
    const auto& xs = groups[key];
    BoxplotRow row;
    row.pivot = pivot;
    row.group = key;
    row.n = static_cast<long>(xs.size());
    row.min = *std::min_element(xs.begin(), xs.end());
    row.max = *std::max_element(xs.begin(), xs.end());
    row.q1 = quantile_type7(xs, 0.25);
    row.median = quantile_type7(xs, 0.5);
    row.q3 = quantile_type7(xs, 0.75);
    const double iqr = row.q3 - row.q1;
    const double lo_fence = row.q1 - 1.5 * iqr;
    const double hi_fence = row.q3 + 1.5 * iqr;
    row.lower_whisker = row.max;
    row.upper_whisker = row.min;
    for (double x : xs) {
      if (x < lo_fence || x > hi_fence) {
        row.outliers.push_back(x);
      } else {
        row.lower_whisker = std::min(row.lower_whisker, x);
        row.upper_whisker = std::max(row.upper_whisker, x);
      }
    }
    std::sort(row.outliers.begin(), row.outliers.end());
    out.push_back(std::move(row));
  }
  return out;
}

void write_boxplot_csv(std::ostream& out, const std::vector<BoxplotRow>& rows) {
  out << "pivot,group,n,min,q1,median,q3,max,lower_whisker,upper_whisker,outliers\n";
  for (const auto& r : rows) {
    std::string outliers;
    for (std::size_t i = 0; i < r.outliers.size(); ++i) outliers += (i ? ";" : "") + format_number(r.outliers[i]);
    out << fmt::format("{},{},{},{},{},{},{},{},{},{},{}\n", r.pivot, r.group, r.n, format_number(r.min), format_number(r.q1),
                       format_number(r.median), format_number(r.q3), format_number(r.max), format_number(r.lower_whisker),
                       format_number(r.upper_whisker), outliers);
  }
}

}  // namespace tship
