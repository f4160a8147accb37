#pragma once

#include <cstdint>
#include <filesystem>
#include <functional>
#include <iosfwd>
#include <optional>
#include <string>
#include <utility>
#include <vector>

#include "tship/demand.hpp"
#include "tship/heuristic.hpp"
#include "tship/instance.hpp"

namespace tship {

enum class StudyFamily { FourPeriod, TenPeriod };
enum class GapPair {
  Sdp1VsSdp2,       // optimal joint SDP against the two-stage SDP
  Sdp2VsHeuristic,  // two-stage SDP against the receding-horizon heuristic
};
enum class Design {
  Full,         // every pattern pair with every cost combination
  Lhs,          // Latin hypercube over patterns and cost levels jointly
  LhsPatterns,  // Latin hypercube over pattern pairs, crossed with the full cost grid
};

std::string_view to_string(StudyFamily f);
std::string_view to_string(GapPair g);
std::string_view to_string(Design d);
StudyFamily parse_study_family(std::string_view s);
GapPair parse_gap_pair(std::string_view s);
Design parse_design(std::string_view s);

struct StudySpec {
  std::string name = "study";
  StudyFamily family = StudyFamily::FourPeriod;
  int horizon = 4;
  DemandFamily demand = DemandFamily::Poisson;
  double scale = 10.0;
  double cv = 0.1;
  std::vector<PatternId> patterns;
  std::vector<double> K, R, b;
  std::vector<std::pair<double, double>> zv;  // (z, v) pairs
  double h = 1.0;
  Design design = Design::Lhs;
  int samples = 60;
  std::uint64_t seed = 1;
  GapPair gap = GapPair::Sdp1VsSdp2;
  /// Opening state (round(f1 * mean1), round(f2 * mean2)) for every pair of factors,
  /// mean_j being the average per-period demand of location j.
  std::vector<double> opening_factors{-0.5, 0.0, 0.5};
  std::optional<StateBounds> bounds;  // default: Instance::default_bounds
  double truncation_eps = kDefaultTruncationEps;
  PatternTables tables = PatternTables::defaults();
  EstimateOptions estimate;
  HeuristicOptions heuristic;

  /// Four-period Poisson family with the full cost grid.
  static StudySpec four_period();
  /// Ten-period Normal family; shorter horizons use the leading periods of each pattern.
  static StudySpec ten_period(int horizon = 10);

  void validate() const;
  /// True when the cost grid and pattern pool are those of the family.
  [[nodiscard]] bool matches_family() const;
};

struct StudyInstance {
  std::string id;
  PatternId p1{};
  PatternId p2{};
  Instance instance;
  std::vector<State> openings;
};

/// n index tuples, one level index per dimension; each dimension's levels are
/// used floor(n / levels) or ceil(n / levels) times.
std::vector<std::vector<int>> lhs_sample(const std::vector<int>& levels, int n, std::uint64_t seed);

/// Sampled instances of the study, in a deterministic order with unique ids.
std::vector<StudyInstance> make_study_instances(const StudySpec& spec);

struct GapRecord {
  std::string id;
  PatternId p1{};
  PatternId p2{};
  CostParams costs;
  double etc1 = 0.0;
  double etc2 = 0.0;
  double gap = 0.0;         // percent
  double half_width = 0.0;  // of etc2, heuristic pairs only
  long replications = 0;
  bool ok = true;
  std::string message;
};

/// ETC1, ETC2 (averages over the opening states) and the gap of one instance.
/// Exceptions from the solvers produce a record with ok = false.
GapRecord evaluate_instance(const StudySpec& spec, const StudyInstance& si, int workers = 1);

struct PivotRow {
  std::string pivot;  // p1, K, R, b, all
  std::string level;
  long instances = 0;
  long failures = 0;
  double mean_gap = 0.0;
  double mean_half_width = 0.0;
};

/// Averages over successful records grouped by location-1 pattern, K, R, b and overall.
std::vector<PivotRow> pivot_tables(const std::vector<GapRecord>& records);

struct StudyResult {
  std::vector<GapRecord> records;
  std::vector<PivotRow> pivots;
  long computed = 0;  // records computed in this run (the rest came from the store)
};

struct StudyRunOptions {
  int workers = 0;  // 0 = default_workers()
  /// Record store; existing records with matching ids are reused and new ones appended.
  std::optional<std::filesystem::path> store;
  std::function<void(const GapRecord&)> on_record;
};

StudyResult run_study(const StudySpec& spec, const StudyRunOptions& options = {});

std::string format_number(double x);
void write_records_csv(std::ostream& out, const std::vector<GapRecord>& records);
std::vector<GapRecord> read_records_csv(std::istream& in);
void write_pivots_csv(std::ostream& out, const std::vector<PivotRow>& rows);

/// Sample quantile with linear interpolation between order statistics (type 7).
double quantile_type7(std::vector<double> xs, double p);

struct BoxplotRow {
  std::string pivot;
  std::string group;
  long n = 0;
  double min = 0.0, q1 = 0.0, median = 0.0, q3 = 0.0, max = 0.0;
  double lower_whisker = 0.0, upper_whisker = 0.0;  // extreme data within 1.5 IQR of the quartiles
  std::vector<double> outliers;
};

/// Pivot: p1, p2, K, R, b or all.
std::vector<BoxplotRow> boxplot_data(const std::vector<GapRecord>& records, std::string_view pivot);
void write_boxplot_csv(std::ostream& out, const std::vector<BoxplotRow>& rows);

}  // namespace tship
