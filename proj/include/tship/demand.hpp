#pragma once

#include <cstdint>
#include <map>
#include <random>
#include <span>
#include <string>
#include <string_view>
#include <vector>

namespace tship {

/// Probability mass function on the consecutive integers
/// [support_min, support_min + pmf.size() - 1].
struct DiscreteDist {
  int support_min = 0;
  std::vector<double> pmf;

  [[nodiscard]] int support_max() const { return support_min + static_cast<int>(pmf.size()) - 1; }
  [[nodiscard]] std::size_t size() const { return pmf.size(); }
  [[nodiscard]] double prob(int k) const;
  [[nodiscard]] double mean() const;
  [[nodiscard]] double variance() const;
  [[nodiscard]] double total_mass() const;

  static DiscreteDist point_mass(int k);
  /// Builds from (value, probability) pairs; values may be unsorted and sparse.
  static DiscreteDist from_pairs(std::span<const std::pair<int, double>> pairs);
};

enum class DemandFamily { Poisson, Normal, Empirical };

std::string_view to_string(DemandFamily f);
DemandFamily parse_family(std::string_view s);

/// Demand model of one stocking location over the planning horizon.
///
/// Poisson and Normal specs are parameterised by the per-period means (Normal
/// uses sigma_t = cv * mean_t). Empirical specs carry explicit per-period pmfs
/// and are used for deterministic and hand-built cases.
struct DemandSpec {
  DemandFamily family = DemandFamily::Poisson;
  std::vector<double> means;
  double cv = 0.0;
  std::vector<DiscreteDist> empirical;

  [[nodiscard]] int horizon() const;
  [[nodiscard]] double mean(int period) const;
  [[nodiscard]] double stddev(int period) const;
  void validate() const;

  static DemandSpec poisson(std::vector<double> means);
  static DemandSpec normal(std::vector<double> means, double cv);
  static DemandSpec from_pmfs(std::vector<DiscreteDist> pmfs);
  static DemandSpec deterministic(const std::vector<int>& values);
};

/// Default tail mass discarded on each side when discretizing.
inline constexpr double kDefaultTruncationEps = 1e-5;

/// Integer pmf of the period-`period` demand (1-based), truncated and renormalized.
DiscreteDist discretize(const DemandSpec& spec, int period, double truncation_eps = kDefaultTruncationEps);

/// Exact discrete convolution (distribution of the sum of independent draws).
DiscreteDist convolve(const DiscreteDist& a, const DiscreteDist& b);

// ---------------------------------------------------------------------------
// Demand patterns

enum class PatternId { LCY1, LCY2, SIN1, SIN2, STAT, RAND, EMP1, EMP2, EMP3, EMP4, LCY, SIN, EMP };

std::string_view to_string(PatternId p);
PatternId parse_pattern(std::string_view s);
/// Tags of the 4-period test family, in table order.
std::vector<PatternId> four_period_patterns();
/// Tags of the 10-period test family, in table order.
std::vector<PatternId> ten_period_patterns();

/// Pattern shapes as fractions of `scale`. Any tag present in `tables`
/// overrides the built-in closed form; the EMP tags are only defined by tables.
struct PatternTables {
  std::map<std::string, std::vector<double>> tables;
  std::uint64_t rand_seed = 20210607;

  static PatternTables defaults();
};

std::vector<double> make_pattern(PatternId tag, int horizon, double scale,
                                 const PatternTables& tables = PatternTables::defaults());

// ---------------------------------------------------------------------------
// Sampling

/// Platform-independent random source: mt19937_64 with explicit bit-to-double
/// conversion so that sampled paths are identical across standard libraries.
class Rng {
 public:
  explicit Rng(std::uint64_t seed) : engine_(seed) {}

  /// Uniform on [0, 1).
  double uniform() { return static_cast<double>(engine_() >> 11) * 0x1.0p-53; }
  double standard_normal();
  std::uint64_t next() { return engine_(); }

 private:
  std::mt19937_64 engine_;
  double spare_ = 0.0;
  bool has_spare_ = false;
};

/// SplitMix64 finaliser; used to derive independent stream seeds.
std::uint64_t mix_seed(std::uint64_t a, std::uint64_t b);

int sample(const DiscreteDist& d, Rng& rng);
/// Draw from the continuous model (Normal) or the pmf (other families).
double sample_continuous(const DemandSpec& spec, int period, Rng& rng);

}  // namespace tship
