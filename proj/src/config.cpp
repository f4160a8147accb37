#include "tship/config.hpp"

#include <fmt/format.h>
#include <yaml-cpp/yaml.h>

#include <fstream>
#include <set>
#include <sstream>

#include "tship/errors.hpp"

namespace tship {

namespace {

std::string read_file(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw ConfigError(fmt::format("cannot read {}", path.string()));
  std::ostringstream ss;
  ss << in.rdbuf();
  return ss.str();
}

YAML::Node parse_yaml(const std::string& text) {
  try {
    return YAML::Load(text);
  } catch (const YAML::Exception& e) {
    throw ConfigError(fmt::format("YAML syntax error: {}", e.what()));
  }
}

void check_keys(const YAML::Node& node, std::string_view where, std::initializer_list<std::string_view> allowed) {
  if (!node.IsMap()) throw ConfigError(fmt::format("{} must be a mapping", where));
  const std::set<std::string_view> ok(allowed);
  for (const auto& kv : node) {
    const auto key = kv.first.as<std::string>();
    if (!ok.count(key)) throw ConfigError(fmt::format("unknown key '{}' in {}", key, where));
  }
}

void check_schema(const YAML::Node& root, std::string_view expected) {
  if (!root["schema"]) throw ConfigError(fmt::format("missing schema key (expected {})", expected));
  const auto got = root["schema"].as<std::string>();
  if (got != expected) throw ConfigError(fmt::format("schema '{}' is not supported (expected {})", got, expected));
}

template <class T>
T get(const YAML::Node& node, std::string_view key, std::string_view where) {
  const YAML::Node v = node[std::string(key)];
  if (!v) throw ConfigError(fmt::format("missing key '{}' in {}", key, where));
  try {
    return v.as<T>();
  } catch (const YAML::Exception&) {
    throw ConfigError(fmt::format("bad value for '{}' in {}", key, where));
  }
}

template <class T>
void maybe(const YAML::Node& node, std::string_view key, std::string_view where, T& out) {
  if (node[std::string(key)]) out = get<T>(node, key, where);
}

PatternTables parse_tables(const YAML::Node& node, PatternTables base) {
  if (!node) return base;
  if (!node.IsMap()) throw ConfigError("pattern_tables must be a mapping");
  for (const auto& kv : node) {
    const auto key = kv.first.as<std::string>();
    if (key == "rand_seed") {
      base.rand_seed = kv.second.as<std::uint64_t>();
    } else {
      parse_pattern(key);
      base.tables[key] = kv.second.as<std::vector<double>>();
    }
  }
  return base;
}

DemandSpec parse_demand(const YAML::Node& node, int horizon, const PatternTables& tables, std::string_view where) {
  check_keys(node, where, {"family", "means", "pattern", "scale", "cv", "pmfs"});
  const DemandFamily family = parse_family(get<std::string>(node, "family", where));
  if (family == DemandFamily::Empirical) {
    if (!node["pmfs"]) throw ConfigError(fmt::format("{} needs pmfs", where));
    std::vector<DiscreteDist> pmfs;
    for (const auto& p : node["pmfs"]) {
      check_keys(p, where, {"min", "p"});
      DiscreteDist d;
      d.support_min = get<int>(p, "min", where);
      d.pmf = get<std::vector<double>>(p, "p", where);
      pmfs.push_back(std::move(d));
    }
    return DemandSpec::from_pmfs(std::move(pmfs));
  }
  std::vector<double> means;
  if (node["means"]) {
    if (node["pattern"]) throw ConfigError(fmt::format("{}: give either means or pattern", where));
    means = get<std::vector<double>>(node, "means", where);
  } else if (node["pattern"]) {
    means = make_pattern(parse_pattern(get<std::string>(node, "pattern", where)), horizon, get<double>(node, "scale", where), tables);
  } else {
    throw ConfigError(fmt::format("{} needs means or pattern", where));
  }
  if (family == DemandFamily::Normal) return DemandSpec::normal(std::move(means), get<double>(node, "cv", where));
  return DemandSpec::poisson(std::move(means));
}

std::optional<StateBounds> parse_bounds(const YAML::Node& node) {
  if (!node) return std::nullopt;
  check_keys(node, "bounds", {"i_min", "i_max", "q_max"});
  return StateBounds{get<int>(node, "i_min", "bounds"), get<int>(node, "i_max", "bounds"), get<int>(node, "q_max", "bounds")};
}

void emit_doubles(YAML::Emitter& e, const std::vector<double>& xs) {
  e << YAML::Flow << YAML::BeginSeq;
  for (double x : xs) e << x;
  e << YAML::EndSeq;
}

}  // namespace

Instance parse_instance(const std::string& yaml_text) {
  const YAML::Node root = parse_yaml(yaml_text);
  check_keys(root, "instance", {"schema", "horizon", "costs", "demand", "bounds", "truncation_eps", "pattern_tables"});
  check_schema(root, kInstanceSchema);
  Instance inst;
  inst.horizon = get<int>(root, "horizon", "instance");
  const YAML::Node c = root["costs"];
  if (!c) throw ConfigError("missing key 'costs' in instance");
  check_keys(c, "costs", {"K", "z", "R", "v", "h", "b"});
  inst.costs = {get<double>(c, "K", "costs"), get<double>(c, "z", "costs"), get<double>(c, "R", "costs"),
                get<double>(c, "v", "costs"), get<double>(c, "h", "costs"), get<double>(c, "b", "costs")};
  const PatternTables tables = parse_tables(root["pattern_tables"], PatternTables::defaults());
  const YAML::Node d = root["demand"];
  if (!d || !d.IsSequence() || d.size() != 2) throw ConfigError("demand must list exactly two locations");
  for (std::size_t j = 0; j < 2; ++j) inst.demand[j] = parse_demand(d[j], inst.horizon, tables, fmt::format("demand[{}]", j));
  maybe(root, "truncation_eps", "instance", inst.truncation_eps);
  const auto b = parse_bounds(root["bounds"]);
  inst.bounds = b ? *b : Instance::default_bounds(inst.demand, inst.horizon, inst.truncation_eps);
  inst.validate();
  return inst;
}

Instance load_instance(const std::filesystem::path& path) { return parse_instance(read_file(path)); }

void write_instance(std::ostream& out, const Instance& inst) {
  YAML::Emitter e;
  e.SetDoublePrecision(17);
  e << YAML::BeginMap;
  e << YAML::Key << "schema" << YAML::Value << std::string(kInstanceSchema);
  e << YAML::Key << "horizon" << YAML::Value << inst.horizon;
  const CostParams& c = inst.costs;
  e << YAML::Key << "costs" << YAML::Value << YAML::Flow << YAML::BeginMap;
  e << YAML::Key << "K" << YAML::Value << c.K << YAML::Key << "z" << YAML::Value << c.z;
  e << YAML::Key << "R" << YAML::Value << c.R << YAML::Key << "v" << YAML::Value << c.v;
  e << YAML::Key << "h" << YAML::Value << c.h << YAML::Key << "b" << YAML::Value << c.b;
  e << YAML::EndMap;
  e << YAML::Key << "demand" << YAML::Value << YAML::BeginSeq;
  for (const auto& d : inst.demand) {
    e << YAML::BeginMap << YAML::Key << "family" << YAML::Value << std::string(to_string(d.family));
    if (d.family == DemandFamily::Empirical) {
      e << YAML::Key << "pmfs" << YAML::Value << YAML::BeginSeq;
      for (const auto& p : d.empirical) {
        e << YAML::Flow << YAML::BeginMap << YAML::Key << "min" << YAML::Value << p.support_min << YAML::Key << "p" << YAML::Value;
        emit_doubles(e, p.pmf);
        e << YAML::EndMap;
      }
      e << YAML::EndSeq;
    } else {
      e << YAML::Key << "means" << YAML::Value;
      emit_doubles(e, d.means);
      if (d.family == DemandFamily::Normal) e << YAML::Key << "cv" << YAML::Value << d.cv;
    }
    e << YAML::EndMap;
  }
  e << YAML::EndSeq;
  e << YAML::Key << "bounds" << YAML::Value << YAML::Flow << YAML::BeginMap;
  e << YAML::Key << "i_min" << YAML::Value << inst.bounds.i_min << YAML::Key << "i_max" << YAML::Value << inst.bounds.i_max;
  e << YAML::Key << "q_max" << YAML::Value << inst.bounds.q_max << YAML::EndMap;
  e << YAML::Key << "truncation_eps" << YAML::Value << inst.truncation_eps;
  e << YAML::EndMap;
  out << e.c_str() << '\n';
}

StudySpec parse_study(const std::string& yaml_text) {
  const YAML::Node root = parse_yaml(yaml_text);
  check_keys(root, "study",
             {"schema", "name", "family", "horizon", "demand", "scale", "cv", "patterns", "K", "R", "b", "zv", "h", "design",
              "samples", "seed", "gap", "opening_factors", "bounds", "truncation_eps", "pattern_tables", "estimate", "heuristic"});
  check_schema(root, kStudySchema);
  const StudyFamily family = parse_study_family(get<std::string>(root, "family", "study"));
  int horizon = family == StudyFamily::FourPeriod ? 4 : 10;
  maybe(root, "horizon", "study", horizon);
  StudySpec s = family == StudyFamily::FourPeriod ? StudySpec::four_period() : StudySpec::ten_period(horizon);
  s.horizon = horizon;
  maybe(root, "name", "study", s.name);
  if (root["demand"]) s.demand = parse_family(get<std::string>(root, "demand", "study"));
  maybe(root, "scale", "study", s.scale);
  maybe(root, "cv", "study", s.cv);
  if (root["patterns"]) {
    s.patterns.clear();
    for (const auto& p : get<std::vector<std::string>>(root, "patterns", "study")) s.patterns.push_back(parse_pattern(p));
  }
  maybe(root, "K", "study", s.K);
  maybe(root, "R", "study", s.R);
  maybe(root, "b", "study", s.b);
  if (root["zv"]) {
    s.zv.clear();
    for (const auto& pair : get<std::vector<std::vector<double>>>(root, "zv", "study")) {
      if (pair.size() != 2) throw ConfigError("each zv entry is a [z, v] pair");
      s.zv.emplace_back(pair[0], pair[1]);
    }
  }
  maybe(root, "h", "study", s.h);
  if (root["design"]) s.design = parse_design(get<std::string>(root, "design", "study"));
  maybe(root, "samples", "study", s.samples);
  maybe(root, "seed", "study", s.seed);
  if (root["gap"]) s.gap = parse_gap_pair(get<std::string>(root, "gap", "study"));
  maybe(root, "opening_factors", "study", s.opening_factors);
  s.bounds = parse_bounds(root["bounds"]);
  maybe(root, "truncation_eps", "study", s.truncation_eps);
  s.tables = parse_tables(root["pattern_tables"], s.tables);
  if (const YAML::Node e = root["estimate"]) {
    check_keys(e, "estimate", {"confidence", "rel_halfwidth", "min_replications", "max_replications", "batch"});
    maybe(e, "confidence", "estimate", s.estimate.confidence);
    maybe(e, "rel_halfwidth", "estimate", s.estimate.rel_halfwidth);
    maybe(e, "min_replications", "estimate", s.estimate.min_replications);
    maybe(e, "max_replications", "estimate", s.estimate.max_replications);
    maybe(e, "batch", "estimate", s.estimate.batch);
  }
  if (const YAML::Node h = root["heuristic"]) {
    check_keys(h, "heuristic", {"regions", "encoding", "lookahead", "expected_first_period"});
    maybe(h, "regions", "heuristic", s.heuristic.n_regions);
    if (h["encoding"]) {
      const auto enc = get<std::string>(h, "encoding", "heuristic");
      if (enc == "segments") {
        s.heuristic.encoding = Lp1Encoding::Segments;
      } else if (enc == "minorants") {
        s.heuristic.encoding = Lp1Encoding::Minorants;
      } else {
        throw ConfigError(fmt::format("unknown LP-1 encoding '{}'", enc));
      }
    }
    if (h["lookahead"]) {
      const auto la = get<std::string>(h, "lookahead", "heuristic");
      if (la == "independent") {
        s.heuristic.lookahead = Lookahead::Independent;
      } else if (la == "realized") {
        s.heuristic.lookahead = Lookahead::Realized;
      } else {
        throw ConfigError(fmt::format("unknown lookahead '{}'", la));
      }
    }
    maybe(h, "expected_first_period", "heuristic", s.heuristic.expected_first_period);
  }
  s.validate();
  return s;
}

StudySpec load_study(const std::filesystem::path& path) { return parse_study(read_file(path)); }

void write_study(std::ostream& out, const StudySpec& s) {
  YAML::Emitter e;
  e.SetDoublePrecision(17);
  e << YAML::BeginMap;
  e << YAML::Key << "schema" << YAML::Value << std::string(kStudySchema);
  e << YAML::Key << "name" << YAML::Value << s.name;
  e << YAML::Key << "family" << YAML::Value << std::string(to_string(s.family));
  e << YAML::Key << "horizon" << YAML::Value << s.horizon;
  e << YAML::Key << "demand" << YAML::Value << std::string(to_string(s.demand));
  e << YAML::Key << "scale" << YAML::Value << s.scale;
  e << YAML::Key << "cv" << YAML::Value << s.cv;
  e << YAML::Key << "patterns" << YAML::Value << YAML::Flow << YAML::BeginSeq;
  for (auto p : s.patterns) e << std::string(to_string(p));
  e << YAML::EndSeq;
  e << YAML::Key << "K" << YAML::Value;
  emit_doubles(e, s.K);
  e << YAML::Key << "R" << YAML::Value;
  emit_doubles(e, s.R);
  e << YAML::Key << "b" << YAML::Value;
  emit_doubles(e, s.b);
  e << YAML::Key << "zv" << YAML::Value << YAML::Flow << YAML::BeginSeq;
  for (const auto& [z, v] : s.zv) e << YAML::Flow << YAML::BeginSeq << z << v << YAML::EndSeq;
  e << YAML::EndSeq;
  e << YAML::Key << "h" << YAML::Value << s.h;
  e << YAML::Key << "design" << YAML::Value << std::string(to_string(s.design));
  e << YAML::Key << "samples" << YAML::Value << s.samples;
  e << YAML::Key << "seed" << YAML::Value << s.seed;
  e << YAML::Key << "gap" << YAML::Value << std::string(to_string(s.gap));
  e << YAML::Key << "opening_factors" << YAML::Value;
  emit_doubles(e, s.opening_factors);
  if (s.bounds) {
    e << YAML::Key << "bounds" << YAML::Value << YAML::Flow << YAML::BeginMap;
    e << YAML::Key << "i_min" << YAML::Value << s.bounds->i_min << YAML::Key << "i_max" << YAML::Value << s.bounds->i_max;
    e << YAML::Key << "q_max" << YAML::Value << s.bounds->q_max << YAML::EndMap;
  }
  e << YAML::Key << "truncation_eps" << YAML::Value << s.truncation_eps;
  e << YAML::Key << "estimate" << YAML::Value << YAML::BeginMap;
  e << YAML::Key << "confidence" << YAML::Value << s.estimate.confidence;
  e << YAML::Key << "rel_halfwidth" << YAML::Value << s.estimate.rel_halfwidth;
  e << YAML::Key << "min_replications" << YAML::Value << s.estimate.min_replications;
  e << YAML::Key << "max_replications" << YAML::Value << s.estimate.max_replications;
  e << YAML::Key << "batch" << YAML::Value << s.estimate.batch;
  e << YAML::EndMap;
  e << YAML::Key << "heuristic" << YAML::Value << YAML::BeginMap;
  e << YAML::Key << "regions" << YAML::Value << s.heuristic.n_regions;
  e << YAML::Key << "encoding" << YAML::Value << (s.heuristic.encoding == Lp1Encoding::Segments ? "segments" : "minorants");
  e << YAML::Key << "lookahead" << YAML::Value
    << (s.heuristic.lookahead == Lookahead::Independent ? "independent" : "realized");
  e << YAML::Key << "expected_first_period" << YAML::Value << s.heuristic.expected_first_period;
  e << YAML::EndMap;
  e << YAML::EndMap;
  out << e.c_str() << '\n';
}

}  // namespace tship
