#pragma once

#include <cstdint>
#include <functional>
#include <map>
#include <memory>
#include <optional>
#include <string>
#include <variant>
#include <vector>

#include "otmpc/controllers.hpp"
#include "otmpc/environment.hpp"
#include "otmpc/envs.hpp"

namespace otmpc {

// ---------------------------------------------------------------------------
// Config schema

/// Scalar or vector config value. Vectors hold one entry per control dimension.
using ConfigValue = std::variant<bool, std::int64_t, double, std::string, std::vector<double>>;

enum class ValueType { kBool, kInt, kReal, kString, kVector };

struct ConfigKey {
  std::string key;      // dotted, e.g. "controller.beta"
  ValueType type = ValueType::kReal;
  std::string unit;     // "" for dimensionless
  std::string doc;
  std::vector<std::string> choices;      // allowed strings, kString only
  std::vector<std::string> controllers;  // empty = applies to every controller
  std::optional<double> min;             // numeric and vector-entry bounds
  std::optional<double> max;
  bool min_exclusive = false;
  bool hashed = true;                    // part of the config hash
};

/// Every accepted key, in documentation order.
const std::vector<ConfigKey>& config_schema();

/// Resolved default for `key` given the environment and controller ids
/// (controller defaults and cost weights depend on both).
ConfigValue default_value(const std::string& key, const std::string& env_id,
                          const std::string& controller_id);

/// Flat dotted-key view of a benchmark configuration.
class ConfigMap {
 public:
  /// Parses a JSON document (nested objects or dotted keys). Every schema
  /// violation is collected and reported together as one ConfigError.
  static ConfigMap from_json_text(const std::string& text);
  static ConfigMap from_file(const std::string& path);

  /// Applies "key=value" overrides, parsed according to the key's type.
  void apply_overrides(const std::vector<std::string>& assignments);
  void set(const std::string& key, ConfigValue value);

  /// Fills defaults for unset keys and validates cross-key constraints.
  ConfigMap resolved() const;

  bool has(const std::string& key) const { return values_.count(key) != 0; }
  const ConfigValue& at(const std::string& key) const;
  double real(const std::string& key) const;
  std::int64_t integer(const std::string& key) const;
  bool boolean(const std::string& key) const;
  const std::string& string(const std::string& key) const;
  const std::vector<double>& vector(const std::string& key) const;

  const std::map<std::string, ConfigValue>& values() const noexcept { return values_; }

  /// Nested JSON of the hashed keys, keys sorted; stable across runs.
  std::string canonical_json() const;
  /// FNV-1a 64 of canonical_json(), 16 hex digits.
  std::string hash() const;

 private:
  std::map<std::string, ConfigValue> values_;
};

/// Help text listing every key with type, unit, default and doc.
std::string config_reference();

// ---------------------------------------------------------------------------
// Benchmark

struct BenchmarkConfig {
  ConfigMap config;  // resolved
  std::string env_id;
  std::string controller_id;
  int num_trials = 100;
  std::uint64_t base_seed = 0;
  int step_cap = 200;
  int workers = 1;
  bool dump_trajectories = false;
  std::string config_hash;

  /// Resolves and validates; throws ConfigError listing every violation.
  static BenchmarkConfig from_map(const ConfigMap& map);
};

/// Environment for one trial; draws the obstacle field from rng when the
/// environment is randomized. Throws GenerationError on placement failure.
std::unique_ptr<Environment> make_environment(const BenchmarkConfig& cfg, Rng& rng);
std::unique_ptr<Controller> make_controller(const BenchmarkConfig& cfg, const Environment& env,
                                            Rng& rng);

struct TrialRecord {
  int trial_index = 0;
  std::uint64_t seed = 0;
  Outcome outcome = Outcome::kTimeout;
  int steps_taken = 0;
  std::optional<double> final_goal_distance;  // absent on generation errors
  double wall_time = 0.0;                     // seconds; not part of to_json()
  std::string config_hash;
  std::optional<std::string> error;

  /// One JSON line without wall time, so reruns compare byte for byte.
  std::string to_json() const;
  static TrialRecord from_json(const std::string& line);
};

/// Per-cycle hook for verbose diagnostics and plotting dumps.
struct TrialObserver {
  std::function<void(int step, const StateVector& x, const CycleResult& r, const Controller& c)> on_cycle;
};

struct TrialRun {
  TrialRecord record;
  EpisodeTrace trace;
  std::optional<ObstacleField> field;
};

/// Seed = derive_seed(base_seed, trial_index); deterministic per (config, index).
TrialRun run_trial_full(const BenchmarkConfig& cfg, int trial_index,
                        const TrialObserver* observer = nullptr);
TrialRecord run_trial(const BenchmarkConfig& cfg, int trial_index);

struct SummaryRow {
  std::string task;        // e.g. "bicycle/easy"
  std::string controller;
  int trials = 0;
  int successes = 0;
  int crashes = 0;
  int timeouts = 0;
  int generation_errors = 0;
  double success_percent = 0.0;
  std::optional<double> avg_steps_mean;  // successes only
  std::optional<double> avg_steps_std;   // sample std, needs two successes
  std::optional<double> median_final_distance;
};

struct SummaryTable {
  std::vector<SummaryRow> rows;

  std::string to_text() const;
  std::string to_json(const std::string& config_hash = "") const;
};

/// Pure function of the records.
SummaryRow aggregate(const std::vector<TrialRecord>& records, const std::string& task,
                     const std::string& controller);

std::string task_label(const BenchmarkConfig& cfg);

struct BenchmarkResult {
  std::vector<TrialRecord> records;  // ordered by trial_index
  SummaryTable summary;
  // Filled only when cfg.dump_trajectories is set.
  std::vector<EpisodeTrace> traces;
  std::vector<std::optional<ObstacleField>> fields;
};

/// States, controls and the field of one episode as JSON for plotting.
std::string trajectory_json(int trial_index, const EpisodeTrace& trace,
                            const std::optional<ObstacleField>& field);

/// Runs all trials on cfg.workers threads; results do not depend on the count.
BenchmarkResult run_benchmark(const BenchmarkConfig& cfg,
                              const std::function<void(const TrialRecord&)>& progress = {});

/// Writes records.jsonl, timings.jsonl, summary.json, summary.txt and config.json.
void write_benchmark(const BenchmarkConfig& cfg, const BenchmarkResult& result,
                     const std::string& out_dir);

std::vector<TrialRecord> read_records(const std::string& path);

// ---------------------------------------------------------------------------
// Paired comparison

struct PairedOutcome {
  int trial_index = 0;
  std::uint64_t seed = 0;
  Outcome a = Outcome::kTimeout;
  Outcome b = Outcome::kTimeout;
  int winner = 0;  // +1 a succeeded alone, -1 b succeeded alone, 0 tie
};

struct ComparisonReport {
  std::string label_a, label_b;
  std::vector<PairedOutcome> pairs;
  int wins_a = 0, wins_b = 0, ties = 0;
  double success_a = 0.0, success_b = 0.0;  // percent
  double difference = 0.0;                  // success_a - success_b, percent points
  double p_value = 1.0;

  std::string to_json() const;
  std::string to_text() const;
};

/// Two-sided exact binomial sign test on paired wins (ties dropped).
double sign_test_p_value(int wins_a, int wins_b);

/// Pairs records by trial index. Throws ConfigError on mismatched counts or seeds.
ComparisonReport compare_records(const std::vector<TrialRecord>& a, const std::vector<TrialRecord>& b,
                                 const std::string& label_a, const std::string& label_b);

/// Requires the same environment settings, trial count, seed and step cap.
ComparisonReport compare_controllers(const BenchmarkConfig& a, const BenchmarkConfig& b);

}  // namespace otmpc
