#pragma once

#include "rtlmp/case_model.hpp"
#include "rtlmp/meter_attacks.hpp"

#include <cstdint>
#include <optional>
#include <string>
#include <vector>

namespace rtlmp {

enum class AttackKind { None, Meter, Topology };

const char* to_string(AttackKind kind);
AttackKind parse_attack_kind(const std::string& text);

struct AttackSpec {
    AttackKind kind = AttackKind::None;
    AttackModel model = AttackModel::M1;
    /// "random:N" draws N closed lines per trial; "lines:..." fixes them.
    std::string capability = "random:2";
    std::vector<double> epsilon{1.0, 2.0, 4.0, 8.0, 16.0, 32.0};
    std::optional<double> tau;               // M3 budget; detector threshold when absent
    SearchMethod search = SearchMethod::Exhaustive;
    int max_removals = 2;
};

struct ScenarioConfig {
    std::string case_path;
    bool ac = false;
    AttackSpec attack;
    int trials = 1000;
    double alpha = 0.1;
    std::uint64_t seed = 1;
    double candidate_threshold_mw = 10.0;
    std::size_t candidate_cap = 12;
    int threads = 0;                          // 0: hardware concurrency

    /// Throws ModelError on a violated invariant.
    void validate() const;
    /// Parses the scenario document. Relative case paths resolve against
    /// `base_dir`. Unknown keys are rejected.
    static ScenarioConfig parse(const std::string& text, const std::string& base_dir = ".");
    static ScenarioConfig load(const std::string& path);
    std::string to_json() const;
    /// Number of result points: one per epsilon for meter attacks under a
    /// budget, one otherwise.
    std::size_t point_count() const;
};

struct TrialRecord {
    int trial = 0;
    int point = 0;
    std::uint64_t seed = 0;        // reproduces the trial on its own
    bool failed = false;           // scenario-level failure, see note
    bool attacked = false;         // a nonzero attack was launched
    bool detected = false;
    double statistic = 0.0;
    bool priced = false;           // both price vectors exist
    double rpp = 0.0;              // NaN when detected or unpriced
    std::string base_pattern;
    std::string attacked_pattern;
    std::string note;
};

struct PointResult {
    std::optional<double> epsilon;
    int trials = 0;                // completed trials
    int failed = 0;
    int detected = 0;
    int attacked = 0;
    double detection_probability = 0.0;
    int samples = 0;               // undetected, priced trials entering ARPP
    double arpp = 0.0;
    std::vector<int> excluded_buses;
};

struct TimingStats {
    int samples = 0;
    double mean_s = 0.0;
    double std_s = 0.0;
};

struct ExperimentResult {
    ScenarioConfig config;
    std::string case_name;
    int dof = 0;
    double threshold = 0.0;
    std::vector<PointResult> points;
    PointResult aggregate;          // every point's undetected trials pooled
    std::vector<TrialRecord> trials;   // trial-major, then point
    TimingStats attack_timing;      // wall clock per trial attack construction
};

/// Prior of a case: its declared mean, or the nominal dispatch state.
StatePrior case_prior(const CaseBundle& bundle, const DcModel& model);

struct Snapshot {
    std::uint64_t seed = 0;
    Vector x;            // rad, reference excluded
    Vector z;            // MW, noise-free on zero rows
    Vector magnitudes;   // p.u.; empty for the linear model
};

/// One state and measurement draw, identical to trial `trial` of a
/// scenario with the same root seed.
Snapshot sample_snapshot(const CaseBundle& bundle, const DcModel& model, std::uint64_t root_seed, int trial = 0,
                         bool ac = false);

/// Monte Carlo run. Results depend only on the config, never on the
/// number of threads.
ExperimentResult run_scenario(const ScenarioConfig& config);

/// Runs the scenario once per budget in `grid`.
std::vector<PointResult> sweep_budget(const ScenarioConfig& config, const std::vector<double>& grid);

struct SearchComparison {
    int trials = 0;
    int compared = 0;               // trials where both searches ran
    double agreement = 0.0;         // same target pattern
    double value_agreement = 0.0;   // same predicted perturbation to 1e-9
    double mean_candidates = 0.0;
    TimingStats exhaustive;
    TimingStats greedy;
};

/// Runs both searches on the meter attack of every trial.
SearchComparison compare_search_methods(const ScenarioConfig& config);

/// Serialized summary without timings or per-trial rows.
std::string results_json(const ExperimentResult& result);
std::string timing_json(const ExperimentResult& result);
std::string trials_csv(const ExperimentResult& result);
std::string curve_csv(const ExperimentResult& result);
/// Writes results.json, trials.csv, curve.csv and timing.json into `dir`.
void write_outputs(const ExperimentResult& result, const std::string& dir);

}  // namespace rtlmp
