#pragma once

#include "rtlmp/case_model.hpp"
#include "rtlmp/dc_network.hpp"
#include "rtlmp/price_geometry.hpp"

#include <optional>
#include <string>
#include <vector>

namespace rtlmp {

/// Meters the adversary can corrupt; attack vectors vanish elsewhere.
struct SuspectSpace {
    std::vector<int> meters;   // sorted

    std::size_t dim() const { return meters.size(); }
    /// Embeds a vector over the suspects into the full meter space.
    Vector embed(const Vector& local, Eigen::Index meter_count) const;
};

enum class AttackModel { M1, M2, M3 };
enum class SearchMethod { Exhaustive, Greedy };

const char* to_string(AttackModel model);
AttackModel parse_attack_model(const std::string& text);
const char* to_string(SearchMethod method);
SearchMethod parse_search_method(const std::string& text);

struct MeterAttackPlan {
    AttackModel model = AttackModel::M1;
    bool attacked = false;           // false: no feasible pattern beats the current one
    Vector a;                        // m-vector, zero off the suspects
    CongestionPattern target;
    double beta = 0.0;               // MW; for M3 the residual statistic instead
    double budget = 0.0;             // epsilon, or tau for M3
    double predicted_arpp = 0.0;
    int feasibility_checks = 0;
    int price_solves = 0;
};

/// E[x | z0] for a Gaussian prior. `noise_var0` adds the observation noise
/// of the observed meters to the innovation covariance (empty: omitted).
Vector mmse_state(const StatePrior& prior, const Matrix& h0, const Vector& z0, const Vector& noise_var0 = {});

/// Uniformly spaced half of the meters with nonzero model rows.
std::vector<int> observed_half(const DcModel& model);

struct CenterAttack {
    bool feasible = false;
    Vector a;
    double beta = 0.0;
};

/// Attack placing the expected estimate as deep inside the target region as
/// the budget a'Wa <= epsilon allows. `anchor` is the attack-free expected
/// state; the expected estimate under attack is anchor + K a.
CenterAttack center_attack(const DcModel& model, const Matrix& gain, const Matrix& kernel,
                           const CongestionPattern& pattern, const Vector& anchor, const SuspectSpace& suspects,
                           double epsilon);

struct AdaptiveAttack {
    bool feasible = false;
    Vector a;
    double statistic = 0.0;   // (z+a)'W(z+a) at a
};

/// Fully adaptive attack: some a with K(z+a) inside the target region and
/// (z+a)'W(z+a) <= tau. `decide_only` stops as soon as the verdict is known.
AdaptiveAttack m3_attack(const DcModel& model, const Matrix& gain, const Matrix& kernel, const Vector& z,
                         const CongestionPattern& pattern, const SuspectSpace& suspects, double tau,
                         bool decide_only = false);

/// Everything a worst-case search needs. References must outlive the call.
struct AttackContext {
    const PowerCase& grid;
    const MarketConfig& market;
    const DcModel& model;
    const Matrix& gain;
    const Matrix& kernel;
    SuspectSpace suspects;
};

struct MeterAttackInputs {
    AttackModel model = AttackModel::M1;
    Vector anchor;        // M1: prior mean, M2: E[x | z0]
    double epsilon = 1.0;
    Vector z;             // M3: actual measurements
    double tau = 0.0;     // M3: detector threshold
};

/// Searches the candidate patterns for the feasible one whose prices differ
/// most from the attack-free prices. Ties go to the attack-free pattern,
/// then to canonical order.
MeterAttackPlan worst_meter_attack(const AttackContext& ctx, const MeterAttackInputs& inputs,
                                   const CandidateSet& candidates, SearchMethod method);

}  // namespace rtlmp
