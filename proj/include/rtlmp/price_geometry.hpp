#pragma once

#include "rtlmp/dc_network.hpp"

#include <optional>
#include <vector>

namespace rtlmp {

/// States sharing one congestion pattern: F_i x >= T_i on the pattern and
/// F_j x < T_j on the other limited lines.
struct PriceRegion {
    CongestionPattern pattern;
    std::optional<Vector> witness;
    double margin = 0.0;               // beta* of the witness program
    std::optional<Vector> lambda;      // absent when the pattern is unpriced
};

struct RegionWitness {
    bool nonempty = false;
    Vector state;
    double margin = 0.0;
};

/// Strict inequalities become <= T - delta.
inline constexpr double kStrictGap = 1e-6;

CongestionPattern region_of_state(const DcModel& model, const Vector& x);

/// max beta s.t. F_i x >= T_i + beta (i in C), F_j x <= T_j - delta - beta
/// (j not in C), x in [-pi, pi]^n. Nonempty iff beta* > 0.
RegionWitness region_witness(const DcModel& model, const CongestionPattern& pattern);

/// min over limited lines of |F_i x - T_i|, MW. +inf without limited lines.
double boundary_margin(const DcModel& model, const Vector& x);

struct CandidateSet {
    std::vector<int> lines;         // near their limits, sorted by index
    CongestionPattern fixed;        // beyond the limit by more than the threshold
};

/// Limited lines with |f - T| <= threshold, keeping the `cap` nearest.
CandidateSet candidate_lines(const DcModel& model, const Vector& flows, double threshold, std::size_t cap = 12);

/// Every subset of the candidate lines joined with the fixed lines, in
/// canonical (lexicographic) order.
std::vector<CongestionPattern> candidate_patterns(const DcModel& model, const Vector& flows, double threshold,
                                                  std::size_t cap = 12);
std::vector<CongestionPattern> expand_candidates(const CandidateSet& set);

}  // namespace rtlmp
