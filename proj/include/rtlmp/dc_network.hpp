#pragma once

#include "rtlmp/case_model.hpp"

#include <span>
#include <string>
#include <vector>

namespace rtlmp {

/// Linear (DC) network model in MW and rad. State x holds the phases of every
/// bus except the reference. Open branches keep their rows (identically zero)
/// so the meter dimension does not depend on topology.
struct DcModel {
    std::size_t bus_count = 0;
    std::size_t state_dim = 0;
    int reference = 0;             // internal bus index
    double base_mva = 100.0;

    Matrix flow;                   // F, branches x n, MW/rad
    Matrix measurement;            // H, meters x n, canonical meter order
    Matrix ptdf;                   // branches x buses, reference column zero
    Matrix susceptance;            // reduced bus susceptance, n x n, MW/rad
    Vector limits;                 // MW, kInf when unlimited
    std::vector<char> closed;      // per branch
    std::vector<char> active_meter;// meter has a nonzero model row
    std::vector<int> limited;      // closed branches with a finite limit
    std::vector<int> state_of_bus; // bus -> state column, -1 for the reference
    std::vector<int> bus_of_state;

    std::size_t meter_count() const { return static_cast<std::size_t>(measurement.rows()); }
    std::size_t branch_count() const { return static_cast<std::size_t>(flow.rows()); }
    /// Meters with a nonzero row minus the state dimension.
    int degrees_of_freedom() const;
};

/// Builds F, H and the single-slack PTDF. Throws ModelError when the closed
/// network is disconnected and NumericalError when H is rank deficient.
DcModel build_dc_model(const PowerCase& grid);

/// f = F x in MW.
Vector branch_flows(const DcModel& model, const Vector& x);

/// Full column rank of H (singular values below 1e-8 sigma_max are zero).
bool is_observable(const DcModel& model);
/// Same check restricted to a subset of meter rows.
bool is_observable(const DcModel& model, std::span<const int> meters);
bool has_full_column_rank(const Matrix& h);

/// Opens the breakers of the given branches (internal indices). Throws
/// ModelError if a branch is already open or the result is disconnected.
PowerCase apply_topology(const PowerCase& grid, const std::vector<int>& removed);

/// Bus injection vector (MW, all buses) to state by a dense solve of the
/// reduced susceptance system; the reference absorbs the imbalance.
Vector state_from_injections(const DcModel& model, const Vector& injections_mw);

std::string to_csv(const Matrix& m);

}  // namespace rtlmp
