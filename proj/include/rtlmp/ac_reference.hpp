#pragma once

#include "rtlmp/case_model.hpp"
#include "rtlmp/state_estimation.hpp"

namespace rtlmp {

/// Bus voltages: magnitude (p.u.) and phase (rad), all buses, reference 0.
struct AcState {
    Vector magnitude;
    Vector angle;
};

/// Lossless real-power model with fixed magnitudes:
/// p_ij = base V_i V_j / x sin(theta_i - theta_j). Meters in canonical order.
class AcModel {
public:
    AcModel(const PowerCase& grid, Vector magnitude);

    std::size_t bus_count() const { return static_cast<std::size_t>(magnitude_.size()); }
    Eigen::Index meter_count() const { return meters_; }
    const Vector& magnitude() const { return magnitude_; }

    /// Phases of the non-reference buses -> all-bus phase vector.
    Vector full_angles(const Vector& x) const;
    Vector flows(const Vector& x) const;          // MW per branch
    Vector measurements(const Vector& x) const;   // h(x)
    Matrix jacobian(const Vector& x) const;       // dh/dx, m x n

private:
    struct Line {
        int from, to;
        double coef;   // base V_i V_j / x; zero when open
    };
    std::vector<Line> lines_;
    std::vector<int> state_of_bus_;
    Vector magnitude_;
    Eigen::Index meters_ = 0;
    int n_ = 0;
};

/// Newton-Raphson on the non-reference buses. The injections (MW, every
/// bus) must balance; the reference entry is implied by the others.
AcState ac_power_flow(const PowerCase& grid, const Vector& injections_mw, const Vector& magnitudes,
                      double tolerance_pu = 1e-8, int max_iterations = 50);

struct AcEstimate {
    AcState state;
    Vector flows;                 // MW at the estimate
    CongestionPattern congestion;
    double statistic = 0.0;
    double threshold = 0.0;
    bool converged = false;
    bool detected = false;        // divergence counts as detected
    int iterations = 0;
};

/// Gauss-Newton WLS from a flat start with step halving.
AcEstimate ac_wls_estimate(const PowerCase& grid, const Vector& z, const Vector& variances, const Vector& magnitudes,
                           const DetectorConfig& detector = {});
/// Same, reusing the linear model of `grid` for limits and a fixed threshold.
AcEstimate ac_wls_estimate(const PowerCase& grid, const DcModel& dc, const Vector& z, const Vector& variances,
                           const Vector& magnitudes, double threshold);

}  // namespace rtlmp
