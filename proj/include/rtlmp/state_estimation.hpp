#pragma once

#include "rtlmp/dc_network.hpp"

#include <optional>

namespace rtlmp {

/// K (n x m), U = I - HK and W = U'R^-1 U (m x m).
struct EstimatorOperators {
    Matrix gain;
    Matrix residual;
    Matrix kernel;
};

struct DetectorConfig {
    double alpha = 0.1;                 // false-alarm probability
    std::optional<double> threshold;    // overrides the chi-square threshold
};

struct EstimateReport {
    Vector state;                 // rad
    Vector flows;                 // MW
    CongestionPattern congestion;
    double statistic = 0.0;       // z'Wz
    double threshold = 0.0;
    int dof = 0;
    bool detected = false;
};

/// Upper tail P(chi2_dof >= x) by quadrature of the density.
double chi_square_upper_tail(int dof, double x);
/// tau with P(chi2_dof >= tau) = alpha.
double detector_threshold(int dof, double alpha);

/// Limited closed branches whose flow meets or exceeds the limit.
CongestionPattern congestion_of_flows(const DcModel& model, const Vector& flows);

/// WLS estimator bound to one model and noise covariance. Solves through a
/// QR factorization of the whitened measurement matrix.
class StateEstimator {
public:
    StateEstimator(DcModel model, Vector variances, const DetectorConfig& detector = {});

    const DcModel& model() const { return model_; }
    const Vector& variances() const { return variances_; }
    double threshold() const { return threshold_; }
    int dof() const { return dof_; }

    Vector solve(const Vector& z) const;
    /// Weighted residual r'R^-1 r, equal to z'Wz.
    double statistic(const Vector& z) const;
    EstimateReport estimate(const Vector& z) const;

    const Matrix& gain() const { return gain_; }
    EstimatorOperators operators() const;

private:
    void check(const Vector& z) const;

    DcModel model_;
    Vector variances_;
    Matrix gain_;
    double threshold_ = 0.0;
    int dof_ = 0;
};

EstimatorOperators build_operators(const DcModel& model, const Vector& variances);

/// One-shot estimate under the network's own topology.
EstimateReport estimate(const DcModel& model, const Vector& variances, const Vector& z,
                        const DetectorConfig& detector = {});

/// Estimate under a claimed topology with the given branches (internal
/// indices) open. Meter vector length is unchanged.
EstimateReport topo_estimate(const PowerCase& grid, const std::vector<int>& claimed_removed,
                             const Vector& variances, const Vector& z, const DetectorConfig& detector = {});

}  // namespace rtlmp
