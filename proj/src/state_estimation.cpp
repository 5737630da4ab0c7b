#include "rtlmp/state_estimation.hpp"

#include <Eigen/QR>

namespace rtlmp {

CongestionPattern congestion_of_flows(const DcModel& model, const Vector& flows) {
    CongestionPattern out;
    for (int k : model.limited)
        if (flows[k] >= model.limits[k]) out.push_back(k);
    return out;
}

StateEstimator::StateEstimator(DcModel model, Vector variances, const DetectorConfig& detector)
    : model_(std::move(model)), variances_(std::move(variances)) {
    const auto m = model_.measurement.rows();
    if (variances_.size() != m)
        throw ModelError("noise variance vector has " + std::to_string(variances_.size()) + " entries, expected " +
                         std::to_string(m));
    if ((variances_.array() <= 0).any()) throw ModelError("noise variances must be positive");
    if (!is_observable(model_)) throw NumericalError("measurement model is unobservable");

    Vector inv_sd = variances_.cwiseSqrt().cwiseInverse();
    Matrix whitened = inv_sd.asDiagonal() * model_.measurement;
    Eigen::HouseholderQR<Matrix> qr(whitened);
    // K = (R^-1/2 H)^+ R^-1/2
    const auto n = model_.measurement.cols();
    Matrix q_thin = qr.householderQ() * Matrix::Identity(m, n);
    Matrix r = qr.matrixQR().topLeftCorner(n, n).triangularView<Eigen::Upper>();
    gain_ = r.triangularView<Eigen::Upper>().solve(q_thin.transpose()) * inv_sd.asDiagonal();

    dof_ = model_.degrees_of_freedom();
    if (detector.threshold) threshold_ = *detector.threshold;
    else threshold_ = dof_ >= 1 ? detector_threshold(dof_, detector.alpha) : 0.0;
}

void StateEstimator::check(const Vector& z) const {
    if (z.size() != model_.measurement.rows())
        throw ModelError("measurement vector has " + std::to_string(z.size()) + " entries, expected " +
                         std::to_string(model_.measurement.rows()));
}

Vector StateEstimator::solve(const Vector& z) const {
    check(z);
    return gain_ * z;
}

double StateEstimator::statistic(const Vector& z) const {
    Vector r = z - model_.measurement * solve(z);
    return r.cwiseAbs2().cwiseQuotient(variances_).sum();
}

EstimateReport StateEstimator::estimate(const Vector& z) const {
    EstimateReport rep;
    rep.state = solve(z);
    rep.flows = model_.flow * rep.state;
    rep.congestion = congestion_of_flows(model_, rep.flows);
    Vector r = z - model_.measurement * rep.state;
    rep.statistic = r.cwiseAbs2().cwiseQuotient(variances_).sum();
    rep.threshold = threshold_;
    rep.dof = dof_;
    rep.detected = rep.statistic >= threshold_;
    return rep;
}

EstimatorOperators StateEstimator::operators() const {
    const auto m = model_.measurement.rows();
    EstimatorOperators ops;
    ops.gain = gain_;
    ops.residual = Matrix::Identity(m, m) - model_.measurement * gain_;
    ops.kernel = ops.residual.transpose() * variances_.cwiseInverse().asDiagonal() * ops.residual;
    ops.kernel = 0.5 * (ops.kernel + ops.kernel.transpose()).eval();
    return ops;
}

EstimatorOperators build_operators(const DcModel& model, const Vector& variances) {
    return StateEstimator(model, variances, DetectorConfig{0.1, 0.0}).operators();
}

EstimateReport estimate(const DcModel& model, const Vector& variances, const Vector& z,
                        const DetectorConfig& detector) {
    return StateEstimator(model, variances, detector).estimate(z);
}

EstimateReport topo_estimate(const PowerCase& grid, const std::vector<int>& claimed_removed,
                             const Vector& variances, const Vector& z, const DetectorConfig& detector) {
    return StateEstimator(build_dc_model(apply_topology(grid, claimed_removed)), variances, detector).estimate(z);
}

}  // namespace rtlmp
