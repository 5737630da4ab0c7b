#include "rtlmp/ac_reference.hpp"

#include "rtlmp/dc_network.hpp"

#include <Eigen/QR>
#include <cmath>

namespace rtlmp {

AcModel::AcModel(const PowerCase& grid, Vector magnitude) : magnitude_(std::move(magnitude)) {
    const auto nb = grid.bus_count();
    if (static_cast<std::size_t>(magnitude_.size()) != nb) throw ModelError("one voltage magnitude per bus required");
    if ((magnitude_.array() <= 0).any()) throw ModelError("voltage magnitudes must be positive");
    meters_ = static_cast<Eigen::Index>(nb + 2 * grid.branch_count());
    state_of_bus_.assign(nb, -1);
    const int ref = grid.reference_index();
    for (int i = 0, col = 0; i < static_cast<int>(nb); ++i)
        if (i != ref) state_of_bus_[i] = col++;
    n_ = static_cast<int>(nb) - 1;
    for (const auto& br : grid.branches) {
        const int i = grid.bus_index(br.from), j = grid.bus_index(br.to);
        const double coef = br.closed ? grid.base_mva * magnitude_[i] * magnitude_[j] / br.reactance : 0.0;
        lines_.push_back({i, j, coef});
    }
}

Vector AcModel::full_angles(const Vector& x) const {
    if (x.size() != n_) throw ModelError("state has the wrong dimension");
    Vector th = Vector::Zero(magnitude_.size());
    for (std::size_t b = 0; b < state_of_bus_.size(); ++b)
        if (state_of_bus_[b] >= 0) th[static_cast<Eigen::Index>(b)] = x[state_of_bus_[b]];
    return th;
}

Vector AcModel::flows(const Vector& x) const {
    const Vector th = full_angles(x);
    Vector f(static_cast<Eigen::Index>(lines_.size()));
    for (std::size_t k = 0; k < lines_.size(); ++k)
        f[static_cast<Eigen::Index>(k)] = lines_[k].coef * std::sin(th[lines_[k].from] - th[lines_[k].to]);
    return f;
}

Vector AcModel::measurements(const Vector& x) const {
    const Vector f = flows(x);
    const auto nb = magnitude_.size();
    Vector h = Vector::Zero(meters_);
    for (std::size_t k = 0; k < lines_.size(); ++k) {
        const auto kk = static_cast<Eigen::Index>(k);
        h[nb + 2 * kk] = f[kk];
        h[nb + 2 * kk + 1] = -f[kk];
        h[lines_[k].from] += f[kk];
        h[lines_[k].to] -= f[kk];
    }
    return h;
}

Matrix AcModel::jacobian(const Vector& x) const {
    const Vector th = full_angles(x);
    const auto nb = magnitude_.size();
    Matrix jac = Matrix::Zero(meters_, n_);
    for (std::size_t k = 0; k < lines_.size(); ++k) {
        const auto& ln = lines_[k];
        if (ln.coef == 0.0) continue;
        const double d = ln.coef * std::cos(th[ln.from] - th[ln.to]);
        Eigen::RowVectorXd row = Eigen::RowVectorXd::Zero(n_);
        if (state_of_bus_[ln.from] >= 0) row[state_of_bus_[ln.from]] += d;
        if (state_of_bus_[ln.to] >= 0) row[state_of_bus_[ln.to]] -= d;
        const auto kk = static_cast<Eigen::Index>(k);
        jac.row(nb + 2 * kk) = row;
        jac.row(nb + 2 * kk + 1) = -row;
        jac.row(ln.from) += row;
        jac.row(ln.to) -= row;
    }
    return jac;
}

AcState ac_power_flow(const PowerCase& grid, const Vector& injections_mw, const Vector& magnitudes,
                      double tolerance_pu, int max_iterations) {
    if (!grid.connected()) throw ModelError("network is disconnected");
    const auto nb = static_cast<Eigen::Index>(grid.bus_count());
    if (injections_mw.size() != nb) throw ModelError("one injection per bus required");
    if (std::abs(injections_mw.sum()) > 1e-6 * std::max(1.0, injections_mw.cwiseAbs().maxCoeff()))
        throw ModelError("injections do not balance; the lossless model has no slack to absorb " +
                         std::to_string(injections_mw.sum()) + " MW");
    AcModel ac(grid, magnitudes);
    const int ref = grid.reference_index();
    std::vector<int> rows;
    for (int i = 0; i < nb; ++i)
        if (i != ref) rows.push_back(i);
    const auto n = static_cast<Eigen::Index>(rows.size());
    Vector target(n);
    for (Eigen::Index r = 0; r < n; ++r) target[r] = injections_mw[rows[r]];

    Vector x = Vector::Zero(n);
    for (int it = 0; it <= max_iterations; ++it) {
        Vector h = ac.measurements(x);
        Vector mismatch(n);
        for (Eigen::Index r = 0; r < n; ++r) mismatch[r] = target[r] - h[rows[r]];
        if (mismatch.cwiseAbs().maxCoeff() / grid.base_mva <= tolerance_pu) {
            return {magnitudes, ac.full_angles(x)};
        }
        if (it == max_iterations) break;
        Matrix jac = ac.jacobian(x);
        Matrix jr(n, n);
        for (Eigen::Index r = 0; r < n; ++r) jr.row(r) = jac.row(rows[r]);
        x += jr.partialPivLu().solve(mismatch);
        if (!x.allFinite()) break;
    }
    throw NumericalError("AC power flow did not converge in " + std::to_string(max_iterations) + " iterations");
}

AcEstimate ac_wls_estimate(const PowerCase& grid, const Vector& z, const Vector& variances, const Vector& magnitudes,
                           const DetectorConfig& detector) {
    const DcModel dc = build_dc_model(grid);
    const double tau = detector.threshold ? *detector.threshold : detector_threshold(dc.degrees_of_freedom(), detector.alpha);
    return ac_wls_estimate(grid, dc, z, variances, magnitudes, tau);
}

AcEstimate ac_wls_estimate(const PowerCase& grid, const DcModel& dc, const Vector& z, const Vector& variances,
                           const Vector& magnitudes, double threshold) {
    AcModel ac(grid, magnitudes);
    if (z.size() != ac.meter_count() || variances.size() != ac.meter_count())
        throw ModelError("measurement or variance vector does not match the meter set");
    const Vector inv_sd = variances.cwiseSqrt().cwiseInverse();
    auto cost = [&](const Vector& x) { return (z - ac.measurements(x)).cwiseProduct(inv_sd).squaredNorm(); };

    AcEstimate out;
    out.threshold = threshold;
    Vector x = Vector::Zero(static_cast<Eigen::Index>(dc.state_dim));
    double j = cost(x);
    for (int it = 0; it < 50; ++it) {
        out.iterations = it + 1;
        Matrix jw = inv_sd.asDiagonal() * ac.jacobian(x);
        Vector rw = (z - ac.measurements(x)).cwiseProduct(inv_sd);
        Vector step = jw.householderQr().solve(rw);
        if (!step.allFinite()) break;
        double scale = 1.0;
        double next = cost(x + step);
        while (!(next <= j) && scale > 1e-6) {
            scale *= 0.5;
            next = cost(x + scale * step);
        }
        if (!(next <= j)) {
            // no descent along the Gauss-Newton direction: stationary point
            out.converged = step.cwiseAbs().maxCoeff() <= 1e-6;
            break;
        }
        x += scale * step;
        j = next;
        if ((scale * step).cwiseAbs().maxCoeff() <= 1e-8) {
            out.converged = true;
            break;
        }
    }
    out.state = {magnitudes, ac.full_angles(x)};
    out.flows = ac.flows(x);
    out.congestion = congestion_of_flows(dc, out.flows);
    out.statistic = j;
    out.detected = !out.converged || !std::isfinite(j) || j >= out.threshold;
    return out;
}

}  // namespace rtlmp
