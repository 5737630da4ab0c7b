#include "rtlmp/dc_network.hpp"

#include <Eigen/SVD>

#include <sstream>
#include <iomanip>

namespace rtlmp {

int DcModel::degrees_of_freedom() const {
    int active = 0;
    for (char a : active_meter) active += a ? 1 : 0;
    return active - static_cast<int>(state_dim);
}

DcModel build_dc_model(const PowerCase& grid) {
    if (!grid.connected()) throw ModelError("closed-breaker network is disconnected");
    DcModel model;
    model.bus_count = grid.bus_count();
    model.state_dim = grid.state_dim();
    model.reference = grid.reference_index();
    model.base_mva = grid.base_mva;

    const auto nb = static_cast<Eigen::Index>(model.bus_count);
    const auto n = static_cast<Eigen::Index>(model.state_dim);
    const auto nl = static_cast<Eigen::Index>(grid.branch_count());

    model.state_of_bus.assign(model.bus_count, -1);
    for (Eigen::Index i = 0, col = 0; i < nb; ++i) {
        if (i == model.reference) continue;
        model.state_of_bus[i] = static_cast<int>(col++);
        model.bus_of_state.push_back(static_cast<int>(i));
    }

    model.flow = Matrix::Zero(nl, n);
    model.limits = Vector::Constant(nl, kInf);
    model.closed.assign(grid.branch_count(), 0);
    for (Eigen::Index k = 0; k < nl; ++k) {
        const auto& br = grid.branches[k];
        model.limits[k] = br.limit_mw;
        if (!br.closed) continue;
        model.closed[k] = 1;
        if (br.limited()) model.limited.push_back(static_cast<int>(k));
        const double b = grid.base_mva / br.reactance;
        int ci = model.state_of_bus[grid.bus_index(br.from)];
        int cj = model.state_of_bus[grid.bus_index(br.to)];
        if (ci >= 0) model.flow(k, ci) += b;
        if (cj >= 0) model.flow(k, cj) -= b;
    }

    const Eigen::Index m = nb + 2 * nl;
    model.measurement = Matrix::Zero(m, n);
    for (Eigen::Index k = 0; k < nl; ++k) {
        if (!model.closed[k]) continue;
        const auto& br = grid.branches[k];
        model.measurement.row(nb + 2 * k) = model.flow.row(k);
        model.measurement.row(nb + 2 * k + 1) = -model.flow.row(k);
        model.measurement.row(grid.bus_index(br.from)) += model.flow.row(k);
        model.measurement.row(grid.bus_index(br.to)) -= model.flow.row(k);
    }
    model.active_meter.assign(static_cast<std::size_t>(m), 0);
    for (Eigen::Index r = 0; r < m; ++r) model.active_meter[r] = model.measurement.row(r).any() ? 1 : 0;

    model.susceptance = Matrix(n, n);
    for (Eigen::Index c = 0; c < n; ++c) model.susceptance.row(c) = model.measurement.row(model.bus_of_state[c]);

    Eigen::LLT<Matrix> llt(model.susceptance);
    if (llt.info() != Eigen::Success) throw NumericalError("reduced susceptance matrix is not positive definite");
    model.ptdf = Matrix::Zero(nl, nb);
    if (n > 0) {
        Matrix shift = llt.solve(model.flow.transpose()).transpose();   // F B^-1, B symmetric
        for (Eigen::Index c = 0; c < n; ++c) model.ptdf.col(model.bus_of_state[c]) = shift.col(c);
    }

    if (!is_observable(model)) throw NumericalError("measurement matrix is rank deficient (unobservable)");
    return model;
}

Vector branch_flows(const DcModel& model, const Vector& x) {
    if (static_cast<std::size_t>(x.size()) != model.state_dim)
        throw ModelError("state has dimension " + std::to_string(x.size()) + ", expected " +
                         std::to_string(model.state_dim));
    return model.flow * x;
}

bool has_full_column_rank(const Matrix& h) {
    if (h.cols() == 0) return true;
    if (h.rows() < h.cols()) return false;
    Eigen::JacobiSVD<Matrix> svd(h);
    const Vector& s = svd.singularValues();
    if (s.size() == 0 || s[0] == 0.0) return false;
    return s[s.size() - 1] >= 1e-8 * s[0];
}

bool is_observable(const DcModel& model) { return has_full_column_rank(model.measurement); }

bool is_observable(const DcModel& model, std::span<const int> meters) {
    Matrix sub(static_cast<Eigen::Index>(meters.size()), model.measurement.cols());
    for (std::size_t r = 0; r < meters.size(); ++r) sub.row(static_cast<Eigen::Index>(r)) = model.measurement.row(meters[r]);
    return has_full_column_rank(sub);
}

PowerCase apply_topology(const PowerCase& grid, const std::vector<int>& removed) {
    PowerCase out = grid;
    for (int k : removed) {
        if (k < 0 || static_cast<std::size_t>(k) >= out.branch_count())
            throw ModelError("branch index " + std::to_string(k) + " out of range");
        if (!out.branches[k].closed)
            throw ModelError("branch " + grid.branch_label(k) + " is already open");
        out.branches[k].closed = false;
    }
    if (!out.connected()) throw ModelError("removing the requested lines disconnects the network");
    return out;
}

Vector state_from_injections(const DcModel& model, const Vector& injections_mw) {
    if (static_cast<std::size_t>(injections_mw.size()) != model.bus_count)
        throw ModelError("injection vector must cover every bus");
    Vector rhs(static_cast<Eigen::Index>(model.state_dim));
    for (std::size_t c = 0; c < model.state_dim; ++c) rhs[c] = injections_mw[model.bus_of_state[c]];
    return model.susceptance.ldlt().solve(rhs);
}

std::string to_csv(const Matrix& m) {
    std::ostringstream out;
    out << std::setprecision(17);
    for (Eigen::Index r = 0; r < m.rows(); ++r) {
        for (Eigen::Index c = 0; c < m.cols(); ++c) out << (c ? "," : "") << m(r, c);
        out << '\n';
    }
    return out.str();
}

}  // namespace rtlmp
