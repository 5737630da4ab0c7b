// Command-line front end: case inspection, estimation, pricing, partition
// exploration, attack construction and Monte Carlo experiments.

#include "rtlmp/ac_reference.hpp"
#include "rtlmp/experiment.hpp"
#include "rtlmp/meter_attacks.hpp"
#include "rtlmp/pricing.hpp"
#include "rtlmp/report_json.hpp"
#include "rtlmp/state_estimation.hpp"
#include "rtlmp/topology_attacks.hpp"

#include "CLI11.hpp"

#include <charconv>
#include <cstdio>
#include <fstream>
#include <iomanip>
#include <iostream>
#include <sstream>

using namespace rtlmp;

namespace {

/// Bad input data: exit status 1.
struct DataError : std::runtime_error {
    using std::runtime_error::runtime_error;
};

std::string read_file(const std::string& path) {
    std::ifstream in(path, std::ios::binary);
    if (!in) throw DataError("cannot open " + path);
    std::stringstream ss;
    ss << in.rdbuf();
    return ss.str();
}

void write_file(const std::string& path, const std::string& text) {
    std::ofstream out(path, std::ios::binary);
    if (!out) throw DataError("cannot write " + path);
    out << text;
}

std::string trim(const std::string& s) {
    auto b = s.find_first_not_of(" \t\r");
    if (b == std::string::npos) return {};
    return s.substr(b, s.find_last_not_of(" \t\r") - b + 1);
}

std::optional<double> number(const std::string& s) {
    double v = 0.0;
    auto t = trim(s);
    auto [ptr, ec] = std::from_chars(t.data(), t.data() + t.size(), v);
    if (ec != std::errc() || ptr != t.data() + t.size() || t.empty()) return std::nullopt;
    return v;
}

/// Measurement CSV: either one value per row in canonical meter order, or
/// "label,value" rows (missing meters read as zero). '#' starts a comment.
Vector read_measurements(const std::string& path, const MeterConfig& meters) {
    std::stringstream in(read_file(path));
    std::string line;
    std::vector<double> ordered;
    Vector labelled = Vector::Zero(static_cast<Eigen::Index>(meters.size()));
    bool by_label = false;
    int row = 0;
    while (std::getline(in, line)) {
        ++row;
        line = trim(line.substr(0, line.find('#')));
        if (line.empty()) continue;
        std::vector<std::string> cells;
        std::stringstream ls(line);
        std::string cell;
        while (std::getline(ls, cell, ',')) cells.push_back(trim(cell));
        if (cells.size() == 2 && !number(cells[0])) {
            if (cells[0] == "meter" || cells[0] == "label") continue;   // header
            auto v = number(cells[1]);
            if (!v) throw DataError(path + ":" + std::to_string(row) + ": bad value '" + cells[1] + "'");
            labelled[meters.meter_index(cells[0])] = *v;
            by_label = true;
            continue;
        }
        for (const auto& c : cells) {
            auto v = number(c);
            if (!v) throw DataError(path + ":" + std::to_string(row) + ": bad value '" + c + "'");
            ordered.push_back(*v);
        }
    }
    if (by_label && !ordered.empty()) throw DataError(path + ": mixes labelled and positional values");
    if (by_label) return labelled;
    if (ordered.size() != meters.size())
        throw DataError(path + ": expected " + std::to_string(meters.size()) + " values, found " +
                        std::to_string(ordered.size()));
    return Eigen::Map<const Vector>(ordered.data(), static_cast<Eigen::Index>(ordered.size()));
}

Vector read_state(const std::string& path, std::size_t n) {
    std::stringstream in(read_file(path));
    std::string line, cell;
    std::vector<double> values;
    while (std::getline(in, line)) {
        line = trim(line.substr(0, line.find('#')));
        std::stringstream ls(line);
        while (std::getline(ls, cell, ',')) {
            if (trim(cell).empty()) continue;
            auto v = number(cell);
            if (!v) throw DataError(path + ": bad value '" + cell + "'");
            values.push_back(*v);
        }
    }
    if (values.size() != n)
        throw DataError(path + ": expected " + std::to_string(n) + " phases, found " + std::to_string(values.size()));
    return Eigen::Map<const Vector>(values.data(), static_cast<Eigen::Index>(n));
}

std::vector<double> parse_grid(const std::string& text) {
    std::vector<double> out;
    std::stringstream ss(text);
    std::string item;
    while (std::getline(ss, item, ',')) {
        auto v = number(item);
        if (!v) throw DataError("bad number '" + item + "' in budget grid");
        out.push_back(*v);
    }
    if (out.empty()) throw DataError("empty budget grid");
    return out;
}

/// JSON to --out when given (and a summary to stdout), else JSON to stdout.
void emit(const std::string& out, const std::string& json, const std::string& summary) {
    if (out.empty()) {
        std::cout << json;
    } else {
        write_file(out, json);
        std::cout << summary;
    }
}

std::string pattern_text(const PowerCase& grid, const CongestionPattern& p) {
    if (p.empty()) return "{}";
    std::string s = "{";
    for (std::size_t i = 0; i < p.size(); ++i) s += (i ? ", " : "") + grid.branch_label(p[i]);
    return s + "}";
}

struct Common {
    std::string case_path;
    std::string out;
    std::string format = "json";
    std::uint64_t seed = 1;
    std::string model = "dc";
    double alpha = 0.1;
};

void add_common(CLI::App* cmd, Common& c, bool measurement_model = true) {
    cmd->add_option("--case", c.case_path, "Case file (.json native, .m MATPOWER)")->required()->check(CLI::ExistingFile);
    cmd->add_option("--out", c.out, "Write the JSON result to this file");
    cmd->add_option("--format", c.format, "Standard output format")->check(CLI::IsMember({"json", "csv"}));
    cmd->add_option("--seed", c.seed, "Root seed for synthesized measurements");
    if (measurement_model)
        cmd->add_option("--model", c.model, "Measurement model")->check(CLI::IsMember({"dc", "ac"}));
    cmd->add_option("--alpha", c.alpha, "False alarm probability")->check(CLI::Range(1e-12, 1.0 - 1e-12));
}

/// Measurements from --z, or a seeded draw from the case prior.
Vector measurements(const CaseBundle& bundle, const DcModel& model, const std::string& z_path, const Common& c) {
    if (!z_path.empty()) return read_measurements(z_path, bundle.meters);
    return sample_snapshot(bundle, model, c.seed, 0, c.model == "ac").z;
}

int run_case(const Common& c, const std::string& export_path) {
    auto bundle = load_case(c.case_path);
    if (!export_path.empty()) write_file(export_path, to_native_json(bundle));
    const auto model = build_dc_model(bundle.grid);
    std::ostringstream s;
    s << bundle.grid.name << ": " << bundle.grid.bus_count() << " buses, " << bundle.grid.branch_count()
      << " branches, " << bundle.meters.size() << " meters, dof " << model.degrees_of_freedom() << "\n";
    emit(c.out, case_summary_json(bundle), s.str());
    return 0;
}

int run_estimate(const Common& c, const std::string& z_path, const std::string& plan_path) {
    auto bundle = load_case(c.case_path);
    const auto model = build_dc_model(bundle.grid);
    Vector z = measurements(bundle, model, z_path, c);
    if (!plan_path.empty()) z += attack_vector_from_json(read_file(plan_path), bundle.meters);
    const DetectorConfig det{c.alpha, std::nullopt};
    EstimateReport report;
    if (c.model == "ac") {
        const StateEstimator est(model, bundle.meters.variances(), det);
        const Vector v = Vector::Ones(static_cast<Eigen::Index>(bundle.grid.bus_count()));
        auto ac = ac_wls_estimate(bundle.grid, model, z, bundle.meters.variances(), v, est.threshold());
        if (!ac.converged) throw NumericalError("AC estimator diverged");
        report.state = Vector(static_cast<Eigen::Index>(model.state_dim));
        for (std::size_t b = 0; b < model.bus_count; ++b)
            if (model.state_of_bus[b] >= 0) report.state[model.state_of_bus[b]] = ac.state.angle[static_cast<Eigen::Index>(b)];
        report.flows = ac.flows;
        report.congestion = ac.congestion;
        report.statistic = ac.statistic;
        report.threshold = ac.threshold;
        report.dof = est.dof();
        report.detected = ac.detected;
    } else {
        report = estimate(model, bundle.meters.variances(), z, det);
    }
    if (c.format == "csv" && c.out.empty()) {
        std::cout << "branch,flow_mw\n" << std::setprecision(17);
        for (std::size_t k = 0; k < bundle.grid.branch_count(); ++k)
            std::cout << bundle.grid.branch_label(static_cast<int>(k)) << ',' << report.flows[static_cast<Eigen::Index>(k)] << '\n';
        return 0;
    }
    std::ostringstream s;
    s << "congestion " << pattern_text(bundle.grid, report.congestion) << ", statistic " << report.statistic
      << " vs threshold " << report.threshold << ": " << (report.detected ? "bad data detected" : "passed") << "\n";
    emit(c.out, estimate_json(bundle, report), s.str());
    return 0;
}

int run_lmp(const Common& c, const std::string& pattern_arg) {
    auto bundle = load_case(c.case_path);
    const auto model = build_dc_model(bundle.grid);
    const auto pattern = parse_pattern(bundle.grid, pattern_arg);
    auto sol = solve_expost_lmp(bundle.grid, bundle.market, model, pattern);
    if (c.format == "csv" && c.out.empty()) {
        std::cout << "bus,lambda,lambda_raw\n" << std::setprecision(17);
        if (sol.priced)
            for (std::size_t b = 0; b < bundle.grid.bus_count(); ++b)
                std::cout << bundle.grid.buses[b].id << ',' << sol.lambda[static_cast<Eigen::Index>(b)] << ','
                          << sol.lambda_raw[static_cast<Eigen::Index>(b)] << '\n';
        return sol.priced ? 0 : 1;
    }
    std::ostringstream s;
    if (sol.priced) {
        s << "pattern " << pattern_text(bundle.grid, pattern) << ": eta " << sol.eta << "\n";
        for (std::size_t b = 0; b < bundle.grid.bus_count(); ++b)
            s << "  bus " << bundle.grid.buses[b].id << "  " << sol.lambda[static_cast<Eigen::Index>(b)] << "\n";
    } else {
        s << "pattern " << pattern_text(bundle.grid, pattern) << " is not priced (" << lp::to_string(sol.status) << ")\n";
    }
    emit(c.out, lmp_json(bundle.grid, sol), s.str());
    return 0;
}

int run_partition(const Common& c, const std::string& state_path, const std::string& z_path, double threshold) {
    auto bundle = load_case(c.case_path);
    const auto model = build_dc_model(bundle.grid);
    Vector x;
    if (!state_path.empty()) {
        x = read_state(state_path, model.state_dim);
    } else {
        const StateEstimator est(model, bundle.meters.variances());
        x = est.solve(measurements(bundle, model, z_path, c));
    }
    std::ostringstream s;
    s << "region " << pattern_text(bundle.grid, region_of_state(model, x)) << ", margin " << boundary_margin(model, x)
      << " MW\n";
    emit(c.out, partition_json(bundle, model, x, threshold), s.str());
    return 0;
}

struct MeterArgs {
    std::string attack_model = "m1";
    std::string epsilon = "4";
    std::string suspects;
    std::string search = "exhaustive";
    std::string z_path;
    std::optional<double> tau;
    double threshold = 10.0;
    std::size_t cap = 12;
};

int run_attack_meter(const Common& c, const MeterArgs& a) {
    auto bundle = load_case(c.case_path);
    const auto model = build_dc_model(bundle.grid);
    const auto variances = bundle.meters.variances();
    const StateEstimator est(model, variances, DetectorConfig{c.alpha, std::nullopt});
    const auto ops = est.operators();
    const auto suspects =
        a.suspects.empty() ? bundle.meters.suspects : select_meters(bundle.grid, bundle.meters, a.suspects);
    if (suspects.empty()) throw DataError("no suspect meters: pass --suspects or declare them in the case");
    AttackContext ctx{bundle.grid, bundle.market, model, ops.gain, ops.kernel, SuspectSpace{suspects}};
    const Vector z = measurements(bundle, model, a.z_path, c);
    const auto prior = case_prior(bundle, model);

    MeterAttackInputs in;
    in.model = parse_attack_model(a.attack_model);
    Vector state;
    if (in.model == AttackModel::M1) {
        in.anchor = prior.mean;
        state = in.anchor;
    } else if (in.model == AttackModel::M2) {
        const auto observed = observed_half(model);
        Matrix h0(static_cast<Eigen::Index>(observed.size()), model.measurement.cols());
        Vector z0(h0.rows()), v0(h0.rows());
        for (std::size_t i = 0; i < observed.size(); ++i) {
            const auto r = static_cast<Eigen::Index>(i);
            h0.row(r) = model.measurement.row(observed[i]);
            z0[r] = z[observed[i]];
            v0[r] = variances[observed[i]];
        }
        in.anchor = mmse_state(prior, h0, z0, v0);
        state = in.anchor;
    } else {
        in.z = z;
        in.tau = a.tau.value_or(est.threshold());
        state = ops.gain * z;
    }
    const auto cands = candidate_lines(model, branch_flows(model, state), a.threshold, a.cap);
    const auto method = parse_search_method(a.search);

    std::vector<double> budgets = in.model == AttackModel::M3 ? std::vector<double>{in.tau} : parse_grid(a.epsilon);
    std::string json;
    std::ostringstream s;
    for (std::size_t i = 0; i < budgets.size(); ++i) {
        if (in.model != AttackModel::M3) in.epsilon = budgets[i];
        auto plan = worst_meter_attack(ctx, in, cands, method);
        auto doc = meter_plan_json(bundle, plan);
        json += (budgets.size() > 1 ? (i ? ",\n" : "[\n") : "") + doc;
        s << to_string(in.model) << " budget " << budgets[i] << ": target " << pattern_text(bundle.grid, plan.target)
          << ", predicted ARPP " << plan.predicted_arpp << (plan.attacked ? "" : " (no attack)") << "\n";
    }
    if (budgets.size() > 1) json += "]\n";
    emit(c.out, json, s.str());
    return 0;
}

int run_attack_topology(const Common& c, const std::string& remove, int max_removals, const std::string& capability,
                        const std::string& z_path) {
    auto bundle = load_case(c.case_path);
    const auto& grid = bundle.grid;
    const auto model = build_dc_model(grid);
    const Vector z = measurements(bundle, model, z_path, c);
    std::vector<int> lines;
    if (capability.empty() || capability == "all") {
        for (std::size_t k = 0; k < grid.branch_count(); ++k)
            if (grid.branches[k].closed) lines.push_back(static_cast<int>(k));
    } else {
        lines = parse_pattern(grid, capability);
    }
    const auto caps = Capabilities::of_lines(grid, bundle.meters, lines);
    TopologyAttackPlan plan;
    if (remove == "auto") {
        plan = worst_topology_attack(grid, bundle.market, bundle.meters, z, caps, max_removals,
                                     DetectorConfig{c.alpha, std::nullopt});
    } else {
        plan = line_removal_attack(grid, bundle.meters, z, parse_pattern(grid, remove), caps);
    }
    std::ostringstream s;
    if (plan.feasible)
        s << "remove " << pattern_text(grid, plan.removed) << ", predicted perturbation " << plan.perturbation << "\n";
    else
        s << "no feasible target" << (plan.reason.empty() ? "" : ": " + plan.reason) << "\n";
    emit(c.out, topology_plan_json(bundle, plan), s.str());
    return plan.feasible ? 0 : 1;
}

int run_montecarlo(const std::string& scenario, const std::string& out, int threads, int trials) {
    auto config = ScenarioConfig::load(scenario);
    if (threads >= 0) config.threads = threads;
    if (trials > 0) config.trials = trials;
    auto result = run_scenario(config);
    write_outputs(result, out);
    std::cout << result.case_name << ": " << result.config.trials << " trials, threshold " << result.threshold << "\n";
    std::cout << "epsilon,detection_probability,arpp\n";
    for (const auto& p : result.points)
        std::cout << (p.epsilon ? std::to_string(*p.epsilon) : "-") << ',' << p.detection_probability << ',' << p.arpp
                  << '\n';
    std::cout << "wrote " << out << "/results.json, trials.csv, curve.csv, timing.json\n";
    return 0;
}

int run_compare(const std::string& scenario, const std::string& out, int threads, int trials) {
    auto config = ScenarioConfig::load(scenario);
    if (threads >= 0) config.threads = threads;
    if (trials > 0) config.trials = trials;
    auto cmp = compare_search_methods(config);
    std::ostringstream s;
    s << "agreement " << cmp.agreement << " over " << cmp.compared << " trials; mean search time exhaustive "
      << cmp.exhaustive.mean_s << " s, greedy " << cmp.greedy.mean_s << " s\n";
    emit(out, comparison_json(cmp), s.str());
    return 0;
}

}  // namespace

int main(int argc, char** argv) {
    CLI::App app{"Real-time LMP under bad data: estimation, pricing and attack analysis"};
    app.require_subcommand(1);
    app.set_version_flag("--version", "rtlmp 1.0");
    Common common;

    auto* cmd_case = app.add_subcommand("case", "Validate a case and print its summary");
    add_common(cmd_case, common);
    std::string export_path;
    cmd_case->add_option("--export", export_path, "Also write the case in native JSON form");

    auto* cmd_est = app.add_subcommand("estimate", "WLS estimate, congestion and bad data verdict");
    add_common(cmd_est, common);
    std::string z_path, plan_path;
    cmd_est->add_option("--z", z_path, "Measurement CSV (default: a draw from the prior with --seed)")
        ->check(CLI::ExistingFile);
    cmd_est->add_option("--attack", plan_path, "Add the attack vector of a plan JSON to z")->check(CLI::ExistingFile);

    auto* cmd_lmp = app.add_subcommand("lmp", "Ex-post prices for a congestion pattern");
    add_common(cmd_lmp, common);
    std::string pattern;
    cmd_lmp->add_option("--pattern", pattern, "Congested lines, e.g. \"1-3\" or \"2-3,6-11\" (empty: none)");

    auto* cmd_part = app.add_subcommand("partition", "Price region of a state and its nonempty neighbours");
    add_common(cmd_part, common);
    std::string state_path;
    double part_threshold = 10.0;
    auto* state_opt = cmd_part->add_option("--state", state_path, "Phase CSV in rad, reference excluded")
                          ->check(CLI::ExistingFile);
    cmd_part->add_option("--z", z_path, "Measurement CSV to estimate the state from")
        ->check(CLI::ExistingFile)
        ->excludes(state_opt);
    cmd_part->add_option("--threshold", part_threshold, "Candidate distance to a limit, MW")
        ->check(CLI::PositiveNumber);

    auto* cmd_attack = app.add_subcommand("attack", "Construct a worst-case attack");
    cmd_attack->require_subcommand(1);
    auto* cmd_meter = cmd_attack->add_subcommand("meter", "Meter attack under model m1, m2 or m3");
    add_common(cmd_meter, common, false);
    MeterArgs margs;
    cmd_meter->add_option("--model", margs.attack_model, "Attack model")->check(CLI::IsMember({"m1", "m2", "m3"}));
    cmd_meter->add_option("--epsilon", margs.epsilon, "Budget or comma-separated budget grid (m1, m2)");
    cmd_meter->add_option("--tau", margs.tau, "Statistic budget for m3 (default: detector threshold)");
    cmd_meter->add_option("--suspects", margs.suspects, "Meter selector: lines:2-3,6-11 | meters:P1,P2-3 | all");
    cmd_meter->add_option("--search", margs.search, "Pattern search")->check(CLI::IsMember({"exhaustive", "greedy"}));
    cmd_meter->add_option("--z", margs.z_path, "Measurement CSV")->check(CLI::ExistingFile);
    cmd_meter->add_option("--threshold", margs.threshold, "Candidate distance to a limit, MW")
        ->check(CLI::PositiveNumber);
    cmd_meter->add_option("--candidate-cap", margs.cap, "Most candidate lines kept")->check(CLI::Range(1, 20));

    auto* cmd_topo = cmd_attack->add_subcommand("topology", "Line-removal topology attack");
    add_common(cmd_topo, common);
    std::string remove = "auto", capability;
    int max_removals = 1;
    cmd_topo->add_option("--remove", remove, "Lines to remove, or auto for the worst feasible target");
    cmd_topo->add_option("--max-removals", max_removals, "Largest target size searched by auto")
        ->check(CLI::Range(1, 4));
    cmd_topo->add_option("--capability", capability, "Lines whose meters and breakers the adversary holds (default all)");
    cmd_topo->add_option("--z", z_path, "Measurement CSV")->check(CLI::ExistingFile);

    auto* cmd_mc = app.add_subcommand("montecarlo", "Run a scenario and write results.json, trials.csv, curve.csv");
    std::string scenario, out_dir = "results";
    int threads = -1, trials = 0;
    cmd_mc->add_option("--scenario", scenario, "Scenario JSON")->required()->check(CLI::ExistingFile);
    cmd_mc->add_option("--out", out_dir, "Output directory");
    cmd_mc->add_option("--threads", threads, "Worker threads (0: all cores)")->check(CLI::NonNegativeNumber);
    cmd_mc->add_option("--trials", trials, "Override the scenario's trial count")->check(CLI::PositiveNumber);

    auto* cmd_cmp = app.add_subcommand("compare-search", "Greedy against exhaustive pattern search");
    std::string cmp_out;
    cmd_cmp->add_option("--scenario", scenario, "Meter attack scenario JSON")->required()->check(CLI::ExistingFile);
    cmd_cmp->add_option("--out", cmp_out, "Write the comparison JSON here");
    cmd_cmp->add_option("--threads", threads, "Worker threads (0: all cores)")->check(CLI::NonNegativeNumber);
    cmd_cmp->add_option("--trials", trials, "Override the scenario's trial count")->check(CLI::PositiveNumber);

    try {
        app.parse(argc, argv);
    } catch (const CLI::CallForHelp& e) {
        return app.exit(e);
    } catch (const CLI::CallForAllHelp& e) {
        return app.exit(e);
    } catch (const CLI::CallForVersion& e) {
        return app.exit(e);
    } catch (const CLI::ParseError& e) {
        app.exit(e);
        return 2;
    }

    try {
        if (*cmd_case) return run_case(common, export_path);
        if (*cmd_est) return run_estimate(common, z_path, plan_path);
        if (*cmd_lmp) return run_lmp(common, pattern);
        if (*cmd_part) return run_partition(common, state_path, z_path, part_threshold);
        if (*cmd_meter) return run_attack_meter(common, margs);
        if (*cmd_topo) return run_attack_topology(common, remove, max_removals, capability, z_path);
        if (*cmd_mc) return run_montecarlo(scenario, out_dir, threads, trials);
        if (*cmd_cmp) return run_compare(scenario, cmp_out, threads, trials);
    } catch (const std::exception& e) {
        std::cerr << "error: " << e.what() << "\n";
        return 1;
    }
    return 2;
}
