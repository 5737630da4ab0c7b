#include "rtlmp/experiment.hpp"

#include "rtlmp/ac_reference.hpp"
#include "rtlmp/pricing.hpp"
#include "rtlmp/state_estimation.hpp"
#include "rtlmp/topology_attacks.hpp"

#include "json.hpp"

#include <algorithm>
#include <atomic>
#include <charconv>
#include <chrono>
#include <cmath>
#include <filesystem>
#include <fstream>
#include <functional>
#include <map>
#include <memory>
#include <random>
#include <sstream>
#include <thread>

namespace rtlmp {

using nlohmann::ordered_json;

const char* to_string(AttackKind kind) {
    switch (kind) {
        case AttackKind::None: return "none";
        case AttackKind::Meter: return "meter";
        case AttackKind::Topology: return "topology";
    }
    return "none";
}

AttackKind parse_attack_kind(const std::string& text) {
    if (text == "none") return AttackKind::None;
    if (text == "meter") return AttackKind::Meter;
    if (text == "topology") return AttackKind::Topology;
    throw ModelError("unknown attack type '" + text + "' (none|meter|topology)");
}

// ---------------------------------------------------------------------------
// Scenario documents

namespace {

const ordered_json& require(const ordered_json& obj, const char* key, const std::string& path) {
    if (!obj.contains(key)) throw ParseError(path, std::string("missing field '") + key + "'");
    return obj.at(key);
}

template <class T>
T read(const ordered_json& obj, const char* key, const std::string& path) {
    try {
        return require(obj, key, path).get<T>();
    } catch (const nlohmann::json::exception& e) {
        throw ParseError(path + "/" + key, e.what());
    }
}

template <class T>
T read_or(const ordered_json& obj, const char* key, T fallback, const std::string& path) {
    return obj.contains(key) ? read<T>(obj, key, path) : fallback;
}

void reject_unknown(const ordered_json& obj, std::initializer_list<const char*> known, const std::string& path) {
    for (auto it = obj.begin(); it != obj.end(); ++it) {
        bool ok = std::any_of(known.begin(), known.end(), [&](const char* k) { return it.key() == k; });
        if (!ok) throw ParseError(path, "unknown field '" + it.key() + "'");
    }
}

}  // namespace

void ScenarioConfig::validate() const {
    if (case_path.empty()) throw ModelError("scenario has no case");
    if (trials < 1) throw ModelError("trials must be at least 1");
    if (!(alpha > 0.0 && alpha < 1.0)) throw ModelError("alpha must lie in (0, 1)");
    if (!(candidate_threshold_mw > 0.0)) throw ModelError("candidate threshold must be positive");
    if (candidate_cap < 1 || candidate_cap > 20) throw ModelError("candidate cap must lie in [1, 20]");
    if (threads < 0) throw ModelError("threads must be nonnegative");
    if (attack.kind == AttackKind::Meter && attack.model != AttackModel::M3) {
        if (attack.epsilon.empty()) throw ModelError("epsilon grid is empty");
        for (std::size_t i = 0; i < attack.epsilon.size(); ++i) {
            if (!(attack.epsilon[i] > 0.0)) throw ModelError("epsilon values must be positive");
            if (i > 0 && !(attack.epsilon[i] > attack.epsilon[i - 1]))
                throw ModelError("epsilon grid must be increasing");
        }
    }
    if (attack.tau && !(*attack.tau > 0.0)) throw ModelError("tau must be positive");
    if (attack.kind == AttackKind::Topology && attack.max_removals < 1)
        throw ModelError("max_removals must be at least 1");
    const auto& cap = attack.capability;
    if (cap.rfind("random:", 0) == 0) {
        int n = 0;
        try {
            n = std::stoi(cap.substr(7));
        } catch (const std::exception&) {
            throw ModelError("bad capability '" + cap + "'");
        }
        if (n < 1) throw ModelError("capability must draw at least one line");
    } else if (cap.rfind("lines:", 0) != 0) {
        throw ModelError("capability must be 'random:N' or 'lines:...', got '" + cap + "'");
    }
}

std::size_t ScenarioConfig::point_count() const {
    if (attack.kind == AttackKind::Meter && attack.model != AttackModel::M3) return attack.epsilon.size();
    return 1;
}

ScenarioConfig ScenarioConfig::parse(const std::string& text, const std::string& base_dir) {
    ordered_json doc;
    try {
        doc = ordered_json::parse(text);
    } catch (const nlohmann::json::parse_error& e) {
        throw ParseError("scenario", e.what());
    }
    if (!doc.is_object()) throw ParseError("scenario", "expected an object");
    reject_unknown(doc,
                   {"case", "model", "attack", "trials", "alpha", "seed", "candidate_threshold_mw", "candidate_cap",
                    "threads"},
                   "scenario");
    ScenarioConfig c;
    auto path = read<std::string>(doc, "case", "scenario");
    std::filesystem::path p(path);
    c.case_path = p.is_absolute() ? path : (std::filesystem::path(base_dir) / p).lexically_normal().string();
    auto model = read_or<std::string>(doc, "model", "dc", "scenario");
    if (model != "dc" && model != "ac") throw ParseError("scenario/model", "expected 'dc' or 'ac'");
    c.ac = model == "ac";
    c.trials = read_or<int>(doc, "trials", c.trials, "scenario");
    c.alpha = read_or<double>(doc, "alpha", c.alpha, "scenario");
    c.seed = read_or<std::uint64_t>(doc, "seed", c.seed, "scenario");
    c.candidate_threshold_mw = read_or<double>(doc, "candidate_threshold_mw", c.candidate_threshold_mw, "scenario");
    c.candidate_cap = read_or<std::size_t>(doc, "candidate_cap", c.candidate_cap, "scenario");
    c.threads = read_or<int>(doc, "threads", c.threads, "scenario");
    if (doc.contains("attack")) {
        const auto& a = doc.at("attack");
        const std::string ap = "scenario/attack";
        if (!a.is_object()) throw ParseError(ap, "expected an object");
        reject_unknown(a, {"type", "model", "capability", "epsilon", "tau", "search", "max_removals"}, ap);
        try {
            c.attack.kind = parse_attack_kind(read_or<std::string>(a, "type", "none", ap));
            if (a.contains("model")) c.attack.model = parse_attack_model(read<std::string>(a, "model", ap));
            if (a.contains("search")) c.attack.search = parse_search_method(read<std::string>(a, "search", ap));
        } catch (const ModelError& e) {
            throw ParseError(ap, e.what());
        }
        c.attack.capability = read_or<std::string>(a, "capability", c.attack.capability, ap);
        c.attack.epsilon = read_or<std::vector<double>>(a, "epsilon", c.attack.epsilon, ap);
        if (a.contains("tau")) c.attack.tau = read<double>(a, "tau", ap);
        c.attack.max_removals = read_or<int>(a, "max_removals", c.attack.max_removals, ap);
    }
    c.validate();
    return c;
}

ScenarioConfig ScenarioConfig::load(const std::string& path) {
    std::ifstream in(path);
    if (!in) throw ParseError(path, "cannot open scenario");
    std::stringstream ss;
    ss << in.rdbuf();
    return parse(ss.str(), std::filesystem::path(path).parent_path().string());
}

std::string ScenarioConfig::to_json() const {
    ordered_json a{{"type", to_string(attack.kind)},
                   {"model", to_string(attack.model)},
                   {"capability", attack.capability},
                   {"epsilon", attack.epsilon},
                   {"search", to_string(attack.search)},
                   {"max_removals", attack.max_removals}};
    if (attack.tau) a["tau"] = *attack.tau;
    ordered_json doc{{"case", case_path},
                     {"model", ac ? "ac" : "dc"},
                     {"attack", a},
                     {"trials", trials},
                     {"alpha", alpha},
                     {"seed", seed},
                     {"candidate_threshold_mw", candidate_threshold_mw},
                     {"candidate_cap", candidate_cap},
                     {"threads", threads}};
    return doc.dump(2);
}

// ---------------------------------------------------------------------------
// Trial engine

namespace {

enum Stream : std::uint32_t { kState = 0, kNoise = 1, kCapability = 2, kMagnitude = 3 };

std::uint64_t trial_seed(std::uint64_t root, int trial) {
    std::seed_seq seq{static_cast<std::uint32_t>(root), static_cast<std::uint32_t>(root >> 32),
                      static_cast<std::uint32_t>(trial)};
    std::mt19937_64 gen(seq);
    return gen();
}

std::mt19937_64 stream(std::uint64_t seed, Stream s) {
    std::seed_seq seq{static_cast<std::uint32_t>(seed), static_cast<std::uint32_t>(seed >> 32),
                      static_cast<std::uint32_t>(s)};
    return std::mt19937_64(seq);
}

Vector normals(std::mt19937_64& rng, Eigen::Index n) {
    std::normal_distribution<double> d(0.0, 1.0);
    Vector v(n);
    for (Eigen::Index i = 0; i < n; ++i) v[i] = d(rng);
    return v;
}

std::string pattern_label(const PowerCase& grid, const CongestionPattern& p) {
    std::string out;
    for (int k : p) {
        if (!out.empty()) out += ';';
        out += grid.branch_label(k);
    }
    return out;
}

TimingStats timing_of(const std::vector<double>& seconds) {
    TimingStats t;
    t.samples = static_cast<int>(seconds.size());
    if (seconds.empty()) return t;
    double sum = 0.0;
    for (double s : seconds) sum += s;
    t.mean_s = sum / seconds.size();
    double var = 0.0;
    for (double s : seconds) var += (s - t.mean_s) * (s - t.mean_s);
    t.std_s = seconds.size() > 1 ? std::sqrt(var / (seconds.size() - 1)) : 0.0;
    return t;
}

Snapshot draw_snapshot(const PowerCase& grid, const DcModel& model, const Vector& mean, const Matrix& sqrt_cov,
                       const Vector& variances, std::uint64_t seed, bool ac) {
    Snapshot s;
    s.seed = seed;
    auto srng = stream(seed, kState);
    s.x = mean + sqrt_cov * normals(srng, mean.size());
    if (ac) {
        auto vrng = stream(seed, kMagnitude);
        const auto nb = static_cast<Eigen::Index>(grid.bus_count());
        s.magnitudes = Vector::Ones(nb) + 0.01 * normals(vrng, nb);
        s.z = AcModel(grid, s.magnitudes).measurements(s.x);
    } else {
        s.z = model.measurement * s.x;
    }
    auto nrng = stream(seed, kNoise);
    const Vector e = normals(nrng, s.z.size());
    for (Eigen::Index i = 0; i < s.z.size(); ++i)
        if (model.active_meter[static_cast<std::size_t>(i)]) s.z[i] += std::sqrt(variances[i]) * e[i];
    return s;
}

/// Runs body(trial, worker) for every trial on `width` threads.
void parallel_trials(int trials, int width, const std::function<void(int, int)>& body) {
    if (width <= 1) {
        for (int t = 0; t < trials; ++t) body(t, 0);
        return;
    }
    std::atomic<int> next{0};
    std::vector<std::thread> pool;
    for (int w = 0; w < width; ++w)
        pool.emplace_back([&, w] {
            for (int t = next++; t < trials; t = next++) body(t, w);
        });
    for (auto& th : pool) th.join();
}

int worker_count(const ScenarioConfig& c) {
    int w = c.threads > 0 ? c.threads : static_cast<int>(std::thread::hardware_concurrency());
    return std::clamp(w, 1, std::max(1, c.trials));
}

/// A network as the operator believes it to be.
struct Topology {
    PowerCase grid;
    DcModel model;
    std::unique_ptr<StateEstimator> estimator;
};

/// Per-worker memo of topologies and prices; every entry is a pure function
/// of its key, so sharing it across trials cannot change results.
struct WorkerCache {
    std::map<std::vector<int>, std::unique_ptr<Topology>> topologies;
    std::map<std::pair<std::vector<int>, CongestionPattern>, std::optional<Vector>> prices;
};

struct Outcome {
    TrialRecord record;
    std::optional<Vector> base;
    std::optional<Vector> attacked;
};

/// Data shared read-only by every trial.
class Engine {
public:
    explicit Engine(const ScenarioConfig& config) : config_(config), bundle_(load_case(config.case_path)) {
        const auto& grid = bundle_.grid;
        const DetectorConfig det{config.alpha, std::nullopt};
        variances_ = bundle_.meters.variances();
        base_.grid = grid;
        base_.model = build_dc_model(grid);
        base_.estimator = std::make_unique<StateEstimator>(base_.model, variances_, det);
        ops_ = base_.estimator->operators();
        const auto n = static_cast<Eigen::Index>(grid.state_dim());
        prior_ = case_prior(bundle_, base_.model);
        prior_sqrt_ = prior_.covariance.llt().matrixL();
        for (std::size_t k = 0; k < grid.branch_count(); ++k)
            if (grid.branches[k].closed) closed_lines_.push_back(static_cast<int>(k));
        const auto& cap = config.attack.capability;
        if (cap.rfind("random:", 0) == 0) {
            draw_ = std::stoi(cap.substr(7));
            if (draw_ > static_cast<int>(closed_lines_.size()))
                throw ModelError("capability draws more lines than the case has");
        } else {
            std::stringstream ss(cap.substr(6));
            std::string item;
            while (std::getline(ss, item, ',')) fixed_lines_.push_back(grid.find_branch(item));
            std::sort(fixed_lines_.begin(), fixed_lines_.end());
            fixed_lines_.erase(std::unique(fixed_lines_.begin(), fixed_lines_.end()), fixed_lines_.end());
        }
        observed_ = observed_half(base_.model);
        h0_ = Matrix(static_cast<Eigen::Index>(observed_.size()), n);
        var0_ = Vector(static_cast<Eigen::Index>(observed_.size()));
        for (std::size_t i = 0; i < observed_.size(); ++i) {
            h0_.row(static_cast<Eigen::Index>(i)) = base_.model.measurement.row(observed_[i]);
            var0_[static_cast<Eigen::Index>(i)] = variances_[observed_[i]];
        }
        tau_ = config.attack.tau.value_or(base_.estimator->threshold());
    }

    const CaseBundle& bundle() const { return bundle_; }
    const DcModel& model() const { return base_.model; }
    const StateEstimator& estimator() const { return *base_.estimator; }

    struct Draw {
        std::uint64_t seed = 0;
        Vector x;
        Vector z;
        Vector magnitudes;
        std::vector<int> lines;   // adversary's lines
    };

    Draw draw(int trial) const {
        Draw d;
        auto snap = draw_snapshot(bundle_.grid, base_.model, prior_.mean, prior_sqrt_, variances_,
                                  trial_seed(config_.seed, trial), config_.ac);
        d.seed = snap.seed;
        d.x = std::move(snap.x);
        d.z = std::move(snap.z);
        d.magnitudes = std::move(snap.magnitudes);
        if (draw_ > 0) {
            auto crng = stream(d.seed, kCapability);
            std::vector<int> pool = closed_lines_;
            for (int k = 0; k < draw_; ++k) {
                std::uniform_int_distribution<std::size_t> pick(static_cast<std::size_t>(k), pool.size() - 1);
                std::swap(pool[static_cast<std::size_t>(k)], pool[pick(crng)]);
            }
            d.lines.assign(pool.begin(), pool.begin() + draw_);
            std::sort(d.lines.begin(), d.lines.end());
        } else {
            d.lines = fixed_lines_;
        }
        return d;
    }

    const Topology& topology(WorkerCache& cache, const std::vector<int>& removed) const {
        if (removed.empty()) return base_;
        auto it = cache.topologies.find(removed);
        if (it != cache.topologies.end()) return *it->second;
        auto t = std::make_unique<Topology>();
        t->grid = apply_topology(bundle_.grid, removed);
        t->model = build_dc_model(t->grid);
        t->estimator = std::make_unique<StateEstimator>(t->model, variances_, DetectorConfig{config_.alpha, {}});
        return *cache.topologies.emplace(removed, std::move(t)).first->second;
    }

    std::optional<Vector> price(WorkerCache& cache, const std::vector<int>& removed,
                                const CongestionPattern& pattern) const {
        auto key = std::make_pair(removed, pattern);
        auto it = cache.prices.find(key);
        if (it != cache.prices.end()) return it->second;
        const auto& topo = topology(cache, removed);
        std::optional<Vector> out;
        auto sol = solve_expost_lmp(topo.grid, bundle_.market, topo.model, pattern);
        if (sol.priced) out = sol.lambda;
        cache.prices.emplace(std::move(key), out);
        return out;
    }

    struct Evaluation {
        bool detected = false;
        bool converged = true;
        double statistic = 0.0;
        CongestionPattern pattern;
    };

    /// Estimation and detection under a claimed topology.
    Evaluation evaluate(WorkerCache& cache, const std::vector<int>& removed, const Vector& z,
                        const Vector& magnitudes) const {
        const auto& topo = topology(cache, removed);
        Evaluation ev;
        if (config_.ac) {
            auto r = ac_wls_estimate(topo.grid, topo.model, z, variances_, magnitudes, topo.estimator->threshold());
            ev.detected = r.detected;
            ev.converged = r.converged;
            ev.statistic = r.statistic;
            ev.pattern = r.congestion;
        } else {
            auto r = topo.estimator->estimate(z);
            ev.detected = r.detected;
            ev.statistic = r.statistic;
            ev.pattern = r.congestion;
        }
        return ev;
    }

    /// Attack-free expected state the attacker plans around (M1, M2).
    Vector anchor(const Draw& d) const {
        if (config_.attack.model == AttackModel::M1) return prior_.mean;
        Vector z0(static_cast<Eigen::Index>(observed_.size()));
        for (std::size_t i = 0; i < observed_.size(); ++i) z0[static_cast<Eigen::Index>(i)] = d.z[observed_[i]];
        return mmse_state(prior_, h0_, z0, var0_);
    }

    MeterAttackInputs meter_inputs(const Draw& d) const {
        MeterAttackInputs in;
        in.model = config_.attack.model;
        if (in.model == AttackModel::M3) {
            in.z = d.z;
            in.tau = tau_;
        } else {
            in.anchor = anchor(d);
        }
        return in;
    }

    CandidateSet candidates(const MeterAttackInputs& in) const {
        const Vector state = in.model == AttackModel::M3 ? Vector(ops_.gain * in.z) : in.anchor;
        return candidate_lines(base_.model, branch_flows(base_.model, state), config_.candidate_threshold_mw,
                               config_.candidate_cap);
    }

    AttackContext context(const std::vector<int>& lines) const {
        return AttackContext{bundle_.grid, bundle_.market, base_.model, ops_.gain, ops_.kernel,
                             SuspectSpace{meters_of_branches(bundle_.grid, bundle_.meters, lines)}};
    }

    /// All points of one trial, plus the attack construction time.
    std::vector<Outcome> run_trial(int trial, WorkerCache& cache, double& attack_seconds) const {
        const auto points = config_.point_count();
        std::vector<Outcome> out(points);
        Draw d;
        try {
            d = draw(trial);
        } catch (const std::exception& e) {
            for (std::size_t p = 0; p < points; ++p) fail(out[p], trial, p, 0, e.what());
            return out;
        }
        for (std::size_t p = 0; p < points; ++p) {
            out[p].record.trial = trial;
            out[p].record.point = static_cast<int>(p);
            out[p].record.seed = d.seed;
        }
        const auto& grid = bundle_.grid;
        std::optional<Vector> base_price;
        std::string base_label;
        try {
            auto base = evaluate(cache, {}, d.z, d.magnitudes);
            base_label = pattern_label(grid, base.pattern);
            if (base.converged) base_price = price(cache, {}, base.pattern);

            if (config_.attack.kind == AttackKind::None) {
                finish(out[0], base, base_price, base_label, base_price, base.pattern, !base.converged);
                return out;
            }

            const auto start = std::chrono::steady_clock::now();
            if (config_.attack.kind == AttackKind::Meter) {
                auto ctx = context(d.lines);
                auto in = meter_inputs(d);
                auto cands = candidates(in);
                std::vector<MeterAttackPlan> plans;
                if (in.model == AttackModel::M3) {
                    plans.push_back(worst_meter_attack(ctx, in, cands, config_.attack.search));
                } else {
                    for (double eps : config_.attack.epsilon) {
                        in.epsilon = eps;
                        plans.push_back(worst_meter_attack(ctx, in, cands, config_.attack.search));
                    }
                }
                attack_seconds = seconds_since(start);
                for (std::size_t p = 0; p < points; ++p) {
                    const Vector za = d.z + plans[p].a;
                    auto ev = evaluate(cache, {}, za, d.magnitudes);
                    std::optional<Vector> att;
                    if (ev.converged && !ev.detected) att = price(cache, {}, ev.pattern);
                    out[p].record.attacked = plans[p].attacked;
                    finish(out[p], ev, base_price, base_label, att, ev.pattern, !ev.converged);
                }
            } else {
                auto caps = Capabilities::of_lines(grid, bundle_.meters, d.lines);
                auto plan = worst_topology_attack(grid, bundle_.market, bundle_.meters, d.z, caps,
                                                  config_.attack.max_removals, DetectorConfig{config_.alpha, {}});
                attack_seconds = seconds_since(start);
                const bool launched = plan.feasible && !plan.removed.empty();
                const std::vector<int> removed = launched ? plan.removed : std::vector<int>{};
                const Vector za = launched ? Vector(d.z + plan.a) : d.z;
                auto ev = evaluate(cache, removed, za, d.magnitudes);
                std::optional<Vector> att;
                if (ev.converged && !ev.detected) att = price(cache, removed, ev.pattern);
                out[0].record.attacked = launched;
                if (launched) out[0].record.note = "removed " + pattern_label(grid, removed);
                finish(out[0], ev, base_price, base_label, att, ev.pattern, !ev.converged);
            }
        } catch (const std::exception& e) {
            for (std::size_t p = 0; p < points; ++p) fail(out[p], trial, p, d.seed, e.what());
        }
        return out;
    }

private:
    static double seconds_since(std::chrono::steady_clock::time_point t) {
        return std::chrono::duration<double>(std::chrono::steady_clock::now() - t).count();
    }

    static void fail(Outcome& o, int trial, std::size_t point, std::uint64_t seed, const std::string& why) {
        o = Outcome{};
        o.record.trial = trial;
        o.record.point = static_cast<int>(point);
        o.record.seed = seed;
        o.record.failed = true;
        o.record.rpp = std::nan("");
        o.record.note = why;
    }

    void finish(Outcome& o, const Evaluation& ev, const std::optional<Vector>& base, const std::string& base_label,
                const std::optional<Vector>& attacked, const CongestionPattern& pattern, bool diverged) const {
        auto& r = o.record;
        r.detected = ev.detected;
        r.statistic = ev.statistic;
        r.base_pattern = base_label;
        r.attacked_pattern = pattern_label(bundle_.grid, pattern);
        r.priced = base.has_value() && attacked.has_value();
        r.rpp = std::nan("");
        auto note = [&](const std::string& s) { r.note = r.note.empty() ? s : r.note + "; " + s; };
        if (diverged) note("estimator diverged");
        if (!base) note("attack-free pattern unpriced");
        else if (!ev.detected && !attacked && !diverged) note("attacked pattern unpriced");
        if (r.priced && !r.detected) {
            r.rpp = relative_perturbation(*base, *attacked);
            o.base = base;
            o.attacked = attacked;
        }
    }

    ScenarioConfig config_;
    CaseBundle bundle_;
    Vector variances_;
    Topology base_;
    EstimatorOperators ops_;
    StatePrior prior_;
    Matrix prior_sqrt_;
    std::vector<int> closed_lines_;
    std::vector<int> fixed_lines_;
    int draw_ = 0;
    std::vector<int> observed_;
    Matrix h0_;
    Vector var0_;
    double tau_ = 0.0;
};

PointResult summarize(const std::vector<const Outcome*>& outcomes, const PowerCase& grid) {
    PointResult p;
    std::vector<Vector> base, att;
    for (const auto* o : outcomes) {
        const auto& r = o->record;
        if (r.failed) {
            ++p.failed;
            continue;
        }
        ++p.trials;
        p.detected += r.detected ? 1 : 0;
        p.attacked += r.attacked ? 1 : 0;
        if (o->base && o->attacked) {
            base.push_back(*o->base);
            att.push_back(*o->attacked);
        }
    }
    p.detection_probability = p.trials ? static_cast<double>(p.detected) / p.trials : 0.0;
    p.samples = static_cast<int>(base.size());
    if (!base.empty()) {
        auto m = price_metrics(base, att);
        p.arpp = m.arpp;
        for (int b : m.excluded) p.excluded_buses.push_back(grid.buses[static_cast<std::size_t>(b)].id);
    }
    return p;
}

}  // namespace

StatePrior case_prior(const CaseBundle& bundle, const DcModel& model) {
    const auto n = static_cast<Eigen::Index>(bundle.grid.state_dim());
    StatePrior prior;
    prior.mean = bundle.prior.mean_rad ? Eigen::Map<const Vector>(bundle.prior.mean_rad->data(), n).eval()
                                       : nominal_dispatch_state(bundle.grid, model);
    prior.covariance = Matrix::Identity(n, n) * bundle.prior.std_rad * bundle.prior.std_rad;
    return prior;
}

Snapshot sample_snapshot(const CaseBundle& bundle, const DcModel& model, std::uint64_t root_seed, int trial, bool ac) {
    const auto prior = case_prior(bundle, model);
    const Matrix l = prior.covariance.llt().matrixL();
    return draw_snapshot(bundle.grid, model, prior.mean, l, bundle.meters.variances(), trial_seed(root_seed, trial), ac);
}

ExperimentResult run_scenario(const ScenarioConfig& config) {
    config.validate();
    const Engine engine(config);
    const int width = worker_count(config);
    const auto points = config.point_count();

    std::vector<std::vector<Outcome>> per_trial(static_cast<std::size_t>(config.trials));
    std::vector<double> seconds(static_cast<std::size_t>(config.trials), -1.0);
    std::vector<WorkerCache> caches(static_cast<std::size_t>(width));
    parallel_trials(config.trials, width, [&](int t, int w) {
        double s = -1.0;
        per_trial[static_cast<std::size_t>(t)] = engine.run_trial(t, caches[static_cast<std::size_t>(w)], s);
        seconds[static_cast<std::size_t>(t)] = s;
    });

    ExperimentResult result;
    result.config = config;
    result.case_name = engine.bundle().grid.name;
    result.dof = engine.estimator().dof();
    result.threshold = engine.estimator().threshold();
    std::vector<const Outcome*> pooled;
    for (std::size_t p = 0; p < points; ++p) {
        std::vector<const Outcome*> column;
        for (const auto& trial : per_trial) column.push_back(&trial[p]);
        pooled.insert(pooled.end(), column.begin(), column.end());
        auto point = summarize(column, engine.bundle().grid);
        if (config.attack.kind == AttackKind::Meter && config.attack.model != AttackModel::M3)
            point.epsilon = config.attack.epsilon[p];
        result.points.push_back(std::move(point));
    }
    result.aggregate = summarize(pooled, engine.bundle().grid);
    for (const auto& trial : per_trial)
        for (const auto& o : trial) result.trials.push_back(o.record);
    std::vector<double> timed;
    for (double s : seconds)
        if (s >= 0) timed.push_back(s);
    result.attack_timing = timing_of(timed);
    return result;
}

std::vector<PointResult> sweep_budget(const ScenarioConfig& config, const std::vector<double>& grid) {
    if (grid.empty()) throw ModelError("budget grid is empty");
    ScenarioConfig c = config;
    c.attack.epsilon = grid;
    return run_scenario(c).points;
}

SearchComparison compare_search_methods(const ScenarioConfig& config) {
    config.validate();
    if (config.attack.kind != AttackKind::Meter) throw ModelError("search comparison needs a meter attack scenario");
    const Engine engine(config);
    const int width = worker_count(config);
    struct Row {
        bool ok = false;
        bool same = false;
        bool same_value = false;
        std::size_t candidates = 0;
        double exhaustive = 0.0;
        double greedy = 0.0;
    };
    std::vector<Row> rows(static_cast<std::size_t>(config.trials));
    parallel_trials(config.trials, width, [&](int t, int) {
        Row& row = rows[static_cast<std::size_t>(t)];
        try {
            auto d = engine.draw(t);
            auto ctx = engine.context(d.lines);
            auto in = engine.meter_inputs(d);
            in.epsilon = config.attack.epsilon.front();
            auto cands = engine.candidates(in);
            auto t0 = std::chrono::steady_clock::now();
            auto ex = worst_meter_attack(ctx, in, cands, SearchMethod::Exhaustive);
            auto t1 = std::chrono::steady_clock::now();
            auto gr = worst_meter_attack(ctx, in, cands, SearchMethod::Greedy);
            auto t2 = std::chrono::steady_clock::now();
            row.ok = true;
            row.same = ex.target == gr.target;
            row.same_value = std::abs(ex.predicted_arpp - gr.predicted_arpp) <= 1e-9;
            row.candidates = cands.lines.size();
            row.exhaustive = std::chrono::duration<double>(t1 - t0).count();
            row.greedy = std::chrono::duration<double>(t2 - t1).count();
        } catch (const std::exception&) {
            row.ok = false;
        }
    });
    SearchComparison out;
    out.trials = config.trials;
    std::vector<double> ex, gr;
    double cand = 0.0;
    int same = 0, same_value = 0;
    for (const auto& r : rows) {
        if (!r.ok) continue;
        ++out.compared;
        same += r.same;
        same_value += r.same_value;
        cand += static_cast<double>(r.candidates);
        ex.push_back(r.exhaustive);
        gr.push_back(r.greedy);
    }
    if (out.compared) {
        out.agreement = static_cast<double>(same) / out.compared;
        out.value_agreement = static_cast<double>(same_value) / out.compared;
        out.mean_candidates = cand / out.compared;
    }
    out.exhaustive = timing_of(ex);
    out.greedy = timing_of(gr);
    return out;
}

// ---------------------------------------------------------------------------
// Output files

namespace {

ordered_json point_json(const PointResult& p) {
    ordered_json j;
    j["epsilon"] = p.epsilon ? ordered_json(*p.epsilon) : ordered_json(nullptr);
    j["trials"] = p.trials;
    j["failed"] = p.failed;
    j["attacked"] = p.attacked;
    j["detected"] = p.detected;
    j["detection_probability"] = p.detection_probability;
    j["arpp_samples"] = p.samples;
    j["arpp"] = p.arpp;
    j["excluded_buses"] = p.excluded_buses;
    return j;
}

// Shortest text that reads back to the same double.
std::string csv_number(double v) {
    if (std::isnan(v)) return "";
    char buf[32];
    auto [end, ec] = std::to_chars(buf, buf + sizeof buf, v);
    return ec == std::errc() ? std::string(buf, end) : std::string("nan");
}

std::string csv_text(const std::string& s) {
    if (s.find_first_of(",\"\n") == std::string::npos) return s;
    std::string out = "\"";
    for (char c : s) {
        if (c == '"') out += '"';
        out += c;
    }
    return out + "\"";
}

}  // namespace

std::string results_json(const ExperimentResult& result) {
    ordered_json doc;
    doc["scenario"] = ordered_json::parse(result.config.to_json());
    doc["scenario"].erase("threads");   // results must not depend on it
    doc["case"] = result.case_name;
    doc["dof"] = result.dof;
    doc["threshold"] = result.threshold;
    ordered_json pts = ordered_json::array();
    for (const auto& p : result.points) pts.push_back(point_json(p));
    doc["points"] = pts;
    doc["aggregate"] = point_json(result.aggregate);
    return doc.dump(2) + "\n";
}

std::string timing_json(const ExperimentResult& result) {
    ordered_json doc{{"attack_construction_s",
                      {{"samples", result.attack_timing.samples},
                       {"mean", result.attack_timing.mean_s},
                       {"std", result.attack_timing.std_s}}}};
    return doc.dump(2) + "\n";
}

std::string trials_csv(const ExperimentResult& result) {
    std::ostringstream os;
    os << "trial,point,epsilon,seed,failed,attacked,detected,statistic,rpp,base_pattern,attacked_pattern,note\n";
    for (const auto& r : result.trials) {
        const auto& pt = result.points[static_cast<std::size_t>(r.point)];
        os << r.trial << ',' << r.point << ',' << (pt.epsilon ? csv_number(*pt.epsilon) : "") << ',' << r.seed << ','
           << r.failed << ',' << r.attacked << ',' << r.detected << ',' << csv_number(r.failed ? std::nan("") : r.statistic)
           << ',' << csv_number(r.rpp) << ',' << csv_text(r.base_pattern) << ',' << csv_text(r.attacked_pattern) << ','
           << csv_text(r.note) << '\n';
    }
    return os.str();
}

std::string curve_csv(const ExperimentResult& result) {
    std::ostringstream os;
    os << "epsilon,detection_probability,arpp,trials,arpp_samples\n";
    for (const auto& p : result.points)
        os << (p.epsilon ? csv_number(*p.epsilon) : "") << ',' << csv_number(p.detection_probability) << ','
           << csv_number(p.arpp) << ',' << p.trials << ',' << p.samples << '\n';
    return os.str();
}

void write_outputs(const ExperimentResult& result, const std::string& dir) {
    std::filesystem::create_directories(dir);
    auto put = [&](const char* name, const std::string& text) {
        const auto path = std::filesystem::path(dir) / name;
        std::ofstream out(path, std::ios::binary);
        if (!out) throw ParseError(path.string(), "cannot write");
        out << text;
    };
    put("results.json", results_json(result));
    put("trials.csv", trials_csv(result));
    put("curve.csv", curve_csv(result));
    put("timing.json", timing_json(result));
}

}  // namespace rtlmp
