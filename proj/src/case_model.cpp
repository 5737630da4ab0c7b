#include "rtlmp/case_model.hpp"

#include "json.hpp"

#include <algorithm>
#include <cctype>
#include <charconv>
#include <fstream>
#include <numeric>
#include <set>
#include <sstream>

namespace rtlmp {

using nlohmann::json;
using nlohmann::ordered_json;

namespace detail {
PowerCase parse_matpower_grid(std::string_view text);
void apply_market_json(CaseBundle& bundle, const json& doc, const std::string& path);
}  // namespace detail

// ---------------------------------------------------------------------------
// PowerCase

int PowerCase::bus_index(int bus_id) const {
    auto it = std::lower_bound(buses.begin(), buses.end(), bus_id,
                               [](const Bus& b, int id) { return b.id < id; });
    if (it == buses.end() || it->id != bus_id)
        throw ModelError("unknown bus " + std::to_string(bus_id));
    return static_cast<int>(it - buses.begin());
}

int PowerCase::branch_index(int branch_id) const {
    auto it = std::lower_bound(branches.begin(), branches.end(), branch_id,
                               [](const Branch& b, int id) { return b.id < id; });
    if (it == branches.end() || it->id != branch_id)
        throw ModelError("unknown branch " + std::to_string(branch_id));
    return static_cast<int>(it - branches.begin());
}

namespace {

int to_int(std::string_view s, const std::string& context) {
    int value = 0;
    auto [ptr, ec] = std::from_chars(s.data(), s.data() + s.size(), value);
    if (ec != std::errc() || ptr != s.data() + s.size())
        throw ModelError("bad integer '" + std::string(s) + "' in " + context);
    return value;
}

std::string_view trim(std::string_view s) {
    while (!s.empty() && std::isspace(static_cast<unsigned char>(s.front()))) s.remove_prefix(1);
    while (!s.empty() && std::isspace(static_cast<unsigned char>(s.back()))) s.remove_suffix(1);
    return s;
}

std::vector<std::string_view> split(std::string_view s, char sep) {
    std::vector<std::string_view> out;
    std::size_t start = 0;
    while (start <= s.size()) {
        auto pos = s.find(sep, start);
        if (pos == std::string_view::npos) pos = s.size();
        auto item = trim(s.substr(start, pos - start));
        if (!item.empty()) out.push_back(item);
        start = pos + 1;
    }
    return out;
}

}  // namespace

int PowerCase::find_branch(std::string_view ref) const {
    ref = trim(ref);
    if (!ref.empty() && ref.front() == '#') return branch_index(to_int(ref.substr(1), "branch ref"));
    auto hash = ref.find('#');
    if (hash != std::string_view::npos) return branch_index(to_int(ref.substr(hash + 1), "branch ref"));
    auto dash = ref.find('-');
    if (dash == std::string_view::npos) throw ModelError("bad branch reference '" + std::string(ref) + "'");
    int a = to_int(trim(ref.substr(0, dash)), "branch ref");
    int b = to_int(trim(ref.substr(dash + 1)), "branch ref");
    for (std::size_t k = 0; k < branches.size(); ++k) {
        const auto& br = branches[k];
        if ((br.from == a && br.to == b) || (br.from == b && br.to == a)) return static_cast<int>(k);
    }
    throw ModelError("no branch between buses " + std::to_string(a) + " and " + std::to_string(b));
}

std::string PowerCase::branch_label(int index) const {
    const auto& br = branches.at(index);
    std::string label = std::to_string(br.from) + "-" + std::to_string(br.to);
    for (std::size_t k = 0; k < branches.size(); ++k) {
        if (static_cast<int>(k) == index) continue;
        const auto& o = branches[k];
        if ((o.from == br.from && o.to == br.to) || (o.from == br.to && o.to == br.from))
            return label + "#" + std::to_string(br.id);
    }
    return label;
}

std::vector<int> PowerCase::limited_branches() const {
    std::vector<int> out;
    for (std::size_t k = 0; k < branches.size(); ++k)
        if (branches[k].limited()) out.push_back(static_cast<int>(k));
    return out;
}

void PowerCase::validate() const {
    if (buses.empty()) throw ModelError("case has no buses");
    for (std::size_t i = 1; i < buses.size(); ++i)
        if (buses[i].id == buses[i - 1].id)
            throw ModelError("duplicate bus id " + std::to_string(buses[i].id));
    for (std::size_t k = 1; k < branches.size(); ++k)
        if (branches[k].id == branches[k - 1].id)
            throw ModelError("duplicate branch id " + std::to_string(branches[k].id));
    if (!(base_mva > 0)) throw ModelError("base_mva must be positive");
    try {
        bus_index(reference_bus);
    } catch (const ModelError&) {
        throw ModelError("reference bus " + std::to_string(reference_bus) + " does not exist");
    }
    for (const auto& br : branches) {
        const std::string name = "branch " + std::to_string(br.id);
        for (int end : {br.from, br.to}) {
            if (!std::binary_search(buses.begin(), buses.end(), Bus{end, 0.0},
                                    [](const Bus& a, const Bus& b) { return a.id < b.id; }))
                throw ModelError(name + " references nonexistent bus " + std::to_string(end));
        }
        if (br.from == br.to) throw ModelError(name + " is a self loop");
        if (!(br.reactance > 0)) throw ModelError(name + " has nonpositive reactance");
        if (!(br.limit_mw > 0)) throw ModelError(name + " has nonpositive flow limit");
    }
    for (std::size_t g = 0; g < generators.size(); ++g) {
        const auto& gen = generators[g];
        try {
            bus_index(gen.bus);
        } catch (const ModelError&) {
            throw ModelError("generator " + std::to_string(g) + " at nonexistent bus " + std::to_string(gen.bus));
        }
        if (gen.capacity_mw < 0) throw ModelError("generator " + std::to_string(g) + " has negative capacity");
    }
    for (std::size_t l = 0; l < loads.size(); ++l) {
        try {
            bus_index(loads[l].bus);
        } catch (const ModelError&) {
            throw ModelError("dispatchable load " + std::to_string(l) + " at nonexistent bus " +
                             std::to_string(loads[l].bus));
        }
    }
    if (!connected()) throw ModelError("closed-breaker network is disconnected");
}

bool PowerCase::connected() const {
    if (buses.empty()) return false;
    std::vector<std::vector<int>> adj(buses.size());
    for (const auto& br : branches) {
        if (!br.closed) continue;
        int a = bus_index(br.from), b = bus_index(br.to);
        adj[a].push_back(b);
        adj[b].push_back(a);
    }
    std::vector<char> seen(buses.size(), 0);
    std::vector<int> stack{0};
    seen[0] = 1;
    std::size_t count = 1;
    while (!stack.empty()) {
        int u = stack.back();
        stack.pop_back();
        for (int v : adj[u])
            if (!seen[v]) {
                seen[v] = 1;
                ++count;
                stack.push_back(v);
            }
    }
    return count == buses.size();
}

void MarketConfig::validate(const PowerCase& grid) const {
    if (generator_bounds.size() != grid.generators.size())
        throw ModelError("market has " + std::to_string(generator_bounds.size()) + " generator bounds for " +
                         std::to_string(grid.generators.size()) + " generators");
    if (load_bounds.size() != grid.loads.size())
        throw ModelError("market load bounds do not match dispatchable loads");
    for (std::size_t g = 0; g < generator_bounds.size(); ++g)
        if (!(generator_bounds[g].min <= generator_bounds[g].max))
            throw ModelError("generator " + std::to_string(g) + " has dp_min > dp_max");
    for (std::size_t l = 0; l < load_bounds.size(); ++l)
        if (!(load_bounds[l].min <= load_bounds[l].max))
            throw ModelError("dispatchable load " + std::to_string(l) + " has dd_min > dd_max");
    if (!(price_floor < price_ceiling)) throw ModelError("price floor must be below price ceiling");
}

MarketConfig default_market(const PowerCase& grid) {
    MarketConfig market;
    market.generator_bounds.assign(grid.generators.size(), Bound{-2.0, 0.1});
    market.load_bounds.assign(grid.loads.size(), Bound{0.0, 0.0});
    return market;
}

// ---------------------------------------------------------------------------
// Meters

Vector MeterConfig::variances() const {
    Vector v(static_cast<Eigen::Index>(noise_std_mw.size()));
    for (std::size_t i = 0; i < noise_std_mw.size(); ++i) v[i] = noise_std_mw[i] * noise_std_mw[i];
    return v;
}

Matrix MeterConfig::covariance() const { return variances().asDiagonal(); }

int MeterConfig::meter_index(std::string_view label) const {
    auto it = label_index.find(trim(label));
    if (it == label_index.end()) throw ModelError("unknown meter '" + std::string(label) + "'");
    return it->second;
}

MeterConfig build_measurement_model(const PowerCase& grid, const std::vector<double>& noise_std_mw,
                                    const std::vector<int>& suspects) {
    MeterConfig cfg;
    cfg.bus_meter_count = grid.bus_count();
    for (std::size_t i = 0; i < grid.bus_count(); ++i) {
        Meter m;
        m.kind = MeterKind::Injection;
        m.bus = static_cast<int>(i);
        m.label = "P" + std::to_string(grid.buses[i].id);
        cfg.meters.push_back(std::move(m));
    }
    for (std::size_t k = 0; k < grid.branch_count(); ++k) {
        const auto& br = grid.branches[k];
        std::string label = grid.branch_label(static_cast<int>(k));
        std::string suffix = label.find('#') != std::string::npos ? label.substr(label.find('#')) : "";
        for (bool reverse : {false, true}) {
            Meter m;
            m.kind = MeterKind::Flow;
            m.branch = static_cast<int>(k);
            m.reverse = reverse;
            int a = reverse ? br.to : br.from;
            int b = reverse ? br.from : br.to;
            m.label = "P" + std::to_string(a) + "-" + std::to_string(b) + suffix;
            cfg.meters.push_back(std::move(m));
        }
    }
    if (cfg.meters.empty()) throw ModelError("empty meter set");
    const std::size_t m = cfg.meters.size();
    if (noise_std_mw.size() == 1) {
        cfg.noise_std_mw.assign(m, noise_std_mw.front());
    } else if (noise_std_mw.size() == m) {
        cfg.noise_std_mw = noise_std_mw;
    } else {
        throw ModelError("noise std list has " + std::to_string(noise_std_mw.size()) + " entries for " +
                         std::to_string(m) + " meters");
    }
    for (std::size_t i = 0; i < m; ++i)
        if (!(cfg.noise_std_mw[i] > 0)) throw ModelError("meter " + cfg.meters[i].label + " has nonpositive noise std");
    for (std::size_t i = 0; i < m; ++i) cfg.label_index.emplace(cfg.meters[i].label, static_cast<int>(i));

    cfg.suspects = suspects;
    std::sort(cfg.suspects.begin(), cfg.suspects.end());
    cfg.suspects.erase(std::unique(cfg.suspects.begin(), cfg.suspects.end()), cfg.suspects.end());
    for (int s : cfg.suspects)
        if (s < 0 || static_cast<std::size_t>(s) >= m) throw ModelError("suspect meter index out of range");
    return cfg;
}

std::vector<int> meters_of_branches(const PowerCase& grid, const MeterConfig& meters,
                                    const std::vector<int>& branches) {
    std::set<int> out;
    for (int k : branches) {
        const auto& br = grid.branches.at(k);
        out.insert(meters.flow_meter(k, false));
        out.insert(meters.flow_meter(k, true));
        out.insert(meters.injection_meter(grid.bus_index(br.from)));
        out.insert(meters.injection_meter(grid.bus_index(br.to)));
    }
    return {out.begin(), out.end()};
}

std::vector<int> select_meters(const PowerCase& grid, const MeterConfig& meters, std::string_view selector) {
    selector = trim(selector);
    if (selector.empty() || selector == "none") return {};
    if (selector == "all") {
        std::vector<int> all(meters.size());
        std::iota(all.begin(), all.end(), 0);
        return all;
    }
    auto colon = selector.find(':');
    if (colon == std::string_view::npos) throw ModelError("bad meter selector '" + std::string(selector) + "'");
    auto kind = selector.substr(0, colon);
    auto items = split(selector.substr(colon + 1), ',');
    if (kind == "lines") {
        std::vector<int> branches;
        for (auto item : items) branches.push_back(grid.find_branch(item));
        return meters_of_branches(grid, meters, branches);
    }
    if (kind == "meters") {
        std::set<int> out;
        for (auto item : items) out.insert(meters.meter_index(item));
        return {out.begin(), out.end()};
    }
    throw ModelError("unknown selector kind '" + std::string(kind) + "'");
}

// ---------------------------------------------------------------------------
// Native JSON

namespace {

template <class T>
T field(const json& obj, const char* key, const std::string& path) {
    auto it = obj.find(key);
    if (it == obj.end()) throw ParseError(path + "/" + key, "missing field");
    try {
        return it->get<T>();
    } catch (const json::exception& e) {
        throw ParseError(path + "/" + key, e.what());
    }
}

template <class T>
T field_or(const json& obj, const char* key, T fallback, const std::string& path) {
    auto it = obj.find(key);
    if (it == obj.end() || it->is_null()) return fallback;
    try {
        return it->get<T>();
    } catch (const json::exception& e) {
        throw ParseError(path + "/" + key, e.what());
    }
}

json parse_json_text(std::string_view text, const std::string& what) {
    try {
        return json::parse(text.begin(), text.end());
    } catch (const json::parse_error& e) {
        std::size_t line = 1 + static_cast<std::size_t>(
                                   std::count(text.begin(), text.begin() + std::min(e.byte, text.size()), '\n'));
        throw ParseError(what + " line " + std::to_string(line), e.what());
    }
}

void finalize(CaseBundle& bundle) {
    auto& grid = bundle.grid;
    std::sort(grid.buses.begin(), grid.buses.end(), [](const Bus& a, const Bus& b) { return a.id < b.id; });
    std::sort(grid.branches.begin(), grid.branches.end(),
              [](const Branch& a, const Branch& b) { return a.id < b.id; });
    grid.validate();
    bundle.market.validate(grid);

    MeterConfig base = build_measurement_model(grid, {bundle.measurement.noise_std_mw});
    std::vector<double> stds = base.noise_std_mw;
    for (const auto& [label, value] : bundle.measurement.meter_std_mw) stds.at(base.meter_index(label)) = value;
    bundle.meters = build_measurement_model(grid, stds);
    bundle.meters.suspects = select_meters(grid, bundle.meters, bundle.measurement.suspects);

    if (bundle.prior.mean_rad && bundle.prior.mean_rad->size() != grid.state_dim())
        throw ModelError("prior mean has " + std::to_string(bundle.prior.mean_rad->size()) + " entries, expected " +
                         std::to_string(grid.state_dim()));
    if (!(bundle.prior.std_rad >= 0)) throw ModelError("prior std must be nonnegative");
}

}  // namespace

namespace detail {

void apply_market_json(CaseBundle& bundle, const json& doc, const std::string& path) {
    auto& grid = bundle.grid;
    if (doc.contains("name")) grid.name = field<std::string>(doc, "name", path);

    if (doc.contains("generators")) {
        grid.generators.clear();
        bundle.market.generator_bounds.clear();
        const auto& gens = doc.at("generators");
        for (std::size_t g = 0; g < gens.size(); ++g) {
            const std::string p = path + "/generators/" + std::to_string(g);
            const auto& item = gens[g];
            Generator gen;
            gen.bus = field<int>(item, "bus", p);
            gen.offer = field<double>(item, "offer", p);
            gen.capacity_mw = field_or<double>(item, "capacity_mw", 0.0, p);
            grid.generators.push_back(gen);
            bundle.market.generator_bounds.push_back(
                {field_or<double>(item, "dp_min", -2.0, p), field_or<double>(item, "dp_max", 0.1, p)});
        }
    }
    if (doc.contains("dispatchable_loads")) {
        grid.loads.clear();
        bundle.market.load_bounds.clear();
        const auto& loads = doc.at("dispatchable_loads");
        for (std::size_t l = 0; l < loads.size(); ++l) {
            const std::string p = path + "/dispatchable_loads/" + std::to_string(l);
            DispatchableLoad load{field<int>(loads[l], "bus", p), field<double>(loads[l], "bid", p)};
            grid.loads.push_back(load);
            bundle.market.load_bounds.push_back(
                {field_or<double>(loads[l], "dd_min", 0.0, p), field_or<double>(loads[l], "dd_max", 0.0, p)});
        }
    }
    if (doc.contains("branch_limits")) {
        // Only the listed lines carry a limit.
        for (auto& br : grid.branches) br.limit_mw = kInf;
        for (const auto& [ref, value] : doc.at("branch_limits").items()) {
            int k = grid.find_branch(ref);
            if (!value.is_number()) throw ParseError(path + "/branch_limits/" + ref, "limit must be a number");
            grid.branches[k].limit_mw = value.get<double>();
        }
    }
    if (doc.contains("market")) {
        const auto& mk = doc.at("market");
        bundle.market.price_floor = field_or<double>(mk, "price_floor", -100.0, path + "/market");
        bundle.market.price_ceiling = field_or<double>(mk, "price_ceiling", 500.0, path + "/market");
    }
    if (doc.contains("measurement")) {
        const auto& ms = doc.at("measurement");
        const std::string p = path + "/measurement";
        bundle.measurement.noise_std_mw = field_or<double>(ms, "noise_std_mw", 1.0, p);
        bundle.measurement.meter_std_mw =
            field_or<std::map<std::string, double>>(ms, "meter_std_mw", {}, p);
        bundle.measurement.suspects = field_or<std::string>(ms, "suspects", "none", p);
    }
    if (doc.contains("prior")) {
        const auto& pr = doc.at("prior");
        const std::string p = path + "/prior";
        if (pr.contains("mean_rad") && !pr.at("mean_rad").is_null())
            bundle.prior.mean_rad = field<std::vector<double>>(pr, "mean_rad", p);
        bundle.prior.std_rad = field_or<double>(pr, "std_rad", 0.01, p);
    }
}

}  // namespace detail

namespace {

CaseBundle parse_native(std::string_view text) {
    const json doc = parse_json_text(text, "case");
    if (!doc.is_object()) throw ParseError("case", "top level must be an object");
    CaseBundle bundle;
    auto& grid = bundle.grid;
    grid.name = field_or<std::string>(doc, "name", "", "");
    grid.base_mva = field_or<double>(doc, "base_mva", 100.0, "");
    grid.reference_bus = field<int>(doc, "reference_bus", "");

    const auto& buses = doc.at("buses");
    for (std::size_t i = 0; i < buses.size(); ++i) {
        const std::string p = "/buses/" + std::to_string(i);
        grid.buses.push_back({field<int>(buses[i], "id", p), field_or<double>(buses[i], "load_mw", 0.0, p)});
    }
    if (doc.contains("branches")) {
        const auto& branches = doc.at("branches");
        for (std::size_t k = 0; k < branches.size(); ++k) {
            const std::string p = "/branches/" + std::to_string(k);
            Branch br;
            br.id = field_or<int>(branches[k], "id", static_cast<int>(k) + 1, p);
            br.from = field<int>(branches[k], "from", p);
            br.to = field<int>(branches[k], "to", p);
            br.reactance = field<double>(branches[k], "x", p);
            br.limit_mw = field_or<double>(branches[k], "limit_mw", kInf, p);
            br.closed = field_or<bool>(branches[k], "closed", true, p);
            grid.branches.push_back(br);
        }
    }
    json market_part = doc;
    market_part.erase("branch_limits");
    detail::apply_market_json(bundle, market_part, "");
    finalize(bundle);
    return bundle;
}

}  // namespace

CaseBundle parse_case(std::string_view text, CaseFormat format, std::string_view sidecar) {
    if (format == CaseFormat::Native) return parse_native(text);

    CaseBundle bundle;
    bundle.grid = detail::parse_matpower_grid(text);
    bundle.market = default_market(bundle.grid);
    if (!sidecar.empty()) detail::apply_market_json(bundle, parse_json_text(sidecar, "sidecar"), "sidecar");
    finalize(bundle);
    return bundle;
}

namespace {
std::string read_file(const std::string& path) {
    std::ifstream in(path, std::ios::binary);
    if (!in) throw ParseError(path, "cannot open file");
    std::ostringstream ss;
    ss << in.rdbuf();
    return ss.str();
}
}  // namespace

CaseBundle load_case(const std::string& path) {
    const bool matpower = path.size() > 2 && path.compare(path.size() - 2, 2, ".m") == 0;
    const std::string text = read_file(path);
    if (!matpower) return parse_case(text, CaseFormat::Native);
    const std::string sidecar_path = path.substr(0, path.size() - 2) + "_market.json";
    std::string sidecar;
    if (std::ifstream(sidecar_path)) sidecar = read_file(sidecar_path);
    return parse_case(text, CaseFormat::Matpower, sidecar);
}

std::string to_native_json(const CaseBundle& bundle) {
    const auto& grid = bundle.grid;
    ordered_json doc;
    doc["name"] = grid.name;
    doc["base_mva"] = grid.base_mva;
    doc["reference_bus"] = grid.reference_bus;
    doc["buses"] = ordered_json::array();
    for (const auto& b : grid.buses) doc["buses"].push_back({{"id", b.id}, {"load_mw", b.load_mw}});
    doc["branches"] = ordered_json::array();
    for (const auto& br : grid.branches) {
        ordered_json item{{"id", br.id}, {"from", br.from}, {"to", br.to}, {"x", br.reactance}};
        if (br.limited()) item["limit_mw"] = br.limit_mw;
        item["closed"] = br.closed;
        doc["branches"].push_back(item);
    }
    doc["generators"] = ordered_json::array();
    for (std::size_t g = 0; g < grid.generators.size(); ++g) {
        const auto& gen = grid.generators[g];
        doc["generators"].push_back({{"bus", gen.bus},
                                     {"offer", gen.offer},
                                     {"capacity_mw", gen.capacity_mw},
                                     {"dp_min", bundle.market.generator_bounds[g].min},
                                     {"dp_max", bundle.market.generator_bounds[g].max}});
    }
    doc["dispatchable_loads"] = ordered_json::array();
    for (std::size_t l = 0; l < grid.loads.size(); ++l)
        doc["dispatchable_loads"].push_back({{"bus", grid.loads[l].bus},
                                             {"bid", grid.loads[l].bid},
                                             {"dd_min", bundle.market.load_bounds[l].min},
                                             {"dd_max", bundle.market.load_bounds[l].max}});
    doc["market"] = {{"price_floor", bundle.market.price_floor}, {"price_ceiling", bundle.market.price_ceiling}};
    ordered_json meter_std = ordered_json::object();
    for (const auto& [label, value] : bundle.measurement.meter_std_mw) meter_std[label] = value;
    doc["measurement"] = {{"noise_std_mw", bundle.measurement.noise_std_mw},
                          {"meter_std_mw", meter_std},
                          {"suspects", bundle.measurement.suspects}};
    ordered_json prior{{"std_rad", bundle.prior.std_rad}};
    if (bundle.prior.mean_rad) prior["mean_rad"] = *bundle.prior.mean_rad;
    doc["prior"] = prior;
    return doc.dump(2) + "\n";
}

}  // namespace rtlmp
