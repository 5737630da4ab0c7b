#pragma once

#include "rtlmp/types.hpp"

#include <map>
#include <optional>
#include <string>
#include <string_view>
#include <vector>

namespace rtlmp {

struct Bus {
    int id = 0;
    double load_mw = 0.0;
};

struct Branch {
    int id = 0;
    int from = 0;             // bus id
    int to = 0;               // bus id
    double reactance = 0.0;   // p.u. on the case MVA base
    double limit_mw = kInf;   // kInf when the line has no flow limit
    bool closed = true;       // breaker state s_k

    bool limited() const { return limit_mw < kInf; }
};

struct Generator {
    int bus = 0;
    double offer = 0.0;       // $/MWh
    double capacity_mw = 0.0;
};

struct DispatchableLoad {
    int bus = 0;
    double bid = 0.0;         // $/MWh
};

/// Network plus the market participants attached to it. Buses and branches
/// are kept sorted by id; internal indices are positions in those vectors.
struct PowerCase {
    std::string name;
    double base_mva = 100.0;
    int reference_bus = 0;
    std::vector<Bus> buses;
    std::vector<Branch> branches;
    std::vector<Generator> generators;
    std::vector<DispatchableLoad> loads;

    std::size_t bus_count() const { return buses.size(); }
    std::size_t branch_count() const { return branches.size(); }
    /// Number of unknown phases (reference excluded).
    std::size_t state_dim() const { return buses.empty() ? 0 : buses.size() - 1; }

    /// Internal index of a bus id; throws ModelError if absent.
    int bus_index(int bus_id) const;
    int reference_index() const { return bus_index(reference_bus); }
    /// Internal index of a branch id; throws ModelError if absent.
    int branch_index(int branch_id) const;
    /// Resolves "i-j" (either orientation, first match) or "#id".
    int find_branch(std::string_view ref) const;
    /// "i-j", or "i-j#id" when another branch shares the same endpoints.
    std::string branch_label(int index) const;
    std::vector<int> limited_branches() const;

    /// Checks every structural invariant; throws ModelError naming the element.
    void validate() const;
    /// True when the closed-breaker subgraph spans every bus.
    bool connected() const;
};

struct Bound {
    double min = 0.0;
    double max = 0.0;
};

struct MarketConfig {
    std::vector<Bound> generator_bounds;   // incremental Δp per generator, MW
    std::vector<Bound> load_bounds;        // incremental Δd per dispatchable load, MW
    double price_floor = -100.0;
    double price_ceiling = 500.0;

    void validate(const PowerCase& grid) const;
};

enum class MeterKind { Injection, Flow };

struct Meter {
    MeterKind kind = MeterKind::Injection;
    int bus = -1;        // internal bus index (injection meters)
    int branch = -1;     // internal branch index (flow meters)
    bool reverse = false;
    std::string label;
};

/// Canonical meter layout: one injection per bus (in bus order), then for
/// each branch its forward flow followed by its reverse flow.
struct MeterConfig {
    std::vector<Meter> meters;
    std::vector<double> noise_std_mw;
    std::vector<int> suspects;   // sorted meter indices

    std::size_t size() const { return meters.size(); }
    Vector variances() const;
    Matrix covariance() const;
    int injection_meter(int bus) const { return bus; }
    int flow_meter(int branch, bool reverse) const {
        return static_cast<int>(bus_meter_count) + 2 * branch + (reverse ? 1 : 0);
    }
    /// Meter index by label; throws ModelError if unknown.
    int meter_index(std::string_view label) const;

    std::size_t bus_meter_count = 0;
    std::map<std::string, int, std::less<>> label_index;
};

struct StatePrior {
    Vector mean;        // rad, reference excluded
    Matrix covariance;  // rad^2
};

/// Prior as declared in a case file. Without an explicit mean the nominal
/// dispatch state is used (see experiment.hpp).
struct PriorSpec {
    std::optional<std::vector<double>> mean_rad;
    double std_rad = 0.01;
};

struct MeasurementSpec {
    double noise_std_mw = 1.0;                      // 0.01 p.u. on a 100 MVA base
    std::map<std::string, double> meter_std_mw;    // per-label overrides
    std::string suspects = "none";                  // selector, see select_meters
};

struct CaseBundle {
    PowerCase grid;
    MarketConfig market;
    MeasurementSpec measurement;
    MeterConfig meters;
    PriorSpec prior;
};

enum class CaseFormat { Native, Matpower };

/// Builds the canonical meter set. `noise_std_mw` holds either one value
/// (applied to every meter) or one value per meter.
MeterConfig build_measurement_model(const PowerCase& grid, const std::vector<double>& noise_std_mw,
                                    const std::vector<int>& suspects = {});

/// Meter selector: "none", "all", "lines:1-3,#7" (flows on the lines plus
/// endpoint injections) or "meters:P1,P1-3". Returns sorted unique indices.
std::vector<int> select_meters(const PowerCase& grid, const MeterConfig& meters,
                               std::string_view selector);

/// Meters an attack on the given branches needs: both flows and both
/// endpoint injections of every branch.
std::vector<int> meters_of_branches(const PowerCase& grid, const MeterConfig& meters,
                                    const std::vector<int>& branches);

/// Parses a case document. For the MATPOWER subset, market, measurement and
/// prior data come from the optional JSON sidecar text.
CaseBundle parse_case(std::string_view text, CaseFormat format,
                      std::string_view sidecar = {});
/// Reads a case from disk; ".m" selects MATPOWER and picks up
/// "<stem>_market.json" next to it when present.
CaseBundle load_case(const std::string& path);
/// Serializes to the native JSON format (round-trips through parse_case).
std::string to_native_json(const CaseBundle& bundle);

/// Default incremental bounds: Δp in [-2, +0.1] MW per generator.
MarketConfig default_market(const PowerCase& grid);

}  // namespace rtlmp
