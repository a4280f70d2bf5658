#ifndef CELSIM_SCENARIO_HPP
#define CELSIM_SCENARIO_HPP

#include <map>
#include <optional>
#include <string>
#include <vector>

#include "celsim/dispatch.hpp"
#include "celsim/finance.hpp"
#include "celsim/powerflow.hpp"
#include "celsim/tariff.hpp"
#include "celsim/timeseries.hpp"

namespace celsim {

enum class Allocation { EndOfLine, Random };
enum class BatteryPlacement { None, Up, Down };
enum class InternalTariffChoice { Double, Dynamic };
enum class ExtraActor { None, LargeConsumer, LargeProducer };

struct ScenarioSpec {
    std::string id;
    bool cel = true;  // false: members operate independently (baselines)
    double member_fraction = 1.0;
    std::vector<std::string> member_ids;  // non-empty overrides member_fraction
    Allocation allocation = Allocation::EndOfLine;
    uint64_t allocation_seed = 1;
    double pv_penetration = 1.0;  // share of members hosting max-sized PV
    BatteryPlacement battery = BatteryPlacement::None;
    // central battery capacity; <= 0 sizes it as the sum of per-building
    // optima, > 0 pins it (what-if studies, oversized storage)
    double battery_kwh = 0.0;
    InternalTariffChoice internal_tariff = InternalTariffChoice::Double;
    ExtraActor extra_actor = ExtraActor::None;
    double large_consumer_mwh = 22.0;
    double large_producer_kwp = 172.3;
};

ScenarioSpec scenario_from_json(const std::string& json_text);

struct BuildingRecord {
    std::string id;
    std::string bus_id;
    double annual_load_mwh = 0.0;
    Archetype archetype = Archetype::Residential;
    double roof_area_m2 = 0.0;
    Profile load;
};

struct Dataset {
    TimeAxis axis;
    std::vector<BuildingRecord> buildings;
    Profile ghi;
    Profile temperature;
    LvNetwork network;
    TariffSet tariffs;
    EconomicParams econ;
    AgingParams aging;
    PvDesign pv_template;  // module parameters; count and roof set per building
    uint64_t seed = 1;

    std::size_t building_index(const std::string& id) const;
};

struct DatasetPaths {
    std::string network;
    std::string tariffs;
    std::string buildings;
    std::string profiles_dir;  // optional CSV overrides: <id>.csv, ghi.csv, temperature.csv
    int year = 2025;
    uint64_t seed = 1;
    // optional JSON files with econ/aging/battery/pv parameter overrides
    std::string params;
};

Dataset load_dataset(const DatasetPaths& paths);

/// Members chosen per the allocation rule. end_of_line ranks buildings by the
/// electrical distance of their bus (farthest first); random draws a seeded
/// uniform sample. Member count = floor(fraction * buildings).
std::vector<std::size_t> select_members(const Dataset& data, const ScenarioSpec& spec);

struct MemberState {
    std::size_t building = 0;
    bool has_pv = false;
    PvDesign pv;
    Profile pv_output;
    double battery_optimum_kwh = 0.0;
};

struct KpiReport {
    std::string scenario_id;
    std::vector<std::string> member_ids;
    double pv_kwp = 0.0;
    double battery_kwh = 0.0;

    CostBreakdown cost;
    double lcoe_chf_kwh = 0.0;
    double irr_pct = 0.0;
    bool irr_defined = false;
    bool irr_multiple_roots = false;
    double profit_chf = 0.0;
    double dpp_years = -1.0;

    double bill_no_cel_chf = 0.0;
    double bill_cel_chf = 0.0;
    double revenue_loss_chf = 0.0;
    double revenue_loss_pct = 0.0;

    double internal_exchange_mwh = 0.0;
    double imports_mwh = 0.0;
    double exports_mwh = 0.0;
    double self_consumed_mwh = 0.0;
    double pv_generation_mwh = 0.0;
    double load_mwh = 0.0;

    YearKpis technical;
    YearKpis technical_baseline;  // members at max PV, no battery, no CEL

    std::vector<std::string> bill_rows;         // member ids + battery actor
    std::vector<BillBreakdown> bills_cel;
    std::vector<BillBreakdown> bills_no_cel;
};

struct ScenarioResult {
    KpiReport kpi;
    ExchangeSettlement settlement;
    DispatchPlan community_plan;
    FlowSeries flows;
    std::vector<MemberState> members;
};

/// Memoizes per-building battery optima across scenario runs (they depend
/// only on the building, its PV state and the dataset).
struct SizingCache {
    std::map<std::pair<std::string, bool>, double> battery_kwh;
};

/// Full pipeline: member selection, max-PV sizing, per-building battery
/// optima summed into the central battery, community dispatch, settlement,
/// nodal power flow and KPI assembly. Deterministic for a fixed dataset seed.
ScenarioResult run_scenario(const ScenarioSpec& spec, const Dataset& data, int n_threads = 0,
                            SizingCache* cache = nullptr);

/// PV-equipment order for the exchange-vs-ratio sweep: the community is the
/// fixed member list; point k equips the first k members with max-sized PV.
struct SweepSpec {
    std::vector<std::string> member_order;
    bool with_central_battery = false;
};

SweepSpec sweep_from_json_file(const std::string& path);

struct SweepPoint {
    std::size_t n_pv_equipped = 0;
    double pv_to_load_ratio = 0.0;
    double exchanged_mwh = 0.0;
    double battery_kwh = 0.0;
};

std::vector<SweepPoint> ratio_sweep(const SweepSpec& sweep, const Dataset& data,
                                    int n_threads = 0);

/// kpi.json payload for one scenario.
std::string kpi_to_json(const KpiReport& kpi, const LvNetwork& net);

}  // namespace celsim

#endif
