#ifndef CELSIM_DISPATCH_HPP
#define CELSIM_DISPATCH_HPP

#include <limits>
#include <span>
#include <vector>

#include "celsim/aging.hpp"
#include "celsim/tariff.hpp"
#include "celsim/timeseries.hpp"

namespace celsim {

/// Capital-recovery (annuity) factor R = r(1+r)^L / ((1+r)^L - 1); 1/L at
/// r = 0.
double annuity(double rate, int years);

struct EconomicParams {
    int lifetime_years = 25;              // L
    double discount_rate = 0.03;          // r
    double pv_maintenance_frac = 0.01;    // gamma_M, share of PV capex per year
    double pv_cost_per_w = 1.05;          // C_MOD
    double pv_fixed_cost = 10049.0;       // C_FW, charged once if any PV
    double battery_cost_per_kwh = 229.0;  // C_BAT_sp
    double battery_fixed_cost = 0.0;      // C_BAT_fix
    double battery_charge_cost = 0.0;     // C_BAT_c, CHF/kWh moved
    double battery_discharge_cost = 0.0;  // C_BAT_d
    int inverter_life_years = 15;
    double inverter_cost_share = 0.40;    // of pv_fixed_cost

    double annuity_factor() const { return annuity(discount_rate, lifetime_years); }
    double pv_capex(const PvDesign& pv) const;
    double battery_capex(double e_cap_kwh) const;
};

struct BatteryDesign {
    double e_cap_kwh = 0.0;
    double p_max_charge_kw = 0.0;
    double p_max_discharge_kw = 0.0;
    double eta_charge = 0.95;
    double eta_discharge = 0.95;
    double soc_min = 0.0;
    double soc_max = 1.0;
    double soc_initial = 0.0;

    bool usable() const {
        return e_cap_kwh > 0.0 && p_max_charge_kw > 0.0 && p_max_discharge_kw > 0.0 &&
               soc_max > soc_min;
    }
    /// Capacity with the default C-rate of E/2 per hour.
    static BatteryDesign with_capacity(double e_cap_kwh);
};

/// Per-step dispatch of one building (or the virtual community building).
/// soc has n_steps+1 entries with soc[0] = the initial state.
struct DispatchPlan {
    TimeAxis axis;
    std::vector<double> import_kw;
    std::vector<double> export_kw;
    std::vector<double> charge_kw;
    std::vector<double> discharge_kw;
    std::vector<double> soc;
    PvDesign pv;
    BatteryDesign battery;

    DispatchPlan(TimeAxis ax) : axis(std::move(ax)) {}
    std::size_t n_steps() const { return import_kw.size(); }
    double net_grid_kw(std::size_t t) const { return import_kw[t] - export_kw[t]; }
};

/// Annualized cost view satisfying
///   totex = opex + R * capex
///   opex  = ox_grid_exchange + ox_battery_op + ox_pv_maintenance
///   capex = cx_pv + (L / l_bat) * cx_battery
struct CostBreakdown {
    double totex = 0.0;  // CHF/yr
    double opex = 0.0;   // CHF/yr
    double capex = 0.0;  // CHF (lifetime-scaled investment)
    double ox_grid_exchange = 0.0;
    double ox_battery_op = 0.0;
    double ox_pv_maintenance = 0.0;
    double cx_pv = 0.0;
    double cx_battery = 0.0;  // single-build battery investment
    double lifetime_years = 25.0;
    double battery_life_years = 25.0;  // L / number of battery builds
    double annuity_factor = 0.0;
};

/// Signed grid-exchange cost over the plan's horizon (imports cost,
/// exports earn), CHF. Prices are per-step series in CHF/kWh.
double grid_cost(const DispatchPlan& plan, std::span<const double> import_price_chf,
                 std::span<const double> export_price_chf);

/// Convenience overload using tariff schedules; ghi is required when the
/// import schedule is dynamic.
double grid_cost(const DispatchPlan& plan, const TariffSchedule& import_tariff,
                 const TariffSchedule& export_tariff, const Profile* ghi = nullptr);

struct DispatchResult {
    DispatchPlan plan;
    CostBreakdown cost;
    double lp_lower_bound = 0.0;  // on the operating cost, CHF
    double lp_relative_gap = 0.0;
};

struct DispatchOptions {
    double import_cap_kw = std::numeric_limits<double>::infinity();
    double lp_tolerance = 1e-9;
    AgingParams aging;
    // cost of all PV systems behind the plan; <0 derives it from plan.pv.
    // The virtual community building carries one fixed cost per member system.
    double pv_capex_override = -1.0;
};

/// Minimizes annual operating cost (grid exchange + battery operation) over
/// all feasible dispatches; battery-to-grid and grid-to-battery flows are
/// allowed. Capacities are fixed inputs; the cost breakdown scales battery
/// capex by the realized replacement count from the aging model.
DispatchResult optimize_dispatch(const Profile& load, const Profile& pv_prod,
                                 const PvDesign& pv, const BatteryDesign& battery,
                                 std::span<const double> import_price_chf,
                                 std::span<const double> export_price_chf,
                                 const EconomicParams& econ, const DispatchOptions& opts = {});

enum class SizingMode { MinTotex, MaxPv };

struct SizingOptions {
    double battery_step_kwh = 1.0;
    double battery_max_kwh = -1.0;  // <0: derived from daily consumption
    int pv_module_step = 1;
    DispatchOptions dispatch;
};

struct SizingResult {
    PvDesign pv;
    BatteryDesign battery;
    CostBreakdown cost;
};

/// Coarse-to-fine grid search over (module count, battery kWh); inner
/// evaluations run optimize_dispatch. MaxPv pins the array at the 70% roof
/// bound and sizes only the battery.
SizingResult size_building(const Profile& load, const Profile& ghi, const Profile& temp,
                           const PvDesign& pv_template, const TariffSchedule& import_tariff,
                           const TariffSchedule& export_tariff, const EconomicParams& econ,
                           SizingMode mode, const SizingOptions& opts = {});

/// Community battery capacity: the sum of per-building optima.
double community_battery_size(std::span<const BatteryDesign> per_building);

/// Element-wise sums of member load and PV profiles (the "virtual building").
std::pair<Profile, Profile> aggregate_virtual_building(std::span<const Profile> loads,
                                                       std::span<const Profile> pv_outputs);

}  // namespace celsim

#endif
