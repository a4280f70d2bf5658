#include "celsim/dispatch.hpp"

#include <algorithm>
#include <cmath>
#include <functional>
#include <map>
#include <stdexcept>

#include "celsim/dispatch_lp.hpp"

namespace celsim {

double annuity(double rate, int years) {
    if (years < 1) throw std::invalid_argument("annuity needs years >= 1");
    if (rate < 0.0) throw std::invalid_argument("annuity needs rate >= 0");
    if (rate == 0.0) return 1.0 / years;
    double q = std::pow(1.0 + rate, years);
    return rate * q / (q - 1.0);
}

double EconomicParams::pv_capex(const PvDesign& pv) const {
    if (pv.module_count <= 0) return 0.0;
    return pv.module_count * pv.module_power_w * pv_cost_per_w + pv_fixed_cost;
}

double EconomicParams::battery_capex(double e_cap_kwh) const {
    if (e_cap_kwh <= 0.0) return 0.0;
    return e_cap_kwh * battery_cost_per_kwh + battery_fixed_cost;
}

BatteryDesign BatteryDesign::with_capacity(double e_cap_kwh) {
    BatteryDesign b;
    b.e_cap_kwh = e_cap_kwh;
    b.p_max_charge_kw = e_cap_kwh / 2.0;
    b.p_max_discharge_kw = e_cap_kwh / 2.0;
    return b;
}

double grid_cost(const DispatchPlan& plan, std::span<const double> import_price_chf,
                 std::span<const double> export_price_chf) {
    if (import_price_chf.size() != plan.n_steps() || export_price_chf.size() != plan.n_steps())
        throw std::invalid_argument("price series does not match plan horizon");
    const double ts = plan.axis.step_hours();
    double cost = 0.0;
    for (std::size_t t = 0; t < plan.n_steps(); ++t)
        cost += (plan.import_kw[t] * import_price_chf[t] -
                 plan.export_kw[t] * export_price_chf[t]) *
                ts;
    return cost;
}

double grid_cost(const DispatchPlan& plan, const TariffSchedule& import_tariff,
                 const TariffSchedule& export_tariff, const Profile* ghi) {
    auto imp = import_tariff.import_price_series_chf(plan.axis, ghi);
    std::vector<double> exp(plan.n_steps(), export_tariff.price_export() / 100.0);
    return grid_cost(plan, imp, exp);
}

namespace {

double battery_op_cost(const DispatchPlan& plan, const EconomicParams& econ) {
    const double ts = plan.axis.step_hours();
    double cost = 0.0;
    for (std::size_t t = 0; t < plan.n_steps(); ++t)
        cost += (plan.charge_kw[t] * econ.battery_charge_cost +
                 plan.discharge_kw[t] * econ.battery_discharge_cost) *
                ts;
    return cost;
}

CostBreakdown make_breakdown(const DispatchPlan& plan, const EconomicParams& econ,
                             const AgingParams& aging, double ox_ge, double pv_capex_override) {
    CostBreakdown c;
    c.lifetime_years = econ.lifetime_years;
    c.annuity_factor = econ.annuity_factor();
    c.ox_grid_exchange = ox_ge;
    c.ox_battery_op = battery_op_cost(plan, econ);
    c.cx_pv = pv_capex_override >= 0.0 ? pv_capex_override : econ.pv_capex(plan.pv);
    c.ox_pv_maintenance = econ.pv_maintenance_frac * c.cx_pv;
    c.cx_battery = econ.battery_capex(plan.battery.e_cap_kwh);

    auto sched = replacement_schedule(plan.soc, plan.battery.e_cap_kwh, c.cx_pv, econ, aging);
    c.battery_life_years = sched.battery_life_years;

    c.opex = c.ox_grid_exchange + c.ox_battery_op + c.ox_pv_maintenance;
    c.capex = c.cx_pv + (c.lifetime_years / c.battery_life_years) * c.cx_battery;
    c.totex = c.opex + c.annuity_factor * c.capex;
    return c;
}

DispatchPlan passthrough_plan(const Profile& load, const Profile& pv_prod, const PvDesign& pv,
                              const BatteryDesign& battery) {
    DispatchPlan plan(load.axis);
    std::size_t n = load.size();
    plan.import_kw.resize(n);
    plan.export_kw.resize(n);
    plan.charge_kw.assign(n, 0.0);
    plan.discharge_kw.assign(n, 0.0);
    plan.soc.assign(n + 1, battery.soc_initial);
    for (std::size_t t = 0; t < n; ++t) {
        double r = load[t] - pv_prod[t];
        plan.import_kw[t] = std::max(r, 0.0);
        plan.export_kw[t] = std::max(-r, 0.0);
    }
    plan.pv = pv;
    plan.battery = battery;
    return plan;
}

}  // namespace

DispatchResult optimize_dispatch(const Profile& load, const Profile& pv_prod,
                                 const PvDesign& pv, const BatteryDesign& battery,
                                 std::span<const double> import_price_chf,
                                 std::span<const double> export_price_chf,
                                 const EconomicParams& econ, const DispatchOptions& opts) {
    require_same_axis(load, pv_prod);
    const std::size_t n = load.size();
    if (import_price_chf.size() != n || export_price_chf.size() != n)
        throw std::invalid_argument("price series does not match profile horizon");

    if (!battery.usable()) {
        if (std::isfinite(opts.import_cap_kw)) {
            for (std::size_t t = 0; t < n; ++t)
                if (load[t] - pv_prod[t] > opts.import_cap_kw + 1e-9)
                    throw std::runtime_error("dispatch infeasible at step " + std::to_string(t) +
                                             ": deficit exceeds import cap and no battery");
        }
        DispatchResult res{passthrough_plan(load, pv_prod, pv, battery), {}, 0.0, 0.0};
        double ox_ge = grid_cost(res.plan, import_price_chf, export_price_chf);
        res.cost = make_breakdown(res.plan, econ, opts.aging, ox_ge, opts.pv_capex_override);
        res.lp_lower_bound = ox_ge;  // passthrough is exactly optimal without storage
        return res;
    }

    lp::DispatchLpProblem p;
    p.ts_hours = load.axis.step_hours();
    p.residual_kw.resize(n);
    for (std::size_t t = 0; t < n; ++t) p.residual_kw[t] = load[t] - pv_prod[t];
    p.import_price.assign(import_price_chf.begin(), import_price_chf.end());
    p.export_price.assign(export_price_chf.begin(), export_price_chf.end());
    p.e_cap_kwh = battery.e_cap_kwh;
    p.eta_charge = battery.eta_charge;
    p.eta_discharge = battery.eta_discharge;
    p.p_max_charge_kw = battery.p_max_charge_kw;
    p.p_max_discharge_kw = battery.p_max_discharge_kw;
    p.soc_min = battery.soc_min;
    p.soc_max = battery.soc_max;
    p.soc_initial = battery.soc_initial;
    p.charge_cost = econ.battery_charge_cost;
    p.discharge_cost = econ.battery_discharge_cost;
    p.import_cap_kw = opts.import_cap_kw;
    p.tolerance = opts.lp_tolerance;

    lp::DispatchLpSolution sol = solve_dispatch_lp(p);

    DispatchPlan plan(load.axis);
    plan.import_kw = std::move(sol.import_kw);
    plan.export_kw = std::move(sol.export_kw);
    plan.charge_kw = std::move(sol.charge_kw);
    plan.discharge_kw = std::move(sol.discharge_kw);
    plan.soc = std::move(sol.soc);
    plan.pv = pv;
    plan.battery = battery;

    DispatchResult res{std::move(plan), {}, sol.lower_bound, sol.relative_gap};
    double ox_ge = grid_cost(res.plan, import_price_chf, export_price_chf);
    res.cost = make_breakdown(res.plan, econ, opts.aging, ox_ge, opts.pv_capex_override);
    return res;
}

namespace {

struct SizingEvaluator {
    const Profile& load;
    const PvDesign& pv_template;
    Profile per_module;  // production of a single module
    std::vector<double> import_price;
    std::vector<double> export_price;
    const EconomicParams& econ;
    const SizingOptions& opts;
    std::map<std::pair<int, int>, double> memo;  // (modules, kwh) -> totex

    PvDesign design_for(int modules) const {
        PvDesign d = pv_template;
        d.module_count = modules;
        return d;
    }

    Profile production_for(int modules) const {
        std::vector<double> v(per_module.size());
        for (std::size_t t = 0; t < v.size(); ++t) v[t] = modules * per_module[t];
        return Profile(per_module.axis, Unit::KW, std::move(v));
    }

    double totex(int modules, int battery_kwh) {
        auto key = std::make_pair(modules, battery_kwh);
        auto it = memo.find(key);
        if (it != memo.end()) return it->second;
        PvDesign pv = design_for(modules);
        BatteryDesign bat = BatteryDesign::with_capacity(battery_kwh);
        Profile prod = production_for(modules);
        DispatchResult r = optimize_dispatch(load, prod, pv, bat, import_price, export_price,
                                             econ, opts.dispatch);
        memo[key] = r.cost.totex;
        return r.cost.totex;
    }
};

// Coarse-to-fine lattice minimization on [lo, hi]; robust to the mild
// non-convexity of the sizing surface.
int refine_minimize(int lo, int hi, const std::function<double(int)>& f) {
    int best = lo;
    double best_v = f(lo);
    int step = std::max(1, (hi - lo) / 8);
    for (int x = lo + step; x <= hi; x += step) {
        double v = f(x);
        if (v < best_v) {
            best_v = v;
            best = x;
        }
    }
    while (step > 1) {
        int next = std::max(1, step / 2);
        int wlo = std::max(lo, best - step);
        int whi = std::min(hi, best + step);
        for (int x = wlo; x <= whi; x += next) {
            double v = f(x);
            if (v < best_v) {
                best_v = v;
                best = x;
            }
        }
        step = next;
    }
    return best;
}

}  // namespace

SizingResult size_building(const Profile& load, const Profile& ghi, const Profile& temp,
                           const PvDesign& pv_template, const TariffSchedule& import_tariff,
                           const TariffSchedule& export_tariff, const EconomicParams& econ,
                           SizingMode mode, const SizingOptions& opts) {
    require_same_axis(load, ghi);
    require_same_axis(ghi, temp);

    int max_modules = PvDesign::max_modules(pv_template.roof_area_m2, pv_template.module_area_m2);

    // reference single-module production; roof widened past the cap check
    PvDesign probe = pv_template;
    probe.module_count = 1;
    probe.roof_area_m2 = std::max(probe.roof_area_m2, 10.0 * probe.module_area_m2);

    SizingEvaluator ev{load,
                       pv_template,
                       pv_production(probe, ghi, temp),
                       import_tariff.import_price_series_chf(load.axis, &ghi),
                       {},
                       econ,
                       opts,
                       {}};
    ev.export_price.assign(load.size(), export_tariff.price_export() / 100.0);

    double daily_kwh = load.annual_energy_kwh() / 365.0;
    int bat_max = opts.battery_max_kwh >= 0.0
                      ? static_cast<int>(std::lround(opts.battery_max_kwh))
                      : std::max(5, static_cast<int>(std::ceil(2.0 * daily_kwh)));

    auto best_battery_for = [&](int modules) {
        return refine_minimize(0, bat_max, [&](int kwh) { return ev.totex(modules, kwh); });
    };

    int best_modules = 0;
    int best_kwh = 0;
    if (mode == SizingMode::MaxPv) {
        best_modules = max_modules;
        best_kwh = best_battery_for(best_modules);
    } else {
        if (max_modules == 0) {
            best_kwh = best_battery_for(0);
        } else {
            // coordinate descent: PV pass at fixed battery, then battery pass
            for (int round = 0; round < 3; ++round) {
                int m = refine_minimize(0, max_modules,
                                        [&](int mu) { return ev.totex(mu, best_kwh); });
                int k = best_battery_for(m);
                if (m == best_modules && k == best_kwh) break;
                best_modules = m;
                best_kwh = k;
            }
        }
    }

    PvDesign pv = ev.design_for(best_modules);
    pv.validate();
    BatteryDesign bat = BatteryDesign::with_capacity(best_kwh);
    Profile prod = ev.production_for(best_modules);
    DispatchResult r = optimize_dispatch(load, prod, pv, bat, ev.import_price, ev.export_price,
                                         econ, opts.dispatch);
    return SizingResult{pv, bat, r.cost};
}

double community_battery_size(std::span<const BatteryDesign> per_building) {
    double sum = 0.0;
    for (const auto& b : per_building) sum += b.e_cap_kwh;
    return sum;
}

std::pair<Profile, Profile> aggregate_virtual_building(std::span<const Profile> loads,
                                                       std::span<const Profile> pv_outputs) {
    if (loads.empty()) throw std::invalid_argument("virtual building needs at least one load");
    const TimeAxis& axis = loads[0].axis;
    std::vector<double> lsum(axis.n_steps(), 0.0), psum(axis.n_steps(), 0.0);
    for (const auto& p : loads) {
        if (p.axis != axis) throw std::invalid_argument("member loads on different axes");
        for (std::size_t t = 0; t < lsum.size(); ++t) lsum[t] += p[t];
    }
    for (const auto& p : pv_outputs) {
        if (p.axis != axis) throw std::invalid_argument("member PV on a different axis");
        for (std::size_t t = 0; t < psum.size(); ++t) psum[t] += p[t];
    }
    return {Profile(axis, Unit::KW, std::move(lsum)), Profile(axis, Unit::KW, std::move(psum))};
}

}  // namespace celsim
