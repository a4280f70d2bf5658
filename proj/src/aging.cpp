#include "celsim/aging.hpp"

#include <cmath>
#include <stdexcept>

#include "celsim/dispatch.hpp"

namespace celsim {

double CycleSet::equivalent_full_cycles() const {
    double s = 0.0;
    for (const auto& c : cycles) s += c.depth * c.count;
    return s;
}

CycleSet rainflow(std::span<const double> soc) {
    // turning-point reduction (plateaus and monotone runs collapse)
    std::vector<double> tp;
    tp.reserve(soc.size());
    int dir = 0;
    for (double v : soc) {
        if (tp.empty()) {
            tp.push_back(v);
            continue;
        }
        if (v == tp.back()) continue;
        int d = (v > tp.back()) ? 1 : -1;
        if (dir == 0 || d != dir) {
            tp.push_back(v);
            dir = d;
        } else {
            tp.back() = v;
        }
    }

    CycleSet out;
    std::vector<double> stack;
    stack.reserve(tp.size());
    for (double pnt : tp) {
        stack.push_back(pnt);
        while (stack.size() >= 4) {
            std::size_t k = stack.size();
            double a = stack[k - 4], b = stack[k - 3], c = stack[k - 2], d = stack[k - 1];
            double x = std::abs(b - a), y = std::abs(c - b), z = std::abs(d - c);
            if (y <= x && y <= z) {
                out.cycles.push_back({y, (b + c) / 2.0, 1.0});
                stack.erase(stack.end() - 3, stack.end() - 1);  // drop b, c
            } else {
                break;
            }
        }
    }
    for (std::size_t i = 0; i + 1 < stack.size(); ++i) {
        out.cycles.push_back(
            {std::abs(stack[i + 1] - stack[i]), (stack[i] + stack[i + 1]) / 2.0, 0.5});
    }
    return out;
}

double capacity_fade(const CycleSet& cycles, double elapsed_years, const AgingParams& params) {
    if (elapsed_years < 0.0) throw std::invalid_argument("elapsed_years must be >= 0");
    double cyc = 0.0;
    for (const auto& c : cycles.cycles) {
        double w = 1.0 + params.mean_soc_weight * (c.mean_soc - 0.5);
        cyc += c.count * std::pow(c.depth, params.cyc_exponent) * w;
    }
    double fade = params.k_cyc * cyc + params.k_cal * elapsed_years;
    return std::min(std::max(fade, 0.0), 1.0);
}

ReplacementSchedule replacement_schedule(std::span<const double> annual_soc,
                                         double battery_capacity_kwh, double pv_capex_chf,
                                         const EconomicParams& econ, const AgingParams& params) {
    ReplacementSchedule sched;
    const double lifetime = econ.lifetime_years;

    if (battery_capacity_kwh > 0.0) {
        CycleSet cycles = rainflow(annual_soc);
        double fade_per_year = capacity_fade(cycles, 1.0, params);
        sched.annual_fade = fade_per_year;
        if (!cycles.empty() && fade_per_year <= 0.0)
            throw std::runtime_error(
                "aging parameters give non-positive annual fade despite cycling");

        const double budget = 1.0 - params.eol_threshold;
        if (fade_per_year <= 0.0) {
            // a battery that never ages keeps its full value
            sched.battery_life_years = lifetime;
            sched.battery_residual_fraction = 1.0;
        } else {
            double unit_life = budget / fade_per_year;
            for (double t = unit_life; t < lifetime - 1e-9; t += unit_life)
                sched.battery_replacement_years.push_back(t);
            double builds = 1.0 + static_cast<double>(sched.battery_replacement_years.size());
            sched.battery_life_years = lifetime / builds;
            double frac = (builds * unit_life - lifetime) / unit_life;
            sched.battery_residual_fraction = std::min(std::max(frac, 0.0), 1.0);
        }
        sched.battery_residual_chf =
            sched.battery_residual_fraction * econ.battery_capex(battery_capacity_kwh);
    } else {
        sched.battery_life_years = lifetime;
    }

    if (pv_capex_chf > 0.0 && econ.inverter_life_years > 0) {
        double unit_cost = econ.inverter_cost_share * econ.pv_fixed_cost;
        double life = econ.inverter_life_years;
        for (double t = life; t < lifetime - 1e-9; t += life)
            sched.inverter_replacement_years.push_back(t);
        double builds = 1.0 + static_cast<double>(sched.inverter_replacement_years.size());
        double frac = (builds * life - lifetime) / life;
        sched.inverter_residual_fraction = std::min(std::max(frac, 0.0), 1.0);
        sched.inverter_residual_chf = sched.inverter_residual_fraction * unit_cost;
    }
    return sched;
}

}  // namespace celsim
