#ifndef CELSIM_AGING_HPP
#define CELSIM_AGING_HPP

#include <span>
#include <vector>

namespace celsim {

/// One counted SoC excursion. count is 0.5 for residue half-cycles, 1.0 for
/// closed cycles.
struct Cycle {
    double depth;     // SoC range, (0,1]
    double mean_soc;  // midpoint of the excursion
    double count;     // 0.5 or 1.0
};

struct CycleSet {
    std::vector<Cycle> cycles;

    double equivalent_full_cycles() const;
    bool empty() const { return cycles.empty(); }
};

/// Four-point rainflow counting on the turning-point-reduced sequence;
/// the residue is counted as half-cycles. Constant input yields an empty set.
CycleSet rainflow(std::span<const double> soc);

struct AgingParams {
    // Defaults calibrated so that 3000 full-depth cycles alone, or 15
    // calendar years alone, reach the 20% end-of-life fade.
    double k_cyc = 0.20 / 3000.0;   // fade per depth^exponent-weighted cycle
    double cyc_exponent = 1.1;
    double mean_soc_weight = 0.0;   // hook: fade *= 1 + w*(mean-0.5); 0 = off
    double k_cal = 0.20 / 15.0;     // fade per calendar year
    double eol_threshold = 0.80;    // replace below this remaining capacity
};

/// fade = k_cyc * sum(count * depth^exponent * meanw) + k_cal * years,
/// clamped to [0,1].
double capacity_fade(const CycleSet& cycles, double elapsed_years, const AgingParams& params);

struct ReplacementSchedule {
    std::vector<double> battery_replacement_years;   // strictly inside (0, L)
    double battery_life_years = 0.0;                 // L / number of battery builds
    double battery_residual_fraction = 0.0;          // remaining life share of last build
    double battery_residual_chf = 0.0;               // credit at year L, undiscounted
    std::vector<double> inverter_replacement_years;
    double inverter_residual_fraction = 0.0;
    double inverter_residual_chf = 0.0;
    double annual_fade = 0.0;
};

struct EconomicParams;  // dispatch.hpp

/// Extrapolates one representative annual SoC trace over the project
/// lifetime: batteries are replaced whenever cumulative fade crosses
/// 1 - eol_threshold, inverters every econ.inverter_life_years, and residual
/// values are credited at year L in proportion to remaining life.
/// battery_capacity_kwh and pv_capex_chf price the replaced units.
ReplacementSchedule replacement_schedule(std::span<const double> annual_soc,
                                         double battery_capacity_kwh, double pv_capex_chf,
                                         const EconomicParams& econ, const AgingParams& params);

}  // namespace celsim

#endif
