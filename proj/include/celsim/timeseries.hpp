#ifndef CELSIM_TIMESERIES_HPP
#define CELSIM_TIMESERIES_HPP

#include <optional>
#include <string>

#include "celsim/timeaxis.hpp"

namespace celsim {

/// Rooftop PV array description. Module defaults follow a 315 W
/// monocrystalline module (1.6310 m2) with NOCT cell-temperature derating.
struct PvDesign {
    int module_count = 0;         // modules installed
    double module_power_w = 315.0;
    double module_area_m2 = 1.6310;
    double roof_area_m2 = 0.0;    // usable rooftop area
    double temp_coeff = -0.004;   // 1/degC power derating
    double noct_c = 45.0;
    double derate = 1.0;          // catch-all scalar for orientation/soiling losses

    double capacity_kwp() const { return module_count * module_power_w / 1000.0; }

    /// Largest module count honoring the 70% rooftop-area rule.
    static int max_modules(double roof_area_m2, double module_area_m2 = 1.6310);

    /// Throws std::invalid_argument if module area exceeds 70% of the roof.
    void validate() const;
};

enum class Archetype { Residential, NonResidential };

Archetype archetype_from_name(const std::string& name);

struct Building {
    std::string id;
    std::string bus_id;
    Profile load;                 // kW
    std::optional<PvDesign> pv;

    double annual_load_mwh() const { return load.annual_energy_kwh() / 1000.0; }
};

/// Reads a `timestamp,value` CSV (ISO-8601 local timestamps, 15-minute
/// spacing). Gaps, duplicates and out-of-order rows raise std::runtime_error
/// naming the offending row; negative kW/irradiance values raise through
/// Profile validation.
Profile ingest_profile(const std::string& path, Unit unit);

void write_profile_csv(const std::string& path, const Profile& profile);

/// Deterministic synthetic load profile scaled to annual_mwh.
/// Residential: evening-peaked; non-residential: midday plateau with a
/// weekday/weekend split. Same seed, same sequence.
Profile synthesize_load(const TimeAxis& axis, double annual_mwh, Archetype archetype,
                        uint64_t seed);

/// Deterministic synthetic global horizontal irradiance (W/m2): seasonal
/// clear-sky envelope times a seeded day-to-day cloud factor.
Profile synthesize_ghi(const TimeAxis& axis, uint64_t seed);

/// Deterministic synthetic outdoor temperature (degC): seasonal plus diurnal
/// sinusoids with seeded daily offsets.
Profile synthesize_temperature(const TimeAxis& axis, uint64_t seed);

/// Building PV output in kW:
///   P_t = n * P_mod * (G_t/1000) * (1 + tc*(T_cell - 25)) * derate / 1000
///   T_cell = T_t + G_t * (noct - 20) / 800
/// clamped at zero. ghi in W/m2, temp in degC.
Profile pv_production(const PvDesign& design, const Profile& ghi, const Profile& temp);

}  // namespace celsim

#endif
