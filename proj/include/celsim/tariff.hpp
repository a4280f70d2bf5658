#ifndef CELSIM_TARIFF_HPP
#define CELSIM_TARIFF_HPP

#include <optional>
#include <string>
#include <vector>

#include "celsim/timeaxis.hpp"

namespace celsim {

/// Rounds to 2 decimals (published ct/kWh precision).
double round_ct(double x);

/// Per-kWh price components in ct/kWh, peak/off-peak where time-of-use
/// applies. Taxes are flat (federal + winter reserve + cantonal tax +
/// cantonal emolument).
struct TariffComponents {
    double energy_peak = 16.68;
    double energy_offpeak = 11.81;
    double regional_grid_peak = 14.34;
    double regional_grid_offpeak = 8.43;
    double national_grid_peak = 2.32;
    double national_grid_offpeak = 1.48;
    double tax_federal = 2.30;
    double tax_winter_reserve = 0.23;
    double tax_cantonal = 0.60;
    double tax_emolument = 0.02;

    double taxes() const {
        return tax_federal + tax_winter_reserve + tax_cantonal + tax_emolument;
    }
    double grid_peak() const { return regional_grid_peak + national_grid_peak; }
    double grid_offpeak() const { return regional_grid_offpeak + national_grid_offpeak; }
    double total_peak() const { return energy_peak + grid_peak() + taxes(); }
    double total_offpeak() const { return energy_offpeak + grid_offpeak() + taxes(); }

    /// Same energy and taxes, grid components scaled by (1 - reduction) and
    /// rounded to 2 decimals. reduction = 0.40 for intra-LV communities.
    TariffComponents with_grid_reduction(double reduction) const;
};

/// Weekday peak window; hours in [0,24), peak on Monday..Friday.
struct TouWindow {
    double peak_start_hour = 17.0;
    double peak_end_hour = 22.0;

    bool is_peak(const TimeAxis& axis, std::size_t t) const {
        if (axis.weekday(t) >= 5) return false;
        double h = axis.hour_of_day(t);
        return h >= peak_start_hour && h < peak_end_hour;
    }
};

/// Irradiance-indexed internal price: linear from p_max at zero irradiance
/// down to p_min at g_ref, with fixed grid and tax parts; the energy part is
/// the residual.
struct DynamicTariffParams {
    double p_max_ct = 24.52;
    double p_min_ct = 11.50;
    double fixed_grid_ct = 7.39;
    double fixed_tax_ct = 3.15;
    double g_ref_w_m2 = 1000.0;
};

enum class TariffKind { ExternalDouble, InternalDouble, InternalDynamic };

std::string tariff_kind_name(TariffKind k);

struct PriceDecomposition {
    double energy_ct = 0.0;
    double grid_ct = 0.0;
    double tax_ct = 0.0;
    double total_ct() const { return energy_ct + grid_ct + tax_ct; }
};

class TariffSchedule {
  public:
    /// External double tariff (components as published).
    static TariffSchedule external_double(TariffComponents c = {}, TouWindow w = {},
                                          double feed_in_ct = 11.5);
    /// Internal double tariff: 40% grid reduction applied to `external`.
    static TariffSchedule internal_double(const TariffComponents& external, TouWindow w = {},
                                          double feed_in_ct = 11.5, double reduction = 0.40);
    static TariffSchedule internal_dynamic(DynamicTariffParams p = {}, double feed_in_ct = 11.5);

    TariffKind kind() const { return kind_; }
    const TariffComponents& components() const { return components_; }
    const TouWindow& tou() const { return tou_; }
    const DynamicTariffParams& dynamic() const { return dynamic_; }

    /// Import price in ct/kWh for step t. ghi_t is required (and only used)
    /// for the dynamic tariff; passing std::nullopt there throws.
    double price_import(const TimeAxis& axis, std::size_t t,
                        std::optional<double> ghi_t = std::nullopt) const;

    /// (energy, grid, tax) parts of price_import, ct/kWh.
    PriceDecomposition decompose(const TimeAxis& axis, std::size_t t,
                                 std::optional<double> ghi_t = std::nullopt) const;

    /// Feed-in remuneration, ct/kWh (flat).
    double price_export() const { return feed_in_ct_; }

    /// Import prices for the whole axis in CHF/kWh; ghi may be null unless
    /// the schedule is dynamic.
    std::vector<double> import_price_series_chf(const TimeAxis& axis,
                                                const Profile* ghi = nullptr) const;

  private:
    TariffKind kind_ = TariffKind::ExternalDouble;
    TariffComponents components_;
    TouWindow tou_;
    DynamicTariffParams dynamic_;
    double feed_in_ct_ = 11.5;
};

/// Tariff definition file: external double components, TOU window, dynamic
/// parameters and feed-in rate. See data/tariffs.json for the layout.
struct TariffSet {
    TariffSchedule external;
    TariffSchedule internal_double;
    TariffSchedule internal_dynamic;
};

TariffSet load_tariffs(const std::string& path);
TariffSet default_tariffs();

}  // namespace celsim

#endif
