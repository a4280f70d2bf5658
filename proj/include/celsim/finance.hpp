#ifndef CELSIM_FINANCE_HPP
#define CELSIM_FINANCE_HPP

#include <span>
#include <string>
#include <vector>

#include "celsim/aging.hpp"
#include "celsim/dispatch.hpp"
#include "celsim/tariff.hpp"

namespace celsim {

/// Yearly cash flows over [0, L]; year 0 carries the initial investment.
/// outflow may embed export revenue as a negative component; inflow is kept
/// for symmetric IRR-style ledgers and defaults to zero.
struct CashflowLedger {
    std::vector<double> outflow_chf;
    std::vector<double> inflow_chf;
    std::vector<double> served_mwh;

    std::size_t years() const { return outflow_chf.size(); }
    double net_cost(std::size_t t) const { return outflow_chf[t] - inflow_chf[t]; }
};

CashflowLedger make_ledger(std::size_t years_incl_zero);

/// Discounted lifetime cost per discounted lifetime served energy, CHF/kWh.
double lcoe(const CashflowLedger& ledger, double rate);

/// NPV of the yearly savings of `scenario` against `baseline`.
double profit(const CashflowLedger& baseline, const CashflowLedger& scenario, double rate);

struct IrrResult {
    double rate = 0.0;
    bool multiple_roots = false;  // smallest bracketed root reported
};

/// Root of the NPV on (-0.99, 1.0) by coarse scan plus bisection to 1e-7.
/// Throws std::runtime_error when the flows admit no sign change.
IrrResult irr(std::span<const double> net_flows);

/// Discounted payback period: first year where cumulative discounted savings
/// turn non-negative, linearly interpolated; negative if never.
double discounted_payback(std::span<const double> net_flows, double rate);

/// Annual bill components, CHF/yr. The first three price external imports;
/// the CEL trio prices internally purchased energy.
struct BillBreakdown {
    double energy = 0.0;
    double tax = 0.0;
    double grid = 0.0;
    double cel_energy = 0.0;
    double cel_tax = 0.0;
    double cel_grid = 0.0;

    double bill_without_cel() const { return energy + tax + grid; }
    double bill_with_cel() const { return bill_without_cel() + cel_energy + cel_tax + cel_grid; }
};

BillBreakdown operator+(const BillBreakdown& a, const BillBreakdown& b);

/// DSO income forgone by the community's internal exchanges:
/// Bill_noCEL - (Bill_CEL - E_energy_CEL). The energy component stays with
/// the selling member, so it is not counted as DSO loss.
double revenue_loss(const BillBreakdown& bill_no_cel, const BillBreakdown& bill_cel);

/// External bill of a plan's imports under the external double tariff.
BillBreakdown external_bill(const DispatchPlan& plan, const TariffSchedule& external);

/// Pro-rata settlement of simultaneous surpluses and deficits among member
/// plans. Per step the exchanged volume is min(total surplus, total deficit);
/// importers pay the internal price, exporters receive its energy component,
/// and the DSO keeps the internal grid and tax components. Residual deficits
/// import at the external tariff; residual surpluses export at the feed-in
/// rate.
struct ExchangeSettlement {
    std::vector<double> exchange_kwh;  // per step

    // per-member annual aggregates, aligned with the input plan order
    std::vector<double> internal_purchase_kwh;
    std::vector<double> internal_sale_kwh;
    std::vector<double> residual_import_kwh;
    std::vector<double> residual_export_kwh;
    std::vector<BillBreakdown> member_bills;
    std::vector<double> member_sale_revenue_chf;  // internal energy received

    double total_exchange_kwh = 0.0;
    double member_payments_chf = 0.0;  // internal purchases at the full price
    double member_receipts_chf = 0.0;  // internal sales at the energy part
    double dso_retained_chf = 0.0;     // internal grid + tax parts
    double feed_in_revenue_chf = 0.0;  // residual exports at the feed-in rate
};

ExchangeSettlement settle_exchange(std::span<const DispatchPlan> member_plans,
                                   const TariffSchedule& internal,
                                   const TariffSchedule& external, const Profile* ghi);

/// Builds the community/building lifetime ledger from one representative year.
struct LedgerInputs {
    double pv_capex_chf = 0.0;
    double battery_capex_chf = 0.0;      // one build
    double inverter_unit_cost_chf = 0.0;
    ReplacementSchedule replacements;
    double annual_grid_cost_chf = 0.0;   // imports minus export revenue
    double annual_maintenance_chf = 0.0; // PV maintenance + battery operation
    double annual_served_mwh = 0.0;
    int lifetime_years = 25;
};

CashflowLedger build_ledger(const LedgerInputs& in);

}  // namespace celsim

#endif
