#include "celsim/finance.hpp"

#include <algorithm>
#include <cmath>
#include <stdexcept>

namespace celsim {

CashflowLedger make_ledger(std::size_t years_incl_zero) {
    CashflowLedger l;
    l.outflow_chf.assign(years_incl_zero, 0.0);
    l.inflow_chf.assign(years_incl_zero, 0.0);
    l.served_mwh.assign(years_incl_zero, 0.0);
    return l;
}

double lcoe(const CashflowLedger& ledger, double rate) {
    double cost = 0.0, energy = 0.0;
    for (std::size_t t = 0; t < ledger.years(); ++t) {
        double df = std::pow(1.0 + rate, static_cast<double>(t));
        cost += ledger.net_cost(t) / df;
        energy += ledger.served_mwh[t] / df;
    }
    if (energy <= 0.0) throw std::runtime_error("lcoe: no discounted served energy");
    return cost / (energy * 1000.0);  // CHF per kWh
}

double profit(const CashflowLedger& baseline, const CashflowLedger& scenario, double rate) {
    if (baseline.years() != scenario.years())
        throw std::invalid_argument("profit: ledgers have different horizons");
    double npv = 0.0;
    for (std::size_t t = 0; t < baseline.years(); ++t)
        npv += (baseline.net_cost(t) - scenario.net_cost(t)) /
               std::pow(1.0 + rate, static_cast<double>(t));
    return npv;
}

namespace {

double npv_at(std::span<const double> flows, double rate) {
    double v = 0.0;
    for (std::size_t t = 0; t < flows.size(); ++t)
        v += flows[t] / std::pow(1.0 + rate, static_cast<double>(t));
    return v;
}

}  // namespace

IrrResult irr(std::span<const double> net_flows) {
    bool pos = false, neg = false;
    for (double f : net_flows) {
        if (f > 0.0) pos = true;
        if (f < 0.0) neg = true;
    }
    if (!pos || !neg) throw std::runtime_error("irr: flows have no sign change");

    const double lo = -0.99, hi = 1.0;
    const int grid = 1990;  // 1e-3 spacing
    double prev_r = lo, prev_v = npv_at(net_flows, lo);
    double a = 0.0, b = 0.0;
    int brackets = 0;
    for (int i = 1; i <= grid; ++i) {
        double r = lo + (hi - lo) * i / grid;
        double v = npv_at(net_flows, r);
        if (prev_v == 0.0) {
            if (brackets == 0) {
                a = b = prev_r;
            }
            ++brackets;
        } else if ((prev_v < 0.0) != (v < 0.0)) {
            if (brackets == 0) {
                a = prev_r;
                b = r;
            }
            ++brackets;
        }
        prev_r = r;
        prev_v = v;
    }
    if (brackets == 0) throw std::runtime_error("irr: NPV has no root in (-0.99, 1.0)");

    IrrResult res;
    res.multiple_roots = brackets > 1;
    if (a == b) {
        res.rate = a;
        return res;
    }
    double fa = npv_at(net_flows, a);
    while (b - a > 1e-7) {
        double m = 0.5 * (a + b);
        double fm = npv_at(net_flows, m);
        if ((fa < 0.0) == (fm < 0.0)) {
            a = m;
            fa = fm;
        } else {
            b = m;
        }
    }
    res.rate = 0.5 * (a + b);
    return res;
}

double discounted_payback(std::span<const double> net_flows, double rate) {
    double cum = 0.0;
    for (std::size_t t = 0; t < net_flows.size(); ++t) {
        double prev = cum;
        cum += net_flows[t] / std::pow(1.0 + rate, static_cast<double>(t));
        if (cum >= 0.0 && t > 0) {
            double step = cum - prev;  // this year's discounted net inflow
            if (step <= 0.0) return static_cast<double>(t);
            return static_cast<double>(t - 1) + (-prev) / step;
        }
    }
    return -1.0;
}

BillBreakdown operator+(const BillBreakdown& a, const BillBreakdown& b) {
    return {a.energy + b.energy,         a.tax + b.tax,         a.grid + b.grid,
            a.cel_energy + b.cel_energy, a.cel_tax + b.cel_tax, a.cel_grid + b.cel_grid};
}

double revenue_loss(const BillBreakdown& bill_no_cel, const BillBreakdown& bill_cel) {
    return bill_no_cel.bill_without_cel() - (bill_cel.bill_with_cel() - bill_cel.cel_energy);
}

BillBreakdown external_bill(const DispatchPlan& plan, const TariffSchedule& external) {
    BillBreakdown bill;
    const double ts = plan.axis.step_hours();
    for (std::size_t t = 0; t < plan.n_steps(); ++t) {
        double kwh = plan.import_kw[t] * ts;
        if (kwh <= 0.0) continue;
        PriceDecomposition d = external.decompose(plan.axis, t);
        bill.energy += d.energy_ct / 100.0 * kwh;
        bill.grid += d.grid_ct / 100.0 * kwh;
        bill.tax += d.tax_ct / 100.0 * kwh;
    }
    return bill;
}

ExchangeSettlement settle_exchange(std::span<const DispatchPlan> member_plans,
                                   const TariffSchedule& internal,
                                   const TariffSchedule& external, const Profile* ghi) {
    if (member_plans.empty()) throw std::invalid_argument("settlement needs members");
    const TimeAxis& axis = member_plans[0].axis;
    for (const auto& p : member_plans)
        if (p.axis != axis) throw std::invalid_argument("member plans on different axes");
    if (internal.kind() == TariffKind::InternalDynamic && ghi == nullptr)
        throw std::invalid_argument("dynamic internal tariff needs irradiance");
    if (ghi && ghi->axis != axis)
        throw std::invalid_argument("irradiance profile on a different axis");

    const std::size_t n_members = member_plans.size();
    const std::size_t n_steps = axis.n_steps();
    const double ts = axis.step_hours();

    ExchangeSettlement s;
    s.exchange_kwh.assign(n_steps, 0.0);
    s.internal_purchase_kwh.assign(n_members, 0.0);
    s.internal_sale_kwh.assign(n_members, 0.0);
    s.residual_import_kwh.assign(n_members, 0.0);
    s.residual_export_kwh.assign(n_members, 0.0);
    s.member_bills.assign(n_members, {});
    s.member_sale_revenue_chf.assign(n_members, 0.0);

    const double feed_in_chf = external.price_export() / 100.0;

    for (std::size_t t = 0; t < n_steps; ++t) {
        double surplus = 0.0, deficit = 0.0;
        for (const auto& p : member_plans) {
            surplus += p.export_kw[t];
            deficit += p.import_kw[t];
        }
        double exchanged_kw = std::min(surplus, deficit);
        double exchanged = exchanged_kw * ts;
        s.exchange_kwh[t] = exchanged;
        s.total_exchange_kwh += exchanged;

        std::optional<double> g;
        if (ghi) g = (*ghi)[t];
        PriceDecomposition ip = internal.decompose(axis, t, g);
        PriceDecomposition ep = external.decompose(axis, t);
        double internal_price_chf = ip.total_ct() / 100.0;

        for (std::size_t m = 0; m < n_members; ++m) {
            const auto& p = member_plans[m];
            double buy = 0.0, sell = 0.0;
            if (exchanged_kw > 0.0) {
                buy = exchanged_kw * (p.import_kw[t] / deficit) * ts;
                sell = exchanged_kw * (p.export_kw[t] / surplus) * ts;
            }
            double resid_imp = p.import_kw[t] * ts - buy;
            double resid_exp = p.export_kw[t] * ts - sell;

            s.internal_purchase_kwh[m] += buy;
            s.internal_sale_kwh[m] += sell;
            s.residual_import_kwh[m] += resid_imp;
            s.residual_export_kwh[m] += resid_exp;

            BillBreakdown& bill = s.member_bills[m];
            bill.cel_energy += ip.energy_ct / 100.0 * buy;
            bill.cel_grid += ip.grid_ct / 100.0 * buy;
            bill.cel_tax += ip.tax_ct / 100.0 * buy;
            bill.energy += ep.energy_ct / 100.0 * resid_imp;
            bill.grid += ep.grid_ct / 100.0 * resid_imp;
            bill.tax += ep.tax_ct / 100.0 * resid_imp;

            s.member_payments_chf += internal_price_chf * buy;
            s.member_receipts_chf += ip.energy_ct / 100.0 * sell;
            s.member_sale_revenue_chf[m] += ip.energy_ct / 100.0 * sell;
            s.dso_retained_chf += (ip.grid_ct + ip.tax_ct) / 100.0 * buy;
            s.feed_in_revenue_chf += feed_in_chf * resid_exp;
        }
    }
    return s;
}

CashflowLedger build_ledger(const LedgerInputs& in) {
    CashflowLedger l = make_ledger(static_cast<std::size_t>(in.lifetime_years) + 1);
    l.outflow_chf[0] = in.pv_capex_chf + in.battery_capex_chf;
    for (int t = 1; t <= in.lifetime_years; ++t) {
        l.outflow_chf[t] = in.annual_grid_cost_chf + in.annual_maintenance_chf;
        l.served_mwh[t] = in.annual_served_mwh;
    }
    // replacement outlays land in the year the unit dies
    for (double y : in.replacements.battery_replacement_years) {
        int yr = static_cast<int>(std::ceil(y - 1e-9));
        yr = std::clamp(yr, 1, in.lifetime_years);
        l.outflow_chf[yr] += in.battery_capex_chf;
    }
    for (double y : in.replacements.inverter_replacement_years) {
        int yr = static_cast<int>(std::ceil(y - 1e-9));
        yr = std::clamp(yr, 1, in.lifetime_years);
        l.outflow_chf[yr] += in.inverter_unit_cost_chf;
    }
    l.inflow_chf[in.lifetime_years] +=
        in.replacements.battery_residual_chf + in.replacements.inverter_residual_chf;
    return l;
}

}  // namespace celsim
