#ifndef CELSIM_DISPATCH_LP_HPP
#define CELSIM_DISPATCH_LP_HPP

#include <limits>
#include <vector>

namespace celsim::lp {

/// Annual dispatch LP: per step t the variables are grid import/export,
/// battery charge/discharge (kW) and stored energy (kWh), tied by
///   import - export - charge + discharge = residual
///   E_t - E_{t-1} - eta_c*TS*charge + TS/eta_d*discharge = 0
/// minimizing sum((p_imp*import - p_exp*export + c_ch*charge +
/// c_dis*discharge) * TS). Terminal stored energy >= initial.
struct DispatchLpProblem {
    double ts_hours = 0.25;
    std::vector<double> residual_kw;    // load - pv
    std::vector<double> import_price;   // CHF/kWh
    std::vector<double> export_price;   // CHF/kWh

    double e_cap_kwh = 0.0;             // must be > 0 (caller handles no-battery)
    double eta_charge = 0.95;
    double eta_discharge = 0.95;
    double p_max_charge_kw = 0.0;
    double p_max_discharge_kw = 0.0;
    double soc_min = 0.0;
    double soc_max = 1.0;
    double soc_initial = 0.0;
    double charge_cost = 0.0;           // CHF/kWh moved
    double discharge_cost = 0.0;
    double import_cap_kw = std::numeric_limits<double>::infinity();

    double tolerance = 1e-9;            // relative gap / residual target
};

struct DispatchLpSolution {
    std::vector<double> import_kw;
    std::vector<double> export_kw;
    std::vector<double> charge_kw;
    std::vector<double> discharge_kw;
    std::vector<double> soc;            // n+1 entries, soc[0] = initial

    double objective = 0.0;             // CHF, recomputed from the vectors
    double lower_bound = 0.0;           // dual bound certifying optimality
    double relative_gap = 0.0;
    int iterations = 0;
    bool converged = false;
};

/// Primal-dual interior-point solve. The balance/SoC rows interleave into a
/// bandwidth-2 normal-equation system, so each iteration is O(n_steps).
/// Throws std::runtime_error on infeasible instances (import cap too tight).
DispatchLpSolution solve_dispatch_lp(const DispatchLpProblem& p);

}  // namespace celsim::lp

#endif
