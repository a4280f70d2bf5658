#include "celsim/dispatch_lp.hpp"

#include <algorithm>
#include <cmath>
#include <stdexcept>
#include <string>

namespace celsim::lp {

namespace {

constexpr double kInf = std::numeric_limits<double>::infinity();

// Variable layout per step: [IMP, EXP, CH, DIS, E]; rows per step:
// [balance, soc]. All index arithmetic below relies on this interleaving,
// which makes the normal equations banded with bandwidth 2.
struct Work {
    std::size_t T = 0;
    std::size_t n = 0;  // 5T
    std::size_t m = 0;  // 2T
    double gc = 0.0;    // eta_c * TS   (kWh stored per kW charged)
    double gd = 0.0;    // TS / eta_d   (kWh drained per kW discharged)

    std::vector<double> c, lo, up, b;
    std::vector<double> x, y, zl, zu;
    std::vector<double> sl, su;

    std::vector<double> rp, rd, theta, g, rcl, rcu;
    std::vector<double> dx, dy, dzl, dzu;
    std::vector<double> dx_a, dzl_a, dzu_a;

    // normal matrix band (input) and its LDL' factor
    std::vector<double> m0, m1, m2;      // diag, M(i,i+1), M(i,i+2)
    std::vector<double> fd, fl1, fl2;    // D, L(i,i-1), L(i,i-2)
    std::vector<double> rhs;
};

void mul_a(const Work& w, const std::vector<double>& x, std::vector<double>& out) {
    for (std::size_t t = 0; t < w.T; ++t) {
        const double* v = &x[5 * t];
        out[2 * t] = v[0] - v[1] - v[2] + v[3];
        double prev = (t > 0) ? x[5 * t - 1] : 0.0;
        out[2 * t + 1] = v[4] - prev - w.gc * v[2] + w.gd * v[3];
    }
}

void mul_at(const Work& w, const std::vector<double>& y, std::vector<double>& out) {
    for (std::size_t t = 0; t < w.T; ++t) {
        double yb = y[2 * t];
        double ys = y[2 * t + 1];
        double* v = &out[5 * t];
        v[0] = yb;
        v[1] = -yb;
        v[2] = -yb - w.gc * ys;
        v[3] = yb + w.gd * ys;
        v[4] = ys - ((t + 1 < w.T) ? y[2 * t + 3] : 0.0);
    }
}

// Assembles A diag(theta) A' into the three band diagonals.
void build_normal(Work& w) {
    for (std::size_t t = 0; t < w.T; ++t) {
        const double* th = &w.theta[5 * t];
        double tI = th[0], tX = th[1], tC = th[2], tD = th[3], tE = th[4];
        w.m0[2 * t] = tI + tX + tC + tD;
        w.m1[2 * t] = w.gc * tC + w.gd * tD;
        double diag_soc = w.gc * w.gc * tC + w.gd * w.gd * tD + tE;
        if (t > 0) diag_soc += w.theta[5 * t - 1];
        w.m0[2 * t + 1] = diag_soc;
        w.m1[2 * t + 1] = 0.0;
        w.m2[2 * t] = 0.0;
        w.m2[2 * t + 1] = (t + 1 < w.T) ? -tE : 0.0;
    }
}

void band_factor(Work& w) {
    const std::size_t m = w.m;
    double maxd = 0.0;
    for (std::size_t i = 0; i < m; ++i) maxd = std::max(maxd, w.m0[i]);
    const double reg = 1e-13 * std::max(1.0, maxd);

    w.fd[0] = std::max(w.m0[0], reg);
    if (m > 1) {
        w.fl1[1] = w.m1[0] / w.fd[0];
        w.fd[1] = std::max(w.m0[1] - w.fl1[1] * w.fl1[1] * w.fd[0], reg);
    }
    for (std::size_t i = 2; i < m; ++i) {
        w.fl2[i] = w.m2[i - 2] / w.fd[i - 2];
        w.fl1[i] = (w.m1[i - 1] - w.fl2[i] * w.fd[i - 2] * w.fl1[i - 1]) / w.fd[i - 1];
        double d = w.m0[i] - w.fl2[i] * w.fl2[i] * w.fd[i - 2] -
                   w.fl1[i] * w.fl1[i] * w.fd[i - 1];
        w.fd[i] = std::max(d, reg);
    }
}

void band_solve(const Work& w, std::vector<double>& v) {
    const std::size_t m = w.m;
    for (std::size_t i = 1; i < m; ++i) {
        double s = v[i] - w.fl1[i] * v[i - 1];
        if (i >= 2) s -= w.fl2[i] * v[i - 2];
        v[i] = s;
    }
    for (std::size_t i = 0; i < m; ++i) v[i] /= w.fd[i];
    for (std::size_t ii = m - 1; ii-- > 0;) {
        double s = v[ii] - w.fl1[ii + 1] * v[ii + 1];
        if (ii + 2 < m) s -= w.fl2[ii + 2] * v[ii + 2];
        v[ii] = s;
    }
}

// Greedy feasibility check for a finite import cap: the everywhere-maximal
// SoC trajectory dominates all feasible ones, so the forced discharges
// succeed for some dispatch iff they succeed along it.
void check_import_cap_feasible(const DispatchLpProblem& p) {
    if (!std::isfinite(p.import_cap_kw)) return;
    double e = p.soc_initial * p.e_cap_kwh;
    const double e_hi = p.soc_max * p.e_cap_kwh;
    const double e_lo = p.soc_min * p.e_cap_kwh;
    const double gc = p.eta_charge * p.ts_hours;
    const double gd = p.ts_hours / p.eta_discharge;
    for (std::size_t t = 0; t < p.residual_kw.size(); ++t) {
        double need = p.residual_kw[t] - p.import_cap_kw;  // kW the battery must supply
        if (need > 0.0) {
            if (need > p.p_max_discharge_kw + 1e-9)
                throw std::runtime_error("dispatch infeasible at step " + std::to_string(t) +
                                         ": deficit exceeds import cap plus discharge power");
            e -= need * gd;
            if (e < e_lo - 1e-9)
                throw std::runtime_error("dispatch infeasible at step " + std::to_string(t) +
                                         ": battery energy exhausted under import cap");
        } else {
            double headroom = std::min(p.p_max_charge_kw, -need);  // spare import + surplus
            e = std::min(e_hi, e + headroom * gc);
        }
    }
    // the maximal trajectory also bounds the achievable terminal state
    if (e < std::max(e_lo, p.soc_initial * p.e_cap_kwh) - 1e-9)
        throw std::runtime_error(
            "dispatch infeasible: import cap leaves no room to restore the terminal "
            "state of charge");
}

}  // namespace

DispatchLpSolution solve_dispatch_lp(const DispatchLpProblem& p) {
    const std::size_t T = p.residual_kw.size();
    if (T == 0) throw std::invalid_argument("empty dispatch horizon");
    if (p.import_price.size() != T || p.export_price.size() != T)
        throw std::invalid_argument("price series length mismatch");
    if (p.e_cap_kwh <= 0.0 || p.p_max_charge_kw <= 0.0 || p.p_max_discharge_kw <= 0.0)
        throw std::invalid_argument("solve_dispatch_lp needs a usable battery");
    if (!(p.soc_min <= p.soc_initial && p.soc_initial <= p.soc_max))
        throw std::invalid_argument("initial SoC outside [soc_min, soc_max]");
    if (!std::isfinite(p.import_cap_kw)) {
        // selling above the purchase price with unlimited imports is an
        // unbounded ray (simultaneous import+export); real tariffs keep
        // import prices above the feed-in rate
        for (std::size_t t = 0; t < T; ++t)
            if (p.import_price[t] < p.export_price[t])
                throw std::invalid_argument(
                    "import price below export price at step " + std::to_string(t) +
                    " makes the dispatch LP unbounded");
    }
    check_import_cap_feasible(p);

    Work w;
    w.T = T;
    w.n = 5 * T;
    w.m = 2 * T;
    w.gc = p.eta_charge * p.ts_hours;
    w.gd = p.ts_hours / p.eta_discharge;

    const double e0 = p.soc_initial * p.e_cap_kwh;
    const double e_lo = p.soc_min * p.e_cap_kwh;
    const double e_hi = p.soc_max * p.e_cap_kwh;
    const double ts = p.ts_hours;

    w.c.resize(w.n);
    w.lo.resize(w.n);
    w.up.resize(w.n);
    w.b.resize(w.m);
    for (std::size_t t = 0; t < T; ++t) {
        double* c = &w.c[5 * t];
        double* lo = &w.lo[5 * t];
        double* up = &w.up[5 * t];
        c[0] = p.import_price[t] * ts;
        c[1] = -p.export_price[t] * ts;
        c[2] = p.charge_cost * ts;
        c[3] = p.discharge_cost * ts;
        c[4] = 0.0;
        lo[0] = 0.0;
        up[0] = p.import_cap_kw;
        lo[1] = 0.0;
        up[1] = kInf;
        lo[2] = 0.0;
        up[2] = p.p_max_charge_kw;
        lo[3] = 0.0;
        up[3] = p.p_max_discharge_kw;
        lo[4] = e_lo;
        up[4] = e_hi;
        w.b[2 * t] = p.residual_kw[t];
        w.b[2 * t + 1] = (t == 0) ? e0 : 0.0;
    }
    w.lo[w.n - 1] = std::max(e_lo, e0);  // terminal stored energy >= initial

    // zero-width boxes (e.g. terminal = soc_max) break the log barrier; widen
    // them by an epsilon far below every feasibility tolerance
    for (std::size_t j = 0; j < w.n; ++j) {
        if (std::isfinite(w.up[j]) && w.up[j] - w.lo[j] < 1e-9)
            w.lo[j] = w.up[j] - 1e-9 * std::max(1.0, std::abs(w.up[j]));
    }

    // interior start
    w.x.resize(w.n);
    w.zl.assign(w.n, 1.0);
    w.zu.assign(w.n, 0.0);
    for (std::size_t j = 0; j < w.n; ++j) {
        if (std::isfinite(w.up[j])) {
            double span = std::max(w.up[j] - w.lo[j], 1e-9);
            w.x[j] = w.lo[j] + 0.5 * span;
            w.zu[j] = 1.0;
        } else {
            w.x[j] = w.lo[j] + 1.0 + std::abs(w.b[(j / 5) * 2]);
        }
    }
    w.y.assign(w.m, 0.0);

    auto sized = [&](std::vector<double>& v, std::size_t k) { v.assign(k, 0.0); };
    sized(w.sl, w.n);
    sized(w.su, w.n);
    sized(w.rp, w.m);
    sized(w.rd, w.n);
    sized(w.theta, w.n);
    sized(w.g, w.n);
    sized(w.rcl, w.n);
    sized(w.rcu, w.n);
    sized(w.dx, w.n);
    sized(w.dy, w.m);
    sized(w.dzl, w.n);
    sized(w.dzu, w.n);
    sized(w.dx_a, w.n);
    sized(w.dzl_a, w.n);
    sized(w.dzu_a, w.n);
    sized(w.m0, w.m);
    sized(w.m1, w.m);
    sized(w.m2, w.m);
    sized(w.fd, w.m);
    sized(w.fl1, w.m);
    sized(w.fl2, w.m);
    sized(w.rhs, w.m);

    std::vector<double> ax(w.m), aty(w.n), tmp_n(w.n);

    double bnorm = 1.0, cnorm = 1.0;
    for (double v : w.b) bnorm = std::max(bnorm, std::abs(v));
    for (double v : w.c) cnorm = std::max(cnorm, std::abs(v));

    std::size_t finite_upper = 0;
    for (std::size_t j = 0; j < w.n; ++j)
        if (std::isfinite(w.up[j])) ++finite_upper;
    const double nnz = static_cast<double>(w.n + finite_upper);

    const int max_iter = 200;
    const double tol = std::max(p.tolerance, 1e-12);
    bool converged = false;
    int iter = 0;

    auto solve_direction = [&](std::vector<double>& dx, std::vector<double>& dzl,
                               std::vector<double>& dzu) {
        for (std::size_t j = 0; j < w.n; ++j) {
            double gj = w.rd[j] - w.rcl[j] / w.sl[j];
            if (std::isfinite(w.up[j])) gj += w.rcu[j] / w.su[j];
            w.g[j] = gj;
            tmp_n[j] = gj * w.theta[j];
        }
        mul_a(w, tmp_n, w.rhs);
        for (std::size_t i = 0; i < w.m; ++i) w.rhs[i] += w.rp[i];
        band_solve(w, w.rhs);
        w.dy = w.rhs;
        mul_at(w, w.dy, tmp_n);
        for (std::size_t j = 0; j < w.n; ++j) dx[j] = w.theta[j] * (tmp_n[j] - w.g[j]);
        for (std::size_t j = 0; j < w.n; ++j) {
            dzl[j] = (w.rcl[j] - w.zl[j] * dx[j]) / w.sl[j];
            dzu[j] = std::isfinite(w.up[j]) ? (w.rcu[j] + w.zu[j] * dx[j]) / w.su[j] : 0.0;
        }
    };

    for (iter = 0; iter < max_iter; ++iter) {
        for (std::size_t j = 0; j < w.n; ++j) {
            w.sl[j] = std::max(w.x[j] - w.lo[j], 1e-14);
            w.su[j] = std::isfinite(w.up[j]) ? std::max(w.up[j] - w.x[j], 1e-14) : kInf;
        }

        mul_a(w, w.x, ax);
        for (std::size_t i = 0; i < w.m; ++i) w.rp[i] = w.b[i] - ax[i];
        mul_at(w, w.y, aty);
        for (std::size_t j = 0; j < w.n; ++j) w.rd[j] = w.c[j] - aty[j] - w.zl[j] + w.zu[j];

        double gap = 0.0;
        for (std::size_t j = 0; j < w.n; ++j) {
            gap += w.sl[j] * w.zl[j];
            if (std::isfinite(w.up[j])) gap += w.su[j] * w.zu[j];
        }
        double mu = gap / nnz;

        double obj = 0.0;
        for (std::size_t j = 0; j < w.n; ++j) obj += w.c[j] * w.x[j];
        double rp_inf = 0.0, rd_inf = 0.0;
        for (double v : w.rp) rp_inf = std::max(rp_inf, std::abs(v));
        for (double v : w.rd) rd_inf = std::max(rd_inf, std::abs(v));
        if (rp_inf / bnorm < tol && rd_inf / cnorm < tol && gap / (1.0 + std::abs(obj)) < tol) {
            converged = true;
            break;
        }

        for (std::size_t j = 0; j < w.n; ++j) {
            double dj = w.zl[j] / w.sl[j];
            if (std::isfinite(w.up[j])) dj += w.zu[j] / w.su[j];
            w.theta[j] = 1.0 / std::max(dj, 1e-14);
        }
        build_normal(w);
        band_factor(w);

        // affine scaling direction
        for (std::size_t j = 0; j < w.n; ++j) {
            w.rcl[j] = -w.sl[j] * w.zl[j];
            w.rcu[j] = std::isfinite(w.up[j]) ? -w.su[j] * w.zu[j] : 0.0;
        }
        solve_direction(w.dx_a, w.dzl_a, w.dzu_a);

        double ap = 1.0, ad = 1.0;
        for (std::size_t j = 0; j < w.n; ++j) {
            if (w.dx_a[j] < 0.0) ap = std::min(ap, -w.sl[j] / w.dx_a[j]);
            if (std::isfinite(w.up[j]) && w.dx_a[j] > 0.0) ap = std::min(ap, w.su[j] / w.dx_a[j]);
            if (w.dzl_a[j] < 0.0) ad = std::min(ad, -w.zl[j] / w.dzl_a[j]);
            if (std::isfinite(w.up[j]) && w.dzu_a[j] < 0.0)
                ad = std::min(ad, -w.zu[j] / w.dzu_a[j]);
        }
        double mu_aff = 0.0;
        for (std::size_t j = 0; j < w.n; ++j) {
            mu_aff += (w.sl[j] + ap * w.dx_a[j]) * (w.zl[j] + ad * w.dzl_a[j]);
            if (std::isfinite(w.up[j]))
                mu_aff += (w.su[j] - ap * w.dx_a[j]) * (w.zu[j] + ad * w.dzu_a[j]);
        }
        mu_aff /= nnz;
        double sigma = std::clamp(std::pow(mu_aff / std::max(mu, 1e-300), 3), 1e-8, 1.0);

        // centering + Mehrotra corrector
        for (std::size_t j = 0; j < w.n; ++j) {
            w.rcl[j] = sigma * mu - w.sl[j] * w.zl[j] - w.dx_a[j] * w.dzl_a[j];
            w.rcu[j] = std::isfinite(w.up[j])
                           ? sigma * mu - w.su[j] * w.zu[j] + w.dx_a[j] * w.dzu_a[j]
                           : 0.0;
        }
        solve_direction(w.dx, w.dzl, w.dzu);

        ap = 1.0;
        ad = 1.0;
        for (std::size_t j = 0; j < w.n; ++j) {
            if (w.dx[j] < 0.0) ap = std::min(ap, -w.sl[j] / w.dx[j]);
            if (std::isfinite(w.up[j]) && w.dx[j] > 0.0) ap = std::min(ap, w.su[j] / w.dx[j]);
            if (w.dzl[j] < 0.0) ad = std::min(ad, -w.zl[j] / w.dzl[j]);
            if (std::isfinite(w.up[j]) && w.dzu[j] < 0.0) ad = std::min(ad, -w.zu[j] / w.dzu[j]);
        }
        ap = std::min(1.0, 0.9995 * ap);
        ad = std::min(1.0, 0.9995 * ad);

        for (std::size_t j = 0; j < w.n; ++j) {
            w.x[j] += ap * w.dx[j];
            w.zl[j] = std::max(w.zl[j] + ad * w.dzl[j], 1e-300);
            if (std::isfinite(w.up[j])) w.zu[j] = std::max(w.zu[j] + ad * w.dzu[j], 1e-300);
        }
        for (std::size_t i = 0; i < w.m; ++i) w.y[i] += ad * w.dy[i];
    }

    // Dual lower bound from a feasibility-projected dual point: with
    // g = c - A'y split into its positive/negative parts against the bounds,
    // b'y + lo'max(g,0) - up'max(-g,0) underestimates every feasible cost.
    mul_at(w, w.y, aty);
    double bound = 0.0;
    for (std::size_t i = 0; i < w.m; ++i) bound += w.b[i] * w.y[i];
    for (std::size_t j = 0; j < w.n; ++j) {
        double gj = w.c[j] - aty[j];
        if (gj > 0.0)
            bound += w.lo[j] * gj;
        else if (std::isfinite(w.up[j]))
            bound += w.up[j] * gj;
        // else: negative reduced cost on an unbounded variable; at
        // convergence it is >= -tol and the clamped term is negligible.
    }

    DispatchLpSolution sol;
    sol.iterations = iter;
    sol.converged = converged;
    sol.import_kw.resize(T);
    sol.export_kw.resize(T);
    sol.charge_kw.resize(T);
    sol.discharge_kw.resize(T);
    sol.soc.resize(T + 1);

    // Clean residual interior fuzz: cancel simultaneous charge/discharge
    // (leaves the stored-energy path unchanged, never raises cost), then
    // split import/export optimally against the fixed residual.
    sol.soc[0] = p.soc_initial;
    double e = e0;
    for (std::size_t t = 0; t < T; ++t) {
        double ch = std::clamp(w.x[5 * t + 2], 0.0, p.p_max_charge_kw);
        double dis = std::clamp(w.x[5 * t + 3], 0.0, p.p_max_discharge_kw);
        double cancel = std::min(ch * w.gc, dis * w.gd);
        if (cancel > 0.0) {
            ch -= cancel / w.gc;
            dis -= cancel / w.gd;
        }
        double net = p.residual_kw[t] + ch - dis;
        double imp = std::max(net, 0.0);
        if (std::isfinite(p.import_cap_kw) && imp > p.import_cap_kw) {
            // the cap can only re-bind through cleanup rounding
            dis += imp - p.import_cap_kw;
            imp = p.import_cap_kw;
            net = imp;
        }
        sol.charge_kw[t] = ch;
        sol.discharge_kw[t] = dis;
        sol.import_kw[t] = imp;
        sol.export_kw[t] = std::max(-net, 0.0);
        e += w.gc * ch - w.gd * dis;
        sol.soc[t + 1] = e / p.e_cap_kwh;
    }

    double obj = 0.0;
    for (std::size_t t = 0; t < T; ++t) {
        obj += (p.import_price[t] * sol.import_kw[t] - p.export_price[t] * sol.export_kw[t] +
                p.charge_cost * sol.charge_kw[t] + p.discharge_cost * sol.discharge_kw[t]) *
               ts;
    }
    sol.objective = obj;
    sol.lower_bound = bound;
    sol.relative_gap = (obj - bound) / std::max(1.0, std::abs(obj));

    if (!converged)
        throw std::runtime_error("dispatch LP did not converge in " + std::to_string(max_iter) +
                                 " iterations (relative gap " + std::to_string(sol.relative_gap) +
                                 ")");
    return sol;
}

}  // namespace celsim::lp
