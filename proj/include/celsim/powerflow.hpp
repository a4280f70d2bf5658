#ifndef CELSIM_POWERFLOW_HPP
#define CELSIM_POWERFLOW_HPP

#include <complex>
#include <cstdint>
#include <map>
#include <span>
#include <string>
#include <vector>

namespace celsim {

struct TransformerSpec {
    double s_kva = 630.0;
    double v_hv_kv = 20.0;
    double v_lv_kv = 0.4;
    double uk_pct = 4.0;  // short-circuit impedance, % on own base
    double xr = 5.0;      // X/R ratio
};

struct LineSpec {
    std::string id;
    std::string from;
    std::string to;
    double length_m = 0.0;
    double r1_ohm = 0.0;
    double x1_ohm = 0.0;
    double rated_a = 120.0;  // default 4 AWG copper LV ampacity
};

/// Radial LV network: a tree of buses under the transformer's LV bus, with
/// a balanced three-phase single-line-equivalent model.
class LvNetwork {
  public:
    LvNetwork(TransformerSpec tr, std::vector<std::string> bus_ids, std::string root_bus,
              std::vector<LineSpec> lines,
              std::map<std::string, std::string> building_to_bus = {});

    static LvNetwork from_json_file(const std::string& path);

    const TransformerSpec& transformer() const { return transformer_; }
    std::size_t n_buses() const { return bus_ids_.size(); }
    std::size_t n_lines() const { return lines_.size(); }
    const std::vector<std::string>& bus_ids() const { return bus_ids_; }
    const std::vector<LineSpec>& lines() const { return lines_; }
    std::size_t root_index() const { return root_; }
    std::size_t bus_index(const std::string& id) const;
    const std::map<std::string, std::string>& building_to_bus() const { return building_map_; }

    /// Sum of |Z| (ohm) along the unique path from the transformer LV bus.
    double electrical_distance_ohm(std::size_t bus) const;
    /// Bus index ranking, electrically farthest first.
    std::vector<std::size_t> buses_by_distance_desc() const;

    double z_base_ohm() const;
    double current_base_a() const;
    std::complex<double> transformer_z_pu() const;

    // tree structure in breadth-first order (root first)
    const std::vector<std::size_t>& bfs_order() const { return bfs_order_; }
    const std::vector<int>& parent() const { return parent_; }
    const std::vector<int>& line_to_parent() const { return line_to_parent_; }
    std::complex<double> line_z_pu(std::size_t line) const;

  private:
    TransformerSpec transformer_;
    std::vector<std::string> bus_ids_;
    std::vector<LineSpec> lines_;
    std::map<std::string, std::string> building_map_;
    std::size_t root_ = 0;
    std::vector<int> parent_;          // -1 for root
    std::vector<int> line_to_parent_;  // -1 for root
    std::vector<std::size_t> bfs_order_;
};

/// Converged solution of one time step.
struct StepFlow {
    std::vector<double> v_pu;             // per bus, |V|
    std::vector<double> line_current_a;   // per line
    std::vector<double> line_loading_pct;
    double transformer_p_kw = 0.0;   // real power entering the LV side (+ = drawn)
    double transformer_kva = 0.0;    // apparent power at the slack
    double losses_kw = 0.0;          // line + transformer copper losses
    double max_mismatch_pu = 0.0;    // complex power mismatch at convergence
    int iterations = 0;
};

/// Backward-forward sweep; slack is the transformer MV side at 1.0 p.u.
/// injections_kw are net per-bus consumptions (load - generation - battery
/// discharge + battery charge); power_factor applies to all injections
/// (unity -> purely active). Throws after max_iter sweeps without
/// convergence.
StepFlow solve_step(const LvNetwork& net, std::span<const double> injections_kw,
                    double power_factor = 1.0, double tol_pu = 1e-12, int max_iter = 100);

/// Per-step results over a whole simulation horizon, flat arrays indexed
/// [t * n + i].
struct FlowSeries {
    std::size_t n_steps = 0;
    std::size_t n_buses = 0;
    std::size_t n_lines = 0;
    std::vector<double> v_pu;
    std::vector<double> line_loading_pct;
    std::vector<double> transformer_p_kw;
    std::vector<double> transformer_kva;
    std::vector<double> member_net_kw;  // CEL-only aggregate, if a mask was given

    double v_at(std::size_t t, std::size_t bus) const { return v_pu[t * n_buses + bus]; }
    double loading_at(std::size_t t, std::size_t line) const {
        return line_loading_pct[t * n_lines + line];
    }
};

/// Solves every step; injections_kw is [t * n_buses + b]. member_mask (per
/// bus, optional) accumulates the CEL-only net flow. n_threads <= 1 runs the
/// serial reference path; results are identical for any thread count.
FlowSeries run_year(const LvNetwork& net, std::span<const double> injections_kw,
                    std::size_t n_steps, double power_factor = 1.0,
                    std::span<const std::uint8_t> member_mask = {}, int n_threads = 0);

struct BusVoltageStats {
    double over_p95 = 0.0;   // 95th percentile of samples > 1 p.u. (0 if none)
    double under_p95 = 0.0;  // severity percentile of samples < 1 p.u.:
                             // 1 - p95(1 - V), i.e. exceeded (downwards) in
                             // only 5% of the under-voltage steps (0 if none)
    std::size_t over_count = 0;
    std::size_t under_count = 0;
    double v_min = 1.0;
    double v_max = 1.0;
};

struct BoxStats {
    double q1 = 0.0, median = 0.0, q3 = 0.0;
    double whisker_lo = 0.0, whisker_hi = 0.0;  // 1.5 IQR fences clipped to data
    std::size_t n = 0;
};

struct VoltageStats {
    std::vector<BusVoltageStats> per_bus;
    BoxStats over_box;   // distribution of per-bus over_p95 values
    BoxStats under_box;
};

/// Linear-interpolation percentile of a sorted sample, q in [0,1].
double percentile_sorted(std::span<const double> sorted, double q);

VoltageStats voltage_stats(const FlowSeries& series);

struct YearKpis {
    double max_feed_in_kw = 0.0;   // whole feeder, at the transformer
    double max_drawn_kw = 0.0;
    double cel_max_feed_in_kw = 0.0;  // CEL members only (0 without a mask)
    double cel_max_drawn_kw = 0.0;
    std::vector<double> line_max_loading_pct;
    std::vector<double> line_median_loading_pct;
    VoltageStats voltage;
};

YearKpis extract_kpis(const LvNetwork& net, const FlowSeries& series);

}  // namespace celsim

#endif
