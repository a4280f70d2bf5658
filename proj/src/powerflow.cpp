#include "celsim/powerflow.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <stdexcept>

#include <json.hpp>

#ifdef _OPENMP
#include <omp.h>
#endif

namespace celsim {

LvNetwork::LvNetwork(TransformerSpec tr, std::vector<std::string> bus_ids, std::string root_bus,
                     std::vector<LineSpec> lines, std::map<std::string, std::string> building_map)
    : transformer_(tr),
      bus_ids_(std::move(bus_ids)),
      lines_(std::move(lines)),
      building_map_(std::move(building_map)) {
    if (bus_ids_.empty()) throw std::invalid_argument("network has no buses");
    std::map<std::string, std::size_t> index;
    for (std::size_t i = 0; i < bus_ids_.size(); ++i) {
        if (!index.emplace(bus_ids_[i], i).second)
            throw std::invalid_argument("duplicate bus id " + bus_ids_[i]);
    }
    auto it = index.find(root_bus);
    if (it == index.end()) throw std::invalid_argument("root bus " + root_bus + " not defined");
    root_ = it->second;

    // adjacency, then BFS from the root; any back edge means a cycle
    std::vector<std::vector<std::pair<std::size_t, std::size_t>>> adj(bus_ids_.size());
    for (std::size_t l = 0; l < lines_.size(); ++l) {
        const auto& ln = lines_[l];
        auto f = index.find(ln.from);
        auto t = index.find(ln.to);
        if (f == index.end() || t == index.end())
            throw std::invalid_argument("line " + ln.id + " references unknown bus");
        if (ln.r1_ohm < 0.0 || ln.x1_ohm < 0.0 || (ln.r1_ohm == 0.0 && ln.x1_ohm == 0.0))
            throw std::invalid_argument("line " + ln.id + " needs a positive impedance");
        adj[f->second].push_back({t->second, l});
        adj[t->second].push_back({f->second, l});
    }

    parent_.assign(bus_ids_.size(), -1);
    line_to_parent_.assign(bus_ids_.size(), -1);
    std::vector<bool> seen(bus_ids_.size(), false);
    bfs_order_.clear();
    bfs_order_.push_back(root_);
    seen[root_] = true;
    for (std::size_t head = 0; head < bfs_order_.size(); ++head) {
        std::size_t u = bfs_order_[head];
        for (auto [v, l] : adj[u]) {
            if (static_cast<int>(l) == line_to_parent_[u]) continue;
            if (seen[v])
                throw std::invalid_argument("network is non-radial: cycle through line " +
                                            lines_[l].id);
            seen[v] = true;
            parent_[v] = static_cast<int>(u);
            line_to_parent_[v] = static_cast<int>(l);
            bfs_order_.push_back(v);
        }
    }
    if (bfs_order_.size() != bus_ids_.size()) {
        for (std::size_t i = 0; i < seen.size(); ++i)
            if (!seen[i])
                throw std::invalid_argument("bus " + bus_ids_[i] +
                                            " is not connected to the transformer");
    }
    for (const auto& [building, bus] : building_map_) {
        if (!index.count(bus))
            throw std::invalid_argument("building " + building + " mapped to unknown bus " + bus);
    }
}

std::size_t LvNetwork::bus_index(const std::string& id) const {
    for (std::size_t i = 0; i < bus_ids_.size(); ++i)
        if (bus_ids_[i] == id) return i;
    throw std::invalid_argument("unknown bus " + id);
}

double LvNetwork::electrical_distance_ohm(std::size_t bus) const {
    double d = 0.0;
    while (parent_[bus] >= 0) {
        const LineSpec& ln = lines_[line_to_parent_[bus]];
        d += std::hypot(ln.r1_ohm, ln.x1_ohm);
        bus = static_cast<std::size_t>(parent_[bus]);
    }
    return d;
}

std::vector<std::size_t> LvNetwork::buses_by_distance_desc() const {
    std::vector<std::size_t> order(n_buses());
    for (std::size_t i = 0; i < order.size(); ++i) order[i] = i;
    std::vector<double> dist(n_buses());
    for (std::size_t i = 0; i < n_buses(); ++i) dist[i] = electrical_distance_ohm(i);
    std::stable_sort(order.begin(), order.end(),
                     [&](std::size_t a, std::size_t b) { return dist[a] > dist[b]; });
    return order;
}

double LvNetwork::z_base_ohm() const {
    return transformer_.v_lv_kv * transformer_.v_lv_kv * 1000.0 / transformer_.s_kva;
}

double LvNetwork::current_base_a() const {
    return transformer_.s_kva * 1000.0 /
           (std::sqrt(3.0) * transformer_.v_lv_kv * 1000.0);
}

std::complex<double> LvNetwork::transformer_z_pu() const {
    double zm = transformer_.uk_pct / 100.0;
    double r = zm / std::sqrt(1.0 + transformer_.xr * transformer_.xr);
    return {r, r * transformer_.xr};
}

std::complex<double> LvNetwork::line_z_pu(std::size_t line) const {
    const LineSpec& ln = lines_[line];
    return std::complex<double>(ln.r1_ohm, ln.x1_ohm) / z_base_ohm();
}

LvNetwork LvNetwork::from_json_file(const std::string& path) {
    std::ifstream in(path);
    if (!in) throw std::runtime_error("cannot open network file " + path);
    nlohmann::json j;
    in >> j;

    TransformerSpec tr;
    if (j.contains("transformer")) {
        const auto& t = j["transformer"];
        tr.s_kva = t.value("s_kva", tr.s_kva);
        tr.v_hv_kv = t.value("v_hv_kv", tr.v_hv_kv);
        tr.v_lv_kv = t.value("v_lv_kv", tr.v_lv_kv);
        tr.uk_pct = t.value("uk_pct", tr.uk_pct);
        tr.xr = t.value("xr", tr.xr);
    }

    std::vector<std::string> buses;
    for (const auto& b : j.at("buses")) {
        if (b.is_string())
            buses.push_back(b.get<std::string>());
        else
            buses.push_back(b.at("id").get<std::string>());
    }

    std::vector<LineSpec> lines;
    for (const auto& l : j.at("lines")) {
        LineSpec ls;
        ls.id = l.at("id").is_string() ? l.at("id").get<std::string>()
                                       : std::to_string(l.at("id").get<long long>());
        ls.from = l.at("from").get<std::string>();
        ls.to = l.at("to").get<std::string>();
        ls.length_m = l.value("length_m", 0.0);
        ls.r1_ohm = l.at("r1_ohm").get<double>();
        ls.x1_ohm = l.at("x1_ohm").get<double>();
        ls.rated_a = l.value("rated_a", 120.0);
        lines.push_back(std::move(ls));
    }

    std::string root;
    if (j.contains("root_bus")) {
        root = j["root_bus"].get<std::string>();
    } else {
        // infer: the unique bus never appearing as a line's "to" end
        std::map<std::string, int> to_count;
        for (const auto& b : buses) to_count[b] = 0;
        for (const auto& l : lines) to_count[l.to]++;
        std::vector<std::string> candidates;
        for (const auto& [b, c] : to_count)
            if (c == 0) candidates.push_back(b);
        if (candidates.size() != 1)
            throw std::runtime_error(path + ": cannot infer root bus, set \"root_bus\"");
        root = candidates[0];
    }

    std::map<std::string, std::string> bmap;
    if (j.contains("buildings")) {
        for (const auto& b : j["buildings"])
            bmap[b.at("id").get<std::string>()] = b.at("bus").get<std::string>();
    }
    return LvNetwork(tr, std::move(buses), root, std::move(lines), std::move(bmap));
}

StepFlow solve_step(const LvNetwork& net, std::span<const double> injections_kw,
                    double power_factor, double tol_pu, int max_iter) {
    const std::size_t nb = net.n_buses();
    const std::size_t nl = net.n_lines();
    if (injections_kw.size() != nb)
        throw std::invalid_argument("injection vector does not match bus count");
    if (power_factor <= 0.0 || power_factor > 1.0)
        throw std::invalid_argument("power factor must be in (0, 1]");

    using cx = std::complex<double>;
    const double s_base = net.transformer().s_kva;
    const double tan_phi = std::tan(std::acos(power_factor));

    std::vector<cx> s_pu(nb);
    for (std::size_t b = 0; b < nb; ++b) {
        double p = injections_kw[b] / s_base;
        s_pu[b] = cx(p, p * tan_phi);
    }

    std::vector<cx> v(nb, cx(1.0, 0.0));
    std::vector<cx> i_node(nb), i_branch(nb);  // i_branch[b]: current into b's subtree
    const auto& order = net.bfs_order();
    const auto& parent = net.parent();
    const auto& line_to_parent = net.line_to_parent();
    const cx z_tr = net.transformer_z_pu();

    std::vector<cx> z_line(nl);
    for (std::size_t l = 0; l < nl; ++l) z_line[l] = net.line_z_pu(l);

    int it = 0;
    double dv = 0.0;
    for (it = 1; it <= max_iter; ++it) {
        for (std::size_t b = 0; b < nb; ++b) i_node[b] = std::conj(s_pu[b] / v[b]);
        // backward: accumulate subtree currents leaf-to-root
        for (std::size_t k = order.size(); k-- > 0;) {
            std::size_t b = order[k];
            cx total = i_node[b] + i_branch[b];
            i_branch[b] = total;
            if (parent[b] >= 0) i_branch[static_cast<std::size_t>(parent[b])] += total;
        }
        // forward: update voltages root-to-leaf
        dv = 0.0;
        for (std::size_t k = 0; k < order.size(); ++k) {
            std::size_t b = order[k];
            cx v_new;
            if (parent[b] < 0)
                v_new = cx(1.0, 0.0) - z_tr * i_branch[b];
            else
                v_new = v[static_cast<std::size_t>(parent[b])] -
                        z_line[line_to_parent[b]] * i_branch[b];
            dv = std::max(dv, std::abs(v_new - v[b]));
            v[b] = v_new;
        }
        if (dv < tol_pu) break;
        std::fill(i_branch.begin(), i_branch.end(), cx(0.0, 0.0));
    }
    if (dv >= tol_pu)
        throw std::runtime_error("power flow did not converge after " +
                                 std::to_string(max_iter) + " iterations (dV=" +
                                 std::to_string(dv) + " p.u.)");

    StepFlow out;
    out.iterations = it;
    out.v_pu.resize(nb);
    for (std::size_t b = 0; b < nb; ++b) out.v_pu[b] = std::abs(v[b]);

    out.line_current_a.resize(nl);
    out.line_loading_pct.resize(nl);
    double losses_pu = 0.0;
    for (std::size_t b = 0; b < nb; ++b) {
        if (parent[b] < 0) continue;
        std::size_t l = static_cast<std::size_t>(line_to_parent[b]);
        double i_abs = std::abs(i_branch[b]);
        out.line_current_a[l] = i_abs * net.current_base_a();
        out.line_loading_pct[l] = out.line_current_a[l] / net.lines()[l].rated_a * 100.0;
        losses_pu += i_abs * i_abs * z_line[l].real();
    }
    cx i_root = i_branch[net.root_index()];
    losses_pu += std::norm(i_root) * z_tr.real();
    cx s_slack = cx(1.0, 0.0) * std::conj(i_root);
    out.transformer_p_kw = s_slack.real() * s_base;
    out.transformer_kva = std::abs(s_slack) * s_base;
    out.losses_kw = losses_pu * s_base;

    // residual complex power mismatch against the spec injections
    double mism = 0.0;
    for (std::size_t b = 0; b < nb; ++b) {
        cx inflow = i_branch[b];
        for (std::size_t k = 0; k < nb; ++k)
            if (parent[k] == static_cast<int>(b)) inflow -= i_branch[k];
        cx s_calc = v[b] * std::conj(inflow);
        mism = std::max(mism, std::abs(s_calc - s_pu[b]));
    }
    out.max_mismatch_pu = mism;
    return out;
}

FlowSeries run_year(const LvNetwork& net, std::span<const double> injections_kw,
                    std::size_t n_steps, double power_factor, std::span<const std::uint8_t> member_mask,
                    int n_threads) {
    const std::size_t nb = net.n_buses();
    const std::size_t nl = net.n_lines();
    if (injections_kw.size() != n_steps * nb)
        throw std::invalid_argument("injection matrix size mismatch");
    if (!member_mask.empty() && member_mask.size() != nb)
        throw std::invalid_argument("member mask size mismatch");

    FlowSeries s;
    s.n_steps = n_steps;
    s.n_buses = nb;
    s.n_lines = nl;
    s.v_pu.resize(n_steps * nb);
    s.line_loading_pct.resize(n_steps * nl);
    s.transformer_p_kw.resize(n_steps);
    s.transformer_kva.resize(n_steps);
    if (!member_mask.empty()) s.member_net_kw.resize(n_steps);

    std::string first_error;

    auto solve_one = [&](std::size_t t) {
        StepFlow f = solve_step(net, injections_kw.subspan(t * nb, nb), power_factor);
        std::copy(f.v_pu.begin(), f.v_pu.end(), s.v_pu.begin() + t * nb);
        std::copy(f.line_loading_pct.begin(), f.line_loading_pct.end(),
                  s.line_loading_pct.begin() + t * nl);
        s.transformer_p_kw[t] = f.transformer_p_kw;
        s.transformer_kva[t] = f.transformer_kva;
        if (!member_mask.empty()) {
            double net_kw = 0.0;
            for (std::size_t b = 0; b < nb; ++b)
                if (member_mask[b]) net_kw += injections_kw[t * nb + b];
            s.member_net_kw[t] = net_kw;
        }
    };

#ifdef _OPENMP
    if (n_threads != 1) {
        int threads = n_threads > 0 ? n_threads : omp_get_max_threads();
#pragma omp parallel for schedule(static) num_threads(threads)
        for (long long t = 0; t < static_cast<long long>(n_steps); ++t) {
            try {
                solve_one(static_cast<std::size_t>(t));
            } catch (const std::exception& e) {
#pragma omp critical
                if (first_error.empty())
                    first_error = "step " + std::to_string(t) + ": " + e.what();
            }
        }
        if (!first_error.empty()) throw std::runtime_error(first_error);
        return s;
    }
#endif
    // serial reference path
    for (std::size_t t = 0; t < n_steps; ++t) {
        try {
            solve_one(t);
        } catch (const std::exception& e) {
            throw std::runtime_error("step " + std::to_string(t) + ": " + e.what());
        }
    }
    return s;
}

double percentile_sorted(std::span<const double> sorted, double q) {
    if (sorted.empty()) throw std::invalid_argument("percentile of empty sample");
    if (sorted.size() == 1) return sorted[0];
    double h = q * static_cast<double>(sorted.size() - 1);
    std::size_t i = static_cast<std::size_t>(h);
    if (i + 1 >= sorted.size()) return sorted.back();
    double frac = h - static_cast<double>(i);
    return sorted[i] + frac * (sorted[i + 1] - sorted[i]);
}

namespace {

BoxStats box_stats(std::vector<double> values) {
    BoxStats b;
    b.n = values.size();
    if (values.empty()) return b;
    std::sort(values.begin(), values.end());
    b.q1 = percentile_sorted(values, 0.25);
    b.median = percentile_sorted(values, 0.50);
    b.q3 = percentile_sorted(values, 0.75);
    double iqr = b.q3 - b.q1;
    double lo_fence = b.q1 - 1.5 * iqr;
    double hi_fence = b.q3 + 1.5 * iqr;
    b.whisker_lo = values.front();
    b.whisker_hi = values.back();
    for (double v : values) {
        if (v >= lo_fence) {
            b.whisker_lo = v;
            break;
        }
    }
    for (auto it = values.rbegin(); it != values.rend(); ++it) {
        if (*it <= hi_fence) {
            b.whisker_hi = *it;
            break;
        }
    }
    return b;
}

}  // namespace

VoltageStats voltage_stats(const FlowSeries& series) {
    if (series.n_steps == 0) throw std::invalid_argument("voltage_stats needs at least one step");
    VoltageStats out;
    out.per_bus.resize(series.n_buses);
    std::vector<double> over, under;
    std::vector<double> over_p95s, under_p95s;
    for (std::size_t b = 0; b < series.n_buses; ++b) {
        over.clear();
        under.clear();
        BusVoltageStats& st = out.per_bus[b];
        st.v_min = st.v_max = series.v_at(0, b);
        for (std::size_t t = 0; t < series.n_steps; ++t) {
            double v = series.v_at(t, b);
            st.v_min = std::min(st.v_min, v);
            st.v_max = std::max(st.v_max, v);
            if (v > 1.0)
                over.push_back(v);
            else if (v < 1.0)
                under.push_back(v);
        }
        st.over_count = over.size();
        st.under_count = under.size();
        if (!over.empty()) {
            std::sort(over.begin(), over.end());
            st.over_p95 = percentile_sorted(over, 0.95);
            over_p95s.push_back(st.over_p95);
        }
        if (!under.empty()) {
            std::sort(under.begin(), under.end());
            st.under_p95 = percentile_sorted(under, 0.05);
            under_p95s.push_back(st.under_p95);
        }
    }
    out.over_box = box_stats(std::move(over_p95s));
    out.under_box = box_stats(std::move(under_p95s));
    return out;
}

YearKpis extract_kpis(const LvNetwork& net, const FlowSeries& series) {
    YearKpis k;
    for (std::size_t t = 0; t < series.n_steps; ++t) {
        double p = series.transformer_p_kw[t];
        k.max_drawn_kw = std::max(k.max_drawn_kw, p);
        k.max_feed_in_kw = std::max(k.max_feed_in_kw, -p);
        if (!series.member_net_kw.empty()) {
            double m = series.member_net_kw[t];
            k.cel_max_drawn_kw = std::max(k.cel_max_drawn_kw, m);
            k.cel_max_feed_in_kw = std::max(k.cel_max_feed_in_kw, -m);
        }
    }
    k.line_max_loading_pct.assign(series.n_lines, 0.0);
    k.line_median_loading_pct.assign(series.n_lines, 0.0);
    std::vector<double> col(series.n_steps);
    for (std::size_t l = 0; l < series.n_lines; ++l) {
        double mx = 0.0;
        for (std::size_t t = 0; t < series.n_steps; ++t) {
            col[t] = series.loading_at(t, l);
            mx = std::max(mx, col[t]);
        }
        std::sort(col.begin(), col.end());
        k.line_max_loading_pct[l] = mx;
        k.line_median_loading_pct[l] = percentile_sorted(col, 0.50);
    }
    (void)net;
    k.voltage = voltage_stats(series);
    return k;
}

}  // namespace celsim
