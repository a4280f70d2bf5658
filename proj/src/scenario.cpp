#include "celsim/scenario.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <set>
#include <sstream>
#include <stdexcept>

#include <json.hpp>

#ifdef _OPENMP
#include <omp.h>
#endif

namespace celsim {

using nlohmann::json;

namespace {

uint64_t mix_seed(uint64_t a, uint64_t b) {
    uint64_t z = a ^ (b + 0x9E3779B97F4A7C15ull + (a << 6) + (a >> 2));
    z = (z ^ (z >> 30)) * 0xBF58476D1CE4E5B9ull;
    z = (z ^ (z >> 27)) * 0x94D049BB133111EBull;
    return z ^ (z >> 31);
}

uint64_t hash_id(const std::string& s) {
    uint64_t h = 1469598103934665603ull;
    for (unsigned char c : s) {
        h ^= c;
        h *= 1099511628211ull;
    }
    return h;
}

}  // namespace

std::size_t Dataset::building_index(const std::string& id) const {
    for (std::size_t i = 0; i < buildings.size(); ++i)
        if (buildings[i].id == id) return i;
    throw std::invalid_argument("unknown building " + id);
}

ScenarioSpec scenario_from_json(const std::string& text) {
    json j = json::parse(text);
    ScenarioSpec s;
    s.id = j.at("id").get<std::string>();
    s.cel = j.value("cel", true);
    if (j.contains("members"))
        for (const auto& m : j["members"]) s.member_ids.push_back(m.get<std::string>());
    s.member_fraction = j.value("member_fraction", 1.0);
    if (j.contains("allocation")) {
        const auto& a = j["allocation"];
        if (a.is_string()) {
            std::string name = a.get<std::string>();
            if (name == "end_of_line")
                s.allocation = Allocation::EndOfLine;
            else if (name == "random")
                s.allocation = Allocation::Random;
            else
                throw std::invalid_argument("unknown allocation '" + name + "'");
        } else {
            s.allocation = Allocation::Random;
            s.allocation_seed = a.at("random").at("seed").get<uint64_t>();
        }
    }
    s.pv_penetration = j.value("pv_penetration", 1.0);
    std::string bat = j.value("battery", "none");
    if (bat == "none")
        s.battery = BatteryPlacement::None;
    else if (bat == "central_up")
        s.battery = BatteryPlacement::Up;
    else if (bat == "central_down")
        s.battery = BatteryPlacement::Down;
    else
        throw std::invalid_argument("unknown battery placement '" + bat + "'");
    s.battery_kwh = j.value("battery_kwh", 0.0);
    std::string tar = j.value("internal_tariff", "double");
    if (tar == "double")
        s.internal_tariff = InternalTariffChoice::Double;
    else if (tar == "dynamic")
        s.internal_tariff = InternalTariffChoice::Dynamic;
    else
        throw std::invalid_argument("unknown internal tariff '" + tar + "'");
    std::string actor = j.value("extra_actor", "none");
    if (actor == "none")
        s.extra_actor = ExtraActor::None;
    else if (actor == "large_consumer")
        s.extra_actor = ExtraActor::LargeConsumer;
    else if (actor == "large_producer")
        s.extra_actor = ExtraActor::LargeProducer;
    else
        throw std::invalid_argument("unknown extra actor '" + actor + "'");
    s.large_consumer_mwh = j.value("large_consumer_mwh", 22.0);
    s.large_producer_kwp = j.value("large_producer_kwp", 172.3);
    return s;
}

Dataset load_dataset(const DatasetPaths& paths) {
    TimeAxis axis = TimeAxis::civil_year(paths.year);

    TariffSet tariffs = paths.tariffs.empty() ? default_tariffs() : load_tariffs(paths.tariffs);
    LvNetwork network = LvNetwork::from_json_file(paths.network);

    EconomicParams econ;
    AgingParams aging;
    PvDesign pv_template;
    if (!paths.params.empty()) {
        std::ifstream in(paths.params);
        if (!in) throw std::runtime_error("cannot open params file " + paths.params);
        json j;
        in >> j;
        if (j.contains("econ")) {
            const auto& e = j["econ"];
            econ.lifetime_years = e.value("lifetime_years", econ.lifetime_years);
            econ.discount_rate = e.value("discount_rate", econ.discount_rate);
            econ.pv_maintenance_frac = e.value("pv_maintenance_frac", econ.pv_maintenance_frac);
            econ.pv_cost_per_w = e.value("pv_cost_per_w", econ.pv_cost_per_w);
            econ.pv_fixed_cost = e.value("pv_fixed_cost", econ.pv_fixed_cost);
            econ.battery_cost_per_kwh = e.value("battery_cost_per_kwh", econ.battery_cost_per_kwh);
            econ.battery_fixed_cost = e.value("battery_fixed_cost", econ.battery_fixed_cost);
            econ.battery_charge_cost = e.value("battery_charge_cost", econ.battery_charge_cost);
            econ.battery_discharge_cost =
                e.value("battery_discharge_cost", econ.battery_discharge_cost);
            econ.inverter_life_years = e.value("inverter_life_years", econ.inverter_life_years);
            econ.inverter_cost_share = e.value("inverter_cost_share", econ.inverter_cost_share);
        }
        if (j.contains("aging")) {
            const auto& a = j["aging"];
            aging.k_cyc = a.value("k_cyc", aging.k_cyc);
            aging.cyc_exponent = a.value("cyc_exponent", aging.cyc_exponent);
            aging.mean_soc_weight = a.value("mean_soc_weight", aging.mean_soc_weight);
            aging.k_cal = a.value("k_cal", aging.k_cal);
            aging.eol_threshold = a.value("eol_threshold", aging.eol_threshold);
        }
        if (j.contains("pv")) {
            const auto& p = j["pv"];
            pv_template.module_power_w = p.value("module_power_w", pv_template.module_power_w);
            pv_template.module_area_m2 = p.value("module_area_m2", pv_template.module_area_m2);
            pv_template.temp_coeff = p.value("temp_coeff", pv_template.temp_coeff);
            pv_template.noct_c = p.value("noct_c", pv_template.noct_c);
            pv_template.derate = p.value("derate", pv_template.derate);
        }
    }

    auto profile_path = [&](const std::string& name) -> std::string {
        if (paths.profiles_dir.empty()) return {};
        std::string p = paths.profiles_dir + "/" + name + ".csv";
        std::ifstream probe(p);
        return probe ? p : std::string{};
    };

    std::string ghi_csv = profile_path("ghi");
    Profile ghi = ghi_csv.empty() ? synthesize_ghi(axis, mix_seed(paths.seed, 0xA11CE))
                                  : ingest_profile(ghi_csv, Unit::WPerM2);
    std::string temp_csv = profile_path("temperature");
    Profile temp = temp_csv.empty()
                       ? synthesize_temperature(axis, mix_seed(paths.seed, 0xB0B))
                       : ingest_profile(temp_csv, Unit::DegC);
    if (ghi.axis != axis || temp.axis != axis)
        throw std::runtime_error("meteo profiles do not cover the configured year");

    std::ifstream in(paths.buildings);
    if (!in) throw std::runtime_error("cannot open buildings file " + paths.buildings);
    json j;
    in >> j;

    std::vector<BuildingRecord> buildings;
    for (const auto& b : j.at("buildings")) {
        std::string id = b.at("id").get<std::string>();
        std::string bus = b.at("bus").get<std::string>();
        network.bus_index(bus);  // throws on unknown bus
        double annual = b.at("annual_load_mwh").get<double>();
        Archetype arch = archetype_from_name(b.value("archetype", "residential"));
        double roof = b.value("roof_area_m2", 0.0);

        std::string csv = profile_path(id);
        Profile load = csv.empty()
                           ? synthesize_load(axis, std::max(annual, 1e-6), arch,
                                             mix_seed(paths.seed, hash_id(id)))
                           : ingest_profile(csv, Unit::KW);
        if (load.axis != axis)
            throw std::runtime_error("load profile for " + id + " does not cover the year");
        buildings.push_back({id, bus, annual, arch, roof, std::move(load)});
    }
    if (buildings.empty()) throw std::runtime_error("buildings file lists no buildings");

    return Dataset{std::move(axis), std::move(buildings),  std::move(ghi),
                   std::move(temp), std::move(network),    std::move(tariffs),
                   econ,            aging,                 pv_template,
                   paths.seed};
}

std::vector<std::size_t> select_members(const Dataset& data, const ScenarioSpec& spec) {
    const std::size_t n = data.buildings.size();
    if (!spec.member_ids.empty()) {
        std::vector<std::size_t> out;
        for (const auto& id : spec.member_ids) out.push_back(data.building_index(id));
        return out;
    }
    std::size_t count = static_cast<std::size_t>(std::floor(spec.member_fraction * n));
    if (count == 0)
        throw std::invalid_argument("member fraction " + std::to_string(spec.member_fraction) +
                                    " yields 0 members");
    count = std::min(count, n);

    std::vector<std::size_t> order(n);
    for (std::size_t i = 0; i < n; ++i) order[i] = i;

    if (spec.allocation == Allocation::EndOfLine) {
        std::vector<double> dist(n);
        for (std::size_t i = 0; i < n; ++i)
            dist[i] =
                data.network.electrical_distance_ohm(data.network.bus_index(data.buildings[i].bus_id));
        std::stable_sort(order.begin(), order.end(),
                         [&](std::size_t a, std::size_t b) { return dist[a] > dist[b]; });
    } else {
        uint64_t state = mix_seed(data.seed, spec.allocation_seed);
        for (std::size_t i = n - 1; i > 0; --i) {
            state = mix_seed(state, i);
            std::size_t k = static_cast<std::size_t>(state % (i + 1));
            std::swap(order[i], order[k]);
        }
    }
    order.resize(count);
    return order;
}

namespace {

Profile zero_profile(const TimeAxis& axis) {
    return Profile(axis, Unit::KW, std::vector<double>(axis.n_steps(), 0.0));
}

PvDesign max_pv_design(const Dataset& data, const BuildingRecord& b) {
    PvDesign d = data.pv_template;
    d.roof_area_m2 = b.roof_area_m2;
    d.module_count = PvDesign::max_modules(b.roof_area_m2, d.module_area_m2);
    return d;
}

DispatchPlan passthrough(const Profile& load, const Profile& pv, const PvDesign& design) {
    DispatchPlan plan(load.axis);
    std::size_t n = load.size();
    plan.import_kw.resize(n);
    plan.export_kw.resize(n);
    plan.charge_kw.assign(n, 0.0);
    plan.discharge_kw.assign(n, 0.0);
    plan.soc.assign(n + 1, 0.0);
    for (std::size_t t = 0; t < n; ++t) {
        double r = load[t] - pv[t];
        plan.import_kw[t] = std::max(r, 0.0);
        plan.export_kw[t] = std::max(-r, 0.0);
    }
    plan.pv = design;
    return plan;
}

/// Battery optimum for one building with its PV pinned (max PV when the roof
/// allows it, none otherwise).
double battery_optimum_kwh(const Dataset& data, const BuildingRecord& b, bool with_pv,
                           double lp_tolerance) {
    PvDesign tmpl = data.pv_template;
    tmpl.roof_area_m2 = with_pv ? b.roof_area_m2 : 0.0;
    SizingOptions opts;
    opts.dispatch.aging = data.aging;
    opts.dispatch.lp_tolerance = lp_tolerance;
    SizingResult r = size_building(b.load, data.ghi, data.temperature, tmpl,
                                   data.tariffs.external, data.tariffs.external, data.econ,
                                   SizingMode::MaxPv, opts);
    return r.battery.e_cap_kwh;
}

struct ActorSet {
    std::vector<std::string> names;
    std::vector<DispatchPlan> plans;
};

}  // namespace

ScenarioResult run_scenario(const ScenarioSpec& spec, const Dataset& data, int n_threads,
                            SizingCache* cache) {
    const TimeAxis& axis = data.axis;
    const double ts = axis.step_hours();
    const EconomicParams& econ = data.econ;

    std::vector<std::size_t> member_idx = select_members(data, spec);
    const std::size_t n_members = member_idx.size();

    // --- PV assignment: ceil(penetration * members), lowest PV-to-consumption
    // ratio first, buildings without a usable roof excluded.
    const Profile zero = zero_profile(axis);
    std::vector<MemberState> members;
    members.reserve(n_members);
    for (std::size_t m = 0; m < n_members; ++m)
        members.push_back(MemberState{member_idx[m], false, data.pv_template, zero, 0.0});
    std::vector<std::size_t> eligible;
    std::vector<double> pv_ratio(n_members, 0.0);
    for (std::size_t m = 0; m < n_members; ++m) {
        const BuildingRecord& b = data.buildings[member_idx[m]];
        PvDesign d = max_pv_design(data, b);
        if (d.module_count > 0) {
            Profile prod = pv_production(d, data.ghi, data.temperature);
            double pv_mwh = prod.annual_energy_kwh() / 1000.0;
            double load_mwh = b.load.annual_energy_kwh() / 1000.0;
            pv_ratio[m] = load_mwh > 0.0 ? pv_mwh / load_mwh
                                         : std::numeric_limits<double>::infinity();
            eligible.push_back(m);
        }
    }
    std::stable_sort(eligible.begin(), eligible.end(),
                     [&](std::size_t a, std::size_t b) { return pv_ratio[a] < pv_ratio[b]; });
    std::size_t n_pv = std::min<std::size_t>(
        static_cast<std::size_t>(std::ceil(spec.pv_penetration * n_members)), eligible.size());
    for (std::size_t k = 0; k < n_pv; ++k) members[eligible[k]].has_pv = true;

    for (std::size_t m = 0; m < n_members; ++m) {
        const BuildingRecord& b = data.buildings[member_idx[m]];
        if (members[m].has_pv) {
            members[m].pv = max_pv_design(data, b);
            members[m].pv_output = pv_production(members[m].pv, data.ghi, data.temperature);
        } else {
            members[m].pv = data.pv_template;
            members[m].pv.roof_area_m2 = b.roof_area_m2;
        }
    }

    // --- central battery: pinned capacity or the sum of per-building optima
    double central_kwh = 0.0;
    if (spec.battery != BatteryPlacement::None) {
        if (spec.battery_kwh > 0.0) {
            central_kwh = spec.battery_kwh;
        } else {
            std::vector<char> cached(n_members, 0);
            if (cache) {
                for (std::size_t m = 0; m < n_members; ++m) {
                    auto it = cache->battery_kwh.find(
                        {data.buildings[member_idx[m]].id, members[m].has_pv});
                    if (it != cache->battery_kwh.end()) {
                        members[m].battery_optimum_kwh = it->second;
                        cached[m] = 1;
                    }
                }
            }
#ifdef _OPENMP
#pragma omp parallel for schedule(dynamic) num_threads(n_threads > 0 ? n_threads : omp_get_max_threads())
#endif
            for (long long m = 0; m < static_cast<long long>(n_members); ++m) {
                if (cached[m]) continue;
                const BuildingRecord& b = data.buildings[member_idx[m]];
                members[m].battery_optimum_kwh =
                    battery_optimum_kwh(data, b, members[m].has_pv, 1e-7);
            }
            if (cache) {
                for (std::size_t m = 0; m < n_members; ++m)
                    cache->battery_kwh[{data.buildings[member_idx[m]].id,
                                        members[m].has_pv}] = members[m].battery_optimum_kwh;
            }
            for (const auto& m : members) central_kwh += m.battery_optimum_kwh;
        }
    }

    // --- large actors join the virtual building only
    std::optional<Profile> extra_load;
    std::optional<Profile> extra_pv;
    double extra_pv_capex = 0.0;
    int extra_pv_systems = 0;
    if (spec.extra_actor == ExtraActor::LargeConsumer) {
        extra_load = synthesize_load(axis, spec.large_consumer_mwh, Archetype::NonResidential,
                                     mix_seed(data.seed, 0xC0175));
    } else if (spec.extra_actor == ExtraActor::LargeProducer) {
        PvDesign d = data.pv_template;
        d.module_count =
            static_cast<int>(std::lround(spec.large_producer_kwp * 1000.0 / d.module_power_w));
        d.roof_area_m2 = d.module_count * d.module_area_m2 / 0.70 + 1.0;
        extra_pv = pv_production(d, data.ghi, data.temperature);
        extra_pv_capex = econ.pv_capex(d);
        extra_pv_systems = 1;
    }

    // --- virtual building
    std::vector<Profile> loads;
    std::vector<Profile> pvs;
    for (const auto& m : members) {
        loads.push_back(data.buildings[m.building].load);
        if (m.has_pv) pvs.push_back(m.pv_output);
    }
    if (extra_load) loads.push_back(*extra_load);
    if (extra_pv) pvs.push_back(*extra_pv);
    auto [vload, vpv] = aggregate_virtual_building(loads, pvs);

    double total_pv_capex = extra_pv_capex;
    int pv_systems = extra_pv_systems;
    double total_pv_kwp = 0.0;
    for (const auto& m : members) {
        if (m.has_pv) {
            total_pv_capex += econ.pv_capex(m.pv);
            total_pv_kwp += m.pv.capacity_kwp();
            ++pv_systems;
        }
    }
    if (extra_pv) total_pv_kwp += spec.large_producer_kwp;

    // --- community dispatch against the external tariff
    BatteryDesign central = BatteryDesign::with_capacity(central_kwh);
    DispatchOptions dopts;
    dopts.aging = data.aging;
    dopts.pv_capex_override = total_pv_capex;
    PvDesign community_pv = data.pv_template;  // only capex matters, overridden above
    auto import_prices = data.tariffs.external.import_price_series_chf(axis);
    std::vector<double> export_prices(axis.n_steps(),
                                      data.tariffs.external.price_export() / 100.0);
    DispatchResult community = optimize_dispatch(vload, vpv, community_pv, central,
                                                 import_prices, export_prices, econ, dopts);

    // --- settlement actors: members, large actors, the central battery
    ActorSet actors;
    for (const auto& m : members) {
        actors.names.push_back(data.buildings[m.building].id);
        actors.plans.push_back(
            passthrough(data.buildings[m.building].load, m.pv_output, m.pv));
    }
    if (extra_load) {
        actors.names.push_back("large_consumer");
        actors.plans.push_back(passthrough(*extra_load, zero_profile(axis), data.pv_template));
    }
    if (extra_pv) {
        actors.names.push_back("large_producer");
        actors.plans.push_back(passthrough(zero_profile(axis), *extra_pv, data.pv_template));
    }
    if (central.usable()) {
        DispatchPlan bat_plan(axis);
        bat_plan.import_kw = community.plan.charge_kw;
        bat_plan.export_kw = community.plan.discharge_kw;
        bat_plan.charge_kw = community.plan.charge_kw;
        bat_plan.discharge_kw = community.plan.discharge_kw;
        bat_plan.soc = community.plan.soc;
        bat_plan.battery = central;
        actors.names.push_back("central_battery");
        actors.plans.push_back(std::move(bat_plan));
    }

    const TariffSchedule& internal = spec.internal_tariff == InternalTariffChoice::Double
                                         ? data.tariffs.internal_double
                                         : data.tariffs.internal_dynamic;

    std::optional<ExchangeSettlement> settlement;
    if (spec.cel)
        settlement = settle_exchange(actors.plans, internal, data.tariffs.external, &data.ghi);

    // --- nodal power flow over the whole feeder
    const LvNetwork& net = data.network;
    const std::size_t nb = net.n_buses();
    const std::size_t n_steps = axis.n_steps();

    std::vector<bool> is_member(data.buildings.size(), false);
    for (std::size_t m : member_idx) is_member[m] = true;

    std::vector<double> injections(n_steps * nb, 0.0);
    for (std::size_t i = 0; i < data.buildings.size(); ++i) {
        std::size_t bus = net.bus_index(data.buildings[i].bus_id);
        const Profile& load = data.buildings[i].load;
        const Profile* pv = nullptr;
        for (std::size_t m = 0; m < n_members; ++m) {
            if (member_idx[m] == i && members[m].has_pv) {
                pv = &members[m].pv_output;
                break;
            }
        }
        for (std::size_t t = 0; t < n_steps; ++t)
            injections[t * nb + bus] += load[t] - (pv ? (*pv)[t] : 0.0);
    }

    std::size_t battery_bus = net.root_index();
    if (central.usable()) {
        if (spec.battery == BatteryPlacement::Up) {
            // bus of the largest PV producer
            double best = -1.0;
            for (const auto& m : members) {
                if (m.has_pv && m.pv.capacity_kwp() > best) {
                    best = m.pv.capacity_kwp();
                    battery_bus = net.bus_index(data.buildings[m.building].bus_id);
                }
            }
        } else {
            // end of the line: electrically farthest member bus
            double best = -1.0;
            for (const auto& m : members) {
                std::size_t bus = net.bus_index(data.buildings[m.building].bus_id);
                double d = net.electrical_distance_ohm(bus);
                if (d > best) {
                    best = d;
                    battery_bus = bus;
                }
            }
        }
        for (std::size_t t = 0; t < n_steps; ++t)
            injections[t * nb + battery_bus] +=
                community.plan.charge_kw[t] - community.plan.discharge_kw[t];
    }

    FlowSeries flows = run_year(net, injections, n_steps, 1.0, {}, n_threads);
    // CEL-only aggregate from actor flows (large actors have no bus)
    flows.member_net_kw.assign(n_steps, 0.0);
    for (std::size_t t = 0; t < n_steps; ++t) {
        double v = 0.0;
        for (const auto& m : members) {
            v += data.buildings[m.building].load[t];
            if (m.has_pv) v -= m.pv_output[t];
        }
        if (central.usable()) v += community.plan.charge_kw[t] - community.plan.discharge_kw[t];
        flows.member_net_kw[t] = v;
    }

    // reference flows: members at max PV, no battery (Table-7-style baseline)
    std::vector<double> base_inj(n_steps * nb, 0.0);
    for (std::size_t i = 0; i < data.buildings.size(); ++i) {
        std::size_t bus = net.bus_index(data.buildings[i].bus_id);
        const Profile& load = data.buildings[i].load;
        std::optional<Profile> pv;
        if (is_member[i]) {
            PvDesign d = max_pv_design(data, data.buildings[i]);
            if (d.module_count > 0) pv = pv_production(d, data.ghi, data.temperature);
        }
        for (std::size_t t = 0; t < n_steps; ++t)
            base_inj[t * nb + bus] += load[t] - (pv ? (*pv)[t] : 0.0);
    }
    FlowSeries base_flows = run_year(net, base_inj, n_steps, 1.0, {}, n_threads);

    // --- economics
    KpiReport kpi;
    kpi.scenario_id = spec.id;
    for (const auto& m : members) kpi.member_ids.push_back(data.buildings[m.building].id);
    kpi.pv_kwp = total_pv_kwp;
    kpi.battery_kwh = central_kwh;
    kpi.cost = community.cost;

    double dso_retained = settlement ? settlement->dso_retained_chf : 0.0;
    double annual_scen_grid;
    if (spec.cel) {
        annual_scen_grid = community.cost.ox_grid_exchange + dso_retained;
    } else {
        annual_scen_grid = 0.0;
        for (const auto& p : actors.plans)
            annual_scen_grid += grid_cost(p, import_prices, export_prices);
    }

    auto sched = replacement_schedule(community.plan.soc, central_kwh, total_pv_capex, econ,
                                      data.aging);
    double inverter_unit = econ.inverter_cost_share * econ.pv_fixed_cost;
    // one inverter per PV system; the schedule prices a single unit
    sched.inverter_residual_chf *= pv_systems;

    LedgerInputs lin;
    lin.pv_capex_chf = total_pv_capex;
    lin.battery_capex_chf = econ.battery_capex(central_kwh);
    lin.inverter_unit_cost_chf = inverter_unit * pv_systems;
    lin.replacements = sched;
    lin.annual_grid_cost_chf = annual_scen_grid;
    lin.annual_maintenance_chf =
        econ.pv_maintenance_frac * total_pv_capex + community.cost.ox_battery_op;
    lin.annual_served_mwh = vload.annual_energy_kwh() / 1000.0;
    lin.lifetime_years = econ.lifetime_years;
    CashflowLedger scen_ledger = build_ledger(lin);

    // grid-only baseline: every kWh of load imported, no assets
    double base_annual = 0.0;
    for (const auto& m : members) {
        DispatchPlan raw = passthrough(data.buildings[m.building].load, zero_profile(axis),
                                       data.pv_template);
        base_annual += grid_cost(raw, import_prices, export_prices);
    }
    if (extra_load) {
        DispatchPlan raw = passthrough(*extra_load, zero_profile(axis), data.pv_template);
        base_annual += grid_cost(raw, import_prices, export_prices);
    }
    LedgerInputs bin;
    bin.annual_grid_cost_chf = base_annual;
    bin.annual_served_mwh = lin.annual_served_mwh;
    bin.lifetime_years = econ.lifetime_years;
    CashflowLedger base_ledger = build_ledger(bin);

    kpi.lcoe_chf_kwh = lcoe(scen_ledger, econ.discount_rate);
    kpi.profit_chf = profit(base_ledger, scen_ledger, econ.discount_rate);
    std::vector<double> irr_flows(scen_ledger.years());
    for (std::size_t t = 0; t < irr_flows.size(); ++t)
        irr_flows[t] = base_ledger.net_cost(t) - scen_ledger.net_cost(t);
    try {
        IrrResult r = irr(irr_flows);
        kpi.irr_pct = r.rate * 100.0;
        kpi.irr_defined = true;
        kpi.irr_multiple_roots = r.multiple_roots;
    } catch (const std::exception&) {
        kpi.irr_defined = false;
    }
    kpi.dpp_years = discounted_payback(irr_flows, econ.discount_rate);

    // --- bills and revenue loss
    kpi.bill_rows = actors.names;
    kpi.bills_no_cel.resize(actors.plans.size());
    for (std::size_t a = 0; a < actors.plans.size(); ++a)
        kpi.bills_no_cel[a] = external_bill(actors.plans[a], data.tariffs.external);
    if (settlement) {
        kpi.bills_cel = settlement->member_bills;
    } else {
        kpi.bills_cel = kpi.bills_no_cel;
    }
    BillBreakdown total_cel, total_no_cel;
    for (std::size_t a = 0; a < actors.plans.size(); ++a) {
        total_cel = total_cel + kpi.bills_cel[a];
        total_no_cel = total_no_cel + kpi.bills_no_cel[a];
    }
    kpi.bill_no_cel_chf = total_no_cel.bill_without_cel();
    kpi.bill_cel_chf = total_cel.bill_with_cel();
    kpi.revenue_loss_chf = revenue_loss(total_no_cel, total_cel);
    kpi.revenue_loss_pct =
        kpi.bill_no_cel_chf > 0.0 ? 100.0 * kpi.revenue_loss_chf / kpi.bill_no_cel_chf : 0.0;

    // --- energy accounting
    kpi.internal_exchange_mwh = settlement ? settlement->total_exchange_kwh / 1000.0 : 0.0;
    double imp_kwh = 0.0, exp_kwh = 0.0;
    for (std::size_t t = 0; t < n_steps; ++t) {
        imp_kwh += community.plan.import_kw[t] * ts;
        exp_kwh += community.plan.export_kw[t] * ts;
    }
    kpi.imports_mwh = imp_kwh / 1000.0;
    kpi.exports_mwh = exp_kwh / 1000.0;
    double self_kwh = 0.0;
    for (const auto& m : members) {
        if (!m.has_pv) continue;
        const Profile& load = data.buildings[m.building].load;
        for (std::size_t t = 0; t < n_steps; ++t)
            self_kwh += std::min(load[t], m.pv_output[t]) * ts;
    }
    kpi.self_consumed_mwh = self_kwh / 1000.0;
    kpi.pv_generation_mwh = vpv.annual_energy_kwh() / 1000.0;
    kpi.load_mwh = vload.annual_energy_kwh() / 1000.0;

    kpi.technical = extract_kpis(net, flows);
    kpi.technical_baseline = extract_kpis(net, base_flows);

    ScenarioResult result{std::move(kpi),
                          settlement ? std::move(*settlement) : ExchangeSettlement{},
                          std::move(community.plan), std::move(flows), std::move(members)};
    return result;
}

SweepSpec sweep_from_json_file(const std::string& path) {
    std::ifstream in(path);
    if (!in) throw std::runtime_error("cannot open sweep file " + path);
    json j;
    in >> j;
    SweepSpec s;
    for (const auto& m : j.at("members")) s.member_order.push_back(m.get<std::string>());
    s.with_central_battery = j.value("with_central_battery", false);
    return s;
}

std::vector<SweepPoint> ratio_sweep(const SweepSpec& sweep, const Dataset& data, int n_threads) {
    if (sweep.member_order.size() < 1)
        throw std::invalid_argument("sweep needs at least one member");
    const TimeAxis& axis = data.axis;

    std::vector<std::size_t> idx;
    for (const auto& id : sweep.member_order) idx.push_back(data.building_index(id));
    const std::size_t n = idx.size();

    std::vector<Profile> pv_outputs;
    std::vector<double> pv_annual_mwh(n, 0.0);
    double load_annual_mwh = 0.0;
    for (std::size_t m = 0; m < n; ++m) {
        const BuildingRecord& b = data.buildings[idx[m]];
        load_annual_mwh += b.load.annual_energy_kwh() / 1000.0;
        PvDesign d = max_pv_design(data, b);
        if (d.module_count > 0) {
            pv_outputs.push_back(pv_production(d, data.ghi, data.temperature));
            pv_annual_mwh[m] = pv_outputs.back().annual_energy_kwh() / 1000.0;
        } else {
            pv_outputs.push_back(zero_profile(axis));
        }
    }

    std::vector<double> bat_with_pv(n, 0.0), bat_without_pv(n, 0.0);
    if (sweep.with_central_battery) {
#ifdef _OPENMP
#pragma omp parallel for schedule(dynamic) num_threads(n_threads > 0 ? n_threads : omp_get_max_threads())
#endif
        for (long long m = 0; m < static_cast<long long>(n); ++m) {
            const BuildingRecord& b = data.buildings[idx[m]];
            bat_with_pv[m] = battery_optimum_kwh(data, b, true, 1e-7);
            bat_without_pv[m] = battery_optimum_kwh(data, b, false, 1e-7);
        }
    }

    auto import_prices = data.tariffs.external.import_price_series_chf(axis);
    std::vector<double> export_prices(axis.n_steps(),
                                      data.tariffs.external.price_export() / 100.0);

    const Profile zero = zero_profile(axis);
    std::vector<SweepPoint> out;
    for (std::size_t k = 0; k <= n; ++k) {
        std::vector<DispatchPlan> plans;
        double pv_mwh = 0.0;
        std::vector<Profile> loads, pvs;
        for (std::size_t m = 0; m < n; ++m) {
            const BuildingRecord& b = data.buildings[idx[m]];
            bool equipped = m < k;
            plans.push_back(passthrough(b.load, equipped ? pv_outputs[m] : zero,
                                        data.pv_template));
            if (equipped) {
                pv_mwh += pv_annual_mwh[m];
                pvs.push_back(pv_outputs[m]);
            }
            loads.push_back(b.load);
        }

        double battery_kwh = 0.0;
        if (sweep.with_central_battery) {
            for (std::size_t m = 0; m < n; ++m)
                battery_kwh += (m < k) ? bat_with_pv[m] : bat_without_pv[m];
            if (battery_kwh > 0.0) {
                auto [vload, vpv] = aggregate_virtual_building(loads, pvs);
                BatteryDesign central = BatteryDesign::with_capacity(battery_kwh);
                DispatchOptions dopts;
                dopts.aging = data.aging;
                dopts.lp_tolerance = 1e-7;
                DispatchResult community =
                    optimize_dispatch(vload, vpv, data.pv_template, central, import_prices,
                                      export_prices, data.econ, dopts);
                DispatchPlan bat_plan(axis);
                bat_plan.import_kw = community.plan.charge_kw;
                bat_plan.export_kw = community.plan.discharge_kw;
                bat_plan.charge_kw = community.plan.charge_kw;
                bat_plan.discharge_kw = community.plan.discharge_kw;
                bat_plan.soc = community.plan.soc;
                bat_plan.battery = central;
                plans.push_back(std::move(bat_plan));
            }
        }

        ExchangeSettlement s = settle_exchange(plans, data.tariffs.internal_double,
                                               data.tariffs.external, &data.ghi);
        SweepPoint pt;
        pt.n_pv_equipped = k;
        pt.pv_to_load_ratio = load_annual_mwh > 0.0 ? pv_mwh / load_annual_mwh : 0.0;
        pt.exchanged_mwh = s.total_exchange_kwh / 1000.0;
        pt.battery_kwh = battery_kwh;
        out.push_back(pt);
    }
    return out;
}

namespace {

json box_to_json(const BoxStats& b) {
    return json{{"q1", b.q1},           {"median", b.median},
                {"q3", b.q3},           {"whisker_lo", b.whisker_lo},
                {"whisker_hi", b.whisker_hi}, {"n", b.n}};
}

json year_kpis_to_json(const YearKpis& k, const LvNetwork& net) {
    json lines = json::array();
    for (std::size_t l = 0; l < k.line_max_loading_pct.size(); ++l) {
        lines.push_back({{"line", net.lines()[l].id},
                         {"max_loading_pct", k.line_max_loading_pct[l]},
                         {"median_loading_pct", k.line_median_loading_pct[l]}});
    }
    double max_over = 0.0, min_under = 0.0;
    bool any_over = false, any_under = false;
    for (const auto& b : k.voltage.per_bus) {
        if (b.over_count > 0) {
            max_over = any_over ? std::max(max_over, b.over_p95) : b.over_p95;
            any_over = true;
        }
        if (b.under_count > 0) {
            min_under = any_under ? std::min(min_under, b.under_p95) : b.under_p95;
            any_under = true;
        }
    }
    return json{{"max_feed_in_kw", k.max_feed_in_kw},
                {"max_drawn_kw", k.max_drawn_kw},
                {"cel_max_feed_in_kw", k.cel_max_feed_in_kw},
                {"cel_max_drawn_kw", k.cel_max_drawn_kw},
                {"lines", lines},
                {"voltage_over_p95_box", box_to_json(k.voltage.over_box)},
                {"voltage_under_p95_box", box_to_json(k.voltage.under_box)},
                {"max_over_voltage_p95_pu", any_over ? max_over : 1.0},
                {"min_under_voltage_p95_pu", any_under ? min_under : 1.0}};
}

}  // namespace

std::string kpi_to_json(const KpiReport& kpi, const LvNetwork& net) {
    json bills = json::array();
    for (std::size_t a = 0; a < kpi.bill_rows.size(); ++a) {
        const BillBreakdown& c = kpi.bills_cel[a];
        const BillBreakdown& b = kpi.bills_no_cel[a];
        bills.push_back({{"actor", kpi.bill_rows[a]},
                         {"energy_chf", c.energy},
                         {"grid_chf", c.grid},
                         {"tax_chf", c.tax},
                         {"cel_energy_chf", c.cel_energy},
                         {"cel_grid_chf", c.cel_grid},
                         {"cel_tax_chf", c.cel_tax},
                         {"bill_with_cel_chf", c.bill_with_cel()},
                         {"bill_without_cel_chf", b.bill_without_cel()}});
    }
    json j{{"scenario_id", kpi.scenario_id},
           {"members", kpi.member_ids},
           {"pv_kwp", kpi.pv_kwp},
           {"battery_kwh", kpi.battery_kwh},
           {"totex_chf_yr", kpi.cost.totex},
           {"opex_chf_yr", kpi.cost.opex},
           {"capex_chf", kpi.cost.capex},
           {"ox_grid_exchange_chf", kpi.cost.ox_grid_exchange},
           {"ox_battery_op_chf", kpi.cost.ox_battery_op},
           {"ox_pv_maintenance_chf", kpi.cost.ox_pv_maintenance},
           {"cx_pv_chf", kpi.cost.cx_pv},
           {"cx_battery_chf", kpi.cost.cx_battery},
           {"battery_life_years", kpi.cost.battery_life_years},
           {"lcoe_chf_kwh", kpi.lcoe_chf_kwh},
           {"irr_pct", kpi.irr_defined ? json(kpi.irr_pct) : json()},
           {"irr_multiple_roots", kpi.irr_multiple_roots},
           {"profit_chf", kpi.profit_chf},
           {"dpp_years", kpi.dpp_years},
           {"bill_no_cel_chf", kpi.bill_no_cel_chf},
           {"bill_cel_chf", kpi.bill_cel_chf},
           {"revenue_loss_chf", kpi.revenue_loss_chf},
           {"revenue_loss_pct", kpi.revenue_loss_pct},
           {"internal_exchange_mwh", kpi.internal_exchange_mwh},
           {"imports_mwh", kpi.imports_mwh},
           {"exports_mwh", kpi.exports_mwh},
           {"self_consumed_mwh", kpi.self_consumed_mwh},
           {"pv_generation_mwh", kpi.pv_generation_mwh},
           {"load_mwh", kpi.load_mwh},
           {"technical", year_kpis_to_json(kpi.technical, net)},
           {"technical_baseline", year_kpis_to_json(kpi.technical_baseline, net)},
           {"bills", bills}};
    return j.dump(2);
}

}  // namespace celsim
