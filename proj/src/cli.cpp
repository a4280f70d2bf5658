#include "celsim/cli.hpp"

#include <cmath>
#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <sstream>

#include <CLI11.hpp>
#include <json.hpp>

#include "celsim/scenario.hpp"

namespace celsim {

namespace fs = std::filesystem;
using nlohmann::json;

RunConfig load_run_config(const std::string& path) {
    std::ifstream in(path);
    if (!in) throw std::runtime_error("cannot open config file " + path);
    json j;
    in >> j;

    fs::path base = fs::path(path).parent_path();
    auto resolve = [&](const std::string& p) -> std::string {
        if (p.empty()) return p;
        fs::path fp(p);
        return fp.is_absolute() ? fp.string() : (base / fp).string();
    };

    RunConfig c;
    c.network = resolve(j.at("network").get<std::string>());
    c.tariffs = resolve(j.value("tariffs", std::string{}));
    c.buildings = resolve(j.at("buildings").get<std::string>());
    c.profiles_dir = resolve(j.value("profiles_dir", std::string{}));
    c.scenarios = resolve(j.value("scenarios", std::string{}));
    c.sweep = resolve(j.value("sweep", std::string{}));
    c.params = resolve(j.value("params", std::string{}));
    c.out = j.value("out", std::string{"out"});
    c.year = j.value("year", 2025);
    c.jobs = j.value("jobs", 0);
    c.seed = j.value("seed", uint64_t{1});
    return c;
}

namespace {

DatasetPaths dataset_paths(const RunConfig& c) {
    DatasetPaths p;
    p.network = c.network;
    p.tariffs = c.tariffs;
    p.buildings = c.buildings;
    p.profiles_dir = c.profiles_dir;
    p.params = c.params;
    p.year = c.year;
    p.seed = c.seed;
    return p;
}

std::string fmt(double v, int prec = 2) {
    std::ostringstream o;
    o.setf(std::ios::fixed);
    o.precision(prec);
    o << v;
    return o.str();
}

void print_tariff_audit(const TariffSet& t, std::ostream& os) {
    const TariffComponents& e = t.external.components();
    const TariffComponents& i = t.internal_double.components();
    os << "Tariff decomposition (ct/kWh)\n";
    os << "component                 ext peak  ext off   int peak  int off\n";
    os << "energy                    " << fmt(e.energy_peak) << "     " << fmt(e.energy_offpeak)
       << "     " << fmt(i.energy_peak) << "     " << fmt(i.energy_offpeak) << "\n";
    os << "regional grid             " << fmt(e.regional_grid_peak) << "     "
       << fmt(e.regional_grid_offpeak) << "      " << fmt(i.regional_grid_peak) << "      "
       << fmt(i.regional_grid_offpeak) << "\n";
    os << "national grid             " << fmt(e.national_grid_peak) << "      "
       << fmt(e.national_grid_offpeak) << "      " << fmt(i.national_grid_peak) << "      "
       << fmt(i.national_grid_offpeak) << "\n";
    os << "taxes                     " << fmt(e.taxes()) << "      " << fmt(e.taxes()) << "      "
       << fmt(i.taxes()) << "      " << fmt(i.taxes()) << "\n";
    os << "total                     " << fmt(e.total_peak()) << "     " << fmt(e.total_offpeak())
       << "     " << fmt(i.total_peak()) << "     " << fmt(i.total_offpeak()) << "\n";
    const DynamicTariffParams& d = t.internal_dynamic.dynamic();
    os << "dynamic price range       " << fmt(d.p_min_ct) << " .. " << fmt(d.p_max_ct)
       << "  (fixed grid " << fmt(d.fixed_grid_ct) << ", fixed tax " << fmt(d.fixed_tax_ct)
       << ", energy residual " << fmt(d.p_min_ct - d.fixed_grid_ct - d.fixed_tax_ct) << " .. "
       << fmt(d.p_max_ct - d.fixed_grid_ct - d.fixed_tax_ct) << ")\n";
    os << "feed-in                   " << fmt(t.external.price_export()) << "\n";
}

}  // namespace

int cmd_validate(const RunConfig& config) {
    // tariffs
    TariffSet tariffs;
    try {
        tariffs = config.tariffs.empty() ? default_tariffs() : load_tariffs(config.tariffs);
    } catch (const std::exception& e) {
        std::cerr << "validate: tariffs: " << e.what() << "\n";
        return 1;
    }
    print_tariff_audit(tariffs, std::cout);

    int warnings = 0;
    const TariffComponents& e = tariffs.external.components();
    const TariffComponents& i = tariffs.internal_double.components();
    auto check_reduced = [&](const char* name, double ext, double got) {
        double want = round_ct(0.60 * ext);
        if (std::abs(got - want) > 0.005) {
            std::cerr << "validate: warning: " << name << " internal component " << fmt(got)
                      << " is not a 40% reduction of " << fmt(ext) << " (expected " << fmt(want)
                      << ")\n";
            ++warnings;
        }
    };
    check_reduced("regional grid peak", e.regional_grid_peak, i.regional_grid_peak);
    check_reduced("regional grid offpeak", e.regional_grid_offpeak, i.regional_grid_offpeak);
    check_reduced("national grid peak", e.national_grid_peak, i.national_grid_peak);
    check_reduced("national grid offpeak", e.national_grid_offpeak, i.national_grid_offpeak);

    // network
    Dataset data = [&]() -> Dataset {
        try {
            return load_dataset(dataset_paths(config));
        } catch (const std::exception& ex) {
            std::cerr << "validate: dataset: " << ex.what() << "\n";
            std::exit(1);
        }
    }();
    std::cout << "network: " << data.network.n_buses() << " buses, " << data.network.n_lines()
              << " lines, radial, transformer " << data.network.transformer().s_kva << " kVA\n";

    double total_mwh = 0.0;
    for (const auto& b : data.buildings) total_mwh += b.load.annual_energy_kwh() / 1000.0;
    std::cout << "profiles: " << data.buildings.size() << " buildings, "
              << data.axis.n_steps() << " steps, total demand " << fmt(total_mwh, 1)
              << " MWh/yr\n";

    if (warnings > 0) {
        std::cerr << "validate: " << warnings << " warning(s)\n";
        return 1;
    }
    std::cout << "validate: ok\n";
    return 0;
}

namespace {

void write_bills_csv(const fs::path& path, const KpiReport& kpi) {
    std::ofstream os(path);
    os << "actor,energy_chf,grid_chf,tax_chf,cel_energy_chf,cel_grid_chf,cel_tax_chf,"
          "bill_with_cel_chf,bill_without_cel_chf\n";
    for (std::size_t a = 0; a < kpi.bill_rows.size(); ++a) {
        const BillBreakdown& c = kpi.bills_cel[a];
        const BillBreakdown& n = kpi.bills_no_cel[a];
        os << kpi.bill_rows[a] << ',' << fmt(c.energy) << ',' << fmt(c.grid) << ','
           << fmt(c.tax) << ',' << fmt(c.cel_energy) << ',' << fmt(c.cel_grid) << ','
           << fmt(c.cel_tax) << ',' << fmt(c.bill_with_cel()) << ','
           << fmt(n.bill_without_cel()) << '\n';
    }
}

void write_flows_csv(const fs::path& path, const ScenarioResult& r) {
    std::ofstream os(path);
    os << "step,transformer_kw,feed_in_kw,drawn_kw,cel_net_kw,battery_charge_kw,"
          "battery_discharge_kw,soc\n";
    for (std::size_t t = 0; t < r.flows.n_steps; ++t) {
        double p = r.flows.transformer_p_kw[t];
        os << t << ',' << fmt(p, 4) << ',' << fmt(std::max(-p, 0.0), 4) << ','
           << fmt(std::max(p, 0.0), 4) << ','
           << fmt(r.flows.member_net_kw.empty() ? 0.0 : r.flows.member_net_kw[t], 4) << ','
           << fmt(r.community_plan.charge_kw[t], 4) << ','
           << fmt(r.community_plan.discharge_kw[t], 4) << ','
           << fmt(r.community_plan.soc[t + 1], 6) << '\n';
    }
}

void write_voltages_csv(const fs::path& path, const LvNetwork& net, const KpiReport& kpi) {
    std::ofstream os(path);
    os << "bus,over_p95_pu,under_p95_pu,over_count,under_count,v_min_pu,v_max_pu\n";
    const auto& per_bus = kpi.technical.voltage.per_bus;
    for (std::size_t b = 0; b < per_bus.size(); ++b) {
        const BusVoltageStats& s = per_bus[b];
        os << net.bus_ids()[b] << ',' << fmt(s.over_p95, 6) << ',' << fmt(s.under_p95, 6) << ','
           << s.over_count << ',' << s.under_count << ',' << fmt(s.v_min, 6) << ','
           << fmt(s.v_max, 6) << '\n';
    }
}

const char* kSummaryHeader =
    "scenario_id,members,pv_kwp,battery_kwh,totex_chf_yr,opex_chf_yr,capex_chf,"
    "lcoe_chf_kwh,irr_pct,profit_chf,dpp_years,bill_no_cel_chf,bill_cel_chf,"
    "revenue_loss_chf,revenue_loss_pct,internal_exchange_mwh,imports_mwh,exports_mwh,"
    "self_consumed_mwh,max_feed_in_kw,max_drawn_kw,cel_max_feed_in_kw,cel_max_drawn_kw,"
    "worst_line_max_loading_pct,worst_line_median_loading_pct,max_over_voltage_p95_pu,"
    "min_under_voltage_p95_pu,status";

std::string summary_row(const KpiReport& k, const std::string& status) {
    double worst_max = 0.0, worst_med = 0.0;
    for (double v : k.technical.line_max_loading_pct) worst_max = std::max(worst_max, v);
    for (double v : k.technical.line_median_loading_pct) worst_med = std::max(worst_med, v);
    double max_over = 1.0, min_under = 1.0;
    for (const auto& b : k.technical.voltage.per_bus) {
        if (b.over_count > 0) max_over = std::max(max_over, b.over_p95);
        if (b.under_count > 0)
            min_under = std::min(min_under == 1.0 ? b.under_p95 : min_under, b.under_p95);
    }
    std::ostringstream os;
    os << k.scenario_id << ',' << k.member_ids.size() << ',' << fmt(k.pv_kwp) << ','
       << fmt(k.battery_kwh) << ',' << fmt(k.cost.totex) << ',' << fmt(k.cost.opex) << ','
       << fmt(k.cost.capex) << ',' << fmt(k.lcoe_chf_kwh, 4) << ','
       << (k.irr_defined ? fmt(k.irr_pct, 4) : std::string{}) << ',' << fmt(k.profit_chf) << ','
       << fmt(k.dpp_years, 2) << ',' << fmt(k.bill_no_cel_chf) << ',' << fmt(k.bill_cel_chf)
       << ',' << fmt(k.revenue_loss_chf) << ',' << fmt(k.revenue_loss_pct, 1) << ','
       << fmt(k.internal_exchange_mwh, 3) << ',' << fmt(k.imports_mwh, 3) << ','
       << fmt(k.exports_mwh, 3) << ',' << fmt(k.self_consumed_mwh, 3) << ','
       << fmt(k.technical.max_feed_in_kw, 1) << ',' << fmt(k.technical.max_drawn_kw, 1) << ','
       << fmt(k.technical.cel_max_feed_in_kw, 1) << ',' << fmt(k.technical.cel_max_drawn_kw, 1)
       << ',' << fmt(worst_max, 1) << ',' << fmt(worst_med, 1) << ',' << fmt(max_over, 4) << ','
       << fmt(min_under, 4) << ',' << status;
    return os.str();
}

}  // namespace

int cmd_run(const RunConfig& config) {
    if (config.scenarios.empty()) {
        std::cerr << "run: no scenarios file configured\n";
        return 1;
    }
    Dataset data = load_dataset(dataset_paths(config));

    std::ifstream in(config.scenarios);
    if (!in) {
        std::cerr << "run: cannot open scenarios file " << config.scenarios << "\n";
        return 1;
    }
    json j;
    in >> j;
    std::vector<ScenarioSpec> specs;
    for (const auto& s : j.at("scenarios")) specs.push_back(scenario_from_json(s.dump()));

    fs::create_directories(config.out);
    std::ofstream summary(fs::path(config.out) / "summary.csv");
    summary << kSummaryHeader << '\n';

    int failures = 0;
    SizingCache cache;
    for (const auto& spec : specs) {
        try {
            ScenarioResult r = run_scenario(spec, data, config.jobs, &cache);
            fs::path dir = fs::path(config.out) / spec.id;
            fs::create_directories(dir);
            std::ofstream(dir / "kpi.json") << kpi_to_json(r.kpi, data.network) << '\n';
            write_bills_csv(dir / "bills.csv", r.kpi);
            write_flows_csv(dir / "flows.csv", r);
            write_voltages_csv(dir / "voltages.csv", data.network, r.kpi);
            summary << summary_row(r.kpi, "ok") << '\n';
            std::cerr << "run: " << spec.id << " ok\n";
        } catch (const std::exception& e) {
            std::cerr << "run: scenario " << spec.id << " failed: " << e.what() << "\n";
            std::size_t n_commas = std::string(kSummaryHeader).find_last_of(',');
            std::size_t columns = std::count(kSummaryHeader, kSummaryHeader + n_commas + 1, ',');
            summary << spec.id << std::string(columns, ',') << "error\n";
            ++failures;
        }
    }
    return failures == 0 ? 0 : 1;
}

int cmd_sweep(const RunConfig& config) {
    if (config.sweep.empty()) {
        std::cerr << "sweep: no sweep file configured\n";
        return 1;
    }
    Dataset data = load_dataset(dataset_paths(config));
    SweepSpec spec = sweep_from_json_file(config.sweep);
    std::vector<SweepPoint> points = ratio_sweep(spec, data, config.jobs);

    fs::create_directories(config.out);
    std::ofstream os(fs::path(config.out) / "sweep.csv");
    os << "n_pv_equipped,pv_to_load_ratio,exchanged_mwh,battery_kwh\n";
    for (const auto& p : points)
        os << p.n_pv_equipped << ',' << fmt(p.pv_to_load_ratio, 4) << ','
           << fmt(p.exchanged_mwh, 4) << ',' << fmt(p.battery_kwh, 2) << '\n';
    std::cerr << "sweep: " << points.size() << " points written\n";
    return 0;
}

int run_cli(int argc, const char* const* argv) {
    CLI::App app{"Local electricity community techno-economic simulator"};
    app.require_subcommand(1);

    std::string config_path;
    std::string out_override;
    int jobs = -1;
    int64_t seed = -1;

    auto add_common = [&](CLI::App* sub) {
        sub->add_option("--config", config_path, "run configuration JSON")->required();
        sub->add_option("--out", out_override, "output directory override");
        sub->add_option("--jobs", jobs, "parallelism degree (env CELSIM_JOBS as fallback)");
        sub->add_option("--seed", seed, "seed override");
    };
    CLI::App* validate = app.add_subcommand("validate", "check tariffs, network and profiles");
    CLI::App* run = app.add_subcommand("run", "run the scenario batch");
    CLI::App* sweep = app.add_subcommand("sweep", "PV-to-load ratio sweep");
    add_common(validate);
    add_common(run);
    add_common(sweep);

    try {
        app.parse(argc, argv);
    } catch (const CLI::ParseError& e) {
        return app.exit(e);
    }

    try {
        RunConfig config = load_run_config(config_path);
        if (!out_override.empty()) config.out = out_override;
        if (jobs >= 0) {
            config.jobs = jobs;
        } else if (const char* env = std::getenv("CELSIM_JOBS")) {
            config.jobs = std::atoi(env);
        }
        if (seed >= 0) config.seed = static_cast<uint64_t>(seed);

        if (validate->parsed()) return cmd_validate(config);
        if (run->parsed()) return cmd_run(config);
        if (sweep->parsed()) return cmd_sweep(config);
    } catch (const std::exception& e) {
        std::cerr << "celsim: " << e.what() << "\n";
        return 1;
    }
    return 1;
}

}  // namespace celsim
