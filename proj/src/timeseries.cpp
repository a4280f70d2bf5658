#include "celsim/timeseries.hpp"

#include <cmath>
#include <fstream>
#include <sstream>
#include <stdexcept>

namespace celsim {

int PvDesign::max_modules(double roof_area_m2, double module_area_m2) {
    if (roof_area_m2 <= 0.0 || module_area_m2 <= 0.0) return 0;
    return static_cast<int>(std::floor(0.70 * roof_area_m2 / module_area_m2));
}

void PvDesign::validate() const {
    if (module_count < 0) throw std::invalid_argument("negative module count");
    if (module_count * module_area_m2 > 0.70 * roof_area_m2 + 1e-9)
        throw std::invalid_argument("PV array exceeds 70% of usable roof area");
}

Archetype archetype_from_name(const std::string& name) {
    if (name == "residential") return Archetype::Residential;
    if (name == "nonresidential") return Archetype::NonResidential;
    throw std::invalid_argument("unknown archetype '" + name + "'");
}

Profile ingest_profile(const std::string& path, Unit unit) {
    std::ifstream in(path);
    if (!in) throw std::runtime_error("cannot open profile file " + path);

    std::string line;
    if (!std::getline(in, line)) throw std::runtime_error("empty profile file " + path);
    // tolerate a UTF-8 BOM and \r\n endings
    if (line.size() >= 3 && line.compare(0, 3, "\xEF\xBB\xBF") == 0) line.erase(0, 3);
    if (!line.empty() && line.back() == '\r') line.pop_back();
    if (line != "timestamp,value")
        throw std::runtime_error(path + ": expected header 'timestamp,value', got '" + line + "'");

    std::vector<DateTime> stamps;
    std::vector<double> values;
    std::size_t row = 1;
    while (std::getline(in, line)) {
        ++row;
        if (!line.empty() && line.back() == '\r') line.pop_back();
        if (line.empty()) continue;
        auto comma = line.find(',');
        if (comma == std::string::npos)
            throw std::runtime_error(path + ": row " + std::to_string(row) + " has no comma");
        DateTime dt;
        double v;
        try {
            dt = parse_datetime(line.substr(0, comma));
            v = std::stod(line.substr(comma + 1));
        } catch (const std::exception& e) {
            throw std::runtime_error(path + ": row " + std::to_string(row) + ": " + e.what());
        }
        if (!std::isfinite(v))
            throw std::runtime_error(path + ": row " + std::to_string(row) + ": non-finite value");
        stamps.push_back(dt);
        values.push_back(v);
    }
    if (stamps.empty()) throw std::runtime_error(path + ": no data rows");

    const int step = 15;
    TimeAxis axis(stamps.front(), step, stamps.size());
    for (std::size_t t = 1; t < stamps.size(); ++t) {
        DateTime expected = axis.at(t);
        if (stamps[t] == stamps[t - 1])
            throw std::runtime_error(path + ": duplicate timestamp at " +
                                     format_datetime(stamps[t]) + " (row " +
                                     std::to_string(t + 2) + ")");
        if (!(stamps[t] == expected))
            throw std::runtime_error(path + ": gap at " + format_datetime(expected) +
                                     " (row " + std::to_string(t + 2) + " holds " +
                                     format_datetime(stamps[t]) + ")");
    }
    axis.require_civil_year();
    return Profile(axis, unit, std::move(values));
}

void write_profile_csv(const std::string& path, const Profile& profile) {
    std::ofstream out(path);
    if (!out) throw std::runtime_error("cannot write " + path);
    out << "timestamp,value\n";
    std::ostringstream line;
    for (std::size_t t = 0; t < profile.size(); ++t) {
        line.str("");
        line.precision(10);
        line << format_datetime(profile.axis.at(t)) << ',' << profile.values[t] << '\n';
        out << line.str();
    }
}

namespace {

// splitmix64: stable across platforms, unlike <random> distributions.
struct Rng {
    uint64_t state;
    explicit Rng(uint64_t seed) : state(seed) {}
    uint64_t next() {
        state += 0x9E3779B97F4A7C15ull;
        uint64_t z = state;
        z = (z ^ (z >> 30)) * 0xBF58476D1CE4E5B9ull;
        z = (z ^ (z >> 27)) * 0x94D049BB133111EBull;
        return z ^ (z >> 31);
    }
    double uniform() { return (next() >> 11) * 0x1.0p-53; }  // [0,1)
};

double residential_shape(double hod) {
    // night base, morning bump, evening peak
    double v = 0.25;
    v += 0.35 * std::exp(-0.5 * std::pow((hod - 7.5) / 1.5, 2));
    v += 1.00 * std::exp(-0.5 * std::pow((hod - 19.0) / 2.2, 2));
    v += 0.15 * std::exp(-0.5 * std::pow((hod - 12.5) / 2.5, 2));
    return v;
}

double nonresidential_shape(double hod) {
    // plateau over working hours
    double rise = 1.0 / (1.0 + std::exp(-(hod - 7.0) * 1.8));
    double fall = 1.0 / (1.0 + std::exp((hod - 18.0) * 1.8));
    return 0.18 + 1.0 * rise * fall;
}

}  // namespace

Profile synthesize_load(const TimeAxis& axis, double annual_mwh, Archetype archetype,
                        uint64_t seed) {
    if (annual_mwh <= 0.0) throw std::invalid_argument("annual_mwh must be positive");
    Rng rng(seed * 0x9E3779B97F4A7C15ull + 1);

    std::size_t n = axis.n_steps();
    std::vector<double> v(n);
    int current_day = -1;
    double day_factor = 1.0;
    for (std::size_t t = 0; t < n; ++t) {
        int doy = axis.day_of_year(t);
        if (doy != current_day) {
            current_day = doy;
            day_factor = 0.8 + 0.4 * rng.uniform();  // day-to-day wobble
        }
        double hod = axis.hour_of_day(t);
        int wd = axis.weekday(t);
        bool weekend = wd >= 5;
        double shape, wfactor;
        if (archetype == Archetype::Residential) {
            shape = residential_shape(hod);
            wfactor = weekend ? 1.12 : 1.0;
        } else {
            shape = nonresidential_shape(hod);
            wfactor = weekend ? 0.35 : 1.0;
        }
        // mild winter/summer modulation
        double season = 1.0 + 0.18 * std::cos(2.0 * M_PI * (doy - 15) / 365.0);
        v[t] = shape * wfactor * day_factor * season;
    }
    double sum_kwh = 0.0;
    for (double x : v) sum_kwh += x;
    sum_kwh *= axis.step_hours();
    double scale = annual_mwh * 1000.0 / sum_kwh;
    for (double& x : v) x *= scale;
    return Profile(axis, Unit::KW, std::move(v));
}

Profile synthesize_ghi(const TimeAxis& axis, uint64_t seed) {
    Rng rng(seed * 0x9E3779B97F4A7C15ull + 2);
    std::size_t n = axis.n_steps();
    std::vector<double> v(n);
    int current_day = -1;
    double cloud = 1.0;
    for (std::size_t t = 0; t < n; ++t) {
        int doy = axis.day_of_year(t);
        if (doy != current_day) {
            current_day = doy;
            double u = rng.uniform();
            cloud = 0.15 + 0.85 * u * u;  // skewed towards clear-ish days
        }
        double hod = axis.hour_of_day(t);
        // seasonal day length and amplitude for a mid-latitude site
        double season = std::cos(2.0 * M_PI * (doy - 172) / 365.0);  // +1 at solstice
        double half_day = 6.0 + 2.2 * season;                        // hours around noon
        double amp = 950.0 * (0.55 + 0.45 * season);
        double x = (hod - 12.0) / half_day;
        double elev = std::cos(x * M_PI / 2.0);
        v[t] = (std::abs(x) < 1.0) ? std::max(0.0, amp * elev * elev * cloud) : 0.0;
    }
    return Profile(axis, Unit::WPerM2, std::move(v));
}

Profile synthesize_temperature(const TimeAxis& axis, uint64_t seed) {
    Rng rng(seed * 0x9E3779B97F4A7C15ull + 3);
    std::size_t n = axis.n_steps();
    std::vector<double> v(n);
    int current_day = -1;
    double offset = 0.0;
    for (std::size_t t = 0; t < n; ++t) {
        int doy = axis.day_of_year(t);
        if (doy != current_day) {
            current_day = doy;
            offset = (rng.uniform() - 0.5) * 6.0;
        }
        double hod = axis.hour_of_day(t);
        double season = 10.0 - 9.5 * std::cos(2.0 * M_PI * (doy - 15) / 365.0);
        double diurnal = 4.0 * std::sin(2.0 * M_PI * (hod - 9.0) / 24.0);
        v[t] = season + diurnal + offset;
    }
    return Profile(axis, Unit::DegC, std::move(v));
}

Profile pv_production(const PvDesign& design, const Profile& ghi, const Profile& temp) {
    require_same_axis(ghi, temp);
    if (ghi.unit != Unit::WPerM2 || temp.unit != Unit::DegC)
        throw std::invalid_argument("pv_production expects W/m2 and degC profiles");
    design.validate();

    std::size_t n = ghi.size();
    std::vector<double> out(n);
    const double nameplate_kw = design.module_count * design.module_power_w / 1000.0;
    for (std::size_t t = 0; t < n; ++t) {
        double g = ghi[t];
        double t_cell = temp[t] + g * (design.noct_c - 20.0) / 800.0;
        double p = nameplate_kw * (g / 1000.0) *
                   (1.0 + design.temp_coeff * (t_cell - 25.0)) * design.derate;
        out[t] = std::max(0.0, p);
    }
    return Profile(ghi.axis, Unit::KW, std::move(out));
}

}  // namespace celsim
