#ifndef CELSIM_TIMEAXIS_HPP
#define CELSIM_TIMEAXIS_HPP

#include <cstdint>
#include <string>
#include <vector>

namespace celsim {

/// Calendar timestamp, local civil time (no UTC offset handling).
struct DateTime {
    int year = 2025;
    int month = 1;  // 1..12
    int day = 1;    // 1..31
    int hour = 0;
    int minute = 0;

    bool operator==(const DateTime&) const = default;
};

bool is_leap_year(int year);
int days_in_month(int year, int month);
int days_in_year(int year);

/// Days since 1970-01-01 for a civil date (proleptic Gregorian).
int64_t days_from_civil(int year, int month, int day);

/// 0 = Monday ... 6 = Sunday.
int weekday_from_civil(int year, int month, int day);

/// Parses "YYYY-MM-DDTHH:MM[:SS]" or "YYYY-MM-DD HH:MM[:SS]".
/// Throws std::invalid_argument on malformed input.
DateTime parse_datetime(const std::string& text);
std::string format_datetime(const DateTime& dt);

/// Uniform time grid. step_minutes must divide 60.
///
/// The "spans exactly one civil year" rule is enforced where calendar
/// semantics matter (ingestion, dataset loading) via require_civil_year(),
/// not at construction: dispatch and its tests run on short horizons.
class TimeAxis {
  public:
    TimeAxis(DateTime start, int step_minutes, std::size_t n_steps);

    /// Axis covering one civil year of 15-minute steps (35040 or 35136).
    static TimeAxis civil_year(int year, int step_minutes = 15);

    const DateTime& start() const { return start_; }
    int step_minutes() const { return step_minutes_; }
    std::size_t n_steps() const { return n_steps_; }
    /// Step duration in hours (TS); 0.25 for 15-minute data.
    double step_hours() const { return step_minutes_ / 60.0; }

    /// Timestamp at the beginning of step t.
    DateTime at(std::size_t t) const;
    /// Hour-of-day in [0,24) at the beginning of step t.
    double hour_of_day(std::size_t t) const;
    /// 0 = Monday ... 6 = Sunday at step t.
    int weekday(std::size_t t) const;
    /// Day-of-year in [0, 364/365] at step t.
    int day_of_year(std::size_t t) const;

    /// Throws std::invalid_argument unless the axis starts Jan 1 00:00 and
    /// covers the whole civil year.
    void require_civil_year() const;

    bool operator==(const TimeAxis& other) const;
    bool operator!=(const TimeAxis& other) const { return !(*this == other); }

  private:
    DateTime start_;
    int step_minutes_;
    std::size_t n_steps_;
    int64_t start_minutes_;  // minutes since epoch, cached for at()
};

enum class Unit { KW, WPerM2, DegC };

std::string unit_name(Unit u);

/// A validated time series bound to an axis. kW and W/m2 profiles are
/// non-negative; temperature may be negative.
struct Profile {
    TimeAxis axis;
    Unit unit;
    std::vector<double> values;

    Profile(TimeAxis ax, Unit u, std::vector<double> v);

    std::size_t size() const { return values.size(); }
    double operator[](std::size_t t) const { return values[t]; }

    /// Sum(values) * TS in kWh. Plain left-to-right sum so that ingested
    /// totals match the file column sum exactly.
    double annual_energy_kwh() const;
};

/// Throws std::invalid_argument if the two profiles are on different axes.
void require_same_axis(const Profile& a, const Profile& b);

}  // namespace celsim

#endif
