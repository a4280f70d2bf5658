#include "celsim/timeaxis.hpp"

#include <cstdio>
#include <stdexcept>

namespace celsim {

bool is_leap_year(int year) {
    return (year % 4 == 0 && year % 100 != 0) || year % 400 == 0;
}

int days_in_month(int year, int month) {
    static const int table[12] = {31, 28, 31, 30, 31, 30, 31, 31, 30, 31, 30, 31};
    if (month < 1 || month > 12) throw std::invalid_argument("month out of range");
    if (month == 2 && is_leap_year(year)) return 29;
    return table[month - 1];
}

int days_in_year(int year) { return is_leap_year(year) ? 366 : 365; }

int64_t days_from_civil(int year, int month, int day) {
    // Howard Hinnant's algorithm, days since 1970-01-01.
    int64_t y = year;
    y -= month <= 2;
    const int64_t era = (y >= 0 ? y : y - 399) / 400;
    const unsigned yoe = static_cast<unsigned>(y - era * 400);
    const unsigned doy = (153u * (month + (month > 2 ? -3 : 9)) + 2) / 5 + day - 1;
    const unsigned doe = yoe * 365 + yoe / 4 - yoe / 100 + doy;
    return era * 146097 + static_cast<int64_t>(doe) - 719468;
}

int weekday_from_civil(int year, int month, int day) {
    // 1970-01-01 was a Thursday (index 3 with Monday = 0).
    int64_t d = days_from_civil(year, month, day);
    return static_cast<int>(((d % 7) + 7 + 3) % 7);
}

DateTime parse_datetime(const std::string& text) {
    DateTime dt;
    int sec = 0;
    char sep = 0;
    int n = std::sscanf(text.c_str(), "%d-%d-%d%c%d:%d:%d", &dt.year, &dt.month, &dt.day,
                        &sep, &dt.hour, &dt.minute, &sec);
    if (n < 6 || (sep != 'T' && sep != ' '))
        throw std::invalid_argument("malformed timestamp '" + text + "'");
    if (dt.month < 1 || dt.month > 12 || dt.day < 1 || dt.day > days_in_month(dt.year, dt.month) ||
        dt.hour < 0 || dt.hour > 23 || dt.minute < 0 || dt.minute > 59 || sec != 0)
        throw std::invalid_argument("invalid timestamp '" + text + "'");
    return dt;
}

std::string format_datetime(const DateTime& dt) {
    char buf[32];
    std::snprintf(buf, sizeof buf, "%04d-%02d-%02dT%02d:%02d:00", dt.year, dt.month, dt.day,
                  dt.hour, dt.minute);
    return buf;
}

static int64_t minutes_from_epoch(const DateTime& dt) {
    return days_from_civil(dt.year, dt.month, dt.day) * 1440 + dt.hour * 60 + dt.minute;
}

TimeAxis::TimeAxis(DateTime start, int step_minutes, std::size_t n_steps)
    : start_(start), step_minutes_(step_minutes), n_steps_(n_steps) {
    if (step_minutes <= 0 || 60 % step_minutes != 0)
        throw std::invalid_argument("step_minutes must divide 60");
    if (n_steps == 0) throw std::invalid_argument("axis needs at least one step");
    start_minutes_ = minutes_from_epoch(start_);
}

TimeAxis TimeAxis::civil_year(int year, int step_minutes) {
    std::size_t n = static_cast<std::size_t>(days_in_year(year)) * 1440 / step_minutes;
    return TimeAxis(DateTime{year, 1, 1, 0, 0}, step_minutes, n);
}

DateTime TimeAxis::at(std::size_t t) const {
    int64_t m = start_minutes_ + static_cast<int64_t>(t) * step_minutes_;
    int64_t days = m / 1440;
    int rem = static_cast<int>(m % 1440);
    // invert days_from_civil
    int64_t z = days + 719468;
    const int64_t era = (z >= 0 ? z : z - 146096) / 146097;
    const unsigned doe = static_cast<unsigned>(z - era * 146097);
    const unsigned yoe = (doe - doe / 1460 + doe / 36524 - doe / 146096) / 365;
    const int64_t y = static_cast<int64_t>(yoe) + era * 400;
    const unsigned doy = doe - (365 * yoe + yoe / 4 - yoe / 100);
    const unsigned mp = (5 * doy + 2) / 153;
    const unsigned d = doy - (153 * mp + 2) / 5 + 1;
    const unsigned mo = mp + (mp < 10 ? 3 : -9);
    DateTime dt;
    dt.year = static_cast<int>(y + (mo <= 2));
    dt.month = static_cast<int>(mo);
    dt.day = static_cast<int>(d);
    dt.hour = rem / 60;
    dt.minute = rem % 60;
    return dt;
}

double TimeAxis::hour_of_day(std::size_t t) const {
    int64_t m = start_minutes_ + static_cast<int64_t>(t) * step_minutes_;
    return static_cast<double>(m % 1440) / 60.0;
}

int TimeAxis::weekday(std::size_t t) const {
    int64_t d = (start_minutes_ + static_cast<int64_t>(t) * step_minutes_) / 1440;
    return static_cast<int>(((d % 7) + 7 + 3) % 7);
}

int TimeAxis::day_of_year(std::size_t t) const {
    DateTime dt = at(t);
    return static_cast<int>(days_from_civil(dt.year, dt.month, dt.day) -
                            days_from_civil(dt.year, 1, 1));
}

void TimeAxis::require_civil_year() const {
    bool jan1 = start_.month == 1 && start_.day == 1 && start_.hour == 0 && start_.minute == 0;
    std::size_t expected =
        static_cast<std::size_t>(days_in_year(start_.year)) * 1440 / step_minutes_;
    if (!jan1 || n_steps_ != expected)
        throw std::invalid_argument("axis does not span exactly one civil year");
}

bool TimeAxis::operator==(const TimeAxis& other) const {
    return start_ == other.start_ && step_minutes_ == other.step_minutes_ &&
           n_steps_ == other.n_steps_;
}

std::string unit_name(Unit u) {
    switch (u) {
        case Unit::KW: return "kW";
        case Unit::WPerM2: return "W/m2";
        case Unit::DegC: return "degC";
    }
    return "?";
}

Profile::Profile(TimeAxis ax, Unit u, std::vector<double> v)
    : axis(std::move(ax)), unit(u), values(std::move(v)) {
    if (values.size() != axis.n_steps())
        throw std::invalid_argument("profile length does not match axis");
    if (unit != Unit::DegC) {
        for (std::size_t i = 0; i < values.size(); ++i) {
            if (values[i] < 0.0)
                throw std::invalid_argument("negative value at step " + std::to_string(i) +
                                            " in " + unit_name(unit) + " profile");
        }
    }
}

double Profile::annual_energy_kwh() const {
    double sum = 0.0;
    for (double v : values) sum += v;
    return sum * axis.step_hours();
}

void require_same_axis(const Profile& a, const Profile& b) {
    if (a.axis != b.axis) throw std::invalid_argument("profiles are on different time axes");
}

}  // namespace celsim
