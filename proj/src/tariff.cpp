#include "celsim/tariff.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <stdexcept>

#include <json.hpp>

namespace celsim {

double round_ct(double x) { return std::round(x * 100.0) / 100.0; }

TariffComponents TariffComponents::with_grid_reduction(double reduction) const {
    TariffComponents r = *this;
    double keep = 1.0 - reduction;
    r.regional_grid_peak = round_ct(regional_grid_peak * keep);
    r.regional_grid_offpeak = round_ct(regional_grid_offpeak * keep);
    r.national_grid_peak = round_ct(national_grid_peak * keep);
    r.national_grid_offpeak = round_ct(national_grid_offpeak * keep);
    return r;
}

std::string tariff_kind_name(TariffKind k) {
    switch (k) {
        case TariffKind::ExternalDouble: return "external_double";
        case TariffKind::InternalDouble: return "internal_double";
        case TariffKind::InternalDynamic: return "internal_dynamic";
    }
    return "?";
}

TariffSchedule TariffSchedule::external_double(TariffComponents c, TouWindow w,
                                               double feed_in_ct) {
    TariffSchedule s;
    s.kind_ = TariffKind::ExternalDouble;
    s.components_ = c;
    s.tou_ = w;
    s.feed_in_ct_ = feed_in_ct;
    return s;
}

TariffSchedule TariffSchedule::internal_double(const TariffComponents& external, TouWindow w,
                                               double feed_in_ct, double reduction) {
    TariffSchedule s;
    s.kind_ = TariffKind::InternalDouble;
    s.components_ = external.with_grid_reduction(reduction);
    s.tou_ = w;
    s.feed_in_ct_ = feed_in_ct;
    return s;
}

TariffSchedule TariffSchedule::internal_dynamic(DynamicTariffParams p, double feed_in_ct) {
    TariffSchedule s;
    s.kind_ = TariffKind::InternalDynamic;
    s.dynamic_ = p;
    s.feed_in_ct_ = feed_in_ct;
    return s;
}

double TariffSchedule::price_import(const TimeAxis& axis, std::size_t t,
                                    std::optional<double> ghi_t) const {
    if (kind_ == TariffKind::InternalDynamic) {
        if (!ghi_t)
            throw std::invalid_argument("dynamic tariff pricing needs the irradiance at step " +
                                        std::to_string(t));
        const auto& d = dynamic_;
        double x = std::clamp(*ghi_t / d.g_ref_w_m2, 0.0, 1.0);
        return d.p_max_ct - (d.p_max_ct - d.p_min_ct) * x;
    }
    bool peak = tou_.is_peak(axis, t);
    return peak ? components_.total_peak() : components_.total_offpeak();
}

PriceDecomposition TariffSchedule::decompose(const TimeAxis& axis, std::size_t t,
                                             std::optional<double> ghi_t) const {
    PriceDecomposition d;
    if (kind_ == TariffKind::InternalDynamic) {
        double total = price_import(axis, t, ghi_t);
        d.grid_ct = dynamic_.fixed_grid_ct;
        d.tax_ct = dynamic_.fixed_tax_ct;
        d.energy_ct = total - d.grid_ct - d.tax_ct;
        return d;
    }
    bool peak = tou_.is_peak(axis, t);
    d.energy_ct = peak ? components_.energy_peak : components_.energy_offpeak;
    d.grid_ct = peak ? components_.grid_peak() : components_.grid_offpeak();
    d.tax_ct = components_.taxes();
    return d;
}

std::vector<double> TariffSchedule::import_price_series_chf(const TimeAxis& axis,
                                                            const Profile* ghi) const {
    if (kind_ == TariffKind::InternalDynamic && ghi == nullptr)
        throw std::invalid_argument("dynamic tariff series needs an irradiance profile");
    std::vector<double> out(axis.n_steps());
    for (std::size_t t = 0; t < out.size(); ++t) {
        std::optional<double> g;
        if (ghi) g = (*ghi)[t];
        out[t] = price_import(axis, t, g) / 100.0;
    }
    return out;
}

namespace {

using nlohmann::json;

TariffComponents components_from_json(const json& j) {
    TariffComponents c;
    c.energy_peak = j.at("energy").at("peak").get<double>();
    c.energy_offpeak = j.at("energy").at("offpeak").get<double>();
    c.regional_grid_peak = j.at("regional_grid").at("peak").get<double>();
    c.regional_grid_offpeak = j.at("regional_grid").at("offpeak").get<double>();
    c.national_grid_peak = j.at("national_grid").at("peak").get<double>();
    c.national_grid_offpeak = j.at("national_grid").at("offpeak").get<double>();
    const auto& tx = j.at("taxes");
    c.tax_federal = tx.at("federal").get<double>();
    c.tax_winter_reserve = tx.at("winter_reserve").get<double>();
    c.tax_cantonal = tx.at("cantonal_tax").get<double>();
    c.tax_emolument = tx.at("cantonal_emolument").get<double>();
    return c;
}

}  // namespace

TariffSet load_tariffs(const std::string& path) {
    std::ifstream in(path);
    if (!in) throw std::runtime_error("cannot open tariff file " + path);
    json j;
    in >> j;

    double feed_in = j.value("feed_in_ct", 11.5);
    TouWindow w;
    if (j.contains("tou")) {
        w.peak_start_hour = j["tou"].value("peak_start_hour", 17.0);
        w.peak_end_hour = j["tou"].value("peak_end_hour", 22.0);
    }
    TariffComponents c = components_from_json(j.at("double"));

    DynamicTariffParams d;
    if (j.contains("dynamic")) {
        const auto& dj = j["dynamic"];
        d.p_max_ct = dj.value("p_max", d.p_max_ct);
        d.p_min_ct = dj.value("p_min", d.p_min_ct);
        d.fixed_grid_ct = dj.value("fixed_grid", d.fixed_grid_ct);
        d.fixed_tax_ct = dj.value("fixed_tax", d.fixed_tax_ct);
        d.g_ref_w_m2 = dj.value("g_ref", d.g_ref_w_m2);
    }
    double reduction = j.value("grid_reduction", 0.40);

    TariffSet set{TariffSchedule::external_double(c, w, feed_in),
                  TariffSchedule::internal_double(c, w, feed_in, reduction),
                  TariffSchedule::internal_dynamic(d, feed_in)};
    return set;
}

TariffSet default_tariffs() {
    TariffComponents c;
    return TariffSet{TariffSchedule::external_double(c),
                     TariffSchedule::internal_double(c),
                     TariffSchedule::internal_dynamic()};
}

}  // namespace celsim
