#include "upstage/monitors.hpp"

#include <algorithm>
#include <cmath>
#include <deque>

#include "upstage/error.hpp"
#include "upstage/trace.hpp"

namespace upstage::vnv {

const std::string& Monitor::signal() const {
    return std::visit([](const auto& k) -> const std::string& { return k.signal; }, kind);
}

const char* verdict_name(VerdictStatus s) {
    switch (s) {
        case VerdictStatus::Pass: return "pass";
        case VerdictStatus::Fail: return "fail";
        case VerdictStatus::Disabled: return "disabled";
        case VerdictStatus::NoData: return "no_data";
    }
    return "?";
}

VerdictStatus parse_verdict(const std::string& s) {
    if (s == "pass") return VerdictStatus::Pass;
    if (s == "fail") return VerdictStatus::Fail;
    if (s == "disabled") return VerdictStatus::Disabled;
    if (s == "no_data") return VerdictStatus::NoData;
    throw ConfigInvalid("verdict " + s);
}

namespace {

bool toward_violation(seq::Comparator c, double a, double b) {
    // True if a is more extreme than b in the violating direction.
    return (c == seq::Comparator::Greater || c == seq::Comparator::GreaterEqual) ? a > b : a < b;
}

std::vector<Violation> eval_threshold(const ThresholdMonitor& m, const std::vector<double>& t,
                                      const std::vector<double>& x) {
    std::vector<Violation> out;
    const std::size_t n = x.size();
    double held = 0.0;
    double peak = 0.0;
    bool holding = false;
    bool open = false;
    for (std::size_t i = 0; i < n; ++i) {
        const double spacing = i > 0 ? t[i] - t[i - 1] : (n > 1 ? t[1] - t[0] : 0.0);
        if (seq::compare(m.cmp, x[i], m.limit)) {
            if (!holding) {
                holding = true;
                held = 0.0;
                peak = x[i];
            }
            held += spacing;
            if (toward_violation(m.cmp, x[i], peak)) peak = x[i];
            if (open) {
                out.back().peak = peak;
            } else if (held >= m.persistence - 1e-9 * std::max(1.0, m.persistence)) {
                open = true;
                out.push_back({t[i], t[i], peak, true});
            }
        } else {
            if (open) {
                out.back().t_close = t[i];
                out.back().open_at_end = false;
            }
            holding = open = false;
        }
    }
    if (open) out.back().t_close = t[n - 1];
    return out;
}

StatsRecord eval_stats(const StatsMonitor& m, const std::vector<double>& t, const std::vector<double>& x) {
    StatsRecord r;
    const std::size_t n = x.size();
    std::vector<long double> s1(n + 1, 0.0L), s2(n + 1, 0.0L);
    r.max = -HUGE_VAL;
    for (std::size_t i = 0; i < n; ++i) {
        s1[i + 1] = s1[i] + x[i];
        s2[i + 1] = s2[i] + static_cast<long double>(x[i]) * x[i];
        r.max = std::max(r.max, x[i]);
    }
    r.mean = static_cast<double>(s1[n] / n);
    r.rms = std::sqrt(static_cast<double>(s2[n] / n));

    const double t0 = t.front();
    const bool short_run = t.back() - t0 < m.window;
    std::deque<std::size_t> maxq;
    std::size_t lo = 0;
    double next_snapshot = t0 + m.window;
    bool any = false;
    r.window_mean_max = -HUGE_VAL;
    r.window_rms_max = 0.0;
    for (std::size_t i = 0; i < n; ++i) {
        while (t[lo] <= t[i] - m.window) ++lo;
        while (!maxq.empty() && x[maxq.back()] <= x[i]) maxq.pop_back();
        maxq.push_back(i);
        while (maxq.front() < lo) maxq.pop_front();
        const bool full = t[i] - t0 >= m.window - 1e-9 || (short_run && i + 1 == n);
        if (!full) continue;
        const auto cnt = static_cast<long double>(i + 1 - lo);
        StatsWindow w;
        w.t_end = t[i];
        w.mean = static_cast<double>((s1[i + 1] - s1[lo]) / cnt);
        w.rms = std::sqrt(std::max(0.0, static_cast<double>((s2[i + 1] - s2[lo]) / cnt)));
        w.max = x[maxq.front()];
        r.window_mean_max = std::max(r.window_mean_max, w.mean);
        r.window_rms_max = std::max(r.window_rms_max, w.rms);
        any = true;
        if (t[i] >= next_snapshot - 1e-9 || (short_run && i + 1 == n)) {
            r.snapshots.push_back(w);
            while (next_snapshot <= t[i] + 1e-9) next_snapshot += m.window;
        }
    }
    if (!any) r.window_mean_max = r.mean;
    return r;
}

}  // namespace

Verdict eval_monitor(const Monitor& m, const Trace& trace) {
    Verdict v;
    v.monitor_id = m.id;
    const auto& x_all = trace.column(m.signal());
    if (!m.enabled) {
        v.status = VerdictStatus::Disabled;
        return v;
    }
    const auto& t_all = trace.column("t");
    const auto first = static_cast<std::ptrdiff_t>(
        std::lower_bound(t_all.begin(), t_all.end(), m.t_start - 1e-9) - t_all.begin());
    const std::vector<double> t(t_all.begin() + first, t_all.end());
    const std::vector<double> x(x_all.begin() + std::min<std::ptrdiff_t>(first, std::ssize(x_all)), x_all.end());
    if (x.empty()) {
        v.status = VerdictStatus::NoData;
        return v;
    }
    if (const auto* th = std::get_if<ThresholdMonitor>(&m.kind)) {
        v.violations = eval_threshold(*th, t, x);
        v.status = v.violations.empty() ? VerdictStatus::Pass : VerdictStatus::Fail;
    } else {
        const auto& st = std::get<StatsMonitor>(m.kind);
        v.stats = eval_stats(st, t, x);
        bool ok = true;
        if (st.max_limit && v.stats->max > *st.max_limit) ok = false;
        if (st.mean_limit && v.stats->mean > *st.mean_limit) ok = false;
        if (st.rms_limit && v.stats->rms > *st.rms_limit) ok = false;
        v.status = ok ? VerdictStatus::Pass : VerdictStatus::Fail;
    }
    return v;
}

std::vector<Verdict> eval_monitors(const std::vector<Monitor>& monitors, const Trace& trace) {
    std::vector<Verdict> out;
    out.reserve(monitors.size());
    for (const auto& m : monitors) out.push_back(eval_monitor(m, trace));
    return out;
}

}  // namespace upstage::vnv
