#include "upstage/campaign.hpp"

#include <algorithm>
#include <atomic>
#include <cmath>
#include <exception>
#include <fstream>
#include <mutex>
#include <numeric>
#include <thread>

#include "json.hpp"
#include "upstage/error.hpp"

namespace upstage::vnv {

std::uint64_t splitmix64(std::uint64_t x) {
    x += 0x9E3779B97F4A7C15ull;
    x = (x ^ (x >> 30)) * 0xBF58476D1CE4E5B9ull;
    x = (x ^ (x >> 27)) * 0x94D049BB133111EBull;
    return x ^ (x >> 31);
}

std::uint64_t split_seed(std::uint64_t master, std::uint64_t index) {
    return splitmix64(master + 0x9E3779B97F4A7C15ull * (index + 1));
}

namespace {

double unit(std::mt19937_64& rng) { return static_cast<double>(rng() >> 11) * 0x1.0p-53; }

double std_normal(std::mt19937_64& rng) {
    double u1 = unit(rng);
    while (u1 <= 0.0) u1 = unit(rng);
    const double u2 = unit(rng);
    return std::sqrt(-2.0 * std::log(u1)) * std::cos(2.0 * kPi * u2);
}

// Parameter draws use a stream decorrelated from the plant's noise stream.
std::mt19937_64 param_rng(std::uint64_t seed) { return std::mt19937_64(splitmix64(seed ^ 0x5DEECE66Dull)); }

}  // namespace

double uniform_in(std::mt19937_64& rng, double lower, double upper) {
    const double x = lower + (upper - lower) * unit(rng);
    return std::min(x, upper);
}

double truncated_gaussian(std::mt19937_64& rng, double mu, double sigma, double lower, double upper) {
    if (sigma > 0.0) {
        for (int i = 0; i < 10000; ++i) {
            const double x = mu + sigma * std_normal(rng);
            if (x >= lower && x <= upper) return x;
        }
    } else if (mu >= lower && mu <= upper) {
        return mu;
    }
    return uniform_in(rng, lower, upper);
}

std::vector<double> sample_params(const std::vector<ParamDef>& space, std::uint64_t seed) {
    auto rng = param_rng(seed);
    std::vector<double> x;
    x.reserve(space.size());
    for (const auto& p : space) {
        x.push_back(p.dist == Distribution::Uniform ? uniform_in(rng, p.lower, p.upper)
                                                    : truncated_gaussian(rng, p.mu, p.sigma, p.lower, p.upper));
    }
    return x;
}

// ------------------------------------------------------------ objectives

const std::vector<Objective>& objective_registry() {
    static const std::vector<Objective> r = {
        {"max_att_err", true, "max angle between spin axis and initial momentum direction, deg"},
        {"max_nutation", true, "max nutation half-cone angle after the settle time, deg"},
        {"propellant_consumed", true, "propellant consumed over the run, kg"},
        {"pulse_count", true, "thruster pulses commanded"},
        {"toy_linear", false, "sum of normalized parameters"},
        {"toy_quadratic", false, "concave quadratic in normalized parameters"},
    };
    return r;
}

const Objective& find_objective(const std::string& name) {
    for (const auto& o : objective_registry())
        if (o.name == name) return o;
    throw ConfigInvalid("campaign.objective " + name);
}

double toy_objective(const std::string& name, const std::vector<ParamDef>& space, const std::vector<double>& x) {
    double f = 0.0;
    for (std::size_t i = 0; i < space.size(); ++i) {
        const double u = (x[i] - space[i].lower) / (space[i].upper - space[i].lower);
        if (name == "toy_linear") {
            f += u;
        } else if (name == "toy_quadratic") {
            const double c = 0.25 + 0.25 * static_cast<double>(i % 3);
            f -= (u - c) * (u - c);
        } else {
            throw ConfigInvalid("campaign.objective " + name);
        }
    }
    return f;
}

double run_objective(const std::string& name, const RunMetrics& m) {
    if (name == "max_att_err") return m.max_att_err / kDeg;
    if (name == "max_nutation") return m.max_nutation / kDeg;
    if (name == "propellant_consumed") return m.propellant_consumed;
    if (name == "pulse_count") return m.pulses;
    throw ConfigInvalid("campaign.objective " + name);
}

MonitorOutcome summarize(const Monitor& m, const Verdict& v) {
    return {m.id, m.requirements, v.status, v.violations, v.stats};
}

std::vector<MonitorOutcome> evaluate(const std::vector<Monitor>& monitors, const Trace& trace) {
    std::vector<MonitorOutcome> out;
    for (const auto& m : monitors) out.push_back(summarize(m, eval_monitor(m, trace)));
    return out;
}

Evaluator scenario_evaluator(const ScenarioSource& source, const CampaignConfig& cfg) {
    (void)find_objective(cfg.objective);
    return [source, cfg](const std::vector<double>& x, std::uint64_t seed) {
        SampleOutcome out;
        Scenario sc;
        try {
            ScenarioSource src = source;
            for (std::size_t i = 0; i < cfg.params.size(); ++i) src.set(cfg.params[i].path, x[i]);
            if (cfg.duration) src.set("sim.duration", *cfg.duration);
            sc = src.build();
        } catch (const Error& e) {
            out.status = RunStatus::Failed;
            out.error = e.what();
            return out;
        }
        sc.sim.seed = seed;
        try {
            const RunResult r = run_in_process(sc);
            out.status = r.status;
            out.error = r.error;
            out.objective = run_objective(cfg.objective, r.metrics);
            out.monitors = evaluate(sc.monitors, r.trace);
        } catch (const Error& e) {
            out.status = RunStatus::Failed;
            out.error = e.what();
        }
        return out;
    };
}

Evaluator toy_evaluator(const CampaignConfig& cfg) {
    if (find_objective(cfg.objective).needs_run) throw ConfigInvalid("campaign.objective " + cfg.objective);
    return [cfg](const std::vector<double>& x, std::uint64_t) {
        SampleOutcome out;
        out.objective = toy_objective(cfg.objective, cfg.params, x);
        return out;
    };
}

// -------------------------------------------------------------- campaigns

void parallel_for(std::size_t n, unsigned threads, const std::function<void(std::size_t)>& fn) {
    unsigned k = threads ? threads : std::max(1u, std::thread::hardware_concurrency());
    k = static_cast<unsigned>(std::min<std::size_t>(k, n));
    if (k <= 1) {
        for (std::size_t i = 0; i < n; ++i) fn(i);
        return;
    }
    std::atomic<std::size_t> next{0};
    std::exception_ptr failure;
    std::mutex m;
    std::vector<std::thread> pool;
    for (unsigned w = 0; w < k; ++w) {
        pool.emplace_back([&] {
            for (;;) {
                const std::size_t i = next.fetch_add(1);
                if (i >= n) return;
                try {
                    fn(i);
                } catch (...) {
                    std::lock_guard lock(m);
                    if (!failure) failure = std::current_exception();
                }
            }
        });
    }
    for (auto& t : pool) t.join();
    if (failure) std::rethrow_exception(failure);
}

namespace {

CampaignResult header(const CampaignConfig& cfg, const char* kind) {
    CampaignResult r;
    r.kind = kind;
    r.objective = cfg.objective;
    r.master_seed = cfg.master_seed;
    for (const auto& p : cfg.params) r.param_names.push_back(p.name);
    return r;
}

// Higher objective first; NaN last; ties by sample index.
bool better(const SampleRecord& a, const SampleRecord& b) {
    const double x = a.outcome.objective, y = b.outcome.objective;
    if (std::isnan(x) != std::isnan(y)) return !std::isnan(x);
    if (!std::isnan(x) && x != y) return x > y;
    return a.index < b.index;
}

}  // namespace

CampaignResult run_monte_carlo(const CampaignConfig& cfg, const Evaluator& eval) {
    CampaignResult r = header(cfg, "mc");
    const auto n = static_cast<std::size_t>(cfg.n);
    r.samples.resize(n);
    parallel_for(n, cfg.threads, [&](std::size_t i) {
        SampleRecord& s = r.samples[i];
        s.index = i;
        s.seed = split_seed(cfg.master_seed, i);
        s.params = sample_params(cfg.params, s.seed);
        s.outcome = eval(s.params, s.seed);
    });
    for (std::size_t i = 0; i < n; ++i)
        if (!std::isnan(r.samples[i].outcome.objective) && (!r.best || better(r.samples[i], r.samples[*r.best])))
            r.best = i;
    return r;
}

CampaignResult ce_search(const CampaignConfig& cfg, const Evaluator& eval) {
    const auto& opt = cfg.ce;
    if (opt.population * opt.elite_fraction < 2.0) throw ConfigInvalid("campaign.ce.elite_fraction");
    CampaignResult r = header(cfg, "ce");
    const std::size_t d = cfg.params.size();
    const auto pop = static_cast<std::size_t>(opt.population);
    const auto n_elite = static_cast<std::size_t>(std::ceil(opt.elite_fraction * opt.population - 1e-9));

    std::vector<double> mu(d), sigma(d), range(d);
    for (std::size_t k = 0; k < d; ++k) {
        const auto& p = cfg.params[k];
        range[k] = p.upper - p.lower;
        mu[k] = p.dist == Distribution::Gaussian ? p.mu : 0.5 * (p.lower + p.upper);
        sigma[k] = p.dist == Distribution::Gaussian ? p.sigma : 0.5 * range[k];
    }

    double best_ever = NAN;
    for (int it = 1; it <= opt.max_iterations; ++it) {
        const std::size_t base = r.samples.size();
        r.samples.resize(base + pop);
        parallel_for(pop, cfg.threads, [&](std::size_t j) {
            SampleRecord& s = r.samples[base + j];
            s.index = base + j;
            s.iteration = it;
            s.seed = split_seed(cfg.master_seed, base + j);
            auto rng = param_rng(s.seed);
            s.params.resize(d);
            for (std::size_t k = 0; k < d; ++k)
                s.params[k] = truncated_gaussian(rng, mu[k], sigma[k], cfg.params[k].lower, cfg.params[k].upper);
            s.outcome = eval(s.params, s.seed);
        });

        std::vector<std::size_t> order(pop);
        std::iota(order.begin(), order.end(), base);
        std::sort(order.begin(), order.end(),
                  [&](std::size_t a, std::size_t b) { return better(r.samples[a], r.samples[b]); });
        std::size_t valid = 0;
        while (valid < pop && !std::isnan(r.samples[order[valid]].outcome.objective)) ++valid;

        CeIteration rec;
        rec.iteration = it;
        if (valid > 0) {
            const std::size_t ne = std::min(n_elite, valid);
            rec.best_in_iteration = r.samples[order[0]].outcome.objective;
            rec.elite_threshold = r.samples[order[ne - 1]].outcome.objective;
            if (!r.best || better(r.samples[order[0]], r.samples[*r.best])) r.best = order[0];
            for (std::size_t k = 0; k < d; ++k) {
                double m = 0.0;
                for (std::size_t e = 0; e < ne; ++e) m += r.samples[order[e]].params[k];
                m /= static_cast<double>(ne);
                double v = 0.0;
                for (std::size_t e = 0; e < ne; ++e) {
                    const double dx = r.samples[order[e]].params[k] - m;
                    v += dx * dx;
                }
                const double sd = std::sqrt(v / static_cast<double>(ne));
                mu[k] = opt.alpha * m + (1.0 - opt.alpha) * mu[k];
                sigma[k] = opt.alpha * sd + (1.0 - opt.alpha) * sigma[k];
            }
        }
        if (r.best) best_ever = r.samples[*r.best].outcome.objective;
        rec.best_ever = best_ever;
        rec.mu = mu;
        rec.sigma = sigma;
        r.iterations.push_back(rec);

        double worst = 0.0;
        for (std::size_t k = 0; k < d; ++k) worst = std::max(worst, sigma[k] / range[k]);
        if (worst < opt.sigma_min) {
            r.converged = true;
            break;
        }
    }
    return r;
}

// ----------------------------------------------------------------- output

namespace {

std::string num(double v) { return format_double(v); }

std::string join(const std::vector<std::string>& v, char sep) {
    std::string out;
    for (std::size_t i = 0; i < v.size(); ++i) {
        if (i) out += sep;
        out += v[i];
    }
    return out;
}

std::ofstream open_out(const std::filesystem::path& p) {
    std::ofstream os(p, std::ios::binary);
    if (!os) throw IoError("cannot write " + p.string());
    return os;
}

}  // namespace

void write_verdict_header(std::ostream& verdicts, std::ostream& violations) {
    verdicts << "sample,monitor,requirements,status,violations,first_open,peak,mean,max,rms,window_mean_max,"
                "window_rms_max\n";
    violations << "sample,monitor,t_open,t_close,peak,open_at_end\n";
}

void write_verdict_rows(std::ostream& verdicts, std::ostream& violations, std::size_t sample,
                        const std::vector<MonitorOutcome>& monitors) {
    for (const auto& m : monitors) {
        verdicts << sample << ',' << m.id << ',' << csv_quote(join(m.requirements, ';')) << ','
                 << verdict_name(m.status) << ',' << m.violations.size() << ',';
        if (!m.violations.empty()) {
            double peak = m.violations.front().peak;
            for (const auto& v : m.violations) peak = std::abs(v.peak) > std::abs(peak) ? v.peak : peak;
            verdicts << num(m.violations.front().t_open) << ',' << num(peak);
        } else {
            verdicts << ',';
        }
        if (m.stats)
            verdicts << ',' << num(m.stats->mean) << ',' << num(m.stats->max) << ',' << num(m.stats->rms) << ','
                     << num(m.stats->window_mean_max) << ',' << num(m.stats->window_rms_max);
        else
            verdicts << ",,,,,";
        verdicts << '\n';
        for (const auto& v : m.violations)
            violations << sample << ',' << m.id << ',' << num(v.t_open) << ',' << num(v.t_close) << ','
                       << num(v.peak) << ',' << (v.open_at_end ? 1 : 0) << '\n';
    }
}

void write_run_verdicts(const std::vector<MonitorOutcome>& monitors, const std::filesystem::path& dir) {
    std::filesystem::create_directories(dir);
    auto v = open_out(dir / "verdicts.csv");
    auto x = open_out(dir / "violations.csv");
    write_verdict_header(v, x);
    write_verdict_rows(v, x, 0, monitors);
}

void write_campaign(const CampaignResult& r, const std::filesystem::path& dir) {
    std::filesystem::create_directories(dir);
    {
        auto os = open_out(dir / "samples.csv");
        os << "sample,iteration,seed,status,objective";
        for (const auto& n : r.param_names) os << ',' << n;
        os << ",error\n";
        for (const auto& s : r.samples) {
            os << s.index << ',' << s.iteration << ',' << s.seed << ',' << status_name(s.outcome.status) << ','
               << num(s.outcome.objective);
            for (double x : s.params) os << ',' << num(x);
            os << ',' << csv_quote(s.outcome.error) << '\n';
        }
    }
    {
        auto v = open_out(dir / "verdicts.csv");
        auto x = open_out(dir / "violations.csv");
        write_verdict_header(v, x);
        for (const auto& s : r.samples) write_verdict_rows(v, x, s.index, s.outcome.monitors);
    }
    if (r.kind == "ce") {
        auto os = open_out(dir / "iterations.csv");
        os << "iteration,best_in_iteration,best_ever,elite_threshold";
        for (const auto& n : r.param_names) os << ",mu_" << n;
        for (const auto& n : r.param_names) os << ",sigma_" << n;
        os << '\n';
        for (const auto& it : r.iterations) {
            os << it.iteration << ',' << num(it.best_in_iteration) << ',' << num(it.best_ever) << ','
               << num(it.elite_threshold);
            for (double m : it.mu) os << ',' << num(m);
            for (double s : it.sigma) os << ',' << num(s);
            os << '\n';
        }
    }
    nlohmann::ordered_json j;
    j["kind"] = r.kind;
    j["objective"] = r.objective;
    j["master_seed"] = r.master_seed;
    j["samples"] = r.samples.size();
    std::size_t failed = 0;
    for (const auto& s : r.samples) failed += s.outcome.status != RunStatus::Ok;
    j["failed_samples"] = failed;
    if (r.kind == "ce") {
        j["iterations"] = r.iterations.size();
        j["converged"] = r.converged;
    }
    if (r.best) {
        const auto& b = r.samples[*r.best];
        nlohmann::ordered_json params;
        for (std::size_t k = 0; k < r.param_names.size(); ++k) params[r.param_names[k]] = b.params[k];
        j["best"] = {{"sample", b.index}, {"seed", b.seed}, {"objective", b.outcome.objective}, {"params", params}};
    }
    auto os = open_out(dir / "campaign.json");
    os << j.dump(2) << '\n';
}

}  // namespace upstage::vnv
