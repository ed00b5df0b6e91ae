#pragma once

#include <chrono>
#include <cmath>
#include <cstdio>
#include <fstream>
#include <iostream>
#include <optional>
#include <sstream>
#include <string>
#include <vector>

#include "CLI11.hpp"
#include "json.hpp"

#include "achievability.hpp"
#include "converse.hpp"
#include "ka_bounds.hpp"
#include "model.hpp"
#include "parallel.hpp"
#include "scenario_io.hpp"
#include "simulator.hpp"

namespace uraflb::cli {

using Json = nlohmann::ordered_json;

enum Exit { ok = 0, config_error = 1, infeasible = 2 };

struct Options {
    std::string scenario;
    std::string out = "-";
    std::string summary;
    std::string side = "achievability";
    std::string mode = "decode";
    std::string axis;
    std::string values;
    std::string command;
    std::optional<int> ka;
    std::vector<int> ka_prime;
    int cand_lo = 0;
    int cand_hi = -1;
    std::vector<int> r_prime;
    int trials = 10000;
    std::optional<std::uint64_t> seed;
    std::optional<int> samples;
    bool collision_free = false;
    bool conservative = false;
    bool paper_scale = false;
};

struct Table {
    std::vector<std::string> header;
    std::vector<std::vector<std::string>> rows;
    Json info = Json::array();  // one entry per row: optimizer trace and standard errors
    bool feasible = true;
};

// Fixed, locale-free formatting so reruns are byte-identical.
inline std::string fmt(double x) {
    if (std::isnan(x)) return "nan";
    if (std::isinf(x)) return x > 0 ? "inf" : "-inf";
    char buf[40];
    std::snprintf(buf, sizeof buf, "%.10g", x);
    return buf;
}
inline std::string fmt(int x) { return std::to_string(x); }
inline std::string fmt(long long x) { return std::to_string(x); }

inline Json trace_json(const BoundReport& r) {
    Json j = Json::object();
    j["value"] = std::isfinite(r.value) ? Json(r.value) : Json(nullptr);
    j["se"] = r.se;
    j["samples"] = r.samples;
    j["seed"] = r.seed;
    Json t = Json::object();
    for (const auto& [k, v] : r.trace) t[k] = std::isfinite(v) ? Json(v) : Json(nullptr);
    j["trace"] = t;
    return j;
}

inline std::vector<double> parse_values(const std::string& v) {
    std::vector<double> out;
    if (v.find(':') != std::string::npos) {
        std::vector<double> p;
        std::stringstream ss(v);
        std::string tok;
        while (std::getline(ss, tok, ':')) p.push_back(parse_double("values", trim(tok)));
        if (p.size() != 3 || !(p[2] > 0.0) || p[1] < p[0]) throw ConfigError("range must be start:stop:step with step > 0");
        const int count = static_cast<int>(std::floor((p[1] - p[0]) / p[2] + 1e-9)) + 1;
        for (int i = 0; i < count; ++i) out.push_back(p[0] + i * p[2]);
    } else {
        std::stringstream ss(v);
        std::string tok;
        while (std::getline(ss, tok, ',')) {
            tok = trim(tok);
            if (!tok.empty()) out.push_back(parse_double("values", tok));
        }
    }
    if (out.empty()) throw ConfigError("sweep needs at least one value");
    return out;
}

inline McConfig mc_of(const ScenarioFile& sf, const Options& o) {
    McConfig mc = sf.mc;
    if (o.seed) mc.seed = *o.seed;
    if (o.samples) mc.samples = *o.samples;
    mc.conservative = o.conservative;
    if (mc.samples < 1) throw ConfigError("samples must be >= 1");
    return mc;
}

inline int ka_of(const ScenarioFile& sf, const Options& o) {
    if (o.ka) return *o.ka;
    if (sf.scenario.ka.kind == KaDistribution::Kind::fixed) return sf.scenario.ka.k0;
    throw ConfigError("--ka is required unless ka_dist is fixed(...)");
}

inline std::vector<int> primes_of(const ScenarioFile& sf, const Options& o, int Ka) {
    if (!o.ka_prime.empty()) return o.ka_prime;
    std::vector<int> out;
    const int hi = o.cand_hi < 0 ? sf.scenario.K : o.cand_hi;
    for (int k = std::max(o.cand_lo, 0); k <= hi; ++k)
        if (k != Ka) out.push_back(k);
    return out;
}

inline void require_power(const ScenarioFile& sf, const std::string& cmd) {
    if (!sf.has_power) throw ConfigError(cmd + " needs P_db in the scenario (or a P_db/Eb_db sweep)");
}

inline double eb_db(const Scenario& s) { return energy_per_bit_db(s.n, s.P, s.J); }

inline Table ka_error_bound_table(const ScenarioFile& sf, const Options& o) {
    const Scenario& s = sf.scenario;
    const int Ka = ka_of(sf, o);
    if (Ka < 0 || Ka > s.K) throw ConfigError("--ka must lie in [0, K]");
    const std::vector<int> primes = primes_of(sf, o, Ka);
    const McConfig mc = mc_of(sf, o);
    Table t;
    t.header = {"ka", "ka_prime", "bound", "se", "p_prime", "k_tilde"};
    const auto reps = ka_error_bounds(s, Ka, primes, o.cand_lo, o.cand_hi, o.collision_free, mc);
    for (std::size_t i = 0; i < primes.size(); ++i) {
        const BoundReport& r = reps[i];
        t.rows.push_back({fmt(Ka), fmt(primes[i]), fmt(r.value), fmt(r.se), fmt(r.get("p_prime")),
                          fmt(static_cast<int>(r.get("k_tilde", -1)))});
        t.info.push_back(trace_json(r));
    }
    return t;
}

inline Table ka_error_asym_table(const ScenarioFile& sf, const Options& o) {
    const Scenario& s = sf.scenario;
    const int Ka = ka_of(sf, o);
    if (Ka < 1 || Ka > s.K) throw ConfigError("--ka must lie in [1, K]");
    const std::vector<int> primes = primes_of(sf, o, Ka);
    const McConfig mc = mc_of(sf, o);
    const int hi = o.cand_hi < 0 ? s.K : o.cand_hi;
    Table t;
    t.header = {"ka", "ka_prime", "asym_p", "asym_p_se", "asym_n"};
    const auto reps = ka_error_bounds_asym_p(s, Ka, primes, o.cand_lo, o.cand_hi, o.collision_free, mc);
    for (std::size_t i = 0; i < primes.size(); ++i) {
        const double an = ka_error_bound_asym_n(Ka, primes[i], o.cand_lo, hi, s.L, s.J);
        t.rows.push_back({fmt(Ka), fmt(primes[i]), fmt(reps[i].value), fmt(reps[i].se), fmt(an)});
        Json j = trace_json(reps[i]);
        j["asym_n"] = an;
        t.info.push_back(j);
    }
    return t;
}

inline std::vector<int> r_primes_of(const ScenarioFile& sf, const Options& o) {
    if (!o.r_prime.empty()) {
        for (int r : o.r_prime)
            if (r < 0) throw ConfigError("--r-prime values must be >= 0");
        return o.r_prime;
    }
    return {sf.scenario.r_prime};
}

inline Table achievability_table(const ScenarioFile& sf, const Options& o) {
    require_power(sf, "achievability");
    const McConfig mc = mc_of(sf, o);
    Table t;
    t.header = {"mean_ka", "p_db", "eb_db", "r_prime", "eps_md", "eps_md_se", "eps_fa", "eps_fa_se", "p0", "feasible"};
    bool any = false;
    for (int r : r_primes_of(sf, o)) {
        Scenario s = sf.scenario;
        s.r_prime = r;
        const EpsEval e = eps_md_fa(s, sf.targets, s.P, mc);
        const bool ok = e.md <= sf.targets.eps_md && e.fa <= sf.targets.eps_fa;
        any = any || ok;
        t.rows.push_back({fmt(s.ka.mean()), fmt(lin_to_db(s.P)), fmt(eb_db(s)), fmt(r), fmt(e.md), fmt(e.md_se), fmt(e.fa),
                          fmt(e.fa_se), fmt(e.p0), fmt(ok ? 1 : 0)});
        Json j = Json::object();
        j["cells"] = e.cells;
        j["samples"] = mc.samples;
        j["seed"] = mc.seed;
        t.info.push_back(j);
    }
    t.feasible = any;
    return t;
}

inline Table converse_table(const ScenarioFile& sf, const Options& o) {
    const McConfig mc = mc_of(sf, o);
    const ConverseEnvelope ce = converse_envelope(sf.scenario, sf.targets, mc);
    Table t;
    t.header = {"mean_ka", "eb_db", "theorem", "theorem_3_db", "theorem_4_db", "theorem_5_db", "p_star", "feasible"};
    auto part = [&](int th) {
        for (const auto& [k, r] : ce.parts)
            if (k == th) return r.value;
        return std::nan("");
    };
    const bool ok = std::isfinite(ce.envelope.value);
    t.rows.push_back({fmt(sf.scenario.ka.mean()), fmt(ce.envelope.value), fmt(static_cast<int>(ce.envelope.get("theorem"))),
                      fmt(part(3)), fmt(part(4)), fmt(part(5)), fmt(ok ? ce.envelope.get("p_star") : std::nan("")),
                      fmt(ok ? 1 : 0)});
    Json j = trace_json(ce.envelope);
    Json parts = Json::object();
    for (const auto& [th, r] : ce.parts) parts["theorem_" + std::to_string(th)] = trace_json(r);
    j["parts"] = parts;
    t.info.push_back(j);
    t.feasible = ok;
    return t;
}

inline Table min_ebno_table(const ScenarioFile& sf, const Options& o) {
    const McConfig mc = mc_of(sf, o);
    Table t;
    if (o.side == "achievability") {
        AchievabilityOptions opt;
        opt.r_prime_set = r_primes_of(sf, o);
        const BoundReport r = min_eb_achievability(sf.scenario, sf.targets, mc, opt);
        t.header = {"mean_ka", "eb_db", "se_db", "p_star", "p_prime_star", "r_prime_star", "eps_md", "eps_fa", "feasible"};
        const bool ok = r.feasible && std::isfinite(r.value);
        t.rows.push_back({fmt(sf.scenario.ka.mean()), fmt(r.value), fmt(r.se), fmt(r.get("p_star")),
                          fmt(r.get("p_prime_star")), fmt(static_cast<int>(r.get("r_prime_star", -1))), fmt(r.get("eps_md")),
                          fmt(r.get("eps_fa")), fmt(ok ? 1 : 0)});
        t.info.push_back(trace_json(r));
        t.feasible = ok;
    } else if (o.side == "converse") {
        const ConverseEnvelope ce = converse_envelope(sf.scenario, sf.targets, mc);
        const bool ok = std::isfinite(ce.envelope.value);
        t.header = {"mean_ka", "eb_db", "se_db", "p_star", "theorem", "feasible"};
        t.rows.push_back({fmt(sf.scenario.ka.mean()), fmt(ce.envelope.value), fmt(0.0),
                          fmt(ok ? ce.envelope.get("p_star") : std::nan("")),
                          fmt(static_cast<int>(ce.envelope.get("theorem"))), fmt(ok ? 1 : 0)});
        t.info.push_back(trace_json(ce.envelope));
        t.feasible = ok;
    } else {
        throw ConfigError("--side must be achievability or converse");
    }
    return t;
}

inline Table simulate_table(const ScenarioFile& sf, const Options& o) {
    const Scenario& s = sf.scenario;
    const std::uint64_t seed = o.seed ? *o.seed : sf.mc.seed;
    if (o.trials < 1) throw ConfigError("--trials must be >= 1");
    Table t;
    if (o.mode == "estimate") {
        require_power(sf, "simulate");
        const int Ka = ka_of(sf, o);
        const KaErrorFrequencies f = empirical_ka_error(s, Ka, o.trials, seed);
        t.header = {"ka", "ka_hat", "freq", "se", "trials"};
        for (int k = 0; k <= s.K; ++k) {
            auto it = f.freq.find(k);
            t.rows.push_back({fmt(Ka), fmt(k), fmt(it == f.freq.end() ? 0.0 : it->second), fmt(f.se(k)), fmt(o.trials)});
            t.info.push_back(Json::object());
        }
    } else if (o.mode == "decode") {
        require_power(sf, "simulate");
        const auto iv = decoding_interval(s, sf.targets);
        const MdFa r = empirical_md_fa(s, sf.targets, o.trials, seed);
        t.header = {"mean_ka", "p_db", "eb_db", "trials", "md", "md_se", "fa", "fa_se", "k_l", "k_u", "r_prime"};
        t.rows.push_back({fmt(s.ka.mean()), fmt(lin_to_db(s.P)), fmt(eb_db(s)), fmt(o.trials), fmt(r.md), fmt(r.md_se),
                          fmt(r.fa), fmt(r.fa_se), fmt(iv.first), fmt(iv.second), fmt(s.r_prime)});
        Json j = Json::object();
        j["seed"] = seed;
        t.info.push_back(j);
    } else {
        throw ConfigError("--mode must be decode or estimate");
    }
    return t;
}

inline Table run_command(const std::string& cmd, const ScenarioFile& sf, const Options& o) {
    try {
        if (cmd == "ka-error-bound") return ka_error_bound_table(sf, o);
        if (cmd == "ka-error-asym") return ka_error_asym_table(sf, o);
        if (cmd == "achievability") return achievability_table(sf, o);
        if (cmd == "converse") return converse_table(sf, o);
        if (cmd == "min-ebno") return min_ebno_table(sf, o);
        if (cmd == "simulate") return simulate_table(sf, o);
    } catch (const std::invalid_argument& e) {
        throw ConfigError(e.what());
    }
    throw ConfigError("unknown command: " + cmd);
}

// Applies one sweep value to a copy of the scenario.
inline ScenarioFile apply_axis(ScenarioFile sf, const std::string& axis, double v, const std::string& cmd) {
    Scenario& s = sf.scenario;
    const bool optimizes_power = cmd == "min-ebno" || cmd == "converse";
    const bool ka_cmd = cmd == "ka-error-bound" || cmd == "ka-error-asym";
    auto as_int = [&](double x) {
        if (x != std::floor(x)) throw ConfigError("axis " + axis + " needs integer values");
        return static_cast<int>(x);
    };
    if (axis == "P_db" || axis == "Eb_db") {
        if (optimizes_power) throw ConfigError("axis " + axis + " is incompatible with " + cmd);
        s.P = axis == "P_db" ? db_to_lin(v) : db_to_lin(v) * s.J / s.n;
        sf.has_power = true;
    } else if (axis == "n") {
        s.n = as_int(v);
    } else if (axis == "L") {
        s.L = as_int(v);
    } else if (axis == "mean_ka") {
        if (ka_cmd) throw ConfigError("axis mean_ka is incompatible with " + cmd + " (use --ka)");
        if (s.ka.kind == KaDistribution::Kind::binomial) {
            if (!(v >= 0.0 && v <= s.ka.K)) throw ConfigError("mean_ka outside [0, K] of the binomial");
            s.ka = KaDistribution::binomial(s.ka.K, v / s.ka.K);
        } else if (s.ka.kind == KaDistribution::Kind::fixed) {
            s.ka = KaDistribution::fixed(as_int(v));
        } else {
            throw ConfigError("axis mean_ka needs a fixed or binomial ka_dist");
        }
    } else {
        throw ConfigError("unknown axis: " + axis + " (expected P_db, Eb_db, n, L or mean_ka)");
    }
    try {
        s.validate();
    } catch (const std::invalid_argument& e) {
        throw ConfigError(e.what());
    }
    return sf;
}

// Points run one after another; each point already spreads its Monte-Carlo work over
// the worker pool, and rows are emitted in sweep order.
inline Table sweep_table(const ScenarioFile& sf, const Options& o) {
    if (o.command.empty() || o.command == "sweep") throw ConfigError("sweep needs --command");
    if (o.axis.empty()) throw ConfigError("sweep needs --axis");
    const std::vector<double> vals = parse_values(o.values);
    std::vector<ScenarioFile> points;
    for (double v : vals) points.push_back(apply_axis(sf, o.axis, v, o.command));
    Table t;
    for (std::size_t i = 0; i < vals.size(); ++i) {
        const Table p = run_command(o.command, points[i], o);
        if (t.header.empty()) {
            t.header = {o.axis};
            t.header.insert(t.header.end(), p.header.begin(), p.header.end());
        }
        for (std::size_t r = 0; r < p.rows.size(); ++r) {
            std::vector<std::string> row{fmt(vals[i])};
            row.insert(row.end(), p.rows[r].begin(), p.rows[r].end());
            t.rows.push_back(std::move(row));
            Json j = p.info[r];
            j[o.axis] = vals[i];
            t.info.push_back(j);
        }
        t.feasible = t.feasible && p.feasible;
    }
    return t;
}

// Rough single-core cost model, calibrated on desk-scale runs.
inline double estimated_seconds(const std::string& cmd, const ScenarioFile& sf, const Options& o) {
    const Scenario& s = sf.scenario;
    const double N = o.samples ? *o.samples : sf.mc.samples;
    auto fano_cost = [&] {
        double c = 0.0;
        for (int k = std::max(s.ka.lo(), 1); k <= s.ka.hi(); ++k)
            if (s.ka.pmf(k) >= 1e-15) c += 1e-9 * N * (s.n * double(k) * k + double(k) * k * k);
        return c;
    };
    if (cmd == "achievability" || (cmd == "min-ebno" && o.side == "achievability")) {
        const auto iv = decoding_interval(s, sf.targets);
        const double w = iv.second - iv.first + 1.0;
        const double ku = iv.second;
        const double evals = cmd == "min-ebno" ? 12.0 : 1.0;
        const double pp = s.ensemble == Ensemble::gaussian ? 3.0 : 1.0;
        const double rs = o.r_prime.empty() ? 1.0 : static_cast<double>(o.r_prime.size());
        return 1.5e-8 * N * w * w * 4.0 * ku * ku * evals * pp * rs;
    }
    if (cmd == "converse" || cmd == "min-ebno") return fano_cost();
    if (cmd == "ka-error-bound" || cmd == "ka-error-asym") {
        const double ka = o.ka ? *o.ka : s.ka.hi();
        return 2e-9 * N * (s.n * ka * ka + ka * ka * ka);
    }
    return 0.0;
}

inline void write_csv(std::ostream& os, const Table& t) {
    for (std::size_t i = 0; i < t.header.size(); ++i) os << (i ? "," : "") << t.header[i];
    os << '\n';
    for (const auto& r : t.rows) {
        for (std::size_t i = 0; i < r.size(); ++i) os << (i ? "," : "") << r[i];
        os << '\n';
    }
}

inline Json scenario_json(const ScenarioFile& sf) {
    const Scenario& s = sf.scenario;
    Json j = Json::object();
    j["n"] = s.n;
    j["L"] = s.L;
    j["J"] = s.J;
    j["K"] = s.K;
    if (sf.has_power) j["P_db"] = lin_to_db(s.P);
    j["p_prime_ratio"] = s.p_prime_ratio;
    j["ensemble"] = to_string(s.ensemble);
    j["ka_dist"] = s.ka.describe();
    j["eps_md"] = sf.targets.eps_md;
    j["eps_fa"] = sf.targets.eps_fa;
    j["mc_samples"] = sf.mc.samples;
    j["seed"] = sf.mc.seed;
    const auto iv = decoding_interval(s, sf.targets);
    j["k_l"] = iv.first;
    j["k_u"] = iv.second;
    j["r_prime"] = s.r_prime;
    return j;
}

inline void add_common(CLI::App* sc, Options& o) {
    sc->add_option("--scenario", o.scenario, "scenario file (key = value)")->required();
    sc->add_option("--out", o.out, "CSV output path, '-' for stdout");
    sc->add_option("--summary", o.summary, "JSON run summary path (default: <out>.json)");
    sc->add_option("--seed", o.seed, "override the scenario seed");
    sc->add_option("--samples", o.samples, "override mc_samples");
    sc->add_flag("--paper-scale", o.paper_scale, "allow runs estimated to take more than an hour");
}

inline void add_ka_opts(CLI::App* sc, Options& o) {
    sc->add_option("--ka", o.ka, "true number of active users (default: the fixed ka_dist value)");
    sc->add_option("--ka-prime", o.ka_prime, "estimated counts to report (default: every other count)")->delimiter(',');
    sc->add_option("--cand-lo", o.cand_lo, "smallest admissible estimate");
    sc->add_option("--cand-hi", o.cand_hi, "largest admissible estimate (default K)");
    sc->add_flag("--collision-free", o.collision_free, "draw distinct codewords");
    sc->add_flag("--conservative", o.conservative, "report mean + 2 SE");
}

inline int run(int argc, const char* const* argv, std::ostream& err = std::cerr) {
    CLI::App app{"Finite-blocklength bounds for unsourced random access over MIMO Rayleigh fading"};
    app.require_subcommand(1);
    Options o;
    auto* kb = app.add_subcommand("ka-error-bound", "bound on P[Ka -> Ka'] at the scenario power");
    add_common(kb, o);
    add_ka_opts(kb, o);
    auto* ka = app.add_subcommand("ka-error-asym", "large-P and large-n limits of the estimation bound");
    add_common(ka, o);
    add_ka_opts(ka, o);
    auto* ac = app.add_subcommand("achievability", "per-user MD/FA bound at the scenario power");
    add_common(ac, o);
    ac->add_option("--r-prime", o.r_prime, "decoding radii to evaluate")->delimiter(',');
    auto* cv = app.add_subcommand("converse", "converse bounds on the minimum energy per bit");
    add_common(cv, o);
    auto* me = app.add_subcommand("min-ebno", "minimum energy per bit meeting the targets");
    add_common(me, o);
    me->add_option("--side", o.side, "achievability or converse");
    me->add_option("--r-prime", o.r_prime, "decoding radii to search")->delimiter(',');
    auto* si = app.add_subcommand("simulate", "Monte-Carlo simulation with an explicit codebook");
    add_common(si, o);
    si->add_option("--trials", o.trials, "number of transmissions");
    si->add_option("--mode", o.mode, "decode (MAP list decoding) or estimate (count estimator only)");
    si->add_option("--ka", o.ka, "true count for --mode estimate");
    auto* sw = app.add_subcommand("sweep", "run a command over a list of parameter values");
    add_common(sw, o);
    add_ka_opts(sw, o);
    sw->add_option("--axis", o.axis, "P_db, Eb_db, n, L or mean_ka")->required();
    sw->add_option("--values", o.values, "comma list or start:stop:step")->required();
    sw->add_option("--command", o.command, "command to run at each point")->required();
    sw->add_option("--side", o.side, "for min-ebno");
    sw->add_option("--r-prime", o.r_prime, "decoding radii")->delimiter(',');
    sw->add_option("--trials", o.trials, "for simulate");
    sw->add_option("--mode", o.mode, "for simulate");

    try {
        app.parse(argc, argv);
    } catch (const CLI::ParseError& e) {
        if (e.get_exit_code() == 0) {
            std::cout << app.help();
            return ok;
        }
        err << "error: " << e.what() << '\n';
        return config_error;
    }
    const std::string cmd = app.get_subcommands().front()->get_name();

    const auto t0 = std::chrono::steady_clock::now();
    Table t;
    Json summary = Json::object();
    try {
        const ScenarioFile sf = load_scenario(o.scenario);
        double est = 0.0;
        if (cmd == "sweep") {
            for (double v : parse_values(o.values))
                est += estimated_seconds(o.command, apply_axis(sf, o.axis, v, o.command), o);
        } else {
            est = estimated_seconds(cmd, sf, o);
        }
        if (est > 3600.0) {
            char buf[160];
            std::snprintf(buf, sizeof buf, "estimated runtime %.1f h on one core", est / 3600.0);
            if (!o.paper_scale) {
                err << "error: " << buf << "; rerun with --paper-scale to proceed\n";
                return config_error;
            }
            err << "warning: " << buf << '\n';
        }
        t = cmd == "sweep" ? sweep_table(sf, o) : run_command(cmd, sf, o);
        summary["command"] = cmd;
        if (cmd == "sweep") {
            summary["sweep"] = {{"axis", o.axis}, {"values", parse_values(o.values)}, {"command", o.command}};
        }
        summary["scenario"] = scenario_json(sf);
        summary["seed"] = o.seed ? *o.seed : sf.mc.seed;
        summary["mc_samples"] = o.samples ? *o.samples : sf.mc.samples;
        summary["workers"] = worker_count();
    } catch (const ConfigError& e) {
        err << "config error: " << e.what() << '\n';
        return config_error;
    } catch (const std::invalid_argument& e) {
        err << "config error: " << e.what() << '\n';
        return config_error;
    }
    const double wall = std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();

    if (o.out == "-") {
        write_csv(std::cout, t);
    } else {
        std::ofstream f(o.out, std::ios::binary);
        if (!f) {
            err << "config error: cannot write " << o.out << '\n';
            return config_error;
        }
        write_csv(f, t);
    }
    const int code = t.feasible ? ok : infeasible;
    summary["wall_time_s"] = wall;
    summary["feasible"] = t.feasible;
    summary["exit_code"] = code;
    summary["columns"] = t.header;
    summary["rows"] = t.info;
    std::string spath = o.summary;
    if (spath.empty() && o.out != "-") spath = o.out + ".json";
    if (!spath.empty()) {
        std::ofstream f(spath, std::ios::binary);
        if (!f) {
            err << "config error: cannot write " << spath << '\n';
            return config_error;
        }
        f << summary.dump(2) << '\n';
    }
    if (!t.feasible) err << "infeasible: targets not met within the search range\n";
    return code;
}

}  // namespace uraflb::cli
