#pragma once

#include <cctype>
#include <cstdint>
#include <fstream>
#include <sstream>
#include <stdexcept>
#include <string>
#include <vector>

#include "model.hpp"

namespace uraflb {

struct ConfigError : std::runtime_error {
    using std::runtime_error::runtime_error;
};

struct ScenarioFile {
    Scenario scenario;
    ErrorTargets targets;
    McConfig mc;
    bool has_power = false;
};

inline std::string trim(const std::string& x) {
    std::size_t a = 0, b = x.size();
    while (a < b && std::isspace(static_cast<unsigned char>(x[a]))) ++a;
    while (b > a && std::isspace(static_cast<unsigned char>(x[b - 1]))) --b;
    return x.substr(a, b - a);
}

inline double parse_double(const std::string& key, const std::string& v) {
    std::size_t pos = 0;
    double out;
    try {
        out = std::stod(v, &pos);
    } catch (const std::exception&) {
        throw ConfigError("bad number for '" + key + "': " + v);
    }
    if (pos != v.size()) throw ConfigError("bad number for '" + key + "': " + v);
    return out;
}

inline long long parse_int(const std::string& key, const std::string& v) {
    std::size_t pos = 0;
    long long out;
    try {
        out = std::stoll(v, &pos);
    } catch (const std::exception&) {
        throw ConfigError("bad integer for '" + key + "': " + v);
    }
    if (pos != v.size()) throw ConfigError("bad integer for '" + key + "': " + v);
    return out;
}

inline std::vector<double> read_pmf_file(const std::string& path) {
    std::ifstream in(path);
    if (!in) throw ConfigError("cannot open pmf file: " + path);
    std::vector<double> m;
    std::string tok;
    while (in >> tok) {
        for (char& ch : tok)
            if (ch == ',') ch = ' ';
        std::istringstream ss(tok);
        std::string t;
        while (ss >> t) m.push_back(parse_double("pmf_file", t));
    }
    return m;
}

// fixed(300) | binomial(1200,0.5) | pmf_file(path)
inline KaDistribution parse_ka_dist(const std::string& v) {
    const auto open = v.find('(');
    const auto close = v.rfind(')');
    if (open == std::string::npos || close == std::string::npos || close < open)
        throw ConfigError("bad ka_dist: " + v);
    const std::string kind = trim(v.substr(0, open));
    const std::string arg = trim(v.substr(open + 1, close - open - 1));
    try {
        if (kind == "fixed") return KaDistribution::fixed(static_cast<int>(parse_int("ka_dist", arg)));
        if (kind == "binomial") {
            const auto comma = arg.find(',');
            if (comma == std::string::npos) throw ConfigError("binomial needs (K,p): " + v);
            return KaDistribution::binomial(static_cast<int>(parse_int("ka_dist", trim(arg.substr(0, comma)))),
                                            parse_double("ka_dist", trim(arg.substr(comma + 1))));
        }
        if (kind == "pmf_file") return KaDistribution::explicit_pmf(read_pmf_file(arg));
    } catch (const std::invalid_argument& e) {
        throw ConfigError(std::string("bad ka_dist: ") + e.what());
    }
    throw ConfigError("unknown ka_dist kind: " + kind);
}

inline ScenarioFile parse_scenario(std::istream& in) {
    ScenarioFile f;
    Scenario& s = f.scenario;
    std::string line;
    int lineno = 0;
    while (std::getline(in, line)) {
        ++lineno;
        const auto hash = line.find('#');
        if (hash != std::string::npos) line = line.substr(0, hash);
        line = trim(line);
        if (line.empty()) continue;
        const auto eq = line.find('=');
        if (eq == std::string::npos) throw ConfigError("line " + std::to_string(lineno) + ": expected key = value");
        const std::string key = trim(line.substr(0, eq));
        const std::string v = trim(line.substr(eq + 1));
        if (key == "n") s.n = static_cast<int>(parse_int(key, v));
        else if (key == "L") s.L = static_cast<int>(parse_int(key, v));
        else if (key == "J") s.J = static_cast<int>(parse_int(key, v));
        else if (key == "K") s.K = static_cast<int>(parse_int(key, v));
        else if (key == "P_db") {
            s.P = db_to_lin(parse_double(key, v));
            f.has_power = true;
        } else if (key == "p_prime_ratio") s.p_prime_ratio = parse_double(key, v);
        else if (key == "ensemble") {
            if (v == "gaussian") s.ensemble = Ensemble::gaussian;
            else if (v == "spherical") s.ensemble = Ensemble::spherical;
            else throw ConfigError("unknown ensemble: " + v);
        } else if (key == "ka_dist") s.ka = parse_ka_dist(v);
        else if (key == "eps_md") f.targets.eps_md = parse_double(key, v);
        else if (key == "eps_fa") f.targets.eps_fa = parse_double(key, v);
        else if (key == "mc_samples") f.mc.samples = static_cast<int>(parse_int(key, v));
        else if (key == "seed") f.mc.seed = static_cast<std::uint64_t>(parse_int(key, v));
        else if (key == "k_l") s.k_l = static_cast<int>(parse_int(key, v));
        else if (key == "k_u") s.k_u = static_cast<int>(parse_int(key, v));
        else if (key == "r_prime") s.r_prime = static_cast<int>(parse_int(key, v));
        else if (key == "tail_mass") s.tail_mass = parse_double(key, v);
        else throw ConfigError("unknown key: " + key);
    }
    if (f.mc.samples < 1) throw ConfigError("mc_samples must be >= 1");
    if (!(f.targets.eps_md > 0.0 && f.targets.eps_md < 1.0 && f.targets.eps_fa > 0.0 && f.targets.eps_fa < 1.0))
        throw ConfigError("eps_md and eps_fa must lie in (0,1)");
    try {
        s.validate();
    } catch (const std::invalid_argument& e) {
        throw ConfigError(e.what());
    }
    return f;
}

inline ScenarioFile load_scenario(const std::string& path) {
    std::ifstream in(path);
    if (!in) throw ConfigError("cannot open scenario file: " + path);
    return parse_scenario(in);
}

}  // namespace uraflb
