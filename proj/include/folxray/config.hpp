// SPDX-License-Identifier: Apache-2.0
#pragma once

#include "folxray/inversion.hpp"
#include "folxray/symbol.hpp"

#include <functional>
#include <map>
#include <set>

namespace folxray {

/// Everything a harness run needs. Sections mirror the owning modules:
/// [geometry] [phantom] [normal_op] [solver] [sweep] [output].
struct ExperimentConfig {
    GeometrySpec geometry;
    CertifyOptions certify;
    Vec3 trace_point{2.0, 0.0, 0.0};
    Vec3 trace_direction{0.0, 1.0, 0.0};
    double trace_step = 1e-2;

    Phantom phantom = Phantom::gaussian(Vec3(2.0, 0.0, 0.0), 0.45);

    NormalOpConfig normal_op;
    SymbolOptions symbol;
    std::vector<double> symbol_xi{0.0, 1.0, 2.0, 5.0};
    Eigen::Vector2d symbol_eta{0.0, 0.0};
    EllipticityPlan ellipticity;

    SolveOptions solver;
    int grid_n = 13;
    std::string sinogram; // reconstruct: FXSG input; empty = synthesise from the phantom

    std::vector<double> sweep_h{0.4, 0.2, 0.1};
    bool sweep_sigma = false;

    std::string output_dir = "runs";
    bool write_matrix = false;
};

namespace cfgdetail {

inline std::string trim(std::string s) {
    const auto b = s.find_first_not_of(" \t\r");
    if (b == std::string::npos) return {};
    const auto e = s.find_last_not_of(" \t\r");
    return s.substr(b, e - b + 1);
}

inline double to_double(const std::string& key, const std::string& v) {
    double out = 0.0;
    const auto s = trim(v);
    auto [p, ec] = std::from_chars(s.data(), s.data() + s.size(), out);
    if (ec != std::errc() || p != s.data() + s.size()) throw ConfigError(key + ": '" + v + "' is not a number");
    return out;
}

inline int to_int(const std::string& key, const std::string& v) {
    int out = 0;
    const auto s = trim(v);
    auto [p, ec] = std::from_chars(s.data(), s.data() + s.size(), out);
    if (ec != std::errc() || p != s.data() + s.size()) throw ConfigError(key + ": '" + v + "' is not an integer");
    return out;
}

inline bool to_bool(const std::string& key, const std::string& v) {
    const auto s = trim(v);
    if (s == "true" || s == "1" || s == "yes") return true;
    if (s == "false" || s == "0" || s == "no") return false;
    throw ConfigError(key + ": '" + v + "' is not a boolean");
}

inline std::vector<double> to_list(const std::string& key, const std::string& v) {
    std::vector<double> out;
    std::string item;
    std::istringstream is(v);
    while (std::getline(is, item, ','))
        if (!trim(item).empty()) out.push_back(to_double(key, item));
    return out;
}

inline Vec3 to_vec3(const std::string& key, const std::string& v) {
    const auto l = to_list(key, v);
    if (l.size() != 3) throw ConfigError(key + ": expected three comma-separated numbers");
    return {l[0], l[1], l[2]};
}

inline std::string list_str(const std::vector<double>& v) {
    std::string s;
    for (std::size_t i = 0; i < v.size(); ++i) s += (i ? ", " : "") + io::fmt(v[i]);
    return s;
}
inline std::string vec_str(const Vec3& v) { return list_str({v[0], v[1], v[2]}); }
inline std::string bool_str(bool b) { return b ? "true" : "false"; }

// bumps: "cx, cy, cz, width, amplitude; ..."
inline std::vector<Bump> to_bumps(const std::string& key, const std::string& v) {
    std::vector<Bump> out;
    std::string item;
    std::istringstream is(v);
    while (std::getline(is, item, ';')) {
        if (trim(item).empty()) continue;
        const auto l = to_list(key, item);
        if (l.size() != 5) throw ConfigError(key + ": each bump needs cx, cy, cz, width, amplitude");
        out.push_back(Bump{Vec3(l[0], l[1], l[2]), l[3], l[4]});
    }
    return out;
}
inline std::string bumps_str(const std::vector<Bump>& b) {
    std::string s;
    for (std::size_t i = 0; i < b.size(); ++i)
        s += (i ? "; " : "") + list_str({b[i].center[0], b[i].center[1], b[i].center[2], b[i].width, b[i].amplitude});
    return s;
}

struct Field {
    std::string section;
    std::string key;
    std::function<void(ExperimentConfig&, const std::string&)> set;
    std::function<std::string(const ExperimentConfig&)> get;
};

template <class E>
E to_enum(const std::string& key, const std::string& v, const std::vector<std::pair<std::string, E>>& names) {
    const auto s = trim(v);
    for (const auto& [n, e] : names)
        if (n == s) return e;
    std::string allowed;
    for (const auto& [n, e] : names) allowed += (allowed.empty() ? "" : "|") + n;
    throw ConfigError(key + ": '" + s + "' is not one of " + allowed);
}

inline const std::vector<std::pair<std::string, PhantomKind>>& phantom_names() {
    static const std::vector<std::pair<std::string, PhantomKind>> n{{"gaussian_bump", PhantomKind::gaussian_bump},
                                                                    {"sum_of_bumps", PhantomKind::sum_of_bumps},
                                                                    {"smoothed_indicator", PhantomKind::smoothed_indicator}};
    return n;
}
inline std::string phantom_name(PhantomKind k) {
    for (const auto& [n, e] : phantom_names())
        if (e == k) return n;
    return "?";
}

// Gaussian phantom center/width/amplitude live in bumps[0].
inline Bump& first_bump(ExperimentConfig& c) {
    if (c.phantom.bumps.empty()) c.phantom.bumps.push_back(Bump{});
    return c.phantom.bumps.front();
}
inline Bump first_bump(const ExperimentConfig& c) { return c.phantom.bumps.empty() ? Bump{} : c.phantom.bumps.front(); }

inline const std::vector<Field>& fields() {
    using C = ExperimentConfig;
    using S = const std::string&;
    static const std::vector<Field> f{
        // geometry
        {"geometry", "metric",
         [](C& c, S v) {
             c.geometry.metric = to_enum<MetricKind>("geometry.metric", v,
                                                     {{"euclidean", MetricKind::euclidean}, {"conformal", MetricKind::conformal}});
         },
         [](const C& c) { return to_string(c.geometry.metric); }},
        {"geometry", "metric_epsilon", [](C& c, S v) { c.geometry.metric_epsilon = to_double("geometry.metric_epsilon", v); },
         [](const C& c) { return io::fmt(c.geometry.metric_epsilon); }},
        {"geometry", "metric_center",
         [](C& c, S v) {
             if (trim(v).empty()) c.geometry.metric_center.reset();
             else c.geometry.metric_center = to_vec3("geometry.metric_center", v);
         },
         [](const C& c) { return c.geometry.metric_center ? vec_str(*c.geometry.metric_center) : std::string(); }},
        {"geometry", "center_M", [](C& c, S v) { c.geometry.center_M = to_vec3("geometry.center_M", v); },
         [](const C& c) { return vec_str(c.geometry.center_M); }},
        {"geometry", "radius_M", [](C& c, S v) { c.geometry.radius_M = to_double("geometry.radius_M", v); },
         [](const C& c) { return io::fmt(c.geometry.radius_M); }},
        {"geometry", "radius_Mprime", [](C& c, S v) { c.geometry.radius_Mprime = to_double("geometry.radius_Mprime", v); },
         [](const C& c) { return io::fmt(c.geometry.radius_Mprime); }},
        {"geometry", "foliation",
         [](C& c, S v) {
             c.geometry.foliation = to_enum<FoliationKind>("geometry.foliation", v,
                                                           {{"radial", FoliationKind::radial}, {"planar", FoliationKind::planar}});
         },
         [](const C& c) { return to_string(c.geometry.foliation); }},
        {"geometry", "foliation_center", [](C& c, S v) { c.geometry.foliation_center = to_vec3("geometry.foliation_center", v); },
         [](const C& c) { return vec_str(c.geometry.foliation_center); }},
        {"geometry", "foliation_normal", [](C& c, S v) { c.geometry.foliation_normal = to_vec3("geometry.foliation_normal", v); },
         [](const C& c) { return vec_str(c.geometry.foliation_normal); }},
        {"geometry", "layer_offset", [](C& c, S v) { c.geometry.layer_offset = to_double("geometry.layer_offset", v); },
         [](const C& c) { return io::fmt(c.geometry.layer_offset); }},
        {"geometry", "certify_samples",
         [](C& c, S v) { c.certify.n_samples = static_cast<std::size_t>(to_int("geometry.certify_samples", v)); },
         [](const C& c) { return std::to_string(c.certify.n_samples); }},
        {"geometry", "certify_epsilon", [](C& c, S v) { c.certify.epsilon = to_double("geometry.certify_epsilon", v); },
         [](const C& c) { return io::fmt(c.certify.epsilon); }},
        {"geometry", "certify_lambda0", [](C& c, S v) { c.certify.lambda0 = to_double("geometry.certify_lambda0", v); },
         [](const C& c) { return io::fmt(c.certify.lambda0); }},
        {"geometry", "certify_step", [](C& c, S v) { c.certify.step = to_double("geometry.certify_step", v); },
         [](const C& c) { return io::fmt(c.certify.step); }},
        {"geometry", "certify_seed",
         [](C& c, S v) { c.certify.seed = static_cast<std::uint64_t>(to_int("geometry.certify_seed", v)); },
         [](const C& c) { return std::to_string(c.certify.seed); }},
        {"geometry", "trace_point", [](C& c, S v) { c.trace_point = to_vec3("geometry.trace_point", v); },
         [](const C& c) { return vec_str(c.trace_point); }},
        {"geometry", "trace_direction", [](C& c, S v) { c.trace_direction = to_vec3("geometry.trace_direction", v); },
         [](const C& c) { return vec_str(c.trace_direction); }},
        {"geometry", "trace_step", [](C& c, S v) { c.trace_step = to_double("geometry.trace_step", v); },
         [](const C& c) { return io::fmt(c.trace_step); }},
        // phantom
        {"phantom", "kind",
         [](C& c, S v) { c.phantom.kind = to_enum<PhantomKind>("phantom.kind", v, phantom_names()); },
         [](const C& c) { return phantom_name(c.phantom.kind); }},
        {"phantom", "center",
         [](C& c, S v) {
             const Vec3 p = to_vec3("phantom.center", v);
             first_bump(c).center = p;
             c.phantom.center = p;
         },
         [](const C& c) {
             return vec_str(c.phantom.kind == PhantomKind::smoothed_indicator ? c.phantom.center : first_bump(c).center);
         }},
        {"phantom", "width", [](C& c, S v) { first_bump(c).width = to_double("phantom.width", v); },
         [](const C& c) { return io::fmt(first_bump(c).width); }},
        {"phantom", "amplitude",
         [](C& c, S v) {
             const double a = to_double("phantom.amplitude", v);
             first_bump(c).amplitude = a;
             c.phantom.amplitude = a;
         },
         [](const C& c) {
             return io::fmt(c.phantom.kind == PhantomKind::smoothed_indicator ? c.phantom.amplitude : first_bump(c).amplitude);
         }},
        {"phantom", "bumps",
         [](C& c, S v) {
             auto b = to_bumps("phantom.bumps", v);
             if (!b.empty()) c.phantom.bumps = std::move(b);
         },
         [](const C& c) { return bumps_str(c.phantom.bumps); }},
        {"phantom", "radius", [](C& c, S v) { c.phantom.radius = to_double("phantom.radius", v); },
         [](const C& c) { return io::fmt(c.phantom.radius); }},
        {"phantom", "smoothing", [](C& c, S v) { c.phantom.smoothing = to_double("phantom.smoothing", v); },
         [](const C& c) { return io::fmt(c.phantom.smoothing); }},
        // normal_op
        {"normal_op", "h", [](C& c, S v) { c.normal_op.h = to_double("normal_op.h", v); },
         [](const C& c) { return io::fmt(c.normal_op.h); }},
        {"normal_op", "variant",
         [](C& c, S v) {
             c.normal_op.variant = to_enum<WeightVariant>(
                 "normal_op.variant", v, {{"global", WeightVariant::global}, {"scattering", WeightVariant::scattering}});
         },
         [](const C& c) { return to_string(c.normal_op.variant); }},
        {"normal_op", "Lambda", [](C& c, S v) { c.normal_op.cutoff.Lambda = to_double("normal_op.Lambda", v); },
         [](const C& c) { return io::fmt(c.normal_op.cutoff.Lambda); }},
        {"normal_op", "alpha_matched",
         [](C& c, S v) { c.normal_op.cutoff.alpha_matched = to_bool("normal_op.alpha_matched", v); },
         [](const C& c) { return bool_str(c.normal_op.cutoff.alpha_matched); }},
        {"normal_op", "cutoff_shift", [](C& c, S v) { c.normal_op.cutoff.shift = to_double("normal_op.cutoff_shift", v); },
         [](const C& c) { return io::fmt(c.normal_op.cutoff.shift); }},
        {"normal_op", "n_lambda", [](C& c, S v) { c.normal_op.n_lambda = to_int("normal_op.n_lambda", v); },
         [](const C& c) { return std::to_string(c.normal_op.n_lambda); }},
        {"normal_op", "n_omega", [](C& c, S v) { c.normal_op.n_omega = to_int("normal_op.n_omega", v); },
         [](const C& c) { return std::to_string(c.normal_op.n_omega); }},
        {"normal_op", "t_step", [](C& c, S v) { c.normal_op.t_step = to_double("normal_op.t_step", v); },
         [](const C& c) { return io::fmt(c.normal_op.t_step); }},
        {"normal_op", "symbol_xi", [](C& c, S v) { c.symbol_xi = to_list("normal_op.symbol_xi", v); },
         [](const C& c) { return list_str(c.symbol_xi); }},
        {"normal_op", "symbol_eta",
         [](C& c, S v) {
             const auto l = to_list("normal_op.symbol_eta", v);
             if (l.size() != 2) throw ConfigError("normal_op.symbol_eta: expected two numbers");
             c.symbol_eta = {l[0], l[1]};
         },
         [](const C& c) { return list_str({c.symbol_eta[0], c.symbol_eta[1]}); }},
        {"normal_op", "symbol_resolution", [](C& c, S v) { c.symbol.resolution = to_double("normal_op.symbol_resolution", v); },
         [](const C& c) { return io::fmt(c.symbol.resolution); }},
        {"normal_op", "window_radius", [](C& c, S v) { c.symbol.window_radius = to_double("normal_op.window_radius", v); },
         [](const C& c) { return io::fmt(c.symbol.window_radius); }},
        {"normal_op", "ellipticity_grid_n",
         [](C& c, S v) { c.ellipticity.grid_n = to_int("normal_op.ellipticity_grid_n", v); },
         [](const C& c) { return std::to_string(c.ellipticity.grid_n); }},
        {"normal_op", "ellipticity_radii",
         [](C& c, S v) { c.ellipticity.radii = to_list("normal_op.ellipticity_radii", v); },
         [](const C& c) { return list_str(c.ellipticity.radii); }},
        {"normal_op", "ellipticity_directions",
         [](C& c, S v) { c.ellipticity.n_directions = to_int("normal_op.ellipticity_directions", v); },
         [](const C& c) { return std::to_string(c.ellipticity.n_directions); }},
        {"normal_op", "ellipticity_threshold",
         [](C& c, S v) { c.ellipticity.threshold = to_double("normal_op.ellipticity_threshold", v); },
         [](const C& c) { return io::fmt(c.ellipticity.threshold); }},
        // solver
        {"solver", "tol", [](C& c, S v) { c.solver.tol = to_double("solver.tol", v); },
         [](const C& c) { return io::fmt(c.solver.tol); }},
        {"solver", "max_iter", [](C& c, S v) { c.solver.max_iter = to_int("solver.max_iter", v); },
         [](const C& c) { return std::to_string(c.solver.max_iter); }},
        {"solver", "restart", [](C& c, S v) { c.solver.restart = to_int("solver.restart", v); },
         [](const C& c) { return std::to_string(c.solver.restart); }},
        {"solver", "stagnation", [](C& c, S v) { c.solver.stagnation = to_double("solver.stagnation", v); },
         [](const C& c) { return io::fmt(c.solver.stagnation); }},
        {"solver", "grid_n", [](C& c, S v) { c.grid_n = to_int("solver.grid_n", v); },
         [](const C& c) { return std::to_string(c.grid_n); }},
        {"solver", "sinogram", [](C& c, S v) { c.sinogram = trim(v); }, [](const C& c) { return c.sinogram; }},
        // sweep
        {"sweep", "h_values", [](C& c, S v) { c.sweep_h = to_list("sweep.h_values", v); },
         [](const C& c) { return list_str(c.sweep_h); }},
        {"sweep", "sigma", [](C& c, S v) { c.sweep_sigma = to_bool("sweep.sigma", v); },
         [](const C& c) { return bool_str(c.sweep_sigma); }},
        // output
        {"output", "dir", [](C& c, S v) { c.output_dir = trim(v); }, [](const C& c) { return c.output_dir; }},
        {"output", "write_matrix", [](C& c, S v) { c.write_matrix = to_bool("output.write_matrix", v); },
         [](const C& c) { return bool_str(c.write_matrix); }},
    };
    return f;
}

inline const Field& find_field(const std::string& section, const std::string& key) {
    for (const auto& f : fields())
        if (f.section == section && f.key == key) return f;
    throw ConfigError("unknown config key '" + section + "." + key + "'");
}

} // namespace cfgdetail

/// Applies "section.key=value".
inline void apply_override(ExperimentConfig& c, const std::string& assignment) {
    const auto eq = assignment.find('=');
    const auto dot = assignment.find('.');
    if (eq == std::string::npos || dot == std::string::npos || dot > eq)
        throw ConfigError("override '" + assignment + "' is not of the form section.key=value");
    const auto section = cfgdetail::trim(assignment.substr(0, dot));
    const auto key = cfgdetail::trim(assignment.substr(dot + 1, eq - dot - 1));
    cfgdetail::find_field(section, key).set(c, assignment.substr(eq + 1));
}

/// Parses the line-based format: "[section]" headers, "key = value" lines,
/// '#' or ';' comments. Unknown sections and keys are rejected.
inline ExperimentConfig parse_config(const std::string& text, ExperimentConfig c = {}) {
    static const std::set<std::string> sections{"geometry", "phantom", "normal_op", "solver", "sweep", "output"};
    std::istringstream is(text);
    std::string line, section;
    int lineno = 0;
    while (std::getline(is, line)) {
        ++lineno;
        const auto hash = line.find('#');
        if (hash != std::string::npos) line = line.substr(0, hash);
        line = cfgdetail::trim(line);
        if (line.empty() || line[0] == ';') continue;
        if (line.front() == '[') {
            if (line.back() != ']') throw ConfigError("line " + std::to_string(lineno) + ": malformed section header");
            section = cfgdetail::trim(line.substr(1, line.size() - 2));
            if (!sections.count(section)) throw ConfigError("unknown config section [" + section + "]");
            continue;
        }
        const auto eq = line.find('=');
        if (eq == std::string::npos) throw ConfigError("line " + std::to_string(lineno) + ": expected key = value");
        if (section.empty()) throw ConfigError("line " + std::to_string(lineno) + ": key outside any section");
        const auto key = cfgdetail::trim(line.substr(0, eq));
        cfgdetail::find_field(section, key).set(c, line.substr(eq + 1));
    }
    return c;
}

inline ExperimentConfig load_config(const std::filesystem::path& p) {
    auto is = io::open_in(p);
    std::stringstream ss;
    ss << is.rdbuf();
    return parse_config(ss.str());
}

/// Resolved configuration (every key, defaults filled in); parse_config of
/// the result reproduces the same configuration.
inline std::string emit_config(const ExperimentConfig& c) {
    std::string out, section;
    for (const auto& f : cfgdetail::fields()) {
        if (f.section != section) {
            if (!section.empty()) out += "\n";
            section = f.section;
            out += "[" + section + "]\n";
        }
        out += f.key + " = " + f.get(c) + "\n";
    }
    return out;
}

/// Module-level validation of a parsed configuration.
inline void validate_config(const ExperimentConfig& c) {
    const Geometry g(c.geometry);
    c.normal_op.validate();
    if (c.grid_n < 2) throw ConfigError("solver.grid_n must be at least 2");
    if (!(c.solver.tol > 0.0) || c.solver.max_iter < 1 || c.solver.restart < 1)
        throw ConfigError("solver tol/max_iter/restart must be positive");
    if (!(c.trace_step > 0.0)) throw ConfigError("geometry.trace_step must be positive");
    if (!(c.symbol.resolution > 0.0)) throw ConfigError("normal_op.symbol_resolution must be positive");
    for (double h : c.sweep_h)
        if (!(h > 0.0) || h > 1.0) throw ConfigError("sweep.h_values must lie in (0, 1]");
}

inline std::uint64_t config_hash(const ExperimentConfig& c) {
    Fnv1a h;
    h.add(emit_config(c));
    return h.value();
}

} // namespace folxray
