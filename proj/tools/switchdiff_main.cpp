// switchdiff command-line front end. JSON config in, CSV/JSON artifacts out,
// one manifest per run so any run can be replayed from its manifest file.

#include <chrono>
#include <cstdio>
#include <fstream>
#include <iostream>
#include <optional>
#include <sstream>
#include <string>
#include <vector>

#include <CLI11.hpp>
#include <json.hpp>

#include "switchdiff/switchdiff.hpp"

using nlohmann::json;
using namespace switchdiff;

namespace {

std::string fmt17(double v) {
    char buf[40];
    std::snprintf(buf, sizeof(buf), "%.17g", v);
    return buf;
}

json load_config(const std::string& path) {
    std::ifstream in(path);
    if (!in) throw std::invalid_argument("config: cannot open \"" + path + "\"");
    json j;
    in >> j;
    // A manifest from a previous run replays as a config.
    if (j.contains("command") && j.contains("config")) return j["config"];
    return j;
}

WrightFisherParams wf_params_from_config(const json& cfg) {
    SwitchingDiffusionModel m = model_from_json(cfg);
    if (!m.wf_params)
        throw std::invalid_argument("model: this command needs the wright_fisher family");
    return *m.wf_params;
}

double get_or(const json& section, const char* key, double fallback) {
    if (!section.contains(key)) return fallback;
    if (!section[key].is_number())
        throw std::invalid_argument(std::string(key) + ": non-numeric field");
    return section[key].get<double>();
}

long get_or_long(const json& section, const char* key, long fallback) {
    if (!section.contains(key)) return fallback;
    if (!section[key].is_number_integer())
        throw std::invalid_argument(std::string(key) + ": non-integer field");
    return section[key].get<long>();
}

struct CommonArgs {
    std::string config_path;
    std::string out_dir = ".";
    std::optional<std::uint64_t> seed;
};

std::uint64_t resolve_seed(const CommonArgs& common, const json& cfg) {
    if (common.seed) return *common.seed;
    if (cfg.contains("seed")) return cfg["seed"].get<std::uint64_t>();
    return 0;
}

std::string out_path(const CommonArgs& common, const std::string& name) {
    if (common.out_dir.empty() || common.out_dir == ".") return name;
    return common.out_dir + "/" + name;
}

void write_file(const std::string& path, const std::string& content) {
    std::ofstream out(path, std::ios::binary);
    if (!out) throw std::invalid_argument("out: cannot write \"" + path + "\"");
    out << content;
}

// Outputs are checked before the manifest is written; a manifest never
// references a missing or empty file.
void write_manifest(const CommonArgs& common, const std::string& command, const json& resolved,
                    std::uint64_t seed, const std::vector<std::string>& outputs,
                    std::chrono::steady_clock::time_point started) {
    for (const auto& name : outputs) {
        std::ifstream probe(out_path(common, name), std::ios::binary | std::ios::ate);
        if (!probe || probe.tellg() <= 0)
            throw NumericError("manifest: output \"" + name + "\" missing or empty");
    }
    const double secs =
        std::chrono::duration<double>(std::chrono::steady_clock::now() - started).count();
    json man;
    man["command"] = command;
    man["config"] = resolved;
    man["seed"] = seed;
    man["version"] = SWITCHDIFF_VERSION;
    man["outputs"] = outputs;
    man["duration_seconds"] = secs;
    write_file(out_path(common, "manifest.json"), man.dump(2) + "\n");
}

int cmd_simulate(const CommonArgs& common, std::optional<long> paths_flag,
                 std::optional<double> step_flag, std::optional<double> horizon_flag) {
    const auto started = std::chrono::steady_clock::now();
    json cfg = load_config(common.config_path);
    SwitchingDiffusionModel m = model_from_json(cfg);

    json sim = cfg.value("simulate", json::object());
    SimConfig sc;
    sc.step = step_flag ? *step_flag : get_or(sim, "step", sc.step);
    sc.horizon = horizon_flag ? *horizon_flag : get_or(sim, "horizon", sc.horizon);
    sc.seed = resolve_seed(common, cfg);
    long n_paths = paths_flag ? *paths_flag : get_or_long(sim, "paths", 1);
    if (n_paths < 1) throw std::invalid_argument("paths: must be >= 1");
    const double x0 = get_or(sim, "x0", 0.5);
    const int i0 = static_cast<int>(get_or_long(sim, "i0", 1));
    const std::string policy = sim.value("boundary_policy", "automatic");
    if (policy == "reflect")
        sc.boundary_policy = BoundaryPolicy::reflect;
    else if (policy == "absorb")
        sc.boundary_policy = BoundaryPolicy::absorb;
    else if (policy == "clamp")
        sc.boundary_policy = BoundaryPolicy::clamp;
    else if (policy != "automatic")
        throw std::invalid_argument("boundary_policy: unknown value \"" + policy + "\"");

    std::ostringstream csv;
    bool warned = false;
    if (n_paths == 1) {
        PathSample p = simulate_path(m, x0, i0, sc);
        warned = p.step_warning;
        std::ostringstream os;
        write_path_csv(os, p);
        csv << os.str();
    } else {
        csv << "path,time,position,phase\n";
        for (long pi = 0; pi < n_paths; ++pi) {
            SimConfig pc = sc;
            pc.seed = sc.seed ^ static_cast<std::uint64_t>(pi);
            PathSample p = simulate_path(m, x0, i0, pc);
            warned = warned || p.step_warning;
            for (std::size_t s = 0; s < p.times.size(); ++s)
                csv << pi + 1 << "," << fmt17(p.times[s]) << "," << fmt17(p.positions[s]) << ","
                    << p.phases[s] << "\n";
        }
    }
    if (warned)
        std::cerr << "warning: max |Q_ii| * step exceeded 0.1 along a path; "
                     "reduce --step for reliable jump statistics\n";
    write_file(out_path(common, "paths.csv"), csv.str());

    json resolved = cfg;
    resolved["seed"] = sc.seed;
    resolved["simulate"] = {{"x0", x0},        {"i0", i0},
                            {"step", sc.step}, {"horizon", sc.horizon},
                            {"paths", n_paths}, {"boundary_policy", policy}};
    write_manifest(common, "simulate", resolved, sc.seed, {"paths.csv"}, started);
    return 0;
}

int cmd_density(const CommonArgs& common, std::optional<int> trunc_flag,
                std::optional<int> grid_flag) {
    const auto started = std::chrono::steady_clock::now();
    json cfg = load_config(common.config_path);
    SwitchingDiffusionModel m = model_from_json(cfg);
    WrightFisherParams p = wf_params_from_config(cfg);
    const int N = p.n_phases;

    json den = cfg.value("density", json::object());
    const double t = get_or(den, "t", 1.0);
    const double x = get_or(den, "x", 0.5);
    const int M = trunc_flag ? *trunc_flag : static_cast<int>(get_or_long(den, "truncation", 12));
    const int grid = grid_flag ? *grid_flag : static_cast<int>(get_or_long(den, "grid", 200));
    if (grid < 2) throw std::invalid_argument("grid: must be >= 2");

    SpectralBasis basis = build_spectral_basis(m, p, M);

    std::vector<std::string> outputs;
    json resolved = cfg;
    resolved["seed"] = resolve_seed(common, cfg);
    json rden = {{"t", t}, {"x", x}, {"truncation", M}, {"grid", grid}};

    if (den.contains("interval")) {
        const auto& iv = den["interval"];
        if (!iv.is_array() || iv.size() != 2)
            throw std::invalid_argument("interval: expected [lo, hi]");
        const double lo = iv[0].get<double>(), hi = iv[1].get<double>();
        PhaseMatrix P = transition_probability(basis, t, x, lo, hi);
        json out;
        out["t"] = t;
        out["x"] = x;
        out["interval"] = {lo, hi};
        out["truncation"] = M;
        out["tail_estimate"] = basis.tail_estimate(t);
        for (int i = 0; i < N; ++i) {
            json row = json::array();
            for (int j = 0; j < N; ++j) row.push_back(P(i, j));
            out["probability"].push_back(row);
        }
        write_file(out_path(common, "prob.json"), out.dump(2) + "\n");
        outputs.push_back("prob.json");
        rden["interval"] = {lo, hi};
    } else {
        // Midpoint y-grid: the density carries the weight W(y), which is
        // singular at the endpoints for negative alpha or beta.
        std::ostringstream csv;
        csv << "y";
        for (int i = 1; i <= N; ++i)
            for (int j = 1; j <= N; ++j) csv << ",m" << i << "_" << j;
        csv << "\n";
        for (int g = 0; g < grid; ++g) {
            const double y = (g + 0.5) / grid;
            PhaseMatrix D = transition_density(basis, t, x, y);
            csv << fmt17(y);
            for (int i = 0; i < N; ++i)
                for (int j = 0; j < N; ++j) csv << "," << fmt17(D(i, j));
            csv << "\n";
        }
        write_file(out_path(common, "density.csv"), csv.str());
        outputs.push_back("density.csv");
    }
    resolved["density"] = rden;
    write_manifest(common, "density", resolved, resolved["seed"].get<std::uint64_t>(), outputs,
                   started);
    return 0;
}

int cmd_bvp(const CommonArgs& common, bool exit_time, std::optional<int> grid_flag,
            bool richardson) {
    const auto started = std::chrono::steady_clock::now();
    json cfg = load_config(common.config_path);
    SwitchingDiffusionModel m = model_from_json(cfg);

    json bvp = cfg.value("bvp", json::object());
    const double c = get_or(bvp, "c", 0.25);
    const double d = get_or(bvp, "d", 0.75);
    int grid = grid_flag ? *grid_flag : static_cast<int>(get_or_long(bvp, "grid", 256));
    if (grid % 2 != 0) ++grid;  // keep the midpoint on every refinement level

    BvpSolution sol =
        exit_time ? solve_exit_time(m, c, d, grid) : solve_hitting(m, c, d, grid);
    std::ostringstream csv;
    write_bvp_csv(csv, sol);
    write_file(out_path(common, "bvp.csv"), csv.str());

    if (richardson) {
        auto solve = [&](int n) {
            return exit_time ? solve_exit_time(m, c, d, n) : solve_hitting(m, c, d, n);
        };
        BvpSolution s2 = solve(2 * grid), s3 = solve(4 * grid);
        // max-norm differences at the coarse interior nodes, which are shared
        // by every refinement level; a single probe point can sit on a
        // symmetry axis where the scheme is exact and the ratio is noise
        double d1 = 0.0, d2 = 0.0;
        for (int g = 1; g + 1 < sol.grid.size(); ++g) {
            const double x = sol.grid[g];
            d1 = std::max(d1, (sol.values[g] - s2.at(x)).cwiseAbs().maxCoeff());
            d2 = std::max(d2, (s2.at(x) - s3.at(x)).cwiseAbs().maxCoeff());
        }
        json rep;
        rep["grids"] = {grid, 2 * grid, 4 * grid};
        rep["richardson_ratio"] = d1 / d2;
        std::cout << rep.dump() << "\n";
    }

    json resolved = cfg;
    resolved["seed"] = resolve_seed(common, cfg);
    resolved["bvp"] = {{"c", c}, {"d", d}, {"grid", grid}};
    write_manifest(common, exit_time ? "exittime" : "hitprob", resolved,
                   resolved["seed"].get<std::uint64_t>(), {"bvp.csv"}, started);
    return 0;
}

int cmd_invariant(const CommonArgs& common, std::optional<int> grid_flag) {
    const auto started = std::chrono::steady_clock::now();
    json cfg = load_config(common.config_path);
    WrightFisherParams p = wf_params_from_config(cfg);
    const int N = p.n_phases;

    json inv = cfg.value("invariant", json::object());
    const int grid = grid_flag ? *grid_flag : static_cast<int>(get_or_long(inv, "grid", 1000));
    if (grid < 2) throw std::invalid_argument("grid: must be >= 2");

    if ((p.alpha > -1.0 && p.alpha < 0.0) || (p.beta > -1.0 && p.beta < 0.0))
        std::cerr << "warning: negative alpha or beta makes the boundaries absorbing; "
                     "the tabulated density omits the unknown boundary atoms\n";

    InvariantDistribution dist = invariant_distribution(p);
    std::ostringstream csv;
    csv << "y";
    for (int j = 1; j <= N; ++j) csv << ",psi_" << j;
    csv << "\n";
    for (int g = 0; g <= grid; ++g) {
        const double y = static_cast<double>(g) / grid;
        csv << fmt17(y);
        for (int j = 1; j <= N; ++j) csv << "," << fmt17(dist.component(j, y));
        csv << "\n";
    }
    write_file(out_path(common, "invariant.csv"), csv.str());

    json resolved = cfg;
    resolved["seed"] = resolve_seed(common, cfg);
    resolved["invariant"] = {{"grid", grid}};
    write_manifest(common, "invariant", resolved, resolved["seed"].get<std::uint64_t>(),
                   {"invariant.csv"}, started);
    return 0;
}

int cmd_thresholds(const CommonArgs& common) {
    const auto started = std::chrono::steady_clock::now();
    json cfg = load_config(common.config_path);
    WrightFisherParams p = wf_params_from_config(cfg);

    TendencyReport rep = tendency_analysis(p);
    json out;
    out["thresholds"] = json::array();
    for (const auto& th : rep.thresholds) {
        if (th)
            out["thresholds"].push_back(*th);
        else
            out["thresholds"].push_back(nullptr);
    }
    switch (rep.regime) {
        case TendencyRegime::max_forward: out["regime"] = "max_forward"; break;
        case TendencyRegime::max_backward: out["regime"] = "max_backward"; break;
        case TendencyRegime::mixed: out["regime"] = "mixed"; break;
    }
    out["k_breakpoints"] = rep.k_breakpoints;
    std::cout << out.dump(2) << "\n";

    json resolved = cfg;
    resolved["seed"] = resolve_seed(common, cfg);
    write_manifest(common, "thresholds", resolved, resolved["seed"].get<std::uint64_t>(), {},
                   started);
    return 0;
}

}  // namespace

int main(int argc, char** argv) {
    CLI::App app{"Switching-diffusion analysis toolkit"};
    app.require_subcommand(1);

    CommonArgs common;
    std::optional<long> paths_flag;
    std::optional<double> step_flag, horizon_flag;
    std::optional<int> trunc_flag, grid_flag;
    bool richardson = false;

    auto add_common = [&](CLI::App* sub) {
        sub->add_option("--config", common.config_path, "JSON config or a previous manifest")
            ->required();
        sub->add_option("--out", common.out_dir, "output directory (default: current)");
        sub->add_option("--seed", common.seed, "RNG seed override");
    };

    CLI::App* simulate = app.add_subcommand("simulate", "sample paths to paths.csv");
    add_common(simulate);
    simulate->add_option("--paths", paths_flag, "number of paths");
    simulate->add_option("--step", step_flag, "Euler step size");
    simulate->add_option("--horizon", horizon_flag, "time horizon");

    CLI::App* density = app.add_subcommand(
        "density", "spectral transition density (density.csv) or interval probability (prob.json)");
    add_common(density);
    density->add_option("--truncation", trunc_flag, "series truncation level");
    density->add_option("--grid", grid_flag, "y-grid size for density.csv");

    CLI::App* hitprob = app.add_subcommand("hitprob", "hitting-probability matrix to bvp.csv");
    add_common(hitprob);
    hitprob->add_option("--grid", grid_flag, "interior grid size");
    hitprob->add_flag("--richardson", richardson, "also report the grid-refinement ratio");

    CLI::App* exittime = app.add_subcommand("exittime", "expected-exit-time matrix to bvp.csv");
    add_common(exittime);
    exittime->add_option("--grid", grid_flag, "interior grid size");
    exittime->add_flag("--richardson", richardson, "also report the grid-refinement ratio");

    CLI::App* invariant = app.add_subcommand("invariant", "invariant density table to invariant.csv");
    add_common(invariant);
    invariant->add_option("--grid", grid_flag, "y-grid size");

    CLI::App* thresholds = app.add_subcommand("thresholds", "phase-tendency report to stdout");
    add_common(thresholds);

    try {
        app.parse(argc, argv);
        if (simulate->parsed()) return cmd_simulate(common, paths_flag, step_flag, horizon_flag);
        if (density->parsed()) return cmd_density(common, trunc_flag, grid_flag);
        if (hitprob->parsed()) return cmd_bvp(common, false, grid_flag, richardson);
        if (exittime->parsed()) return cmd_bvp(common, true, grid_flag, richardson);
        if (invariant->parsed()) return cmd_invariant(common, grid_flag);
        if (thresholds->parsed()) return cmd_thresholds(common);
        return 2;
    } catch (const CLI::ParseError& e) {
        const int rc = app.exit(e);
        return rc == 0 ? 0 : 2;
    } catch (const NumericError& e) {
        std::cerr << "error: " << e.what() << "\n";
        return 3;
    } catch (const nlohmann::json::exception& e) {
        std::cerr << "error: " << e.what() << "\n";
        return 2;
    } catch (const std::invalid_argument& e) {
        std::cerr << "error: " << e.what() << "\n";
        return 2;
    } catch (const std::exception& e) {
        std::cerr << "error: " << e.what() << "\n";
        return 3;
    }
}
