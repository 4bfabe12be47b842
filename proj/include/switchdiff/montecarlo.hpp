#pragma once

#include <cmath>
#include <cstdint>
#include <cstdlib>
#include <functional>
#include <ostream>
#include <string>
#include <thread>
#include <vector>

#include <json.hpp>

#include "switchdiff/core.hpp"
#include "switchdiff/model.hpp"

namespace switchdiff {

// Splittable 64-bit generator; per-path streams are seeded as
// master_seed XOR path_index so path-level parallelism cannot reorder draws.
struct SplitMix64 {
    std::uint64_t state;

    explicit SplitMix64(std::uint64_t seed) : state(seed) {}

    std::uint64_t next() {
        std::uint64_t z = (state += 0x9e3779b97f4a7c15ull);
        z = (z ^ (z >> 30)) * 0xbf58476d1ce4e5b9ull;
        z = (z ^ (z >> 27)) * 0x94d049bb133111ebull;
        return z ^ (z >> 31);
    }

    // Strictly inside (0,1); keeps log() in Box-Muller finite.
    double uniform() { return (static_cast<double>(next() >> 12) + 0.5) * 0x1.0p-52; }
};

// Box-Muller with cached spare on top of a SplitMix64 stream.
class PathRng {
public:
    explicit PathRng(std::uint64_t seed) : gen_(seed) {}

    double uniform() { return gen_.uniform(); }

    double normal() {
        if (has_spare_) {
            has_spare_ = false;
            return spare_;
        }
        const double u1 = gen_.uniform(), u2 = gen_.uniform();
        const double r = std::sqrt(-2.0 * std::log(u1));
        const double th = 2.0 * 3.14159265358979323846 * u2;
        spare_ = r * std::sin(th);
        has_spare_ = true;
        return r * std::cos(th);
    }

private:
    SplitMix64 gen_;
    bool has_spare_ = false;
    double spare_ = 0.0;
};

// `automatic` resolves per boundary and phase from classify_boundaries for the
// built-in family (reflect everywhere else); the named policies force one
// behavior at both boundaries.
enum class BoundaryPolicy { automatic, reflect, absorb, clamp };

struct SimConfig {
    double step = 1e-3;
    double horizon = 1.0;
    long n_paths = 1;
    std::uint64_t seed = 0;
    BoundaryPolicy boundary_policy = BoundaryPolicy::automatic;
};

struct PathSample {
    std::vector<double> times;
    std::vector<double> positions;
    std::vector<int> phases;
    std::vector<double> jump_times;
    std::uint64_t seed = 0;
    bool absorbed = false;
    double max_rate_step = 0.0;  // observed max of -Q_ii(x) * h along the path
    bool step_warning = false;   // max_rate_step exceeded 0.1
};

// Parallelism cap: SWITCHDIFF_THREADS when set, hardware concurrency otherwise.
inline int thread_count() {
    if (const char* env = std::getenv("SWITCHDIFF_THREADS")) {
        int v = std::atoi(env);
        if (v >= 1) return v;
    }
    unsigned hc = std::thread::hardware_concurrency();
    return hc >= 1 ? static_cast<int>(hc) : 1;
}

namespace detail {

// Hot-loop coefficient access for the built-in family: per-phase constants,
// no matrix allocation per step.
struct WfDynamics {
    int N;
    std::vector<double> drift0, drift1;  // tau_i(x) = drift0[i] - x drift1[i]
    std::vector<double> lam_c, mu_c;     // (1-x) lambda_i and (1-x)/x mu_i
    bool lower_absorbs_last = false;
    bool upper_absorbs = false;

    explicit WfDynamics(const WrightFisherParams& p) : N(p.n_phases) {
        drift0.resize(N);
        drift1.resize(N);
        lam_c.resize(N);
        mu_c.resize(N);
        for (int i = 1; i <= N; ++i) {
            drift0[i - 1] = p.alpha + 1 + N - i;
            drift1[i - 1] = p.alpha + p.beta + 2 + N - i;
            lam_c[i - 1] = i < N ? (N - i) * (i + p.beta - p.k) : 0.0;
            mu_c[i - 1] = i > 1 ? (i - 1) * (N - i + p.k) : 0.0;
        }
        BoundaryReport br = classify_boundaries(p);
        lower_absorbs_last = br.lower_absorbing_last_phase;
        upper_absorbs = br.upper_absorbing;
    }

    double drift(int i, double x) const { return drift0[i - 1] - x * drift1[i - 1]; }

    double sigma(int i, double x) const {
        (void)i;
        const double v = 2.0 * x * (1.0 - x);
        return v > 0.0 ? std::sqrt(v) : 0.0;
    }

    // Rates at the clamped point; the factor 1/(1-x) is unbounded at 1.
    double neg_qii(int i, double x) const {
        const double xc = std::min(std::max(x, 0.0), 1.0 - 1e-9);
        return (lam_c[i - 1] + mu_c[i - 1] * xc) / (1.0 - xc);
    }

    int jump_target(int i, double x, double u) const {
        const double xc = std::min(std::max(x, 0.0), 1.0 - 1e-9);
        const double lam = lam_c[i - 1], mu = mu_c[i - 1] * xc;
        return u * (lam + mu) < lam ? i + 1 : i - 1;
    }

    bool absorbs_lower(int phase) const { return lower_absorbs_last && phase == N; }
    bool absorbs_upper(int) const { return upper_absorbs; }
};

struct GenericDynamics {
    const SwitchingDiffusionModel* m;

    double drift(int i, double x) const { return m->B(x)(i - 1, i - 1); }

    double sigma(int i, double x) const {
        const double v = m->A(x)(i - 1, i - 1);
        return v > 0.0 ? std::sqrt(v) : 0.0;
    }

    double neg_qii(int i, double x) const { return -m->Q(x)(i - 1, i - 1); }

    int jump_target(int i, double x, double u) const {
        PhaseMatrix Q = m->Q(x);
        const double total = -Q(i - 1, i - 1);
        double acc = 0.0;
        int last = 0;
        for (int j = 1; j <= m->n_phases; ++j) {
            if (j == i) continue;
            acc += Q(i - 1, j - 1) / total;
            last = j;
            if (u < acc) return j;
        }
        return last;  // u landed in rounding slack
    }

    bool absorbs_lower(int) const { return false; }
    bool absorbs_upper(int) const { return false; }
};

struct ResolvedBoundaries {
    bool bounded = false;
    double lo = 0.0, hi = 1.0;
    BoundaryPolicy policy = BoundaryPolicy::automatic;
};

// One Euler-Maruyama path. The jump decision and the position increment both
// use the pre-step state; the phase change lands after the move, so the step's
// diffusion runs in the old phase. `control` sees each post-step state and may
// stop the path.
template <class Dynamics, class Control>
void run_path(const Dynamics& dyn, double x0, int i0, const SimConfig& cfg,
              const ResolvedBoundaries& rb, PathRng& rng, double& max_rate_step, bool& absorbed,
              Control&& control) {
    double x = x0;
    int phase = i0;
    double t = 0.0;
    absorbed = false;
    max_rate_step = 0.0;

    const long n_steps = static_cast<long>(std::ceil(cfg.horizon / cfg.step - 1e-12));
    for (long s = 0; s < n_steps; ++s) {
        const double hs = std::min(cfg.step, cfg.horizon - t);

        const double qn = dyn.neg_qii(phase, x);
        max_rate_step = std::max(max_rate_step, qn * hs);

        bool jumped = false;
        int new_phase = phase;
        const double u = rng.uniform();
        if (u < 1.0 - std::exp(-qn * hs)) {
            new_phase = dyn.jump_target(phase, x, rng.uniform());
            jumped = true;
        }

        const double xi = rng.normal();
        double xn = x + dyn.drift(phase, x) * hs + dyn.sigma(phase, x) * std::sqrt(hs) * xi;
        phase = new_phase;

        if (rb.bounded && (xn <= rb.lo || xn >= rb.hi)) {
            const bool at_lower = xn <= rb.lo;
            BoundaryPolicy act = rb.policy;
            if (act == BoundaryPolicy::automatic)
                act = (at_lower ? dyn.absorbs_lower(phase) : dyn.absorbs_upper(phase))
                          ? BoundaryPolicy::absorb
                          : BoundaryPolicy::reflect;
            switch (act) {
                case BoundaryPolicy::reflect:
                    while (xn < rb.lo || xn > rb.hi) {
                        if (xn < rb.lo) xn = 2.0 * rb.lo - xn;
                        if (xn > rb.hi) xn = 2.0 * rb.hi - xn;
                    }
                    break;
                case BoundaryPolicy::absorb:
                    xn = at_lower ? rb.lo : rb.hi;
                    absorbed = true;
                    break;
                case BoundaryPolicy::clamp:
                    xn = std::min(std::max(xn, rb.lo + 1e-9), rb.hi - 1e-9);
                    break;
                case BoundaryPolicy::automatic:
                    break;  // unreachable
            }
        }

        x = xn;
        t += hs;
        if (!control(t, x, phase, jumped)) return;
        if (absorbed) return;
    }
}

template <class Fn>
void dispatch_dynamics(const SwitchingDiffusionModel& m, Fn&& fn) {
    if (m.wf_params) {
        fn(WfDynamics(*m.wf_params));
    } else {
        fn(GenericDynamics{&m});
    }
}

inline ResolvedBoundaries resolve_boundaries(const SwitchingDiffusionModel& m,
                                             const SimConfig& cfg) {
    ResolvedBoundaries rb;
    rb.bounded = m.bounded();
    rb.lo = m.lo;
    rb.hi = m.hi;
    rb.policy = cfg.boundary_policy;
    return rb;
}

// Runs fn(path_index, worker_slot, rng) for every path, chunked over the
// thread cap. Outputs must go to per-path or per-slot storage; any cross-path
// reduction happens after the join, in slot order, so results do not depend
// on the thread count.
template <class Fn>
void for_each_path(long n_paths, std::uint64_t seed, const Fn& fn) {
    const int n_threads = static_cast<int>(std::min<long>(thread_count(), n_paths));
    if (n_threads <= 1) {
        for (long p = 0; p < n_paths; ++p) {
            PathRng rng(seed ^ static_cast<std::uint64_t>(p));
            fn(p, 0, rng);
        }
        return;
    }
    std::vector<std::thread> pool;
    pool.reserve(n_threads);
    const long chunk = (n_paths + n_threads - 1) / n_threads;
    for (int tix = 0; tix < n_threads; ++tix) {
        const long b = tix * chunk, e = std::min(n_paths, b + chunk);
        pool.emplace_back([&fn, seed, b, e, tix] {
            for (long p = b; p < e; ++p) {
                PathRng rng(seed ^ static_cast<std::uint64_t>(p));
                fn(p, tix, rng);
            }
        });
    }
    for (auto& th : pool) th.join();
}

}  // namespace detail

// Simulates one recorded path; deterministic for a given seed.
inline PathSample simulate_path(const SwitchingDiffusionModel& m, double x0, int i0,
                                const SimConfig& cfg) {
    if (i0 < 1 || i0 > m.n_phases) throw std::invalid_argument("simulate_path: phase out of range");
    if (m.bounded() && !(x0 > m.lo && x0 < m.hi))
        throw std::invalid_argument("simulate_path: start position outside the state interval");
    if (!(cfg.step > 0.0) || !(cfg.horizon > 0.0) || cfg.step > cfg.horizon)
        throw std::invalid_argument("simulate_path: need 0 < step <= horizon");

    PathSample out;
    out.seed = cfg.seed;
    out.times.push_back(0.0);
    out.positions.push_back(x0);
    out.phases.push_back(i0);

    detail::ResolvedBoundaries rb = detail::resolve_boundaries(m, cfg);
    detail::dispatch_dynamics(m, [&](const auto& dyn) {
        PathRng rng(cfg.seed);
        int prev_phase = i0;
        detail::run_path(dyn, x0, i0, cfg, rb, rng, out.max_rate_step, out.absorbed,
                 [&](double t, double x, int phase, bool jumped) {
                     out.times.push_back(t);
                     out.positions.push_back(x);
                     out.phases.push_back(phase);
                     if (jumped && phase != prev_phase) out.jump_times.push_back(t);
                     prev_phase = phase;
                     return true;
                 });
    });
    out.step_warning = out.max_rate_step > 0.1;
    return out;
}

struct TransitionEstimate {
    Eigen::MatrixXd probability;  // row = starting phase, col = terminal phase
    Eigen::MatrixXd std_error;
    long n_paths_per_row = 0;
    double max_rate_step = 0.0;
    bool step_warning = false;
};

// Empirical frequency of {X_t in (lo,hi), Y_t = j} per starting phase.
// When (lo,hi) covers the whole state interval the closure is counted, so the
// rows sum to exactly 1.
inline TransitionEstimate estimate_transition_probability(const SwitchingDiffusionModel& m,
                                                          double x0, double t, double lo, double hi,
                                                          const SimConfig& cfg) {
    if (cfg.n_paths < 100)
        throw std::invalid_argument("estimate_transition_probability: need at least 100 paths");
    if (!(lo < hi)) throw std::invalid_argument("estimate_transition_probability: empty interval");
    const int N = m.n_phases;
    const bool full_interval = m.bounded() && lo <= m.lo && hi >= m.hi;

    SimConfig pc = cfg;
    pc.horizon = t;

    TransitionEstimate est;
    est.probability = Eigen::MatrixXd::Zero(N, N);
    est.std_error = Eigen::MatrixXd::Zero(N, N);
    est.n_paths_per_row = cfg.n_paths;

    detail::ResolvedBoundaries rb = detail::resolve_boundaries(m, pc);
    const int n_threads = thread_count();

    for (int i0 = 1; i0 <= N; ++i0) {
        std::vector<std::vector<long>> counts(n_threads, std::vector<long>(N, 0));
        std::vector<double> rate_peaks(n_threads, 0.0);
        detail::dispatch_dynamics(m, [&](const auto& dyn) {
            detail::for_each_path(cfg.n_paths, cfg.seed ^ (0x9e3779b97f4a7c15ull * (i0 - 1)),
                                  [&](long, int slot, PathRng& rng) {
                                      double xf = x0;
                                      int phf = i0;
                                      double peak = 0.0;
                                      bool absorbed = false;
                                      detail::run_path(dyn, x0, i0, pc, rb, rng, peak, absorbed,
                                                       [&](double, double x, int phase, bool) {
                                                           xf = x;
                                                           phf = phase;
                                                           return true;
                                                       });
                                      const bool in = full_interval ? (xf >= lo && xf <= hi)
                                                                    : (xf > lo && xf < hi);
                                      if (in) ++counts[slot][phf - 1];
                                      if (peak > rate_peaks[slot]) rate_peaks[slot] = peak;
                                  });
        });
        for (int j = 0; j < N; ++j) {
            long c = 0;
            for (const auto& tc : counts) c += tc[j];
            const double p = static_cast<double>(c) / cfg.n_paths;
            est.probability(i0 - 1, j) = p;
            est.std_error(i0 - 1, j) = std::sqrt(p * (1.0 - p) / cfg.n_paths);
        }
        for (double rp : rate_peaks) est.max_rate_step = std::max(est.max_rate_step, rp);
    }
    est.step_warning = est.max_rate_step > 0.1;
    return est;
}

struct HistogramEstimate {
    Eigen::MatrixXd mass;    // bins x phases, total mass 1
    Eigen::VectorXd edges;   // bins+1 edges
    long samples = 0;
};

// Time-average occupancy after burn-in on (position bin, phase).
inline HistogramEstimate estimate_invariant_histogram(const SwitchingDiffusionModel& m,
                                                      const SimConfig& cfg, double burn_in,
                                                      int bins, double x0 = 0.5, int i0 = 1) {
    if (!(burn_in < cfg.horizon))
        throw std::invalid_argument("estimate_invariant_histogram: horizon must exceed burn_in");
    if (bins < 1) throw std::invalid_argument("estimate_invariant_histogram: bins must be >= 1");
    if (!m.bounded())
        throw std::invalid_argument("estimate_invariant_histogram: unbounded state interval");
    const int N = m.n_phases;

    const int n_threads = thread_count();
    std::vector<Eigen::Matrix<long, Eigen::Dynamic, Eigen::Dynamic>> counts(
        n_threads, Eigen::Matrix<long, Eigen::Dynamic, Eigen::Dynamic>::Zero(bins, N));

    detail::ResolvedBoundaries rb = detail::resolve_boundaries(m, cfg);
    const double lo = m.lo, span = m.hi - m.lo;
    detail::dispatch_dynamics(m, [&](const auto& dyn) {
        detail::for_each_path(cfg.n_paths, cfg.seed, [&](long, int slot, PathRng& rng) {
            double peak = 0.0;
            bool absorbed = false;
            detail::run_path(dyn, x0, i0, cfg, rb, rng, peak, absorbed,
                             [&](double t, double x, int phase, bool) {
                                 if (t >= burn_in) {
                                     int b = static_cast<int>((x - lo) / span * bins);
                                     b = std::min(std::max(b, 0), bins - 1);
                                     ++counts[slot](b, phase - 1);
                                 }
                                 return true;
                             });
        });
    });

    HistogramEstimate est;
    est.mass = Eigen::MatrixXd::Zero(bins, N);
    long total = 0;
    for (const auto& c : counts) {
        est.mass += c.cast<double>();
        total += c.sum();
    }
    if (total == 0) throw NumericError("estimate_invariant_histogram: no samples accumulated");
    est.mass /= static_cast<double>(total);
    est.samples = total;
    est.edges.resize(bins + 1);
    for (int b = 0; b <= bins; ++b) est.edges[b] = lo + span * b / bins;
    return est;
}

struct ExitTimeEstimate {
    double mean = 0.0;
    double std_error = 0.0;
    long n_paths = 0;
    long censored = 0;  // paths that hit the horizon before leaving (c,d)
};

// First time X leaves (c,d), averaged over paths; horizon acts as a cap and
// censored paths are counted at the cap.
inline ExitTimeEstimate estimate_mean_exit_time(const SwitchingDiffusionModel& m, double x0, int i0,
                                                double c, double d, const SimConfig& cfg) {
    if (!(c < x0 && x0 < d))
        throw std::invalid_argument("estimate_mean_exit_time: start must lie inside (c,d)");
    std::vector<double> exit_times(cfg.n_paths, 0.0);
    std::vector<unsigned char> censored(cfg.n_paths, 0);

    detail::ResolvedBoundaries rb = detail::resolve_boundaries(m, cfg);
    detail::dispatch_dynamics(m, [&](const auto& dyn) {
        detail::for_each_path(cfg.n_paths, cfg.seed, [&](long p, int, PathRng& rng) {
            double peak = 0.0;
            bool absorbed = false;
            double when = cfg.horizon;
            bool out = false;
            detail::run_path(dyn, x0, i0, cfg, rb, rng, peak, absorbed,
                             [&](double t, double x, int, bool) {
                                 if (x <= c || x >= d) {
                                     when = t;
                                     out = true;
                                     return false;
                                 }
                                 return true;
                             });
            exit_times[p] = when;
            censored[p] = out ? 0 : 1;
        });
    });

    ExitTimeEstimate est;
    est.n_paths = cfg.n_paths;
    double sum = 0.0, sumsq = 0.0;
    for (long p = 0; p < cfg.n_paths; ++p) {
        sum += exit_times[p];
        sumsq += exit_times[p] * exit_times[p];
        est.censored += censored[p];
    }
    est.mean = sum / cfg.n_paths;
    const double var = std::max(0.0, sumsq / cfg.n_paths - est.mean * est.mean);
    est.std_error = std::sqrt(var / cfg.n_paths);
    return est;
}

// CSV dump, one row per recorded step.
inline void write_path_csv(std::ostream& os, const PathSample& path) {
    os << "time,position,phase\n";
    char buf[64];
    for (std::size_t i = 0; i < path.times.size(); ++i) {
        std::snprintf(buf, sizeof(buf), "%.17g,%.17g,%d\n", path.times[i], path.positions[i],
                      path.phases[i]);
        os << buf;
    }
}

inline nlohmann::json to_json(const TransitionEstimate& est) {
    nlohmann::json j;
    const int N = static_cast<int>(est.probability.rows());
    for (int i = 0; i < N; ++i) {
        nlohmann::json prow = nlohmann::json::array(), serow = nlohmann::json::array();
        for (int jj = 0; jj < N; ++jj) {
            prow.push_back(est.probability(i, jj));
            serow.push_back(est.std_error(i, jj));
        }
        j["probability"].push_back(prow);
        j["std_error"].push_back(serow);
    }
    j["n_paths_per_row"] = est.n_paths_per_row;
    j["max_rate_step"] = est.max_rate_step;
    j["step_warning"] = est.step_warning;
    return j;
}

}  // namespace switchdiff
