#pragma once

// Sensitivity-parameter lattice sweeps, level-set extraction (marching
// squares with bilinear edge interpolation), and deterministic CSV / JSON /
// SVG emitters. Grid points are independent tasks; results are keyed by
// lattice index so any worker count produces identical output.

#include <Eigen/Core>
#include <array>
#include <atomic>
#include <cmath>
#include <cstdint>
#include <cstdio>
#include <cstring>
#include <fstream>
#include <limits>
#include <map>
#include <stdexcept>
#include <string>
#include <thread>
#include <utility>
#include <vector>

#include "json.hpp"

#include "survsens/em.hpp"
#include "survsens/ipw.hpp"
#include "survsens/stochastic_em.hpp"

namespace survsens {

enum class Method { em, sto_em, ipw, no_u, true_u };

inline std::string method_name(Method m) {
    switch (m) {
        case Method::em: return "em";
        case Method::sto_em: return "sto_em";
        case Method::ipw: return "ipw";
        case Method::no_u: return "no_u";
        case Method::true_u: return "true_u";
    }
    throw error("unknown method");
}

inline Method parse_method(const std::string& name) {
    if (name == "em") return Method::em;
    if (name == "sto_em") return Method::sto_em;
    if (name == "ipw") return Method::ipw;
    if (name == "no_u") return Method::no_u;
    if (name == "true_u") return Method::true_u;
    throw error("unknown method '" + name + "'");
}

struct GridSpec {
    Eigen::VectorXd zeta_z_values;            // sorted axis
    std::vector<Eigen::VectorXd> zeta_values; // per-cause sorted axes
    Method method = Method::em;
    double pi = 0.5;
    bool probit_intercept = true;
    EmControl em;
    StoEmControl sto;
    WeightSpec weights;
    std::uint64_t seed = 0; // master seed
    int threads = 1;
    std::vector<int> true_u; // required for Method::true_u

    void validate(const Dataset& data) const {
        if (zeta_z_values.size() < 1) throw error("grid: empty zeta_z axis");
        if (static_cast<int>(zeta_values.size()) != data.n_causes)
            throw error("grid: one zeta axis per cause required");
        auto check_axis = [](const Eigen::VectorXd& v, const std::string& name) {
            for (int i = 0; i < v.size(); ++i) {
                if (!std::isfinite(v[i])) throw error("grid: non-finite value on " + name);
                if (i > 0 && !(v[i] > v[i - 1]))
                    throw error("grid: " + name + " must be strictly increasing");
            }
        };
        check_axis(zeta_z_values, "zeta_z axis");
        for (std::size_t j = 0; j < zeta_values.size(); ++j) {
            if (zeta_values[j].size() < 1) throw error("grid: empty zeta axis");
            check_axis(zeta_values[j], "zeta_" + std::to_string(j + 1) + " axis");
        }
        if (method == Method::true_u && static_cast<int>(true_u.size()) != data.n())
            throw error("grid: true_u method requires a confounder vector of length n");
        if (!(pi > 0.0 && pi < 1.0)) throw error("grid: pi must lie in (0,1)");
    }
};

struct GridPoint {
    double zeta_z = 0.0;
    Eigen::VectorXd zeta;
    Eigen::VectorXd tau, se, t;
    bool ok = true;
};

struct GridResult {
    std::vector<GridPoint> points; // lexicographic lattice order
    Eigen::VectorXd zeta_z_axis;
    std::vector<Eigen::VectorXd> zeta_axes;
    int m = 1;
    std::string method;
    std::uint64_t master_seed = 0;
    std::uint64_t data_fingerprint = 0;
};

inline std::uint64_t dataset_fingerprint(const Dataset& data) {
    std::uint64_t h = 0xCBF29CE484222325ULL; // FNV-1a
    auto mix_bits = [&h](std::uint64_t v) {
        h ^= v;
        h *= 0x100000001B3ULL;
    };
    auto mix_double = [&](double d) {
        std::uint64_t bits;
        static_assert(sizeof(bits) == sizeof(d));
        std::memcpy(&bits, &d, sizeof(bits));
        mix_bits(bits);
    };
    for (const SurvivalRecord& r : data.records) {
        mix_double(r.time);
        mix_bits(static_cast<std::uint64_t>(r.status));
        mix_bits(static_cast<std::uint64_t>(r.cause));
        mix_bits(static_cast<std::uint64_t>(r.treat));
        for (int k = 0; k < r.covariates.size(); ++k) mix_double(r.covariates[k]);
    }
    return h;
}

namespace detail {

// Per-point seed from the master seed and the point's coordinates, so a
// point keeps its stochastic result when axes gain extra values.
inline std::uint64_t point_seed(std::uint64_t master, double zeta_z,
                                const Eigen::VectorXd& zeta) {
    auto bits_of = [](double d) {
        std::uint64_t b;
        std::memcpy(&b, &d, sizeof(b));
        return b;
    };
    std::uint64_t h = hash_combine(master, bits_of(zeta_z));
    for (int j = 0; j < zeta.size(); ++j) h = hash_combine(h, bits_of(zeta[j]));
    return h;
}

inline GridPoint nan_point(double zeta_z, const Eigen::VectorXd& zeta, int m) {
    GridPoint pt;
    pt.zeta_z = zeta_z;
    pt.zeta = zeta;
    pt.tau = Eigen::VectorXd::Constant(m, std::numeric_limits<double>::quiet_NaN());
    pt.se = pt.tau;
    pt.t = pt.tau;
    pt.ok = false;
    return pt;
}

} // namespace detail

// Cox fit per cause with the realized confounder appended as a free-slope
// covariate; the benchmark available only on simulated data.
inline std::pair<Eigen::VectorXd, Eigen::VectorXd> true_u_fit(const Dataset& data,
                                                              const std::vector<int>& u) {
    const int n = data.n(), p = data.p();
    Eigen::VectorXd tau(data.n_causes), se(data.n_causes);
    for (int j = 1; j <= data.n_causes; ++j) {
        CoxData slice = cox_slice(data, j);
        CoxData ext;
        ext.time = slice.time;
        ext.event = slice.event;
        ext.X.resize(n, p + 2);
        ext.X.leftCols(p + 1) = slice.X;
        for (int i = 0; i < n; ++i) ext.X(i, p + 1) = static_cast<double>(u[i]);
        const CoxFit fit = fit_cox(ext, Eigen::VectorXd::Zero(n), Eigen::VectorXd::Ones(n),
                                   Eigen::VectorXd::Zero(p + 2));
        tau[j - 1] = fit.coef[p];
        se[j - 1] = std::sqrt(fit.cov(p, p));
    }
    return {tau, se};
}

inline GridResult run_grid(const Dataset& data, const GridSpec& spec) {
    spec.validate(data);
    const int m = data.n_causes;

    GridResult grid;
    grid.zeta_z_axis = spec.zeta_z_values;
    grid.zeta_axes = spec.zeta_values;
    grid.m = m;
    grid.method = method_name(spec.method);
    grid.master_seed = spec.seed;
    grid.data_fingerprint = dataset_fingerprint(data);

    std::size_t total = spec.zeta_z_values.size();
    for (const Eigen::VectorXd& axis : spec.zeta_values) total *= axis.size();
    grid.points.resize(total);

    // sensitivity-independent methods are fit once and replicated
    Eigen::VectorXd const_tau, const_se;
    if (spec.method == Method::no_u) {
        const ModelEstimate fit = no_u_fit(data, spec.probit_intercept);
        const_tau.resize(m);
        const_se = fit.se_tau;
        for (int j = 0; j < m; ++j) const_tau[j] = fit.causes[j].tau;
    } else if (spec.method == Method::true_u) {
        std::tie(const_tau, const_se) = true_u_fit(data, spec.true_u);
    }

    auto decode = [&](std::size_t idx, double& zeta_z, Eigen::VectorXd& zeta) {
        zeta.resize(m);
        for (int j = m - 1; j >= 0; --j) {
            const std::size_t sz = spec.zeta_values[j].size();
            zeta[j] = spec.zeta_values[j][idx % sz];
            idx /= sz;
        }
        zeta_z = spec.zeta_z_values[idx];
    };

    auto eval_point = [&](std::size_t idx) {
        double zeta_z;
        Eigen::VectorXd zeta;
        decode(idx, zeta_z, zeta);
        SensitivityParams sens;
        sens.zeta_z = zeta_z;
        sens.zeta = zeta;
        sens.pi = spec.pi;
        GridPoint pt;
        pt.zeta_z = zeta_z;
        pt.zeta = zeta;
        try {
            switch (spec.method) {
                case Method::em: {
                    EmControl ctrl = spec.em;
                    ctrl.seed = detail::point_seed(spec.seed, zeta_z, zeta);
                    const ModelEstimate fit = run_em(data, sens, ctrl, spec.probit_intercept);
                    pt.tau.resize(m);
                    for (int j = 0; j < m; ++j) pt.tau[j] = fit.causes[j].tau;
                    pt.se = fit.se_tau;
                    break;
                }
                case Method::sto_em: {
                    StoEmControl ctrl = spec.sto;
                    ctrl.seed = detail::point_seed(spec.seed, zeta_z, zeta);
                    const CombinedEstimate fit =
                        run_stochastic_em(data, sens, ctrl, spec.probit_intercept);
                    pt.tau = fit.tau_hat;
                    pt.se = fit.se;
                    break;
                }
                case Method::ipw: {
                    StoEmControl ctrl = spec.sto;
                    ctrl.seed = detail::point_seed(spec.seed, zeta_z, zeta);
                    const CombinedEstimate fit = stochastic_em_ipw(
                        data, sens, ctrl, spec.weights, spec.probit_intercept);
                    pt.tau = fit.tau_hat;
                    pt.se = fit.se;
                    break;
                }
                case Method::no_u:
                case Method::true_u:
                    pt.tau = const_tau;
                    pt.se = const_se;
                    break;
            }
            pt.t.resize(m);
            for (int j = 0; j < m; ++j)
                pt.t[j] = pt.se[j] > 0.0 ? pt.tau[j] / pt.se[j]
                                         : std::numeric_limits<double>::quiet_NaN();
        } catch (const std::exception&) {
            pt = detail::nan_point(zeta_z, zeta, m);
        }
        grid.points[idx] = std::move(pt);
    };

    if (spec.threads <= 1) {
        for (std::size_t idx = 0; idx < total; ++idx) eval_point(idx);
    } else {
        std::atomic<std::size_t> next{0};
        auto worker = [&] {
            for (;;) {
                const std::size_t idx = next.fetch_add(1);
                if (idx >= total) break;
                eval_point(idx);
            }
        };
        std::vector<std::thread> pool;
        for (int t = 0; t < spec.threads; ++t) pool.emplace_back(worker);
        for (std::thread& th : pool) th.join();
    }
    return grid;
}

enum class ContourField { tau, abs_t };

inline std::string field_name(ContourField f) {
    return f == ContourField::tau ? "tau" : "abs_t";
}

struct ContourSet {
    double level = 0.0;
    ContourField field = ContourField::tau;
    int cause = 1;
    std::vector<std::vector<std::array<double, 2>>> polylines;
    int skipped_cells = 0;
};

namespace detail {

struct Segment {
    std::array<double, 2> a, b;
};

inline std::uint64_t vertex_key_part(double v) {
    std::uint64_t b;
    std::memcpy(&b, &v, sizeof(b));
    return b;
}

} // namespace detail

// Marching squares over the (zeta_z, zeta_cause) plane. All other cause
// axes must be singletons. Cells touching failed points are skipped and
// counted. Saddle cells are resolved by the cell-center average.
inline ContourSet extract_contours(const GridResult& grid, ContourField field, int cause,
                                   double level) {
    if (cause < 1 || cause > grid.m) throw error("extract_contours: cause out of range");
    const int nx = static_cast<int>(grid.zeta_z_axis.size());
    const int ny = static_cast<int>(grid.zeta_axes[cause - 1].size());
    if (nx < 2 || ny < 2)
        throw error("extract_contours: both swept axes need at least 2 points");
    for (int j = 0; j < grid.m; ++j) {
        if (j != cause - 1 && grid.zeta_axes[j].size() != 1)
            throw error("extract_contours: non-contoured cause axes must be singletons");
    }

    // stride of the contoured axes within the lexicographic point order
    std::size_t stride_y = 1;
    for (int j = grid.m - 1; j >= cause; --j) stride_y *= grid.zeta_axes[j].size();
    std::size_t stride_x = 1;
    for (int j = grid.m - 1; j >= 0; --j) stride_x *= grid.zeta_axes[j].size();

    auto value = [&](int ix, int iy) {
        const GridPoint& pt = grid.points[ix * stride_x + iy * stride_y];
        if (!pt.ok) return std::numeric_limits<double>::quiet_NaN();
        const double v = field == ContourField::tau ? pt.tau[cause - 1] : pt.t[cause - 1];
        return field == ContourField::abs_t ? std::abs(v) : v;
    };

    ContourSet cset;
    cset.level = level;
    cset.field = field;
    cset.cause = cause;

    std::vector<detail::Segment> segments;
    const Eigen::VectorXd& xs = grid.zeta_z_axis;
    const Eigen::VectorXd& ys = grid.zeta_axes[cause - 1];
    for (int ix = 0; ix + 1 < nx; ++ix) {
        for (int iy = 0; iy + 1 < ny; ++iy) {
            const double f00 = value(ix, iy), f10 = value(ix + 1, iy);
            const double f11 = value(ix + 1, iy + 1), f01 = value(ix, iy + 1);
            if (std::isnan(f00) || std::isnan(f10) || std::isnan(f11) || std::isnan(f01)) {
                ++cset.skipped_cells;
                continue;
            }
            const int idx = (f00 >= level ? 1 : 0) | (f10 >= level ? 2 : 0) |
                            (f11 >= level ? 4 : 0) | (f01 >= level ? 8 : 0);
            if (idx == 0 || idx == 15) continue;

            const double x0 = xs[ix], x1 = xs[ix + 1], y0 = ys[iy], y1 = ys[iy + 1];
            // crossing point on edge e (0 bottom, 1 right, 2 top, 3 left)
            auto cross = [&](int e) -> std::array<double, 2> {
                double fa, fb, ax, ay, bx, by;
                switch (e) {
                    case 0: fa = f00; fb = f10; ax = x0; ay = y0; bx = x1; by = y0; break;
                    case 1: fa = f10; fb = f11; ax = x1; ay = y0; bx = x1; by = y1; break;
                    case 2: fa = f01; fb = f11; ax = x0; ay = y1; bx = x1; by = y1; break;
                    default: fa = f00; fb = f01; ax = x0; ay = y0; bx = x0; by = y1; break;
                }
                const double t = (level - fa) / (fb - fa);
                return {ax + t * (bx - ax), ay + t * (by - ay)};
            };
            auto add = [&](int e1, int e2) {
                detail::Segment s{cross(e1), cross(e2)};
                if (s.a != s.b) segments.push_back(s);
            };
            switch (idx) {
                case 1: case 14: add(3, 0); break;
                case 2: case 13: add(0, 1); break;
                case 3: case 12: add(3, 1); break;
                case 4: case 11: add(1, 2); break;
                case 6: case 9: add(0, 2); break;
                case 7: case 8: add(2, 3); break;
                case 5:
                    if (0.25 * (f00 + f10 + f11 + f01) >= level) { add(0, 1); add(2, 3); }
                    else { add(0, 3); add(1, 2); }
                    break;
                case 10:
                    if (0.25 * (f00 + f10 + f11 + f01) >= level) { add(0, 3); add(1, 2); }
                    else { add(0, 1); add(2, 3); }
                    break;
            }
        }
    }

    // chain segments that share exact endpoints into polylines
    using Key = std::pair<std::uint64_t, std::uint64_t>;
    auto key_of = [](const std::array<double, 2>& v) {
        return Key{detail::vertex_key_part(v[0]), detail::vertex_key_part(v[1])};
    };
    std::map<Key, std::vector<std::size_t>> incident;
    for (std::size_t s = 0; s < segments.size(); ++s) {
        incident[key_of(segments[s].a)].push_back(s);
        incident[key_of(segments[s].b)].push_back(s);
    }
    std::vector<bool> used(segments.size(), false);
    auto walk = [&](std::size_t start_seg, const std::array<double, 2>& start_vertex) {
        std::vector<std::array<double, 2>> line;
        line.push_back(start_vertex);
        std::array<double, 2> at = start_vertex;
        std::size_t seg = start_seg;
        for (;;) {
            used[seg] = true;
            at = key_of(segments[seg].a) == key_of(at) ? segments[seg].b : segments[seg].a;
            line.push_back(at);
            bool advanced = false;
            for (std::size_t cand : incident[key_of(at)]) {
                if (!used[cand]) {
                    seg = cand;
                    advanced = true;
                    break;
                }
            }
            if (!advanced) break;
        }
        return line;
    };
    // open curves first, starting from odd-degree vertices in map order
    for (const auto& [key, segs] : incident) {
        (void)key;
        std::size_t unused_here = 0;
        std::size_t first = 0;
        for (std::size_t s : segs)
            if (!used[s]) {
                if (unused_here == 0) first = s;
                ++unused_here;
            }
        if (unused_here % 2 == 1) {
            const std::array<double, 2> v =
                key_of(segments[first].a) == key ? segments[first].a : segments[first].b;
            cset.polylines.push_back(walk(first, v));
        }
    }
    // remaining closed loops
    for (std::size_t s = 0; s < segments.size(); ++s)
        if (!used[s]) cset.polylines.push_back(walk(s, segments[s].a));
    return cset;
}

// ---------------------------------------------------------------------------
// Emitters. All floats use round-trip-exact %.17g in CSV/JSON-adjacent text.

namespace detail {

inline std::string fmt17(double v) {
    char buf[40];
    std::snprintf(buf, sizeof(buf), "%.17g", v);
    return buf;
}

} // namespace detail

inline void emit_grid_csv(const GridResult& grid, const std::string& path) {
    std::ofstream out(path);
    if (!out) throw error("cannot write " + path);
    out << "zeta_z";
    for (int j = 1; j <= grid.m; ++j) out << ",zeta_" << j;
    for (int j = 1; j <= grid.m; ++j)
        out << ",tau_" << j << ",se_" << j << ",t_" << j;
    out << ",status\n";
    for (const GridPoint& pt : grid.points) {
        out << detail::fmt17(pt.zeta_z);
        for (int j = 0; j < grid.m; ++j) out << ',' << detail::fmt17(pt.zeta[j]);
        for (int j = 0; j < grid.m; ++j)
            out << ',' << detail::fmt17(pt.tau[j]) << ',' << detail::fmt17(pt.se[j]) << ','
                << detail::fmt17(pt.t[j]);
        out << ',' << (pt.ok ? "ok" : "failed") << '\n';
    }
}

inline GridResult parse_grid_csv(const std::string& path) {
    std::ifstream in(path);
    if (!in) throw error("cannot open " + path);
    std::string line;
    if (!std::getline(in, line)) throw error(path + ": empty file");
    const std::vector<std::string> header = detail::split_csv_line(line);
    int m = 0;
    while (m + 1 < static_cast<int>(header.size()) &&
           header[m + 1] == "zeta_" + std::to_string(m + 1))
        ++m;
    if (m == 0 || header.empty() || header[0] != "zeta_z" || header.back() != "status")
        throw error(path + ": not a grid csv");

    GridResult grid;
    grid.m = m;
    grid.method = "parsed";
    std::vector<std::vector<double>> axis_vals(m + 1);
    int row = 0;
    while (std::getline(in, line)) {
        if (line.empty() || line == "\r") continue;
        const std::vector<std::string> cells = detail::split_csv_line(line);
        if (cells.size() != header.size())
            throw error(detail::row_msg(row, "cell count mismatch"));
        GridPoint pt;
        int c = 0;
        pt.zeta_z = detail::parse_double(cells[c++], row, "zeta_z");
        pt.zeta.resize(m);
        for (int j = 0; j < m; ++j)
            pt.zeta[j] = detail::parse_double(cells[c++], row, "zeta");
        pt.tau.resize(m);
        pt.se.resize(m);
        pt.t.resize(m);
        for (int j = 0; j < m; ++j) {
            pt.tau[j] = detail::parse_double(cells[c++], row, "tau");
            pt.se[j] = detail::parse_double(cells[c++], row, "se");
            pt.t[j] = detail::parse_double(cells[c++], row, "t");
        }
        pt.ok = cells[c] == "ok";
        axis_vals[0].push_back(pt.zeta_z);
        for (int j = 0; j < m; ++j) axis_vals[j + 1].push_back(pt.zeta[j]);
        grid.points.push_back(std::move(pt));
        ++row;
    }
    auto unique_sorted = [](std::vector<double> v) {
        std::sort(v.begin(), v.end());
        v.erase(std::unique(v.begin(), v.end()), v.end());
        return Eigen::Map<Eigen::VectorXd>(v.data(), v.size()).eval();
    };
    grid.zeta_z_axis = unique_sorted(axis_vals[0]);
    for (int j = 0; j < m; ++j) grid.zeta_axes.push_back(unique_sorted(axis_vals[j + 1]));
    return grid;
}

namespace detail {

inline nlohmann::ordered_json point_to_json(const GridPoint& pt, int m) {
    nlohmann::ordered_json obj;
    obj["zeta_z"] = pt.zeta_z;
    obj["zeta"] = std::vector<double>(pt.zeta.data(), pt.zeta.data() + m);
    obj["tau"] = std::vector<double>(pt.tau.data(), pt.tau.data() + m);
    obj["se"] = std::vector<double>(pt.se.data(), pt.se.data() + m);
    obj["t"] = std::vector<double>(pt.t.data(), pt.t.data() + m);
    obj["status"] = pt.ok ? "ok" : "failed";
    return obj;
}

inline char hexdigit(int v) { return v < 10 ? char('0' + v) : char('a' + v - 10); }

inline std::string hex64(std::uint64_t v) {
    std::string s = "0x";
    for (int shift = 60; shift >= 0; shift -= 4)
        s.push_back(hexdigit(static_cast<int>((v >> shift) & 0xF)));
    return s;
}

} // namespace detail

inline void emit_grid_json(const GridResult& grid, const std::string& path) {
    nlohmann::ordered_json doc;
    doc["method"] = grid.method;
    doc["master_seed"] = grid.master_seed;
    doc["data_fingerprint"] = detail::hex64(grid.data_fingerprint);
    doc["zeta_z_axis"] = std::vector<double>(grid.zeta_z_axis.data(),
                                             grid.zeta_z_axis.data() + grid.zeta_z_axis.size());
    nlohmann::ordered_json axes = nlohmann::ordered_json::array();
    for (const Eigen::VectorXd& axis : grid.zeta_axes)
        axes.push_back(std::vector<double>(axis.data(), axis.data() + axis.size()));
    doc["zeta_axes"] = axes;
    nlohmann::ordered_json pts = nlohmann::ordered_json::array();
    for (const GridPoint& pt : grid.points) pts.push_back(detail::point_to_json(pt, grid.m));
    doc["points"] = pts;
    std::ofstream out(path);
    if (!out) throw error("cannot write " + path);
    out << doc.dump(2) << '\n';
}

inline void emit_contours_json(const std::vector<ContourSet>& sets, const std::string& path) {
    nlohmann::ordered_json doc = nlohmann::ordered_json::array();
    for (const ContourSet& cs : sets) {
        nlohmann::ordered_json obj;
        obj["field"] = field_name(cs.field);
        obj["cause"] = cs.cause;
        obj["level"] = cs.level;
        obj["skipped_cells"] = cs.skipped_cells;
        nlohmann::ordered_json lines = nlohmann::ordered_json::array();
        for (const auto& line : cs.polylines) {
            nlohmann::ordered_json pts = nlohmann::ordered_json::array();
            for (const auto& v : line) pts.push_back({v[0], v[1]});
            lines.push_back(pts);
        }
        obj["polylines"] = lines;
        doc.push_back(obj);
    }
    std::ofstream out(path);
    if (!out) throw error("cannot write " + path);
    out << doc.dump(2) << '\n';
}

// SVG with axis box, heat cells of the chosen field, and contour polylines
// labeled with their levels. Byte-deterministic given inputs.
inline void emit_svg(const GridResult& grid, ContourField field, int cause,
                     const std::vector<ContourSet>& contours, const std::string& path) {
    if (cause < 1 || cause > grid.m) throw error("emit_svg: cause out of range");
    const int width = 640, height = 480;
    const double ml = 60, mr = 20, mt = 20, mb = 50;
    const Eigen::VectorXd& xs = grid.zeta_z_axis;
    const Eigen::VectorXd& ys = grid.zeta_axes[cause - 1];
    const double xmin = xs[0], xmax = xs[xs.size() - 1];
    const double ymin = ys[0], ymax = ys[ys.size() - 1];
    const double xspan = xmax > xmin ? xmax - xmin : 1.0;
    const double yspan = ymax > ymin ? ymax - ymin : 1.0;
    auto sx = [&](double x) { return ml + (x - xmin) / xspan * (width - ml - mr); };
    auto sy = [&](double y) { return height - mb - (y - ymin) / yspan * (height - mt - mb); };
    char buf[256];
    std::string svg;
    auto append = [&](const char* fmt, auto... args) {
        std::snprintf(buf, sizeof(buf), fmt, args...);
        svg += buf;
    };
    append("<svg xmlns=\"http://www.w3.org/2000/svg\" width=\"%d\" height=\"%d\" "
           "viewBox=\"0 0 %d %d\">\n", width, height, width, height);

    std::size_t stride_y = 1;
    for (int j = grid.m - 1; j >= cause; --j) stride_y *= grid.zeta_axes[j].size();
    std::size_t stride_x = 1;
    for (int j = grid.m - 1; j >= 0; --j) stride_x *= grid.zeta_axes[j].size();
    const bool sliceable = [&] {
        for (int j = 0; j < grid.m; ++j)
            if (j != cause - 1 && grid.zeta_axes[j].size() != 1) return false;
        return true;
    }();

    if (sliceable && xs.size() >= 2 && ys.size() >= 2) {
        auto value = [&](int ix, int iy) {
            const GridPoint& pt = grid.points[ix * stride_x + iy * stride_y];
            if (!pt.ok) return std::numeric_limits<double>::quiet_NaN();
            const double v = field == ContourField::tau ? pt.tau[cause - 1] : pt.t[cause - 1];
            return field == ContourField::abs_t ? std::abs(v) : v;
        };
        double vmin = std::numeric_limits<double>::infinity(), vmax = -vmin;
        for (int ix = 0; ix < xs.size(); ++ix)
            for (int iy = 0; iy < ys.size(); ++iy) {
                const double v = value(ix, iy);
                if (!std::isnan(v)) {
                    vmin = std::min(vmin, v);
                    vmax = std::max(vmax, v);
                }
            }
        const double vspan = vmax > vmin ? vmax - vmin : 1.0;
        for (int ix = 0; ix + 1 < xs.size(); ++ix) {
            for (int iy = 0; iy + 1 < ys.size(); ++iy) {
                const double v = 0.25 * (value(ix, iy) + value(ix + 1, iy) +
                                         value(ix, iy + 1) + value(ix + 1, iy + 1));
                if (std::isnan(v)) continue;
                const double tnorm = (v - vmin) / vspan;
                // diverging ramp: blue (low) through white to red (high)
                const int r = static_cast<int>(std::lround(
                    tnorm < 0.5 ? 59 + (255 - 59) * 2 * tnorm : 255 - (255 - 180) * (2 * tnorm - 1)));
                const int g = static_cast<int>(std::lround(
                    tnorm < 0.5 ? 76 + (255 - 76) * 2 * tnorm : 255 - 251 * (2 * tnorm - 1)));
                const int b = static_cast<int>(std::lround(
                    tnorm < 0.5 ? 192 + (255 - 192) * 2 * tnorm : 255 - 217 * (2 * tnorm - 1)));
                append("<rect x=\"%.3f\" y=\"%.3f\" width=\"%.3f\" height=\"%.3f\" "
                       "fill=\"rgb(%d,%d,%d)\"/>\n",
                       sx(xs[ix]), sy(ys[iy + 1]), sx(xs[ix + 1]) - sx(xs[ix]),
                       sy(ys[iy]) - sy(ys[iy + 1]), r, g, b);
            }
        }
    }

    for (const ContourSet& cs : contours) {
        const char* color = cs.field == ContourField::abs_t ? "#d62728" : "#1f77b4";
        for (const auto& line : cs.polylines) {
            if (line.empty()) continue;
            svg += "<path d=\"";
            for (std::size_t i = 0; i < line.size(); ++i) {
                append("%c%.3f %.3f", i == 0 ? 'M' : 'L', sx(line[i][0]), sy(line[i][1]));
            }
            append("\" fill=\"none\" stroke=\"%s\" stroke-width=\"1.5\"/>\n", color);
            append("<text x=\"%.3f\" y=\"%.3f\" font-size=\"10\" fill=\"%s\">%g</text>\n",
                   sx(line[0][0]) + 3.0, sy(line[0][1]) - 3.0, color, cs.level);
        }
    }

    // axis box and tick labels
    append("<rect x=\"%.3f\" y=\"%.3f\" width=\"%.3f\" height=\"%.3f\" fill=\"none\" "
           "stroke=\"black\"/>\n", ml, mt, width - ml - mr, height - mt - mb);
    for (int ix = 0; ix < xs.size(); ++ix)
        append("<text x=\"%.3f\" y=\"%.3f\" font-size=\"10\" text-anchor=\"middle\">%g</text>\n",
               sx(xs[ix]), height - mb + 15.0, xs[ix]);
    for (int iy = 0; iy < ys.size(); ++iy)
        append("<text x=\"%.3f\" y=\"%.3f\" font-size=\"10\" text-anchor=\"end\">%g</text>\n",
               ml - 5.0, sy(ys[iy]) + 3.0, ys[iy]);
    append("<text x=\"%.3f\" y=\"%.3f\" font-size=\"12\" text-anchor=\"middle\">zeta_z</text>\n",
           ml + (width - ml - mr) / 2.0, height - 10.0);
    append("<text x=\"%.3f\" y=\"%.3f\" font-size=\"12\" text-anchor=\"middle\" "
           "transform=\"rotate(-90 15 %.3f)\">zeta_%d</text>\n",
           15.0, mt + (height - mt - mb) / 2.0, mt + (height - mt - mb) / 2.0, cause);
    svg += "</svg>\n";

    std::ofstream out(path);
    if (!out) throw error("cannot write " + path);
    out << svg;
}

} // namespace survsens
