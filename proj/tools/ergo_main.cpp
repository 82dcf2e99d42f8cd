// Command-line front end: average / factor / correlate / kvn / metastable /
// orbit / run. Numeric output goes to CSV or the binary grid format chosen
// by file extension; every subcommand prints a JSON summary on stdout.
// Exit codes: 0 ok, 2 precondition violation (including bad usage),
// 3 invariant violation (a bug), 4 resource guard.

#include <chrono>
#include <cmath>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <map>
#include <optional>
#include <sstream>
#include <string>
#include <vector>

#include "CLI11.hpp"
#include "json.hpp"

#include "ergo/antiuniform.hpp"
#include "ergo/averaging.hpp"
#include "ergo/dynamics.hpp"
#include "ergo/edge.hpp"
#include "ergo/errors.hpp"
#include "ergo/factors.hpp"
#include "ergo/grid.hpp"
#include "ergo/kvn.hpp"
#include "ergo/metastability.hpp"

using Json = nlohmann::ordered_json;
using namespace ergo;

namespace {

namespace fs = std::filesystem;

struct Timer {
    std::chrono::steady_clock::time_point t0 = std::chrono::steady_clock::now();
    double ms() const {
        return std::chrono::duration<double, std::milli>(std::chrono::steady_clock::now() - t0)
            .count();
    }
};

std::string fmt17(double x) {
    char buf[40];
    std::snprintf(buf, sizeof buf, "%.17g", x);
    return buf;
}

std::vector<std::string> split(const std::string& s, char sep) {
    std::vector<std::string> out;
    std::string cur;
    for (char ch : s) {
        if (ch == sep) {
            out.push_back(cur);
            cur.clear();
        } else {
            cur.push_back(ch);
        }
    }
    out.push_back(cur);
    return out;
}

std::string trim(const std::string& s) {
    auto b = s.find_first_not_of(" \t\r\n");
    if (b == std::string::npos) return "";
    auto e = s.find_last_not_of(" \t\r\n");
    return s.substr(b, e - b + 1);
}

std::int64_t to_i64(const std::string& s, const std::string& what) {
    try {
        std::size_t used = 0;
        auto v = std::stoll(s, &used);
        require(used == s.size(), what + ": bad integer '" + s + "'");
        return v;
    } catch (const PreconditionError&) {
        throw;
    } catch (const std::exception&) {
        throw PreconditionError(what + ": bad integer '" + s + "'");
    }
}

double to_f64(const std::string& s, const std::string& what) {
    try {
        std::size_t used = 0;
        double v = std::stod(s, &used);
        require(used == s.size(), what + ": bad number '" + s + "'");
        return v;
    } catch (const PreconditionError&) {
        throw;
    } catch (const std::exception&) {
        throw PreconditionError(what + ": bad number '" + s + "'");
    }
}

std::vector<std::int64_t> parse_i64_list(const std::string& s, const std::string& what) {
    std::vector<std::int64_t> out;
    for (const auto& part : split(s, ','))
        if (!trim(part).empty()) out.push_back(to_i64(trim(part), what));
    return out;
}

std::vector<double> parse_f64_list(const std::string& s, const std::string& what) {
    std::vector<double> out;
    for (const auto& part : split(s, ','))
        if (!trim(part).empty()) out.push_back(to_f64(trim(part), what));
    return out;
}

// Plain-text key=value config: '#' starts a comment, blank lines ignored.
std::map<std::string, std::string> parse_config_file(const std::string& path) {
    std::ifstream in(path);
    require(in.good(), "cannot open config file " + path);
    std::map<std::string, std::string> kv;
    std::string line;
    while (std::getline(in, line)) {
        if (auto hash = line.find('#'); hash != std::string::npos) line.erase(hash);
        line = trim(line);
        if (line.empty()) continue;
        auto eq = line.find('=');
        require(eq != std::string::npos, "config line without '=': " + line);
        kv[trim(line.substr(0, eq))] = trim(line.substr(eq + 1));
    }
    return kv;
}

GridFunction load_grid(const std::string& path) { return to_grid(read_grid_file(path)); }

void save_fn(const std::string& path, const GridFunction& f) {
    if (path.ends_with(".csv"))
        write_csv(path, f);
    else
        write_binary(path, f);
}

void save_fn(const std::string& path, const RandomizedGridFunction& f) {
    if (path.ends_with(".csv"))
        write_csv(path, f);
    else
        write_binary(path, f);
}

void write_text(const std::string& path, const std::string& text) {
    std::ofstream out(path, std::ios::binary);
    require(out.good(), "cannot open " + path + " for writing");
    out << text;
    require(out.good(), "failed writing " + path);
}

Json shape_json(const GridShape& s) { return Json{{"P", s.P}, {"l", s.l}}; }

// ---------------------------------------------------------------- average

struct AverageOpts {
    std::vector<std::string> in;
    std::int64_t N = 1;
    std::string op = "SN";
    bool oracle = false;
    std::string out;
    std::string residual;
};

void cmd_average(const AverageOpts& o) {
    Timer t;
    Json j;
    j["command"] = "average";
    j["op"] = o.op;
    j["N"] = o.N;
    j["inputs"] = o.in;

    double residual_max = 0.0;
    bool have_residual = !o.residual.empty();

    if (o.op == "SN") {
        require(o.in.size() == 1, "SN takes exactly one input function");
        GridFunction g = load_grid(o.in[0]);
        GridFunction fast = sliding_average(g, o.N);
        GridFunction main = o.oracle ? sliding_average_oracle(g, o.N) : fast;
        save_fn(o.out, main);
        j["shape"] = shape_json(main.shape);
        if (have_residual) {
            GridFunction slow = sliding_average_oracle(g, o.N);
            GridFunction diff = fast;
            for (std::size_t i = 0; i < diff.size(); ++i) diff.v[i] -= slow.v[i];
            for (double d : diff.v) residual_max = std::max(residual_max, std::abs(d));
            save_fn(o.residual, diff);
        }
    } else if (o.op == "DeltaN") {
        require(o.in.size() == 1, "DeltaN takes exactly one input function");
        RandomizedGridFunction g = read_grid_file(o.in[0]);
        RandomizedGridFunction fast = diagonal_projection(g, o.N);
        RandomizedGridFunction main = o.oracle ? diagonal_projection_oracle(g, o.N) : fast;
        save_fn(o.out, main);
        j["shape"] = shape_json(main.shape);
        if (have_residual) {
            RandomizedGridFunction slow = diagonal_projection_oracle(g, o.N);
            RandomizedGridFunction diff = fast;
            for (std::size_t i = 0; i < diff.size(); ++i) diff.v[i] -= slow.v[i];
            for (double d : diff.v) residual_max = std::max(residual_max, std::abs(d));
            save_fn(o.residual, diff);
        }
    } else { // AN
        require(!o.in.empty(), "AN needs input functions");
        std::vector<GridFunction> gs;
        gs.reserve(o.in.size());
        for (const auto& p : o.in) gs.push_back(load_grid(p));
        require(gs[0].shape.l == int(gs.size()),
                "AN over Z_P^l needs exactly l input functions");
        GridFunction fast = multiple_average(gs, o.N);
        GridFunction main = o.oracle ? multiple_average_oracle(gs, o.N) : fast;
        save_fn(o.out, main);
        j["shape"] = shape_json(main.shape);
        if (have_residual) {
            GridFunction slow = multiple_average_oracle(gs, o.N);
            GridFunction diff = fast;
            for (std::size_t i = 0; i < diff.size(); ++i) diff.v[i] -= slow.v[i];
            for (double d : diff.v) residual_max = std::max(residual_max, std::abs(d));
            save_fn(o.residual, diff);
        }
    }

    j["oracle"] = o.oracle;
    j["output"] = o.out;
    if (have_residual) {
        j["residual"] = o.residual;
        j["residual_max"] = residual_max;
    }
    j["elapsed_ms"] = t.ms();
    std::cout << j.dump(2) << "\n";
}

// ---------------------------------------------------------------- factor

Json provenance_json(const Provenance& p) {
    Json j;
    if (std::holds_alternative<TrivialProvenance>(p)) {
        j["kind"] = "trivial";
    } else if (const auto* iv = std::get_if<IntervalProvenance>(&p)) {
        j["kind"] = "interval";
        j["eta0"] = iv->eta0;
        j["alpha"] = iv->alpha;
        j["range"] = Json::array({iv->range.lo, iv->range.hi});
        j["cells"] = iv->cells.size();
    } else if (std::holds_alternative<JoinProvenance>(p)) {
        j["kind"] = "join";
    } else {
        j["kind"] = "edge";
    }
    return j;
}

Json factor_to_json(const Factor& Y) {
    Json j;
    j["schema"] = "ergo-factor-v1";
    j["shape"] = shape_json(Y.shape);
    j["weights"] = Y.space.w;
    j["atom_count"] = Y.atom_count;
    j["provenance"] = provenance_json(Y.prov);
    j["labels"] = Y.label;
    return j;
}

// Files carry labels, not generating data, so a reloaded factor conditions
// identically but reports file provenance.
Factor factor_from_json(const Json& j) {
    require(j.value("schema", "") == "ergo-factor-v1", "not a factor file");
    Factor Y;
    Y.shape = GridShape{j.at("shape").at("P").get<std::int64_t>(),
                        j.at("shape").at("l").get<int>()};
    Y.space = FiniteProbabilitySpace(j.at("weights").get<std::vector<double>>());
    Y.label = j.at("labels").get<std::vector<std::uint32_t>>();
    Y.atom_count = j.at("atom_count").get<std::uint32_t>();
    Y.validate();
    return Y;
}

Factor load_factor(const std::string& path) {
    std::ifstream in(path);
    require(in.good(), "cannot open factor file " + path);
    Json j = Json::parse(in, nullptr, true, true);
    return factor_from_json(j);
}

struct FactorBuildOpts {
    std::string phi;
    double eta0 = 0.1;
    double alpha = 0.0;
    std::optional<double> lo, hi;
    std::string out;
};

void cmd_factor_build(const FactorBuildOpts& o) {
    Timer t;
    RandomizedGridFunction phi = read_grid_file(o.phi);
    double lo = o.lo.value_or(*std::min_element(phi.v.begin(), phi.v.end()));
    double hi = o.hi.value_or(*std::max_element(phi.v.begin(), phi.v.end()));
    Factor Y = build_interval_factor(phi, Interval{lo, hi}, o.eta0, o.alpha);
    write_text(o.out, factor_to_json(Y).dump(2) + "\n");

    Json j;
    j["command"] = "factor build";
    j["phi"] = o.phi;
    j["eta0"] = o.eta0;
    j["alpha"] = o.alpha;
    j["range"] = Json::array({lo, hi});
    j["atom_count"] = Y.atom_count;
    j["output"] = o.out;
    j["elapsed_ms"] = t.ms();
    std::cout << j.dump(2) << "\n";
}

struct FactorJoinOpts {
    std::string a, b, out;
};

void cmd_factor_join(const FactorJoinOpts& o) {
    Timer t;
    Factor J = join(load_factor(o.a), load_factor(o.b));
    write_text(o.out, factor_to_json(J).dump(2) + "\n");

    Json j;
    j["command"] = "factor join";
    j["a"] = o.a;
    j["b"] = o.b;
    j["atom_count"] = J.atom_count;
    j["output"] = o.out;
    j["elapsed_ms"] = t.ms();
    std::cout << j.dump(2) << "\n";
}

struct FactorInspectOpts {
    std::string in;
    std::string function;
    std::string out;
};

void cmd_factor_inspect(const FactorInspectOpts& o) {
    Timer t;
    std::ifstream fin(o.in);
    require(fin.good(), "cannot open factor file " + o.in);
    Json file = Json::parse(fin, nullptr, true, true);
    Factor Y = factor_from_json(file);

    std::vector<double> mass(Y.atom_count, 0.0);
    const std::size_t n = Y.shape.size();
    for (std::size_t x = 0; x < Y.space.size(); ++x) {
        double wp = Y.space.w[x] / double(n);
        for (std::size_t g = 0; g < n; ++g) mass[Y.label[x * n + g]] += wp;
    }

    Json j;
    j["command"] = "factor inspect";
    j["input"] = o.in;
    j["shape"] = file.at("shape");
    j["atom_count"] = Y.atom_count;
    j["provenance"] = file.value("provenance", Json{{"kind", "unknown"}});
    j["atom_mass"] = mass;

    if (!o.function.empty()) {
        require(!o.out.empty(), "--function needs --out for the conditioned values");
        RandomizedGridFunction f = read_grid_file(o.function);
        RandomizedGridFunction ce = cond_expectation(f, Y);
        save_fn(o.out, ce);
        double n2f = lp_norm(f, Norm::L2), n2c = lp_norm(ce, Norm::L2);
        RandomizedGridFunction res = f;
        for (std::size_t i = 0; i < res.size(); ++i) res.v[i] -= ce.v[i];
        double n2r = lp_norm(res, Norm::L2);
        j["function"] = o.function;
        j["conditioned"] = o.out;
        j["l2_input"] = n2f;
        j["l2_conditioned"] = n2c;
        j["pythagoras_residual"] = std::abs(n2f * n2f - n2c * n2c - n2r * n2r);
    }
    j["elapsed_ms"] = t.ms();
    std::cout << j.dump(2) << "\n";
}

// ---------------------------------------------------------------- correlate

struct CorrelateOpts {
    std::vector<std::string> g;
    std::vector<std::string> edges;
    std::size_t target = 0;
    std::int64_t M = 1;
    std::int64_t N = 1;
    double eps = 0.1;
    double threshold = -1.0;
    std::string out;
    std::string summary;
};

void cmd_correlate(const CorrelateOpts& o) {
    Timer t;
    Json j;
    j["command"] = "correlate";
    j["M"] = o.M;
    j["N"] = o.N;
    j["eps"] = o.eps;

    std::optional<CorrelationWitness> w;
    if (o.edges.empty()) {
        require(o.g.size() == 1, "line search takes exactly one input function");
        GridFunction g = load_grid(o.g[0]);
        j["mode"] = "line";
        w = correlate_search_1(g, o.M, o.N, o.eps, o.threshold);
    } else {
        require(o.edges.size() == o.g.size(),
                "need one --edge per input function (family order)");
        require(o.target < o.g.size(), "--target out of range");
        std::vector<EdgeFunction> gs;
        gs.reserve(o.g.size());
        int ambient = 0;
        for (std::size_t i = 0; i < o.g.size(); ++i) {
            RandomizedGridFunction f = read_grid_file(o.g[i]);
            if (i == 0) ambient = f.shape.l;
            gs.emplace_back(std::move(f), parse_edge(ambient, o.edges[i]));
        }
        j["mode"] = "edge";
        j["edges"] = o.edges;
        j["target"] = o.target;
        w = correlate_search_e(gs, o.target, o.M, o.N, o.eps, o.threshold);
    }

    j["found"] = w.has_value();
    if (w) {
        j["correlation"] = w->correlation;
        j["deviation"] = w->deviation;
        j["threshold"] = w->threshold;
        j["shift"] = w->shift;
        j["frozen"] = w->frozen;
        j["witness_edge"] = w->phi.e.to_string();
        j["witness_scale"] = w->phi.M;
        if (!o.out.empty()) {
            save_fn(o.out, w->phi.realized);
            j["witness"] = o.out;
        }
    }
    j["elapsed_ms"] = t.ms();
    std::string text = j.dump(2) + "\n";
    if (!o.summary.empty()) write_text(o.summary, text);
    std::cout << text;
}

// ---------------------------------------------------------------- kvn

void apply_kvn_overrides(KvnConfig& cfg, const std::map<std::string, std::string>& kv,
                         const std::string& prefix) {
    for (const auto& [raw_key, val] : kv) {
        std::string key = raw_key;
        if (!prefix.empty()) {
            if (key.rfind(prefix, 0) != 0) continue;
            key = key.substr(prefix.size());
        }
        if (key == "eta0")
            cfg.eta0 = to_f64(val, key);
        else if (key == "correlation_threshold" || key == "threshold")
            cfg.correlation_threshold = to_f64(val, key);
        else if (key == "energy_increment" || key == "increment")
            cfg.energy_increment = to_f64(val, key);
        else if (key == "K_max")
            cfg.K_max = int(to_i64(val, key));
        else if (key == "uniformity_factor")
            cfg.uniformity_factor = to_f64(val, key);
        else if (key == "random_probes")
            cfg.random_probes = int(to_i64(val, key));
        else if (key == "seed")
            cfg.seed = std::uint64_t(to_i64(val, key));
        else if (key == "check_extra")
            cfg.check_extra = parse_i64_list(val, key);
        else if (prefix.empty())
            throw PreconditionError("unknown kvn config key: " + key);
    }
}

std::string ledger_csv(const std::vector<LedgerRow>& ledger) {
    std::string text = "iteration,edge,correlation,energy_before,energy_after\n";
    for (const auto& row : ledger) {
        text += std::to_string(row.iteration) + ",\"" + row.edge + "\"," +
                fmt17(row.correlation) + "," + fmt17(row.energy_before) + "," +
                fmt17(row.energy_after) + "\n";
    }
    return text;
}

Json kvn_report_json(const GridFunction& g, const Decomposition& dec, const KvnConfig& cfg,
                     const ScaleLadder& ladder) {
    Json j;
    j["eps"] = cfg.eps;
    j["status"] = to_string(dec.status);
    j["k"] = dec.k;
    j["descents"] = dec.ledger.size();
    j["input_l2"] = lp_norm(g, Norm::L2);
    j["structured_l2"] = lp_norm(dec.g_structured, Norm::L2);
    j["uniform_l2"] = lp_norm(dec.g_uniform, Norm::L2);
    j["atom_count"] = dec.factor.atom_count;
    j["ladder"] = ladder.M;
    j["config"] = Json{{"eta0", cfg.eta0},
                       {"correlation_threshold", cfg.correlation_threshold},
                       {"energy_increment", cfg.energy_increment},
                       {"descent_gate", cfg.gate()},
                       {"K_max", cfg.K_max},
                       {"uniformity_factor", cfg.uniformity_factor},
                       {"check_extra", cfg.check_extra},
                       {"random_probes", cfg.random_probes},
                       {"seed", cfg.seed}};
    Json devs = Json::array();
    for (const auto& d : cfg.deviations()) {
        devs.push_back(Json{{"name", d.name}, {"used", d.used}, {"reference", d.reference}});
    }
    j["constant_deviations"] = devs;
    j["energy_by_level"] = dec.energy_by_level;
    Json rows = Json::array();
    for (const auto& r : dec.ledger)
        rows.push_back(Json{{"iteration", r.iteration},
                            {"level", r.level},
                            {"edge", r.edge},
                            {"scale", r.scale},
                            {"failed_N", r.failed_N},
                            {"probe_value", r.probe_value},
                            {"correlation", r.correlation},
                            {"energy_before", r.energy_before},
                            {"energy_after", r.energy_after}});
    j["ledger"] = rows;
    Json ws = Json::array();
    for (const auto& w : dec.witnesses)
        ws.push_back(Json{{"level", w.level},
                          {"scale", w.phi.M},
                          {"alpha", w.alpha},
                          {"correlation", w.correlation}});
    j["witnesses"] = ws;
    if (dec.stall)
        j["stall"] = Json{{"level", dec.stall->level},
                          {"failed_N", dec.stall->failed_N},
                          {"probe_value", dec.stall->probe_value},
                          {"best_correlation", dec.stall->best_correlation},
                          {"gate", dec.stall->gate}};
    else
        j["stall"] = nullptr;
    return j;
}

struct KvnOpts {
    std::string g;
    double eps = 0.1;
    std::string ladder;
    std::string growth;
    int K = 6;
    std::string config;
    std::string outdir;
    std::optional<std::uint64_t> seed;
};

void cmd_kvn(const KvnOpts& o) {
    Timer t;
    require(o.ladder.empty() != o.growth.empty(),
            "give exactly one of --ladder and --growth");

    KvnConfig cfg = KvnConfig::for_1d(o.eps);
    if (!o.config.empty()) apply_kvn_overrides(cfg, parse_config_file(o.config), "");
    if (o.seed) cfg.seed = *o.seed;

    std::optional<ScaleLadder> ladder;
    if (!o.ladder.empty()) {
        ladder.emplace(parse_i64_list(o.ladder, "--ladder"));
    } else {
        GrowthFunction F = GrowthFunction::parse(o.growth);
        ladder = ScaleLadder::from_growth([&](std::int64_t M) { return F(M); }, o.K);
    }

    GridFunction g = load_grid(o.g);
    Decomposition dec = kvn_decompose_1d(g, *ladder, cfg);

    fs::create_directories(o.outdir);
    const std::string structured = (fs::path(o.outdir) / "structured.bin").string();
    const std::string uniform = (fs::path(o.outdir) / "uniform.bin").string();
    const std::string ledger = (fs::path(o.outdir) / "ledger.csv").string();
    const std::string report = (fs::path(o.outdir) / "report.json").string();
    save_fn(structured, dec.g_structured);
    save_fn(uniform, dec.g_uniform);
    write_text(ledger, ledger_csv(dec.ledger));

    Json j;
    j["command"] = "kvn";
    j["input"] = o.g;
    j.update(kvn_report_json(g, dec, cfg, *ladder));
    j["outputs"] = Json{{"structured", structured}, {"uniform", uniform}, {"ledger", ledger}};
    j["elapsed_ms"] = t.ms();
    write_text(report, j.dump(2) + "\n");
    std::cout << j.dump(2) << "\n";
}

// ---------------------------------------------------------------- metastable

struct MetastableOpts {
    std::vector<std::string> g;
    std::string F = "M^2";
    double eps = 0.1;
    std::int64_t Mstar = 1;
    std::int64_t Mcap = 0;
    bool exhaustive = false;
    std::string op = "auto";
    std::string out;
    std::string deviations;
    std::int64_t recheck_cap = 2000;
    bool no_recheck = false;
};

void cmd_metastable(const MetastableOpts& o) {
    Timer t;
    require(!o.g.empty(), "need at least one input function");

    std::vector<GridFunction> gs;
    for (const auto& p : o.g) gs.push_back(load_grid(p));

    std::string op = o.op;
    if (op == "auto") op = (gs.size() > 1) ? "AN" : (gs[0].shape.l == 1 ? "SN" : "DeltaN");

    std::function<GridFunction(std::int64_t)> seq;
    std::optional<SlidingAverager> avg;
    if (op == "SN") {
        require(gs.size() == 1 && gs[0].shape.l == 1, "SN expects one function on the line");
        avg.emplace(gs[0]);
        seq = [&](std::int64_t N) { return avg->eval(N); };
    } else if (op == "DeltaN") {
        require(gs.size() == 1 && gs[0].shape.l >= 1, "DeltaN expects one ambient function");
        seq = [&](std::int64_t N) { return diagonal_projection(gs[0], N); };
    } else if (op == "AN") {
        require(int(gs.size()) == gs[0].shape.l, "AN over Z_P^l needs exactly l functions");
        seq = [&](std::int64_t N) { return multiple_average(gs, N); };
    } else {
        throw PreconditionError("unknown --op " + op);
    }

    GrowthFunction F = GrowthFunction::parse(o.F);
    std::string id = o.g[0] + ":" + op;
    MetastabilityReport rep =
        find_metastable_window(seq, F, o.eps, o.Mstar, o.Mcap, o.exhaustive, id);

    Json j;
    j["command"] = "metastable";
    j["inputs"] = o.g;
    j["op"] = op;
    j["F"] = F.to_string();
    j["eps"] = o.eps;
    j["M_star"] = o.Mstar;
    j["M_cap"] = o.Mcap;
    j["status"] = to_string(rep.status);
    j["M"] = rep.M;
    j["F_M"] = rep.F_M;
    j["max_deviation"] = rep.max_deviation;
    j["pairs_checked"] = rep.exhaustive ? Json("exhaustive") : Json(rep.pairs_checked);
    j["scanned_up_to"] = rep.scanned_up_to;
    j["sequence_id"] = rep.sequence_id;

    if (rep.status == WindowStatus::Certified && !o.no_recheck) {
        // Independent audit of the certificate, truncated on huge windows.
        std::int64_t hi = std::min(rep.F_M, rep.M + std::max<std::int64_t>(o.recheck_cap, 1) - 1);
        std::int64_t pairs = 0;
        double mx = exhaustive_pair_deviation(seq, rep.M, hi, &pairs);
        ensure(mx <= rep.max_deviation + 1e-12, "re-check exceeded the certified bound");
        j["recheck"] = Json{{"status", hi == rep.F_M ? "confirmed" : "confirmed_truncated"},
                            {"window_end", hi},
                            {"pairs", pairs},
                            {"max_pair_deviation", mx}};
    } else if (rep.status == WindowStatus::Certified) {
        j["recheck"] = Json{{"status", "skipped"}};
    }

    if (!o.deviations.empty() && rep.status == WindowStatus::Certified) {
        GridFunction base = seq(rep.M);
        std::string csv = "N,deviation\n";
        for (std::int64_t N = rep.M; N <= rep.F_M; ++N) {
            GridFunction cur = seq(N);
            double acc = 0;
            for (std::size_t i = 0; i < cur.size(); ++i) {
                double d = cur.v[i] - base.v[i];
                acc += d * d;
            }
            csv += std::to_string(N) + "," + fmt17(std::sqrt(acc / double(cur.size()))) + "\n";
        }
        write_text(o.deviations, csv);
        j["deviations_csv"] = o.deviations;
    }

    j["elapsed_ms"] = t.ms();
    std::string text = j.dump(2) + "\n";
    if (!o.out.empty()) write_text(o.out, text);
    std::cout << text;
}

// ---------------------------------------------------------------- orbit

struct OrbitOpts {
    std::string system = "rotation";
    std::vector<double> alpha;
    std::vector<double> x0;
    std::int64_t P = 0;
    std::string observable = "cos";
    double lo = 0.0;
    double hi = 0.5;
    std::string out;
};

std::string indexed_path(const std::string& base, std::size_t i, std::size_t total) {
    if (total == 1) return base;
    fs::path p(base);
    fs::path ext = p.extension();
    fs::path stem = p.parent_path() / p.stem();
    return stem.string() + "_" + std::to_string(i) + ext.string();
}

void cmd_orbit(const OrbitOpts& o) {
    Timer t;
    require(!o.alpha.empty(), "need at least one --alpha");

    DynamicalSystem sys;
    if (o.system == "rotation") {
        sys = DynamicalSystem::rotation(o.alpha);
        if (o.observable == "indicator")
            for (std::size_t i = 0; i < sys.obs.size(); ++i)
                sys.obs[i] = Observable{Observable::Kind::Indicator, int(i), o.lo, o.hi};
    } else if (o.system == "skew") {
        require(o.alpha.size() == 1, "skew takes exactly one --alpha");
        sys = DynamicalSystem::skew(o.alpha[0]);
        if (o.observable == "indicator")
            sys.obs[0] = Observable{Observable::Kind::Indicator, 1, o.lo, o.hi};
    } else {
        throw PreconditionError("unknown --system " + o.system);
    }
    require(o.observable == "cos" || o.observable == "indicator",
            "observable must be cos or indicator");

    std::vector<double> x0 = o.x0;
    if (x0.empty()) x0.assign(std::size_t(sys.dim), 0.0);
    require(int(x0.size()) == sys.dim, "--x0 needs one value per torus coordinate");

    OrbitSample s = orbit_sample(sys, make_state(x0), o.P);

    Json paths = Json::array();
    for (std::size_t i = 0; i < s.g.size(); ++i) {
        std::string p = indexed_path(o.out, i, s.g.size());
        save_fn(p, s.g[i]);
        paths.push_back(p);
    }

    Json j;
    j["command"] = "orbit";
    j["system"] = o.system;
    j["system_id"] = s.system_id;
    j["alpha"] = o.alpha;
    j["x0"] = x0;
    j["P"] = o.P;
    j["l"] = s.g.size();
    j["observable"] = o.observable;
    j["wraparound_truncation"] = s.wraparound_truncation;
    j["outputs"] = paths;
    j["elapsed_ms"] = t.ms();
    std::cout << j.dump(2) << "\n";
}

// ---------------------------------------------------------------- run

struct RunOpts {
    std::string config;
    std::string outdir;
    std::optional<std::uint64_t> seed;
};

std::string cfg_get(const std::map<std::string, std::string>& kv, const std::string& key,
                    const std::string& fallback) {
    auto it = kv.find(key);
    return it == kv.end() ? fallback : it->second;
}

std::string cfg_need(const std::map<std::string, std::string>& kv, const std::string& key) {
    auto it = kv.find(key);
    require(it != kv.end(), "config is missing required key '" + key + "'");
    return it->second;
}

void cmd_run(const RunOpts& o) {
    Timer total;
    auto kv = parse_config_file(o.config);

    std::string outdir = !o.outdir.empty() ? o.outdir : cfg_get(kv, "outdir", "ergo-run");
    fs::create_directories(outdir);
    auto out_path = [&](const std::string& name) { return (fs::path(outdir) / name).string(); };

    std::uint64_t seed = o.seed.value_or(std::uint64_t(to_i64(cfg_get(kv, "seed", "1"), "seed")));

    std::vector<std::string> pipeline;
    for (const auto& stage : split(cfg_get(kv, "pipeline", ""), ','))
        if (!trim(stage).empty()) pipeline.push_back(trim(stage));
    for (const auto& stage : pipeline)
        require(stage == "orbit" || stage == "input" || stage == "sweep" ||
                    stage == "metastable" || stage == "kvn",
                "unknown pipeline stage '" + stage + "'");

    Json report;
    report["command"] = "run";
    report["config_file"] = o.config;
    report["outdir"] = outdir;
    report["seed"] = seed;
    Json echo;
    for (const auto& [k, v] : kv) echo[k] = v;
    report["config"] = echo;
    report["stages"] = Json::array();
    report["certified"] = Json::array();

    std::vector<GridFunction> gs;
    std::function<GridFunction(std::int64_t)> seq;
    std::optional<SlidingAverager> avg;

    auto finish = [&](int /*unused*/) {
        report["elapsed_ms"] = total.ms();
        std::string text = report.dump(2) + "\n";
        write_text(out_path("report.json"), text);
        std::cout << text;
    };

    try {
        for (const auto& stage : pipeline) {
            Timer st;
            Json sj;
            sj["name"] = stage;

            if (stage == "orbit") {
                std::string system = cfg_get(kv, "orbit.system", "rotation");
                auto alphas = parse_f64_list(cfg_need(kv, "orbit.alpha"), "orbit.alpha");
                std::int64_t P = to_i64(cfg_need(kv, "orbit.P"), "orbit.P");
                DynamicalSystem sys;
                if (system == "rotation") {
                    sys = DynamicalSystem::rotation(alphas);
                } else if (system == "skew") {
                    require(alphas.size() == 1, "orbit.alpha: skew takes one angle");
                    sys = DynamicalSystem::skew(alphas[0]);
                } else {
                    throw PreconditionError("orbit.system must be rotation or skew");
                }
                if (cfg_get(kv, "orbit.observable", "cos") == "indicator") {
                    double lo = to_f64(cfg_get(kv, "orbit.lo", "0"), "orbit.lo");
                    double hi = to_f64(cfg_get(kv, "orbit.hi", "0.5"), "orbit.hi");
                    for (std::size_t i = 0; i < sys.obs.size(); ++i)
                        sys.obs[i] = Observable{Observable::Kind::Indicator,
                                                sys.obs[i].coord, lo, hi};
                }
                std::vector<double> x0 =
                    parse_f64_list(cfg_get(kv, "orbit.x0", ""), "orbit.x0");
                if (x0.empty()) x0.assign(std::size_t(sys.dim), 0.0);
                OrbitSample s = orbit_sample(sys, make_state(x0), P);
                gs = std::move(s.g);
                Json outs = Json::array();
                for (std::size_t i = 0; i < gs.size(); ++i) {
                    std::string p = out_path("orbit_" + std::to_string(i) + ".csv");
                    write_csv(p, gs[i]);
                    outs.push_back(p);
                }
                sj["system_id"] = s.system_id;
                sj["P"] = P;
                sj["outputs"] = outs;
            } else if (stage == "input") {
                gs.clear();
                for (const auto& path : split(cfg_need(kv, "input.g"), ','))
                    gs.push_back(load_grid(trim(path)));
                sj["count"] = gs.size();
            } else if (stage == "sweep") {
                require(!gs.empty(), "stage 'sweep' needs functions from 'orbit' or 'input'");
                require(int(gs.size()) == gs[0].shape.l,
                        "sweep: need exactly l functions on Z_P^l");
                if (gs.size() == 1) {
                    avg.emplace(gs[0]);
                    seq = [&](std::int64_t N) { return avg->eval(N); };
                } else {
                    seq = [&](std::int64_t N) { return multiple_average(gs, N); };
                }
                // Dyadic norm samples; raw data for eyeballing the decay.
                std::string csv = "N,l2_norm\n";
                for (std::int64_t N = 1; N <= gs[0].shape.P; N *= 2)
                    csv += std::to_string(N) + "," + fmt17(lp_norm(seq(N), Norm::L2)) + "\n";
                std::string p = out_path("sweep.csv");
                write_text(p, csv);
                sj["outputs"] = Json::array({p});
            } else if (stage == "metastable") {
                require(bool(seq), "stage 'metastable' needs 'sweep' before it");
                GrowthFunction F = GrowthFunction::parse(cfg_get(kv, "metastable.F", "M^2"));
                double eps = to_f64(cfg_need(kv, "metastable.eps"), "metastable.eps");
                std::int64_t Mstar =
                    to_i64(cfg_get(kv, "metastable.Mstar", "1"), "metastable.Mstar");
                std::int64_t Mcap = to_i64(cfg_need(kv, "metastable.Mcap"), "metastable.Mcap");
                bool exhaustive =
                    to_i64(cfg_get(kv, "metastable.exhaustive", "0"), "exhaustive") != 0;
                MetastabilityReport rep = find_metastable_window(
                    seq, F, eps, Mstar, Mcap, exhaustive, "pipeline:" + stage);
                sj["status"] = to_string(rep.status);
                sj["M"] = rep.M;
                sj["F_M"] = rep.F_M;
                sj["max_deviation"] = rep.max_deviation;
                if (rep.status == WindowStatus::Certified) {
                    std::int64_t cap = to_i64(
                        cfg_get(kv, "metastable.recheck_cap", "2000"), "recheck_cap");
                    std::int64_t hi = std::min(rep.F_M, rep.M + std::max<std::int64_t>(cap, 1) - 1);
                    std::int64_t pairs = 0;
                    double mx = exhaustive_pair_deviation(seq, rep.M, hi, &pairs);
                    ensure(mx <= rep.max_deviation + 1e-12,
                           "re-check exceeded the certified bound");
                    GridFunction base = seq(rep.M);
                    std::string csv = "N,deviation\n";
                    for (std::int64_t N = rep.M; N <= rep.F_M; ++N) {
                        GridFunction cur = seq(N);
                        double acc = 0;
                        for (std::size_t i = 0; i < cur.size(); ++i) {
                            double d = cur.v[i] - base.v[i];
                            acc += d * d;
                        }
                        csv += std::to_string(N) + "," +
                               fmt17(std::sqrt(acc / double(cur.size()))) + "\n";
                    }
                    std::string p = out_path("metastable_deviations.csv");
                    write_text(p, csv);
                    sj["outputs"] = Json::array({p});
                    report["certified"].push_back(
                        Json{{"claim", "window [" + std::to_string(rep.M) + ", " +
                                           std::to_string(rep.F_M) + "] stable within " +
                                           fmt17(eps)},
                             {"max_deviation", rep.max_deviation},
                             {"recheck",
                              Json{{"status",
                                    hi == rep.F_M ? "confirmed" : "confirmed_truncated"},
                                   {"window_end", hi},
                                   {"pairs", pairs},
                                   {"max_pair_deviation", mx}}}});
                }
            } else if (stage == "kvn") {
                require(!gs.empty(), "stage 'kvn' needs a function from 'orbit' or 'input'");
                require(gs[0].shape.l == 1, "stage 'kvn' runs on the line");
                double eps = to_f64(cfg_need(kv, "kvn.eps"), "kvn.eps");
                KvnConfig cfg = KvnConfig::for_1d(eps);
                apply_kvn_overrides(cfg, kv, "kvn.");
                cfg.seed = seed;
                std::optional<ScaleLadder> ladder;
                if (auto it = kv.find("kvn.ladder"); it != kv.end()) {
                    ladder.emplace(parse_i64_list(it->second, "kvn.ladder"));
                } else {
                    GrowthFunction F = GrowthFunction::parse(cfg_get(kv, "kvn.growth", "M*8"));
                    int K = int(to_i64(cfg_get(kv, "kvn.K", "6"), "kvn.K"));
                    ladder = ScaleLadder::from_growth([&](std::int64_t M) { return F(M); }, K);
                }
                Decomposition dec = kvn_decompose_1d(gs[0], *ladder, cfg);
                std::string sp = out_path("kvn_structured.bin");
                std::string up = out_path("kvn_uniform.bin");
                std::string lp = out_path("kvn_ledger.csv");
                save_fn(sp, dec.g_structured);
                save_fn(up, dec.g_uniform);
                write_text(lp, ledger_csv(dec.ledger));
                sj["report"] = kvn_report_json(gs[0], dec, cfg, *ladder);
                sj["outputs"] = Json::array({sp, up, lp});
            }

            sj["elapsed_ms"] = st.ms();
            report["stages"].push_back(sj);
        }
    } catch (...) {
        report["aborted"] = true;
        finish(0);
        throw;
    }
    finish(0);
}

} // namespace

int main(int argc, char** argv) {
    CLI::App app{"finitary multiple-ergodic-average toolkit"};
    app.require_subcommand(0, 1);

    std::uint64_t seed = 1;
    int threads = 1;
    std::size_t mem_cap = 0;
    auto* seed_opt = app.add_option("--seed", seed, "seed for seeded subcommands");
    app.add_option("--threads", threads, "reserved; stages run sequentially")
        ->check(CLI::PositiveNumber);
    auto* cap_opt =
        app.add_option("--mem-cap", mem_cap, "allocation guard, in grid entries (doubles)");

    AverageOpts avg;
    auto* c_avg = app.add_subcommand("average", "window averages and diagonal projections");
    c_avg->add_option("--in", avg.in, "input grid function file(s)")->required();
    c_avg->add_option("--N", avg.N, "window length")->required()->check(CLI::PositiveNumber);
    c_avg->add_option("--op", avg.op, "AN, SN, or DeltaN")
        ->check(CLI::IsMember({"AN", "SN", "DeltaN"}));
    c_avg->add_flag("--oracle", avg.oracle, "use the brute-force kernel for the output");
    c_avg->add_option("--out", avg.out, "output file (.csv or binary)")->required();
    c_avg->add_option("--residual", avg.residual, "also write fast-minus-oracle residuals");

    FactorBuildOpts fb;
    FactorJoinOpts fj;
    FactorInspectOpts fi;
    auto* c_factor = app.add_subcommand("factor", "build, join, and inspect factors");
    c_factor->require_subcommand(1);
    auto* c_fb = c_factor->add_subcommand("build", "level-set factor of a function");
    c_fb->add_option("--phi", fb.phi, "generating function file")->required();
    c_fb->add_option("--eta0", fb.eta0, "cell width")->required();
    c_fb->add_option("--alpha", fb.alpha, "cell offset in [0,1)");
    double fb_lo, fb_hi;
    auto* fb_lo_opt = c_fb->add_option("--lo", fb_lo, "range lower bound (default: min phi)");
    auto* fb_hi_opt = c_fb->add_option("--hi", fb_hi, "range upper bound (default: max phi)");
    c_fb->add_option("--out", fb.out, "factor JSON output")->required();
    auto* c_fj = c_factor->add_subcommand("join", "common refinement of two factors");
    c_fj->add_option("--a", fj.a)->required();
    c_fj->add_option("--b", fj.b)->required();
    c_fj->add_option("--out", fj.out, "factor JSON output")->required();
    auto* c_fi = c_factor->add_subcommand("inspect", "atom masses; optionally condition");
    c_fi->add_option("--in", fi.in, "factor JSON file")->required();
    c_fi->add_option("--function", fi.function, "function to condition on the factor");
    c_fi->add_option("--out", fi.out, "output for the conditioned function");

    CorrelateOpts cor;
    auto* c_cor = app.add_subcommand("correlate", "search for a correlating window average");
    c_cor->add_option("--g", cor.g, "input function file(s), family order")->required();
    c_cor->add_option("--edge", cor.edges, "edge per input, e.g. \"0,2\" (omit for the line)");
    c_cor->add_option("--target", cor.target, "family index to correlate against");
    c_cor->add_option("--M", cor.M, "witness scale")->required()->check(CLI::PositiveNumber);
    c_cor->add_option("--N", cor.N, "deviation window")->required()->check(CLI::PositiveNumber);
    c_cor->add_option("--eps", cor.eps, "uniformity tolerance")->required();
    c_cor->add_option("--threshold", cor.threshold,
                      "acceptance bar (default eps^2/200; 0 accepts the best)");
    c_cor->add_option("--out", cor.out, "witness function CSV");
    c_cor->add_option("--summary", cor.summary, "also write the JSON summary here");

    KvnOpts kvn;
    auto* c_kvn = app.add_subcommand("kvn", "greedy structure/uniform decomposition");
    c_kvn->add_option("--g", kvn.g, "input function on the line")->required();
    c_kvn->add_option("--eps", kvn.eps, "target uniformity")->required();
    c_kvn->add_option("--ladder", kvn.ladder, "comma scales, e.g. \"1,8,64\"");
    c_kvn->add_option("--growth", kvn.growth, "growth function, e.g. \"M*8\"");
    c_kvn->add_option("--K", kvn.K, "ladder length when --growth is used");
    c_kvn->add_option("--config", kvn.config, "key=value overrides for the constants");
    c_kvn->add_option("--outdir", kvn.outdir, "output directory")->required();

    MetastableOpts met;
    auto* c_met = app.add_subcommand("metastable", "certify a stability window");
    c_met->add_option("--g", met.g, "input function file(s)")->required();
    c_met->add_option("--F", met.F, "growth function, e.g. \"M^2\"");
    c_met->add_option("--eps", met.eps, "stability tolerance")->required();
    c_met->add_option("--Mstar", met.Mstar, "first window start to try");
    c_met->add_option("--Mcap", met.Mcap, "last window start to try")
        ->required()
        ->check(CLI::PositiveNumber);
    c_met->add_flag("--exhaustive", met.exhaustive, "certify by checking all pairs");
    c_met->add_option("--op", met.op, "sequence: SN, DeltaN, AN, or auto");
    c_met->add_option("--out", met.out, "also write the JSON report here");
    c_met->add_option("--deviations", met.deviations, "write the N,deviation table here");
    c_met->add_option("--recheck-cap", met.recheck_cap, "audit window length cap");
    c_met->add_flag("--no-recheck", met.no_recheck, "skip the independent audit");

    OrbitOpts orb;
    auto* c_orb = app.add_subcommand("orbit", "sample observables along a torus orbit");
    c_orb->add_option("--system", orb.system, "rotation or skew");
    c_orb->add_option("--alpha", orb.alpha, "angle(s)")->required();
    c_orb->add_option("--x0", orb.x0, "start point (default 0)");
    c_orb->add_option("--P", orb.P, "window length")->required()->check(CLI::PositiveNumber);
    c_orb->add_option("--observable", orb.observable, "cos or indicator");
    c_orb->add_option("--lo", orb.lo, "indicator arc start");
    c_orb->add_option("--hi", orb.hi, "indicator arc end");
    c_orb->add_option("--out", orb.out, "output file; _i inserted when l > 1")->required();

    RunOpts run;
    auto* c_run = app.add_subcommand("run", "execute a key=value experiment pipeline");
    c_run->add_option("--config", run.config, "experiment config file")->required();
    c_run->add_option("--outdir", run.outdir, "overrides the config's outdir");

    try {
        app.parse(argc, argv);
    } catch (const CLI::CallForHelp& e) {
        return app.exit(e);
    } catch (const CLI::ParseError& e) {
        app.exit(e);
        return 2; // bad usage is a precondition failure
    }

    if (app.get_subcommands().empty()) {
        std::cout << app.help();
        return 0;
    }

    try {
        if (cap_opt->count()) set_memory_cap_entries(mem_cap);
        if (seed_opt->count()) {
            kvn.seed = seed;
            run.seed = seed;
        }
        if (fb_lo_opt->count()) fb.lo = fb_lo;
        if (fb_hi_opt->count()) fb.hi = fb_hi;

        if (c_avg->parsed()) cmd_average(avg);
        if (c_factor->parsed()) {
            if (c_fb->parsed()) cmd_factor_build(fb);
            if (c_fj->parsed()) cmd_factor_join(fj);
            if (c_fi->parsed()) cmd_factor_inspect(fi);
        }
        if (c_cor->parsed()) cmd_correlate(cor);
        if (c_kvn->parsed()) cmd_kvn(kvn);
        if (c_met->parsed()) cmd_metastable(met);
        if (c_orb->parsed()) cmd_orbit(orb);
        if (c_run->parsed()) cmd_run(run);
    } catch (const PreconditionError& e) {
        std::cerr << "precondition violated: " << e.what() << "\n";
        return 2;
    } catch (const InvariantViolation& e) {
        std::cerr << "invariant violated (bug): " << e.what() << "\n";
        return 3;
    } catch (const ResourceGuardError& e) {
        std::cerr << "resource guard: " << e.what() << "\n";
        return 4;
    } catch (const std::exception& e) {
        std::cerr << "error: " << e.what() << "\n";
        return 3;
    }
    return 0;
}
