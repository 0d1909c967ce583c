#include "cli.hpp"

#include <chrono>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <sstream>

#include <CLI11.hpp>

#include "rmt/concentration.hpp"
#include "rmt/model.hpp"
#include "rmt/regression.hpp"
#include "rmt/resolvent.hpp"
#include "rmt/rng.hpp"

namespace rmt::cli {

namespace fs = std::filesystem;
using nlohmann::json;

namespace {

std::string fmt17(double v) {
    char buf[64];
    std::snprintf(buf, sizeof(buf), "%.17g", v);
    return buf;
}

std::uint64_t fnv1a(const std::string& s) {
    std::uint64_t h = 1469598103934665603ULL;
    for (unsigned char c : s) {
        h ^= c;
        h *= 1099511628211ULL;
    }
    return h;
}

// CSV staged in memory and finalized by rename, so a crash never leaves a
// partial data file behind.
class CsvFile {
  public:
    CsvFile(fs::path dir, std::string name, std::string header)
        : path_(dir / name), name_(std::move(name)) {
        body_ << header << "\n";
    }
    template <typename... Ts>
    void row(Ts... cells) {
        bool first = true;
        ((body_ << (first ? "" : ","), first = false, put(cells)), ...);
        body_ << "\n";
    }
    void finalize() {
        const fs::path tmp = path_.string() + ".tmp";
        std::ofstream out(tmp, std::ios::binary);
        if (!out) throw Error("cannot write output file " + tmp.string());
        out << body_.str();
        out.close();
        fs::rename(tmp, path_);
    }
    const std::string& name() const { return name_; }

  private:
    void put(double v) { body_ << fmt17(v); }
    void put(long v) { body_ << v; }
    void put(int v) { body_ << v; }
    void put(const std::string& s) { body_ << s; }
    fs::path path_;
    std::string name_;
    std::ostringstream body_;
};

struct Manifest {
    json doc;
    fs::path path;

    Manifest(const fs::path& dir, const ExperimentConfig& cfg) : path(dir / "manifest.json") {
        json c;
        c["command"] = cfg.command;
        c["model_path"] = cfg.model_path;
        c["params"] = cfg.params;
        c["seed"] = cfg.seed;
        c["threads"] = cfg.threads;
        c["output_path"] = cfg.output_path;
        doc["config"] = c;
        doc["config_hash"] = std::to_string(fnv1a(c.dump()));
        doc["version"] = "rmt-equiv 1.0.0";
        doc["status"] = "running";
        doc["outputs"] = json::array();
        doc["discard_rates"] = json::object();
    }
    void write() const {
        std::ofstream out(path);
        if (!out) throw Error("cannot write manifest " + path.string());
        out << doc.dump(2) << "\n";
    }
    void finish(double wall_seconds) {
        doc["status"] = "complete";
        doc["wall_time_seconds"] = wall_seconds;
        write();
    }
};

double param_num(const json& params, const std::string& key, double fallback) {
    if (!params.contains(key)) return fallback;
    return params.at(key).get<double>();
}

long param_int(const json& params, const std::string& key, long fallback) {
    if (!params.contains(key)) return fallback;
    return params.at(key).get<long>();
}

struct GridSpec {
    double lo = 0.0, hi = 0.0;
    long steps = 0;
};

GridSpec parse_grid(const json& params) {
    if (!params.contains("grid")) throw ModelError("command requires a grid (--grid lo,hi,steps)");
    const auto& g = params.at("grid");
    GridSpec out;
    out.lo = g.at(0).get<double>();
    out.hi = g.at(1).get<double>();
    out.steps = g.at(2).get<long>();
    if (out.steps < 2 || !(out.hi > out.lo))
        throw ModelError("grid must satisfy lo < hi and steps >= 2");
    return out;
}

std::vector<Cx> parse_z_list(const json& params) {
    std::vector<Cx> zs;
    if (params.contains("z"))
        for (const auto& pair : params.at("z"))
            zs.emplace_back(pair.at(0).get<double>(), pair.at(1).get<double>());
    return zs;
}

std::vector<std::pair<long, long>> parse_sizes(const json& params) {
    std::vector<std::pair<long, long>> sizes;
    if (params.contains("sizes"))
        for (const auto& s : params.at("sizes")) {
            const long n = s.at(0).get<long>(), p = s.at(1).get<long>();
            if (n < 1 || p < 1) throw ModelError("sizes entries must be positive (n:p)");
            sizes.emplace_back(n, p);
        }
    return sizes;
}

// The rate command rebuilds the model at several (n, p); that needs laws
// expressible at any p, i.e. zero-mean isotropic groups.
DataModel rescale_model(const DataModel& base, long p, long n) {
    std::vector<LawGroup> groups;
    long assigned = 0;
    for (size_t g = 0; g < base.groups().size(); ++g) {
        const auto& law = base.groups()[g].law;
        const double s = law.cov()(0, 0);
        if ((law.cov() - s * Mat::Identity(base.p(), base.p())).cwiseAbs().maxCoeff() > 1e-12 ||
            law.mean().cwiseAbs().maxCoeff() != 0.0)
            throw ModelError(
                "rate experiments need zero-mean isotropic group laws (cov = s*I) so the "
                "model extends across sizes");
        long count = base.groups()[g].count * n / base.n();
        if (g + 1 == base.groups().size()) count = n - assigned;
        assigned += count;
        groups.push_back(LawGroup{count, ColumnLaw(Vec::Zero(p), s * Mat::Identity(p, p))});
    }
    return DataModel::create(p, n, base.epsilon(), base.generator(), std::move(groups));
}

Nonlinearity select_nonlinearity(const json& params, const DataModel& model, double lambda) {
    const std::string kind = params.value("f", std::string("logistic"));
    if (kind == "zero")
        return Nonlinearity::make([](double) { return 0.0; }, [](double) { return 0.0; },
                                  [](double) { return 0.0; }, 0.0, 0.0);
    if (kind == "logistic")
        return logistic_model(model.groups()[0].law.mean(), model.groups()[0].law.cov(),
                              model.n(), lambda)
            .second;
    throw ModelError("unknown nonlinearity '" + kind + "' (expected logistic|zero)");
}

void cmd_spectrum(const ExperimentConfig& cfg, const DataModel& model, const fs::path& dir,
                  Manifest& manifest) {
    const GridSpec grid = parse_grid(cfg.params);
    const double eta = param_num(cfg.params, "eta", 1e-3);
    if (!(eta > 0.0)) throw ModelError("eta must be positive");
    std::vector<double> xs(grid.steps);
    for (long k = 0; k < grid.steps; ++k)
        xs[k] = grid.lo + (grid.hi - grid.lo) * k / static_cast<double>(grid.steps - 1);
    const auto rows = spectral_density(model, xs, eta);
    CsvFile csv(dir, "density.csv", "x,density");
    for (const auto& [x, d] : rows) csv.row(x, d);
    csv.finalize();
    manifest.doc["outputs"].push_back(csv.name());
    manifest.doc["eta"] = eta;
}

void cmd_equivalent(const ExperimentConfig& cfg, const DataModel& model, const fs::path& dir,
                    Manifest& manifest) {
    const auto zs = parse_z_list(cfg.params);
    if (zs.empty()) throw ModelError("equivalent requires at least one --z re,im");
    CsvFile csv(dir, "stieltjes.csv", "re_z,im_z,re_m,im_m,iterations,residual");
    for (const Cx z : zs) {
        const auto de = deterministic_equivalent(ResolventQuery{z, model});
        csv.row(z.real(), z.imag(), de.stieltjes.real(), de.stieltjes.imag(),
                de.diagnostics.iterations, de.diagnostics.final_residual);
    }
    csv.finalize();
    manifest.doc["outputs"].push_back(csv.name());
}

void cmd_rate(const ExperimentConfig& cfg, const DataModel& model, const fs::path& dir,
              Manifest& manifest) {
    const auto sizes = parse_sizes(cfg.params);
    if (sizes.empty()) throw ModelError("rate requires --sizes n:p,...");
    const long trials = param_int(cfg.params, "trials", 200);
    if (trials < 1) throw ModelError("trials must be >= 1");
    const auto zl = parse_z_list(cfg.params);
    const Cx z = zl.empty() ? Cx(-1.0, 0.0) : zl[0];
    std::vector<DataModel> family;
    for (const auto& [n, p] : sizes) family.push_back(rescale_model(model, p, n));
    const auto table = frobenius_rate_experiment(family, z, trials, cfg.seed, cfg.threads);
    CsvFile csv(dir, "rate.csv", "n,p,trials,discard_rate,error,rate");
    for (const auto& r : table.rows) {
        csv.row(r.n, r.p, r.trials, r.discard_rate, r.error, r.predicted_rate);
        manifest.doc["discard_rates"][std::to_string(r.n)] = r.discard_rate;
    }
    csv.finalize();
    manifest.doc["outputs"].push_back(csv.name());
    manifest.doc["slope"] = table.slope;
}

void cmd_concentration(const ExperimentConfig& cfg, const DataModel& model, const fs::path& dir,
                       Manifest& manifest) {
    const long trials = param_int(cfg.params, "trials", 100000);
    if (trials < 10000) throw ModelError("concentration tail fits need trials >= 10000");
    // scalar observable: first coordinate of a fresh column draw per trial
    ObservableSamples samples;
    samples.seed = cfg.seed;
    samples.meta = "first coordinate of column 0";
    samples.values.resize(trials);
    const CounterRng root = CounterRng::from_seed(cfg.seed);
    for (long t = 0; t < trials; ++t) {
        CounterRng r = root.derive(static_cast<std::uint64_t>(t));
        samples.values[t] = sample(model, r.next_u64()).data(0, 0);
    }
    const auto fit = fit_tail_exponent(samples);
    CsvFile csv(dir, "tail.csv", "t,tail_prob");
    for (size_t k = 0; k < fit.t_grid.size(); ++k) csv.row(fit.t_grid[k], fit.tail_probability[k]);
    csv.finalize();
    manifest.doc["outputs"].push_back(csv.name());
    manifest.doc["q_hat"] = fit.q_hat;
    manifest.doc["sigma_hat"] = fit.sigma_hat;
    manifest.doc["r2"] = fit.r2;
    manifest.doc["observable_diameter"] = observable_diameter(samples);

    const auto sizes = parse_sizes(cfg.params);
    if (!sizes.empty()) {
        std::vector<long> ps;
        for (const auto& [n, p] : sizes) ps.push_back(p);
        const auto rows = convex_concentration_experiment(
            ps, param_int(cfg.params, "scaling_trials", 500), cfg.seed + 1, Cx(-1.0, 0.0), 0.5,
            0.1, 1.0, cfg.threads);
        CsvFile scaling(dir, "scaling.csv", "p,std");
        for (const auto& r : rows) {
            scaling.row(r.p, r.stddev);
            manifest.doc["discard_rates"]["p" + std::to_string(r.p)] = r.event_failure_rate;
        }
        scaling.finalize();
        manifest.doc["outputs"].push_back(scaling.name());
    }
}

void cmd_regression(const ExperimentConfig& cfg, const DataModel& model, const fs::path& dir,
                    Manifest& manifest) {
    const long trials = param_int(cfg.params, "trials", 100);
    const double lambda = param_num(cfg.params, "lambda", 5.0);
    const double tol = param_num(cfg.params, "tol", 1e-10);
    if (trials < 2 || lambda <= 0.0 || tol <= 0.0)
        throw ModelError("regression needs trials >= 2, lambda > 0, tol > 0");
    const Nonlinearity f = select_nonlinearity(cfg.params, model, lambda);
    const auto stats = empirical_regression_stats(model, f, trials, cfg.seed, cfg.threads, tol);
    CsvFile csv(dir, "empirical_mean.csv", "coord,m_y_emp");
    for (long k = 0; k < stats.mean.size(); ++k) csv.row(k, stats.mean[k]);
    csv.finalize();
    manifest.doc["outputs"].push_back(csv.name());
    manifest.doc["discard_rates"]["regression"] =
        static_cast<double>(stats.discard_count) / static_cast<double>(trials);
    manifest.doc["flagged"] = stats.flagged;
    manifest.doc["trace_cov_emp"] = stats.cov.trace();
}

void cmd_predict(const ExperimentConfig& cfg, const DataModel& model, const fs::path& dir,
                 Manifest& manifest) {
    const double lambda = param_num(cfg.params, "lambda", 5.0);
    const long trials = param_int(cfg.params, "trials", 0);
    PredictOptions opts;
    opts.tol = param_num(cfg.params, "tol", 1e-8);
    opts.quadrature_nodes = static_cast<int>(param_int(cfg.params, "nodes", 64));
    if (lambda <= 0.0 || opts.tol <= 0.0 || opts.quadrature_nodes < 2)
        throw ModelError("predict needs lambda > 0, tol > 0, nodes >= 2");
    const Nonlinearity f = select_nonlinearity(cfg.params, model, lambda);
    const auto pred = predict_stats(model, f, opts);

    CsvFile stats(dir, "predicted_stats.csv", "i,mu,nu,delta");
    for (long i = 0; i < model.n(); ++i) stats.row(i, pred.mu[i], pred.nu[i], pred.delta[i]);
    stats.finalize();
    manifest.doc["outputs"].push_back(stats.name());
    manifest.doc["trace_cov_pred"] = pred.c_y.trace();
    manifest.doc["outer_iterations"] = pred.diagnostics.iterations;

    if (trials > 0) {
        const auto emp = empirical_regression_stats(model, f, trials, cfg.seed, cfg.threads);
        CsvFile cmp(dir, "mean_comparison.csv", "coord,m_y_pred,m_y_emp");
        for (long k = 0; k < model.p(); ++k) cmp.row(k, pred.m_y[k], emp.mean[k]);
        cmp.finalize();
        manifest.doc["outputs"].push_back(cmp.name());
        manifest.doc["discard_rates"]["regression"] =
            static_cast<double>(emp.discard_count) / static_cast<double>(trials);
        manifest.doc["frobenius_error_cov"] = (pred.c_y - emp.cov).norm();
        manifest.doc["trace_cov_emp"] = emp.cov.trace();
        manifest.doc["mean_relative_error"] =
            (pred.m_y - emp.mean).norm() / std::max(emp.mean.norm(), 1e-300);
    } else {
        CsvFile my(dir, "predicted_mean.csv", "coord,m_y_pred");
        for (long k = 0; k < model.p(); ++k) my.row(k, pred.m_y[k]);
        my.finalize();
        manifest.doc["outputs"].push_back(my.name());
    }
}

}  // namespace

int run(const ExperimentConfig& cfg) {
    const auto t0 = std::chrono::steady_clock::now();
    try {
        if (cfg.command.empty()) throw ModelError("no command given");
        if (cfg.model_path.empty()) throw ModelError("no model file given (--model)");
        if (cfg.threads < 1) throw ModelError("threads must be >= 1");
        const DataModel model = load_model(cfg.model_path);

        fs::create_directories(cfg.output_path);
        const fs::path dir(cfg.output_path);
        Manifest manifest(dir, cfg);
        manifest.write();  // before any data file exists

        if (cfg.command == "spectrum")
            cmd_spectrum(cfg, model, dir, manifest);
        else if (cfg.command == "equivalent")
            cmd_equivalent(cfg, model, dir, manifest);
        else if (cfg.command == "rate")
            cmd_rate(cfg, model, dir, manifest);
        else if (cfg.command == "concentration")
            cmd_concentration(cfg, model, dir, manifest);
        else if (cfg.command == "regression")
            cmd_regression(cfg, model, dir, manifest);
        else if (cfg.command == "predict")
            cmd_predict(cfg, model, dir, manifest);
        else
            throw ModelError("unknown command '" + cfg.command + "'");

        const double wall =
            std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
        manifest.finish(wall);
        return 0;
    } catch (const ModelError& e) {
        std::cerr << "config/model error: " << e.what() << "\n";
        return 1;
    } catch (const DomainError& e) {
        std::cerr << "numerical failure: " << e.what() << "\n";
        return 2;
    } catch (const Error& e) {
        std::cerr << "numerical failure: " << e.what() << "\n";
        return 2;
    } catch (const std::exception& e) {
        std::cerr << "error: " << e.what() << "\n";
        return 2;
    }
}

int main_entry(int argc, const char* const* argv) {
    CLI::App app{"deterministic equivalents of sample-covariance resolvents"};
    app.require_subcommand(0);

    std::string config_path, model_path, out_dir;
    std::uint64_t seed = 0;
    int threads = 1;
    bool have_seed = false, have_threads = false;
    std::vector<std::string> z_flags;
    std::vector<double> grid_flag;
    double eta = -1.0, lambda = -1.0, tol = -1.0;
    long trials = -1, nodes = -1;
    std::string sizes_flag, f_kind;

    app.add_option("--config", config_path, "config file (same JSON dialect as model files)");
    app.add_option("--model", model_path, "model file path");
    app.add_option("--seed", seed, "64-bit seed")->each([&](const std::string&) { have_seed = true; });
    app.add_option("--threads", threads, "worker threads")
        ->each([&](const std::string&) { have_threads = true; });
    app.add_option("--out", out_dir, "output directory");
    app.add_option("--z", z_flags, "complex query point re,im (repeatable)");
    app.add_option("--grid", grid_flag, "density grid lo,hi,steps")->delimiter(',')->expected(3);
    app.add_option("--eta", eta, "imaginary offset for density queries");
    app.add_option("--sizes", sizes_flag, "size list n:p,n:p,...");
    app.add_option("--trials", trials, "Monte Carlo trials");
    app.add_option("--lambda", lambda, "logistic regularization strength");
    app.add_option("--tol", tol, "solver tolerance");
    app.add_option("--nodes", nodes, "Gauss-Hermite node count");
    app.add_option("--f", f_kind, "nonlinearity: logistic|zero");

    std::string command;
    app.add_option("command", command,
                   "spectrum|equivalent|rate|concentration|regression|predict");

    try {
        app.parse(argc, argv);
    } catch (const CLI::ParseError& e) {
        const int code = app.exit(e);
        return code == 0 ? 0 : 1;
    }

    ExperimentConfig cfg;
    if (!config_path.empty()) {
        std::ifstream in(config_path);
        if (!in) {
            std::cerr << "config/model error: cannot open config file " << config_path << "\n";
            return 1;
        }
        json j;
        try {
            in >> j;
        } catch (const std::exception& e) {
            std::cerr << "config/model error: config file is not valid JSON: " << e.what()
                      << "\n";
            return 1;
        }
        cfg.command = j.value("command", std::string());
        cfg.model_path = j.value("model_path", std::string());
        cfg.seed = j.value("seed", std::uint64_t{0});
        cfg.threads = j.value("threads", 1);
        cfg.output_path = j.value("output_path", std::string("."));
        if (j.contains("params")) cfg.params = j["params"];
    }

    // flag > file > default
    if (!command.empty()) cfg.command = command;
    if (!model_path.empty()) cfg.model_path = model_path;
    if (have_seed) cfg.seed = seed;
    if (have_threads) cfg.threads = threads;
    if (!out_dir.empty()) cfg.output_path = out_dir;

    try {
        for (const auto& zf : z_flags) {
            const auto comma = zf.find(',');
            if (comma == std::string::npos) throw ModelError("--z expects re,im");
            cfg.params["z"].push_back({std::stod(zf.substr(0, comma)),
                                       std::stod(zf.substr(comma + 1))});
        }
        if (!grid_flag.empty())
            cfg.params["grid"] = {grid_flag[0], grid_flag[1], static_cast<long>(grid_flag[2])};
        if (!sizes_flag.empty()) {
            json sizes = json::array();
            std::stringstream ss(sizes_flag);
            std::string item;
            while (std::getline(ss, item, ',')) {
                const auto colon = item.find(':');
                if (colon == std::string::npos) throw ModelError("--sizes expects n:p,...");
                sizes.push_back({std::stol(item.substr(0, colon)),
                                 std::stol(item.substr(colon + 1))});
            }
            cfg.params["sizes"] = sizes;
        }
        if (eta >= 0.0) cfg.params["eta"] = eta;
        if (trials >= 0) cfg.params["trials"] = trials;
        if (lambda >= 0.0) cfg.params["lambda"] = lambda;
        if (tol >= 0.0) cfg.params["tol"] = tol;
        if (nodes >= 0) cfg.params["nodes"] = nodes;
        if (!f_kind.empty()) cfg.params["f"] = f_kind;
    } catch (const std::exception& e) {
        std::cerr << "config/model error: " << e.what() << "\n";
        return 1;
    }

    return run(cfg);
}

}  // namespace rmt::cli
