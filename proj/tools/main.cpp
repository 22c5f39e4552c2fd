// Command-line front end: fit, select, simulate, residuals.
#include <signmf/signmf.hpp>

#include <CLI11.hpp>
#include <json.hpp>

#include <chrono>
#include <cmath>
#include <cstdint>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <string>
#include <vector>

namespace fs = std::filesystem;
using nlohmann::json;
using namespace signmf;

namespace {

struct Stopwatch {
    std::chrono::steady_clock::time_point start = std::chrono::steady_clock::now();
    double seconds() const {
        return std::chrono::duration<double>(std::chrono::steady_clock::now() - start).count();
    }
};

std::vector<std::string> signature_labels(int k) {
    std::vector<std::string> out;
    for (int i = 0; i < k; ++i) out.push_back("S" + std::to_string(i + 1));
    return out;
}

// JSON has no infinity literal; write the Poisson-limit sentinel as a string.
json json_alpha(double a) {
    if (std::isinf(a)) return "inf";
    return a;
}

void write_alpha_csv(const fs::path& path, const std::vector<std::string>& patients, const Vector& alphas) {
    Matrix col(alphas.size(), 1);
    col.col(0) = alphas;
    write_matrix_csv(path, col, patients, {"alpha"}, "patient");
}

void finish_manifest(const fs::path& out_dir, RunManifest& manifest, const Stopwatch& watch) {
    manifest.wall_seconds = watch.seconds();
    manifest.outputs.push_back("manifest.json");
    write_manifest(out_dir / "manifest.json", manifest);
}

// ---------------------------------------------------------------- fit ----

struct FitArgs {
    std::string input, model = "poisson", out_dir = ".";
    int k = 2, max_iters = 100000, restarts = 1;
    double epsilon = 1e-8, alpha_min = 1e-3, alpha_max = 1e7;
    std::uint64_t seed = 0;
};

int run_fit(const FitArgs& a) {
    Stopwatch watch;
    const NmfModel model = nmf_model_from_string(a.model);
    const CountMatrix v = load_counts(a.input);
    FitConfig fit_cfg;
    fit_cfg.rank = a.k;
    fit_cfg.epsilon = a.epsilon;
    fit_cfg.max_iters = a.max_iters;
    fit_cfg.restarts = a.restarts;
    fit_cfg.seed = a.seed;
    DispersionConfig disp_cfg;
    disp_cfg.alpha_min = a.alpha_min;
    disp_cfg.alpha_max = a.alpha_max;

    const PipelineResult run = run_pipeline(v, model, fit_cfg, disp_cfg);
    Factorization fit = run.final_fit;
    normalize_factorization(fit);

    const fs::path out_dir(a.out_dir);
    fs::create_directories(out_dir);
    const auto sig_names = signature_labels(fit.rank);
    write_matrix_csv(out_dir / "W.csv", fit.exposures, v.patient_ids, sig_names, "patient");
    write_matrix_csv(out_dir / "H.csv", fit.signatures, sig_names, v.mutation_types, "signature");

    const Matrix mu = fit.fitted_mean();
    const double ll = model == NmfModel::Poisson ? poisson_loglik(v.counts, mu)
                                                 : nb_loglik(v.counts, mu, *fit.dispersion);
    const double prm = count_parameters(fit.rank, v.counts.rows(), v.counts.cols(), model);
    const double n = static_cast<double>(v.counts.rows());
    const double nm = n * static_cast<double>(v.counts.cols());

    json info;
    info["model"] = to_string(model);
    info["k"] = fit.rank;
    info["divergence"] = fit.divergence;
    info["loglik"] = ll;
    info["n_params"] = prm;
    info["aic"] = aic(ll, prm);
    info["bic"] = bic(ll, prm, n);         // n_obs = patients
    info["bic_cells"] = bic(ll, prm, nm);  // n_obs = matrix cells
    info["iterations"] = fit.iterations;
    info["converged"] = fit.converged;
    info["seed"] = fit.seed;
    info["denominator_guard_hits"] = fit.denominator_guard_hits;
    if (run.poisson_stage) {
        info["poisson_stage"] = {{"divergence", run.poisson_stage->divergence},
                                 {"iterations", run.poisson_stage->iterations}};
    }

    RunManifest manifest;
    manifest.command = "fit";
    manifest.config = {{"input", a.input},   {"model", a.model},       {"k", a.k},
                       {"epsilon", a.epsilon}, {"max_iters", a.max_iters}, {"restarts", a.restarts},
                       {"seed", a.seed},     {"alpha_min", a.alpha_min}, {"alpha_max", a.alpha_max}};
    manifest.seed = a.seed;
    manifest.input_digests[a.input] = file_digest(a.input);
    manifest.outputs = {"W.csv", "H.csv", "fit.json"};

    if (model != NmfModel::Poisson) {
        write_alpha_csv(out_dir / "alphas.csv", v.patient_ids, fit.dispersion->alphas);
        manifest.outputs.push_back("alphas.csv");
    }
    std::ofstream fj(out_dir / "fit.json");
    fj << info.dump(2) << '\n';
    if (!fj) throw validation_error("cannot write fit.json");
    fj.close();

    finish_manifest(out_dir, manifest, watch);
    std::cout << "fit: model=" << to_string(model) << " k=" << fit.rank << " divergence=" << fit.divergence
              << " iterations=" << fit.iterations << (fit.converged ? "" : " (iteration cap reached)") << '\n';
    return 0;
}

// ------------------------------------------------------------- select ----

struct SelectArgs {
    std::string input, method, model = "poisson", cost = "gkl", n_obs = "patients", out_dir = ".";
    int k_min = 2, k_max = 8, splits = 10, max_iters = 100000, restarts = 1, threads = 0;
    double epsilon = 1e-8, test_fraction = 0.10;
    std::uint64_t seed = 0;
};

int run_select(const SelectArgs& a) {
    Stopwatch watch;
    if (a.k_min > a.k_max) throw validation_error("select: --k-min must not exceed --k-max");
    const CountMatrix v = load_counts(a.input);
    const NmfModel model = nmf_model_from_string(a.model);
    const int threads = a.threads > 0 ? a.threads : default_thread_count();
    std::vector<int> k_range;
    for (int k = a.k_min; k <= a.k_max; ++k) k_range.push_back(k);

    FitConfig fit_cfg;
    fit_cfg.epsilon = a.epsilon;
    fit_cfg.max_iters = a.max_iters;
    fit_cfg.restarts = a.restarts;

    SelectionResult res;
    if (a.method == "sigmos") {
        SigmosConfig cfg;
        cfg.k_range = k_range;
        cfg.splits = a.splits;
        cfg.test_fraction = a.test_fraction;
        cfg.cost = cost_from_string(a.cost);
        cfg.method = model;
        cfg.fit = fit_cfg;
        cfg.seed = a.seed;
        cfg.threads = threads;
        res = sigmos(v, cfg);
    } else {
        IcConfig cfg;
        cfg.k_range = k_range;
        cfg.criterion = criterion_from_string(a.method);
        cfg.sample_size = a.n_obs == "cells" ? IcSampleSize::Cells : IcSampleSize::Patients;
        cfg.method = model;
        cfg.fit = fit_cfg;
        cfg.seed = a.seed;
        cfg.threads = threads;
        res = select_by_ic(v, cfg);
    }

    const fs::path out_dir(a.out_dir);
    fs::create_directories(out_dir);
    {
        std::ofstream csv(out_dir / "selection.csv");
        if (a.method == "sigmos") {
            csv << "k,median";
            for (int j = 1; j <= a.splits; ++j) csv << ",cost_" << j;
            csv << '\n';
            for (std::size_t i = 0; i < res.ranks.size(); ++i) {
                csv << res.ranks[i] << ',' << format_value(res.medians[i]);
                for (double c : res.costs[i]) csv << ',' << format_value(c);
                csv << '\n';
            }
        } else {
            csv << "k,value,loglik,n_params\n";
            for (std::size_t i = 0; i < res.ranks.size(); ++i)
                csv << res.ranks[i] << ',' << format_value(res.medians[i]) << ',' << format_value(res.logliks[i])
                    << ',' << format_value(res.n_params[i]) << '\n';
        }
        if (!csv) throw validation_error("cannot write selection.csv");
    }
    json sel;
    sel["method"] = res.method_label;
    sel["chosen_k"] = res.chosen_rank;
    sel["ranks"] = res.ranks;
    sel["medians"] = res.medians;
    if (!res.logliks.empty()) sel["logliks"] = res.logliks;
    {
        std::ofstream js(out_dir / "selection.json");
        js << sel.dump(2) << '\n';
        if (!js) throw validation_error("cannot write selection.json");
    }

    RunManifest manifest;
    manifest.command = "select";
    manifest.config = {{"input", a.input},     {"method", a.method},     {"model", a.model},
                       {"k_min", a.k_min},     {"k_max", a.k_max},       {"splits", a.splits},
                       {"cost", a.cost},       {"test_fraction", a.test_fraction},
                       {"epsilon", a.epsilon}, {"max_iters", a.max_iters}, {"restarts", a.restarts},
                       {"n_obs", a.n_obs},     {"seed", a.seed}};
    manifest.seed = a.seed;
    manifest.input_digests[a.input] = file_digest(a.input);
    manifest.outputs = {"selection.csv", "selection.json"};
    finish_manifest(out_dir, manifest, watch);

    std::cout << "select: method=" << res.method_label << " chosen_k=" << res.chosen_rank << '\n';
    return 0;
}

// ----------------------------------------------------------- simulate ----

struct SimulateArgs {
    std::string catalog, noise = "poisson", out_dir = ".";
    std::vector<std::string> required;
    bool required_given = false;
    int patients = 20, signatures = 5;
    double exposure_mean = 6000.0, exposure_dispersion = 1.5, alpha = 10.0, alpha_lo = 10.0, alpha_hi = 500.0;
    std::uint64_t seed = 0;
};

int run_simulate(const SimulateArgs& a) {
    Stopwatch watch;
    SimConfig cfg;
    cfg.n_patients = a.patients;
    cfg.n_signatures = a.signatures;
    cfg.exposure_mean = a.exposure_mean;
    cfg.exposure_dispersion = a.exposure_dispersion;
    cfg.alpha = a.alpha;
    cfg.alpha_lo = a.alpha_lo;
    cfg.alpha_hi = a.alpha_hi;
    cfg.seed = a.seed;
    if (a.noise == "poisson")
        cfg.noise = NoiseModel::Poisson;
    else if (a.noise == "nb")
        cfg.noise = NoiseModel::NegBinConstant;
    else if (a.noise == "nb-uniform")
        cfg.noise = NoiseModel::NegBinUniform;
    else
        throw validation_error("simulate: unknown noise model '" + a.noise + "'");

    ReferenceSignatures ref;
    if (!a.catalog.empty()) {
        ref = load_signatures(a.catalog);
        if (a.required_given) {
            cfg.required_signatures = a.required;
        } else {
            // default to the catalog's clock-like pair when present
            for (const char* name : {"SBS1", "SBS5"})
                if (std::find(ref.names.begin(), ref.names.end(), name) != ref.names.end())
                    cfg.required_signatures.push_back(name);
            if (cfg.required_signatures.size() != 2) cfg.required_signatures.clear();
        }
    } else {
        ref = synthetic_signatures(a.signatures, a.seed);
        if (a.required_given) cfg.required_signatures = a.required;
    }

    const SimulatedDataset data = simulate_dataset(cfg, ref);
    const fs::path out_dir(a.out_dir);
    fs::create_directories(out_dir / "truth");
    write_counts(out_dir / "V.csv", data.counts);
    write_matrix_csv(out_dir / "truth" / "W_true.csv", data.exposures, data.counts.patient_ids,
                     data.signature_names, "patient");
    write_matrix_csv(out_dir / "truth" / "H_true.csv", data.signatures, data.signature_names,
                     data.counts.mutation_types, "signature");
    write_alpha_csv(out_dir / "truth" / "alphas.csv", data.counts.patient_ids, data.alphas);

    RunManifest manifest;
    manifest.command = "simulate";
    manifest.config = {{"patients", a.patients},
                       {"signatures", a.signatures},
                       {"catalog", a.catalog},
                       {"required", cfg.required_signatures},
                       {"exposure_mean", a.exposure_mean},
                       {"exposure_dispersion", a.exposure_dispersion},
                       {"noise", a.noise},
                       {"alpha", a.alpha},
                       {"alpha_lo", a.alpha_lo},
                       {"alpha_hi", a.alpha_hi},
                       {"seed", a.seed}};
    manifest.seed = a.seed;
    if (!a.catalog.empty()) manifest.input_digests[a.catalog] = file_digest(a.catalog);
    manifest.outputs = {"V.csv", "truth/W_true.csv", "truth/H_true.csv", "truth/alphas.csv"};
    finish_manifest(out_dir, manifest, watch);

    std::cout << "simulate: " << a.patients << " patients, " << a.signatures << " signatures, noise=" << a.noise
              << '\n';
    return 0;
}

// ---------------------------------------------------------- residuals ----

struct ResidualArgs {
    std::string input, fit_dir, out_dir = ".";
    double threshold = 1.5;
};

Factorization load_fit_dir(const fs::path& dir, const CountMatrix& v) {
    std::ifstream fj(dir / "fit.json");
    if (!fj) throw validation_error("cannot open '" + (dir / "fit.json").string() + "'");
    json info = json::parse(fj);
    Factorization f;
    f.model = nmf_model_from_string(info.at("model").get<std::string>());
    f.rank = info.at("k").get<int>();

    const LabeledTable w = read_labeled_csv(dir / "W.csv");
    const LabeledTable h = read_labeled_csv(dir / "H.csv");
    if (w.row_labels != v.patient_ids)
        throw validation_error("residuals: patients in W.csv do not match the input counts");
    if (h.col_labels != v.mutation_types)
        throw validation_error("residuals: mutation types in H.csv do not match the input counts");
    f.exposures = w.values;
    f.signatures = h.values;
    if (f.exposures.cols() != f.rank || f.signatures.rows() != f.rank)
        throw validation_error("residuals: factor shapes do not match k in fit.json");

    if (f.model != NmfModel::Poisson) {
        const LabeledTable a = read_labeled_csv(dir / "alphas.csv");
        if (a.row_labels != v.patient_ids)
            throw validation_error("residuals: patients in alphas.csv do not match the input counts");
        DispersionVector d;
        d.alphas = a.values.col(0);
        f.dispersion = std::move(d);
    }
    return f;
}

int run_residuals(const ResidualArgs& a) {
    Stopwatch watch;
    const CountMatrix v = load_counts(a.input);
    const Factorization f = load_fit_dir(a.fit_dir, v);
    const ResidualReport rep = residual_report(v, f, a.threshold);

    const fs::path out_dir(a.out_dir);
    fs::create_directories(out_dir);
    {
        std::ofstream csv(out_dir / "residuals.csv");
        csv << "patient,mutation_type,fitted_mean,raw,sigma,normalized\n";
        for (Eigen::Index i = 0; i < v.counts.rows(); ++i)
            for (Eigen::Index j = 0; j < v.counts.cols(); ++j)
                csv << v.patient_ids[static_cast<std::size_t>(i)] << ','
                    << v.mutation_types[static_cast<std::size_t>(j)] << ',' << format_value(rep.fitted_mean(i, j))
                    << ',' << format_value(rep.raw(i, j)) << ',' << format_value(rep.sigma(i, j)) << ','
                    << format_value(rep.normalized(i, j)) << '\n';
        if (!csv) throw validation_error("cannot write residuals.csv");
    }
    json summary;
    summary["model"] = to_string(f.model);
    summary["k"] = f.rank;
    summary["observed_quantiles"] = {rep.quantiles.observed.lower, rep.quantiles.observed.upper};
    summary["reference_quantiles"] = {rep.quantiles.reference.lower, rep.quantiles.reference.upper};
    summary["threshold"] = rep.quantiles.threshold;
    summary["overdispersed"] = rep.quantiles.overdispersed;
    summary["frac_outside_2sigma"] = rep.frac_outside_2sigma;
    if (rep.envelope_alphas)
        summary["envelope_alphas"] = {json_alpha((*rep.envelope_alphas)(0)), json_alpha((*rep.envelope_alphas)(1)),
                                      json_alpha((*rep.envelope_alphas)(2))};
    {
        std::ofstream js(out_dir / "summary.json");
        js << summary.dump(2) << '\n';
        if (!js) throw validation_error("cannot write summary.json");
    }

    RunManifest manifest;
    manifest.command = "residuals";
    manifest.config = {{"input", a.input}, {"fit_dir", a.fit_dir}, {"threshold", a.threshold}};
    manifest.input_digests[a.input] = file_digest(a.input);
    for (const char* name : {"fit.json", "W.csv", "H.csv"})
        manifest.input_digests[(fs::path(a.fit_dir) / name).string()] = file_digest(fs::path(a.fit_dir) / name);
    manifest.outputs = {"residuals.csv", "summary.json"};
    finish_manifest(out_dir, manifest, watch);

    std::cout << "residuals: " << (rep.quantiles.overdispersed ? "overdispersed" : "not overdispersed")
              << " frac |r|>2sigma = " << rep.frac_outside_2sigma << '\n';
    return 0;
}

}  // namespace

int main(int argc, char** argv) {
    CLI::App app{"Count-matrix factorization for mutational signatures: Poisson and Negative Binomial NMF, "
                 "rank selection, simulation, residual diagnostics"};
    app.require_subcommand(1);

    FitArgs fit_args;
    CLI::App* fit = app.add_subcommand("fit", "Factorize a count matrix at a fixed rank");
    fit->add_option("--input", fit_args.input, "count matrix CSV")->required()->check(CLI::ExistingFile);
    fit->add_option("--model", fit_args.model, "poisson | nb | nb-shared")->default_val("poisson");
    fit->add_option("--k", fit_args.k, "rank")->required()->check(CLI::PositiveNumber);
    fit->add_option("--epsilon", fit_args.epsilon, "relative convergence tolerance");
    fit->add_option("--max-iters", fit_args.max_iters, "sweep cap");
    fit->add_option("--restarts", fit_args.restarts, "random restarts");
    fit->add_option("--seed", fit_args.seed, "RNG seed");
    fit->add_option("--alpha-min", fit_args.alpha_min, "dispersion search lower bound");
    fit->add_option("--alpha-max", fit_args.alpha_max, "dispersion search upper bound");
    fit->add_option("--out-dir", fit_args.out_dir, "output directory");

    SelectArgs sel_args;
    CLI::App* sel = app.add_subcommand("select", "Choose the number of signatures");
    sel->add_option("--input", sel_args.input, "count matrix CSV")->required()->check(CLI::ExistingFile);
    sel->add_option("--method", sel_args.method, "sigmos | aic | bic")
        ->required()
        ->check(CLI::IsMember({"sigmos", "aic", "bic"}));
    sel->add_option("--model", sel_args.model, "poisson | nb | nb-shared")->default_val("poisson");
    sel->add_option("--k-min", sel_args.k_min, "smallest candidate rank");
    sel->add_option("--k-max", sel_args.k_max, "largest candidate rank");
    sel->add_option("--splits", sel_args.splits, "train/test splits per rank");
    sel->add_option("--cost", sel_args.cost, "gkl | frobenius | nb")->default_val("gkl");
    sel->add_option("--test-fraction", sel_args.test_fraction, "held-out patient fraction");
    sel->add_option("--epsilon", sel_args.epsilon, "relative convergence tolerance");
    sel->add_option("--max-iters", sel_args.max_iters, "sweep cap");
    sel->add_option("--restarts", sel_args.restarts, "random restarts per fit");
    sel->add_option("--n-obs", sel_args.n_obs, "patients | cells (BIC sample size)")
        ->check(CLI::IsMember({"patients", "cells"}));
    sel->add_option("--seed", sel_args.seed, "RNG seed");
    sel->add_option("--threads", sel_args.threads, "worker threads (default: SIGNMF_THREADS or hardware)");
    sel->add_option("--out-dir", sel_args.out_dir, "output directory");

    SimulateArgs sim_args;
    CLI::App* sim = app.add_subcommand("simulate", "Generate a synthetic dataset with known truth");
    sim->add_option("--patients", sim_args.patients, "number of patients");
    sim->add_option("--signatures", sim_args.signatures, "number of true signatures");
    sim->add_option("--catalog", sim_args.catalog, "reference signature CSV (random catalog when omitted)")
        ->check(CLI::ExistingFile);
    CLI::Option* req =
        sim->add_option("--required", sim_args.required, "signature names that must be included");
    sim->add_option("--exposure-mean", sim_args.exposure_mean, "mean of the true exposures");
    sim->add_option("--exposure-dispersion", sim_args.exposure_dispersion, "dispersion of the true exposures");
    sim->add_option("--noise", sim_args.noise, "poisson | nb | nb-uniform")->default_val("poisson");
    sim->add_option("--alpha", sim_args.alpha, "dispersion for nb noise");
    sim->add_option("--alpha-lo", sim_args.alpha_lo, "lower dispersion for nb-uniform noise");
    sim->add_option("--alpha-hi", sim_args.alpha_hi, "upper dispersion for nb-uniform noise");
    sim->add_option("--seed", sim_args.seed, "RNG seed");
    sim->add_option("--out-dir", sim_args.out_dir, "output directory");

    ResidualArgs res_args;
    CLI::App* res = app.add_subcommand("residuals", "Residual diagnostics for a saved fit");
    res->add_option("--input", res_args.input, "count matrix CSV")->required()->check(CLI::ExistingFile);
    res->add_option("--fit-dir", res_args.fit_dir, "directory written by `fit`")
        ->required()
        ->check(CLI::ExistingDirectory);
    res->add_option("--threshold", res_args.threshold, "overdispersion flag threshold");
    res->add_option("--out-dir", res_args.out_dir, "output directory");

    try {
        app.parse(argc, argv);
    } catch (const CLI::ParseError& e) {
        // fold every usage problem into the validation exit code; --help stays 0
        const int code = app.exit(e);
        return code == 0 ? 0 : 1;
    }

    try {
        if (fit->parsed()) return run_fit(fit_args);
        if (sel->parsed()) return run_select(sel_args);
        if (sim->parsed()) {
            sim_args.required_given = req->count() > 0;
            return run_simulate(sim_args);
        }
        if (res->parsed()) return run_residuals(res_args);
        throw validation_error("no subcommand given");
    } catch (const validation_error& e) {
        std::cerr << "error: " << e.what() << '\n';
        return 1;
    } catch (const numerical_error& e) {
        std::cerr << "numerical error: " << e.what() << '\n';
        return 2;
    } catch (const std::exception& e) {
        std::cerr << "error: " << e.what() << '\n';
        return 2;
    }
}
