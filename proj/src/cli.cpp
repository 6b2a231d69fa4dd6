#include "apafa/evaluation.hpp"
#include "apafa/gibbs.hpp"
#include "apafa/identifiability.hpp"
#include "apafa/io.hpp"
#include "apafa/model.hpp"
#include "apafa/simulation.hpp"

#include <CLI11.hpp>
#include <json.hpp>

#include <fstream>
#include <iostream>
#include <sstream>

namespace apafa {

using nlohmann::json;

namespace {

std::vector<std::string> split_list(const std::string& csv) {
    std::vector<std::string> out;
    std::string cur;
    for (char c : csv) {
        if (c == ',') {
            if (!cur.empty()) out.push_back(cur);
            cur.clear();
        } else {
            cur.push_back(c);
        }
    }
    if (!cur.empty()) out.push_back(cur);
    return out;
}

int run_simulate(const std::string& scenario_str, const std::string& shape_str,
                 std::uint64_t seed, const std::string& out_dir, double loading_scale) {
    ScenarioConfig cfg;
    cfg.scenario = scenario_from_string(scenario_str);
    cfg.shape = shape_from_string(shape_str);
    cfg.seed = seed;
    cfg.loading_scale = loading_scale;

    auto [data, truth] = generate_scenario(cfg);
    std::filesystem::create_directories(out_dir);
    const std::filesystem::path dir(out_dir);

    std::vector<std::string> labels;
    for (Eigen::Index s = 0; s < data.S(); ++s) labels.push_back(std::to_string(s + 1));
    write_dataset_csv(dir / "Y.csv", data, labels);
    write_truth_json(dir / "truth.json", truth);

    json meta;
    meta["scenario"] = to_string(cfg.scenario);
    meta["shape"] = to_string(cfg.shape);
    meta["seed"] = cfg.seed;
    meta["loading_scale"] = cfg.loading_scale;
    meta["n"] = cfg.n();
    meta["p"] = cfg.p();
    atomic_write_file(dir / "meta.json", meta.dump(2) + "\n");
    return 0;
}

struct FitFlags {
    std::string data_path;
    std::string out_dir;
    std::string config_path;
    bool binary = false;
    bool strict_labels = false;
    double holdout_frac = 0.0;
    int holdout_count = 0;
    // -1 / empty sentinel means "not given on the command line"
    long long iterations = -1, burn_in = -1, thinning = -1, seed = -1;
    std::string beta_update;
};

int run_fit(const FitFlags& flags) {
    FitConfig cfg;
    if (!flags.config_path.empty()) cfg = read_config_file(flags.config_path);
    if (flags.iterations >= 0) cfg.chain.iterations = static_cast<int>(flags.iterations);
    if (flags.burn_in >= 0) cfg.chain.burn_in = static_cast<int>(flags.burn_in);
    if (flags.thinning >= 0) cfg.chain.thinning = static_cast<int>(flags.thinning);
    if (flags.seed >= 0) cfg.chain.seed = static_cast<std::uint64_t>(flags.seed);
    if (!flags.beta_update.empty()) {
        if (flags.beta_update == "augmentation")
            cfg.chain.beta_update = BetaUpdateKind::augmentation;
        else if (flags.beta_update == "random_walk")
            cfg.chain.beta_update = BetaUpdateKind::random_walk;
        else
            throw usage_error("--beta-update expects augmentation|random_walk");
    }

    CsvDataset loaded = read_dataset_csv(flags.data_path, flags.strict_labels,
                                         flags.binary ? OutcomeKind::binary
                                                      : OutcomeKind::continuous);
    Dataset& data = loaded.data;
    if (!cfg.hyper_dims_set) {
        const Hyperparameters defaults =
            Hyperparameters::defaults_for(static_cast<int>(data.p()));
        cfg.hyper.d_max = defaults.d_max;
        cfg.hyper.k_max = defaults.k_max;
    }

    std::filesystem::create_directories(flags.out_dir);
    const std::filesystem::path dir(flags.out_dir);

    // optional random holdout of observed cells for imputation scoring
    int want = flags.holdout_count;
    if (flags.holdout_frac > 0.0)
        want = std::max(want, static_cast<int>(flags.holdout_frac *
                                               static_cast<double>(data.n() * data.p()) + 0.5));
    if (want > 0) {
        std::vector<std::pair<int, int>> observed;
        for (Eigen::Index i = 0; i < data.n(); ++i)
            for (Eigen::Index j = 0; j < data.p(); ++j)
                if (!data.missing_mask(i, j))
                    observed.emplace_back(static_cast<int>(i), static_cast<int>(j));
        if (want > static_cast<int>(observed.size()))
            throw usage_error("holdout larger than the number of observed cells");
        Rng hrng(cfg.chain.seed ^ 0x9e3779b97f4a7c15ULL);
        for (int t = 0; t < want; ++t) {
            const auto pick = static_cast<std::size_t>(
                t + hrng.uniform_int(static_cast<std::int64_t>(observed.size() - t)));
            std::swap(observed[t], observed[pick]);
        }
        // row-major cell order matches the archive's imputed columns
        std::sort(observed.begin(), observed.begin() + want);
        json hj;
        hj["cells"] = json::array();
        hj["values"] = json::array();
        for (int t = 0; t < want; ++t) {
            const auto [i, j] = observed[t];
            hj["cells"].push_back({i, j});
            hj["values"].push_back(data.Y(i, j));
            data.missing_mask(i, j) = true;
            data.Y(i, j) = std::numeric_limits<double>::quiet_NaN();
        }
        atomic_write_file(dir / "holdout.json", hj.dump(2) + "\n");
    }

    SweepTimings timings;
    const PosteriorDraws draws = run_chain(data, cfg.hyper, cfg.chain, &timings);
    write_draws_archive(dir / "draws.bin", draws, data);

    const PosteriorSummary summary = posterior_summary(draws);
    const std::vector<int> flags_sw = detect_information_switching(draws);
    write_summary_json(dir / "summary.json", summary, draws, flags_sw);

    json diag;
    diag["runtime_seconds"] = draws.meta.runtime_seconds;
    diag["component_seconds"] = json::object();
    for (const auto& [name, secs] : timings.named()) diag["component_seconds"][name] = secs;
    diag["information_switching_columns"] = flags_sw;
    diag["n_draws"] = draws.states.size();
    atomic_write_file(dir / "diagnostics.json", diag.dump(2) + "\n");
    return 0;
}

json roc_points_json(const RocResult& roc) {
    json pts = json::array();
    for (const auto& [fpr, tpr] : roc.points) pts.push_back({fpr, tpr});
    return pts;
}

int run_evaluate(const std::string& draws_path, const std::string& truth_path,
                 const std::string& out_dir) {
    const PosteriorDraws draws = read_draws_archive(draws_path);
    const SyntheticTruth truth = read_truth_json(truth_path);
    if (draws.states.empty()) throw usage_error("draws archive is empty");

    const CovarianceRecovery rec = evaluate_covariance_recovery(draws, truth);
    const RocResult roc = psi_recovery_roc(draws, truth, true);
    const PosteriorSummary summary = posterior_summary(draws);

    std::filesystem::create_directories(out_dir);
    const std::filesystem::path dir(out_dir);

    json j;
    j["d_mean"] = summary.d_mean;
    j["d_iqr"] = summary.d_iqr;
    j["k_mean"] = summary.k_mean;
    j["k_iqr"] = summary.k_iqr;
    for (std::size_t g = 0; g < rec.rv_omega.size(); ++g)
        j["rv_omega_" + std::to_string(g + 1)] = rec.rv_omega[g];
    j["rv_shared"] = rec.rv_shared;
    if (roc.has_positive_class) {
        j["auc"] = roc.auc;
        j["roc_points"] = roc_points_json(roc);
    } else {
        j["auc"] = nullptr;  // no positive class in the truth
        j["auc_marker"] = "no-positive-class";
    }
    atomic_write_file(dir / "metrics.json", j.dump(2) + "\n");

    std::ostringstream csv;
    csv.precision(17);
    csv << "metric,value\n";
    csv << "d_mean," << summary.d_mean << "\n";
    csv << "d_iqr," << summary.d_iqr << "\n";
    csv << "k_mean," << summary.k_mean << "\n";
    csv << "k_iqr," << summary.k_iqr << "\n";
    for (std::size_t g = 0; g < rec.rv_omega.size(); ++g)
        csv << "rv_omega_" << (g + 1) << "," << rec.rv_omega[g] << "\n";
    csv << "rv_shared," << rec.rv_shared << "\n";
    if (roc.has_positive_class)
        csv << "auc," << roc.auc << "\n";
    else
        csv << "auc,no-positive-class\n";
    atomic_write_file(dir / "metrics.csv", csv.str());

    if (roc.has_positive_class) {
        std::ostringstream rcsv;
        rcsv.precision(17);
        rcsv << "fpr,tpr\n";
        for (const auto& [fpr, tpr] : roc.points) rcsv << fpr << "," << tpr << "\n";
        atomic_write_file(dir / "roc.csv", rcsv.str());
    }
    return 0;
}

int run_replicate(const std::string& scenarios_csv, const std::string& shapes_csv, int R,
                  std::uint64_t seed, const std::string& out_dir,
                  const std::string& config_path, double loading_scale) {
    FitConfig cfg;
    if (!config_path.empty()) cfg = read_config_file(config_path);
    cfg.chain.seed = seed;

    std::vector<Scenario> scenarios;
    for (const std::string& s : split_list(scenarios_csv))
        scenarios.push_back(scenario_from_string(s));
    std::vector<Shape> shapes;
    for (const std::string& s : split_list(shapes_csv)) shapes.push_back(shape_from_string(s));
    if (scenarios.empty() || shapes.empty() || R < 1)
        throw usage_error("replicate needs scenarios, shapes and a positive replicate count");

    Hyperparameters hyper = cfg.hyper;
    if (!cfg.hyper_dims_set) {
        int min_p = 1 << 30;
        for (const Shape sh : shapes) {
            ScenarioConfig sc;
            sc.shape = sh;
            min_p = std::min(min_p, sc.p());
        }
        const Hyperparameters defaults = Hyperparameters::defaults_for(min_p);
        hyper.d_max = defaults.d_max;
        hyper.k_max = defaults.k_max;
    }

    const StudyReport report = replicate_study(scenarios, shapes, R, hyper, cfg.chain,
                                               loading_scale);

    std::filesystem::create_directories(out_dir);
    const std::filesystem::path dir(out_dir);

    std::size_t max_groups = 0;
    for (const auto& m : report.replicates) max_groups = std::max(max_groups, m.rv_omega.size());

    std::ostringstream csv;
    csv.precision(10);
    csv << "row,scenario,shape,replicate,seed,d_mean,k_mean";
    for (std::size_t g = 0; g < max_groups; ++g) csv << ",rv_omega_" << (g + 1);
    csv << ",rv_shared,auc,runtime_seconds\n";
    for (const auto& m : report.replicates) {
        csv << "replicate," << to_string(m.scenario) << "," << to_string(m.shape) << ","
            << m.replicate << "," << m.seed << "," << m.d_mean << "," << m.k_mean;
        for (std::size_t g = 0; g < max_groups; ++g) {
            csv << ",";
            if (g < m.rv_omega.size()) csv << m.rv_omega[g];
        }
        csv << "," << m.rv_shared << ",";
        if (m.auc >= 0.0) csv << m.auc;
        else csv << "NA";
        csv << "," << m.runtime_seconds << "\n";
    }
    for (const auto& a : report.aggregates) {
        csv << "aggregate," << to_string(a.scenario) << "," << to_string(a.shape) << ",,,"
            << a.d_mean << " (" << a.d_iqr << ")," << a.k_mean << " (" << a.k_iqr << ")";
        for (std::size_t g = 0; g < max_groups; ++g) {
            csv << ",";
            if (g < a.rv_mean.size()) csv << a.rv_mean[g] << " (" << a.rv_iqr[g] << ")";
        }
        csv << ",,";
        if (a.auc_mean >= 0.0) csv << a.auc_mean << " (" << a.auc_iqr << ")";
        else csv << "NA";
        csv << ",\n";
    }
    atomic_write_file(dir / "report.csv", csv.str());

    json j;
    j["replicates"] = json::array();
    for (const auto& m : report.replicates) {
        json r;
        r["scenario"] = to_string(m.scenario);
        r["shape"] = to_string(m.shape);
        r["replicate"] = m.replicate;
        r["seed"] = m.seed;
        r["d_mean"] = m.d_mean;
        r["k_mean"] = m.k_mean;
        r["rv_omega"] = m.rv_omega;
        r["rv_shared"] = m.rv_shared;
        if (m.auc >= 0.0) r["auc"] = m.auc;
        else r["auc"] = nullptr;
        r["runtime_seconds"] = m.runtime_seconds;
        j["replicates"].push_back(std::move(r));
    }
    j["aggregates"] = json::array();
    for (const auto& a : report.aggregates) {
        json r;
        r["scenario"] = to_string(a.scenario);
        r["shape"] = to_string(a.shape);
        r["d_mean"] = a.d_mean;
        r["d_iqr"] = a.d_iqr;
        r["k_mean"] = a.k_mean;
        r["k_iqr"] = a.k_iqr;
        r["rv_mean"] = a.rv_mean;
        r["rv_iqr"] = a.rv_iqr;
        if (a.auc_mean >= 0.0) {
            r["auc_mean"] = a.auc_mean;
            r["auc_iqr"] = a.auc_iqr;
        } else {
            r["auc_mean"] = nullptr;
        }
        j["aggregates"].push_back(std::move(r));
    }
    atomic_write_file(dir / "report.json", j.dump(2) + "\n");
    return 0;
}

}  // namespace

int cli_main(int argc, char** argv) {
    CLI::App app{"Adaptive partition factor analysis: simulate, fit, evaluate, replicate"};
    app.require_subcommand(1);

    // simulate
    auto* sim = app.add_subcommand("simulate", "Generate a synthetic scenario dataset");
    std::string sim_scenario, sim_shape = "tall", sim_out;
    std::uint64_t sim_seed = 1;
    double sim_loading = 2.0;
    sim->add_option("--scenario", sim_scenario, "A|Astar|B|C|D")->required();
    sim->add_option("--shape", sim_shape, "tall|large");
    sim->add_option("--seed", sim_seed, "RNG seed");
    sim->add_option("--out", sim_out, "output directory")->required();
    sim->add_option("--loading-scale", sim_loading, "sd of true loadings");

    // fit
    auto* fit = app.add_subcommand("fit", "Run the Gibbs sampler on a data CSV");
    FitFlags ff;
    fit->add_option("--data", ff.data_path, "data CSV")->required();
    fit->add_option("--out", ff.out_dir, "output directory")->required();
    fit->add_option("--config", ff.config_path, "key=value config file");
    fit->add_flag("--binary", ff.binary, "binary outcomes via the probit link");
    fit->add_flag("--strict-labels", ff.strict_labels,
                  "reject group labels missing from the header-declared set");
    fit->add_option("--holdout-frac", ff.holdout_frac, "fraction of cells to hold out");
    fit->add_option("--holdout-count", ff.holdout_count, "number of cells to hold out");
    fit->add_option("--iterations", ff.iterations, "MCMC iterations");
    fit->add_option("--burn-in", ff.burn_in, "burn-in iterations");
    fit->add_option("--thinning", ff.thinning, "thinning interval");
    fit->add_option("--seed", ff.seed, "RNG seed");
    fit->add_option("--beta-update", ff.beta_update, "augmentation|random_walk");

    // evaluate
    auto* ev = app.add_subcommand("evaluate", "Score a draws archive against a truth bundle");
    std::string ev_draws, ev_truth, ev_out;
    ev->add_option("--draws", ev_draws, "draws archive")->required();
    ev->add_option("--truth", ev_truth, "truth JSON")->required();
    ev->add_option("--out", ev_out, "output directory")->required();

    // replicate
    auto* rep = app.add_subcommand("replicate", "Scenario study across replicates");
    std::string rep_scenarios = "A,B,C,D", rep_shapes = "tall", rep_out, rep_config;
    int rep_R = 10;
    std::uint64_t rep_seed = 1;
    double rep_loading = 2.0;
    rep->add_option("--scenarios", rep_scenarios, "comma list from A,Astar,B,C,D");
    rep->add_option("--shapes", rep_shapes, "comma list from tall,large");
    rep->add_option("--replicates", rep_R, "replicates per cell");
    rep->add_option("--seed", rep_seed, "base seed");
    rep->add_option("--out", rep_out, "output directory")->required();
    rep->add_option("--config", rep_config, "key=value config file");
    rep->add_option("--loading-scale", rep_loading, "sd of true loadings");

    try {
        app.parse(argc, argv);
        if (sim->parsed())
            return run_simulate(sim_scenario, sim_shape, sim_seed, sim_out, sim_loading);
        if (fit->parsed()) return run_fit(ff);
        if (ev->parsed()) return run_evaluate(ev_draws, ev_truth, ev_out);
        if (rep->parsed())
            return run_replicate(rep_scenarios, rep_shapes, rep_R, rep_seed, rep_out,
                                 rep_config, rep_loading);
        return 2;
    } catch (const CLI::ParseError& e) {
        const int code = app.exit(e);
        return code == 0 ? 0 : 2;
    } catch (const usage_error& e) {
        std::cerr << "error: " << e.what() << "\n";
        return 2;
    } catch (const std::invalid_argument& e) {
        std::cerr << "error: " << e.what() << "\n";
        return 2;
    } catch (const numeric_error& e) {
        std::cerr << "numeric failure: " << e.what() << "\n";
        return 3;
    } catch (const std::exception& e) {
        std::cerr << "error: " << e.what() << "\n";
        return 1;
    }
}

}  // namespace apafa
