#include "apafa/simulation.hpp"

#include "apafa/evaluation.hpp"
#include "apafa/identifiability.hpp"
#include "apafa/model.hpp"

#include <algorithm>
#include <map>
#include <numeric>

namespace apafa {

Scenario scenario_from_string(const std::string& s) {
    if (s == "A") return Scenario::A;
    if (s == "Astar" || s == "A*") return Scenario::Astar;
    if (s == "B") return Scenario::B;
    if (s == "C") return Scenario::C;
    if (s == "D") return Scenario::D;
    throw std::invalid_argument("unknown scenario: " + s);
}

std::string to_string(Scenario s) {
    switch (s) {
        case Scenario::A: return "A";
        case Scenario::Astar: return "Astar";
        case Scenario::B: return "B";
        case Scenario::C: return "C";
        case Scenario::D: return "D";
    }
    return "?";
}

Shape shape_from_string(const std::string& s) {
    if (s == "tall") return Shape::tall;
    if (s == "large") return Shape::large;
    throw std::invalid_argument("unknown shape: " + s);
}

std::string to_string(Shape s) { return s == Shape::tall ? "tall" : "large"; }

int ScenarioConfig::n() const {
    if (!group_sizes.empty())
        return std::accumulate(group_sizes.begin(), group_sizes.end(), 0);
    return shape == Shape::tall ? 60 : 45;
}

int ScenarioConfig::p() const { return shape == Shape::tall ? 10 : 60; }

namespace {

// true activation pattern per scenario; columns are specific factors
Matrix scenario_pattern(Scenario sc, const std::vector<int>& study, int n) {
    const int k0 = sc == Scenario::B ? 0 : 3;
    Matrix Psi = Matrix::Zero(n, k0);
    switch (sc) {
        case Scenario::A:
        case Scenario::Astar:
            for (int i = 0; i < n; ++i) Psi(i, study[i]) = 1.0;
            break;
        case Scenario::B:
            break;
        case Scenario::C:
            // supports {1}, {2}, {2,3}
            for (int i = 0; i < n; ++i) {
                if (study[i] == 0) Psi(i, 0) = 1.0;
                if (study[i] == 1) Psi(i, 1) = 1.0;
                if (study[i] == 1 || study[i] == 2) Psi(i, 2) = 1.0;
            }
            break;
        case Scenario::D: {
            // first (contiguous) half of each study loads its factor
            std::vector<int> seen(3, 0), sizes(3, 0);
            for (int i = 0; i < n; ++i) ++sizes[study[i]];
            for (int i = 0; i < n; ++i) {
                const int s = study[i];
                if (seen[s] < sizes[s] / 2) Psi(i, s) = 1.0;
                ++seen[s];
            }
            break;
        }
    }
    return Psi;
}

}  // namespace

std::pair<Dataset, SyntheticTruth> generate_scenario(const ScenarioConfig& cfg) {
    const int n = cfg.n(), p = cfg.p(), S = ScenarioConfig::S;
    std::vector<int> sizes = cfg.group_sizes;
    if (sizes.empty()) sizes.assign(S, n / S);
    if (std::accumulate(sizes.begin(), sizes.end(), 0) != n)
        throw std::invalid_argument("generate_scenario: group sizes must sum to n");

    std::vector<int> study;
    study.reserve(n);
    for (int s = 0; s < S; ++s) study.insert(study.end(), sizes[s], s);

    Rng rng(cfg.seed);
    SyntheticTruth truth;
    truth.study_labels = study;

    truth.Lambda_true.resize(p, cfg.d0);
    for (int h = 0; h < cfg.d0; ++h)
        for (int j = 0; j < p; ++j) truth.Lambda_true(j, h) = rng.normal(0.0, cfg.loading_scale);

    truth.Psi_true = scenario_pattern(cfg.scenario, study, n);
    const int k0 = static_cast<int>(truth.Psi_true.cols());
    truth.Gamma_true.resize(p, k0);
    if (k0 > 0) {
        do {
            for (int h = 0; h < k0; ++h)
                for (int j = 0; j < p; ++j)
                    truth.Gamma_true(j, h) = rng.normal(0.0, cfg.loading_scale);
        } while (!check_rank_condition(truth.Gamma_true).holds);
    }

    truth.sigma2_true.resize(p);
    for (int j = 0; j < p; ++j)
        truth.sigma2_true(j) = rng.inv_gamma(cfg.noise_shape, cfg.noise_rate);

    Dataset data;
    data.Y.resize(n, p);
    for (int i = 0; i < n; ++i) {
        Vector eta(cfg.d0);
        for (int h = 0; h < cfg.d0; ++h) eta(h) = rng.normal();
        Vector phi(k0);
        for (int h = 0; h < k0; ++h)
            phi(h) = truth.Psi_true(i, h) > 0.5 ? rng.normal() : 0.0;
        Vector mean = truth.Lambda_true * eta;
        if (k0 > 0) mean.noalias() += truth.Gamma_true * phi;
        for (int j = 0; j < p; ++j)
            data.Y(i, j) = mean(j) + rng.normal(0.0, std::sqrt(truth.sigma2_true(j)));
    }

    if (cfg.scenario == Scenario::Astar) {
        data.X = Matrix::Ones(n, 1);  // labels withheld
    } else {
        data.X = Matrix::Zero(n, S);
        for (int i = 0; i < n; ++i) data.X(i, study[i]) = 1.0;
    }
    data.missing_mask = BoolMatrix::Constant(n, p, false);
    data.outcome_kind = OutcomeKind::continuous;

    // truth groups: distinct (study, pattern) combinations in appearance order
    std::map<std::pair<int, std::string>, int> group_of;
    truth.group_labels.resize(n);
    for (int i = 0; i < n; ++i) {
        std::string pat(static_cast<std::size_t>(k0), '0');
        for (int h = 0; h < k0; ++h)
            if (truth.Psi_true(i, h) > 0.5) pat[static_cast<std::size_t>(h)] = '1';
        const auto key = std::make_pair(study[i], pat);
        auto it = group_of.find(key);
        if (it == group_of.end()) {
            const int g = static_cast<int>(truth.Omega_by_group.size());
            it = group_of.emplace(key, g).first;
            truth.Omega_by_group.push_back(assemble_marginal_covariance(
                truth.Lambda_true, truth.Gamma_true, truth.Psi_true.row(i).transpose(),
                truth.sigma2_true));
        }
        truth.group_labels[i] = it->second;
    }

    return {std::move(data), std::move(truth)};
}

StudyReport replicate_study(const std::vector<Scenario>& scenarios,
                            const std::vector<Shape>& shapes, int R,
                            const Hyperparameters& hyper, const ChainConfig& cfg,
                            double loading_scale) {
    StudyReport report;
    int row = 0;
    for (const Shape shape : shapes) {
        for (const Scenario sc : scenarios) {
            std::vector<ReplicateMetrics> reps;
            for (int r = 0; r < R; ++r) {
                ScenarioConfig scfg;
                scfg.scenario = sc;
                scfg.shape = shape;
                scfg.loading_scale = loading_scale;
                scfg.seed = cfg.seed + 1000003ULL * static_cast<std::uint64_t>(row) +
                            static_cast<std::uint64_t>(r);
                auto [data, truth] = generate_scenario(scfg);

                Hyperparameters h = hyper;
                const int cap = Hyperparameters::truncation_cap(scfg.p());
                h.d_max = std::min(h.d_max, cap);
                h.k_max = std::min(h.k_max, cap);
                ChainConfig ccfg = cfg;
                ccfg.seed = scfg.seed + 17;

                const PosteriorDraws draws = run_chain(data, h, ccfg);
                const PosteriorSummary summary = posterior_summary(draws);
                const CovarianceRecovery rec = evaluate_covariance_recovery(draws, truth);
                const RocResult roc = psi_recovery_roc(draws, truth, true);

                ReplicateMetrics m;
                m.scenario = sc;
                m.shape = shape;
                m.replicate = r;
                m.seed = scfg.seed;
                m.d_mean = summary.d_mean;
                m.k_mean = summary.k_mean;
                m.rv_omega = rec.rv_omega;
                m.rv_shared = rec.rv_shared;
                m.auc = roc.has_positive_class ? roc.auc : -1.0;
                m.runtime_seconds = draws.meta.runtime_seconds;
                reps.push_back(m);
                report.replicates.push_back(std::move(m));
            }

            StudyReport::AggregateRow agg;
            agg.scenario = sc;
            agg.shape = shape;
            auto collect = [&](auto getter) {
                std::vector<double> v;
                for (const auto& m : reps) v.push_back(getter(m));
                return v;
            };
            auto mean_of = [](const std::vector<double>& v) {
                double s = 0.0;
                for (double x : v) s += x;
                return s / static_cast<double>(v.size());
            };
            const auto dv = collect([](const ReplicateMetrics& m) { return m.d_mean; });
            const auto kv = collect([](const ReplicateMetrics& m) { return m.k_mean; });
            agg.d_mean = mean_of(dv);
            agg.d_iqr = interquartile_range(dv);
            agg.k_mean = mean_of(kv);
            agg.k_iqr = interquartile_range(kv);
            std::size_t n_groups = 0;
            for (const auto& m : reps) n_groups = std::max(n_groups, m.rv_omega.size());
            for (std::size_t g = 0; g < n_groups; ++g) {
                std::vector<double> v;
                for (const auto& m : reps)
                    if (g < m.rv_omega.size()) v.push_back(m.rv_omega[g]);
                agg.rv_mean.push_back(mean_of(v));
                agg.rv_iqr.push_back(interquartile_range(v));
            }
            std::vector<double> aucs;
            for (const auto& m : reps)
                if (m.auc >= 0.0) aucs.push_back(m.auc);
            if (!aucs.empty()) {
                agg.auc_mean = mean_of(aucs);
                agg.auc_iqr = interquartile_range(aucs);
            }
            report.aggregates.push_back(std::move(agg));
            ++row;
        }
    }
    return report;
}

}  // namespace apafa
