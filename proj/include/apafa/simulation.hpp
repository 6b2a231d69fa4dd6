#pragma once

#include "apafa/gibbs.hpp"
#include "apafa/types.hpp"

namespace apafa {

enum class Scenario { A, Astar, B, C, D };
enum class Shape { tall, large };

Scenario scenario_from_string(const std::string& s);
std::string to_string(Scenario s);
Shape shape_from_string(const std::string& s);
std::string to_string(Shape s);

struct ScenarioConfig {
    Scenario scenario = Scenario::A;
    Shape shape = Shape::tall;
    std::uint64_t seed = 1;
    double loading_scale = 2.0;
    double noise_shape = 3.0;    // true sigma2 ~ IGa(noise_shape, noise_rate)
    double noise_rate = 1.0;
    int d0 = 3;                  // true shared factor count
    std::vector<int> group_sizes;  // empty = equal thirds of the shape's n

    int n() const;
    int p() const;
    static constexpr int S = 3;
};

std::pair<Dataset, SyntheticTruth> generate_scenario(const ScenarioConfig& cfg);

// Per-replicate metrics for the scenario study report.
struct ReplicateMetrics {
    Scenario scenario;
    Shape shape;
    int replicate = 0;
    std::uint64_t seed = 0;
    double d_mean = 0.0;
    double k_mean = 0.0;
    std::vector<double> rv_omega;   // per truth group
    double rv_shared = 0.0;         // RV for Lambda Lambda^T
    double auc = -1.0;              // -1 when no positive class
    double runtime_seconds = 0.0;
};

struct StudyReport {
    std::vector<ReplicateMetrics> replicates;
    // aggregate rows: one per scenario x shape, Monte Carlo mean and IQR
    struct AggregateRow {
        Scenario scenario;
        Shape shape;
        double d_mean, d_iqr;
        double k_mean, k_iqr;
        std::vector<double> rv_mean, rv_iqr;
        double auc_mean = -1.0, auc_iqr = 0.0;
    };
    std::vector<AggregateRow> aggregates;
};

StudyReport replicate_study(const std::vector<Scenario>& scenarios,
                            const std::vector<Shape>& shapes, int R,
                            const Hyperparameters& hyper, const ChainConfig& cfg,
                            double loading_scale = 2.0);

}  // namespace apafa
