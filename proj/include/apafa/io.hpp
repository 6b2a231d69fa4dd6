#pragma once

#include "apafa/evaluation.hpp"
#include "apafa/gibbs.hpp"
#include "apafa/simulation.hpp"
#include "apafa/types.hpp"

#include <filesystem>
#include <map>
#include <optional>
#include <string>

namespace apafa {

// Thrown for malformed input files / flags; the CLI maps it to exit code 2.
class usage_error : public std::runtime_error {
public:
    explicit usage_error(const std::string& what) : std::runtime_error(what) {}
};

struct CsvDataset {
    Dataset data;
    std::vector<std::string> group_labels;   // column index -> label
};

// Data CSV: header y1..yp, `group` (optionally `group:lab1|lab2|...`), then
// optional z1..zq. Missing y cells are empty fields.
CsvDataset read_dataset_csv(const std::filesystem::path& path, bool strict_labels = false,
                            OutcomeKind kind = OutcomeKind::continuous);

void write_dataset_csv(const std::filesystem::path& path, const Dataset& data,
                       const std::vector<std::string>& group_labels);

// Flat key=value config; unknown keys rejected.
struct FitConfig {
    Hyperparameters hyper;
    ChainConfig chain;
    bool hyper_dims_set = false;   // d_max/k_max explicitly configured
};
FitConfig parse_config_text(const std::string& text);
FitConfig read_config_file(const std::filesystem::path& path);

// Draws archive: "APAFDRWS" magic, little-endian header and 64-bit float
// blocks, one variable-size block per draw; companion JSON lists offsets.
void write_draws_archive(const std::filesystem::path& path, const PosteriorDraws& draws,
                         const Dataset& data);
PosteriorDraws read_draws_archive(const std::filesystem::path& path);

void write_truth_json(const std::filesystem::path& path, const SyntheticTruth& truth);
SyntheticTruth read_truth_json(const std::filesystem::path& path);

void write_summary_json(const std::filesystem::path& path, const PosteriorSummary& summary,
                        const PosteriorDraws& draws, const std::vector<int>& switching_flags);

// Atomic write: temp file in the same directory, then rename.
void atomic_write_file(const std::filesystem::path& path, const std::string& contents);

// CLI entry points (exit code semantics: 0 ok, 2 usage, 3 numeric failure).
int cli_main(int argc, char** argv);

}  // namespace apafa
