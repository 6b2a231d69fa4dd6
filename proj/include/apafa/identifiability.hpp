#pragma once

#include "apafa/types.hpp"

namespace apafa {

struct RankCondition {
    bool holds = false;
    int rank = 0;
    int bound = 0;   // p(p+1)/2
};

// Full column rank k with k < p(p+1)/2 (numerical rank via singular values).
RankCondition check_rank_condition(const Matrix& Gamma);

struct NrspcResult {
    bool holds = false;
    std::vector<std::pair<int, int>> duplicate_pairs;
};

// Non-replicable sparsity pattern: all columns of Psi* pairwise distinct.
NrspcResult check_nrspc(const Matrix& Psi_star);

struct SwitchResistance {
    bool unique = false;
    double residual = 0.0;
};

// Certifies the linear system G x = w recovers Psi* uniquely:
// rank(G_s) = k and the least-squares solution matches Psi* entrywise.
SwitchResistance verify_switch_resistance(const Matrix& Gamma, const Matrix& Psi_star);

// Specific columns whose posterior activation is ~1 for every unit
// (a specific factor masquerading as shared).
std::vector<int> detect_information_switching(const PosteriorDraws& draws,
                                              double threshold = 0.9);

// p(p+1)/2 - 1.
long truncation_bound(int p);

// alpha_phi / (p(p+1)/2), clamped to [0,1].
double switching_prior_bound(double alpha_phi, int p);

struct AlignmentResult {
    std::vector<int> permutation;   // aligned column j comes from estimate column permutation[j]
    std::vector<int> signs;         // +1 / -1 per aligned column
    double score = 0.0;             // sum of matched weights
};

// positive_correlation is for activation patterns, which carry no sign
// ambiguity: anti-correlated columns are non-matches, not sign flips.
enum class AlignmentWeight { abs_correlation, abs_cosine, positive_correlation };

// Maximum-weight matching of estimate columns onto reference columns
// (exact assignment when sizes agree, greedy with identity fill otherwise),
// then signs chosen to make matched similarities positive.
AlignmentResult align_factor_columns(const Matrix& estimate, const Matrix& reference,
                                     AlignmentWeight weight = AlignmentWeight::abs_correlation);

// Applies an alignment: out.col(j) = signs[j] * estimate.col(permutation[j])
// (columns beyond the estimate's width are zero).
Matrix apply_alignment(const Matrix& estimate, const AlignmentResult& alignment,
                       Eigen::Index out_cols);

}  // namespace apafa
