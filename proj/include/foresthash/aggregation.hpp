#pragma once

// Code aggregation: choose k of the M per-tree code blocks so that the chosen
// blocks carry as much information as possible about the blocks left out and,
// optionally, about the class labels.
//
// Each block is treated as a categorical variable (a point's leaf id). Set-level
// mutual information is replaced by the pairwise cross sum
//
//     J(S) = sum_{i in S, j not in S} I(B_i; B_j) + lambda * sum_{i in S} I(B_i; C)
//
// estimated with plug-in entropies. Selection happens once at training time;
// encoding only ever sees the frozen BlockSelection.

#include <cstdint>
#include <span>
#include <string>
#include <vector>

#include <Eigen/Dense>

#include "foresthash/hashcore.hpp"
#include "foresthash/selection.hpp"

namespace foresthash {

/// A code block recoded as leaf ids.
struct LeafVariable {
    std::vector<std::uint32_t> values;
    std::uint32_t arity = 0;

    std::size_t size() const noexcept { return values.size(); }
};

struct AggregationConfig {
    int target_bits = 36;
    double lambda = 1.0;
    SelectionMethod method = SelectionMethod::mi;
    /// Fraction of rows (taken from the front) used for the block-block term.
    double mi_sample_split = 1.0;
    /// Seed for SelectionMethod::random.
    std::uint64_t seed = 0;
};

/// Number of whole blocks that fit in target_bits.
struct BlockBudget {
    int blocks = 0;
    int effective_bits = 0;
    bool exact = true;
};
/// Throws ConfigError when not even one block fits.
BlockBudget block_budget(int target_bits, const TreeShape& shape);

/// Throws ValidationError if any row is not a valid path code.
LeafVariable block_to_leaf_variable(const CodeBlock& block);

/// Plug-in entropy in bits. Throws ValidationError when all counts are zero.
double entropy(std::span<const std::uint64_t> counts);

/// I(X;Y) = H(X) + H(Y) - H(X,Y) from empirical joint counts.
/// Throws ValidationError on length mismatch or empty variables.
double pairwise_mi(const LeafVariable& x, const LeafVariable& y);

/// I(X;C) over rows where labeled_mask is nonzero (an empty mask means all rows).
/// Throws ValidationError when no row is labeled.
double label_mi(const LeafVariable& x, std::span<const std::int32_t> labels,
                std::span<const std::uint8_t> labeled_mask = {});

/// Symmetric M x M matrix of pairwise_mi; the diagonal holds H(B_i).
Eigen::MatrixXd mi_matrix(std::span<const LeafVariable> blocks, unsigned threads = 0);

/// J(S) as above.
double objective(std::span<const std::uint32_t> selected, const Eigen::MatrixXd& mi,
                 const Eigen::VectorXd& label_mi, double lambda);

/// k rounds, each adding the block that maximizes J; ties go to the lowest index.
/// Throws ConfigError when k > M.
BlockSelection greedy_select(const Eigen::MatrixXd& mi, const Eigen::VectorXd& label_mi, int k,
                             double lambda);

/// Global maximizer over all k-subsets; ties go to the lexicographically smallest.
/// Throws ConfigError when k > M or C(M, k) > 10^6.
BlockSelection exhaustive_select(const Eigen::MatrixXd& mi, const Eigen::VectorXd& label_mi, int k,
                                 double lambda);

/// Uniform k-subset, ascending. Throws ConfigError when k > M.
BlockSelection random_select(int num_blocks, int k, std::uint64_t seed);

struct AggregationResult {
    BlockSelection selection;
    BlockBudget budget;
    std::vector<std::string> warnings;
};

/// Full training-time aggregation from code blocks. labels may be empty
/// (unsupervised; the label term is then dropped) or hold one id per row.
AggregationResult aggregate(std::span<const CodeBlock> blocks, std::span<const std::int32_t> labels,
                            std::span<const std::uint8_t> labeled_mask, const AggregationConfig& config,
                            unsigned threads = 0);

}  // namespace foresthash
