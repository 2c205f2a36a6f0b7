#include "foresthash/aggregation.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <numeric>
#include <random>

#include "foresthash/parallel.hpp"

namespace foresthash {

BlockBudget block_budget(int target_bits, const TreeShape& shape) {
    const int width = shape.node_count();
    BlockBudget b;
    b.blocks = target_bits / width;
    if (b.blocks < 1)
        throw ConfigError("target of " + std::to_string(target_bits) + " bits is shorter than one " +
                          std::to_string(width) + "-bit block");
    b.effective_bits = b.blocks * width;
    b.exact = b.effective_bits == target_bits;
    return b;
}

LeafVariable block_to_leaf_variable(const CodeBlock& block) {
    LeafVariable v;
    v.arity = static_cast<std::uint32_t>(block.shape.leaf_count());
    v.values.resize(block.size());
    for (std::size_t i = 0; i < block.size(); ++i) v.values[i] = path_to_leaf(block.codes.row(i), block.shape);
    return v;
}

double entropy(std::span<const std::uint64_t> counts) {
    const auto total = std::accumulate(counts.begin(), counts.end(), std::uint64_t{0});
    if (total == 0) throw ValidationError("entropy: histogram is empty");
    const double n = static_cast<double>(total);
    double h = 0.0;
    for (auto c : counts) {
        if (c == 0) continue;
        const double p = static_cast<double>(c) / n;
        h -= p * std::log2(p);
    }
    return h;
}

namespace {

constexpr std::uint64_t kDenseJointLimit = std::uint64_t{1} << 20;

/// Plug-in I(X;Y) over the rows listed in `rows` (all rows when empty).
double mutual_information(std::span<const std::uint32_t> x, std::uint32_t arity_x,
                          std::span<const std::uint32_t> y, std::uint32_t arity_y,
                          std::span<const std::size_t> rows) {
    const std::size_t n = rows.empty() ? x.size() : rows.size();
    auto row = [&](std::size_t i) { return rows.empty() ? i : rows[i]; };

    std::vector<std::uint64_t> cx(arity_x, 0), cy(arity_y, 0);
    for (std::size_t i = 0; i < n; ++i) {
        ++cx[x[row(i)]];
        ++cy[y[row(i)]];
    }

    double h_joint;
    const std::uint64_t cells = std::uint64_t{arity_x} * arity_y;
    if (cells <= kDenseJointLimit) {
        std::vector<std::uint64_t> joint(cells, 0);
        for (std::size_t i = 0; i < n; ++i) ++joint[std::uint64_t{x[row(i)]} * arity_y + y[row(i)]];
        h_joint = entropy(joint);
    } else {
        std::vector<std::uint64_t> keys(n);
        for (std::size_t i = 0; i < n; ++i) keys[i] = std::uint64_t{x[row(i)]} * arity_y + y[row(i)];
        std::sort(keys.begin(), keys.end());
        std::vector<std::uint64_t> runs;
        for (std::size_t i = 0; i < n;) {
            std::size_t j = i;
            while (j < n && keys[j] == keys[i]) ++j;
            runs.push_back(j - i);
            i = j;
        }
        h_joint = entropy(runs);
    }
    // Rounding can push an exact zero slightly negative.
    return std::max(0.0, entropy(cx) + entropy(cy) - h_joint);
}

void check_values(const LeafVariable& v) {
    for (auto value : v.values)
        if (value >= v.arity) throw ValidationError("leaf variable value exceeds its arity");
}

std::uint64_t binomial(int n, int k) {
    std::uint64_t c = 1;
    for (int i = 1; i <= k; ++i) {
        c = c * static_cast<std::uint64_t>(n - k + i) / static_cast<std::uint64_t>(i);
        if (c > (std::uint64_t{1} << 40)) return c;
    }
    return c;
}

void check_selection_size(int k, Eigen::Index m) {
    if (k < 0) throw ConfigError("number of blocks to select must be >= 0");
    if (k > m)
        throw ConfigError("cannot select " + std::to_string(k) + " blocks from " + std::to_string(m));
}

}  // namespace

double pairwise_mi(const LeafVariable& x, const LeafVariable& y) {
    if (x.size() != y.size())
        throw ValidationError("pairwise_mi: variables have different lengths (" +
                              std::to_string(x.size()) + " vs " + std::to_string(y.size()) + ")");
    if (x.size() == 0) throw ValidationError("pairwise_mi: empty variables");
    check_values(x);
    check_values(y);
    return mutual_information(x.values, x.arity, y.values, y.arity, {});
}

double label_mi(const LeafVariable& x, std::span<const std::int32_t> labels,
                std::span<const std::uint8_t> labeled_mask) {
    if (labels.size() != x.size())
        throw ValidationError("label_mi: " + std::to_string(labels.size()) + " labels for " +
                              std::to_string(x.size()) + " rows");
    if (!labeled_mask.empty() && labeled_mask.size() != x.size())
        throw ValidationError("label_mi: mask length does not match row count");
    check_values(x);

    std::vector<std::size_t> rows;
    for (std::size_t i = 0; i < x.size(); ++i)
        if (labeled_mask.empty() || labeled_mask[i]) rows.push_back(i);
    if (rows.empty()) throw ValidationError("label_mi: no labeled rows");

    std::vector<std::uint32_t> classes(x.size(), 0);
    std::uint32_t arity = 0;
    for (auto r : rows) {
        if (labels[r] < 0) throw ValidationError("label_mi: negative class id");
        classes[r] = static_cast<std::uint32_t>(labels[r]);
        arity = std::max(arity, classes[r] + 1);
    }
    return mutual_information(x.values, x.arity, classes, arity, rows);
}

Eigen::MatrixXd mi_matrix(std::span<const LeafVariable> blocks, unsigned threads) {
    const auto m = static_cast<Eigen::Index>(blocks.size());
    Eigen::MatrixXd mi = Eigen::MatrixXd::Zero(m, m);
    parallel_for(blocks.size(), threads, [&](std::size_t i) {
        for (std::size_t j = i; j < blocks.size(); ++j) {
            const double v = pairwise_mi(blocks[i], blocks[j]);
            mi(static_cast<Eigen::Index>(i), static_cast<Eigen::Index>(j)) = v;
            mi(static_cast<Eigen::Index>(j), static_cast<Eigen::Index>(i)) = v;
        }
    });
    return mi;
}

double objective(std::span<const std::uint32_t> selected, const Eigen::MatrixXd& mi,
                 const Eigen::VectorXd& label_mi, double lambda) {
    const auto m = mi.rows();
    std::vector<bool> in(static_cast<std::size_t>(m), false);
    for (auto i : selected) in[i] = true;

    double cross = 0.0, label = 0.0;
    for (auto i : selected) {
        for (Eigen::Index j = 0; j < m; ++j)
            if (!in[static_cast<std::size_t>(j)]) cross += mi(i, j);
        label += label_mi(i);
    }
    return cross + lambda * label;
}

BlockSelection greedy_select(const Eigen::MatrixXd& mi, const Eigen::VectorXd& label_mi, int k,
                             double lambda) {
    const auto m = mi.rows();
    check_selection_size(k, m);

    BlockSelection sel;
    sel.method = SelectionMethod::mi;
    std::vector<bool> taken(static_cast<std::size_t>(m), false);
    double value = 0.0;
    for (int round = 0; round < k; ++round) {
        std::uint32_t best = 0;
        double best_value = -std::numeric_limits<double>::infinity();
        std::vector<std::uint32_t> trial = sel.indices;
        trial.push_back(0);
        for (Eigen::Index b = 0; b < m; ++b) {
            if (taken[static_cast<std::size_t>(b)]) continue;
            trial.back() = static_cast<std::uint32_t>(b);
            const double v = objective(trial, mi, label_mi, lambda);
            if (v > best_value) {
                best_value = v;
                best = static_cast<std::uint32_t>(b);
            }
        }
        sel.indices.push_back(best);
        taken[best] = true;
        value = best_value;
    }
    sel.objective_value = k == 0 ? 0.0 : value;
    return sel;
}

BlockSelection exhaustive_select(const Eigen::MatrixXd& mi, const Eigen::VectorXd& label_mi, int k,
                                 double lambda) {
    const auto m = static_cast<int>(mi.rows());
    check_selection_size(k, m);
    if (binomial(m, k) > 1'000'000)
        throw ConfigError("exhaustive_select: C(" + std::to_string(m) + ", " + std::to_string(k) +
                          ") subsets exceeds the 10^6 budget");

    // Lexicographic enumeration of k-subsets; strict improvement keeps the first optimum.
    std::vector<std::uint32_t> subset(static_cast<std::size_t>(k));
    std::iota(subset.begin(), subset.end(), 0u);
    BlockSelection best{subset, objective(subset, mi, label_mi, lambda), SelectionMethod::mi};
    while (true) {
        int pos = k - 1;
        while (pos >= 0 && subset[static_cast<std::size_t>(pos)] == static_cast<std::uint32_t>(m - k + pos)) --pos;
        if (pos < 0) break;
        ++subset[static_cast<std::size_t>(pos)];
        for (int j = pos + 1; j < k; ++j)
            subset[static_cast<std::size_t>(j)] = subset[static_cast<std::size_t>(j - 1)] + 1;
        const double v = objective(subset, mi, label_mi, lambda);
        if (v > *best.objective_value) {
            best.indices = subset;
            best.objective_value = v;
        }
    }
    return best;
}

BlockSelection random_select(int num_blocks, int k, std::uint64_t seed) {
    check_selection_size(k, num_blocks);
    std::mt19937_64 rng(seed);
    std::vector<std::uint32_t> pool(static_cast<std::size_t>(num_blocks));
    std::iota(pool.begin(), pool.end(), 0u);
    for (std::size_t i = 0; i < static_cast<std::size_t>(k); ++i) {
        std::uniform_int_distribution<std::size_t> pick(i, pool.size() - 1);
        std::swap(pool[i], pool[pick(rng)]);
    }
    pool.resize(static_cast<std::size_t>(k));
    std::sort(pool.begin(), pool.end());
    return BlockSelection{pool, std::nullopt, SelectionMethod::random};
}

AggregationResult aggregate(std::span<const CodeBlock> blocks, std::span<const std::int32_t> labels,
                            std::span<const std::uint8_t> labeled_mask, const AggregationConfig& config,
                            unsigned threads) {
    if (blocks.empty()) throw ValidationError("aggregate: no code blocks");
    if (config.lambda < 0.0) throw ConfigError("lambda must be >= 0");
    if (!(config.mi_sample_split > 0.0 && config.mi_sample_split <= 1.0))
        throw ConfigError("mi_sample_split must be in (0, 1]");

    AggregationResult result;
    result.budget = block_budget(config.target_bits, blocks.front().shape);
    if (!result.budget.exact)
        result.warnings.push_back("target of " + std::to_string(config.target_bits) +
                                  " bits is not a multiple of " +
                                  std::to_string(blocks.front().shape.node_count()) + "; using " +
                                  std::to_string(result.budget.blocks) + " blocks (" +
                                  std::to_string(result.budget.effective_bits) + " bits)");
    const int k = result.budget.blocks;
    const auto m = static_cast<int>(blocks.size());
    check_selection_size(k, m);

    if (config.method == SelectionMethod::random) {
        result.selection = random_select(m, k, config.seed);
        return result;
    }

    std::vector<LeafVariable> vars(blocks.size());
    parallel_for(blocks.size(), threads, [&](std::size_t i) { vars[i] = block_to_leaf_variable(blocks[i]); });
    const std::size_t n = vars.front().size();
    if (n == 0) throw ValidationError("aggregate: code blocks are empty");

    // Block-block term on the leading fraction of rows; block-label term on the labeled rows.
    std::vector<LeafVariable> head = vars;
    const auto n_head = std::max<std::size_t>(
        1, static_cast<std::size_t>(std::ceil(config.mi_sample_split * static_cast<double>(n))));
    for (auto& v : head) v.values.resize(n_head);
    const Eigen::MatrixXd mi = mi_matrix(head, threads);

    Eigen::VectorXd lmi = Eigen::VectorXd::Zero(m);
    const bool supervised = !labels.empty() && config.lambda > 0.0;
    if (supervised)
        parallel_for(vars.size(), threads, [&](std::size_t i) {
            lmi(static_cast<Eigen::Index>(i)) = label_mi(vars[i], labels, labeled_mask);
        });

    result.selection = greedy_select(mi, lmi, k, supervised ? config.lambda : 0.0);
    return result;
}

}  // namespace foresthash
