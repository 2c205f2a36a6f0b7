#pragma once

// Random forests whose trees act as hash functions. Each tree is a complete
// binary tree of fixed depth; a point's code is the set of non-root nodes it
// visits on its way to a leaf.
//
// Randomness enters in three places: every tree sees its own random subset of
// the training data, every internal node randomly bipartitions the classes
// that reach it, and stump nodes pick the best of a random candidate pool.

#include <cstdint>
#include <optional>
#include <random>
#include <span>
#include <utility>
#include <variant>
#include <vector>

#include "foresthash/hashcore.hpp"
#include "foresthash/subspace.hpp"

namespace foresthash {

using Rng = std::mt19937_64;
using Features = RowMatrix<double>;
using FeatureRow = Eigen::Ref<const Eigen::RowVectorXd>;

enum class Splitter : std::uint8_t { stump = 0, subspace = 1 };

struct ForestConfig {
    int num_trees = 64;
    int depth = 3;
    Splitter splitter = Splitter::subspace;
    int subspace_rank = 3;
    double sample_fraction = 0.5;
    int stump_candidates = 100;
    int min_node_samples = 4;
    std::uint64_t master_seed = 0;

    /// Throws ConfigError on any out-of-range field, or when subspace_rank > feature_dim.
    void validate(Eigen::Index feature_dim) const;

    friend bool operator==(const ForestConfig&, const ForestConfig&) = default;
};

struct Dataset {
    Features features;                              // N x D
    std::optional<std::vector<std::int32_t>> labels;  // N class ids in [0, num_classes)
    int num_classes = 0;

    Eigen::Index size() const { return features.rows(); }
    Eigen::Index dim() const { return features.cols(); }

    /// Throws ValidationError on non-finite features or inconsistent labels.
    void validate() const;
    /// Rows in the given order. Labels follow when present.
    Dataset subset(std::span<const std::size_t> rows) const;
};

enum class Branch : std::uint8_t { left = 0, right = 1 };

struct Stump {
    std::uint32_t feature = 0;
    double threshold = 0.0;

    friend bool operator==(const Stump&, const Stump&) = default;
};

/// Routes to the side whose affine subspace reconstructs x with the smaller residual.
struct SubspaceSplit {
    AffineSubspace<double> left;
    AffineSubspace<double> right;

    friend bool operator==(const SubspaceSplit&, const SubspaceSplit&) = default;
};

struct Passthrough {
    Branch branch = Branch::left;

    friend bool operator==(const Passthrough&, const Passthrough&) = default;
};

using SplitModel = std::variant<Stump, SubspaceSplit, Passthrough>;

struct Tree {
    TreeShape shape{2};
    Eigen::Index feature_dim = 0;
    std::vector<SplitModel> splits;  // heap indices 0 .. shape.internal_count()-1

    friend bool operator==(const Tree&, const Tree&) = default;
};

struct Forest {
    ForestConfig config;
    Eigen::Index feature_dim = 0;
    std::vector<Tree> trees;

    TreeShape shape() const { return TreeShape(config.depth); }

    friend bool operator==(const Forest&, const Forest&) = default;
};

/// Per-tree seed from the forest seed (splitmix64 finalizer over master + index).
std::uint64_t derive_seed(std::uint64_t master_seed, std::uint64_t index) noexcept;

struct GroupCounts {
    std::size_t group0 = 0;
    std::size_t group1 = 0;

    std::size_t total() const noexcept { return group0 + group1; }
};

/// Entropy reduction of the binary group variable, in bits.
double info_gain(GroupCounts parent, GroupCounts left, GroupCounts right);

/// Random split of the classes present at a node into two non-empty groups.
/// With a single class returns ({c}, {}). Throws ValidationError on an empty set.
std::pair<std::vector<std::int32_t>, std::vector<std::int32_t>> bipartition_classes(
    std::span<const std::int32_t> classes, Rng& rng);

/// Best of `candidates` random (feature, threshold) stumps by info_gain over
/// group_of (0/1 per sample row). Passthrough(left) when all rows are identical
/// or only one group is present.
SplitModel fit_stump(const Features& samples, std::span<const std::uint8_t> group_of,
                     int candidates, Rng& rng);

/// Mean and rank-limited principal subspace for each group. Throws
/// ValidationError when a group has no samples.
SplitModel fit_subspace(const Features& samples, std::span<const std::uint8_t> group_of, int rank);

/// Stump: left iff x[feature] <= threshold. Subspace: left iff residual_left <= residual_right,
/// evaluated as residual_left^2 - residual_right^2 <= 0 (see ResidualGap).
/// Throws ValidationError when x does not fit the split's dimension.
Branch route(const SplitModel& split, const FeatureRow& x);

/// Trains num_trees trees in parallel; the result depends only on (data, config).
/// Throws ValidationError on empty/unlabeled data and ConfigError on a single class
/// or invalid configuration.
Forest train_forest(const Dataset& data, const ForestConfig& config, unsigned threads = 0);

/// Leaf reached by x. Does not validate x.
std::uint32_t leaf_index(const Tree& tree, const FeatureRow& x);

/// Throws ValidationError on dimension mismatch or non-finite input.
PathCode encode_point(const Tree& tree, const FeatureRow& x);
std::vector<PathCode> encode_forest(const Forest& forest, const FeatureRow& x);

/// Batch encoder. Subspace splits of every tree are stacked into one
/// projection matrix so that a tile of points is projected with a single
/// matrix product. Tiles have a fixed size, so results do not depend on the
/// thread count.
class ForestEncoder {
public:
    explicit ForestEncoder(const Forest& forest);

    const TreeShape& shape() const { return shape_; }
    Eigen::Index feature_dim() const { return feature_dim_; }
    std::size_t num_trees() const { return num_trees_; }

    /// One CodeBlock per tree, each with one row per data row.
    /// Throws ValidationError on dimension mismatch or non-finite input.
    std::vector<CodeBlock> encode(const Features& features, unsigned threads = 0) const;

private:
    struct Node {
        enum class Kind : std::uint8_t { stump, subspace, passthrough } kind = Kind::passthrough;
        Branch branch = Branch::left;
        std::uint32_t feature = 0;
        double threshold = 0.0;
        Eigen::Index column = 0;  // first projection column of a subspace node
        std::size_t gap = 0;      // index into gaps_
    };

    TreeShape shape_;
    Eigen::Index feature_dim_ = 0;
    std::size_t num_trees_ = 0;
    std::vector<Node> nodes_;  // num_trees x internal_count
    std::vector<ResidualGapTerms<double>> gaps_;
    Matrix<double> projection_;  // D x total width
};

/// ForestEncoder(forest).encode(features, threads).
std::vector<CodeBlock> encode_dataset(const Forest& forest, const Features& features,
                                      unsigned threads = 0);

}  // namespace foresthash
