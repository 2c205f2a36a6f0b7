#include "foresthash/training.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>
#include <string>

#include "foresthash/parallel.hpp"

namespace foresthash {

void ForestConfig::validate(Eigen::Index feature_dim) const {
    if (num_trees < 1) throw ConfigError("num_trees must be >= 1");
    (void)TreeShape(depth);
    if (subspace_rank < 0) throw ConfigError("subspace_rank must be >= 0");
    if (feature_dim > 0 && subspace_rank > feature_dim)
        throw ConfigError("subspace_rank " + std::to_string(subspace_rank) +
                          " exceeds feature dimension " + std::to_string(feature_dim));
    if (!(sample_fraction > 0.0 && sample_fraction <= 1.0))
        throw ConfigError("sample_fraction must be in (0, 1]");
    if (stump_candidates < 1) throw ConfigError("stump_candidates must be >= 1");
    if (min_node_samples < 2) throw ConfigError("min_node_samples must be >= 2");
}

void Dataset::validate() const {
    if (!features.allFinite()) throw ValidationError("dataset contains non-finite feature values");
    if (!labels) return;
    if (labels->size() != static_cast<std::size_t>(features.rows()))
        throw ValidationError("dataset has " + std::to_string(features.rows()) + " rows but " +
                              std::to_string(labels->size()) + " labels");
    for (auto c : *labels)
        if (c < 0 || c >= num_classes)
            throw ValidationError("label " + std::to_string(c) + " outside [0, " +
                                  std::to_string(num_classes) + ")");
}

Dataset Dataset::subset(std::span<const std::size_t> rows) const {
    Dataset out;
    out.num_classes = num_classes;
    out.features.resize(static_cast<Eigen::Index>(rows.size()), features.cols());
    for (std::size_t i = 0; i < rows.size(); ++i)
        out.features.row(static_cast<Eigen::Index>(i)) = features.row(static_cast<Eigen::Index>(rows[i]));
    if (labels) {
        out.labels.emplace();
        out.labels->reserve(rows.size());
        for (auto r : rows) out.labels->push_back((*labels)[r]);
    }
    return out;
}

std::uint64_t derive_seed(std::uint64_t master_seed, std::uint64_t index) noexcept {
    std::uint64_t z = master_seed + 0x9E3779B97F4A7C15ull * (index + 1);
    z = (z ^ (z >> 30)) * 0xBF58476D1CE4E5B9ull;
    z = (z ^ (z >> 27)) * 0x94D049BB133111EBull;
    return z ^ (z >> 31);
}

namespace {

double binary_entropy(GroupCounts c) {
    const double n = static_cast<double>(c.total());
    if (n == 0.0) return 0.0;
    double h = 0.0;
    for (auto k : {c.group0, c.group1}) {
        if (k == 0) continue;
        const double p = static_cast<double>(k) / n;
        h -= p * std::log2(p);
    }
    return h;
}

}  // namespace

double info_gain(GroupCounts parent, GroupCounts left, GroupCounts right) {
    const double n = static_cast<double>(parent.total());
    if (n == 0.0) return 0.0;
    return binary_entropy(parent) - static_cast<double>(left.total()) / n * binary_entropy(left) -
           static_cast<double>(right.total()) / n * binary_entropy(right);
}

std::pair<std::vector<std::int32_t>, std::vector<std::int32_t>> bipartition_classes(
    std::span<const std::int32_t> classes, Rng& rng) {
    if (classes.empty()) throw ValidationError("bipartition_classes: no classes at node");
    std::vector<std::int32_t> order(classes.begin(), classes.end());
    if (order.size() == 1) return {order, {}};

    std::shuffle(order.begin(), order.end(), rng);
    std::uniform_int_distribution<std::size_t> cut_dist(1, order.size() - 1);
    const auto cut = static_cast<std::ptrdiff_t>(cut_dist(rng));
    return {std::vector<std::int32_t>(order.begin(), order.begin() + cut),
            std::vector<std::int32_t>(order.begin() + cut, order.end())};
}

SplitModel fit_stump(const Features& samples, std::span<const std::uint8_t> group_of, int candidates,
                     Rng& rng) {
    const Eigen::Index n = samples.rows();
    if (static_cast<std::size_t>(n) != group_of.size())
        throw ValidationError("fit_stump: group vector length does not match sample count");

    GroupCounts parent;
    for (auto g : group_of) (g ? parent.group1 : parent.group0)++;
    if (parent.group0 == 0 || parent.group1 == 0) return Passthrough{};

    bool all_identical = true;
    for (Eigen::Index i = 1; i < n && all_identical; ++i)
        all_identical = samples.row(i) == samples.row(0);
    if (all_identical) return Passthrough{};

    std::uniform_int_distribution<Eigen::Index> feature_dist(0, samples.cols() - 1);
    Stump best;
    double best_gain = -1.0;
    for (int t = 0; t < candidates; ++t) {
        const Eigen::Index f = feature_dist(rng);
        const auto column = samples.col(f);
        const double lo = column.minCoeff();
        const double hi = column.maxCoeff();
        const double threshold = lo < hi ? std::uniform_real_distribution<double>(lo, hi)(rng) : lo;

        GroupCounts left, right;
        for (Eigen::Index i = 0; i < n; ++i) {
            auto& side = column(i) <= threshold ? left : right;
            (group_of[static_cast<std::size_t>(i)] ? side.group1 : side.group0)++;
        }
        const double gain = info_gain(parent, left, right);
        if (gain > best_gain) {
            best_gain = gain;
            best = Stump{static_cast<std::uint32_t>(f), threshold};
        }
    }
    return best;
}

SplitModel fit_subspace(const Features& samples, std::span<const std::uint8_t> group_of, int rank) {
    if (static_cast<std::size_t>(samples.rows()) != group_of.size())
        throw ValidationError("fit_subspace: group vector length does not match sample count");

    SubspaceSplit split;
    for (std::uint8_t g : {std::uint8_t{0}, std::uint8_t{1}}) {
        std::vector<Eigen::Index> rows;
        for (std::size_t i = 0; i < group_of.size(); ++i)
            if (group_of[i] == g) rows.push_back(static_cast<Eigen::Index>(i));
        if (rows.empty()) throw ValidationError("fit_subspace: a group has no samples");
        const Features members = samples(rows, Eigen::all);
        (g == 0 ? split.left : split.right) = fit_affine_subspace(members, rank);
    }
    return split;
}

namespace {

Branch route_unchecked(const SplitModel& split, const FeatureRow& x) {
    if (const auto* s = std::get_if<Stump>(&split))
        return x(s->feature) <= s->threshold ? Branch::left : Branch::right;
    if (const auto* s = std::get_if<SubspaceSplit>(&split))
        return make_residual_gap(s->left, s->right)(x) <= 0.0 ? Branch::left : Branch::right;
    return std::get<Passthrough>(split).branch;
}

std::uint32_t leaf_index_unchecked(const Tree& tree, const FeatureRow& x) {
    const auto internal = static_cast<std::size_t>(tree.shape.internal_count());
    std::size_t h = 0;
    while (h < internal) h = 2 * h + 1 + static_cast<std::size_t>(route_unchecked(tree.splits[h], x));
    return static_cast<std::uint32_t>(h - internal);
}

void check_point(Eigen::Index expected_dim, const FeatureRow& x) {
    if (x.size() != expected_dim)
        throw ValidationError("point has dimension " + std::to_string(x.size()) + ", model expects " +
                              std::to_string(expected_dim));
    if (!x.allFinite()) throw ValidationError("point has non-finite values");
}

Tree train_tree(const Dataset& data, const ForestConfig& config, std::uint64_t seed) {
    Rng rng(seed);
    const TreeShape shape(config.depth);
    Tree tree{shape, data.dim(), {}};
    tree.splits.resize(static_cast<std::size_t>(shape.internal_count()));

    // Random subset without replacement (partial Fisher-Yates).
    const auto n = static_cast<std::size_t>(data.size());
    const auto take = static_cast<std::size_t>(std::ceil(config.sample_fraction * static_cast<double>(n)));
    std::vector<std::size_t> pool(n);
    std::iota(pool.begin(), pool.end(), std::size_t{0});
    for (std::size_t i = 0; i < take; ++i) {
        std::uniform_int_distribution<std::size_t> pick(i, n - 1);
        std::swap(pool[i], pool[pick(rng)]);
    }
    pool.resize(take);
    std::sort(pool.begin(), pool.end());

    const auto& labels = *data.labels;
    std::vector<std::vector<std::size_t>> members(tree.splits.size());
    members[0] = std::move(pool);
    for (std::size_t h = 0; h < tree.splits.size(); ++h) {
        const auto& rows = members[h];
        std::vector<std::int32_t> classes;
        for (auto r : rows) classes.push_back(labels[r]);
        std::sort(classes.begin(), classes.end());
        classes.erase(std::unique(classes.begin(), classes.end()), classes.end());

        SplitModel split = Passthrough{};
        if (rows.size() >= static_cast<std::size_t>(config.min_node_samples) && classes.size() >= 2) {
            auto [left_classes, right_classes] = bipartition_classes(classes, rng);
            std::sort(right_classes.begin(), right_classes.end());
            std::vector<std::uint8_t> group_of(rows.size());
            for (std::size_t i = 0; i < rows.size(); ++i)
                group_of[i] = std::binary_search(right_classes.begin(), right_classes.end(), labels[rows[i]]);

            const Features samples = data.features(rows, Eigen::all);
            split = config.splitter == Splitter::stump
                        ? fit_stump(samples, group_of, config.stump_candidates, rng)
                        : fit_subspace(samples, group_of, config.subspace_rank);
        }
        tree.splits[h] = std::move(split);

        const std::size_t left_child = 2 * h + 1;
        if (left_child >= tree.splits.size()) continue;
        std::optional<ResidualGap<double>> gap;
        if (const auto* s = std::get_if<SubspaceSplit>(&tree.splits[h])) gap = make_residual_gap(s->left, s->right);
        for (auto r : rows) {
            const auto x = data.features.row(static_cast<Eigen::Index>(r));
            const auto b = gap ? ((*gap)(x) <= 0.0 ? Branch::left : Branch::right)
                               : route_unchecked(tree.splits[h], x);
            members[left_child + static_cast<std::size_t>(b)].push_back(r);
        }
    }
    return tree;
}

}  // namespace

Branch route(const SplitModel& split, const FeatureRow& x) {
    if (const auto* s = std::get_if<Stump>(&split)) {
        if (s->feature >= x.size())
            throw ValidationError("stump feature " + std::to_string(s->feature) +
                                  " out of range for point of dimension " + std::to_string(x.size()));
    } else if (const auto* s = std::get_if<SubspaceSplit>(&split)) {
        if (s->left.dim() != x.size() || s->right.dim() != x.size())
            throw ValidationError("subspace split has dimension " + std::to_string(s->left.dim()) +
                                  ", point has " + std::to_string(x.size()));
    }
    return route_unchecked(split, x);
}

Forest train_forest(const Dataset& data, const ForestConfig& config, unsigned threads) {
    if (data.size() == 0) throw ValidationError("train_forest: empty dataset");
    if (!data.labels) throw ValidationError("train_forest: dataset has no labels");
    data.validate();
    config.validate(data.dim());
    if (data.size() < config.min_node_samples)
        throw ValidationError("train_forest: " + std::to_string(data.size()) +
                              " samples is fewer than min_node_samples");
    std::vector<std::int32_t> classes(data.labels->begin(), data.labels->end());
    std::sort(classes.begin(), classes.end());
    if (std::unique(classes.begin(), classes.end()) - classes.begin() < 2)
        throw ConfigError("train_forest: training data must contain at least two classes");

    Forest forest{config, data.dim(), std::vector<Tree>(static_cast<std::size_t>(config.num_trees))};
    parallel_for(forest.trees.size(), threads, [&](std::size_t i) {
        forest.trees[i] = train_tree(data, config, derive_seed(config.master_seed, i));
    });
    return forest;
}

std::uint32_t leaf_index(const Tree& tree, const FeatureRow& x) { return leaf_index_unchecked(tree, x); }

PathCode encode_point(const Tree& tree, const FeatureRow& x) {
    check_point(tree.feature_dim, x);
    return leaf_to_path(leaf_index_unchecked(tree, x), tree.shape);
}

std::vector<PathCode> encode_forest(const Forest& forest, const FeatureRow& x) {
    check_point(forest.feature_dim, x);
    std::vector<PathCode> codes;
    codes.reserve(forest.trees.size());
    for (const auto& tree : forest.trees) codes.push_back(leaf_to_path(leaf_index_unchecked(tree, x), tree.shape));
    return codes;
}

ForestEncoder::ForestEncoder(const Forest& forest)
    : shape_(forest.shape()), feature_dim_(forest.feature_dim), num_trees_(forest.trees.size()) {
    const auto internal = static_cast<std::size_t>(shape_.internal_count());
    nodes_.resize(num_trees_ * internal);
    std::vector<Matrix<double>> directions;
    Eigen::Index width = 0;
    for (std::size_t t = 0; t < num_trees_; ++t) {
        const Tree& tree = forest.trees[t];
        if (tree.shape.depth() != shape_.depth() || tree.splits.size() != internal || tree.feature_dim != feature_dim_)
            throw ValidationError("tree " + std::to_string(t) + " does not match the forest shape");
        for (std::size_t h = 0; h < internal; ++h) {
            Node& node = nodes_[t * internal + h];
            const SplitModel& split = tree.splits[h];
            if (const auto* s = std::get_if<Stump>(&split)) {
                if (s->feature >= feature_dim_)
                    throw ValidationError("stump feature " + std::to_string(s->feature) + " out of range");
                node.kind = Node::Kind::stump;
                node.feature = s->feature;
                node.threshold = s->threshold;
            } else if (const auto* s = std::get_if<SubspaceSplit>(&split)) {
                if (s->left.dim() != feature_dim_ || s->right.dim() != feature_dim_)
                    throw ValidationError("subspace split dimension does not match the forest");
                if (s->left == s->right) {
                    node.kind = Node::Kind::passthrough;  // exact tie everywhere
                    continue;
                }
                auto gap = make_residual_gap(s->left, s->right);
                node.kind = Node::Kind::subspace;
                node.column = width;
                node.gap = gaps_.size();
                width += gap.directions.cols();
                directions.push_back(std::move(gap.directions));
                gaps_.push_back(std::move(gap.terms));
            } else {
                node.kind = Node::Kind::passthrough;
                node.branch = std::get<Passthrough>(split).branch;
            }
        }
    }
    projection_.resize(feature_dim_, width);
    Eigen::Index column = 0;
    for (const auto& d : directions) {
        projection_.middleCols(column, d.cols()) = d;
        column += d.cols();
    }
}

std::vector<CodeBlock> ForestEncoder::encode(const Features& features, unsigned threads) const {
    if (features.rows() > 0 && features.cols() != feature_dim_)
        throw ValidationError("data has dimension " + std::to_string(features.cols()) + ", model expects " +
                              std::to_string(feature_dim_));
    if (!features.allFinite()) throw ValidationError("data contains non-finite values");

    const auto n = static_cast<std::size_t>(features.rows());
    const auto internal = static_cast<std::size_t>(shape_.internal_count());
    std::vector<CodeBlock> blocks;
    blocks.reserve(num_trees_);
    for (std::size_t t = 0; t < num_trees_; ++t)
        blocks.push_back(CodeBlock{shape_, CodeMatrix(static_cast<std::size_t>(shape_.node_count()), n)});

    constexpr std::size_t kTile = 64;
    const std::size_t tiles = (n + kTile - 1) / kTile;
    parallel_for(tiles, threads, [&](std::size_t tile) {
        const std::size_t begin = tile * kTile;
        const std::size_t end = std::min(n, begin + kTile);
        const auto rows = static_cast<Eigen::Index>(end - begin);
        RowMatrix<double> z(rows, projection_.cols());
        if (projection_.cols() > 0)
            z.noalias() = features.middleRows(static_cast<Eigen::Index>(begin), rows) * projection_;

        for (std::size_t t = 0; t < num_trees_; ++t) {
            const Node* tree_nodes = nodes_.data() + t * internal;
            for (Eigen::Index i = 0; i < rows; ++i) {
                const auto row = static_cast<Eigen::Index>(begin) + i;
                std::size_t h = 0;
                while (h < internal) {
                    const Node& node = tree_nodes[h];
                    Branch b = node.branch;
                    if (node.kind == Node::Kind::stump)
                        b = features(row, node.feature) <= node.threshold ? Branch::left : Branch::right;
                    else if (node.kind == Node::Kind::subspace)
                        b = gaps_[node.gap].evaluate(&z(i, node.column)) <= 0.0 ? Branch::left : Branch::right;
                    h = 2 * h + 1 + static_cast<std::size_t>(b);
                }
                write_path(blocks[t].codes, static_cast<std::size_t>(row), static_cast<std::uint32_t>(h - internal),
                           shape_);
            }
        }
    });
    return blocks;
}

std::vector<CodeBlock> encode_dataset(const Forest& forest, const Features& features, unsigned threads) {
    return ForestEncoder(forest).encode(features, threads);
}

}  // namespace foresthash
