#include <doctest.h>

#include <algorithm>
#include <cmath>
#include <random>

#include "foresthash/retrieval.hpp"

using namespace foresthash;

namespace {

CodeMatrix random_codes(std::mt19937_64& rng, std::size_t bits, std::size_t rows, double density = 0.5) {
    std::bernoulli_distribution bit(density);
    CodeMatrix m(bits, rows);
    for (std::size_t i = 0; i < rows; ++i)
        for (std::size_t p = 0; p < bits; ++p)
            if (bit(rng)) m.set(i, p);
    return m;
}

CodeMatrix from_strings(const std::vector<std::string>& codes) {
    CodeMatrix m(codes.front().size(), codes.size());
    for (std::size_t i = 0; i < codes.size(); ++i) m.set_code(i, BitVector::from_string(codes[i]));
    return m;
}

Dataset blobs(int classes, int per_class, Eigen::Index dim, std::uint64_t seed) {
    std::mt19937_64 rng(seed);
    std::normal_distribution<double> g;
    Dataset d;
    d.num_classes = classes;
    d.features.resize(classes * per_class, dim);
    d.labels.emplace();
    for (int c = 0; c < classes; ++c)
        for (int k = 0; k < per_class; ++k) {
            for (Eigen::Index j = 0; j < dim; ++j) d.features(c * per_class + k, j) = (j % classes == c ? 3.0 : 0.0) + g(rng);
            d.labels->push_back(c);
        }
    return d;
}

}  // namespace

TEST_CASE("query_radius examples") {
    const auto c = BitVector::from_string("101000");
    RetrievalIndex single{from_strings({"101000"}), {0}};
    CHECK(query_radius(single, c, 0) == std::vector<std::size_t>{0});

    RetrievalIndex three{from_strings({"101000", "100100", "010001"}), {0, 0, 0}};
    CHECK(query_radius(three, c, 2) == std::vector<std::size_t>{0, 1});
    CHECK(query_radius(three, BitVector::from_string("011000"), 0).empty());

    CHECK_THROWS_AS(query_radius(three, BitVector::from_string("1010"), 0), ValidationError);
    CHECK_THROWS_AS(query_radius(three, c, -1), ValidationError);
}

TEST_CASE("query_radius agrees with a brute-force scan") {
    std::mt19937_64 rng(77);
    for (int trial = 0; trial < 30; ++trial) {
        const std::size_t bits = std::vector<std::size_t>{12, 36, 64, 100}[trial % 4];
        const std::size_t n = 1 + rng() % 500;
        RetrievalIndex index{random_codes(rng, bits, n, 0.3), std::vector<std::int32_t>(n, 0)};
        const auto q = random_codes(rng, bits, 1, 0.3).code(0);
        const int r = static_cast<int>(rng() % 6);
        std::vector<std::size_t> expected;
        for (std::size_t i = 0; i < n; ++i)
            if (hamming(index.codes.code(i), q) <= r) expected.push_back(i);
        CHECK(query_radius(index, q, r) == expected);
    }
}

TEST_CASE("evaluate on the four-item example") {
    // Two A at distance 0, one B at distance 0, one A at distance 4.
    RetrievalIndex index{from_strings({"101000", "101000", "101000", "010001"}), {0, 0, 1, 0}};
    const auto queries = from_strings({"101000"});
    const std::vector<std::int32_t> ql{0};
    const auto m = evaluate(index, queries, ql, 0, 1);
    CHECK(m.precision == doctest::Approx(200.0 / 3.0));
    CHECK(m.recall == doctest::Approx(200.0 / 3.0));
    CHECK(m.queries_rejected == 0);
    CHECK(m.num_queries == 1);
    CHECK(m.radius == 0);

    const auto all = evaluate(index, queries, ql, 6, 1);
    CHECK(all.recall == doctest::Approx(100.0));
    CHECK(all.precision == doctest::Approx(75.0));
}

TEST_CASE("evaluate edge cases") {
    std::mt19937_64 rng(3);
    RetrievalIndex index{random_codes(rng, 36, 50), std::vector<std::int32_t>(50, 4)};
    const auto queries = random_codes(rng, 36, 10);
    const std::vector<std::int32_t> ql(10, 4);
    const auto full = evaluate(index, queries, ql, 36);
    CHECK(full.precision == 100.0);
    CHECK(full.recall == 100.0);

    RetrievalIndex zeros{CodeMatrix(36, 5), std::vector<std::int32_t>(5, 4)};
    CodeMatrix ones(36, 3);
    for (std::size_t i = 0; i < 3; ++i)
        for (std::size_t p = 0; p < 36; ++p) ones.set(i, p);
    const auto none = evaluate(zeros, ones, std::vector<std::int32_t>(3, 4), 2);
    CHECK(none.queries_rejected == 3);
    CHECK(none.recall == 0.0);
    CHECK(none.precision == 0.0);

    CHECK_THROWS_AS(evaluate(index, CodeMatrix(36, 0), {}, 0), ValidationError);
    CHECK_THROWS_AS(evaluate(index, queries, std::vector<std::int32_t>(9, 4), 0), ValidationError);
    CHECK_THROWS_AS(evaluate(index, CodeMatrix(12, 1), std::vector<std::int32_t>(1, 4), 0), ValidationError);
    RetrievalIndex misaligned{random_codes(rng, 36, 5), {1, 2}};
    CHECK_THROWS_AS(evaluate(misaligned, queries, ql, 0), ValidationError);
}

TEST_CASE("evaluate matches a per-query oracle and is monotone in r") {
    std::mt19937_64 rng(19);
    const std::size_t n = 300, nq = 40;
    std::vector<std::int32_t> labels(n), ql(nq);
    for (auto& l : labels) l = static_cast<std::int32_t>(rng() % 5);
    for (auto& l : ql) l = static_cast<std::int32_t>(rng() % 6);  // label 5 has no relevant items
    RetrievalIndex index{random_codes(rng, 12, n, 0.2), labels};
    const auto queries = random_codes(rng, 12, nq, 0.2);

    double prev_recall = -1.0;
    std::vector<std::vector<std::size_t>> prev(nq);
    for (int r = 0; r <= 12; ++r) {
        double psum = 0.0, rsum = 0.0;
        std::size_t pn = 0, rn = 0, rejected = 0;
        for (std::size_t q = 0; q < nq; ++q) {
            const auto got = query_radius(index, queries.row(q), r);
            for (auto i : prev[q]) CHECK(std::binary_search(got.begin(), got.end(), i));
            std::size_t hits = 0, relevant = 0;
            for (auto i : got) hits += labels[i] == ql[q];
            for (auto l : labels) relevant += l == ql[q];
            if (got.empty())
                ++rejected;
            else {
                psum += static_cast<double>(hits) / static_cast<double>(got.size());
                ++pn;
            }
            if (relevant) {
                rsum += static_cast<double>(hits) / static_cast<double>(relevant);
                ++rn;
            }
            prev[q] = got;
        }
        const auto m = evaluate(index, queries, ql, r, 3);
        CHECK(m.queries_rejected == rejected);
        CHECK(m.precision == doctest::Approx(pn ? 100.0 * psum / static_cast<double>(pn) : 0.0));
        CHECK(m.recall == doctest::Approx(100.0 * rsum / static_cast<double>(rn)));
        CHECK(m.precision >= 0.0);
        CHECK(m.precision <= 100.0);
        CHECK(m.recall >= prev_recall);
        prev_recall = m.recall;
    }
}

TEST_CASE("hash_dataset concatenates the selected per-tree codes") {
    const auto d = blobs(4, 15, 8, 1);
    ForestConfig cfg;
    cfg.num_trees = 10;
    const auto forest = train_forest(d, cfg, 1);
    const BlockSelection sel{{7, 2, 5}, std::nullopt, SelectionMethod::random};
    const auto codes = hash_dataset(forest, sel, d.features, 2);
    REQUIRE(codes.rows() == 60);
    REQUIRE(codes.bits() == 18);
    for (Eigen::Index i = 0; i < d.size(); ++i) {
        const auto per_tree = encode_forest(forest, d.features.row(i));
        CHECK(codes.code(static_cast<std::size_t>(i)) == concat_codes(per_tree, sel.indices));
    }
}

TEST_CASE("radius 0 on stump codes is exact-code-match retrieval") {
    const auto d = blobs(3, 20, 6, 2);
    ForestConfig cfg;
    cfg.num_trees = 8;
    cfg.splitter = Splitter::stump;
    const auto forest = train_forest(d, cfg, 1);
    const BlockSelection sel{{1, 6}, std::nullopt, SelectionMethod::random};
    const auto codes = hash_dataset(forest, sel, d.features, 1);
    RetrievalIndex index{codes, *d.labels};
    for (std::size_t q = 0; q < codes.rows(); ++q) {
        std::vector<std::size_t> exact;
        for (std::size_t i = 0; i < codes.rows(); ++i)
            if (codes.code(i) == codes.code(q)) exact.push_back(i);
        CHECK(query_radius(index, codes.row(q), 0) == exact);
    }
}

TEST_CASE("bench_encode sanity") {
    const auto d = blobs(5, 40, 64, 3);
    ForestConfig cfg;
    cfg.num_trees = 64;
    cfg.master_seed = 5;
    const auto big = train_forest(d, cfg, 1);
    Forest small = big;
    small.trees.resize(6);
    small.config.num_trees = 6;
    const BlockSelection sel{{0, 1, 2, 3, 4, 5}, std::nullopt, SelectionMethod::random};

    const auto t = bench_encode(big, sel, d.features, 3, 1);
    CHECK(t.repetitions == 3);
    CHECK(t.mean_us > 0.0);
    CHECK(std::isfinite(t.mean_us));
    CHECK(t.stddev_us >= 0.0);

    double t_small = 0.0, t_big = 0.0;
    for (int run = 0; run < 10; ++run) {
        t_small += bench_encode(small, sel, d.features, 1, 1).mean_us;
        t_big += bench_encode(big, sel, d.features, 1, 1).mean_us;
    }
    CHECK(t_small < t_big);

    CHECK_THROWS_AS(bench_encode(big, sel, RowMatrix<double>(0, 64), 1), ValidationError);
    CHECK_THROWS_AS(bench_encode(big, sel, d.features, 0), ValidationError);
}
