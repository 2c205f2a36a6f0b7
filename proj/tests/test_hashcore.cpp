#include <doctest.h>

#include <random>
#include <set>

#include "foresthash/hashcore.hpp"

using namespace foresthash;

namespace {

// Reference path: walk down from the root choosing the child on the way to the leaf.
BitVector reference_path(std::uint32_t leaf, int depth) {
    const TreeShape shape(depth);
    BitVector code(static_cast<std::size_t>(shape.node_count()));
    std::size_t h = static_cast<std::size_t>(shape.first_leaf_heap()) + leaf;
    while (h != 0) {
        code.set(h - 1);
        h = (h - 1) / 2;
    }
    return code;
}

}  // namespace

TEST_CASE("tree shape") {
    const TreeShape s(3);
    CHECK(s.node_count() == 6);
    CHECK(s.leaf_count() == 4);
    CHECK(s.internal_count() == 3);
    CHECK_THROWS_AS(TreeShape(1), ConfigError);
    CHECK_THROWS_AS(TreeShape(kMaxDepth + 1), ConfigError);
}

TEST_CASE("bit vector strings") {
    const auto v = BitVector::from_string("101000");
    CHECK(v.size() == 6);
    CHECK(v.test(0));
    CHECK_FALSE(v.test(1));
    CHECK(v.test(2));
    CHECK(v.popcount() == 2);
    CHECK(v.to_string() == "101000");
    CHECK_THROWS_AS(BitVector::from_string("10x"), ValidationError);
}

TEST_CASE("leaf_to_path examples") {
    CHECK(leaf_to_path(0, TreeShape(3)).to_string() == "101000");
    CHECK(leaf_to_path(3, TreeShape(3)).to_string() == "010001");
    CHECK(leaf_to_path(0, TreeShape(2)).to_string() == "10");
    CHECK(leaf_to_path(1, TreeShape(2)).to_string() == "01");
    CHECK_THROWS_AS(leaf_to_path(4, TreeShape(3)), RangeError);
}

TEST_CASE("path_to_leaf examples") {
    const TreeShape s(3);
    CHECK(path_to_leaf(BitVector::from_string("101000"), s) == 0);
    CHECK(path_to_leaf(BitVector::from_string("010001"), s) == 3);
    CHECK(path_to_leaf(BitVector::from_string("100100"), s) == 1);
}

TEST_CASE("path_to_leaf rejects malformed codes") {
    const TreeShape s(3);
    CHECK_THROWS_AS(path_to_leaf(BitVector::from_string("100000"), s), ValidationError);  // popcount 1
    CHECK_THROWS_AS(path_to_leaf(BitVector::from_string("111000"), s), ValidationError);  // popcount 3
    CHECK_THROWS_AS(path_to_leaf(BitVector::from_string("100001"), s), ValidationError);  // broken chain
    CHECK_THROWS_AS(path_to_leaf(BitVector::from_string("11"), s), ValidationError);      // wrong length
    CHECK_THROWS_AS(path_to_leaf(BitVector::from_string("11"), TreeShape(2)), ValidationError);
}

TEST_CASE("leaf/path bijection for depths 2..8") {
    for (int d = 2; d <= 8; ++d) {
        const TreeShape s(d);
        std::set<std::string> seen;
        for (std::uint32_t leaf = 0; leaf < static_cast<std::uint32_t>(s.leaf_count()); ++leaf) {
            const auto code = leaf_to_path(leaf, s);
            REQUIRE(code == reference_path(leaf, d));
            CHECK(code.popcount() == static_cast<std::size_t>(d - 1));
            CHECK(path_to_leaf(code, s) == leaf);
            seen.insert(code.to_string());
        }
        CHECK(seen.size() == static_cast<std::size_t>(s.leaf_count()));
    }
}

TEST_CASE("hamming examples") {
    const auto a = BitVector::from_string("101000");
    CHECK(hamming(a, a) == 0);
    CHECK(hamming(a, BitVector::from_string("100100")) == 2);
    CHECK(hamming(a, BitVector::from_string("010001")) == 4);
    CHECK_THROWS_AS(hamming(a, BitVector::from_string("10100")), ValidationError);
}

TEST_CASE("path codes of one shape are at even distance") {
    for (int d = 2; d <= 7; ++d) {
        const TreeShape s(d);
        for (std::uint32_t i = 0; i < static_cast<std::uint32_t>(s.leaf_count()); ++i)
            for (std::uint32_t j = 0; j < static_cast<std::uint32_t>(s.leaf_count()); ++j) {
                const int h = hamming(leaf_to_path(i, s), leaf_to_path(j, s));
                CHECK(h % 2 == 0);
                CHECK(h <= 2 * (d - 1));
                CHECK((h == 0) == (i == j));
            }
    }
}

TEST_CASE("concat_codes") {
    const TreeShape s(3);
    const std::vector<PathCode> blocks{leaf_to_path(0, s), leaf_to_path(1, s), leaf_to_path(3, s)};
    const std::vector<std::uint32_t> sel{2, 0};
    const auto c = concat_codes(blocks, sel);
    CHECK(c.size() == 12);
    CHECK(c.to_string() == "010001101000");

    const std::vector<PathCode> single{leaf_to_path(2, s)};
    const std::vector<std::uint32_t> zero{0};
    CHECK(concat_codes(single, zero) == single[0]);

    std::vector<PathCode> six;
    for (int i = 0; i < 6; ++i) six.push_back(leaf_to_path(static_cast<std::uint32_t>(i % 4), s));
    const std::vector<std::uint32_t> all{0, 1, 2, 3, 4, 5};
    CHECK(concat_codes(six, all).size() == 36);

    const std::vector<std::uint32_t> dup{0, 0};
    const std::vector<std::uint32_t> out_of_range{3};
    CHECK_THROWS_AS(concat_codes(blocks, dup), ValidationError);
    CHECK_THROWS_AS(concat_codes(blocks, out_of_range), ValidationError);
}

TEST_CASE("concat_blocks agrees with concat_codes row by row") {
    std::mt19937_64 rng(3);
    const TreeShape s(4);
    std::vector<CodeBlock> blocks;
    for (int b = 0; b < 5; ++b) {
        CodeBlock block{s, CodeMatrix(static_cast<std::size_t>(s.node_count()), 20)};
        for (std::size_t i = 0; i < 20; ++i) write_path(block.codes, i, static_cast<std::uint32_t>(rng() % 8), s);
        blocks.push_back(std::move(block));
    }
    const std::vector<std::uint32_t> sel{4, 1, 3};
    const auto m = concat_blocks(blocks, sel);
    REQUIRE(m.rows() == 20);
    REQUIRE(m.bits() == 42);
    for (std::size_t i = 0; i < 20; ++i) {
        std::vector<PathCode> row;
        for (const auto& b : blocks) row.push_back(b.code(i));
        CHECK(m.code(i) == concat_codes(row, sel));
        CHECK(path_to_leaf(blocks[1].codes.row(i), s) == path_to_leaf(blocks[1].code(i), s));
    }
}

TEST_CASE("bit packing round-trip for lengths 1..512") {
    std::mt19937_64 rng(11);
    for (std::size_t n = 1; n <= 512; ++n) {
        BitVector v(n);
        for (std::size_t p = 0; p < n; ++p) v.set(p, rng() & 1);
        const auto bytes = pack_bits(v);
        REQUIRE(bytes.size() == packed_size(n));
        CHECK(unpack_bits(bytes, n) == v);
    }
}

TEST_CASE("bit packing layout and padding") {
    const auto v = BitVector::from_string("1000000001");  // bits 0 and 9
    const auto bytes = pack_bits(v);
    REQUIRE(bytes.size() == 2);
    CHECK(bytes[0] == 0x01);
    CHECK(bytes[1] == 0x02);
    std::vector<std::uint8_t> bad{0x01, 0x80};
    CHECK_THROWS_AS(unpack_bits(bad, 10), ValidationError);
    CHECK_THROWS_AS(unpack_bits(bytes, 20), ValidationError);
}
