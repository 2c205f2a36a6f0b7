#pragma once

// Code geometry for complete binary trees: node indexing, root-to-leaf path
// codes, bit packing and Hamming distance.
//
// Bit p of a path code corresponds to heap index p+1 (root is heap 0 and has
// no bit; children of h are 2h+1 and 2h+2). A tree of depth d has 2^d-2
// non-root nodes and 2^(d-1) leaves, and every path code has d-1 bits set.

#include <bit>
#include <cstddef>
#include <cstdint>
#include <span>
#include <string>
#include <string_view>
#include <vector>

#include "foresthash/errors.hpp"

namespace foresthash {

inline constexpr int kMinDepth = 2;
inline constexpr int kMaxDepth = 16;

class TreeShape {
public:
    /// Throws ConfigError unless kMinDepth <= depth <= kMaxDepth.
    explicit TreeShape(int depth);

    int depth() const noexcept { return depth_; }
    /// Non-root nodes, i.e. bits per path code.
    int node_count() const noexcept { return (1 << depth_) - 2; }
    int leaf_count() const noexcept { return 1 << (depth_ - 1); }
    /// Nodes holding a split model (heap 0 .. internal_count()-1).
    int internal_count() const noexcept { return leaf_count() - 1; }
    int first_leaf_heap() const noexcept { return leaf_count() - 1; }

    friend bool operator==(const TreeShape&, const TreeShape&) = default;

private:
    int depth_;
};

/// Fixed-length bit vector stored in 64-bit words, bit p at word p/64, position p%64.
/// Bits past size() are always zero.
class BitVector {
public:
    BitVector() = default;
    explicit BitVector(std::size_t size) : size_(size), words_((size + 63) / 64, 0) {}

    /// Parses a string of '0'/'1', leftmost character is bit 0.
    static BitVector from_string(std::string_view bits);
    std::string to_string() const;

    std::size_t size() const noexcept { return size_; }
    bool test(std::size_t p) const noexcept { return (words_[p >> 6] >> (p & 63)) & 1u; }
    void set(std::size_t p, bool value = true) noexcept {
        const std::uint64_t mask = std::uint64_t{1} << (p & 63);
        if (value)
            words_[p >> 6] |= mask;
        else
            words_[p >> 6] &= ~mask;
    }
    std::size_t popcount() const noexcept;

    std::span<const std::uint64_t> words() const noexcept { return words_; }
    std::span<std::uint64_t> words() noexcept { return words_; }

    friend bool operator==(const BitVector&, const BitVector&) = default;

private:
    std::size_t size_ = 0;
    std::vector<std::uint64_t> words_;
};

/// One tree's code for one point: 2^d-2 bits, d-1 of them set along a root-to-leaf path.
using PathCode = BitVector;
/// Concatenation of k selected path codes; block boundaries at multiples of 2^d-2.
using HashCode = BitVector;

/// N codes of equal bit length, each row padded to whole 64-bit words.
class CodeMatrix {
public:
    CodeMatrix() = default;
    CodeMatrix(std::size_t bits_per_code, std::size_t rows)
        : bits_(bits_per_code), rows_(rows), stride_((bits_per_code + 63) / 64),
          words_(rows * stride_, 0) {}

    std::size_t bits() const noexcept { return bits_; }
    std::size_t rows() const noexcept { return rows_; }
    /// Words per row.
    std::size_t stride() const noexcept { return stride_; }

    std::span<const std::uint64_t> row(std::size_t i) const noexcept {
        return {words_.data() + i * stride_, stride_};
    }
    std::span<std::uint64_t> row(std::size_t i) noexcept {
        return {words_.data() + i * stride_, stride_};
    }
    bool test(std::size_t i, std::size_t p) const noexcept {
        return (words_[i * stride_ + (p >> 6)] >> (p & 63)) & 1u;
    }
    void set(std::size_t i, std::size_t p) noexcept {
        words_[i * stride_ + (p >> 6)] |= std::uint64_t{1} << (p & 63);
    }

    BitVector code(std::size_t i) const;
    /// Throws ValidationError if code.size() != bits().
    void set_code(std::size_t i, const BitVector& code);

    friend bool operator==(const CodeMatrix&, const CodeMatrix&) = default;

private:
    std::size_t bits_ = 0;
    std::size_t rows_ = 0;
    std::size_t stride_ = 0;
    std::vector<std::uint64_t> words_;
};

/// The codes one tree assigns to N points (one row per point).
struct CodeBlock {
    TreeShape shape;
    CodeMatrix codes;

    std::size_t size() const noexcept { return codes.rows(); }
    PathCode code(std::size_t i) const { return codes.code(i); }
};

/// Code whose set bits are the non-root ancestors of the given leaf (inclusive).
/// Throws RangeError when leaf >= shape.leaf_count().
PathCode leaf_to_path(std::uint32_t leaf, const TreeShape& shape);

/// Inverse of leaf_to_path. Throws ValidationError on wrong length, wrong
/// popcount or a set bit whose parent is not set.
std::uint32_t path_to_leaf(const PathCode& code, const TreeShape& shape);

/// Same as path_to_leaf but over a packed row.
std::uint32_t path_to_leaf(std::span<const std::uint64_t> row, const TreeShape& shape);

/// Writes leaf_to_path(leaf) into row i of codes (which must be zeroed).
void write_path(CodeMatrix& codes, std::size_t i, std::uint32_t leaf, const TreeShape& shape);

/// Number of differing bits. Throws ValidationError on length mismatch.
int hamming(const BitVector& a, const BitVector& b);

/// Hamming distance between two equal-length word spans (padding bits must agree).
inline int hamming(std::span<const std::uint64_t> a, std::span<const std::uint64_t> b) noexcept {
    int d = 0;
    for (std::size_t w = 0; w < a.size(); ++w) d += std::popcount(a[w] ^ b[w]);
    return d;
}

/// Concatenates block_codes[selection[0]] || block_codes[selection[1]] || ...
/// Throws ValidationError on mixed code lengths, empty input, duplicate or out-of-range indices.
HashCode concat_codes(std::span<const PathCode> block_codes, std::span<const std::uint32_t> selection);

/// Row-wise concat_codes over whole blocks: row i of the result is
/// blocks[selection[0]].code(i) || blocks[selection[1]].code(i) || ...
/// Throws ValidationError on mismatched shapes or row counts and on bad indices.
CodeMatrix concat_blocks(std::span<const CodeBlock> blocks, std::span<const std::uint32_t> selection);

/// Packs bits least-significant-first: bit p goes to byte p/8, bit p%8.
std::vector<std::uint8_t> pack_bits(const BitVector& bits);
void pack_bits(std::span<const std::uint64_t> words, std::size_t nbits, std::span<std::uint8_t> out);

/// Inverse of pack_bits. Throws ValidationError when bytes.size() != ceil(nbits/8)
/// or any padding bit is set.
BitVector unpack_bits(std::span<const std::uint8_t> bytes, std::size_t nbits);
void unpack_bits(std::span<const std::uint8_t> bytes, std::size_t nbits, std::span<std::uint64_t> out);

inline std::size_t packed_size(std::size_t nbits) noexcept { return (nbits + 7) / 8; }

}  // namespace foresthash
