#include "foresthash/hashcore.hpp"

#include <algorithm>

namespace foresthash {

TreeShape::TreeShape(int depth) : depth_(depth) {
    if (depth < kMinDepth || depth > kMaxDepth)
        throw ConfigError("tree depth must be in [" + std::to_string(kMinDepth) + ", " +
                          std::to_string(kMaxDepth) + "], got " + std::to_string(depth));
}

BitVector BitVector::from_string(std::string_view bits) {
    BitVector v(bits.size());
    for (std::size_t p = 0; p < bits.size(); ++p) {
        if (bits[p] == '1')
            v.set(p);
        else if (bits[p] != '0')
            throw ValidationError("bit string may only contain '0' and '1'");
    }
    return v;
}

std::string BitVector::to_string() const {
    std::string s(size_, '0');
    for (std::size_t p = 0; p < size_; ++p)
        if (test(p)) s[p] = '1';
    return s;
}

std::size_t BitVector::popcount() const noexcept {
    std::size_t n = 0;
    for (auto w : words_) n += static_cast<std::size_t>(std::popcount(w));
    return n;
}

BitVector CodeMatrix::code(std::size_t i) const {
    BitVector v(bits_);
    std::ranges::copy(row(i), v.words().begin());
    return v;
}

void CodeMatrix::set_code(std::size_t i, const BitVector& code) {
    if (code.size() != bits_)
        throw ValidationError("code length " + std::to_string(code.size()) +
                              " does not match matrix width " + std::to_string(bits_));
    std::ranges::copy(code.words(), row(i).begin());
}

PathCode leaf_to_path(std::uint32_t leaf, const TreeShape& shape) {
    if (leaf >= static_cast<std::uint32_t>(shape.leaf_count()))
        throw RangeError("leaf index " + std::to_string(leaf) + " out of range for depth " +
                         std::to_string(shape.depth()));
    PathCode code(static_cast<std::size_t>(shape.node_count()));
    for (std::uint32_t h = leaf + shape.first_leaf_heap(); h > 0; h = (h - 1) / 2)
        code.set(h - 1);
    return code;
}

void write_path(CodeMatrix& codes, std::size_t i, std::uint32_t leaf, const TreeShape& shape) {
    for (std::uint32_t h = leaf + shape.first_leaf_heap(); h > 0; h = (h - 1) / 2)
        codes.set(i, h - 1);
}

namespace {

template <typename TestBit>
std::uint32_t descend(TestBit&& test, const TreeShape& shape) {
    std::uint32_t h = 0;
    for (int level = 1; level < shape.depth(); ++level) {
        const bool left = test(2 * h);       // bit of heap 2h+1
        const bool right = test(2 * h + 1);  // bit of heap 2h+2
        if (left == right)
            throw ValidationError("path code does not follow a single root-to-leaf path at depth " +
                                  std::to_string(level));
        h = left ? 2 * h + 1 : 2 * h + 2;
    }
    return h - static_cast<std::uint32_t>(shape.first_leaf_heap());
}

std::size_t popcount(std::span<const std::uint64_t> words) {
    std::size_t n = 0;
    for (auto w : words) n += static_cast<std::size_t>(std::popcount(w));
    return n;
}

}  // namespace

std::uint32_t path_to_leaf(const PathCode& code, const TreeShape& shape) {
    if (code.size() != static_cast<std::size_t>(shape.node_count()))
        throw ValidationError("path code has " + std::to_string(code.size()) + " bits, expected " +
                              std::to_string(shape.node_count()));
    return path_to_leaf(code.words(), shape);
}

std::uint32_t path_to_leaf(std::span<const std::uint64_t> row, const TreeShape& shape) {
    const auto ones = popcount(row);
    if (ones != static_cast<std::size_t>(shape.depth() - 1))
        throw ValidationError("path code has " + std::to_string(ones) + " bits set, expected " +
                              std::to_string(shape.depth() - 1));
    return descend([&](std::size_t p) { return ((row[p >> 6] >> (p & 63)) & 1u) != 0; }, shape);
}

int hamming(const BitVector& a, const BitVector& b) {
    if (a.size() != b.size())
        throw ValidationError("hamming: length mismatch (" + std::to_string(a.size()) + " vs " +
                              std::to_string(b.size()) + ")");
    return hamming(a.words(), b.words());
}

HashCode concat_codes(std::span<const PathCode> block_codes, std::span<const std::uint32_t> selection) {
    if (block_codes.empty()) throw ValidationError("concat_codes: no blocks");
    const std::size_t width = block_codes.front().size();
    for (const auto& c : block_codes)
        if (c.size() != width) throw ValidationError("concat_codes: blocks have different lengths");

    std::vector<bool> seen(block_codes.size(), false);
    HashCode out(width * selection.size());
    std::size_t offset = 0;
    for (auto idx : selection) {
        if (idx >= block_codes.size())
            throw ValidationError("concat_codes: selection index " + std::to_string(idx) +
                                  " out of range");
        if (seen[idx])
            throw ValidationError("concat_codes: duplicate selection index " + std::to_string(idx));
        seen[idx] = true;
        const auto& c = block_codes[idx];
        for (std::size_t p = 0; p < width; ++p)
            if (c.test(p)) out.set(offset + p);
        offset += width;
    }
    return out;
}

CodeMatrix concat_blocks(std::span<const CodeBlock> blocks, std::span<const std::uint32_t> selection) {
    if (blocks.empty()) throw ValidationError("concat_blocks: no blocks");
    const auto& first = blocks.front();
    for (const auto& b : blocks)
        if (b.shape != first.shape || b.size() != first.size())
            throw ValidationError("concat_blocks: blocks differ in shape or row count");
    std::vector<bool> seen(blocks.size(), false);
    for (auto idx : selection) {
        if (idx >= blocks.size())
            throw ValidationError("concat_blocks: selection index " + std::to_string(idx) + " out of range");
        if (seen[idx]) throw ValidationError("concat_blocks: duplicate selection index " + std::to_string(idx));
        seen[idx] = true;
    }

    const auto width = static_cast<std::size_t>(first.shape.node_count());
    CodeMatrix out(width * selection.size(), first.size());
    for (std::size_t i = 0; i < out.rows(); ++i) {
        std::size_t offset = 0;
        for (auto idx : selection) {
            const auto& src = blocks[idx].codes;
            for (std::size_t p = 0; p < width; ++p)
                if (src.test(i, p)) out.set(i, offset + p);
            offset += width;
        }
    }
    return out;
}

void pack_bits(std::span<const std::uint64_t> words, std::size_t nbits, std::span<std::uint8_t> out) {
    for (std::size_t j = 0; j < packed_size(nbits); ++j)
        out[j] = static_cast<std::uint8_t>(words[j >> 3] >> (8 * (j & 7)));
}

std::vector<std::uint8_t> pack_bits(const BitVector& bits) {
    std::vector<std::uint8_t> out(packed_size(bits.size()));
    pack_bits(bits.words(), bits.size(), out);
    return out;
}

void unpack_bits(std::span<const std::uint8_t> bytes, std::size_t nbits, std::span<std::uint64_t> out) {
    if (bytes.size() != packed_size(nbits))
        throw ValidationError("unpack_bits: expected " + std::to_string(packed_size(nbits)) +
                              " bytes for " + std::to_string(nbits) + " bits, got " +
                              std::to_string(bytes.size()));
    if (nbits % 8 != 0 && (bytes.back() >> (nbits % 8)) != 0)
        throw ValidationError("unpack_bits: padding bits are not zero");
    std::ranges::fill(out, 0);
    for (std::size_t j = 0; j < bytes.size(); ++j)
        out[j >> 3] |= std::uint64_t{bytes[j]} << (8 * (j & 7));
}

BitVector unpack_bits(std::span<const std::uint8_t> bytes, std::size_t nbits) {
    BitVector v(nbits);
    unpack_bits(bytes, nbits, v.words());
    return v;
}

}  // namespace foresthash
