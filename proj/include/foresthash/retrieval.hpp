#pragma once

// Hamming-radius retrieval over packed hash codes, precision/recall
// evaluation, and encoding-time measurement.

#include <cstdint>
#include <span>
#include <vector>

#include "foresthash/hashcore.hpp"
#include "foresthash/selection.hpp"
#include "foresthash/training.hpp"

namespace foresthash {

struct RetrievalIndex {
    CodeMatrix codes;
    std::vector<std::int32_t> labels;  // aligned with codes rows

    /// Throws ValidationError when labels and codes are not aligned.
    void validate() const;
};

struct RetrievalMetrics {
    double precision = 0.0;  // percent, over queries that retrieved something
    double recall = 0.0;     // percent, over queries with at least one relevant item
    double mean_query_time_us = 0.0;
    std::size_t queries_rejected = 0;
    std::size_t num_queries = 0;
    int radius = 0;
};

/// Indices of all database codes within Hamming distance r of q, ascending.
/// Throws ValidationError on length mismatch or negative r.
std::vector<std::size_t> query_radius(const RetrievalIndex& index, const HashCode& q, int r);

/// Same, for a packed query row of index.codes.stride() words.
std::vector<std::size_t> query_radius(const RetrievalIndex& index, std::span<const std::uint64_t> q, int r);

/// Retrieved set per query is its radius-r neighborhood; relevant items share
/// the query label. Queries that retrieve nothing are counted as rejected and
/// left out of the precision mean. Per-query terms are reduced in query order.
/// Throws ValidationError on an empty query set or mismatched lengths.
RetrievalMetrics evaluate(const RetrievalIndex& index, const CodeMatrix& queries,
                          std::span<const std::int32_t> query_labels, int r, unsigned threads = 0);

/// Final hash codes: route every point through all trees, then concatenate the selected blocks.
CodeMatrix hash_dataset(const Forest& forest, const BlockSelection& selection, const Features& features,
                        unsigned threads = 0);
CodeMatrix hash_dataset(const ForestEncoder& encoder, const BlockSelection& selection, const Features& features,
                        unsigned threads = 0);

struct EncodeTiming {
    double mean_us = 0.0;    // per sample, averaged over repetitions
    double stddev_us = 0.0;  // across repetitions
    int repetitions = 0;
};

/// Wall-clock cost of hash_dataset per sample. Building the encoder from the
/// forest happens once, outside the timed repetitions.
/// Throws ValidationError on empty data or repetitions < 1.
EncodeTiming bench_encode(const Forest& forest, const BlockSelection& selection, const Features& features,
                          int repetitions, unsigned threads = 1);

}  // namespace foresthash
